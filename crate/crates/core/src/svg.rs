//! Plain SVG renderings of fields, paths and metric curves.

use std::fmt::Write as _;

use crate::grid::{Point, ScalarField};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 76.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 42.0;

pub const GP_COLOR: &str = "#1f4fd8";
pub const PC_COLOR: &str = "#1a9a3a";
pub const REFERENCE_COLOR: &str = "#d62020";
pub const CAPTURE_COLOR: &str = "#d61fd6";
pub const START_COLOR: &str = "#18d0e0";

// viridis at five stops
const STOPS: [(f64, [f64; 3]); 5] = [
    (0.0, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.5, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.0, [253.0, 231.0, 37.0]),
];

fn colormap(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let k = STOPS.iter().position(|(s, _)| *s >= t).unwrap_or(STOPS.len() - 1).max(1);
    let (s0, c0) = STOPS[k - 1];
    let (s1, c1) = STOPS[k];
    let w = (t - s0) / (s1 - s0);
    let c: Vec<u8> = (0..3).map(|i| (c0[i] + w * (c1[i] - c0[i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn plot_width() -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_height() -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * Self::plot_width()
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN_TOP + (1.0 - (y - self.y0) / (self.y1 - self.y0)) * Self::plot_height()
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, f: &Frame, x_ticks: &[f64], y_ticks: &[f64]) {
    let (l, r) = (f.px(f.x0), f.px(f.x1));
    let (b, t) = (f.py(f.y0), f.py(f.y1));
    let _ = writeln!(s, r#"<rect x="{l:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, r - l, b - t);
    for &x in x_ticks {
        let _ = writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{b:.2}" x2="{0:.2}" y2="{1:.2}" stroke="black"/><text x="{0:.2}" y="{2:.2}" text-anchor="middle">{3}</text>"#,
            f.px(x),
            b + 4.0,
            b + 16.0,
            tick_label(x)
        );
    }
    for &y in y_ticks {
        let _ = writeln!(
            s,
            r#"<line x1="{1:.2}" y1="{0:.2}" x2="{l:.2}" y2="{0:.2}" stroke="black"/><text x="{2:.2}" y="{3:.2}" text-anchor="end">{4}</text>"#,
            f.py(y),
            l - 4.0,
            l - 6.0,
            f.py(y) + 4.0,
            tick_label(y)
        );
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let m = [1.0, 2.0, 5.0, 10.0].into_iter().find(|m| m * mag >= raw).unwrap_or(10.0);
    let step = m * mag;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    // dividing by an integral 1/mag keeps decimal ticks exact
    let tick = |k: i64| if mag < 1.0 { k as f64 * m / (1.0 / mag).round() } else { k as f64 * step };
    (first..=last).map(tick).collect()
}

/// Extras drawn over a field panel.
#[derive(Debug, Clone, Default)]
pub struct Overlay<'a> {
    /// Field and number of contour levels.
    pub contours: Option<(&'a ScalarField, usize)>,
    pub dots: Vec<Point>,
    pub dot_color: Option<&'a str>,
    /// Polylines with their stroke colours.
    pub paths: Vec<(&'a [Point], &'a str)>,
    pub start: Option<Point>,
}

/// Heatmap of a field (or a blank frame when `field` is `None`) with
/// overlays.
pub fn field_panel(title: &str, field: Option<&ScalarField>, grid_of: &ScalarField, overlay: &Overlay<'_>) -> String {
    let dom = *grid_of.grid().domain();
    let f = Frame { x0: dom.lower().x, x1: dom.upper().x, y0: dom.lower().y, y1: dom.upper().y };
    let mut s = open(title);
    if let Some(field) = field {
        let g = field.grid();
        let n = g.n();
        let h = g.spacing();
        let (lo, hi) = (field.min(), field.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        for j in 0..n {
            for i in 0..n {
                let p = g.node(i, j);
                let x0 = (p.x - h / 2.0).max(f.x0);
                let x1 = (p.x + h / 2.0).min(f.x1);
                let y0 = (p.y - h / 2.0).max(f.y0);
                let y1 = (p.y + h / 2.0).min(f.y1);
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    f.px(x0),
                    f.py(y1),
                    f.px(x1) - f.px(x0) + 0.3,
                    f.py(y0) - f.py(y1) + 0.3,
                    colormap((field.at(i, j) - lo) / span)
                );
            }
        }
        colorbar(&mut s, lo, hi);
    }
    if let Some((u, levels)) = overlay.contours {
        let (lo, hi) = (u.min(), u.max());
        for k in 1..=levels {
            let level = lo + (hi - lo) * k as f64 / (levels + 1) as f64;
            let mut d = String::new();
            for (a, b) in contour_segments(u, level) {
                let _ = write!(d, "M{:.2} {:.2}L{:.2} {:.2}", f.px(a.x), f.py(a.y), f.px(b.x), f.py(b.y));
            }
            let stroke = if field.is_some() { "white" } else { "#333333" };
            let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="0.8"/>"#);
        }
    }
    let dot_color = overlay.dot_color.unwrap_or(CAPTURE_COLOR);
    for p in &overlay.dots {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.3" fill="{dot_color}"/>"#, f.px(p.x), f.py(p.y));
    }
    for (path, color) in &overlay.paths {
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#, polyline(&f, path));
    }
    if let Some(p) = overlay.start {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{START_COLOR}" stroke="black" stroke-width="0.6"/>"#,
            f.px(p.x),
            f.py(p.y)
        );
    }
    let ticks = nice_ticks(f.x0, f.x1, 5);
    let yticks = nice_ticks(f.y0, f.y1, 5);
    axes(&mut s, &f, &ticks, &yticks);
    s.push_str("</svg>\n");
    s
}

fn colorbar(s: &mut String, lo: f64, hi: f64) {
    let x = WIDTH - MARGIN_RIGHT + 12.0;
    let top = MARGIN_TOP;
    let height = Frame::plot_height();
    let steps = 64;
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let y = top + (1.0 - t) * height - height / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            height / steps as f64 + 0.5,
            colormap(t)
        );
    }
    let _ = writeln!(s, r#"<rect x="{x:.2}" y="{top:.2}" width="14" height="{height:.2}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 17.0, top + 8.0, tick_label(hi));
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 17.0, top + height, tick_label(lo));
}

fn polyline(f: &Frame, path: &[Point]) -> String {
    let mut out = String::with_capacity(path.len() * 14);
    for p in path {
        let _ = write!(out, "{:.2},{:.2} ", f.px(p.x), f.py(p.y));
    }
    out
}

/// Marching squares: line segments where the bilinear field crosses
/// `level`. Saddle cells are resolved with the cell-centre average.
pub fn contour_segments(u: &ScalarField, level: f64) -> Vec<(Point, Point)> {
    let g = u.grid();
    let n = g.n();
    let mut segs = Vec::new();
    let cross = |pa: Point, va: f64, pb: Point, vb: f64| pa.lerp(pb, (level - va) / (vb - va));
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let p = [g.node(i, j), g.node(i + 1, j), g.node(i + 1, j + 1), g.node(i, j + 1)];
            let v = [u.at(i, j), u.at(i + 1, j), u.at(i + 1, j + 1), u.at(i, j + 1)];
            let mut edges = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if (v[a] < level) != (v[b] < level) {
                    edges.push(cross(p[a], v[a], p[b], v[b]));
                }
            }
            match edges.len() {
                2 => segs.push((edges[0], edges[1])),
                4 => {
                    let centre = v.iter().sum::<f64>() / 4.0;
                    // edges are ordered bottom, right, top, left
                    if (centre < level) == (v[0] < level) {
                        segs.push((edges[0], edges[1]));
                        segs.push((edges[2], edges[3]));
                    } else {
                        segs.push((edges[3], edges[0]));
                        segs.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    segs
}

/// One curve of a line panel.
#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Curves against episode number with an optional labelled horizontal
/// reference line.
pub fn line_panel(title: &str, series: &[Series<'_>], reference: Option<(f64, &str)>) -> String {
    let len = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(1);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for &v in s.values.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if let Some((r, _)) = reference {
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    let f = Frame { x0: 1.0, x1: len.max(2) as f64, y0: (lo - pad).min(0.0f64.max(lo - pad)), y1: hi + pad };
    let mut s = open(title);
    // at most ~1500 vertices per curve
    let stride = len.div_ceil(1500).max(1);
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<Point> = ser
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i + 1 == ser.values.len())
            .map(|(i, &v)| Point::new((i + 1) as f64, v))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, polyline(&f, &pts), ser.color);
        legend(&mut s, k, ser.label, ser.color);
    }
    if let Some((r, label)) = reference {
        let y = f.py(r);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{REFERENCE_COLOR}" stroke-width="1.2"/>"#,
            f.px(f.x0),
            f.px(f.x1)
        );
        legend(&mut s, series.len(), label, REFERENCE_COLOR);
    }
    axes(&mut s, &f, &nice_ticks(f.x0, f.x1, 5), &nice_ticks(f.y0, f.y1, 5));
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">episode</text>"#,
        MARGIN_LEFT + Frame::plot_width() / 2.0,
        HEIGHT - 8.0
    );
    s.push_str("</svg>\n");
    s
}

fn legend(s: &mut String, k: usize, label: &str, color: &str) {
    let x = WIDTH - MARGIN_RIGHT + 8.0;
    let y = MARGIN_TOP + 10.0 + 16.0 * k as f64;
    let _ = writeln!(
        s,
        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
        x + 16.0,
        x + 20.0,
        y + 4.0,
        escape(label)
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PdeGrid;

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(0.0), "#440154");
        assert_eq!(colormap(1.0), "#fde725");
        assert_eq!(colormap(f64::NAN), "#440154");
    }

    #[test]
    fn contours_of_a_plane_are_straight() {
        let grid = PdeGrid::unit(11).unwrap();
        let u = ScalarField::from_fn(grid, |p| p.x);
        let segs = contour_segments(&u, 0.33);
        assert_eq!(segs.len(), 10);
        for (a, b) in segs {
            assert!((a.x - 0.33).abs() < 1e-12 && (b.x - 0.33).abs() < 1e-12);
        }
    }

    #[test]
    fn contours_of_distance_close_up() {
        let grid = PdeGrid::unit(41).unwrap();
        let u = ScalarField::from_fn(grid, |p| grid.domain().distance_to_boundary(p));
        let segs = contour_segments(&u, 0.2);
        assert!(!segs.is_empty());
        for (a, b) in segs {
            for p in [a, b] {
                assert!((grid.domain().distance_to_boundary(p) - 0.2).abs() < 0.03);
            }
        }
    }

    #[test]
    fn panels_are_well_formed() {
        let grid = PdeGrid::unit(11).unwrap();
        let u = ScalarField::from_fn(grid, |p| p.x * p.y);
        let path = [Point::new(0.5, 0.5), Point::new(0.5, 0.0)];
        let overlay = Overlay {
            contours: Some((&u, 5)),
            dots: vec![Point::new(0.2, 0.3)],
            paths: vec![(&path, "black")],
            start: Some(Point::new(0.5, 0.5)),
            ..Overlay::default()
        };
        let svg = field_panel("K & u", Some(&u), &u, &overlay);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("K &amp; u"));
        assert!(svg.contains(START_COLOR) && svg.contains(CAPTURE_COLOR));
        let r = [0.3, 0.2, 0.15];
        let line = line_panel(
            "excess risk",
            &[Series { label: "GP", color: GP_COLOR, values: &r }, Series { label: "PC", color: PC_COLOR, values: &r }],
            Some((0.1, "Q*")),
        );
        assert!(line.contains(GP_COLOR) && line.contains(PC_COLOR) && line.contains(REFERENCE_COLOR));
        assert_eq!(line.matches("<svg").count(), 1);
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 1.0, 5);
        assert_eq!(t.len(), 6);
        assert!((t[3] - 0.6).abs() < 1e-15 && t[5] == 1.0);
        assert_eq!(nice_ticks(1.0, 15000.0, 5), vec![5000.0, 10000.0, 15000.0]);
        assert_eq!(nice_ticks(-0.02, 0.3, 4), vec![0.0, 0.1, 0.2, 0.3]);
    }
}
