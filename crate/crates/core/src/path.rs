//! Optimal-path extraction by descending the value function, and the split
//! of a trajectory into per-cell visits.

use std::fmt::Write as _;
use std::io::Write;

use crate::eikonal::Speed;
use crate::error::{Error, Result};
use crate::grid::{CellId, ObsGrid, Point, ScalarField};

/// Gradients smaller than this are treated as an exact tie.
const TIE_GRADIENT: f64 = 1e-12;
const TIE_NUDGE: f64 = 1e-9;
/// Number of probe directions used to detect and resolve shocks.
const RING: usize = 64;
/// The interpolated gradient is rejected when its magnitude falls below this
/// fraction of the steepest one-sided slope on the probe ring.
const SHOCK_RATIO: f64 = 0.9;
const STALL_RATIO: f64 = 0.5;

/// Polyline from the start point to the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    vertices: Vec<Point>,
    arc: Vec<f64>,
    time: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory; segment travel time is `length / f(midpoint)`.
    pub fn from_vertices(vertices: Vec<Point>, speed: &Speed) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::contract("trajectory needs at least one vertex"));
        }
        let mut arc = Vec::with_capacity(vertices.len());
        let mut time = Vec::with_capacity(vertices.len());
        arc.push(0.0);
        time.push(0.0);
        for w in vertices.windows(2) {
            let len = w[0].dist(w[1]);
            let f = speed.at(w[0].lerp(w[1], 0.5));
            arc.push(arc.last().unwrap() + len);
            time.push(time.last().unwrap() + len / f);
        }
        Ok(Trajectory { vertices, arc, time })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Cumulative arc length at each vertex.
    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc
    }

    /// Cumulative travel time at each vertex.
    pub fn times(&self) -> &[f64] {
        &self.time
    }

    pub fn start(&self) -> Point {
        self.vertices[0]
    }

    pub fn end(&self) -> Point {
        *self.vertices.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn total_time(&self) -> f64 {
        *self.time.last().unwrap()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    /// Travel time of segment `k` (between vertices `k` and `k+1`).
    pub fn segment_time(&self, k: usize) -> f64 {
        self.time[k + 1] - self.time[k]
    }

    /// Time at arc length `s`, linear within each segment.
    pub fn time_at(&self, s: f64) -> f64 {
        let k = self.segment_at(s);
        let len = self.arc[k + 1] - self.arc[k];
        if len <= 0.0 {
            return self.time[k];
        }
        let t = ((s - self.arc[k]) / len).clamp(0.0, 1.0);
        self.time[k] + t * (self.time[k + 1] - self.time[k])
    }

    /// Point at arc length `s`.
    pub fn point_at(&self, s: f64) -> Point {
        if self.vertices.len() == 1 {
            return self.vertices[0];
        }
        let k = self.segment_at(s);
        let len = self.arc[k + 1] - self.arc[k];
        let t = if len > 0.0 { ((s - self.arc[k]) / len).clamp(0.0, 1.0) } else { 0.0 };
        self.vertices[k].lerp(self.vertices[k + 1], t)
    }

    fn segment_at(&self, s: f64) -> usize {
        if self.vertices.len() < 2 {
            return 0;
        }
        let k = self.arc.partition_point(|&a| a <= s);
        k.saturating_sub(1).min(self.vertices.len() - 2)
    }

    /// CSV with rows `s,x,y`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::from("s,x,y\n");
        for (s, p) in self.arc.iter().zip(&self.vertices) {
            let _ = writeln!(buf, "{},{},{}", s, p.x, p.y);
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// A maximal stretch of a trajectory inside one observation cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellVisit {
    pub cell: CellId,
    pub entry_arc_length: f64,
    pub arc_length: f64,
    pub entry_time: f64,
    /// Time spent in the cell.
    pub duration: f64,
}

impl CellVisit {
    pub fn exit_arc_length(&self) -> f64 {
        self.entry_arc_length + self.arc_length
    }
}

/// Gradient of `u` at `p`: nodal central differences (one-sided on the
/// boundary), bilinearly interpolated.
fn gradient(u: &ScalarField, p: Point) -> Point {
    let (i, j, tx, ty) = u.locate(p);
    let corner = |a: usize, b: usize| nodal_gradient(u, a, b);
    let g00 = corner(i, j);
    let g10 = corner(i + 1, j);
    let g01 = corner(i, j + 1);
    let g11 = corner(i + 1, j + 1);
    (g00 * ((1.0 - tx) * (1.0 - ty)))
        + (g10 * (tx * (1.0 - ty)))
        + (g01 * ((1.0 - tx) * ty))
        + (g11 * (tx * ty))
}

#[inline]
fn nodal_gradient(u: &ScalarField, i: usize, j: usize) -> Point {
    let n = u.grid().n();
    let h = u.grid().spacing();
    let diff = |lo: f64, hi: f64, span: f64| (hi - lo) / span;
    let gx = match i {
        0 => diff(u.at(0, j), u.at(1, j), h),
        _ if i + 1 == n => diff(u.at(i - 1, j), u.at(i, j), h),
        _ => diff(u.at(i - 1, j), u.at(i + 1, j), 2.0 * h),
    };
    let gy = match j {
        0 => diff(u.at(i, 0), u.at(i, 1), h),
        _ if j + 1 == n => diff(u.at(i, j - 1), u.at(i, j), h),
        _ => diff(u.at(i, j - 1), u.at(i, j + 1), 2.0 * h),
    };
    Point::new(gx, gy)
}

/// Steepest one-sided descent over a ring of probe directions. Returns the
/// slope and unit direction; ties go to the lowest angle.
fn ring_descent(u: &ScalarField, p: Point, probe: f64) -> (f64, Point) {
    let domain = u.grid().domain();
    let here = u.interpolate_unchecked(p);
    let mut best = (f64::NEG_INFINITY, Point::new(1.0, 0.0));
    for k in 0..RING {
        let theta = std::f64::consts::TAU * k as f64 / RING as f64;
        let dir = Point::new(theta.cos(), theta.sin());
        let q = domain.clamp(p + dir * probe);
        let reach = q.dist(p);
        if reach <= 0.0 {
            continue;
        }
        let slope = (here - u.interpolate_unchecked(q)) / reach;
        if slope > best.0 {
            best = (slope, dir);
        }
    }
    best
}

fn descent_direction(u: &ScalarField, p: Point) -> Point {
    let mut g = gradient(u, p);
    if g.norm() < TIE_GRADIENT {
        g = gradient(u, p + Point::new(TIE_NUDGE, TIE_NUDGE));
    }
    let (slope, ring_dir) = ring_descent(u, p, u.grid().spacing());
    let gn = g.norm();
    if gn < SHOCK_RATIO * slope || gn < TIE_GRADIENT {
        ring_dir
    } else {
        g * (-1.0 / gn)
    }
}

/// One tracer step from `p`. The gradient step is kept when it descends at
/// least `STALL_RATIO` times as much as the best probe on a ring of radius
/// `h_path`; otherwise (zigzagging across a narrow valley of a blocky field)
/// the best probe wins. If no probe descends, the step heads for the lowest
/// nearby node, which always lies below `p` for a Fast Marching solution.
fn next_vertex(u: &ScalarField, p: Point, h_path: f64) -> Point {
    let domain = u.grid().domain();
    let here = u.interpolate_unchecked(p);
    let q = domain.clamp(p + descent_direction(u, p) * h_path);
    let gain = here - u.interpolate_unchecked(q);
    let (slope, ring_dir) = ring_descent(u, p, h_path);
    if slope > 0.0 {
        if gain >= STALL_RATIO * slope * q.dist(p) {
            return q;
        }
        return domain.clamp(p + ring_dir * h_path);
    }
    let g = u.grid();
    let (i, j, _, _) = u.locate(p);
    let mut best = (here, p);
    for nj in j.saturating_sub(1)..=(j + 2).min(g.n() - 1) {
        for ni in i.saturating_sub(1)..=(i + 2).min(g.n() - 1) {
            let v = u.at(ni, nj);
            if v < best.0 {
                best = (v, g.node(ni, nj));
            }
        }
    }
    let d = best.1.dist(p);
    if d == 0.0 {
        return q;
    }
    p.lerp(best.1, (h_path / d).min(1.0))
}

/// Follows `-∇u` from `x0` with fixed steps of `h_path` until within
/// `h_path` of the boundary, then appends the projection onto the boundary.
///
/// Where the interpolated gradient is much weaker than the steepest
/// available one-sided descent (a shock line, where several optimal paths
/// meet) the tracer takes the steepest probe direction instead.
pub fn trace_path(u: &ScalarField, speed: &Speed, x0: Point, h_path: f64) -> Result<Trajectory> {
    let domain = *u.grid().domain();
    domain.check(x0)?;
    if !(h_path > 0.0) {
        return Err(Error::contract("path step must be positive"));
    }
    let max_steps = (10.0 * domain.diameter() / h_path).ceil() as usize;
    let mut vertices = vec![x0];
    let mut p = x0;
    let mut steps = 0usize;
    while domain.distance_to_boundary(p) > h_path {
        if steps >= max_steps {
            return Err(Error::NonConvergence { steps });
        }
        p = next_vertex(u, p, h_path);
        vertices.push(p);
        steps += 1;
    }
    let exit = domain.project_to_boundary(p);
    if exit != p {
        vertices.push(exit);
    }
    Trajectory::from_vertices(vertices, speed)
}

/// Splits the trajectory at every observation-cell edge crossing. Each
/// visit's duration is its share of the parent segment's travel time, so
/// durations sum to the trajectory's total time.
pub fn segment_by_cells(t: &Trajectory, grid: &ObsGrid) -> Vec<CellVisit> {
    let lo = grid.domain().lower();
    let h = grid.cell_width();
    let cells = grid.cells_per_side();
    let mut visits: Vec<CellVisit> = Vec::new();
    let mut cuts: Vec<f64> = Vec::with_capacity(8);

    for (k, (a, b)) in t.segments().enumerate() {
        let seg_len = a.dist(b);
        let seg_time = t.segment_time(k);
        let s0 = t.arc_lengths()[k];
        let t0 = t.times()[k];
        if seg_len <= 0.0 {
            if let Some(last) = visits.last_mut() {
                last.duration += seg_time;
            }
            continue;
        }
        cuts.clear();
        cuts.push(0.0);
        for (from, to, origin) in [(a.x, b.x, lo.x), (a.y, b.y, lo.y)] {
            if from == to {
                continue;
            }
            let (ca, cb) = ((from - origin) / h, (to - origin) / h);
            let (mn, mx) = (ca.min(cb), ca.max(cb));
            let first = (mn.floor() as i64 + 1).max(1);
            let last = (mx.ceil() as i64 - 1).min(cells as i64 - 1);
            for line in first..=last {
                let lp = line as f64;
                if lp > mn && lp < mx {
                    cuts.push((lp - ca) / (cb - ca));
                }
            }
        }
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);

        for w in cuts.windows(2) {
            let width = w[1] - w[0];
            let duration = seg_time * width;
            if width <= 1e-12 {
                // Corner crossings: no cell gets a measurable share.
                if let Some(last) = visits.last_mut() {
                    last.duration += duration;
                    last.arc_length += seg_len * width;
                }
                continue;
            }
            let mid = a.lerp(b, 0.5 * (w[0] + w[1]));
            let mid = grid.domain().clamp(mid);
            let cell = CellId::new(grid.axis_cell(mid.x - lo.x), grid.axis_cell(mid.y - lo.y));
            match visits.last_mut() {
                Some(last) if last.cell == cell => {
                    last.duration += duration;
                    last.arc_length += seg_len * width;
                }
                _ => visits.push(CellVisit {
                    cell,
                    entry_arc_length: s0 + seg_len * w[0],
                    arc_length: seg_len * width,
                    entry_time: t0 + seg_time * w[0],
                    duration,
                }),
            }
        }
    }
    visits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eikonal::solve_eikonal;
    use crate::grid::PdeGrid;
    use proptest::prelude::*;

    fn distance_u() -> ScalarField {
        let grid = PdeGrid::unit(101).unwrap();
        solve_eikonal(&Speed::default(), &ScalarField::constant(grid, 1.0)).unwrap()
    }

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_vertices(pts.iter().map(|&(x, y)| Point::new(x, y)).collect(), &Speed::default())
            .unwrap()
    }

    #[test]
    fn straight_escape_down() {
        let u = distance_u();
        let hp = u.grid().spacing() / 2.0;
        let t = trace_path(&u, &Speed::default(), Point::new(0.5, 0.3), hp).unwrap();
        assert!((t.length() - 0.3).abs() <= 2.0 * hp, "length {}", t.length());
        let end = t.end();
        assert!((end.x - 0.5).abs() < 1e-9 && end.y == 0.0, "end {end:?}");
        for w in t.vertices().windows(2) {
            assert!(w[0].dist(w[1]) <= hp + 1e-12);
        }
    }

    #[test]
    fn center_tie_exits_at_nearest_side() {
        let u = distance_u();
        let hp = u.grid().spacing() / 2.0;
        let t = trace_path(&u, &Speed::default(), Point::new(0.5, 0.5), hp).unwrap();
        assert!((t.length() - 0.5).abs() <= 2.0 * hp, "length {}", t.length());
        let end = t.end();
        let nearest = [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0)]
            .iter()
            .map(|&(x, y)| end.dist(Point::new(x, y)))
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.02, "end {end:?}");
    }

    #[test]
    fn boundary_start_is_trivial() {
        let u = distance_u();
        let t = trace_path(&u, &Speed::default(), Point::new(0.0, 0.4), 0.005).unwrap();
        assert_eq!(t.vertices().len(), 1);
        assert_eq!(t.length(), 0.0);
        assert!(trace_path(&u, &Speed::default(), Point::new(1.2, 0.4), 0.005).is_err());
    }

    #[test]
    fn gaussian_path_step_refinement() {
        let grid = PdeGrid::unit(101).unwrap();
        let k = ScalarField::from_fn(grid, |p| {
            0.05 + 8.0 * (-((p.x - 0.45).powi(2) + (p.y - 0.35).powi(2)) / 0.03).exp()
        });
        let u = solve_eikonal(&Speed::default(), &k).unwrap();
        let hp = grid.spacing() / 2.0;
        let x0 = Point::new(0.55, 0.5);
        let coarse = trace_path(&u, &Speed::default(), x0, hp).unwrap();
        let fine = trace_path(&u, &Speed::default(), x0, hp / 10.0).unwrap();
        let j = |t: &Trajectory| crate::episode::cumulative_intensity(t, &k);
        assert!((coarse.length() / fine.length() - 1.0).abs() <= 0.02);
        assert!((j(&coarse) / j(&fine) - 1.0).abs() <= 0.02);
    }

    #[test]
    fn scale_invariance_of_traced_path() {
        let grid = PdeGrid::unit(101).unwrap();
        let hp = grid.spacing() / 2.0;
        let u1 = solve_eikonal(&Speed::default(), &ScalarField::constant(grid, 1.0)).unwrap();
        for c in [0.3, 2.0, 7.5] {
            let uc = solve_eikonal(&Speed::default(), &ScalarField::constant(grid, c)).unwrap();
            for x0 in [Point::new(0.5, 0.3), Point::new(0.37, 0.62), Point::new(0.8, 0.55)] {
                let a = trace_path(&u1, &Speed::default(), x0, hp).unwrap();
                let b = trace_path(&uc, &Speed::default(), x0, hp).unwrap();
                assert_eq!(a.vertices().len(), b.vertices().len());
                for (p, q) in a.vertices().iter().zip(b.vertices()) {
                    assert!(p.dist(*q) <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn horizontal_split_at_edge() {
        let g = ObsGrid::unit(20).unwrap();
        let v = segment_by_cells(&traj(&[(0.06, 0.025), (0.14, 0.025)]), &g);
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].cell, CellId::new(1, 0));
        assert_eq!(v[1].cell, CellId::new(2, 0));
        assert!((v[0].duration - 0.04).abs() < 1e-12);
        assert!((v[1].duration - 0.04).abs() < 1e-12);
        assert!((v[1].entry_arc_length - 0.04).abs() < 1e-12);
    }

    #[test]
    fn single_cell_segment() {
        let g = ObsGrid::unit(20).unwrap();
        let v = segment_by_cells(&traj(&[(0.51, 0.51), (0.52, 0.53), (0.54, 0.54)]), &g);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].cell, CellId::new(10, 10));
        let len = traj(&[(0.51, 0.51), (0.52, 0.53), (0.54, 0.54)]).length();
        assert!((v[0].duration - len).abs() < 1e-15);
    }

    #[test]
    fn corner_crossing_skips_side_cells() {
        let g = ObsGrid::unit(20).unwrap();
        let v = segment_by_cells(&traj(&[(0.01, 0.01), (0.09, 0.09)]), &g);
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].cell, CellId::new(0, 0));
        assert_eq!(v[1].cell, CellId::new(1, 1));
        let d = 2f64.sqrt() * 0.04;
        assert!((v[0].duration - d).abs() < 1e-12 && (v[1].duration - d).abs() < 1e-12);
    }

    #[test]
    fn reentry_is_a_new_visit() {
        let g = ObsGrid::unit(20).unwrap();
        let v = segment_by_cells(&traj(&[(0.02, 0.02), (0.07, 0.02), (0.02, 0.021)]), &g);
        let cells: Vec<_> = v.iter().map(|c| c.cell).collect();
        assert_eq!(cells, vec![CellId::new(0, 0), CellId::new(1, 0), CellId::new(0, 0)]);
    }

    #[test]
    fn slow_speed_stretches_durations() {
        let g = ObsGrid::unit(20).unwrap();
        let pts = vec![Point::new(0.06, 0.025), Point::new(0.14, 0.025)];
        let t = Trajectory::from_vertices(pts, &Speed::Uniform(0.5)).unwrap();
        let v = segment_by_cells(&t, &g);
        assert!((v[0].duration - 0.08).abs() < 1e-12);
        assert!((t.total_time() - 0.16).abs() < 1e-12);
    }

    /// Piecewise-constant cell field with a strong contrast, the kind of
    /// planning field the per-cell learner produces.
    fn blocky_field(grid: PdeGrid, cells: usize, values: &[f64]) -> ScalarField {
        let obs = ObsGrid::unit(cells).unwrap();
        crate::censored::prolong(values, &obs, &grid).unwrap()
    }

    #[test]
    fn escapes_through_narrow_low_channels() {
        // A one-cell-wide cheap corridor bending through expensive cells.
        let grid = PdeGrid::unit(101).unwrap();
        let n = 20;
        let mut vals = vec![8.0; n * n];
        for i in 5..=10 {
            vals[i + 10 * n] = 1e-3;
        }
        for j in 0..=10 {
            vals[5 + j * n] = 1e-3;
        }
        let u = solve_eikonal(&Speed::default(), &blocky_field(grid, n, &vals)).unwrap();
        let t = trace_path(&u, &Speed::default(), Point::new(0.525, 0.525), 0.005).unwrap();
        assert_eq!(t.end().y, 0.0);
        assert!(t.length() < 0.9, "{}", t.length());
    }

    proptest! {
        #[test]
        fn terminates_on_blocky_fields(
            vals in proptest::collection::vec(prop_oneof![Just(1e-3), 0.05..2.0f64, 5.0..30.0f64], 400),
            x in 0.02..0.98f64,
            y in 0.02..0.98f64,
        ) {
            let grid = PdeGrid::unit(101).unwrap();
            let u = solve_eikonal(&Speed::default(), &blocky_field(grid, 20, &vals)).unwrap();
            let t = trace_path(&u, &Speed::default(), Point::new(x, y), 0.005);
            prop_assert!(t.is_ok(), "{:?}", t.err());
            let t = t.unwrap();
            let d = grid.domain().distance_to_boundary(t.end());
            prop_assert!(d == 0.0);
        }

        #[test]
        fn durations_conserve_total_time(
            pts in proptest::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 2..40),
            cells in 1usize..30,
        ) {
            let g = ObsGrid::unit(cells).unwrap();
            let t = traj(&pts);
            let visits = segment_by_cells(&t, &g);
            let total: f64 = visits.iter().map(|v| v.duration).sum();
            prop_assert!((total - t.total_time()).abs() <= 1e-9 * t.total_time().max(1e-300));
            for w in visits.windows(2) {
                prop_assert!(w[0].cell != w[1].cell);
                prop_assert!(w[0].entry_arc_length <= w[1].entry_arc_length);
            }
            for v in &visits {
                prop_assert!(v.duration > 0.0);
                let mid = t.point_at(v.entry_arc_length + 0.5 * v.arc_length);
                prop_assert_eq!(g.cell_index(mid).unwrap(), v.cell);
            }
        }
    }
}
