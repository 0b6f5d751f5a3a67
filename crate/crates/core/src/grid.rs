//! Domain geometry: the square domain, the vertex-centred PDE grid, the
//! area-based observation grid and scalar fields sampled on the PDE grid.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned rectangle `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    lower: Point,
    upper: Point,
}

impl Default for Domain {
    fn default() -> Self {
        Domain::unit()
    }
}

impl Domain {
    pub fn new(lower: Point, upper: Point) -> Result<Self> {
        let ok = lower.x.is_finite()
            && lower.y.is_finite()
            && upper.x.is_finite()
            && upper.y.is_finite()
            && upper.x > lower.x
            && upper.y > lower.y;
        if !ok {
            return Err(Error::contract("domain upper corner must exceed lower corner"));
        }
        Ok(Domain { lower, upper })
    }

    /// The unit square `[0,1]²`.
    pub fn unit() -> Self {
        Domain {
            lower: Point::new(0.0, 0.0),
            upper: Point::new(1.0, 1.0),
        }
    }

    pub fn lower(&self) -> Point {
        self.lower
    }

    pub fn upper(&self) -> Point {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper.x - self.lower.x
    }

    pub fn height(&self) -> f64 {
        self.upper.y - self.lower.y
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed-set membership.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.lower.x && p.x <= self.upper.x && p.y >= self.lower.y && p.y <= self.upper.y
    }

    pub fn check(&self, p: Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::DomainViolation { x: p.x, y: p.y })
        }
    }

    /// Euclidean distance from an interior point to the boundary.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        (p.x - self.lower.x)
            .min(self.upper.x - p.x)
            .min(p.y - self.lower.y)
            .min(self.upper.y - p.y)
    }

    /// Orthogonal projection of an interior point onto the nearest side.
    pub fn project_to_boundary(&self, p: Point) -> Point {
        let d = [
            p.x - self.lower.x,
            self.upper.x - p.x,
            p.y - self.lower.y,
            self.upper.y - p.y,
        ];
        let side = (0..4)
            .min_by(|&a, &b| d[a].total_cmp(&d[b]))
            .unwrap_or(0);
        match side {
            0 => Point::new(self.lower.x, p.y),
            1 => Point::new(self.upper.x, p.y),
            2 => Point::new(p.x, self.lower.y),
            _ => Point::new(p.x, self.upper.y),
        }
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.lower.x, self.upper.x),
            p.y.clamp(self.lower.y, self.upper.y),
        )
    }
}

/// Vertex-centred node grid used for the Eikonal solve. Node `(i, j)` sits at
/// `lower + (i h, j h)`, so the outermost nodes lie on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    domain: Domain,
    n: usize,
    h: f64,
}

impl PdeGrid {
    /// Requires a square domain and at least three nodes per side.
    pub fn new(domain: Domain, nodes_per_side: usize) -> Result<Self> {
        if nodes_per_side < 3 {
            return Err(Error::contract("PDE grid needs at least 3 nodes per side"));
        }
        if (domain.width() - domain.height()).abs() > 1e-12 * domain.width() {
            return Err(Error::contract("PDE grid requires a square domain"));
        }
        Ok(PdeGrid {
            domain,
            n: nodes_per_side,
            h: domain.width() / (nodes_per_side - 1) as f64,
        })
    }

    pub fn unit(nodes_per_side: usize) -> Result<Self> {
        PdeGrid::new(Domain::unit(), nodes_per_side)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + j * self.n
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        // Last node pinned to the upper corner so boundary nodes are exact.
        let lo = self.domain.lower();
        let up = self.domain.upper();
        let x = if i + 1 == self.n { up.x } else { lo.x + i as f64 * self.h };
        let y = if j + 1 == self.n { up.y } else { lo.y + j as f64 * self.h };
        Point::new(x, y)
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.n || j + 1 == self.n
    }

    /// Coordinate of node `k` along one axis, relative to the lower corner.
    pub fn axis(&self, k: usize) -> f64 {
        k as f64 * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub i: usize,
    pub j: usize,
}

impl CellId {
    pub const fn new(i: usize, j: usize) -> Self {
        CellId { i, j }
    }
}

/// Coarse partition of the domain into `cells × cells` equal squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsGrid {
    domain: Domain,
    cells: usize,
    h_cell: f64,
}

impl ObsGrid {
    pub fn new(domain: Domain, cells_per_side: usize) -> Result<Self> {
        if cells_per_side == 0 {
            return Err(Error::contract("observation grid needs at least one cell"));
        }
        if (domain.width() - domain.height()).abs() > 1e-12 * domain.width() {
            return Err(Error::contract("observation grid requires a square domain"));
        }
        Ok(ObsGrid {
            domain,
            cells: cells_per_side,
            h_cell: domain.width() / cells_per_side as f64,
        })
    }

    pub fn unit(cells_per_side: usize) -> Result<Self> {
        ObsGrid::new(Domain::unit(), cells_per_side)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn cell_width(&self) -> f64 {
        self.h_cell
    }

    /// Number of cells in the partition.
    pub fn len(&self) -> usize {
        self.cells * self.cells
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn flat(&self, id: CellId) -> usize {
        id.i + id.j * self.cells
    }

    #[inline]
    pub fn unflat(&self, k: usize) -> CellId {
        CellId::new(k % self.cells, k / self.cells)
    }

    pub fn ids(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.len()).map(|k| self.unflat(k))
    }

    /// Cell containing `p`. Points on an interior cell edge go to the
    /// higher-indexed cell; points on the upper boundary clamp to the last cell.
    pub fn cell_index(&self, p: Point) -> Result<CellId> {
        self.domain.check(p)?;
        let lo = self.domain.lower();
        Ok(CellId::new(
            self.axis_cell(p.x - lo.x),
            self.axis_cell(p.y - lo.y),
        ))
    }

    #[inline]
    pub(crate) fn axis_cell(&self, offset: f64) -> usize {
        let k = (offset / self.h_cell).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.cells - 1)
        }
    }

    pub fn cell_center(&self, id: CellId) -> Result<Point> {
        if id.i >= self.cells || id.j >= self.cells {
            return Err(Error::Index(format!(
                "cell ({}, {}) outside {}x{} grid",
                id.i, id.j, self.cells, self.cells
            )));
        }
        let lo = self.domain.lower();
        Ok(Point::new(
            lo.x + (id.i as f64 + 0.5) * self.h_cell,
            lo.y + (id.j as f64 + 0.5) * self.h_cell,
        ))
    }

    /// Cells whose closure contains the axis offset: one cell in the
    /// interior, two on an interior cell edge.
    pub(crate) fn axis_cells_touching(&self, offset: f64) -> (usize, Option<usize>) {
        let xi = offset / self.h_cell;
        let r = xi.round();
        if (xi - r).abs() < 1e-9 && r >= 1.0 && (r as usize) < self.cells {
            let k = r as usize;
            (k - 1, Some(k))
        } else {
            (self.axis_cell(offset), None)
        }
    }
}

/// Real values on every PDE-grid node, stored row-major (`i + j n`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: PdeGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: PdeGrid, value: f64) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: PdeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::contract(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: PdeGrid, mut f: impl FnMut(Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n() {
            for i in 0..grid.n() {
                values.push(f(grid.node(i, j)));
            }
        }
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &PdeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Bilinear interpolation; exact at nodes and for fields affine in each
    /// coordinate.
    pub fn interpolate(&self, p: Point) -> Result<f64> {
        self.grid.domain().check(p)?;
        Ok(self.interpolate_unchecked(p))
    }

    #[inline]
    pub(crate) fn locate(&self, p: Point) -> (usize, usize, f64, f64) {
        let lo = self.grid.domain().lower();
        let h = self.grid.spacing();
        let last = self.grid.n() - 2;
        let fx = ((p.x - lo.x) / h).max(0.0);
        let fy = ((p.y - lo.y) / h).max(0.0);
        let i = (fx.floor() as usize).min(last);
        let j = (fy.floor() as usize).min(last);
        (i, j, fx - i as f64, fy - j as f64)
    }

    /// Bilinear interpolation without the domain check; points outside are
    /// extrapolated from the nearest patch.
    #[inline]
    pub(crate) fn interpolate_unchecked(&self, p: Point) -> f64 {
        let (i, j, tx, ty) = self.locate(p);
        let n = self.grid.n();
        let k = i + j * n;
        let v00 = self.values[k];
        let v10 = self.values[k + 1];
        let v01 = self.values[k + n];
        let v11 = self.values[k + n + 1];
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(self.values.len() * 24);
        buf.push_str("i,j,value\n");
        let n = self.grid.n();
        for j in 0..n {
            for i in 0..n {
                let _ = writeln!(buf, "{},{},{}", i, j, self.values[i + j * n]);
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Reads the CSV layout produced by [`ScalarField::write_csv`].
    pub fn read_csv<R: BufRead>(grid: PdeGrid, input: R) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = 0usize;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "i,j,value" {
                    return Err(Error::Config {
                        line: 1,
                        message: format!("unexpected header {line:?}"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Config {
                line: lineno + 1,
                message,
            };
            let mut parts = line.split(',');
            let mut next = || parts.next().ok_or_else(|| bad("missing column".into()));
            let i: usize = next()?.trim().parse().map_err(|e| bad(format!("{e}")))?;
            let j: usize = next()?.trim().parse().map_err(|e| bad(format!("{e}")))?;
            let v: f64 = next()?.trim().parse().map_err(|e| bad(format!("{e}")))?;
            if i >= grid.n() || j >= grid.n() {
                return Err(bad(format!("node ({i}, {j}) outside grid")));
            }
            values[grid.index(i, j)] = v;
            seen += 1;
        }
        if seen != grid.len() {
            return Err(Error::contract(format!(
                "CSV holds {seen} nodes, expected {}",
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }
}
