//! Fast Marching solver for `|∇u| f = K` on the PDE grid with `u = 0` on the
//! whole boundary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::grid::{PdeGrid, Point, ScalarField};

/// Isotropic speed of the evader.
#[derive(Debug, Clone, PartialEq)]
pub enum Speed {
    Uniform(f64),
    Field(ScalarField),
}

impl Default for Speed {
    fn default() -> Self {
        Speed::Uniform(1.0)
    }
}

impl Speed {
    #[inline]
    pub fn at_node(&self, idx: usize) -> f64 {
        match self {
            Speed::Uniform(f) => *f,
            Speed::Field(field) => field.values()[idx],
        }
    }

    #[inline]
    pub fn at(&self, p: Point) -> f64 {
        match self {
            Speed::Uniform(f) => *f,
            Speed::Field(field) => field.interpolate_unchecked(p),
        }
    }

    fn validate(&self, grid: &PdeGrid) -> Result<()> {
        match self {
            Speed::Uniform(f) if f.is_finite() && *f > 0.0 => Ok(()),
            Speed::Uniform(f) => Err(Error::contract(format!("speed must be positive, got {f}"))),
            Speed::Field(field) => {
                if field.grid() != grid {
                    return Err(Error::contract("speed field lives on a different grid"));
                }
                if field.values().iter().all(|v| v.is_finite() && *v > 0.0) {
                    Ok(())
                } else {
                    Err(Error::contract("speed field must be positive everywhere"))
                }
            }
        }
    }
}

/// One first-order upwind update. `horizontal` and `vertical` hold the
/// accepted west/east and south/north neighbour values, when present.
pub fn upwind_update(
    horizontal: [Option<f64>; 2],
    vertical: [Option<f64>; 2],
    k: f64,
    f: f64,
    h: f64,
) -> Result<f64> {
    if !(k > 0.0 && f > 0.0 && h > 0.0) {
        return Err(Error::contract("upwind update needs k, f, h > 0"));
    }
    let min_of = |pair: [Option<f64>; 2]| match pair {
        [Some(a), Some(b)] => Some(a.min(b)),
        [Some(a), None] | [None, Some(a)] => Some(a),
        [None, None] => None,
    };
    match (min_of(horizontal), min_of(vertical)) {
        (None, None) => Err(Error::contract("upwind update needs an accepted neighbour")),
        (a, b) => Ok(upwind_value(a.unwrap_or(f64::INFINITY), b.unwrap_or(f64::INFINITY), k * h / f)),
    }
}

/// `a`, `b` are the smallest accepted neighbours per axis (infinite if none).
#[inline]
fn upwind_value(a: f64, b: f64, w: f64) -> f64 {
    if a.is_finite() && b.is_finite() {
        let diff = a - b;
        let disc = 2.0 * w * w - diff * diff;
        if disc >= 0.0 {
            let u = 0.5 * (a + b + disc.sqrt());
            if u >= a.max(b) {
                return u;
            }
        }
    }
    a.min(b) + w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Far,
    Considered,
    Accepted,
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    value: f64,
    idx: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Reversed so that BinaryHeap pops the smallest value, then smallest index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .value
            .total_cmp(&self.value)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Reusable FMM workspace. Holding one across episodes avoids reallocating
/// the label and heap buffers.
#[derive(Debug, Clone)]
pub struct EikonalSolver {
    grid: PdeGrid,
    labels: Vec<Label>,
    heap: BinaryHeap<HeapEntry>,
}

impl EikonalSolver {
    pub fn new(grid: PdeGrid) -> Self {
        EikonalSolver {
            grid,
            labels: vec![Label::Far; grid.len()],
            heap: BinaryHeap::with_capacity(4 * grid.n()),
        }
    }

    pub fn grid(&self) -> &PdeGrid {
        &self.grid
    }

    pub fn solve(&mut self, speed: &Speed, cost: &ScalarField) -> Result<ScalarField> {
        self.run(speed, cost, None)
    }

    /// Solves and also returns node indices in acceptance order.
    pub fn solve_traced(
        &mut self,
        speed: &Speed,
        cost: &ScalarField,
    ) -> Result<(ScalarField, Vec<usize>)> {
        let mut order = Vec::with_capacity(self.grid.len());
        let u = self.run(speed, cost, Some(&mut order))?;
        Ok((u, order))
    }

    fn run(
        &mut self,
        speed: &Speed,
        cost: &ScalarField,
        mut order: Option<&mut Vec<usize>>,
    ) -> Result<ScalarField> {
        let grid = self.grid;
        if cost.grid() != &grid {
            return Err(Error::contract("cost field lives on a different grid"));
        }
        speed.validate(&grid)?;
        if !cost.values().iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::contract("planning intensity must be positive everywhere"));
        }

        let n = grid.n();
        let h = grid.spacing();
        let k = cost.values();
        let mut u = vec![f64::INFINITY; grid.len()];
        self.labels.fill(Label::Far);
        self.heap.clear();

        for j in 0..n {
            for i in 0..n {
                if grid.is_boundary(i, j) {
                    let idx = grid.index(i, j);
                    u[idx] = 0.0;
                    self.labels[idx] = Label::Accepted;
                    if let Some(o) = order.as_deref_mut() {
                        o.push(idx);
                    }
                }
            }
        }
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                if i == 1 || j == 1 || i == n - 2 || j == n - 2 {
                    let idx = grid.index(i, j);
                    self.relax(idx, &mut u, k, speed, h);
                }
            }
        }

        while let Some(HeapEntry { value, idx }) = self.heap.pop() {
            if self.labels[idx] == Label::Accepted || value != u[idx] {
                continue;
            }
            self.labels[idx] = Label::Accepted;
            if let Some(o) = order.as_deref_mut() {
                o.push(idx);
            }
            let (i, j) = grid.coords(idx);
            // Boundary neighbours are already accepted, so no bounds checks
            // are needed beyond the interior test.
            for nb in [idx - 1, idx + 1, idx - n, idx + n] {
                let (ni, nj) = grid.coords(nb);
                debug_assert!(ni.abs_diff(i) + nj.abs_diff(j) == 1);
                if self.labels[nb] != Label::Accepted {
                    self.relax(nb, &mut u, k, speed, h);
                }
            }
        }

        ScalarField::from_values(grid, u)
    }

    /// Recomputes the tentative value of interior node `idx` from its accepted
    /// neighbours and queues it if it improved.
    #[inline]
    fn relax(&mut self, idx: usize, u: &mut [f64], k: &[f64], speed: &Speed, h: f64) {
        let n = self.grid.n();
        let acc = |m: usize| {
            if self.labels[m] == Label::Accepted {
                u[m]
            } else {
                f64::INFINITY
            }
        };
        let a = acc(idx - 1).min(acc(idx + 1));
        let b = acc(idx - n).min(acc(idx + n));
        if !a.is_finite() && !b.is_finite() {
            return;
        }
        let cand = upwind_value(a, b, k[idx] * h / speed.at_node(idx));
        if cand < u[idx] {
            u[idx] = cand;
            self.labels[idx] = Label::Considered;
            self.heap.push(HeapEntry { value: cand, idx });
        }
    }
}

/// Convenience wrapper around a one-off [`EikonalSolver`].
pub fn solve_eikonal(speed: &Speed, cost: &ScalarField) -> Result<ScalarField> {
    EikonalSolver::new(*cost.grid()).solve(speed, cost)
}
