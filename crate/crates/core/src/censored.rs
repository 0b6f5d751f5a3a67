//! Piecewise-constant intensity estimates from right-censored cell visits and
//! the lower-confidence planning field built on them.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{CellId, ObsGrid, PdeGrid, ScalarField};

/// Per-cell accumulators: expected captures `Gc`, time spent `Gt` and
/// number of entries `Gn`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    grid: ObsGrid,
    gc: Vec<f64>,
    gt: Vec<f64>,
    gn: Vec<u64>,
}

impl CellStats {
    /// All-zero statistics.
    pub fn zeros(grid: &ObsGrid) -> Self {
        CellStats {
            grid: *grid,
            gc: vec![0.0; grid.len()],
            gt: vec![0.0; grid.len()],
            gn: vec![0; grid.len()],
        }
    }

    pub fn grid(&self) -> &ObsGrid {
        &self.grid
    }

    pub fn captures(&self) -> &[f64] {
        &self.gc
    }

    pub fn times(&self) -> &[f64] {
        &self.gt
    }

    pub fn entries(&self) -> &[u64] {
        &self.gn
    }

    pub fn get(&self, cell: CellId) -> (f64, f64, u64) {
        let k = self.grid.flat(cell);
        (self.gc[k], self.gt[k], self.gn[k])
    }

    /// Adds one censored visit `(δ, R)`.
    pub fn record(&mut self, cell: CellId, captured: bool, time: f64) {
        let k = self.grid.flat(cell);
        if captured {
            self.gc[k] += 1.0;
        }
        self.gt[k] += time;
        self.gn[k] += 1;
    }

    /// CSV with rows `i,j,Gc,Gt,Gn,Ktilde,sigma2`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::from("i,j,Gc,Gt,Gn,Ktilde,sigma2\n");
        for k in 0..self.grid.len() {
            let id = self.grid.unflat(k);
            let (gc, gt) = (self.gc[k], self.gt[k]);
            let _ = writeln!(
                buf,
                "{},{},{},{},{},{},{}",
                id.i,
                id.j,
                gc,
                gt,
                self.gn[k],
                gc / gt,
                gc / (gt * gt)
            );
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }
}

/// Statistics seeded so that every cell starts at `Gc/Gt = k_min`.
pub fn init_stats(eps: f64, k_min: f64, grid: &ObsGrid) -> Result<CellStats> {
    if !(eps > 0.0 && k_min > 0.0) {
        return Err(Error::contract("init_stats needs eps > 0 and k_min > 0"));
    }
    let mut stats = CellStats::zeros(grid);
    stats.gc.fill(eps * k_min);
    stats.gt.fill(eps);
    Ok(stats)
}

/// Per-cell MLE of the intensity and its estimated variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcEstimate {
    pub k_tilde: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// `K̃ = Gc / Gt` and `σ̃² = Gc / Gt²` in every cell.
pub fn mle_estimates(stats: &CellStats) -> Result<PcEstimate> {
    if stats.gt.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::contract("every cell needs positive accumulated time"));
    }
    let k_tilde = stats.gc.iter().zip(&stats.gt).map(|(c, t)| c / t).collect();
    let sigma2 = stats.gc.iter().zip(&stats.gt).map(|(c, t)| c / (t * t)).collect();
    Ok(PcEstimate { k_tilde, sigma2 })
}

/// `sqrt(log(T |G| / γ))`, the width multiplier of the confidence bound.
pub fn confidence_multiplier(episodes: u64, cells: usize, gamma: f64) -> f64 {
    (episodes as f64 * cells as f64 / gamma).ln().sqrt()
}

/// `K̂ = max(K̃ - sqrt(log(T |G| / γ)) σ̃, k_min)` per cell.
pub fn lower_confidence_pc(
    est: &PcEstimate,
    episodes: u64,
    cells: usize,
    gamma: f64,
    k_min: f64,
) -> Result<Vec<f64>> {
    if episodes == 0 || cells == 0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::contract("need T >= 1, |G| >= 1 and 0 < gamma < 1"));
    }
    let c = confidence_multiplier(episodes, cells, gamma);
    Ok(est
        .k_tilde
        .iter()
        .zip(&est.sigma2)
        .map(|(k, s2)| (k - c * s2.sqrt()).max(k_min))
        .collect())
}

/// Piecewise-constant prolongation of per-cell values to PDE nodes. Nodes on
/// an interior cell edge take the mean of the adjacent cells.
pub fn prolong(cell_values: &[f64], obs: &ObsGrid, pde: &PdeGrid) -> Result<ScalarField> {
    if cell_values.len() != obs.len() {
        return Err(Error::contract("one value per observation cell required"));
    }
    if obs.domain() != pde.domain() {
        return Err(Error::contract("grids cover different domains"));
    }
    let n = pde.n();
    let touching: Vec<(usize, Option<usize>)> =
        (0..n).map(|k| obs.axis_cells_touching(pde.axis(k))).collect();
    let mut values = Vec::with_capacity(pde.len());
    for j in 0..n {
        let (ja, jb) = touching[j];
        for i in 0..n {
            let (ia, ib) = touching[i];
            let mut sum = 0.0;
            let mut count = 0.0;
            for ci in std::iter::once(ia).chain(ib) {
                for cj in std::iter::once(ja).chain(jb) {
                    sum += cell_values[obs.flat(CellId::new(ci, cj))];
                    count += 1.0;
                }
            }
            values.push(sum / count);
        }
    }
    ScalarField::from_values(*pde, values)
}
