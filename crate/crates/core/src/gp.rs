//! Gaussian-process regression on `Z = log K` from per-cell censored
//! estimates.
//!
//! Observations are cell centres that pass the admission rules in
//! [`select_observable`]; each carries `Z̃ = log(Gc/Gt)` with variance
//! `1/Gc` (delta method). The squared-exponential kernel
//! `α exp(-|x-x'|²/β²)` is used throughout.
//!
//! [`posterior`] evaluates the posterior at arbitrary points through a
//! Cholesky factorization. [`GridPosterior`] produces the same mean and
//! variance on every PDE node at a fraction of the cost by exploiting that
//! the kernel factors over coordinates and that observation points sit on
//! the cell-centre lattice; the episode loop uses it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::censored::CellStats;
use crate::error::{Error, Result};
use crate::grid::{CellId, ObsGrid, PdeGrid, Point, ScalarField};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    /// Kernel amplitude (prior variance of `Z`).
    pub alpha: f64,
    /// Length scale.
    pub beta: f64,
    /// Constant prior mean of `Z`.
    pub mean: f64,
}

impl GpHyper {
    pub fn new(alpha: f64, beta: f64, mean: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() && mean.is_finite()) {
            return Err(Error::contract("GP hyperparameters need alpha > 0 and beta > 0"));
        }
        Ok(GpHyper { alpha, beta, mean })
    }
}

/// Squared-exponential covariance `α exp(-|x - x2|² / β²)`.
#[inline]
pub fn kernel(x: Point, x2: Point, hyper: &GpHyper) -> f64 {
    hyper.alpha * (-(x - x2).norm_sq() / (hyper.beta * hyper.beta)).exp()
}

/// Cells admitted to the regression.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GpObservations {
    pub cells: Vec<CellId>,
    pub points: Vec<Point>,
    /// `log(Gc / Gt)`.
    pub z: Vec<f64>,
    /// Observation variances `1 / Gc`.
    pub noise: Vec<f64>,
}

impl GpObservations {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Observations at arbitrary points, without cell identities.
    pub fn from_points(points: Vec<Point>, z: Vec<f64>, noise: Vec<f64>) -> Result<Self> {
        if points.len() != z.len() || z.len() != noise.len() {
            return Err(Error::contract("observation vectors differ in length"));
        }
        if noise.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("observations must be finite with nonnegative variance"));
        }
        Ok(GpObservations { cells: Vec::new(), points, z, noise })
    }
}

/// Admission rules: `Gc >= 1`, `Gn >= n_min`, `Gt >= t_min`.
pub fn select_observable(stats: &CellStats, n_min: u64, t_min: f64) -> GpObservations {
    let grid = stats.grid();
    let mut obs = GpObservations::default();
    for k in 0..grid.len() {
        let (gc, gt, gn) = (stats.captures()[k], stats.times()[k], stats.entries()[k]);
        if gc >= 1.0 && gn >= n_min && gt >= t_min {
            let id = grid.unflat(k);
            obs.cells.push(id);
            obs.points.push(grid.cell_center(id).expect("cell from grid"));
            obs.z.push((gc / gt).ln());
            obs.noise.push(1.0 / gc);
        }
    }
    obs
}

/// `Σ_ob + diag(noise)`, without jitter.
pub fn gram_matrix(obs: &GpObservations, hyper: &GpHyper) -> DMatrix<f64> {
    let n = obs.len();
    DMatrix::from_fn(n, n, |r, c| {
        let k = kernel(obs.points[r], obs.points[c], hyper);
        if r == c {
            k + obs.noise[r]
        } else {
            k
        }
    })
}

/// Cholesky factor of `gram + jitter I`, doubling the jitter from
/// `1e-10 α` up to `1e-6 α` until the factorization succeeds.
pub fn factorize(gram: &DMatrix<f64>, alpha: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = JITTER_START * alpha;
    loop {
        let mut m = gram.clone();
        for d in 0..m.nrows() {
            m[(d, d)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        if jitter >= JITTER_MAX * alpha {
            return Err(Error::IllConditioned { jitter });
        }
        jitter = (jitter * 2.0).min(JITTER_MAX * alpha);
    }
}

fn centered(obs: &GpObservations, hyper: &GpHyper) -> DVector<f64> {
    DVector::from_iterator(obs.len(), obs.z.iter().map(|z| z - hyper.mean))
}

/// Posterior mean `M` and variance `ρ` of `Z` at the query points.
pub fn posterior(
    obs: &GpObservations,
    hyper: &GpHyper,
    query: &[Point],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if obs.is_empty() {
        return Err(Error::contract("posterior needs at least one observation"));
    }
    let (chol, _) = factorize(&gram_matrix(obs, hyper), hyper.alpha)?;
    let weights = chol.solve(&centered(obs, hyper));
    let l = chol.l();
    let mut mean = Vec::with_capacity(query.len());
    let mut var = Vec::with_capacity(query.len());
    let mut kx = DVector::zeros(obs.len());
    for &x in query {
        for (slot, &p) in kx.iter_mut().zip(&obs.points) {
            *slot = kernel(x, p, hyper);
        }
        mean.push(hyper.mean + kx.dot(&weights));
        let v = l
            .solve_lower_triangular(&kx)
            .ok_or(Error::IllConditioned { jitter: f64::NAN })?;
        var.push((hyper.alpha - v.norm_squared()).max(0.0));
    }
    Ok((mean, var))
}

/// Log marginal likelihood of the centred observations.
pub fn log_marginal_likelihood(obs: &GpObservations, hyper: &GpHyper) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::contract("marginal likelihood needs observations"));
    }
    let (chol, _) = factorize(&gram_matrix(obs, hyper), hyper.alpha)?;
    Ok(lml_from_factor(&chol, &centered(obs, hyper)))
}

fn lml_from_factor(chol: &Cholesky<f64, Dyn>, zc: &DVector<f64>) -> f64 {
    let fit = zc.dot(&chol.solve(zc));
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    -0.5 * fit - 0.5 * log_det - 0.5 * zc.len() as f64 * LN_2PI
}

/// Search box for hyperparameter tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperBounds {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl HyperBounds {
    /// `α ∈ [1e-2, 1e4]`, `β ∈ [h_cell/2, diameter]`.
    pub fn for_grid(grid: &ObsGrid) -> Self {
        HyperBounds {
            alpha: (1e-2, 1e4),
            beta: (grid.cell_width() / 2.0, grid.domain().diameter()),
        }
    }
}

/// Maximizes the log marginal likelihood over `(α, β)` in log space with
/// the prior mean fixed: a coarse log grid followed by a shrinking pattern
/// search. Never returns a worse point than `current`. With a single
/// observation `β` has no effect and is left unchanged.
pub fn tune_hyperparameters(
    obs: &GpObservations,
    current: &GpHyper,
    bounds: &HyperBounds,
) -> Result<(GpHyper, f64)> {
    if obs.is_empty() {
        return Err(Error::contract("cannot tune hyperparameters without observations"));
    }
    let eval = |la: f64, lb: f64| -> f64 {
        let h = GpHyper { alpha: la.exp(), beta: lb.exp(), mean: current.mean };
        log_marginal_likelihood(obs, &h).unwrap_or(f64::NEG_INFINITY)
    };
    let (a_lo, a_hi) = (bounds.alpha.0.ln(), bounds.alpha.1.ln());
    let (b_lo, b_hi) = (bounds.beta.0.ln(), bounds.beta.1.ln());
    let tune_beta = obs.len() > 1;

    let start = (current.alpha.ln(), current.beta.ln());
    let mut best = (eval(start.0, start.1), start.0, start.1);
    let steps = 9;
    let lin = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (steps - 1) as f64;
    for ka in 0..steps {
        let la = lin(a_lo, a_hi, ka);
        let betas: Vec<f64> = if tune_beta {
            (0..steps).map(|kb| lin(b_lo, b_hi, kb)).collect()
        } else {
            vec![start.1]
        };
        for lb in betas {
            let v = eval(la, lb);
            if v > best.0 {
                best = (v, la, lb);
            }
        }
    }

    let mut step_a = (a_hi - a_lo) / (steps - 1) as f64 / 2.0;
    let mut step_b = (b_hi - b_lo) / (steps - 1) as f64 / 2.0;
    while step_a > 1e-3 || (tune_beta && step_b > 1e-3) {
        let mut moved = false;
        let mut moves = vec![(step_a, 0.0), (-step_a, 0.0)];
        if tune_beta {
            moves.extend([(0.0, step_b), (0.0, -step_b)]);
        }
        for (da, db) in moves {
            let la = (best.1 + da).clamp(a_lo, a_hi);
            let lb = if tune_beta { (best.2 + db).clamp(b_lo, b_hi) } else { best.2 };
            let v = eval(la, lb);
            if v > best.0 {
                best = (v, la, lb);
                moved = true;
            }
        }
        if !moved {
            step_a /= 2.0;
            step_b /= 2.0;
        }
    }

    if !best.0.is_finite() {
        return Err(Error::IllConditioned { jitter: JITTER_MAX * current.alpha });
    }
    let tuned = if best.1 == start.0 && best.2 == start.1 {
        *current
    } else {
        GpHyper { alpha: best.1.exp(), beta: best.2.exp(), mean: current.mean }
    };
    Ok((tuned, best.0))
}

/// Planning intensity `exp(M - sqrt(log(T |G| / γ)) ρ)`. With
/// `bonus_uses_sqrt` the bonus uses `sqrt(ρ)` instead of `ρ`.
pub fn lower_confidence_gp(
    mean: &ScalarField,
    rho: &ScalarField,
    episodes: u64,
    cells: usize,
    gamma: f64,
    bonus_uses_sqrt: bool,
) -> Result<ScalarField> {
    if episodes == 0 || cells == 0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::contract("need T >= 1, |G| >= 1 and 0 < gamma < 1"));
    }
    if mean.grid() != rho.grid() {
        return Err(Error::contract("mean and variance fields on different grids"));
    }
    let c = crate::censored::confidence_multiplier(episodes, cells, gamma);
    let values = mean
        .values()
        .iter()
        .zip(rho.values())
        .map(|(&m, &r)| {
            let spread = if bonus_uses_sqrt { r.max(0.0).sqrt() } else { r };
            (m - c * spread).exp()
        })
        .collect();
    ScalarField::from_values(*mean.grid(), values)
}

/// Posterior mean and variance of `Z` on every PDE node for observations
/// on the cell-centre lattice.
///
/// The kernel factors as `α e(x₁-c₁) e(x₂-c₂)`, so with one table of
/// one-dimensional factors a sum `Σ_q w_q Σ(x, x_q)` over all nodes costs
/// one pass per grid row instead of one `exp` per node and observation.
///
/// The precision matrix `Σ̃⁻¹` is kept explicitly. Between full Cholesky
/// refreshes it is updated in place: a changed observation variance is a
/// rank-one change (Sherman-Morrison) and a newly admitted cell borders the
/// matrix (Schur complement). Both updates also correct `ρ` directly, so a
/// typical episode costs `O(n²)` plus a few grid passes.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    obs_grid: ObsGrid,
    pde: PdeGrid,
    hyper: GpHyper,
    /// `table[a * cells + i] = exp(-(x_a - c_i)² / β²)`.
    table: Vec<f64>,
    state: Option<Incremental>,
    refresh_every: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Incremental {
    /// Admitted cells in order of admission.
    cells: Vec<CellId>,
    /// Position in `cells` for each flat cell index.
    slot: Vec<Option<usize>>,
    noise: Vec<f64>,
    jitter: f64,
    precision: DMatrix<f64>,
    updates: usize,
}

impl GridPosterior {
    /// Starts from `M = m` and `ρ = 0` everywhere.
    pub fn new(obs_grid: ObsGrid, pde: PdeGrid, hyper: GpHyper) -> Result<Self> {
        if obs_grid.domain() != pde.domain() {
            return Err(Error::contract("grids cover different domains"));
        }
        let mut gp = GridPosterior {
            obs_grid,
            pde,
            hyper,
            table: Vec::new(),
            state: None,
            refresh_every: 200,
            mean: vec![hyper.mean; pde.len()],
            var: vec![0.0; pde.len()],
        };
        gp.rebuild_table();
        Ok(gp)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    /// Number of low-rank updates between full refactorizations.
    pub fn with_refresh_every(mut self, updates: usize) -> Self {
        self.refresh_every = updates.max(1);
        self
    }

    /// Changes the hyperparameters; the next [`GridPosterior::update`]
    /// refactorizes.
    pub fn set_hyper(&mut self, hyper: GpHyper) {
        if hyper != self.hyper {
            self.hyper = hyper;
            self.state = None;
            self.rebuild_table();
        }
    }

    fn rebuild_table(&mut self) {
        let cells = self.obs_grid.cells_per_side();
        let h = self.obs_grid.cell_width();
        let b2 = self.hyper.beta * self.hyper.beta;
        let pde = self.pde;
        self.table = (0..pde.n())
            .flat_map(|a| {
                let x = pde.axis(a);
                (0..cells).map(move |i| {
                    let d = x - (i as f64 + 0.5) * h;
                    (-d * d / b2).exp()
                })
            })
            .collect();
    }

    pub fn mean_field(&self) -> ScalarField {
        ScalarField::from_values(self.pde, self.mean.clone()).expect("sized to grid")
    }

    pub fn variance_field(&self) -> ScalarField {
        let v = self.var.iter().map(|r| r.max(0.0)).collect();
        ScalarField::from_values(self.pde, v).expect("sized to grid")
    }

    /// Recomputes the posterior for a new observation set. Observations
    /// must carry their cell ids; cells once admitted are expected to stay
    /// admitted; a set that drops a cell triggers a full refresh.
    pub fn update(&mut self, obs: &GpObservations) -> Result<()> {
        if obs.cells.len() != obs.len() {
            return Err(Error::contract("grid posterior needs cell-indexed observations"));
        }
        if obs.is_empty() {
            self.state = None;
            self.mean.fill(self.hyper.mean);
            self.var.fill(self.hyper.alpha);
            return Ok(());
        }
        let incremental = match &self.state {
            Some(st) => st.cells.len() <= obs.len() && st.updates < self.refresh_every,
            None => false,
        };
        let mut ok = incremental;
        if ok {
            let flat: Vec<usize> = obs.cells.iter().map(|&c| self.obs_grid.flat(c)).collect();
            let known = flat
                .iter()
                .filter(|&&k| self.state.as_ref().unwrap().slot[k].is_some())
                .count();
            ok = known == self.state.as_ref().unwrap().cells.len();
            if ok {
                for (r, &k) in flat.iter().enumerate() {
                    let slot = self.state.as_ref().unwrap().slot[k];
                    let stable = match slot {
                        Some(p) => self.change_noise(p, obs.noise[r]),
                        None => self.admit(obs.cells[r], obs.noise[r]),
                    };
                    if !stable {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if !ok {
            self.refresh(obs)?;
        }
        self.refresh_mean(obs);
        Ok(())
    }

    fn refresh(&mut self, obs: &GpObservations) -> Result<()> {
        let (chol, jitter) = factorize(&gram_matrix(obs, &self.hyper), self.hyper.alpha)?;
        let mut slot = vec![None; self.obs_grid.len()];
        for (p, &c) in obs.cells.iter().enumerate() {
            slot[self.obs_grid.flat(c)] = Some(p);
        }
        self.state = Some(Incremental {
            cells: obs.cells.clone(),
            slot,
            noise: obs.noise.clone(),
            jitter,
            precision: chol.inverse(),
            updates: 0,
        });
        self.refresh_variance();
        Ok(())
    }

    /// `out[node] = α Σ_q w_q e_a(i_q) e_b(j_q)`.
    fn project(&self, cells: &[CellId], w: &[f64], out: &mut [f64]) {
        let per = self.obs_grid.cells_per_side();
        let n = self.pde.n();
        let alpha = self.hyper.alpha;
        let mut row = vec![0.0; per];
        for b in 0..n {
            row.fill(0.0);
            let eb = &self.table[b * per..(b + 1) * per];
            for (id, wq) in cells.iter().zip(w) {
                row[id.i] += eb[id.j] * wq;
            }
            for a in 0..n {
                let ea = &self.table[a * per..(a + 1) * per];
                let s: f64 = ea.iter().zip(&row).map(|(x, y)| x * y).sum();
                out[a + b * n] = alpha * s;
            }
        }
    }

    /// Rank-one update for a changed observation variance. Returns false
    /// when the update is numerically unsafe.
    fn change_noise(&mut self, p: usize, noise: f64) -> bool {
        let st = self.state.as_mut().expect("state");
        let delta = noise - st.noise[p];
        if delta == 0.0 {
            return true;
        }
        let col: Vec<f64> = st.precision.column(p).iter().copied().collect();
        let denom = 1.0 + delta * col[p];
        if !(denom > 1e-8) {
            return false;
        }
        let scale = delta / denom;
        let m = st.cells.len();
        for c in 0..m {
            let sc = scale * col[c];
            for r in 0..m {
                st.precision[(r, c)] -= sc * col[r];
            }
        }
        st.noise[p] = noise;
        st.updates += 1;
        let cells = st.cells.clone();
        let mut g = vec![0.0; self.pde.len()];
        self.project(&cells, &col, &mut g);
        for (v, gx) in self.var.iter_mut().zip(&g) {
            *v += scale * gx * gx;
        }
        true
    }

    /// Bordered update for a newly admitted cell.
    fn admit(&mut self, cell: CellId, noise: f64) -> bool {
        let hyper = self.hyper;
        let centre = self.obs_grid.cell_center(cell).expect("cell from grid");
        let st = self.state.as_mut().expect("state");
        let m = st.cells.len();
        let points: Vec<Point> = st
            .cells
            .iter()
            .map(|&c| self.obs_grid.cell_center(c).expect("cell from grid"))
            .collect();
        let k = DVector::from_iterator(m, points.iter().map(|&x| kernel(x, centre, &hyper)));
        let v = &st.precision * &k;
        let schur = hyper.alpha + noise + st.jitter - k.dot(&v);
        if !(schur > 1e-12 * hyper.alpha) {
            return false;
        }
        let mut grown = DMatrix::zeros(m + 1, m + 1);
        for c in 0..m {
            for r in 0..m {
                grown[(r, c)] = st.precision[(r, c)] + v[r] * v[c] / schur;
            }
            grown[(m, c)] = -v[c] / schur;
            grown[(c, m)] = -v[c] / schur;
        }
        grown[(m, m)] = 1.0 / schur;
        st.precision = grown;
        st.slot[self.obs_grid.flat(cell)] = Some(m);
        st.noise.push(noise);
        st.updates += 1;
        let old_cells = st.cells.clone();
        st.cells.push(cell);

        // ρ' = ρ - (Σ(x, c) - Σ(x, X) v)² / schur
        let mut g = vec![0.0; self.pde.len()];
        self.project(&old_cells, v.as_slice(), &mut g);
        let mut own = vec![0.0; self.pde.len()];
        self.project(&[cell], &[1.0], &mut own);
        for ((r, gx), ox) in self.var.iter_mut().zip(&g).zip(&own) {
            let d = ox - gx;
            *r -= d * d / schur;
        }
        true
    }

    fn refresh_mean(&mut self, obs: &GpObservations) {
        let st = self.state.as_ref().expect("state");
        let mut zc = DVector::zeros(st.cells.len());
        for (r, &c) in obs.cells.iter().enumerate() {
            let p = st.slot[self.obs_grid.flat(c)].expect("admitted");
            zc[p] = obs.z[r] - self.hyper.mean;
        }
        let w = &st.precision * zc;
        let cells = st.cells.clone();
        let mut out = std::mem::take(&mut self.mean);
        self.project(&cells, w.as_slice(), &mut out);
        for v in out.iter_mut() {
            *v += self.hyper.mean;
        }
        self.mean = out;
    }

    fn refresh_variance(&mut self) {
        let st = self.state.as_ref().expect("state");
        let precision = &st.precision;
        let cells = self.obs_grid.cells_per_side();
        let n = self.pde.n();
        let m = st.cells.len();
        let alpha = self.hyper.alpha;
        let mut folded = vec![0.0; cells * cells];
        let mut scaled = vec![0.0; m];
        let mut ea_c = vec![0.0; cells];
        for b in 0..n {
            let eb = &self.table[b * cells..(b + 1) * cells];
            for (p, id) in st.cells.iter().enumerate() {
                scaled[p] = eb[id.j];
            }
            // folded[i][i'] = Σ_{p,q: i_p = i, i_q = i'} e_b(j_p) A_pq e_b(j_q)
            folded.fill(0.0);
            for q in 0..m {
                let iq = st.cells[q].i;
                let sq = scaled[q];
                if sq == 0.0 {
                    continue;
                }
                let col = precision.column(q);
                for p in 0..m {
                    folded[st.cells[p].i * cells + iq] += scaled[p] * col[p] * sq;
                }
            }
            for a in 0..n {
                let ea = &self.table[a * cells..(a + 1) * cells];
                for (i, slot) in ea_c.iter_mut().enumerate() {
                    *slot = folded[i * cells..(i + 1) * cells]
                        .iter()
                        .zip(ea)
                        .map(|(f, e)| f * e)
                        .sum();
                }
                let quad: f64 = ea.iter().zip(&ea_c).map(|(x, y)| x * y).sum();
                self.var[a + b * n] = alpha - alpha * alpha * quad;
            }
        }
    }
}
