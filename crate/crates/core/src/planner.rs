//! The episodic learning loop and its regret metrics.
//!
//! Each episode plans on the learner's current lower-confidence intensity,
//! runs the plan against the true intensity and feeds the censored cell
//! observations back. [`PcLearner`] keeps independent per-cell estimates;
//! [`GpLearner`] regresses `log K` with a Gaussian process.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::censored::{init_stats, lower_confidence_pc, mle_estimates, prolong, CellStats};
use crate::eikonal::{EikonalSolver, Speed};
use crate::episode::{cumulative_intensity, simulate_episode, update_stats, EpisodeOutcome, RngStream};
use crate::error::{Error, Result};
use crate::gp::{
    lower_confidence_gp, select_observable, tune_hyperparameters, GpHyper, GpObservations,
    GridPosterior, HyperBounds,
};
use crate::grid::{ObsGrid, Point, ScalarField};
use crate::path::{trace_path, Trajectory};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Pc,
    Gp,
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Pc => "pc",
            Algorithm::Gp => "gp",
        }
    }

    /// RNG stream used for this algorithm under a shared seed, so a
    /// combined run reproduces the two single runs exactly.
    pub fn stream(self) -> u64 {
        match self {
            Algorithm::Pc => 1,
            Algorithm::Gp => 2,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc" => Ok(Algorithm::Pc),
            "gp" => Ok(Algorithm::Gp),
            other => Err(Error::contract(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// True capture probability of the planned path.
    pub q: f64,
    pub captured: bool,
    /// True cumulative intensity of the planned path.
    pub j: f64,
    pub capture_point: Option<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub episodes: u64,
    pub records: Vec<EpisodeRecord>,
}

impl EpisodeLog {
    pub fn new(algorithm: Algorithm, seed: u64, episodes: u64) -> Self {
        EpisodeLog { algorithm, seed, episodes, records: Vec::with_capacity(episodes as usize) }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capture_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.records.iter().filter_map(|r| r.capture_point)
    }

    /// `episode,captured,J,Q_i,capture_x,capture_y`; capture columns are
    /// empty for escapes.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "episode,captured,J,Q_i,capture_x,capture_y")?;
        for r in &self.records {
            let (cx, cy) = match r.capture_point {
                Some(p) => (p.x.to_string(), p.y.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(out, "{},{},{},{},{},{}", r.episode, u8::from(r.captured), r.j, r.q, cx, cy)?;
        }
        Ok(())
    }
}

/// Running averages of excess risk and capture rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub excess_risk: Vec<f64>,
    pub capture_rate: Vec<f64>,
    pub q_star: f64,
}

impl MetricSeries {
    pub fn final_excess_risk(&self) -> f64 {
        *self.excess_risk.last().expect("nonempty series")
    }

    pub fn final_capture_rate(&self) -> f64 {
        *self.capture_rate.last().expect("nonempty series")
    }

    /// `episode,R_j,S_j,Q_i,Delta_i`.
    pub fn write_csv<W: Write>(&self, log: &EpisodeLog, mut out: W) -> Result<()> {
        writeln!(out, "episode,R_j,S_j,Q_i,Delta_i")?;
        for (k, r) in log.records.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.episode,
                self.excess_risk[k],
                self.capture_rate[k],
                r.q,
                u8::from(r.captured)
            )?;
        }
        Ok(())
    }
}

/// `1 - exp(-u(x0))` with `u` solved on the true intensity.
pub fn optimal_capture_prob(true_k: &ScalarField, speed: &Speed, x0: Point) -> Result<f64> {
    let u = EikonalSolver::new(*true_k.grid()).solve(speed, true_k)?;
    Ok(-(-u.interpolate(x0)?).exp_m1())
}

pub fn compute_metrics(log: &EpisodeLog, q_star: f64) -> Result<MetricSeries> {
    if log.is_empty() {
        return Err(Error::contract("metrics need at least one episode"));
    }
    let mut excess_risk = Vec::with_capacity(log.len());
    let mut capture_rate = Vec::with_capacity(log.len());
    let (mut risk, mut caught) = (0.0, 0.0);
    for (k, r) in log.records.iter().enumerate() {
        risk += r.q - q_star;
        caught += f64::from(u8::from(r.captured));
        let j = (k + 1) as f64;
        excess_risk.push(risk / j);
        capture_rate.push(caught / j);
    }
    Ok(MetricSeries { excess_risk, capture_rate, q_star })
}

/// A learner supplies planning fields and absorbs episode outcomes.
pub trait Learner {
    fn algorithm(&self) -> Algorithm;

    /// Lower-confidence intensity for the next plan.
    fn planning_field(&self) -> Result<ScalarField>;

    /// Absorbs the outcome of episode `t` (1-based).
    fn learn(&mut self, t: u64, outcome: &EpisodeOutcome) -> Result<()>;

    fn stats(&self) -> &CellStats;

    /// Point estimate of `K` on the PDE grid, without a confidence bonus.
    fn estimate(&self) -> Result<ScalarField>;

    /// Uncertainty field matching [`Learner::estimate`].
    fn uncertainty(&self) -> Result<ScalarField>;
}

/// Per-cell censored MLE with a lower confidence bound.
#[derive(Debug, Clone)]
pub struct PcLearner {
    stats: CellStats,
    scenario_cells: ObsGrid,
    pde: crate::grid::PdeGrid,
    episodes: u64,
    gamma: f64,
    k_min: f64,
}

impl PcLearner {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let a = scenario.algorithm();
        Ok(PcLearner {
            stats: init_stats(a.epsilon, a.k_min, &scenario.obs_grid)?,
            scenario_cells: scenario.obs_grid,
            pde: scenario.pde_grid,
            episodes: scenario.episodes().max(1),
            gamma: a.gamma,
            k_min: a.k_min,
        })
    }
}

impl Learner for PcLearner {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Pc
    }

    fn planning_field(&self) -> Result<ScalarField> {
        let est = mle_estimates(&self.stats)?;
        let cells = lower_confidence_pc(&est, self.episodes, self.scenario_cells.len(), self.gamma, self.k_min)?;
        prolong(&cells, &self.scenario_cells, &self.pde)
    }

    fn learn(&mut self, _t: u64, outcome: &EpisodeOutcome) -> Result<()> {
        update_stats(&mut self.stats, outcome);
        Ok(())
    }

    fn stats(&self) -> &CellStats {
        &self.stats
    }

    fn estimate(&self) -> Result<ScalarField> {
        prolong(&mle_estimates(&self.stats)?.k_tilde, &self.scenario_cells, &self.pde)
    }

    fn uncertainty(&self) -> Result<ScalarField> {
        prolong(&mle_estimates(&self.stats)?.sigma2, &self.scenario_cells, &self.pde)
    }
}

/// One hyperparameter re-tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperRecord {
    pub episode: u64,
    pub hyper: GpHyper,
    pub lml: f64,
}

/// Gaussian-process regression of `log K` with a lower confidence bound.
#[derive(Debug, Clone)]
pub struct GpLearner {
    stats: CellStats,
    posterior: GridPosterior,
    bounds: HyperBounds,
    observations: GpObservations,
    tuning: Vec<HyperRecord>,
    episodes: u64,
    gamma: f64,
    n_min: u64,
    t_min: f64,
    tune_every: u64,
    bonus_uses_sqrt: bool,
}

impl GpLearner {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let a = scenario.algorithm();
        let hyper = GpHyper::new(a.alpha, a.beta, a.prior_mean)?;
        Ok(GpLearner {
            stats: CellStats::zeros(&scenario.obs_grid),
            posterior: GridPosterior::new(scenario.obs_grid, scenario.pde_grid, hyper)?,
            bounds: HyperBounds::for_grid(&scenario.obs_grid),
            observations: GpObservations::default(),
            tuning: Vec::new(),
            episodes: scenario.episodes().max(1),
            gamma: a.gamma,
            n_min: a.n_min,
            t_min: scenario.t_min(),
            tune_every: a.tune_every,
            bonus_uses_sqrt: a.bonus_uses_sqrt,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        self.posterior.hyper()
    }

    pub fn tuning_log(&self) -> &[HyperRecord] {
        &self.tuning
    }

    pub fn observations(&self) -> &GpObservations {
        &self.observations
    }

    /// Posterior mean `M` of `log K` on the PDE grid.
    pub fn mean(&self) -> ScalarField {
        self.posterior.mean_field()
    }

    /// Posterior variance `ρ` of `log K` on the PDE grid.
    pub fn variance(&self) -> ScalarField {
        self.posterior.variance_field()
    }

    /// `i,j,M,rho` on every PDE node.
    pub fn write_posterior_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let m = self.mean();
        let r = self.variance();
        let n = m.grid().n();
        writeln!(out, "i,j,M,rho")?;
        for j in 0..n {
            for i in 0..n {
                writeln!(out, "{i},{j},{},{}", m.at(i, j), r.at(i, j))?;
            }
        }
        Ok(())
    }

    /// `episode,alpha,beta,lml`.
    pub fn write_tuning_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "episode,alpha,beta,lml")?;
        for h in &self.tuning {
            writeln!(out, "{},{},{},{}", h.episode, h.hyper.alpha, h.hyper.beta, h.lml)?;
        }
        Ok(())
    }
}

impl Learner for GpLearner {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Gp
    }

    fn planning_field(&self) -> Result<ScalarField> {
        lower_confidence_gp(
            &self.posterior.mean_field(),
            &self.posterior.variance_field(),
            self.episodes,
            self.stats.grid().len(),
            self.gamma,
            self.bonus_uses_sqrt,
        )
    }

    fn learn(&mut self, t: u64, outcome: &EpisodeOutcome) -> Result<()> {
        update_stats(&mut self.stats, outcome);
        self.observations = select_observable(&self.stats, self.n_min, self.t_min);
        if self.observations.is_empty() {
            return Ok(());
        }
        self.posterior.update(&self.observations)?;
        if self.tune_every > 0 && t > self.tune_every && t % self.tune_every == 1 {
            let (hyper, lml) = tune_hyperparameters(&self.observations, self.posterior.hyper(), &self.bounds)?;
            self.tuning.push(HyperRecord { episode: t, hyper, lml });
            self.posterior.set_hyper(hyper);
            self.posterior.update(&self.observations)?;
        }
        Ok(())
    }

    fn stats(&self) -> &CellStats {
        &self.stats
    }

    fn estimate(&self) -> Result<ScalarField> {
        Ok(self.posterior.mean_field().map(f64::exp))
    }

    fn uncertainty(&self) -> Result<ScalarField> {
        Ok(self.posterior.variance_field())
    }
}

/// Drives a learner through the episodes of a scenario. Records are
/// appended as episodes finish, so the log is usable after a failure.
pub struct Planner<'s, L> {
    scenario: &'s Scenario,
    learner: L,
    solver: EikonalSolver,
    log: EpisodeLog,
    last_path: Option<Trajectory>,
}

impl<'s, L: Learner> Planner<'s, L> {
    pub fn new(scenario: &'s Scenario, learner: L, seed: u64) -> Self {
        Planner {
            log: EpisodeLog::new(learner.algorithm(), seed, scenario.episodes()),
            solver: EikonalSolver::new(scenario.pde_grid),
            scenario,
            learner,
            last_path: None,
        }
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }

    /// Trajectory planned in the most recent episode.
    pub fn last_path(&self) -> Option<&Trajectory> {
        self.last_path.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.log.len() as u64 >= self.scenario.episodes()
    }

    /// Plans from `x0` on an arbitrary intensity field.
    pub fn plan_on(&mut self, k: &ScalarField) -> Result<Trajectory> {
        let sc = self.scenario;
        let u = self.solver.solve(&sc.speed, k)?;
        trace_path(&u, &sc.speed, sc.x0, sc.h_path())
    }

    /// Runs one episode.
    pub fn step(&mut self, rng: &mut RngStream) -> Result<EpisodeRecord> {
        let t = self.log.len() as u64 + 1;
        let plan = self.learner.planning_field()?;
        let path = self.plan_on(&plan)?;
        let sc = self.scenario;
        let outcome = simulate_episode(&path, &sc.true_k, &sc.obs_grid, rng);
        self.learner.learn(t, &outcome)?;
        let record = EpisodeRecord {
            episode: t,
            q: outcome.plan_capture_probability(),
            captured: outcome.captured,
            j: outcome.cumulative_intensity,
            capture_point: outcome.capture_point,
        };
        self.log.records.push(record);
        self.last_path = Some(path);
        Ok(record)
    }

    /// Runs the remaining episodes.
    pub fn run(&mut self, rng: &mut RngStream) -> Result<()> {
        while !self.is_done() {
            self.step(rng)?;
        }
        Ok(())
    }

    pub fn into_parts(self) -> (EpisodeLog, L, Option<Trajectory>) {
        (self.log, self.learner, self.last_path)
    }
}

/// Piecewise-constant model run over all episodes of the scenario.
pub fn run_alg_pc(scenario: &Scenario, rng: &mut RngStream) -> Result<(EpisodeLog, CellStats)> {
    let mut planner = Planner::new(scenario, PcLearner::new(scenario)?, rng.seed());
    planner.run(rng)?;
    let (log, learner, _) = planner.into_parts();
    Ok((log, learner.stats))
}

/// GP model run over all episodes of the scenario.
pub fn run_alg_gp(scenario: &Scenario, rng: &mut RngStream) -> Result<(EpisodeLog, GpLearner)> {
    let mut planner = Planner::new(scenario, GpLearner::new(scenario)?, rng.seed());
    planner.run(rng)?;
    let (log, learner, _) = planner.into_parts();
    Ok((log, learner))
}

/// Outcome of planning with a GP fitted to exact `log K` at cell centres.
#[derive(Debug, Clone)]
pub struct GridEffect {
    pub q_star: f64,
    /// True capture probability of the path traced on the true value
    /// function, the path-integral counterpart of `q_star`.
    pub q_traced: f64,
    /// True capture probability of the path planned on `exp(M)`.
    pub q_learned: f64,
    pub hyper: GpHyper,
    pub path: Trajectory,
}

impl GridEffect {
    /// Excess over the smaller of the two optimal-risk values.
    pub fn excess(&self) -> f64 {
        self.q_learned - self.q_star.min(self.q_traced)
    }
}

/// Best-case learning on a coarse grid: every cell centre observes the true
/// `log K` without noise, hyperparameters are tuned, and the path is
/// planned on the posterior mean.
pub fn grid_effect_probe(scenario: &Scenario, cells_per_side: usize) -> Result<GridEffect> {
    let grid = ObsGrid::new(*scenario.pde_grid.domain(), cells_per_side)?;
    let cfg = &scenario.config;
    let truth = |p: Point| cfg.scenario.background + cfg.peaks.iter().map(|pk| pk.value(p)).sum::<f64>();
    let mut obs = GpObservations::default();
    for id in grid.ids() {
        let c = grid.cell_center(id)?;
        obs.cells.push(id);
        obs.points.push(c);
        obs.z.push(truth(c).ln());
        obs.noise.push(0.0);
    }
    let (hyper, _) = tune_hyperparameters(&obs, &scenario.initial_hyper(), &HyperBounds::for_grid(&grid))?;
    let mut gp = GridPosterior::new(grid, scenario.pde_grid, hyper)?;
    gp.update(&obs)?;
    let k = gp.mean_field().map(f64::exp);
    let u = EikonalSolver::new(scenario.pde_grid).solve(&scenario.speed, &k)?;
    let path = trace_path(&u, &scenario.speed, scenario.x0, scenario.h_path())?;
    let j = cumulative_intensity(&path, &scenario.true_k);
    let u_true = EikonalSolver::new(scenario.pde_grid).solve(&scenario.speed, &scenario.true_k)?;
    let optimal = trace_path(&u_true, &scenario.speed, scenario.x0, scenario.h_path())?;
    let j_opt = cumulative_intensity(&optimal, &scenario.true_k);
    Ok(GridEffect {
        q_star: -(-u_true.interpolate(scenario.x0)?).exp_m1(),
        q_traced: -(-j_opt).exp_m1(),
        q_learned: -(-j).exp_m1(),
        hyper,
        path,
    })
}
