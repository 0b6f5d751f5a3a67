//! Config-driven experiment runs that write CSV data and SVG panels.
//!
//! Output files, for each algorithm tag `{alg}` that ran:
//!
//! | file | content |
//! |---|---|
//! | `metrics_{alg}.csv` | `episode,R_j,S_j,Q_i,Delta_i` |
//! | `episodes_{alg}.csv` | `episode,captured,J,Q_i,capture_x,capture_y` |
//! | `stats_{alg}.csv` | final cell statistics |
//! | `estimate_{alg}.csv` | final point estimate of `K` on the PDE grid |
//! | `path_{alg}.csv` | path planned on that estimate |
//! | `gp_posterior.csv` | `i,j,M,rho` (GP runs) |
//! | `hyper_gp.csv` | `episode,alpha,beta,lml` (GP runs) |
//!
//! plus `config.toml` (the resolved config), `true_k.csv`, `u_true.csv`,
//! `path_optimal.csv`, `summary.txt` and six panels `panel1_true_k.svg`
//! through `panel6_capture_rate.svg`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::eikonal::EikonalSolver;
use crate::episode::RngStream;
use crate::error::{Error, Result};
use crate::grid::{Point, ScalarField};
use crate::path::{trace_path, Trajectory};
use crate::planner::{
    compute_metrics, Algorithm, EpisodeLog, GpLearner, Learner, MetricSeries, PcLearner, Planner,
};
use crate::scenario::{Config, Scenario};
use crate::svg::{self, Overlay, Series};

/// Which algorithms a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Pc,
    Gp,
    Both,
}

impl Selection {
    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            Selection::Pc => vec![Algorithm::Pc],
            Selection::Gp => vec![Algorithm::Gp],
            Selection::Both => vec![Algorithm::Gp, Algorithm::Pc],
        }
    }
}

/// Command-line overrides on top of the config file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub selection: Selection,
    pub seed: Option<u64>,
    pub episodes: Option<u64>,
    pub obs_grid: Option<usize>,
    pub pde_grid: Option<usize>,
    pub output_dir: PathBuf,
}

impl RunOptions {
    pub fn new(selection: Selection, output_dir: impl Into<PathBuf>) -> Self {
        RunOptions { selection, seed: None, episodes: None, obs_grid: None, pde_grid: None, output_dir: output_dir.into() }
    }

    fn apply(&self, cfg: &mut Config) {
        if let Some(s) = self.seed {
            cfg.scenario.seed = s;
        }
        if let Some(e) = self.episodes {
            cfg.scenario.episodes = e;
        }
        if let Some(n) = self.obs_grid {
            cfg.scenario.obs_grid = n;
        }
        if let Some(n) = self.pde_grid {
            cfg.scenario.pde_grid = n;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub final_excess_risk: f64,
    pub final_capture_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub q_star: f64,
    pub results: Vec<AlgorithmSummary>,
    pub files: Vec<PathBuf>,
}

/// Process exit status for an error: 2 for configuration problems, 3 for
/// numerical failures, 1 for I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 2,
        Error::Io(_) => 1,
        _ => 3,
    }
}

/// Loads, validates and overrides a config, then builds the scenario.
pub fn load_scenario(config: &Path, opts: &RunOptions) -> Result<Scenario> {
    let (mut cfg, text) = Config::load(config)?;
    cfg.validate(Some(&text))?;
    opts.apply(&mut cfg);
    cfg.validate(None)?;
    Scenario::from_config(cfg)
}

/// Result of driving one learner, complete or cut short by an error.
struct Finished {
    log: EpisodeLog,
    estimate: Option<ScalarField>,
    uncertainty: Option<ScalarField>,
    stats_csv: Vec<u8>,
    posterior_csv: Option<Vec<u8>>,
    tuning_csv: Option<Vec<u8>>,
    error: Option<Error>,
}

fn drive<L: Learner>(scenario: &Scenario, learner: L, alg: Algorithm, extra: impl Fn(&L) -> (Option<Vec<u8>>, Option<Vec<u8>>)) -> Finished {
    let seed = scenario.config.scenario.seed;
    let mut rng = RngStream::with_stream(seed, alg.stream());
    let mut planner = Planner::new(scenario, learner, seed);
    let error = planner.run(&mut rng).err();
    let (log, learner, _) = planner.into_parts();
    let mut stats_csv = Vec::new();
    let _ = learner.stats().write_csv(&mut stats_csv);
    let (posterior_csv, tuning_csv) = extra(&learner);
    Finished {
        log,
        estimate: learner.estimate().ok(),
        uncertainty: learner.uncertainty().ok(),
        stats_csv,
        posterior_csv,
        tuning_csv,
        error,
    }
}

fn run_one(scenario: &Scenario, alg: Algorithm) -> Finished {
    let fail = |e: Error| Finished {
        log: EpisodeLog::new(alg, scenario.config.scenario.seed, scenario.episodes()),
        estimate: None,
        uncertainty: None,
        stats_csv: Vec::new(),
        posterior_csv: None,
        tuning_csv: None,
        error: Some(e),
    };
    match alg {
        Algorithm::Pc => match PcLearner::new(scenario) {
            Ok(l) => drive(scenario, l, alg, |_| (None, None)),
            Err(e) => fail(e),
        },
        Algorithm::Gp => match GpLearner::new(scenario) {
            Ok(l) => drive(scenario, l, alg, |g: &GpLearner| {
                let mut post = Vec::new();
                let mut tune = Vec::new();
                let _ = g.write_posterior_csv(&mut post);
                let _ = g.write_tuning_csv(&mut tune);
                (Some(post), Some(tune))
            }),
            Err(e) => fail(e),
        },
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(data)?;
        w.flush()?;
        Ok(())
    }
}

/// Runs the selected algorithms and writes every artifact. On a numerical
/// failure the outputs gathered so far are still written before the error
/// is returned.
pub fn run_experiment(config: &Path, opts: &RunOptions) -> Result<ExperimentSummary> {
    let scenario = load_scenario(config, opts)?;
    run_scenario(&scenario, opts)
}

/// [`run_experiment`] for an already built scenario.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<ExperimentSummary> {
    std::fs::create_dir_all(&opts.output_dir)?;
    let mut out = Writer { dir: opts.output_dir.clone(), files: Vec::new() };
    out.bytes("config.toml", scenario.config.to_toml().as_bytes())?;

    let mut solver = EikonalSolver::new(scenario.pde_grid);
    let u_true = solver.solve(&scenario.speed, &scenario.true_k)?;
    let q_star = -(-u_true.interpolate(scenario.x0)?).exp_m1();
    let optimal = trace_path(&u_true, &scenario.speed, scenario.x0, scenario.h_path())?;
    scenario.true_k.write_csv(out.create("true_k.csv")?)?;
    u_true.write_csv(out.create("u_true.csv")?)?;
    optimal.write_csv(out.create("path_optimal.csv")?)?;

    let algorithms = opts.selection.algorithms();
    let finished: Vec<Finished> = if algorithms.len() == 1 {
        vec![run_one(scenario, algorithms[0])]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = algorithms.iter().map(|&a| s.spawn(move || run_one(scenario, a))).collect();
            handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
        })
    };

    let mut first_error = None;
    let mut results = Vec::new();
    let mut metrics: Vec<(Algorithm, MetricSeries)> = Vec::new();
    let mut final_paths: Vec<(Algorithm, Trajectory)> = Vec::new();
    for f in &finished {
        let alg = f.log.algorithm;
        let tag = alg.tag();
        f.log.write_csv(out.create(&format!("episodes_{tag}.csv"))?)?;
        match compute_metrics(&f.log, q_star) {
            Ok(m) => {
                m.write_csv(&f.log, out.create(&format!("metrics_{tag}.csv"))?)?;
                results.push(AlgorithmSummary {
                    algorithm: alg,
                    episodes: f.log.len(),
                    final_excess_risk: m.final_excess_risk(),
                    final_capture_rate: m.final_capture_rate(),
                });
                metrics.push((alg, m));
            }
            Err(_) => {
                writeln!(out.create(&format!("metrics_{tag}.csv"))?, "episode,R_j,S_j,Q_i,Delta_i")?;
            }
        }
        out.bytes(&format!("stats_{tag}.csv"), &f.stats_csv)?;
        if let Some(p) = &f.posterior_csv {
            out.bytes("gp_posterior.csv", p)?;
        }
        if let Some(t) = &f.tuning_csv {
            out.bytes("hyper_gp.csv", t)?;
        }
        if let Some(est) = &f.estimate {
            est.write_csv(out.create(&format!("estimate_{tag}.csv"))?)?;
            match solver.solve(&scenario.speed, est).and_then(|u| trace_path(&u, &scenario.speed, scenario.x0, scenario.h_path())) {
                Ok(path) => {
                    path.write_csv(out.create(&format!("path_{tag}.csv"))?)?;
                    final_paths.push((alg, path));
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(e) = &f.error {
            if first_error.is_none() {
                first_error = Some(clone_error(e));
            }
        }
    }

    write_panels(&mut out, scenario, &u_true, &optimal, q_star, &finished, &metrics, &final_paths)?;

    let mut summary = format!("q_star,{q_star}\n");
    for r in &results {
        summary += &format!(
            "{},episodes={},R_T={},S_T={}\n",
            r.algorithm, r.episodes, r.final_excess_risk, r.final_capture_rate
        );
    }
    if let Some(e) = &first_error {
        summary += &format!("error,{e}\n");
    }
    out.bytes("summary.txt", summary.as_bytes())?;

    match first_error {
        Some(e) => Err(e),
        None => Ok(ExperimentSummary { q_star, results, files: out.files }),
    }
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::DomainViolation { x, y } => Error::DomainViolation { x: *x, y: *y },
        Error::Index(s) => Error::Index(s.clone()),
        Error::Contract(s) => Error::Contract(s.clone()),
        Error::IllConditioned { jitter } => Error::IllConditioned { jitter: *jitter },
        Error::NonConvergence { steps } => Error::NonConvergence { steps: *steps },
        Error::Config { line, message } => Error::Config { line: *line, message: message.clone() },
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), io.to_string())),
    }
}

#[allow(clippy::too_many_arguments)]
fn write_panels(
    out: &mut Writer,
    scenario: &Scenario,
    u_true: &ScalarField,
    optimal: &Trajectory,
    q_star: f64,
    finished: &[Finished],
    metrics: &[(Algorithm, MetricSeries)],
    final_paths: &[(Algorithm, Trajectory)],
) -> Result<()> {
    let k = &scenario.true_k;
    let start = Some(scenario.x0);
    let panel1 = svg::field_panel("true intensity K", Some(k), k, &Overlay { start, ..Overlay::default() });
    out.bytes("panel1_true_k.svg", panel1.as_bytes())?;

    let opt = optimal.vertices();
    let panel2 = svg::field_panel(
        "level sets of u",
        None,
        u_true,
        &Overlay { contours: Some((u_true, 20)), paths: vec![(opt, svg::REFERENCE_COLOR)], start, ..Overlay::default() },
    );
    out.bytes("panel2_value.svg", panel2.as_bytes())?;

    // Panels 3 and 4 show the GP state when the GP ran, otherwise PC.
    let shown = finished
        .iter()
        .find(|f| f.log.algorithm == Algorithm::Gp)
        .or_else(|| finished.first());
    let (title3, title4) = match shown.map(|f| f.log.algorithm) {
        Some(Algorithm::Pc) => ("PC estimate of K", "PC variance estimate"),
        _ => ("exp(M), GP estimate of K", "GP posterior variance rho"),
    };
    let dots: Vec<Point> = shown.map(|f| f.log.capture_points().collect()).unwrap_or_default();
    let learned: Option<&[Point]> = shown.and_then(|f| {
        final_paths.iter().find(|(a, _)| *a == f.log.algorithm).map(|(_, p)| p.vertices())
    });
    let mut paths = vec![(opt, svg::REFERENCE_COLOR)];
    if let Some(p) = learned {
        paths.push((p, "black"));
    }
    let panel3 = svg::field_panel(
        title3,
        shown.and_then(|f| f.estimate.as_ref()),
        k,
        &Overlay { dots, paths, start, ..Overlay::default() },
    );
    out.bytes("panel3_estimate.svg", panel3.as_bytes())?;
    let panel4 = svg::field_panel(title4, shown.and_then(|f| f.uncertainty.as_ref()), k, &Overlay { start, ..Overlay::default() });
    out.bytes("panel4_variance.svg", panel4.as_bytes())?;

    let color = |a: Algorithm| match a {
        Algorithm::Gp => svg::GP_COLOR,
        Algorithm::Pc => svg::PC_COLOR,
    };
    let label = |a: Algorithm| match a {
        Algorithm::Gp => "Alg-GP",
        Algorithm::Pc => "Alg-PC",
    };
    let risk: Vec<Series> = metrics
        .iter()
        .map(|(a, m)| Series { label: label(*a), color: color(*a), values: &m.excess_risk })
        .collect();
    let panel5 = svg::line_panel("averaged excess risk", &risk, None);
    out.bytes("panel5_excess_risk.svg", panel5.as_bytes())?;
    let rate: Vec<Series> = metrics
        .iter()
        .map(|(a, m)| Series { label: label(*a), color: color(*a), values: &m.capture_rate })
        .collect();
    let panel6 = svg::line_panel("observed capture rate", &rate, Some((q_star, "Q*")));
    out.bytes("panel6_capture_rate.svg", panel6.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config { line: 1, message: String::new() }), 2);
        assert_eq!(exit_code(&Error::IllConditioned { jitter: 1e-6 }), 3);
        assert_eq!(exit_code(&Error::NonConvergence { steps: 10 }), 3);
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let mut opts = RunOptions::new(Selection::Gp, "unused");
        opts.episodes = Some(100);
        opts.obs_grid = Some(10);
        opts.pde_grid = Some(51);
        opts.seed = Some(9);
        let sc = load_scenario(Path::new("fig1"), &opts).unwrap();
        assert_eq!(sc.episodes(), 100);
        assert_eq!(sc.obs_grid.cells_per_side(), 10);
        assert_eq!(sc.pde_grid.n(), 51);
        assert_eq!(sc.config.scenario.seed, 9);
        opts.episodes = Some(0);
        assert!(matches!(load_scenario(Path::new("fig1"), &opts), Err(Error::Config { .. })));
        assert!(matches!(load_scenario(Path::new("/no/such/file.toml"), &opts), Err(Error::Config { .. })));
    }
}
