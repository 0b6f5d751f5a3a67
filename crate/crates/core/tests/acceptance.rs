//! Acceptance suite. One line per criterion; exits nonzero if any fails.
//!
//! `cargo test -p bayes-evasion --test acceptance` runs everything (the
//! three-scenario learning runs dominate, roughly 20 minutes on one core).
//! Pass substrings to select criteria, e.g. `-- eikonal capture`.

use std::path::Path;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use bayes_evasion::censored::{init_stats, lower_confidence_pc, mle_estimates, CellStats};
use bayes_evasion::eikonal::{EikonalSolver, Speed};
use bayes_evasion::episode::{simulate_episode, RngStream};
use bayes_evasion::experiment::{run_scenario, RunOptions, Selection};
use bayes_evasion::gp::{log_marginal_likelihood, posterior, GpHyper, GpObservations};
use bayes_evasion::path::{segment_by_cells, Trajectory};
use bayes_evasion::planner::{
    compute_metrics, grid_effect_probe, optimal_capture_prob, run_alg_gp, run_alg_pc, Algorithm, MetricSeries,
};
use bayes_evasion::{CellId, ObsGrid, PdeGrid, Point, ScalarField, Scenario};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SCENARIOS: [&str; 3] = ["fig1", "fig2", "fig3"];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("1 eikonal-accuracy", eikonal_accuracy),
        ("2 capture-law", capture_law),
        ("3 censored-mle", censored_mle),
        ("4 gp-oracle", gp_oracle),
        ("5 fig1-convergence", fig1_convergence),
        ("6 gp-beats-pc", gp_beats_pc),
        ("7 grid-effect", grid_effect),
        ("8 determinism", determinism),
        ("9 properties", properties),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {name}: {} [{secs:.1} s]", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn max_distance_error(n: usize) -> (f64, Duration) {
    let grid = PdeGrid::unit(n).unwrap();
    let start = Instant::now();
    let u = EikonalSolver::new(grid).solve(&Speed::Uniform(1.0), &ScalarField::constant(grid, 1.0)).unwrap();
    let elapsed = start.elapsed();
    let mut err: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let p = grid.node(i, j);
            let d = p.x.min(p.y).min(1.0 - p.x).min(1.0 - p.y);
            err = err.max((u.at(i, j) - d).abs());
        }
    }
    (err, elapsed)
}

fn eikonal_accuracy() -> Verdict {
    let (fine, t) = max_distance_error(101);
    let (coarse, _) = max_distance_error(51);
    let ratio = coarse / fine;
    verdict(
        fine <= 0.02 && (1.7..=2.3).contains(&ratio) && t < Duration::from_secs(1),
        format!("max error {fine:.5} (<= 0.02), halving ratio {ratio:.3} (in [1.7, 2.3]), solve {:.3} s (< 1 s)", t.as_secs_f64()),
    )
}

fn capture_law() -> Verdict {
    let grid = PdeGrid::unit(101).unwrap();
    let k = ScalarField::constant(grid, 1.0);
    let obs = ObsGrid::unit(20).unwrap();
    let speed = Speed::Uniform(1.0);
    let path = Trajectory::from_vertices(vec![Point::new(0.25, 0.5), Point::new(0.75, 0.5)], &speed).unwrap();
    let mut rng = RngStream::new(2024);
    let episodes = 100_000;
    let start = Instant::now();
    let captured = (0..episodes).filter(|_| simulate_episode(&path, &k, &obs, &mut rng).captured).count();
    let secs = start.elapsed().as_secs_f64();
    let freq = captured as f64 / episodes as f64;
    let exact = 1.0 - (-0.5f64).exp();
    verdict(
        (freq - exact).abs() <= 0.005 && secs < 10.0,
        format!("frequency {freq:.5} vs {exact:.5} (tol 0.005), {secs:.2} s (< 10 s)"),
    )
}

/// Unit-duration visits to one cell with true intensity `rate`.
fn censored_replicate(rng: &mut RngStream, rate: f64, visits: usize) -> (f64, f64) {
    let grid = ObsGrid::unit(1).unwrap();
    let cell = CellId::new(0, 0);
    let mut stats = CellStats::zeros(&grid);
    for _ in 0..visits {
        let s = rng.exp1() / rate;
        stats.record(cell, s <= 1.0, s.min(1.0));
    }
    let est = mle_estimates(&stats).unwrap();
    (est.k_tilde[0], est.sigma2[0])
}

fn censored_mle() -> Verdict {
    let rate = 0.7;
    let mut rng = RngStream::new(99);
    let (single, _) = censored_replicate(&mut rng, rate, 10_000);
    let reps: Vec<(f64, f64)> = (0..200).map(|_| censored_replicate(&mut rng, rate, 10_000)).collect();
    let mean = reps.iter().map(|r| r.0).sum::<f64>() / reps.len() as f64;
    let empirical = reps.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (reps.len() - 1) as f64;
    let predicted = reps.iter().map(|r| r.1).sum::<f64>() / reps.len() as f64;
    let rel = (single / rate - 1.0).abs();
    let var_rel = (empirical / predicted - 1.0).abs();
    verdict(
        rel <= 0.05 && var_rel <= 0.3,
        format!(
            "estimate {single:.4} vs {rate} ({:.2}% off, tol 5%), replicate variance {empirical:.3e} vs estimated {predicted:.3e} ({:.1}% off, tol 30%)",
            100.0 * rel,
            100.0 * var_rel
        ),
    )
}

/// Solves `a x = b` for every column of `b` by Gauss-Jordan elimination with
/// partial pivoting; also returns `log det a`.
fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut log_det = 0.0;
    for c in 0..n {
        let p = (c..n).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        let piv = a[c][c];
        log_det += piv.abs().ln();
        for r in 0..n {
            if r == c {
                continue;
            }
            let f = a[r][c] / piv;
            if f == 0.0 {
                continue;
            }
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            for k in 0..b[r].len() {
                b[r][k] -= f * b[c][k];
            }
        }
    }
    for r in 0..n {
        let piv = a[r][r];
        for v in &mut b[r] {
            *v /= piv;
        }
    }
    (b, log_det)
}

fn gp_oracle() -> Verdict {
    let mut rng = RngStream::new(4);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for n in 1..=10 {
        for _ in 0..20 {
            instances += 1;
            let pts: Vec<Point> = (0..n).map(|_| Point::new(rng.uniform(), rng.uniform())).collect();
            let z: Vec<f64> = (0..n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
            let noise: Vec<f64> = (0..n).map(|_| 0.02 + rng.uniform()).collect();
            let (alpha, beta, mean) = (0.1 + 3.0 * rng.uniform(), 0.05 + 0.6 * rng.uniform(), rng.uniform() - 1.0);
            let hyper = GpHyper::new(alpha, beta, mean).unwrap();
            let obs = GpObservations::from_points(pts.clone(), z.clone(), noise.clone()).unwrap();
            let query: Vec<Point> = (0..8).map(|_| Point::new(rng.uniform(), rng.uniform())).collect();
            let (m, v) = posterior(&obs, &hyper, &query).unwrap();
            let lml = log_marginal_likelihood(&obs, &hyper).unwrap();

            let k = |a: Point, b: Point| alpha * (-((a.x - b.x).powi(2) + (a.y - b.y).powi(2)) / (beta * beta)).exp();
            // the library factorizes with a 1e-10 α diagonal jitter
            let a: Vec<Vec<f64>> = (0..n)
                .map(|r| (0..n).map(|c| k(pts[r], pts[c]) + if r == c { noise[r] + 1e-10 * alpha } else { 0.0 }).collect())
                .collect();
            let mut rhs: Vec<Vec<f64>> = (0..n).map(|r| vec![z[r] - mean]).collect();
            for row in rhs.iter_mut().enumerate() {
                row.1.extend(query.iter().map(|&q| k(q, pts[row.0])));
            }
            let (sol, log_det) = gauss_jordan(a, rhs);
            let quad: f64 = (0..n).map(|r| (z[r] - mean) * sol[r][0]).sum();
            let ref_lml = -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            worst = worst.max((lml - ref_lml).abs());
            for (qi, &q) in query.iter().enumerate() {
                let ref_mean = mean + (0..n).map(|r| k(q, pts[r]) * sol[r][0]).sum::<f64>();
                let ref_var = alpha - (0..n).map(|r| k(q, pts[r]) * sol[r][qi + 1]).sum::<f64>();
                worst = worst.max((m[qi] - ref_mean).abs()).max((v[qi] - ref_var.max(0.0)).abs());
            }
        }
    }
    verdict(worst <= 1e-10, format!("{instances} instances with n <= 10, worst deviation {worst:.2e} (tol 1e-10)"))
}

struct Run {
    metrics: MetricSeries,
    seconds: f64,
}

struct Runs {
    /// `[scenario][seed]`
    gp: Vec<Vec<Result<Run, String>>>,
    pc: Vec<Vec<Result<Run, String>>>,
    q_star: Vec<f64>,
}

fn one_run(scenario: &Scenario, alg: Algorithm, seed: u64, q_star: f64) -> Result<Run, String> {
    let mut rng = RngStream::with_stream(seed, alg.stream());
    let start = Instant::now();
    let log = match alg {
        Algorithm::Gp => run_alg_gp(scenario, &mut rng).map(|r| r.0),
        Algorithm::Pc => run_alg_pc(scenario, &mut rng).map(|r| r.0),
    }
    .map_err(|e| format!("{alg} seed {seed}: {e}"))?;
    let seconds = start.elapsed().as_secs_f64();
    let metrics = compute_metrics(&log, q_star).map_err(|e| e.to_string())?;
    Ok(Run { metrics, seconds })
}

/// The full-length learning runs, shared by the convergence and ordering
/// criteria.
fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = Runs { gp: Vec::new(), pc: Vec::new(), q_star: Vec::new() };
        let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        for name in SCENARIOS {
            let scenario = Scenario::bundled(name).expect("bundled scenario");
            let q_star = optimal_capture_prob(&scenario.true_k, &scenario.speed, scenario.x0).unwrap();
            let jobs: Vec<(Algorithm, u64)> =
                [Algorithm::Gp, Algorithm::Pc].iter().flat_map(|&a| SEEDS.iter().map(move |&s| (a, s))).collect();
            let mut results: Vec<Option<Result<Run, String>>> = (0..jobs.len()).map(|_| None).collect();
            for chunk in (0..jobs.len()).collect::<Vec<_>>().chunks(threads) {
                let done: Vec<(usize, Result<Run, String>)> = std::thread::scope(|s| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|&i| {
                            let (a, seed) = jobs[i];
                            let sc = &scenario;
                            s.spawn(move || (i, one_run(sc, a, seed, q_star)))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().unwrap()).collect()
                });
                for (i, r) in done {
                    results[i] = Some(r);
                }
            }
            let mut it = results.into_iter().map(Option::unwrap);
            out.gp.push(it.by_ref().take(SEEDS.len()).collect());
            out.pc.push(it.collect());
            out.q_star.push(q_star);
        }
        out
    })
}

fn fig1_convergence() -> Verdict {
    let runs = runs();
    let q_star = runs.q_star[0];
    let mut close = 0;
    let mut decreasing = true;
    let mut slowest: f64 = 0.0;
    let mut parts = Vec::new();
    for (seed, r) in SEEDS.iter().zip(&runs.gp[0]) {
        match r {
            Ok(run) => {
                let s_t = run.metrics.final_capture_rate();
                let r_t = run.metrics.final_excess_risk();
                let r_tenth = run.metrics.excess_risk[run.metrics.excess_risk.len() / 10 - 1];
                if (s_t - q_star).abs() <= 0.05 {
                    close += 1;
                }
                decreasing &= r_t < r_tenth;
                slowest = slowest.max(run.seconds);
                parts.push(format!("seed {seed}: S_T {s_t:.4}, R_T {r_t:.4} < R_T/10 {r_tenth:.4}"));
            }
            Err(e) => {
                decreasing = false;
                parts.push(e.clone());
            }
        }
    }
    verdict(
        close >= 4 && decreasing && slowest < 2400.0,
        format!(
            "Q* {q_star:.4}; |S_T - Q*| <= 0.05 for {close}/5 seeds (need 4); slowest run {slowest:.0} s (< 2400 s); {}",
            parts.join("; ")
        ),
    )
}

fn gp_beats_pc() -> Verdict {
    let runs = runs();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, name) in SCENARIOS.iter().enumerate() {
        let mut wins = 0;
        let mut pairs = Vec::new();
        for (g, p) in runs.gp[k].iter().zip(&runs.pc[k]) {
            match (g, p) {
                (Ok(g), Ok(p)) => {
                    let (rg, rp) = (g.metrics.final_excess_risk(), p.metrics.final_excess_risk());
                    if rg < rp {
                        wins += 1;
                    }
                    pairs.push(format!("{rg:.4}/{rp:.4}"));
                }
                (g, p) => {
                    for e in [g.as_ref().err(), p.as_ref().err()].into_iter().flatten() {
                        pairs.push(e.clone());
                    }
                }
            }
        }
        pass &= wins >= 4;
        parts.push(format!("{name} GP wins {wins}/5 (R_T gp/pc {})", pairs.join(" ")));
    }
    verdict(pass, parts.join("; "))
}

fn grid_effect() -> Verdict {
    let scenario = Scenario::bundled("fig1").unwrap();
    match grid_effect_probe(&scenario, 10) {
        Ok(g) => {
            let excess = g.excess();
            verdict(
                excess <= 0.01,
                format!(
                    "Q* {:.4} (value) / {:.4} (traced), planned on exp(M) {:.4}, excess {:.4} (tol 0.01; 0.0025 stretch level {})",
                    g.q_star,
                    g.q_traced,
                    g.q_learned,
                    excess,
                    if excess <= 0.0025 { "met" } else { "not met" }
                ),
            )
        }
        Err(e) => verdict(false, format!("probe failed: {e}")),
    }
}

fn determinism() -> Verdict {
    let scenario = Scenario::bundled("fig1").unwrap().with_episodes(400);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let opts = RunOptions::new(Selection::Both, d.path());
        if let Err(e) = run_scenario(&scenario, &opts) {
            return verdict(false, format!("run failed: {e}"));
        }
    }
    let read = |dir: &Path, f: &str| std::fs::read(dir.join(f)).unwrap_or_default();
    let mut same = true;
    for f in ["metrics_gp.csv", "metrics_pc.csv"] {
        let (a, b) = (read(dirs[0].path(), f), read(dirs[1].path(), f));
        same &= !a.is_empty() && a == b;
    }
    verdict(same, "metrics_gp.csv and metrics_pc.csv from two 400-episode runs compared byte for byte")
}

fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..5.0, n * n)
}

fn properties() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };
    let runner = || TestRunner::new(PropConfig { cases: 64, failure_persistence: None, ..PropConfig::default() });
    let grid = PdeGrid::unit(21).unwrap();

    check(
        "fmm acceptance order",
        runner()
            .run(&field_strategy(21), |k| {
                let k = ScalarField::from_values(grid, k).unwrap();
                let (u, order) = EikonalSolver::new(grid).solve_traced(&Speed::Uniform(1.0), &k).unwrap();
                for w in order.windows(2) {
                    prop_assert!(u.values()[w[1]] >= u.values()[w[0]]);
                }
                prop_assert_eq!(order.len(), grid.len());
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    check(
        "fmm comparison",
        runner()
            .run(&(field_strategy(21), prop::collection::vec(0.0f64..3.0, 441)), |(k, extra)| {
                let hi: Vec<f64> = k.iter().zip(&extra).map(|(a, b)| a + b).collect();
                let mut solver = EikonalSolver::new(grid);
                let u_lo = solver.solve(&Speed::Uniform(1.0), &ScalarField::from_values(grid, k).unwrap()).unwrap();
                let u_hi = solver.solve(&Speed::Uniform(1.0), &ScalarField::from_values(grid, hi).unwrap()).unwrap();
                for (a, b) in u_lo.values().iter().zip(u_hi.values()) {
                    prop_assert!(a <= b, "{} > {}", a, b);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let obs_grid = ObsGrid::unit(20).unwrap();
    check(
        "segmentation time",
        runner()
            .run(
                &(prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 2..12), 0.2f64..5.0),
                |(pts, f)| {
                    let speed = Speed::Uniform(f);
                    let vertices: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
                    let t = Trajectory::from_vertices(vertices, &speed).unwrap();
                    let visits = segment_by_cells(&t, &obs_grid);
                    let total: f64 = visits.iter().map(|v| v.duration).sum();
                    prop_assert!((total - t.total_time()).abs() <= 1e-9, "{} vs {}", total, t.total_time());
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );

    check(
        "gp variance monotone",
        runner()
            .run(
                &(
                    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, -2.0f64..2.0, 0.01f64..1.0), 2..15),
                    0.1f64..3.0,
                    0.03f64..0.6,
                ),
                |(data, alpha, beta)| {
                    let hyper = GpHyper::new(alpha, beta, 0.0).unwrap();
                    let queries: Vec<Point> = (0..25).map(|k| Point::new(0.1 + 0.2 * (k % 5) as f64, 0.1 + 0.2 * (k / 5) as f64)).collect();
                    let take = |n: usize| {
                        GpObservations::from_points(
                            data[..n].iter().map(|d| Point::new(d.0, d.1)).collect(),
                            data[..n].iter().map(|d| d.2).collect(),
                            data[..n].iter().map(|d| d.3).collect(),
                        )
                        .unwrap()
                    };
                    let mut prev = vec![alpha; queries.len()];
                    for n in 1..=data.len() {
                        let (_, v) = posterior(&take(n), &hyper, &queries).map_err(|e| TestCaseError::fail(e.to_string()))?;
                        for (a, b) in prev.iter().zip(&v) {
                            prop_assert!(*b <= *a + 1e-9 * alpha, "variance grew from {} to {}", a, b);
                        }
                        prev = v;
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );

    check(
        "pc lower bound sandwich",
        runner()
            .run(
                &(prop::collection::vec((0u32..200, 0.0f64..50.0), 16), 1u64..100_000, 1e-4f64..0.5),
                |(cells, episodes, gamma)| {
                    let grid = ObsGrid::unit(4).unwrap();
                    let k_min = 1e-3;
                    let mut stats = init_stats(1e-3, k_min, &grid).unwrap();
                    for (flat, &(captures, time)) in cells.iter().enumerate() {
                        let id = grid.unflat(flat);
                        for _ in 0..captures {
                            stats.record(id, true, time / captures as f64);
                        }
                        if captures == 0 {
                            stats.record(id, false, time);
                        }
                    }
                    let est = mle_estimates(&stats).unwrap();
                    let k_hat = lower_confidence_pc(&est, episodes, grid.len(), gamma, k_min).unwrap();
                    for (h, t) in k_hat.iter().zip(&est.k_tilde) {
                        prop_assert!(*h >= k_min && *h <= t.max(k_min), "{} outside [{}, {}]", h, k_min, t);
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );

    // log K̃ from 100 unit visits at K = 0.7 has variance near 1 / E[Gc]
    let mut rng = RngStream::new(31);
    let logs: Vec<f64> = (0..2000).map(|_| censored_replicate(&mut rng, 0.7, 100).0.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
    let predicted = 1.0 / (100.0 * (1.0 - (-0.7f64).exp()));
    let delta_rel = (var / predicted - 1.0).abs();
    check(
        "delta method",
        if delta_rel <= 0.25 { Ok(()) } else { Err(format!("log variance {var:.4} vs {predicted:.4}")) },
    );

    let detail = if failures.is_empty() {
        format!(
            "fmm order, fmm comparison, segmentation time (1e-9), gp variance monotone, pc sandwich: 64 cases each; delta method {:.1}% off (tol 25%)",
            100.0 * delta_rel
        )
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}
