//! Piecewise-constant learner on a bundled scenario.
//!
//! `cargo run --release --example piecewise_constant_run -- fig1 3000`

use bayes_evasion::episode::RngStream;
use bayes_evasion::planner::{compute_metrics, optimal_capture_prob, run_alg_pc, Algorithm};
use bayes_evasion::{Error, Scenario};

fn main() -> bayes_evasion::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "fig1".into());
    let episodes: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(2000);
    let sc = Scenario::bundled(&name)
        .ok_or_else(|| Error::Contract(format!("no bundled scenario {name}")))?
        .with_episodes(episodes);
    let q_star = optimal_capture_prob(&sc.true_k, &sc.speed, sc.x0)?;
    let mut rng = RngStream::with_stream(1, Algorithm::Pc.stream());
    let (log, stats) = run_alg_pc(&sc, &mut rng)?;
    let m = compute_metrics(&log, q_star)?;
    println!("{name}, {episodes} episodes, Q* = {q_star:.4}");
    for j in [episodes / 10, episodes / 2, episodes].into_iter().filter(|&j| j > 0) {
        let j = j as usize - 1;
        println!("episode {:>6}: R = {:.4}, S = {:.4}", j + 1, m.excess_risk[j], m.capture_rate[j]);
    }
    let visited = stats.entries().iter().filter(|&&n| n > 0).count();
    println!("{visited} of {} cells visited", stats.entries().len());
    Ok(())
}
