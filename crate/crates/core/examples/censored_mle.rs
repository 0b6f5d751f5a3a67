//! Piecewise-constant estimate from right-censored visits: MLE, its
//! variance and the lower confidence bound used for planning.

use bayes_evasion::censored::{init_stats, lower_confidence_pc, mle_estimates};
use bayes_evasion::episode::RngStream;
use bayes_evasion::ObsGrid;

fn main() -> bayes_evasion::Result<()> {
    let grid = ObsGrid::unit(2)?;
    let truth = [0.1, 0.7, 2.0, 5.0];
    let visits = [10, 100, 1000, 10_000];
    let mut stats = init_stats(1e-3, 1e-3, &grid)?;
    let mut rng = RngStream::new(3);
    for (flat, (&k, &n)) in truth.iter().zip(&visits).enumerate() {
        let cell = grid.unflat(flat);
        for _ in 0..n {
            // each visit lasts 0.2 time units unless cut short by capture
            let s = rng.exp1() / k;
            stats.record(cell, s <= 0.2, s.min(0.2));
        }
    }
    let est = mle_estimates(&stats)?;
    let k_hat = lower_confidence_pc(&est, 15_000, grid.len(), 0.01, 1e-3)?;
    println!("{:>6} {:>7} {:>9} {:>9} {:>9}", "true", "visits", "mle", "sd", "lower");
    for c in 0..grid.len() {
        println!(
            "{:>6.2} {:>7} {:>9.4} {:>9.4} {:>9.4}",
            truth[c],
            visits[c],
            est.k_tilde[c],
            est.sigma2[c].sqrt(),
            k_hat[c]
        );
    }
    Ok(())
}
