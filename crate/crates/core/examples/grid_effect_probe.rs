//! How much risk the coarse observation grid costs when the intensity is
//! known exactly at the cell centres.
//!
//! `cargo run --release --example grid_effect_probe`

use bayes_evasion::planner::grid_effect_probe;
use bayes_evasion::scenario::bundled_names;
use bayes_evasion::Scenario;

fn main() -> bayes_evasion::Result<()> {
    for name in bundled_names() {
        let sc = Scenario::bundled(name).expect("bundled");
        for cells in [5, 10, 20] {
            let g = grid_effect_probe(&sc, cells)?;
            println!(
                "{name} {cells:>2}x{cells:<2} Q* {:.4}  planned {:.4}  excess {:+.4}  (alpha {:.2}, beta {:.3})",
                g.q_star.min(g.q_traced),
                g.q_learned,
                g.excess(),
                g.hyper.alpha,
                g.hyper.beta
            );
        }
    }
    Ok(())
}
