//! Parse a scenario config (a path, or a bundled name), report diagnostics
//! and summarize the true intensity it describes.

use std::path::Path;

use bayes_evasion::Scenario;
use bayes_evasion::scenario::Config;

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "fig3".into());
    let (cfg, text) = match Config::load(Path::new(&arg)) {
        Ok(c) => c,
        Err(e) => return eprintln!("{e}"),
    };
    if let Err(e) = cfg.validate(Some(&text)) {
        return eprintln!("{e}");
    }
    println!("{}: {} peaks, {} episodes, obs grid {}, pde grid {}", cfg.scenario.name, cfg.peaks.len(), cfg.scenario.episodes, cfg.scenario.obs_grid, cfg.scenario.pde_grid);
    for p in &cfg.peaks {
        println!("  peak at ({:.3}, {:.3}), A = {}, w = {}", p.center[0], p.center[1], p.amplitude, p.width);
    }
    match Scenario::from_config(cfg) {
        Ok(sc) => println!("K ranges over [{:.4}, {:.4}]", sc.true_k.min(), sc.true_k.max()),
        Err(e) => eprintln!("{e}"),
    }
}
