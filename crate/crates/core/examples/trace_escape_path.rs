//! Optimal escape from the start point of a bundled scenario.
//!
//! `cargo run --example trace_escape_path -- fig2`

use bayes_evasion::eikonal::EikonalSolver;
use bayes_evasion::episode::cumulative_intensity;
use bayes_evasion::path::{segment_by_cells, trace_path};
use bayes_evasion::{Error, Scenario};

fn main() -> bayes_evasion::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "fig1".into());
    let sc = Scenario::bundled(&name).ok_or_else(|| Error::Contract(format!("no bundled scenario {name}")))?;
    let u = EikonalSolver::new(sc.pde_grid).solve(&sc.speed, &sc.true_k)?;
    let path = trace_path(&u, &sc.speed, sc.x0, sc.h_path())?;
    let j = cumulative_intensity(&path, &sc.true_k);
    let end = path.end();
    println!("{name}: start ({:.3}, {:.3}), exit ({:.4}, {:.4})", sc.x0.x, sc.x0.y, end.x, end.y);
    println!("length {:.4}, {} vertices, {} cells crossed", path.length(), path.vertices().len(), segment_by_cells(&path, &sc.obs_grid).len());
    println!("u(x0) = {:.5}, path integral J = {:.5}", u.interpolate(sc.x0)?, j);
    println!("capture probability {:.4}", -(-j).exp_m1());
    Ok(())
}
