//! Monte Carlo capture frequency on a fixed path against the closed form
//! `1 - exp(-J)`.

use bayes_evasion::eikonal::Speed;
use bayes_evasion::episode::{cumulative_intensity, simulate_episode, RngStream};
use bayes_evasion::path::Trajectory;
use bayes_evasion::{ObsGrid, PdeGrid, Point, ScalarField};

fn main() -> bayes_evasion::Result<()> {
    let grid = PdeGrid::unit(101)?;
    let obs = ObsGrid::unit(20)?;
    let speed = Speed::Uniform(1.0);
    // a bump in the middle of the square
    let k = ScalarField::from_fn(grid, |p| 0.2 + 2.0 * (-(p - Point::new(0.5, 0.5)).norm_sq() / 0.04).exp());
    let path = Trajectory::from_vertices(vec![Point::new(0.1, 0.3), Point::new(0.5, 0.55), Point::new(0.9, 0.4)], &speed)?;
    let j = cumulative_intensity(&path, &k);
    let mut rng = RngStream::new(5);
    let n = 200_000;
    let mut captured = 0;
    let mut mean_s = 0.0;
    for _ in 0..n {
        let out = simulate_episode(&path, &k, &obs, &mut rng);
        if let Some(s) = out.capture_arc_length {
            captured += 1;
            mean_s += s;
        }
    }
    println!("J = {j:.5}, closed form {:.5}", -(-j).exp_m1());
    println!("simulated {:.5} over {n} episodes", captured as f64 / n as f64);
    println!("mean capture arc length {:.4} of {:.4}", mean_s / captured as f64, path.length());
    Ok(())
}
