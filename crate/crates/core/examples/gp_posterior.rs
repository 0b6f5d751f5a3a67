//! GP regression on noisy `log K` samples: tune the hyperparameters by
//! marginal likelihood, then print the posterior along a horizontal line.

use bayes_evasion::episode::RngStream;
use bayes_evasion::gp::{log_marginal_likelihood, posterior, tune_hyperparameters, GpHyper, GpObservations, HyperBounds};
use bayes_evasion::{ObsGrid, Point};

fn main() -> bayes_evasion::Result<()> {
    let truth = |p: Point| (0.05 + 3.0 * (-(p - Point::new(0.3, 0.5)).norm_sq() / 0.05).exp()).ln();
    let mut rng = RngStream::new(11);
    let (mut pts, mut z, mut noise) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..60 {
        let p = Point::new(rng.uniform(), rng.uniform());
        let var = 0.01 + 0.05 * rng.uniform();
        // crude gaussian noise from two uniforms
        let e = (-2.0 * rng.uniform().max(1e-300).ln()).sqrt() * (std::f64::consts::TAU * rng.uniform()).cos();
        pts.push(p);
        z.push(truth(p) + var.sqrt() * e);
        noise.push(var);
    }
    let obs = GpObservations::from_points(pts, z, noise)?;
    let start = GpHyper::new(1.0, 0.2, obs.z.iter().sum::<f64>() / obs.len() as f64)?;
    let bounds = HyperBounds::for_grid(&ObsGrid::unit(20)?);
    println!("start: alpha {:.3}, beta {:.3}, lml {:.3}", start.alpha, start.beta, log_marginal_likelihood(&obs, &start)?);
    let (hyper, lml) = tune_hyperparameters(&obs, &start, &bounds)?;
    println!("tuned: alpha {:.3}, beta {:.3}, lml {lml:.3}", hyper.alpha, hyper.beta);

    let line: Vec<Point> = (0..=10).map(|k| Point::new(k as f64 / 10.0, 0.5)).collect();
    let (m, v) = posterior(&obs, &hyper, &line)?;
    println!("{:>5} {:>8} {:>8} {:>8}", "x", "true", "mean", "sd");
    for (k, p) in line.iter().enumerate() {
        println!("{:>5.2} {:>8.3} {:>8.3} {:>8.3}", p.x, truth(*p), m[k], v[k].sqrt());
    }
    Ok(())
}
