//! Unit intensity on the unit square: the value function is the distance
//! to the boundary. Prints the max-norm error as the grid is refined.

use bayes_evasion::eikonal::{EikonalSolver, Speed};
use bayes_evasion::{PdeGrid, ScalarField};

fn main() -> bayes_evasion::Result<()> {
    let mut prev: Option<f64> = None;
    for n in [26, 51, 101, 201] {
        let grid = PdeGrid::unit(n)?;
        let u = EikonalSolver::new(grid).solve(&Speed::Uniform(1.0), &ScalarField::constant(grid, 1.0))?;
        let mut err: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let p = grid.node(i, j);
                err = err.max((u.at(i, j) - grid.domain().distance_to_boundary(p)).abs());
            }
        }
        match prev {
            Some(e) => println!("n = {n:>3}  h = {:.4}  error = {err:.5}  ratio = {:.3}", grid.spacing(), e / err),
            None => println!("n = {n:>3}  h = {:.4}  error = {err:.5}", grid.spacing()),
        }
        prev = Some(err);
    }
    Ok(())
}
