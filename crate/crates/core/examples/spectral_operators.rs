//! Spectral calculus on the torus: derivatives of a trigonometric mode,
//! a Poisson solve and the inertia operator round trip.

use oitk::{integrate, Grid, InertiaConfig, ScalarField, SpectralPlan, VectorField};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(128)?;
    let plan = SpectralPlan::new(grid);

    let f = ScalarField::from_fn(grid, |x, y| (3.0 * x + 2.0 * y).sin());
    let lap = plan.laplacian(&f);
    let err = lap.zip_map(&f, |a, b| (a + 13.0 * b).abs()).max();
    println!(
        "Δ sin(3x + 2y) = −13 sin(3x + 2y), relative sup error {:.1e}",
        err / 13.0
    );

    // recover a zero-mean potential from its Laplacian
    let u = ScalarField::from_fn(grid, |x, y| x.cos() * (2.0 * y).sin() + 0.3 * (x + y).sin());
    let back = plan.solve_poisson(&plan.laplacian(&u));
    println!(
        "Poisson round trip, sup error {:.1e}",
        back.zip_map(&u, |a, b| a - b).max_abs()
    );

    let v = VectorField::from_fn(grid, |x, y| (y.sin() + x.cos(), (x + y).cos()));
    let lhs = integrate(&u.zip_map(&plan.divergence(&v), |a, b| a * b));
    let g = plan.gradient(&u);
    let rhs = -g.inner(&v);
    println!("∫ u div v = {lhs:.12}, −∫ ∇u·v = {rhs:.12}");

    for lambda in [0.1, 1.0, 10.0] {
        let cfg = InertiaConfig::new(lambda)?;
        let m = plan.inertia_apply(&v, &cfg);
        let w = plan.inertia_inverse(&m, &cfg);
        println!("λ = {lambda:>4}: A⁻¹A v − v = {:.1e}", w.sub(&v).max_norm());
    }
    Ok(())
}
