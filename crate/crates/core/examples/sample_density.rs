//! Sampling a density by transporting uniform points through the optimal
//! information transport map, checked with a χ² test.

use std::time::Instant;

use oitk::sampling::{chi2_gof, draw_uniform, Sampler};
use oitk::{normalize_density, Grid, ScalarField, SpectralPlan};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(256)?;
    let plan = SpectralPlan::new(grid);
    let mu = normalize_density(
        &ScalarField::from_fn(grid, |x, y| 1.0 - 0.8 * x.cos() * (2.0 * y).cos()),
        true,
    )?;

    let start = Instant::now();
    let sampler = Sampler::new(&plan, &mu, 20)?;
    println!("map built in {:.2} s", start.elapsed().as_secs_f64());

    let start = Instant::now();
    let batch = sampler.sample(100_000, 7)?;
    println!(
        "100000 samples in {:.3} s; first {:?}",
        start.elapsed().as_secs_f64(),
        batch.points[0]
    );

    let fit = chi2_gof(&batch, &mu, 16, 16)?;
    println!(
        "transported: χ² = {:.1} on {} dof, p = {:.3}",
        fit.stat, fit.dof, fit.p_value
    );
    let uniform = chi2_gof(&draw_uniform(100_000, 7, grid)?, &mu, 16, 16)?;
    println!("uniform:     χ² = {:.1}, p = {:.1e}", uniform.stat, uniform.p_value);
    Ok(())
}
