//! Matching two arbitrary densities through their Fisher–Rao midpoint, with
//! either compatible metric. Swapping the densities gives the inverse map.

use oitk::compat::{symmetric_match_detailed, MetricKind};
use oitk::warp::{compose, pushforward_density};
use oitk::{normalize_density, Grid, ScalarField, SpectralPlan};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(128)?;
    let plan = SpectralPlan::new(grid);
    let mu0 = normalize_density(
        &ScalarField::from_fn(grid, |x, y| 1.0 + 0.6 * x.sin() * (2.0 * y).cos()),
        true,
    )?;
    let mu1 = normalize_density(&ScalarField::from_fn(grid, |x, y| 1.0 + 0.6 * (x + y).cos()), true)?;

    for kind in [MetricKind::Conformal, MetricKind::Flat] {
        let there = symmetric_match_detailed(&plan, &mu0, &mu1, 20, kind)?;
        let back = symmetric_match_detailed(&plan, &mu1, &mu0, 20, kind)?;
        let (pushed, _) = pushforward_density(&there.warp, &mu0)?;
        let mismatch = pushed.intensity().zip_map(mu1.intensity(), |a, b| a - b).norm_l2() / mu1.intensity().norm_l2();
        let round = compose(&back.warp, &there.warp)?;
        println!(
            "{kind:?}: half-lift residuals {:.2e} / {:.2e}, mismatch {mismatch:.2e}, round trip {:.2e}",
            there.residuals[0],
            there.residuals[1],
            round.max_displacement()
        );
    }
    Ok(())
}
