//! Inexact matching: the volume penalty σ decides how far along the
//! geodesic towards the target the compatible solution stops.

use oitk::geometry::fisher_rao_distance;
use oitk::lifting::{inexact_stop_time, solve_inexact_compatible};
use oitk::warp::pushforward_density;
use oitk::{normalize_density, Density, Grid, ScalarField, SpectralPlan};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(128)?;
    let plan = SpectralPlan::new(grid);
    let vol = Density::uniform(grid);
    let target = normalize_density(
        &ScalarField::from_fn(grid, |x, y| 1.0 + 0.7 * (x + y).sin() * y.cos()),
        true,
    )?;
    let full = fisher_rao_distance(&vol, &target)?;

    println!("{:>6} {:>8} {:>12} {:>12}", "σ", "s", "d(vol, φ_*vol)", "residual");
    for sigma in [0.25, 1.0, 4.0] {
        let res = solve_inexact_compatible(&plan, &target, sigma, 40)?;
        let (moved, _) = pushforward_density(&res.transport_map(), &vol)?;
        println!(
            "{sigma:>6} {:>8.4} {:>12.4} {:>12.2e}",
            inexact_stop_time(sigma)?,
            fisher_rao_distance(&vol, &moved)? / full,
            res.residual
        );
    }
    Ok(())
}
