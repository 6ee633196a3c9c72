//! On the circle the transport problem is solved by cumulative distribution
//! functions; a y-independent target on the torus reduces to it.

use oitk::lifting::solve_oit;
use oitk::oracle1d::{cdf_transport_1d, cdf_transport_1d_offset, fit_mass_offset, Density1D};
use oitk::{normalize_density, Grid, ScalarField, SpectralPlan};

fn main() -> oitk::Result<()> {
    let profile = |x: f64| 1.0 - 0.5 * (2.0 * x).cos() + 0.2 * x.cos();
    let n = 128;
    let grid = Grid::torus(n)?;
    let length = grid.lx();
    let d0 = Density1D::uniform(n, length);
    let d1 = Density1D::from_fn(n, length, profile)?;

    let cdf = cdf_transport_1d(&d0, &d1)?;
    println!("CDF map residual {:.2e}", cdf.matching_residual(&d0, &d1));

    let plan = SpectralPlan::new(grid);
    let mu1 = normalize_density(&ScalarField::from_fn(grid, |x, _| profile(x)), true)?;
    let map = solve_oit(&plan, &mu1, 160)?.transport_map();
    let disp = map.forward_displacement();
    let row: Vec<f64> = (0..n).map(|i| i as f64 * grid.dx() + disp.x.at(i, n / 2)).collect();

    // maps between circle densities are only unique up to a mass offset
    let c = fit_mass_offset(&d0, &d1, &row)?;
    let oracle = cdf_transport_1d_offset(&d0, &d1, c)?;
    let err = row
        .iter()
        .zip(oracle.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("torus row vs oracle (offset {c:.1e}): sup error {err:.2e}");
    println!("largest y-displacement {:.1e}", disp.y.max_abs());
    Ok(())
}
