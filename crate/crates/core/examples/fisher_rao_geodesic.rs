//! Fisher–Rao geometry: the geodesic between two densities stays on the
//! sphere of half-densities, and its length bounds the classical distances.

use oitk::geometry::{fisher_rao_distance, fisher_rao_geodesic, probability_distances};
use oitk::{integrate, normalize_density, Grid, ScalarField};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(128)?;
    let bump = |cx: f64, cy: f64| {
        let raw = ScalarField::from_fn(grid, |x, y| 0.2 + (2.0 * ((x - cx).cos() + (y - cy).cos())).exp());
        normalize_density(&raw, true)
    };
    let mu0 = bump(2.0, 2.0)?;
    let mu1 = bump(4.5, 3.5)?;

    let d = fisher_rao_distance(&mu0, &mu1)?;
    println!("d_F(μ₀, μ₁) = {d:.6}");
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mu = fisher_rao_geodesic(&mu0, &mu1, t)?;
        println!(
            "t = {t:.2}: mass {:.10}, d_F(μ₀, μ(t))/d = {:.6}",
            integrate(mu.intensity()) / grid.total_volume(),
            fisher_rao_distance(&mu0, &mu)? / d
        );
    }

    let p = probability_distances(&mu0, &mu1)?;
    println!("as probability measures:");
    println!("  Fisher–Rao angle {:.6}", p.fisher_rao);
    println!("  Hellinger        {:.6}", p.hellinger);
    println!("  total variation  {:.6}", p.tv);
    println!("  KL               {:.6}", p.kl);
    println!("  χ²               {:.6}", p.chi2);
    Ok(())
}
