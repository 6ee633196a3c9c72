//! Optimal information transport from the uniform density to a cosine
//! density, with the map and its Jacobian written to `out/match_exact`.

use std::path::Path;

use oitk::io::{save_warp, write_heatmap, Colormap};
use oitk::lifting::solve_oit;
use oitk::warp::{jacobian_det, pushforward_density, Direction};
use oitk::{normalize_density, Density, Grid, ScalarField, SpectralPlan};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(256)?;
    let plan = SpectralPlan::new(grid);
    let target = normalize_density(
        &ScalarField::from_fn(grid, |x, y| 1.0 - 0.8 * x.cos() * (2.0 * y).cos()),
        true,
    )?;

    for n in [20, 40, 80] {
        let res = solve_oit(&plan, &target, n)?;
        println!("N = {n:>2}: residual {:.3e}", res.residual);
    }

    let res = solve_oit(&plan, &target, 20)?;
    let map = res.transport_map();
    let (pushed, _) = pushforward_density(&map, &Density::uniform(grid))?;
    let err = pushed.intensity().zip_map(target.intensity(), |a, b| a - b).max_abs();
    println!(
        "sup |φ_* vol − μ| = {err:.3e}, largest displacement {:.3}",
        map.max_displacement()
    );

    let out = Path::new("out/match_exact");
    std::fs::create_dir_all(out)?;
    save_warp(&out.join("warp.f64"), &map)?;
    write_heatmap(
        &out.join("jacobian.png"),
        &jacobian_det(&map, Direction::Forward),
        Colormap::Jacobian,
    )?;
    println!("wrote {}", out.display());
    Ok(())
}
