//! Gradient-flow registration of the letter J onto the letter V.
//!
//! A small σ lets the flow change volume freely and fit the target closely;
//! a large one keeps the Jacobian near 1.

use std::path::Path;

use oitk::flow::{run_flow_with, FlowParams};
use oitk::glyphs::{glyph_density, Glyph};
use oitk::io::{write_energy_csv, write_heatmap, Colormap};
use oitk::warp::pushforward_density;
use oitk::{Grid, SpectralPlan};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(128)?;
    let plan = SpectralPlan::new(grid);
    let j = glyph_density(Glyph::J, grid, 0.2)?;
    let v = glyph_density(Glyph::V, grid, 0.2)?;
    let out = Path::new("out/register_letters");
    std::fs::create_dir_all(out)?;

    for sigma in [0.05, 5.0] {
        let params = FlowParams {
            max_iter: 150,
            rel_tol: 0.0,
            ..FlowParams::new(sigma, 0.2)?
        };
        let mut last = 0;
        let (state, report) = run_flow_with(&plan, &j, &v, &params, |s| {
            if s.iteration % 50 == 0 && s.iteration != last {
                last = s.iteration;
                println!(
                    "  σ = {sigma}: iteration {last}, E = {:.5}",
                    s.energy_trace.last().unwrap().total
                );
            }
        })?;
        let (warped, _) = pushforward_density(&state.warp, &j)?;
        let mismatch = |a: &oitk::Density| a.intensity().zip_map(v.intensity(), |p, q| p - q).norm_l2();
        println!(
            "σ = {sigma}: L² mismatch {:.3} → {:.3}, smallest Jacobian {:.2}, final step {}",
            mismatch(&j),
            mismatch(&warped),
            report.min_jacobian,
            report.eps
        );
        let tag = if sigma < 1.0 { "soft" } else { "stiff" };
        write_energy_csv(&out.join(format!("energy_{tag}.csv")), &state.energy_trace, sigma)?;
        let max = warped.intensity().max();
        write_heatmap(
            &out.join(format!("warped_{tag}.png")),
            warped.intensity(),
            Colormap::Gray { max },
        )?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
