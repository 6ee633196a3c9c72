//! Morphing J into V along the lifted Fisher–Rao geodesic, written as a PNG
//! sequence to `out/morph_frames`.

use std::path::Path;

use oitk::compat::lift_path_conformal_to;
use oitk::glyphs::{glyph_density, Glyph};
use oitk::io::{write_heatmap, Colormap};
use oitk::lifting::{FisherRaoPath, LiftOptions};
use oitk::warp::pushforward_density;
use oitk::{Grid, SpectralPlan, Warp};

fn main() -> oitk::Result<()> {
    let grid = Grid::torus(128)?;
    let plan = SpectralPlan::new(grid);
    let j = glyph_density(Glyph::J, grid, 0.2)?;
    let v = glyph_density(Glyph::V, grid, 0.2)?;
    let path = FisherRaoPath::new(&j, &v)?;
    let opts = LiftOptions {
        checkpoint_stride: 4,
        ..LiftOptions::default()
    };
    let res = lift_path_conformal_to(&plan, &path, 40, 1.0, &opts)?;
    println!("residual {:.2e}, {} frames", res.residual, res.checkpoints.len());

    let out = Path::new("out/morph_frames");
    std::fs::create_dir_all(out)?;
    let max = j.intensity().max().max(v.intensity().max());
    write_heatmap(&out.join("frame_000.png"), j.intensity(), Colormap::Gray { max })?;
    for (k, (t, snapshot)) in res.checkpoints.iter().enumerate() {
        // the snapshot is φ(t); its inverse carries J along the path
        let map = Warp::from_displacements(
            snapshot.inverse_displacement().clone(),
            snapshot.forward_displacement().clone(),
        )?;
        let (frame, _) = pushforward_density(&map, &j)?;
        write_heatmap(
            &out.join(format!("frame_{:03}.png", k + 1)),
            frame.intensity(),
            Colormap::Gray { max },
        )?;
        println!("t = {t:.2}: max intensity {:.2}", frame.intensity().max());
    }
    println!("wrote {}", out.display());
    Ok(())
}
