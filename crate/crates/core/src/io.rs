//! File formats and renders.
//!
//! Raw grids are the canonical interchange: little-endian `f64` in row-major
//! order (`x` fastest, `j = 0` at `y = 0`) next to a JSON sidecar with the
//! same stem holding `{"nx", "ny", "Lx", "Ly"}`. Saving and loading is
//! bit-exact.
//!
//! Images are read as grayscale with white = high density. Image row 0 is
//! the top of the picture and lands on the grid row `y = Ly − dy`; renders
//! use the same orientation, so a loaded image saves back upright.
//!
//! Renders use two fixed colormaps:
//!
//! - [`Colormap::Gray`]: black at 0, white at the given maximum.
//! - [`Colormap::Jacobian`]: white at 1, pink towards 4 and above (expansion),
//!   green towards ¼ and below (compression), on a log scale. Nonpositive
//!   values (folds) are black.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{OitError, Result};
use crate::flow::EnergyTerms;
use crate::grid::{density_from_image, Density, Grid, ScalarField, VectorField};
use crate::warp::Warp;

/// Header of a raw grid file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
}

impl GridHeader {
    pub fn of(grid: &Grid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            lx: grid.lx(),
            ly: grid.ly(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly).map_err(|e| OitError::Input(e.to_string()))
    }
}

/// Order of the blocks in a warp file.
pub const WARP_LAYOUT: [&str; 5] = ["forward_x", "forward_y", "inverse_x", "inverse_y", "inverse_jacobian"];

/// Header of a warp file: the grid plus the block layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpHeader {
    #[serde(flatten)]
    pub grid: GridHeader,
    pub layout: Vec<String>,
    /// Displacements `u` with `φ(x) = x + u(x)`.
    pub convention: String,
}

/// `path` with its extension replaced by `json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn input_err(path: &Path, what: impl std::fmt::Display) -> OitError {
    OitError::Input(format!("{}: {what}", path.display()))
}

fn write_blocks(path: &Path, blocks: &[&[f64]]) -> Result<()> {
    let len = blocks.iter().map(|b| b.len()).sum::<usize>();
    let mut bytes = Vec::with_capacity(len * 8);
    for block in blocks {
        for v in *block {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn read_blocks(path: &Path, block_len: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path)?;
    if bytes.len() != block_len * count * 8 {
        return Err(input_err(
            path,
            format!("expected {} bytes, found {}", block_len * count * 8, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(values.chunks(block_len).map(<[f64]>::to_vec).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| input_err(path, e))
}

/// Writes `field` to `path` and its header to the sidecar.
pub fn save_field(path: &Path, field: &ScalarField) -> Result<()> {
    write_blocks(path, &[field.values()])?;
    write_json(&sidecar_path(path), &GridHeader::of(field.grid()))
}

/// Reads a field written by [`save_field`].
pub fn load_field(path: &Path) -> Result<ScalarField> {
    let header: GridHeader = read_json(&sidecar_path(path))?;
    let grid = header.grid()?;
    let mut blocks = read_blocks(path, grid.len(), 1)?;
    ScalarField::from_values(grid, blocks.remove(0)).map_err(|e| input_err(path, e))
}

/// Writes the forward and inverse displacements and `|Dφ⁻¹|` of `warp`.
pub fn save_warp(path: &Path, warp: &Warp) -> Result<()> {
    let (f, i) = (warp.forward_displacement(), warp.inverse_displacement());
    write_blocks(
        path,
        &[
            f.x.values(),
            f.y.values(),
            i.x.values(),
            i.y.values(),
            warp.inverse_jacobian().values(),
        ],
    )?;
    let header = WarpHeader {
        grid: GridHeader::of(warp.grid()),
        layout: WARP_LAYOUT.iter().map(|s| s.to_string()).collect(),
        convention: "phi(x) = x + u(x)".into(),
    };
    write_json(&sidecar_path(path), &header)
}

/// Reads a warp written by [`save_warp`].
pub fn load_warp(path: &Path) -> Result<Warp> {
    let header: WarpHeader = read_json(&sidecar_path(path))?;
    if header.layout != WARP_LAYOUT {
        return Err(input_err(path, format!("unsupported layout {:?}", header.layout)));
    }
    let grid = header.grid.grid()?;
    let mut blocks = read_blocks(path, grid.len(), WARP_LAYOUT.len())?.into_iter();
    let mut next = || ScalarField::from_values(grid, blocks.next().expect("block count checked"));
    let fwd = VectorField::new(next()?, next()?)?;
    let inv = VectorField::new(next()?, next()?)?;
    Warp::from_parts(fwd, inv, next()?)
}

fn is_raw(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("f64" | "raw" | "bin")
    )
}

/// Reads an image as a `[0, 1]` field; see the module docs for orientation.
///
/// `lx`, `ly` set the physical size of the domain.
pub fn load_image(path: &Path, lx: f64, ly: f64) -> Result<ScalarField> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => OitError::Io(io),
        other => input_err(path, other),
    })?;
    let img = img.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grid = Grid::new(w, h, lx, ly).map_err(|e| input_err(path, e))?;
    let mut values = vec![0.0; grid.len()];
    for (c, r, p) in img.enumerate_pixels() {
        let j = h - 1 - r as usize;
        values[grid.index(c as usize, j)] = p.0[0] as f64 / u16::MAX as f64;
    }
    ScalarField::from_values(grid, values)
}

/// Reads a density from an image or a raw grid, adds `floor` and normalizes.
///
/// Raw grids are taken as nonnegative intensities; images are mapped to
/// `[0, 1]` first and laid on a `2π × 2π` domain.
pub fn load_density(path: &Path, floor: f64, strict: bool) -> Result<Density> {
    let raw = if is_raw(path) {
        load_field(path)?
    } else {
        load_image(path, std::f64::consts::TAU, std::f64::consts::TAU)?
    };
    density_from_image(&raw, floor, strict).map_err(|e| match e {
        OitError::InvalidDensity(m) => input_err(path, m),
        other => other,
    })
}

/// A fixed color scale for renders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Colormap {
    /// Black at 0, white at `max`.
    Gray { max: f64 },
    /// Diverging around 1 for Jacobian determinants.
    Jacobian,
}

const GREEN: [f64; 3] = [27.0, 120.0, 55.0];
const PINK: [f64; 3] = [197.0, 27.0, 125.0];

fn jacobian_color(v: f64) -> [u8; 3] {
    if !(v > 0.0) {
        return [0, 0, 0];
    }
    // ±1 at a factor of 4 either way
    let s = (v.log2() / 2.0).clamp(-1.0, 1.0);
    let end = if s < 0.0 { GREEN } else { PINK };
    let a = s.abs();
    end.map(|c| (255.0 + a * (c - 255.0)).round() as u8)
}

fn gray(v: f64, max: f64) -> u8 {
    if !(max > 0.0) || !v.is_finite() {
        return 0;
    }
    ((v / max).clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save_image<P: image::PixelWithColorType>(path: &Path, img: ImageBuffer<P, Vec<P::Subpixel>>) -> Result<()>
where
    [P::Subpixel]: image::EncodableLayout,
{
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => OitError::Io(io),
            other => OitError::Io(std::io::Error::other(other)),
        })
}

/// Renders `field` to a PNG, top row at `y = Ly − dy`.
pub fn write_heatmap(path: &Path, field: &ScalarField, cmap: Colormap) -> Result<()> {
    let g = field.grid();
    let (w, h) = (g.nx() as u32, g.ny() as u32);
    let at = |c: u32, r: u32| field.at(c as usize, g.ny() - 1 - r as usize);
    match cmap {
        Colormap::Gray { max } => save_image(path, ImageBuffer::from_fn(w, h, |c, r| Luma([gray(at(c, r), max)]))),
        Colormap::Jacobian => save_image(path, ImageBuffer::from_fn(w, h, |c, r| Rgb(jacobian_color(at(c, r))))),
    }
}

/// Energy trace as CSV, one row per accepted iteration.
///
/// Row `k` holds the energy after iteration `k`; `trace[0]` is the starting
/// energy and is not written.
pub fn write_energy_csv(path: &Path, trace: &[EnergyTerms], sigma: f64) -> Result<()> {
    let mut out = String::from("iter,E,sigma_term,mismatch\n");
    for (k, e) in trace.iter().enumerate().skip(1) {
        out.push_str(&format!(
            "{k},{:.17e},{:.17e},{:.17e}\n",
            e.total,
            sigma * e.volume,
            e.mismatch
        ));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
