//! Procedurally drawn letter images used by the examples and the CLI.
//!
//! Letters are thick strokes, white (1) on black (0), drawn in the unit
//! square and stretched over the grid's fundamental domain with `y` pointing
//! up. [`render`] anti-aliases over one pixel; [`glyph_density`] also blurs
//! over a fixed fraction of the domain, so refining the grid resolves the
//! same image rather than a sharper one. Transport maps between letters with
//! one-pixel edges fold at any practical step count.

use std::f64::consts::PI;

use crate::error::Result;
use crate::grid::{density_from_image, Density, Grid, ScalarField};
use crate::spectral::SpectralPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Glyph {
    J,
    V,
}

impl Glyph {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "J" | "j" => Some(Glyph::J),
            "V" | "v" => Some(Glyph::V),
            _ => None,
        }
    }

    fn polyline(self) -> Vec<(f64, f64)> {
        match self {
            Glyph::J => {
                let mut pts = vec![(0.62, 0.78), (0.62, 0.38)];
                let (cx, cy, r) = (0.47, 0.38, 0.15);
                for k in 1..=24 {
                    let a = -PI * k as f64 / 24.0;
                    pts.push((cx + r * a.cos(), cy + r * a.sin()));
                }
                pts
            }
            Glyph::V => vec![(0.30, 0.78), (0.50, 0.22), (0.70, 0.78)],
        }
    }

    fn extra_strokes(self) -> Vec<[(f64, f64); 2]> {
        match self {
            Glyph::J => vec![[(0.42, 0.78), (0.78, 0.78)]],
            Glyph::V => Vec::new(),
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Blur width of [`glyph_density`] as a fraction of the domain size.
pub const BLUR: f64 = 0.032;

/// Renders `glyph` with stroke half-width `half_width` (unit-square units).
///
/// Pixels are anti-aliased over one grid spacing.
pub fn render(glyph: Glyph, grid: Grid, half_width: f64) -> ScalarField {
    let poly = glyph.polyline();
    let mut segs: Vec<[(f64, f64); 2]> = poly.windows(2).map(|w| [w[0], w[1]]).collect();
    segs.extend(glyph.extra_strokes());
    let pixel = (1.0 / grid.nx() as f64).max(1.0 / grid.ny() as f64);
    ScalarField::from_fn(grid, |x, y| {
        let p = (x / grid.lx(), y / grid.ly());
        let d = segs
            .iter()
            .map(|s| segment_distance(p, s[0], s[1]))
            .fold(f64::INFINITY, f64::min);
        ((half_width - d) / pixel + 0.5).clamp(0.0, 1.0)
    })
}

/// Letter image, blurred by [`BLUR`], with a background floor and
/// normalized to a density.
///
/// A positive `floor` yields a strict density; `floor = 0` gives a density
/// with vanishing background.
pub fn glyph_density(glyph: Glyph, grid: Grid, floor: f64) -> Result<Density> {
    let img = render(glyph, grid, 0.07);
    let s = BLUR * grid.lx().min(grid.ly());
    let img = SpectralPlan::new(grid)
        .gaussian_blur(&img, s)
        .map(|v| v.clamp(0.0, 1.0));
    density_from_image(&img, floor, floor > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letters_are_distinct_images_in_unit_range() {
        let g = Grid::torus(64).unwrap();
        let j = render(Glyph::J, g, 0.07);
        let v = render(Glyph::V, g, 0.07);
        assert!(j.min() == 0.0 && j.max() == 1.0);
        assert!(v.min() == 0.0 && v.max() == 1.0);
        let diff = j.zip_map(&v, |a, b| (a - b).abs()).sum();
        assert!(diff > 50.0);
        // the V's apex is at the bottom centre
        let (i, jj) = (32, (0.25 * 64.0) as usize);
        assert!(v.at(i, jj) > 0.5);
    }

    #[test]
    fn densities_respect_floor() {
        let g = Grid::torus(32).unwrap();
        let d = glyph_density(Glyph::J, g, 0.2).unwrap();
        assert!(d.is_strict());
        let z = glyph_density(Glyph::V, g, 0.0).unwrap();
        assert!(!z.is_strict() && z.intensity().min() == 0.0);
        assert_eq!(Glyph::parse("v"), Some(Glyph::V));
        assert_eq!(Glyph::parse("x"), None);
    }
}
