//! The discrete flat torus and the fields sampled on it.
//!
//! Values are stored row-major with `x` fastest: the sample at `(i, j)` sits
//! at index `j * nx + i` and represents the point `(i·dx, j·dy)`.

use crate::error::{OitError, Result};

/// Periodic rectangular grid on `[0, Lx) × [0, Ly)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
}

impl Grid {
    /// Builds a grid. Resolutions must be even and at least 4.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 4 || n % 2 != 0 {
                return Err(OitError::InvalidGrid(format!("{name} = {n} must be even and >= 4")));
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(OitError::InvalidGrid(format!("{name} = {l} must be positive")));
            }
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Square `n × n` grid on the `2π`-periodic torus.
    pub fn torus(n: usize) -> Result<Self> {
        Self::new(n, n, std::f64::consts::TAU, std::f64::consts::TAU)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total volume `Lx·Ly` of the torus.
    pub fn total_volume(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx().min(self.dy())
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Physical coordinates of node `(i, j)`.
    #[inline]
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx(), j as f64 * self.dy())
    }

    /// Wraps a point into the fundamental domain.
    pub fn wrap(&self, x: f64, y: f64) -> (f64, f64) {
        (wrap_coord(x, self.lx), wrap_coord(y, self.ly))
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(OitError::GridMismatch)
        }
    }
}

pub(crate) fn wrap_coord(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// A real function sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(OitError::InvalidField(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(OitError::InvalidField(format!("non-finite value at index {k}")));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field without the finiteness scan. Internal producers only.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.coords(i, j);
                values.push(f(x, y));
            }
        }
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Average value over the torus.
    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// `L²` inner product with respect to the flat volume.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A tangent vector field, components in the flat frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self> {
        x.grid().check_same(y.grid())?;
        Ok(Self { x, y })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn constant(grid: Grid, cx: f64, cy: f64) -> Self {
        Self {
            x: ScalarField::constant(grid, cx),
            y: ScalarField::constant(grid, cy),
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self {
            x: ScalarField::from_fn(grid, |x, y| f(x, y).0),
            y: ScalarField::from_fn(grid, |x, y| f(x, y).1),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.x.grid()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            x: self.x.scale(c),
            y: self.y.scale(c),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            x: self.x.zip_map(&other.x, |a, b| a + b),
            y: self.y.zip_map(&other.y, |a, b| a + b),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: self.x.zip_map(&other.x, |a, b| a - b),
            y: self.y.zip_map(&other.y, |a, b| a - b),
        }
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar(&self, s: &ScalarField) -> Self {
        Self {
            x: self.x.zip_map(s, |a, b| a * b),
            y: self.y.zip_map(s, |a, b| a * b),
        }
    }

    /// Largest pointwise Euclidean length.
    pub fn max_norm(&self) -> f64 {
        self.x
            .values()
            .iter()
            .zip(self.y.values())
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.x.inner(&other.x) + self.y.inner(&other.y)
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// Midpoint quadrature `Σ f(i,j)·dx·dy`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.sum() * f.grid().cell_area()
}

/// A density `μ = I·vol` of total mass `vol(M)`, stored by its intensity `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    intensity: ScalarField,
    strict: bool,
}

/// Relative tolerance on the mass invariant.
pub const MASS_TOL: f64 = 1e-10;

impl Density {
    /// Wraps an intensity that already carries mass `vol(M)`.
    pub fn from_intensity(intensity: ScalarField, strict: bool) -> Result<Self> {
        let vol = intensity.grid().total_volume();
        let mass = integrate(&intensity);
        if ((mass - vol) / vol).abs() > MASS_TOL {
            return Err(OitError::InvalidDensity(format!(
                "mass {mass} differs from total volume {vol}"
            )));
        }
        check_sign(&intensity, strict)?;
        Ok(Self { intensity, strict })
    }

    pub(crate) fn from_raw(intensity: ScalarField, strict: bool) -> Self {
        Self { intensity, strict }
    }

    /// The flat volume form itself, `I ≡ 1`.
    pub fn uniform(grid: Grid) -> Self {
        Self::from_raw(ScalarField::constant(grid, 1.0), true)
    }

    pub fn grid(&self) -> &Grid {
        self.intensity.grid()
    }

    pub fn intensity(&self) -> &ScalarField {
        &self.intensity
    }

    pub fn into_intensity(self) -> ScalarField {
        self.intensity
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn mass(&self) -> f64 {
        integrate(&self.intensity)
    }

    /// Requires strict positivity; used by solvers built on Moser's lemma.
    pub fn require_strict(&self) -> Result<()> {
        if self.strict && self.intensity.min() > 0.0 {
            Ok(())
        } else {
            Err(OitError::NotStrict)
        }
    }
}

fn check_sign(f: &ScalarField, strict: bool) -> Result<()> {
    let min = f.min();
    if min < 0.0 {
        return Err(OitError::InvalidDensity(format!("negative value {min}")));
    }
    if strict && min <= 0.0 {
        return Err(OitError::InvalidDensity(
            "strict density requested but zeros are present".into(),
        ));
    }
    Ok(())
}

/// Rescales a nonnegative field to mass `vol(M)`.
pub fn normalize_density(raw: &ScalarField, strict: bool) -> Result<Density> {
    check_sign(raw, strict)?;
    let mass = integrate(raw);
    if !(mass > 0.0) {
        return Err(OitError::InvalidDensity("field has zero mass".into()));
    }
    let vol = raw.grid().total_volume();
    let rel = (mass - vol) / vol;
    // inputs already at machine-exact mass are kept bit-for-bit (idempotence)
    let intensity = if rel.abs() <= 1e-13 {
        raw.clone()
    } else {
        raw.scale(vol / mass)
    };
    Ok(Density { intensity, strict })
}

/// Adds a positive floor to a `[0, 1]` image and normalizes it.
pub fn density_from_image(image: &ScalarField, floor: f64, strict: bool) -> Result<Density> {
    if floor < 0.0 {
        return Err(OitError::InvalidDensity(format!("negative floor {floor}")));
    }
    normalize_density(&image.map(|v| v + floor), strict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn grid_validation() {
        assert!(Grid::new(3, 4, 1.0, 1.0).is_err());
        assert!(Grid::new(2, 4, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 6, 0.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 1.0, -1.0).is_err());
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        assert_eq!(g.total_volume(), 1.0);
    }

    #[test]
    fn grid_spacings() {
        let g = Grid::new(8, 16, TAU, PI).unwrap();
        assert_eq!(g.dx(), TAU / 8.0);
        assert_eq!(g.dy(), PI / 16.0);
        let g = Grid::new(1024, 1024, TAU, TAU).unwrap();
        assert!((g.total_volume() - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn integrate_trig() {
        let g = Grid::torus(64).unwrap();
        let vol = 4.0 * PI * PI;
        assert!((integrate(&ScalarField::constant(g, 1.0)) - vol).abs() < 1e-12);
        assert!(integrate(&ScalarField::from_fn(g, |x, _| x.cos())).abs() < 1e-12);
        let f = ScalarField::from_fn(g, |x, y| 1.0 - 0.8 * x.cos() * (2.0 * y).cos());
        assert!((integrate(&f) - vol).abs() < 1e-12 * vol);
    }

    #[test]
    fn normalize_constants_and_errors() {
        let g = Grid::torus(8).unwrap();
        let d = normalize_density(&ScalarField::constant(g, 7.0), true).unwrap();
        assert!(d.intensity().values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(normalize_density(&ScalarField::zeros(g), false).is_err());
        let mut neg = ScalarField::constant(g, 1.0);
        neg.values_mut()[3] = -0.1;
        assert!(normalize_density(&neg, false).is_err());
        let mut zero = ScalarField::constant(g, 1.0);
        zero.values_mut()[3] = 0.0;
        assert!(normalize_density(&zero, true).is_err());
        assert!(normalize_density(&zero, false).is_ok());
    }

    #[test]
    fn normalize_keeps_normalized_input() {
        let g = Grid::torus(32).unwrap();
        let f = ScalarField::from_fn(g, |x, y| 1.0 - 0.8 * x.cos() * (2.0 * y).cos());
        let d = normalize_density(&f, true).unwrap();
        for (a, b) in d.intensity().values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn image_floor_gives_strict_density() {
        let g = Grid::torus(16).unwrap();
        let img = ScalarField::from_fn(g, |x, _| if x < PI { 1.0 } else { 0.0 });
        let d = density_from_image(&img, 0.2, true).unwrap();
        assert!(d.intensity().min() > 0.0);
        assert!(density_from_image(&img, 0.0, true).is_err());
    }

    #[test]
    fn wrap_is_in_range() {
        assert_eq!(wrap_coord(-1e-20, 1.0), 0.0);
        assert!((wrap_coord(-0.25, 1.0) - 0.75).abs() < 1e-15);
        assert!((wrap_coord(2.5, 1.0) - 0.5).abs() < 1e-15);
    }
}
