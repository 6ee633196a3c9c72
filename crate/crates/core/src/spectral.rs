//! Fourier-diagonalized differential operators on the flat torus.
//!
//! Every operator is a multiplier on the 2-D discrete Fourier transform.
//! First derivatives zero the Nyquist modes so that gradients of real fields
//! stay real; the Laplacian keeps them, so its symbol `−(kx² + ky²)` vanishes
//! only on the `(0, 0)` mode. On band-limited fields (no Nyquist content) the
//! two conventions agree and `laplacian = divergence ∘ gradient` holds to
//! rounding.
//!
//! The inertia operator of the information metric acts componentwise:
//! `A u = Δu + λ·ξ(u)` where `ξ(u)` is the projection onto the constant
//! fields, which span the harmonic vector fields of the flat torus.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{OitError, Result};
use crate::grid::{Grid, ScalarField, VectorField};

type C64 = Complex<f64>;

/// Weight `λ > 0` of the harmonic part in the information metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaConfig {
    lambda: f64,
}

impl InertiaConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(OitError::InvalidParameter(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for InertiaConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Cached FFT plans and wavenumbers for one grid.
///
/// Immutable after construction; scratch space is allocated per call so a
/// plan can be shared between threads.
#[derive(Clone)]
pub struct SpectralPlan {
    grid: Grid,
    /// Signed wavenumbers `2π m̂ / L`, Nyquist included (even derivatives).
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Same with the Nyquist entry zeroed (odd derivatives).
    kx_odd: Vec<f64>,
    ky_odd: Vec<f64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("grid", &self.grid).finish()
    }
}

fn wavenumbers(n: usize, period: f64) -> (Vec<f64>, Vec<f64>) {
    let scale = std::f64::consts::TAU / period;
    let full: Vec<f64> = (0..n)
        .map(|m| {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            signed * scale
        })
        .collect();
    let mut odd = full.clone();
    odd[n / 2] = 0.0;
    (full, odd)
}

impl SpectralPlan {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let (kx, kx_odd) = wavenumbers(grid.nx(), grid.lx());
        let (ky, ky_odd) = wavenumbers(grid.ny(), grid.ly());
        Self {
            grid,
            kx,
            ky,
            kx_odd,
            ky_odd,
            fwd_x: planner.plan_fft_forward(grid.nx()),
            inv_x: planner.plan_fft_inverse(grid.nx()),
            fwd_y: planner.plan_fft_forward(grid.ny()),
            inv_y: planner.plan_fft_inverse(grid.ny()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Laplacian symbol `−(kx² + ky²)` at mode `(mx, my)`.
    pub fn laplacian_symbol(&self, mx: usize, my: usize) -> f64 {
        -(self.kx[mx] * self.kx[mx] + self.ky[my] * self.ky[my])
    }

    fn transform(&self, data: &mut [C64], fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        data.par_chunks_mut(nx).for_each(|row| {
            let mut scratch = vec![C64::default(); fx.get_inplace_scratch_len()];
            fx.process_with_scratch(row, &mut scratch);
        });
        let mut t = transpose(data, nx, ny);
        t.par_chunks_mut(ny).for_each(|col| {
            let mut scratch = vec![C64::default(); fy.get_inplace_scratch_len()];
            fy.process_with_scratch(col, &mut scratch);
        });
        let back = transpose(&t, ny, nx);
        data.copy_from_slice(&back);
    }

    fn forward(&self, f: &ScalarField) -> Vec<C64> {
        debug_assert_eq!(f.grid(), &self.grid);
        let mut data: Vec<C64> = f.values().iter().map(|&v| C64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.fwd_x, &self.fwd_y);
        data
    }

    fn inverse(&self, mut data: Vec<C64>) -> ScalarField {
        self.transform(&mut data, &self.inv_x, &self.inv_y);
        let norm = 1.0 / self.grid.len() as f64;
        ScalarField::from_raw(self.grid, data.into_iter().map(|c| c.re * norm).collect())
    }

    /// Applies a Fourier multiplier `symbol(mx, my)` to a spectrum.
    fn multiply(&self, spec: &[C64], symbol: impl Fn(usize, usize) -> C64 + Sync) -> Vec<C64> {
        let nx = self.grid.nx();
        spec.par_chunks(nx)
            .enumerate()
            .flat_map_iter(|(my, row)| {
                let symbol = &symbol;
                row.iter().enumerate().map(move |(mx, &c)| c * symbol(mx, my))
            })
            .collect()
    }

    /// Spectral `∂x f`.
    pub fn partial_x(&self, f: &ScalarField) -> ScalarField {
        let spec = self.forward(f);
        self.inverse(self.multiply(&spec, |mx, _| C64::new(0.0, self.kx_odd[mx])))
    }

    /// Spectral `∂y f`.
    pub fn partial_y(&self, f: &ScalarField) -> ScalarField {
        let spec = self.forward(f);
        self.inverse(self.multiply(&spec, |_, my| C64::new(0.0, self.ky_odd[my])))
    }

    pub fn gradient(&self, f: &ScalarField) -> VectorField {
        let spec = self.forward(f);
        let gx = self.inverse(self.multiply(&spec, |mx, _| C64::new(0.0, self.kx_odd[mx])));
        let gy = self.inverse(self.multiply(&spec, |_, my| C64::new(0.0, self.ky_odd[my])));
        VectorField { x: gx, y: gy }
    }

    pub fn divergence(&self, v: &VectorField) -> ScalarField {
        let sx = self.forward(&v.x);
        let sy = self.forward(&v.y);
        let nx = self.grid.nx();
        let spec: Vec<C64> = sx
            .iter()
            .zip(&sy)
            .enumerate()
            .map(|(k, (a, b))| {
                let (mx, my) = (k % nx, k / nx);
                a * C64::new(0.0, self.kx_odd[mx]) + b * C64::new(0.0, self.ky_odd[my])
            })
            .collect();
        self.inverse(spec)
    }

    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        let spec = self.forward(f);
        self.inverse(self.multiply(&spec, |mx, my| C64::new(self.laplacian_symbol(mx, my), 0.0)))
    }

    /// Heat-kernel smoothing `exp(s²Δ/2) f`, a Gaussian blur of width `s`.
    pub fn gaussian_blur(&self, f: &ScalarField, s: f64) -> ScalarField {
        let spec = self.forward(f);
        let out = self.multiply(&spec, |mx, my| {
            C64::new((0.5 * s * s * self.laplacian_symbol(mx, my)).exp(), 0.0)
        });
        self.inverse(out)
    }

    /// Solves `Δf = rhs − mean(rhs)` with `mean(f) = 0`.
    pub fn solve_poisson(&self, rhs: &ScalarField) -> ScalarField {
        self.solve_poisson_with_mean(rhs).0
    }

    /// Like [`solve_poisson`](Self::solve_poisson), also returning the mean
    /// of `rhs` that was projected away.
    pub fn solve_poisson_with_mean(&self, rhs: &ScalarField) -> (ScalarField, f64) {
        let mean = rhs.mean();
        let spec = self.forward(rhs);
        let sol = self.multiply(&spec, |mx, my| {
            if mx == 0 && my == 0 {
                C64::default()
            } else {
                C64::new(1.0 / self.laplacian_symbol(mx, my), 0.0)
            }
        });
        let mut f = self.inverse(sol);
        // the zero mode is exactly zero in the spectrum; remove the rounding
        // residue so the returned field has zero mean to the last bit we can
        let m = f.mean();
        f.values_mut().iter_mut().for_each(|v| *v -= m);
        (f, mean)
    }

    fn vector_laplacian(&self, u: &VectorField) -> VectorField {
        VectorField {
            x: self.laplacian(&u.x),
            y: self.laplacian(&u.y),
        }
    }

    fn vector_poisson(&self, w: &VectorField) -> VectorField {
        VectorField {
            x: self.solve_poisson(&w.x),
            y: self.solve_poisson(&w.y),
        }
    }

    /// `A u = Δu + λ ξ(u)`.
    pub fn inertia_apply(&self, u: &VectorField, cfg: &InertiaConfig) -> VectorField {
        let xi = harmonic_mean_part(u);
        self.vector_laplacian(u).add(&xi.scale(cfg.lambda))
    }

    /// `A⁻¹(w + ξ) = Δ⁻¹ w + ξ / λ`.
    pub fn inertia_inverse(&self, m: &VectorField, cfg: &InertiaConfig) -> VectorField {
        let xi = harmonic_mean_part(m);
        let w = m.sub(&xi);
        self.vector_poisson(&w).add(&xi.scale(1.0 / cfg.lambda))
    }

    /// Positive-definite form of the inertia operator, `−Δu + λ ξ(u)`.
    ///
    /// The information metric is `G(u, v) = ⟨metric_apply(u), v⟩_{L²}`; with
    /// the sign convention `Δ = div grad` this is the operator that makes
    /// `G` positive, and its inverse turns a momentum into a gradient
    /// direction.
    pub fn metric_apply(&self, u: &VectorField, cfg: &InertiaConfig) -> VectorField {
        let xi = harmonic_mean_part(u);
        self.vector_laplacian(u).scale(-1.0).add(&xi.scale(cfg.lambda))
    }

    /// Inverse of [`metric_apply`](Self::metric_apply): `−Δ⁻¹ w + ξ / λ`.
    pub fn metric_inverse(&self, m: &VectorField, cfg: &InertiaConfig) -> VectorField {
        let xi = harmonic_mean_part(m);
        let w = m.sub(&xi);
        self.vector_poisson(&w).scale(-1.0).add(&xi.scale(1.0 / cfg.lambda))
    }

    /// `G(u, u)` for the information metric.
    pub fn metric_norm_sq(&self, u: &VectorField, cfg: &InertiaConfig) -> f64 {
        self.metric_apply(u, cfg).inner(u)
    }
}

fn transpose(data: &[C64], rows_len: usize, n_rows: usize) -> Vec<C64> {
    // data is n_rows rows of rows_len; output is rows_len rows of n_rows
    let mut out = vec![C64::default(); data.len()];
    out.par_chunks_mut(n_rows).enumerate().for_each(|(i, col)| {
        for (j, c) in col.iter_mut().enumerate() {
            *c = data[j * rows_len + i];
        }
    });
    out
}

/// `L²`-orthogonal projection onto constant vector fields.
pub fn harmonic_mean_part(v: &VectorField) -> VectorField {
    VectorField::constant(*v.grid(), v.x.mean(), v.y.mean())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;

    fn plan(n: usize) -> SpectralPlan {
        SpectralPlan::new(Grid::torus(n).unwrap())
    }

    fn max_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn gradient_of_trig_functions() {
        let p = plan(32);
        let g = *p.grid();
        let c = p.gradient(&ScalarField::constant(g, 3.0));
        assert!(c.max_norm() < 1e-12);
        let s = p.gradient(&ScalarField::from_fn(g, |x, _| x.sin()));
        assert!(max_diff(&s.x, &ScalarField::from_fn(g, |x, _| x.cos())) < 1e-12);
        assert!(s.y.max_abs() < 1e-12);
        let f = ScalarField::from_fn(g, |x, y| x.cos() * (2.0 * y).cos());
        let gr = p.gradient(&f);
        let ex = ScalarField::from_fn(g, |x, y| -x.sin() * (2.0 * y).cos());
        let ey = ScalarField::from_fn(g, |x, y| -2.0 * x.cos() * (2.0 * y).sin());
        assert!(max_diff(&gr.x, &ex) < 1e-12);
        assert!(max_diff(&gr.y, &ey) < 1e-12);
    }

    #[test]
    fn divergence_examples() {
        let p = plan(32);
        let g = *p.grid();
        assert!(p.divergence(&VectorField::constant(g, 1.0, -2.0)).max_abs() < 1e-12);
        let d = p.divergence(&p.gradient(&ScalarField::from_fn(g, |x, _| x.sin())));
        assert!(max_diff(&d, &ScalarField::from_fn(g, |x, _| -x.sin())) < 1e-12);
        let rot = VectorField::from_fn(g, |x, y| (-y.sin(), x.sin()));
        assert!(p.divergence(&rot).max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_eigenfunction() {
        let p = plan(16);
        let g = *p.grid();
        let l = p.laplacian(&ScalarField::from_fn(g, |_, y| (2.0 * y).cos()));
        assert!(max_diff(&l, &ScalarField::from_fn(g, |_, y| -4.0 * (2.0 * y).cos())) < 1e-12);
        assert!(p.laplacian(&ScalarField::constant(g, 2.0)).max_abs() < 1e-12);
    }

    #[test]
    fn poisson_examples() {
        let p = plan(32);
        let g = *p.grid();
        let (f, mean) = p.solve_poisson_with_mean(&ScalarField::from_fn(g, |x, _| -x.sin()));
        assert!(max_diff(&f, &ScalarField::from_fn(g, |x, _| x.sin())) < 1e-12);
        assert!(mean.abs() < 1e-14);
        let (f, mean) = p.solve_poisson_with_mean(&ScalarField::constant(g, 5.0));
        assert!(f.max_abs() < 1e-14);
        assert!((mean - 5.0).abs() < 1e-14);
        assert!(integrate(&f).abs() < 1e-14);
    }

    #[test]
    fn harmonic_part_examples() {
        let g = Grid::torus(16).unwrap();
        let c = VectorField::constant(g, 1.5, -0.5);
        assert_eq!(harmonic_mean_part(&c), c);
        let s = VectorField::from_fn(g, |x, _| (x.sin(), 0.0));
        assert!(harmonic_mean_part(&s).max_norm() < 1e-15);
        let v = VectorField::from_fn(g, |x, _| (2.0 + x.sin(), -1.0));
        let h = harmonic_mean_part(&v);
        assert!((h.x.at(0, 0) - 2.0).abs() < 1e-14 && (h.y.at(3, 5) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn inertia_examples() {
        let p = plan(16);
        let g = *p.grid();
        let cfg = InertiaConfig::new(2.0).unwrap();
        let c = VectorField::constant(g, 1.0, 3.0);
        let a = p.inertia_apply(&c, &cfg);
        assert!((a.x.at(2, 2) - 2.0).abs() < 1e-12 && (a.y.at(1, 7) - 6.0).abs() < 1e-12);
        let inv = p.inertia_inverse(&c, &cfg);
        assert!((inv.x.at(0, 0) - 0.5).abs() < 1e-12 && (inv.y.at(0, 0) - 1.5).abs() < 1e-12);

        let one = InertiaConfig::default();
        let m = VectorField::from_fn(g, |x, _| (-x.sin(), 0.0));
        let u = p.inertia_inverse(&m, &one);
        assert!(max_diff(&u.x, &ScalarField::from_fn(g, |x, _| x.sin())) < 1e-12);
        let s = VectorField::from_fn(g, |x, _| (x.sin(), 0.0));
        let au = p.inertia_apply(&s, &one);
        assert!(max_diff(&au.x, &ScalarField::from_fn(g, |x, _| -x.sin())) < 1e-12);
    }

    #[test]
    fn metric_operator_is_positive() {
        let p = plan(16);
        let g = *p.grid();
        let cfg = InertiaConfig::default();
        let u = VectorField::from_fn(g, |x, y| (x.sin() + 0.3, (2.0 * y).cos() - 0.1));
        assert!(p.metric_norm_sq(&u, &cfg) > 0.0);
        let back = p.metric_inverse(&p.metric_apply(&u, &cfg), &cfg);
        assert!(back.sub(&u).max_norm() < 1e-12);
    }

    #[test]
    fn lambda_must_be_positive() {
        assert!(InertiaConfig::new(0.0).is_err());
        assert!(InertiaConfig::new(-1.0).is_err());
    }
}
