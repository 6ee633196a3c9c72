//! Discrete diffeomorphisms of the torus.
//!
//! A [`Warp`] stores `φ(x) = x + d(x)` and `φ⁻¹(x) = x + e(x)` through the
//! periodic displacements `d` and `e`, plus a tracked inverse Jacobian
//! `|Dφ⁻¹|`. Forward and inverse maps are accumulated independently by the
//! algorithms that build warps; [`Warp::consistency_error`] measures how far
//! they have drifted apart.

use rayon::prelude::*;

use crate::error::{OitError, Result};
use crate::grid::{normalize_density, Density, Grid, ScalarField, VectorField};
use crate::interp;

/// Which of the two maps of a warp to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A diffeomorphism and its inverse, sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Warp {
    fwd: VectorField,
    inv: VectorField,
    inv_jac: ScalarField,
}

impl Warp {
    pub fn identity(grid: Grid) -> Self {
        Self {
            fwd: VectorField::zeros(grid),
            inv: VectorField::zeros(grid),
            inv_jac: ScalarField::constant(grid, 1.0),
        }
    }

    /// Builds a warp from displacements; `|Dφ⁻¹|` is computed from `inv`.
    pub fn from_displacements(fwd: VectorField, inv: VectorField) -> Result<Self> {
        fwd.grid().check_same(inv.grid())?;
        let inv_jac = displacement_jacobian(&inv);
        Ok(Self { fwd, inv, inv_jac })
    }

    /// Builds a warp with a caller-tracked inverse Jacobian.
    pub fn from_parts(fwd: VectorField, inv: VectorField, inv_jac: ScalarField) -> Result<Self> {
        fwd.grid().check_same(inv.grid())?;
        fwd.grid().check_same(inv_jac.grid())?;
        Ok(Self { fwd, inv, inv_jac })
    }

    /// Rigid translation `x ↦ x + (a, b)`.
    pub fn translation(grid: Grid, a: f64, b: f64) -> Self {
        Self {
            fwd: VectorField::constant(grid, a, b),
            inv: VectorField::constant(grid, -a, -b),
            inv_jac: ScalarField::constant(grid, 1.0),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.fwd.grid()
    }

    pub fn forward_displacement(&self) -> &VectorField {
        &self.fwd
    }

    pub fn inverse_displacement(&self) -> &VectorField {
        &self.inv
    }

    pub fn inverse_jacobian(&self) -> &ScalarField {
        &self.inv_jac
    }

    pub fn displacement(&self, dir: Direction) -> &VectorField {
        match dir {
            Direction::Forward => &self.fwd,
            Direction::Inverse => &self.inv,
        }
    }

    /// Replaces the tracked inverse Jacobian.
    pub fn with_inverse_jacobian(mut self, inv_jac: ScalarField) -> Result<Self> {
        self.grid().check_same(inv_jac.grid())?;
        self.inv_jac = inv_jac;
        Ok(self)
    }

    /// The inverse warp: maps swapped, Jacobian recomputed.
    pub fn inverse(&self) -> Self {
        let inv_jac = displacement_jacobian(&self.fwd);
        Self {
            fwd: self.inv.clone(),
            inv: self.fwd.clone(),
            inv_jac,
        }
    }

    /// Image of one point, wrapped to the fundamental domain.
    pub fn map_point(&self, dir: Direction, x: f64, y: f64) -> (f64, f64) {
        let d = self.displacement(dir);
        let g = self.grid();
        g.wrap(x + interp::sample(&d.x, x, y), y + interp::sample(&d.y, x, y))
    }

    /// `sup_x |φ(φ⁻¹(x)) − x|`, measured on the torus.
    pub fn consistency_error(&self) -> f64 {
        let g = *self.grid();
        let (lx, ly) = (g.lx(), g.ly());
        (0..g.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % g.nx(), k / g.nx());
                let (x, y) = g.coords(i, j);
                let px = x + self.inv.x.values()[k];
                let py = y + self.inv.y.values()[k];
                let qx = px + interp::sample(&self.fwd.x, px, py);
                let qy = py + interp::sample(&self.fwd.y, px, py);
                let ex = periodic_diff(qx - x, lx);
                let ey = periodic_diff(qy - y, ly);
                ex.hypot(ey)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest displacement magnitude of either map.
    pub fn max_displacement(&self) -> f64 {
        self.fwd.max_norm().max(self.inv.max_norm())
    }
}

pub(crate) fn periodic_diff(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// Evaluates `f ∘ φ` (or `f ∘ φ⁻¹`) by bicubic interpolation.
pub fn pullback(w: &Warp, f: &ScalarField, dir: Direction) -> Result<ScalarField> {
    w.grid().check_same(f.grid())?;
    Ok(compose_field(f, w.displacement(dir)))
}

/// `f(x + d(x))` at every node.
pub(crate) fn compose_field(f: &ScalarField, d: &VectorField) -> ScalarField {
    let g = *f.grid();
    let nx = g.nx();
    let (dx, dy) = (g.dx(), g.dy());
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let k = j * nx + i;
            let u = i as f64 + d.x.values()[k] / dx;
            let v = j as f64 + d.y.values()[k] / dy;
            *o = interp::sample_index(f, u, v);
        }
    });
    ScalarField::from_raw(g, out)
}

/// Displacement of `outer ∘ inner` given the displacements of both maps.
fn compose_displacements(outer: &VectorField, inner: &VectorField) -> VectorField {
    let g = *outer.grid();
    let nx = g.nx();
    let (dx, dy) = (g.dx(), g.dy());
    let mut ox = vec![0.0; g.len()];
    let mut oy = vec![0.0; g.len()];
    ox.par_chunks_mut(nx)
        .zip(oy.par_chunks_mut(nx))
        .enumerate()
        .for_each(|(j, (rx, ry))| {
            for i in 0..nx {
                let k = j * nx + i;
                let (ix, iy) = (inner.x.values()[k], inner.y.values()[k]);
                let u = i as f64 + ix / dx;
                let v = j as f64 + iy / dy;
                rx[i] = ix + interp::sample_index(&outer.x, u, v);
                ry[i] = iy + interp::sample_index(&outer.y, u, v);
            }
        });
    VectorField {
        x: ScalarField::from_raw(g, ox),
        y: ScalarField::from_raw(g, oy),
    }
}

/// Scheme used to approximate the flow of a vector field over one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepScheme {
    /// `ψ = id + εv`, `ψ⁻¹ = id − εv`.
    #[default]
    Euler,
    /// Two-substep midpoint rule, second order in `ε`.
    Midpoint,
}

/// Criterion deciding whether an increment `id + εv` is acceptable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepGuard {
    /// `ε‖v‖∞ < min(dx, dy)`: no point moves by a full grid spacing.
    #[default]
    Spacing,
    /// `ε·sup‖Dv‖_F < 1`: the increment is a contraction perturbation of the
    /// identity and therefore invertible, whatever the displacement size.
    Lipschitz,
}

/// Checks one increment against `guard`.
pub fn check_step(v: &VectorField, eps: f64, guard: StepGuard) -> Result<()> {
    let (displacement, limit) = match guard {
        StepGuard::Spacing => (eps.abs() * v.max_norm(), v.grid().min_spacing()),
        StepGuard::Lipschitz => (eps.abs() * max_frobenius(v), 1.0),
    };
    if displacement.is_finite() && displacement < limit {
        Ok(())
    } else {
        Err(OitError::StepTooLarge { displacement, limit })
    }
}

fn max_frobenius(v: &VectorField) -> f64 {
    let a = central_diff(&v.x, true);
    let b = central_diff(&v.x, false);
    let c = central_diff(&v.y, true);
    let d = central_diff(&v.y, false);
    (0..a.values().len())
        .map(|k| {
            let (p, q, r, s) = (a.values()[k], b.values()[k], c.values()[k], d.values()[k]);
            (p * p + q * q + r * r + s * s).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Approximates `exp(εv)` and `exp(−εv)` by increments of size `ε`, with the
/// default [`StepGuard::Spacing`] guard.
///
/// The returned warp holds `ψ` as its forward map and `ψ⁻¹` as its inverse.
pub fn exp_step(v: &VectorField, eps: f64, scheme: StepScheme) -> Result<Warp> {
    exp_step_guarded(v, eps, scheme, StepGuard::Spacing)
}

pub fn exp_step_guarded(v: &VectorField, eps: f64, scheme: StepScheme, guard: StepGuard) -> Result<Warp> {
    check_step(v, eps, guard)?;
    let (fwd, inv) = match scheme {
        StepScheme::Euler => (v.scale(eps), v.scale(-eps)),
        StepScheme::Midpoint => {
            let half_f = v.scale(0.5 * eps);
            let half_b = v.scale(-0.5 * eps);
            let mid_f = VectorField {
                x: compose_field(&v.x, &half_f),
                y: compose_field(&v.y, &half_f),
            };
            let mid_b = VectorField {
                x: compose_field(&v.x, &half_b),
                y: compose_field(&v.y, &half_b),
            };
            (mid_f.scale(eps), mid_b.scale(-eps))
        }
    };
    let inv_jac = displacement_jacobian(&inv);
    Ok(Warp { fwd, inv, inv_jac })
}

/// `outer ∘ inner`; the inverse is `inner⁻¹ ∘ outer⁻¹`, and `|Dφ⁻¹|` is
/// recomputed from the composed inverse displacement.
pub fn compose(outer: &Warp, inner: &Warp) -> Result<Warp> {
    let (fwd, inv) = compose_maps(outer, inner)?;
    let inv_jac = displacement_jacobian(&inv);
    Ok(Warp { fwd, inv, inv_jac })
}

/// `outer ∘ inner` with a tracked inverse Jacobian supplied by the caller.
pub fn compose_tracked(outer: &Warp, inner: &Warp, inv_jac: ScalarField) -> Result<Warp> {
    let (fwd, inv) = compose_maps(outer, inner)?;
    Warp::from_parts(fwd, inv, inv_jac)
}

pub(crate) fn compose_maps(outer: &Warp, inner: &Warp) -> Result<(VectorField, VectorField)> {
    outer.grid().check_same(inner.grid())?;
    let fwd = compose_displacements(&outer.fwd, &inner.fwd);
    let inv = compose_displacements(&inner.inv, &outer.inv);
    Ok((fwd, inv))
}

/// Fourth-order central difference of a periodic field along one axis.
pub(crate) fn central_diff(f: &ScalarField, axis_x: bool) -> ScalarField {
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let h = if axis_x { g.dx() } else { g.dy() };
    let v = f.values();
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            let at = |s: isize| {
                if axis_x {
                    let ii = (i as isize + s).rem_euclid(nx as isize) as usize;
                    v[j * nx + ii]
                } else {
                    let jj = (j as isize + s).rem_euclid(ny as isize) as usize;
                    v[jj * nx + i]
                }
            };
            *o = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
        }
    });
    ScalarField::from_raw(g, out)
}

/// `det(I + Dd)` for a periodic displacement `d`.
pub fn displacement_jacobian(d: &VectorField) -> ScalarField {
    let uxx = central_diff(&d.x, true);
    let uxy = central_diff(&d.x, false);
    let uyx = central_diff(&d.y, true);
    let uyy = central_diff(&d.y, false);
    let vals = uxx
        .values()
        .iter()
        .zip(uxy.values())
        .zip(uyx.values().iter().zip(uyy.values()))
        .map(|((a, b), (c, e))| (1.0 + a) * (1.0 + e) - b * c)
        .collect();
    ScalarField::from_raw(*d.grid(), vals)
}

/// Jacobian determinant of `φ` or `φ⁻¹` from the stored displacements.
pub fn jacobian_det(w: &Warp, dir: Direction) -> ScalarField {
    displacement_jacobian(w.displacement(dir))
}

/// Diagnostics of a pushforward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PushforwardReport {
    /// Factor applied to restore mass `vol(M)`; 1 for an exact transform.
    pub renormalization: f64,
    /// Minimum of the tracked `|Dφ⁻¹|`; nonpositive values signal folding.
    pub min_jacobian: f64,
}

/// `φ_* μ` with intensity `|Dφ⁻¹|·(I ∘ φ⁻¹)`, renormalized to mass `vol(M)`.
pub fn pushforward_density(w: &Warp, mu: &Density) -> Result<(Density, PushforwardReport)> {
    let pulled = pullback(w, mu.intensity(), Direction::Inverse)?;
    let raw = pulled.zip_map(w.inverse_jacobian(), |a, b| a * b);
    let vol = raw.grid().total_volume();
    let mass = crate::grid::integrate(&raw);
    let report = PushforwardReport {
        renormalization: vol / mass,
        min_jacobian: w.inverse_jacobian().min(),
    };
    // interpolation overshoot can produce tiny negatives near zero pixels
    let clipped = raw.map(|v| v.max(0.0));
    let strict = mu.is_strict() && clipped.min() > 0.0;
    Ok((normalize_density(&clipped, strict)?, report))
}

/// Maps points through `φ`, wrapping into `[0, Lx) × [0, Ly)`.
pub fn transform_points(w: &Warp, pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    pts.par_iter()
        .map(|&(x, y)| w.map_point(Direction::Forward, x, y))
        .collect()
}
