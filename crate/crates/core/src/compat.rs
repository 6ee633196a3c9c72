//! Metrics compatible with a density and the lifts built on them.
//!
//! A metric `h` is compatible with `μ` when its volume form is `μ`. Lifting a
//! path that starts at `μ₀` with a metric compatible with `μ₀` yields warps
//! with `φ(t)^* μ₀ = μ(t)`, so two arbitrary densities can be matched without
//! going through the uniform one.
//!
//! Two constructions are provided. The conformal metric `h = I·g` has
//! `Δ_h = Δ/I` and `grad_h = grad/I`, so its Poisson problem is a single flat
//! solve. The flat compatible metric is the push-forward of `g` by the
//! optimal information transport map from `vol` to `μ`; its operators are
//! flat operators conjugated by that map.

use crate::error::{OitError, Result};
use crate::geometry::fisher_rao_geodesic;
use crate::grid::{integrate, Density, ScalarField, VectorField};
use crate::lifting::{
    lift_with_solver, matching_residual, solve_oit_with, DensityPath, FisherRaoPath, LiftOptions, LiftResult,
    VelocitySolver,
};
use crate::spectral::SpectralPlan;
use crate::warp::{central_diff, compose, compose_field, StepScheme, Warp};

/// The conformal metric `h = I·g` on the two-dimensional torus.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalMetric {
    factor: ScalarField,
}

impl ConformalMetric {
    /// Metric with conformal factor `factor`, which must be positive.
    pub fn new(factor: ScalarField) -> Result<Self> {
        if !factor.is_finite() || !(factor.min() > 0.0) {
            return Err(OitError::NotStrict);
        }
        Ok(Self { factor })
    }

    /// The metric whose volume form is `mu`.
    pub fn compatible_with(mu: &Density) -> Result<Self> {
        mu.require_strict()?;
        Self::new(mu.intensity().clone())
    }

    /// `I`, which is also the density of `vol_h` against `vol`.
    pub fn factor(&self) -> &ScalarField {
        &self.factor
    }

    /// `grad_h f = grad f / I`.
    pub fn gradient(&self, plan: &SpectralPlan, f: &ScalarField) -> VectorField {
        let inv = self.factor.map(f64::recip);
        plan.gradient(f).mul_scalar(&inv)
    }

    /// `Δ_h f = Δf / I`.
    pub fn laplacian(&self, plan: &SpectralPlan, f: &ScalarField) -> ScalarField {
        plan.laplacian(f).zip_map(&self.factor, |l, i| l / i)
    }

    /// `h(u, w) = I·⟨u, w⟩`, pointwise.
    pub fn inner(&self, u: &VectorField, w: &VectorField) -> ScalarField {
        let dot =
            u.x.zip_map(&w.x, |a, b| a * b)
                .zip_map(&u.y.zip_map(&w.y, |a, b| a * b), |a, b| a + b);
        dot.zip_map(&self.factor, |d, i| d * i)
    }

    /// Mean of `f` against `vol_h`.
    pub fn weighted_mean(&self, f: &ScalarField) -> f64 {
        integrate(&f.zip_map(&self.factor, |a, b| a * b)) / integrate(&self.factor)
    }

    /// Solves `Δ_h f = rhs − ⟨rhs⟩_h`, returning the zero-mean solution.
    pub fn solve_poisson(&self, plan: &SpectralPlan, rhs: &ScalarField) -> ScalarField {
        self.solve_with_mean(plan, rhs).0
    }

    fn solve_with_mean(&self, plan: &SpectralPlan, rhs: &ScalarField) -> (ScalarField, f64, ScalarField) {
        let mean = self.weighted_mean(rhs);
        let centered = rhs.map(|v| v - mean);
        let source = centered.zip_map(&self.factor, |a, b| a * b);
        (plan.solve_poisson(&source), mean, centered)
    }
}

struct ConformalSolver<'a> {
    plan: &'a SpectralPlan,
    metric: &'a ConformalMetric,
}

impl VelocitySolver for ConformalSolver<'_> {
    fn velocity(&self, rhs: &ScalarField) -> (VectorField, f64, f64) {
        let (f, mean, centered) = self.metric.solve_with_mean(self.plan, rhs);
        let norm_sq = integrate(&centered.zip_map(self.metric.factor(), |c, i| c * c * i));
        (self.metric.gradient(self.plan, &f), mean, norm_sq)
    }
}

/// The flat metric `h = φ_* g` compatible with `μ`, where `φ` pushes `vol`
/// forward to `μ`.
#[derive(Debug, Clone)]
pub struct FlatCompatibleMetric {
    map: Warp,
    /// `Dφ ∘ φ⁻¹ = (Dφ⁻¹)⁻¹` at the nodes, row-major.
    push: [ScalarField; 4],
}

impl FlatCompatibleMetric {
    /// Wraps a map `φ` with `φ_* vol = μ`.
    pub fn new(map: Warp) -> Result<Self> {
        let d = map.inverse_displacement();
        let (dx, dy) = (central_diff(&d.x, true), central_diff(&d.x, false));
        let (ex, ey) = (central_diff(&d.y, true), central_diff(&d.y, false));
        let g = *map.grid();
        let mut push: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(g.len()));
        for k in 0..g.len() {
            let (a, b) = (1.0 + dx.values()[k], dy.values()[k]);
            let (c, e) = (ex.values()[k], 1.0 + ey.values()[k]);
            let det = a * e - b * c;
            if !(det > 0.0) {
                return Err(OitError::Folded {
                    min_jacobian: det,
                    iteration: 0,
                });
            }
            push[0].push(e / det);
            push[1].push(-b / det);
            push[2].push(-c / det);
            push[3].push(a / det);
        }
        let push = push.map(|v| ScalarField::from_values(g, v).expect("sizes match"));
        Ok(Self { map, push })
    }

    /// Builds the metric compatible with `mu` from an `n`-step optimal
    /// information transport solve.
    pub fn compatible_with(plan: &SpectralPlan, mu: &Density, n: usize) -> Result<Self> {
        Self::new(build_flat_metric(plan, mu, n)?)
    }

    /// The map `φ` with `φ_* g = h`.
    pub fn map(&self) -> &Warp {
        &self.map
    }

    /// `F ↦ F ∘ φ`.
    fn pull(&self, f: &ScalarField) -> ScalarField {
        compose_field(f, self.map.forward_displacement())
    }

    /// `F ↦ F ∘ φ⁻¹`.
    fn push_field(&self, f: &ScalarField) -> ScalarField {
        compose_field(f, self.map.inverse_displacement())
    }

    /// `φ_* X = (Dφ · X) ∘ φ⁻¹`.
    fn push_vector(&self, v: &VectorField) -> VectorField {
        let (x, y) = (self.push_field(&v.x), self.push_field(&v.y));
        let p = &self.push;
        let row = |a: &ScalarField, b: &ScalarField| {
            let ax = a.zip_map(&x, |m, u| m * u);
            ax.zip_map(&b.zip_map(&y, |m, u| m * u), |s, t| s + t)
        };
        VectorField {
            x: row(&p[0], &p[1]),
            y: row(&p[2], &p[3]),
        }
    }

    /// `Δ_h F = (Δ(F ∘ φ)) ∘ φ⁻¹`.
    pub fn laplacian(&self, plan: &SpectralPlan, f: &ScalarField) -> ScalarField {
        self.push_field(&plan.laplacian(&self.pull(f)))
    }

    /// `grad_h F = φ_* grad(F ∘ φ)`.
    pub fn gradient(&self, plan: &SpectralPlan, f: &ScalarField) -> VectorField {
        self.push_vector(&plan.gradient(&self.pull(f)))
    }

    /// Solves `Δ_h F = rhs − ⟨rhs⟩_h` by one flat solve in pulled-back
    /// coordinates.
    pub fn solve_poisson(&self, plan: &SpectralPlan, rhs: &ScalarField) -> ScalarField {
        let (f, _) = plan.solve_poisson_with_mean(&self.pull(rhs));
        self.push_field(&f)
    }
}

struct FlatCompatibleSolver<'a> {
    plan: &'a SpectralPlan,
    metric: &'a FlatCompatibleMetric,
}

impl VelocitySolver for FlatCompatibleSolver<'_> {
    fn velocity(&self, rhs: &ScalarField) -> (VectorField, f64, f64) {
        let pulled = self.metric.pull(rhs);
        let (f, mean) = self.plan.solve_poisson_with_mean(&pulled);
        let centered = pulled.map(|v| v - mean);
        let norm_sq = centered.inner(&centered);
        (self.metric.push_vector(&self.plan.gradient(&f)), mean, norm_sq)
    }
}

/// Which compatible metric a lift uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MetricKind {
    #[default]
    Conformal,
    Flat,
}

impl std::str::FromStr for MetricKind {
    type Err = OitError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conformal" => Ok(Self::Conformal),
            "flat" => Ok(Self::Flat),
            other => Err(OitError::InvalidParameter(format!("unknown metric kind `{other}`"))),
        }
    }
}

/// The optimal information transport map `φ` with `φ_* vol = μ`.
///
/// `φ_* g` is a flat metric with volume form `μ`; the defining property is
/// certified by `|Dφ⁻¹| ≈ I` up to the lift residual.
///
/// Conjugation uses both `φ` and `φ⁻¹`, so the lift uses midpoint increments,
/// which keep the two inverse to each other far more tightly than Euler ones.
pub fn build_flat_metric(plan: &SpectralPlan, mu: &Density, n: usize) -> Result<Warp> {
    mu.require_strict()?;
    Ok(solve_oit_with(plan, mu, n, &consistent())?.transport_map())
}

fn consistent() -> LiftOptions {
    LiftOptions {
        scheme: StepScheme::Midpoint,
        ..LiftOptions::default()
    }
}

fn finish(path: &dyn DensityPath, t_end: f64, warp_res: (Warp, LiftResult)) -> Result<LiftResult> {
    let (_, mut res) = warp_res;
    let start = path.density(0.0)?;
    let end = path.density(t_end)?;
    res.residual = matching_residual(&res.warp, &start, &end)?;
    Ok(res)
}

/// Lifts `path` up to `t_end` with the conformal metric compatible with its
/// start `μ₀`, giving `φ(t_end)^* μ₀ ≈ μ(t_end)`.
pub fn lift_path_conformal_to(
    plan: &SpectralPlan,
    path: &dyn DensityPath,
    n: usize,
    t_end: f64,
    opts: &LiftOptions,
) -> Result<LiftResult> {
    plan.grid().check_same(path.grid())?;
    let metric = ConformalMetric::compatible_with(&path.density(0.0)?)?;
    let solver = ConformalSolver { plan, metric: &metric };
    finish(path, t_end, lift_with_solver(path, &solver, n, t_end, opts)?)
}

/// Lifts the whole path with the conformal metric compatible with its start.
pub fn lift_path_conformal(plan: &SpectralPlan, path: &dyn DensityPath, n: usize) -> Result<LiftResult> {
    lift_path_conformal_to(plan, path, n, 1.0, &LiftOptions::default())
}

/// Lifts `path` with a flat metric compatible with its start.
pub fn lift_path_flat_compatible_to(
    plan: &SpectralPlan,
    path: &dyn DensityPath,
    metric: &FlatCompatibleMetric,
    n: usize,
    t_end: f64,
    opts: &LiftOptions,
) -> Result<LiftResult> {
    plan.grid().check_same(path.grid())?;
    plan.grid().check_same(metric.map().grid())?;
    let solver = FlatCompatibleSolver { plan, metric };
    finish(path, t_end, lift_with_solver(path, &solver, n, t_end, opts)?)
}

/// Symmetric matching of two strict densities through their Fisher–Rao
/// midpoint.
///
/// With `μ_½` the midpoint and a metric compatible with it, the half
/// geodesics towards `μ₁` and `μ₀` are lifted to `Φ` and `Ψ` (`n` steps
/// each, midpoint increments). The result `Φ⁻¹ ∘ Ψ` pushes `μ₀` forward to
/// `μ₁`, and swapping the arguments yields its inverse.
pub fn symmetric_match(plan: &SpectralPlan, mu0: &Density, mu1: &Density, n: usize, kind: MetricKind) -> Result<Warp> {
    Ok(symmetric_match_detailed(plan, mu0, mu1, n, kind)?.warp)
}

/// Result of [`symmetric_match_detailed`].
#[derive(Debug, Clone)]
pub struct SymmetricMatch {
    /// Pushes `μ₀` forward to `μ₁`.
    pub warp: Warp,
    /// Residuals of the half lifts towards `μ₁` and `μ₀`.
    pub residuals: [f64; 2],
}

/// [`symmetric_match`] together with the residuals of its two half lifts.
pub fn symmetric_match_detailed(
    plan: &SpectralPlan,
    mu0: &Density,
    mu1: &Density,
    n: usize,
    kind: MetricKind,
) -> Result<SymmetricMatch> {
    mu0.require_strict()?;
    mu1.require_strict()?;
    plan.grid().check_same(mu0.grid())?;
    plan.grid().check_same(mu1.grid())?;
    // rejects antipodal pairs before anything is lifted
    FisherRaoPath::new(mu0, mu1)?;
    let mid = fisher_rao_geodesic(mu0, mu1, 0.5)?;
    let to1 = FisherRaoPath::new(&mid, mu1)?;
    let to0 = FisherRaoPath::new(&mid, mu0)?;
    // the result composes one lift with the inverse of the other
    let opts = consistent();
    let (phi, psi) = match kind {
        MetricKind::Conformal => (
            lift_path_conformal_to(plan, &to1, n, 1.0, &opts)?,
            lift_path_conformal_to(plan, &to0, n, 1.0, &opts)?,
        ),
        MetricKind::Flat => {
            let metric = FlatCompatibleMetric::compatible_with(plan, &mid, n)?;
            (
                lift_path_flat_compatible_to(plan, &to1, &metric, n, 1.0, &opts)?,
                lift_path_flat_compatible_to(plan, &to0, &metric, n, 1.0, &opts)?,
            )
        }
    };
    Ok(SymmetricMatch {
        warp: compose(&phi.warp.inverse(), &psi.warp)?,
        residuals: [phi.residual, psi.residual],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{normalize_density, Grid};
    use crate::lifting::lift_path;

    fn plan(n: usize) -> SpectralPlan {
        SpectralPlan::new(Grid::torus(n).unwrap())
    }

    fn smooth(g: Grid, a: f64, phase: f64) -> Density {
        normalize_density(
            &ScalarField::from_fn(g, |x, y| 1.0 + a * (x + phase).sin() * (y - phase).cos()),
            true,
        )
        .unwrap()
    }

    #[test]
    fn unit_factor_gives_flat_operators() {
        let p = plan(32);
        let g = *p.grid();
        let m = ConformalMetric::compatible_with(&Density::uniform(g)).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (2.0 * x).sin() + (x - y).cos());
        assert!(m.laplacian(&p, &f).zip_map(&p.laplacian(&f), |a, b| a - b).max_abs() < 1e-14);
        let d = m.gradient(&p, &f).sub(&p.gradient(&f));
        assert!(d.max_norm() < 1e-14);
        let s = m.solve_poisson(&p, &f);
        assert!(s.zip_map(&p.solve_poisson(&f), |a, b| a - b).max_abs() < 1e-14);
        assert!(m.gradient(&p, &ScalarField::constant(g, 3.0)).max_norm() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_factor() {
        let g = Grid::torus(8).unwrap();
        assert!(ConformalMetric::new(ScalarField::zeros(g)).is_err());
        assert!("flat".parse::<MetricKind>().unwrap() == MetricKind::Flat);
        assert!("round".parse::<MetricKind>().is_err());
    }

    #[test]
    fn conformal_lift_from_volume_is_the_flat_lift() {
        let p = plan(32);
        let g = *p.grid();
        let path = FisherRaoPath::new(&Density::uniform(g), &smooth(g, 0.4, 0.3)).unwrap();
        let a = lift_path(&p, &path, 10).unwrap();
        let b = lift_path_conformal(&p, &path, 10).unwrap();
        let d = a.warp.forward_displacement().sub(b.warp.forward_displacement());
        assert!(d.max_norm() < 1e-10);
        assert!((a.residual - b.residual).abs() < 1e-10);
    }

    #[test]
    fn symmetric_match_of_equal_densities_is_identity() {
        let p = plan(32);
        let mu = smooth(p.grid().to_owned(), 0.4, 0.3);
        let w = symmetric_match(&p, &mu, &mu, 8, MetricKind::Conformal).unwrap();
        assert!(w.max_displacement() < 1e-12);
    }
}
