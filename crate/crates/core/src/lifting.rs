//! Horizontal lifting of density paths and the optimal information
//! transport solvers built on it.
//!
//! Given a path `μ(t)` starting at the volume form, the lift is the curve of
//! diffeomorphisms `φ(t)` with `φ(t)^* vol = μ(t)` whose Eulerian velocity is
//! a gradient field at every time:
//!
//! ```text
//! Δ f = (μ̇/μ) ∘ φ⁻¹,   v = grad f,   φ̇ = v ∘ φ.
//! ```
//!
//! Each step solves one Poisson equation and composes a small increment
//! `ψ = id + εv` onto the forward map and `ψ⁻¹ = id − εv` onto the inverse.
//! The optimal information transport map from `vol` to `μ₁` is the inverse of
//! the lift's end point, so `warp.inverse()` pushes `vol` forward to `μ₁`.

use crate::error::{OitError, Result};
use crate::geometry::{fisher_rao_distance, GeodesicPair};
use crate::grid::{Density, Grid, ScalarField, VectorField};
use crate::spectral::{harmonic_mean_part, SpectralPlan};
use crate::warp::{compose_field, compose_maps, displacement_jacobian, exp_step, StepScheme, Warp};

/// A time-parametrized curve of densities with its logarithmic derivative.
pub trait DensityPath: Sync {
    fn grid(&self) -> &Grid;
    /// Density at time `t ∈ [0, 1]`.
    fn density(&self, t: f64) -> Result<Density>;
    /// `μ̇(t)/μ(t)`.
    fn log_derivative(&self, t: f64) -> Result<ScalarField>;
}

/// The Fisher–Rao geodesic between two strict densities.
#[derive(Debug, Clone)]
pub struct FisherRaoPath {
    pair: GeodesicPair,
}

impl FisherRaoPath {
    pub fn new(mu0: &Density, mu1: &Density) -> Result<Self> {
        mu0.require_strict()?;
        mu1.require_strict()?;
        let pair = GeodesicPair::new(mu0, mu1)?;
        if pair.theta >= std::f64::consts::PI - crate::geometry::ANTIPODAL_EPS {
            return Err(OitError::Antipodal { theta: pair.theta });
        }
        Ok(Self { pair })
    }

    /// Angle between the endpoints on the sphere.
    pub fn theta(&self) -> f64 {
        self.pair.theta
    }

    pub fn pair(&self) -> &GeodesicPair {
        &self.pair
    }
}

impl DensityPath for FisherRaoPath {
    fn grid(&self) -> &Grid {
        self.pair.f0.grid()
    }

    fn density(&self, t: f64) -> Result<Density> {
        self.pair.density(t, true)
    }

    fn log_derivative(&self, t: f64) -> Result<ScalarField> {
        self.pair.log_derivative(t)
    }
}

/// The path that stays at one density.
#[derive(Debug, Clone)]
pub struct ConstantPath(pub Density);

impl DensityPath for ConstantPath {
    fn grid(&self) -> &Grid {
        self.0.grid()
    }

    fn density(&self, _t: f64) -> Result<Density> {
        Ok(self.0.clone())
    }

    fn log_derivative(&self, _t: f64) -> Result<ScalarField> {
        Ok(ScalarField::zeros(*self.0.grid()))
    }
}

/// Outcome of a lift.
#[derive(Debug, Clone)]
pub struct LiftResult {
    /// End point `φ` of the lift together with `φ⁻¹` and `|Dφ⁻¹|`.
    pub warp: Warp,
    /// `‖|Dφ| − I_end‖₂ / ‖I_end‖₂`, the relative mismatch of `φ^* vol = μ(t_end)`.
    pub residual: f64,
    pub steps: usize,
    /// End time actually reached.
    pub t_end: f64,
    /// Step sizes `εₖ`.
    pub step_sizes: Vec<f64>,
    /// `‖vₖ‖_Ġ = ‖div vₖ‖_{L²}` per step.
    pub velocity_norm_trace: Vec<f64>,
    /// Mean of the pulled-back log-derivative removed before each Poisson solve.
    pub mean_defects: Vec<f64>,
    /// Largest harmonic component of any step velocity.
    pub max_harmonic: f64,
    /// `d_F(μₖ, target)` for the realized densities, when monitoring was requested.
    pub monitor_distances: Vec<f64>,
    /// `(t, φ(t))` every `checkpoint_stride` steps and at the end time, when
    /// requested. Snapshots carry no Jacobian.
    pub checkpoints: Vec<(f64, Warp)>,
}

impl LiftResult {
    /// The optimal information transport map `φ⁻¹`, which pushes `vol`
    /// forward to the end density.
    pub fn transport_map(&self) -> Warp {
        self.warp.inverse()
    }

    /// `¼ Σ εₖ ‖vₖ‖²_Ġ`, the discrete Fisher–Rao energy of the lifted path.
    ///
    /// For a horizontal velocity `‖v‖²_Ġ = ∫ (μ̇/μ)² μ`, four times the
    /// Fisher–Rao metric; on a geodesic traversed in unit time the energy
    /// approaches `d_F(μ₀, μ₁)²`.
    pub fn path_energy(&self) -> f64 {
        0.25 * self
            .step_sizes
            .iter()
            .zip(&self.velocity_norm_trace)
            .map(|(e, n)| e * n * n)
            .sum::<f64>()
    }
}

/// Settings of a lift.
#[derive(Debug, Clone, Default)]
pub struct LiftOptions {
    pub scheme: StepScheme,
    /// When set, records `d_F(φₖ^* vol, target)` after every step.
    pub monitor_target: Option<Density>,
    /// Keeps a snapshot of the warp every this many steps; 0 keeps none.
    pub checkpoint_stride: usize,
}

/// Turns a pulled-back right-hand side into a velocity.
pub(crate) trait VelocitySolver: Sync {
    /// Returns the velocity, the projected mean defect and `‖v‖²_Ġ`.
    fn velocity(&self, rhs: &ScalarField) -> (VectorField, f64, f64);
}

struct FlatSolver<'a>(&'a SpectralPlan);

impl VelocitySolver for FlatSolver<'_> {
    fn velocity(&self, rhs: &ScalarField) -> (VectorField, f64, f64) {
        let (f, mean) = self.0.solve_poisson_with_mean(rhs);
        let centered = rhs.map(|v| v - mean);
        let norm_sq = centered.inner(&centered);
        (self.0.gradient(&f), mean, norm_sq)
    }
}

/// Step endpoints for integrating up to `t_end` with nominal step `1/n`.
///
/// `⌊t_end·n⌋` full steps followed by one fractional step, so the stopping
/// time is hit exactly.
pub fn step_schedule(n: usize, t_end: f64) -> Vec<(f64, f64)> {
    let eps = 1.0 / n as f64;
    let full = ((t_end * n as f64) + 1e-12).floor() as usize;
    let full = full.min(n);
    let mut out: Vec<(f64, f64)> = (0..full).map(|k| (k as f64 * eps, eps)).collect();
    let rest = t_end - full as f64 * eps;
    if rest > 1e-12 {
        out.push((full as f64 * eps, rest));
    }
    out
}

/// Relative mismatch `‖(I₀∘φ)·|Dφ| − I_end‖₂ / ‖I_end‖₂` of `φ^* μ₀ = μ_end`.
pub fn matching_residual(warp: &Warp, mu0: &Density, mu_end: &Density) -> Result<f64> {
    warp.grid().check_same(mu0.grid())?;
    warp.grid().check_same(mu_end.grid())?;
    let jac = displacement_jacobian(warp.forward_displacement());
    let pulled = compose_field(mu0.intensity(), warp.forward_displacement());
    let lhs = pulled.zip_map(&jac, |a, b| a * b);
    let diff = lhs.zip_map(mu_end.intensity(), |a, b| a - b);
    Ok(diff.norm_l2() / mu_end.intensity().norm_l2())
}

pub(crate) fn lift_with_solver(
    path: &dyn DensityPath,
    solver: &dyn VelocitySolver,
    n: usize,
    t_end: f64,
    opts: &LiftOptions,
) -> Result<(Warp, LiftResult)> {
    if n == 0 {
        return Err(OitError::InvalidParameter("step count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&t_end) {
        return Err(OitError::InvalidParameter(format!("end time {t_end} outside [0, 1]")));
    }
    let grid = *path.grid();
    let mut warp = Warp::identity(grid);
    let schedule = step_schedule(n, t_end);
    let mut step_sizes = Vec::with_capacity(schedule.len());
    let mut norms = Vec::with_capacity(schedule.len());
    let mut defects = Vec::with_capacity(schedule.len());
    let mut max_harmonic: f64 = 0.0;
    let mut monitor = Vec::new();
    let mut checkpoints = Vec::new();
    for (k, &(t, eps)) in schedule.iter().enumerate() {
        let h = path.log_derivative(t)?;
        let rhs = compose_field(&h, warp.inverse_displacement());
        let (v, defect, norm_sq) = solver.velocity(&rhs);
        let xi = harmonic_mean_part(&v);
        max_harmonic = max_harmonic.max(xi.x.at(0, 0).abs()).max(xi.y.at(0, 0).abs());
        let psi = exp_step(&v, eps, opts.scheme)?;
        let (fwd, inv) = compose_maps(&psi, &warp)?;
        // the Jacobian is only needed at the end; carry a placeholder
        warp = Warp::from_parts(fwd, inv, ScalarField::constant(grid, 1.0))?;
        step_sizes.push(eps);
        norms.push(norm_sq.max(0.0).sqrt());
        defects.push(defect);
        if let Some(target) = &opts.monitor_target {
            let realized = displacement_jacobian(warp.forward_displacement());
            let realized = crate::grid::normalize_density(&realized.map(|v| v.max(0.0)), false)?;
            monitor.push(fisher_rao_distance(&realized, target)?);
        }
        let stride = opts.checkpoint_stride;
        if stride > 0 && ((k + 1) % stride == 0 || k + 1 == schedule.len()) {
            checkpoints.push((t + eps, warp.clone()));
        }
    }
    let inv_jac = displacement_jacobian(warp.inverse_displacement());
    let warp = warp.with_inverse_jacobian(inv_jac)?;
    let result = LiftResult {
        warp: warp.clone(),
        residual: 0.0,
        steps: schedule.len(),
        t_end,
        step_sizes,
        velocity_norm_trace: norms,
        mean_defects: defects,
        max_harmonic,
        monitor_distances: monitor,
        checkpoints,
    };
    Ok((warp, result))
}

/// Lifts `path` from `t = 0` to `t = t_end` with nominal step `1/n`.
///
/// The path must start at the uniform density.
pub fn lift_path_to(
    plan: &SpectralPlan,
    path: &dyn DensityPath,
    n: usize,
    t_end: f64,
    opts: &LiftOptions,
) -> Result<LiftResult> {
    plan.grid().check_same(path.grid())?;
    let start = path.density(0.0)?;
    let dev = start.intensity().map(|v| v - 1.0).max_abs();
    if dev > 1e-10 {
        return Err(OitError::InvalidParameter(format!(
            "path must start at the uniform density (deviation {dev:e})"
        )));
    }
    let (_, mut res) = lift_with_solver(path, &FlatSolver(plan), n, t_end, opts)?;
    let end = path.density(t_end)?;
    res.residual = matching_residual(&res.warp, &start, &end)?;
    Ok(res)
}

/// Lifts the whole path with `n` steps of size `1/n`.
pub fn lift_path(plan: &SpectralPlan, path: &dyn DensityPath, n: usize) -> Result<LiftResult> {
    lift_path_to(plan, path, n, 1.0, &LiftOptions::default())
}

/// Optimal information transport from `vol` to `μ₁`.
///
/// Lifts the Fisher–Rao geodesic from the uniform density to `mu1`; the
/// transport map is [`LiftResult::transport_map`].
pub fn solve_oit(plan: &SpectralPlan, mu1: &Density, n: usize) -> Result<LiftResult> {
    solve_oit_with(plan, mu1, n, &LiftOptions::default())
}

pub fn solve_oit_with(plan: &SpectralPlan, mu1: &Density, n: usize, opts: &LiftOptions) -> Result<LiftResult> {
    let path = FisherRaoPath::new(&Density::uniform(*mu1.grid()), mu1)?;
    lift_path_to(plan, &path, n, 1.0, opts)
}

/// Stopping time `s = 1/(1+σ)` of the inexact compatible problem.
pub fn inexact_stop_time(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(OitError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(1.0 / (1.0 + sigma))
}

/// Minimizer of `σ d_F(vol, φ_* vol)² + d_F(φ_* vol, μ₁)²`.
///
/// The lift of the geodesic from `vol` to `μ₁` is stopped at `s = 1/(1+σ)`;
/// the minimizer is its inverse and `residual` measures the mismatch with
/// `μ(s)`.
pub fn solve_inexact_compatible(plan: &SpectralPlan, mu1: &Density, sigma: f64, n: usize) -> Result<LiftResult> {
    let s = inexact_stop_time(sigma)?;
    let path = FisherRaoPath::new(&Density::uniform(*mu1.grid()), mu1)?;
    lift_path_to(plan, &path, n, s, &LiftOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::normalize_density;

    fn plan(n: usize) -> SpectralPlan {
        SpectralPlan::new(Grid::torus(n).unwrap())
    }

    fn cosine(g: Grid, a: f64) -> Density {
        normalize_density(
            &ScalarField::from_fn(g, |x, y| 1.0 - a * x.cos() * (2.0 * y).cos()),
            true,
        )
        .unwrap()
    }

    #[test]
    fn schedule_hits_stop_time() {
        let s = step_schedule(20, 1.0);
        assert_eq!(s.len(), 20);
        let s = step_schedule(20, 0.5);
        assert_eq!(s.len(), 10);
        let s = step_schedule(20, 1.0 / 3.0);
        assert_eq!(s.len(), 7);
        let total: f64 = s.iter().map(|p| p.1).sum();
        assert!((total - 1.0 / 3.0).abs() < 1e-15);
        assert!((s[6].1 - (1.0 / 3.0 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn constant_path_gives_identity() {
        let p = plan(32);
        let g = *p.grid();
        let res = lift_path(&p, &ConstantPath(Density::uniform(g)), 5).unwrap();
        assert_eq!(res.warp, Warp::identity(g));
        assert_eq!(res.residual, 0.0);
        assert_eq!(res.steps, 5);
        let same = solve_oit(&p, &Density::uniform(g), 4).unwrap();
        assert_eq!(same.warp.max_displacement(), 0.0);
    }

    #[test]
    fn path_must_start_uniform() {
        let p = plan(32);
        let mu = cosine(*p.grid(), 0.5);
        assert!(lift_path(&p, &ConstantPath(mu), 3).is_err());
    }

    #[test]
    fn small_lift_matches_and_is_horizontal() {
        let p = plan(64);
        let mu = cosine(*p.grid(), 0.5);
        let res = solve_oit(&p, &mu, 20).unwrap();
        assert!(res.residual < 2e-2, "{}", res.residual);
        assert!(res.max_harmonic < 1e-12);
        assert!(res.warp.consistency_error() < 10.0 * p.grid().dx());
    }

    #[test]
    fn y_independent_target_keeps_y_fixed() {
        let p = plan(64);
        let g = *p.grid();
        let mu = normalize_density(&ScalarField::from_fn(g, |x, _| 1.0 + 0.5 * x.sin()), true).unwrap();
        let res = solve_oit(&p, &mu, 10).unwrap();
        assert!(res.warp.forward_displacement().y.max_abs() < 1e-10);
        assert!(res.warp.inverse_displacement().y.max_abs() < 1e-10);
    }

    #[test]
    fn inexact_validates_sigma() {
        let p = plan(16);
        let g = *p.grid();
        assert!(solve_inexact_compatible(&p, &Density::uniform(g), 0.0, 4).is_err());
        assert!(solve_inexact_compatible(&p, &Density::uniform(g), -1.0, 4).is_err());
        assert!((inexact_stop_time(3.0).unwrap() - 0.25).abs() < 1e-16);
    }
}
