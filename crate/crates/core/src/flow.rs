//! Inexact matching by gradient flow with the divergence metric.
//!
//! Minimizes
//!
//! ```text
//! E(φ) = σ d_F(φ_* vol, vol)² + d_F(φ_* μ₀, μ₁)²
//! ```
//!
//! over diffeomorphisms by descending along the information metric
//! `G(u, v) = ⟨(−Δ + λ ξ) u, v⟩`. The state carries `φ`, `φ⁻¹` and the inverse
//! Jacobian `J = |Dφ⁻¹|`, which is advanced by a Lie–Trotter (or Strang)
//! splitting of the transport and the volume change instead of being
//! recomputed from the displacements.

use crate::error::{OitError, Result};
use crate::geometry::w_map;
use crate::grid::{integrate, Density, Grid, ScalarField, VectorField};
use crate::spectral::{InertiaConfig, SpectralPlan};
use crate::warp::{compose_field, compose_maps, displacement_jacobian, exp_step_guarded, StepGuard, StepScheme, Warp};

/// Floor applied inside square roots of `J`.
pub const SQRT_FLOOR: f64 = 1e-12;
/// Allowed energy increase per accepted step.
pub const ENERGY_SLACK: f64 = 1e-10;

/// Splitting used to advance the inverse Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Splitting {
    /// `J ← (J ∘ ψ⁻¹)·e^{−ε div v}`.
    #[default]
    LieTrotter,
    /// Half a volume step on each side of the transport.
    Strang,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Weight of the volume-change penalty.
    pub sigma: f64,
    /// Step size, in the time of the unit-mass energy.
    pub eps: f64,
    pub max_iter: usize,
    /// Stop once `|E_k − E_{k−1}| ≤ rel_tol·E₀`; `0` runs all iterations.
    pub rel_tol: f64,
    pub lambda: f64,
    /// Sets both c-factors to 1, the infinite-volume variant.
    pub infinite_volume: bool,
    pub splitting: Splitting,
    pub scheme: StepScheme,
    pub guard: StepGuard,
}

impl FlowParams {
    pub fn new(sigma: f64, eps: f64) -> Result<Self> {
        let p = Self {
            sigma,
            eps,
            max_iter: 400,
            rel_tol: 1e-6,
            lambda: 1.0,
            infinite_volume: false,
            splitting: Splitting::LieTrotter,
            scheme: StepScheme::Euler,
            guard: StepGuard::Lipschitz,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OitError::InvalidParameter(m));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.rel_tol >= 0.0) {
            return bad(format!("rel_tol must be nonnegative, got {}", self.rel_tol));
        }
        InertiaConfig::new(self.lambda)?;
        Ok(())
    }

    fn inertia(&self) -> InertiaConfig {
        InertiaConfig::new(self.lambda).expect("validated")
    }
}

/// `θ / sin θ` with `θ = arccos(x / vol)`, for `x ∈ [0, vol]`.
pub fn c_factor(x: f64, total_volume: f64) -> Result<f64> {
    let slack = 1e-12 * total_volume;
    if !(x >= -slack && x <= total_volume + slack) {
        return Err(OitError::OutOfDomain { x, total_volume });
    }
    if total_volume - x <= 1e-8 * total_volume {
        return Ok(1.0);
    }
    let r = (x / total_volume).clamp(0.0, 1.0);
    Ok(r.acos() / (1.0 - r * r).sqrt())
}

/// The two squared distances making up the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    /// `d_F(φ_* vol, vol)²`, before weighting by `σ`.
    pub volume: f64,
    /// `d_F(φ_* μ₀, μ₁)²`.
    pub mismatch: f64,
    /// `σ·volume + mismatch`.
    pub total: f64,
}

fn sphere_distance_sq(inner: f64, vol: f64) -> f64 {
    vol * (inner / vol).clamp(-1.0, 1.0).acos().powi(2)
}

fn sqrt_floor(j: &ScalarField) -> (ScalarField, usize) {
    let clamped = j.values().iter().filter(|&&v| v < SQRT_FLOOR).count();
    (j.map(|v| v.max(SQRT_FLOOR).sqrt()), clamped)
}

/// Energy from `J = φ_* vol / vol` and `f = W(φ_* μ₀)`.
pub fn energy_from_fields(j: &ScalarField, f: &ScalarField, w1: &ScalarField, sigma: f64) -> EnergyTerms {
    let vol = j.grid().total_volume();
    let (sj, _) = sqrt_floor(j);
    let volume = sphere_distance_sq(integrate(&sj), vol);
    let mismatch = sphere_distance_sq(f.inner(w1), vol);
    EnergyTerms {
        volume,
        mismatch,
        total: sigma * volume + mismatch,
    }
}

/// `L²` momentum of the energy: `dE(u) = ⟨m, u⟩` for the right-trivialized
/// variation `φ ↦ exp(εu) ∘ φ`.
///
/// `m = σ a grad √J + b (W₁ grad f − f grad W₁)` with
/// `a = c(∫√J)` and `b = c(∫ f W₁)`.
pub fn momentum_from_fields(
    plan: &SpectralPlan,
    j: &ScalarField,
    f: &ScalarField,
    w1: &ScalarField,
    grad_w1: &VectorField,
    sigma: f64,
    infinite_volume: bool,
) -> Result<VectorField> {
    let grid = *plan.grid();
    grid.check_same(j.grid())?;
    grid.check_same(f.grid())?;
    grid.check_same(w1.grid())?;
    let vol = grid.total_volume();
    let (sj, _) = sqrt_floor(j);
    let (a, b) = if infinite_volume {
        (1.0, 1.0)
    } else {
        let xa = integrate(&sj).clamp(0.0, vol);
        let xb = f.inner(w1).clamp(0.0, vol);
        (c_factor(xa, vol)?, c_factor(xb, vol)?)
    };
    let gsj = plan.gradient(&sj);
    let gf = plan.gradient(f);
    let mix = |g_sj: &ScalarField, g_f: &ScalarField, g_w: &ScalarField| -> ScalarField {
        let vals = (0..grid.len())
            .map(|k| {
                sigma * a * g_sj.values()[k] + b * (w1.values()[k] * g_f.values()[k] - f.values()[k] * g_w.values()[k])
            })
            .collect();
        ScalarField::from_values(grid, vals).expect("sizes match")
    };
    Ok(VectorField {
        x: mix(&gsj.x, &gf.x, &grad_w1.x),
        y: mix(&gsj.y, &gf.y, &grad_w1.y),
    })
}

/// Current iterate of the flow.
#[derive(Debug, Clone)]
pub struct FlowState {
    /// `φ_k` and `φ_k⁻¹`.
    pub warp: Warp,
    /// Tracked `J_k ≈ |Dφ_k⁻¹|`.
    pub jacobian: ScalarField,
    /// Tracked half-density `√(φ_k)_* μ₀`, transported alongside `J`.
    ///
    /// Without it the half-density is rebuilt from `W(μ₀) ∘ φ_k⁻¹`, which
    /// degrades once the inverse map stretches features below the grid
    /// resolution.
    pub half_density: Option<ScalarField>,
    pub iteration: usize,
    pub energy_trace: Vec<EnergyTerms>,
    /// Largest relative rescaling applied to keep `∫J = vol(M)`.
    pub max_mass_correction: f64,
}

impl FlowState {
    pub fn initial(grid: Grid) -> Self {
        Self {
            warp: Warp::identity(grid),
            jacobian: ScalarField::constant(grid, 1.0),
            half_density: None,
            iteration: 0,
            energy_trace: Vec::new(),
            max_mass_correction: 0.0,
        }
    }

    /// State with a given warp and `J` recomputed from its inverse displacement.
    pub fn from_warp(warp: Warp) -> Self {
        let jacobian = displacement_jacobian(warp.inverse_displacement());
        Self {
            warp,
            jacobian,
            half_density: None,
            iteration: 0,
            energy_trace: Vec::new(),
            max_mass_correction: 0.0,
        }
    }

    /// The deformed volume `φ_* vol`, renormalized.
    pub fn deformed_volume(&self) -> Result<Density> {
        crate::grid::normalize_density(&self.jacobian.map(|v| v.max(0.0)), false)
    }
}

/// Fixed data of one matching problem.
#[derive(Debug, Clone)]
pub struct FlowProblem<'a> {
    plan: &'a SpectralPlan,
    w0: ScalarField,
    w1: ScalarField,
    grad_w1: VectorField,
    params: FlowParams,
}

impl<'a> FlowProblem<'a> {
    pub fn new(plan: &'a SpectralPlan, mu0: &Density, mu1: &Density, params: FlowParams) -> Result<Self> {
        params.validate()?;
        plan.grid().check_same(mu0.grid())?;
        plan.grid().check_same(mu1.grid())?;
        let w1 = w_map(mu1);
        let grad_w1 = plan.gradient(&w1);
        Ok(Self {
            plan,
            w0: w_map(mu0),
            w1,
            grad_w1,
            params,
        })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    /// Identity state that also transports the half-density of `μ₀`.
    pub fn initial_state(&self) -> FlowState {
        let mut s = FlowState::initial(*self.plan.grid());
        s.half_density = Some(self.w0.clone());
        s
    }

    /// `f = W(φ_* μ₀)`, rescaled onto the sphere `‖f‖² = vol(M)`.
    ///
    /// Taken from the tracked half-density when the state has one, otherwise
    /// rebuilt as `(W(μ₀) ∘ φ⁻¹)·√J`. Neither is exactly transport of `W(μ₀)`
    /// by the tracked `φ`, so the raw field drifts off the sphere and
    /// `⟨f, W₁⟩` can exceed `vol(M)`. Transport preserves `‖f‖`, so the
    /// rescaling does not change the gradient.
    pub fn action_on_source(&self, state: &FlowState) -> ScalarField {
        let f = match &state.half_density {
            Some(f) => f.clone(),
            None => {
                let pulled = compose_field(&self.w0, state.warp.inverse_displacement());
                let (sj, _) = sqrt_floor(&state.jacobian);
                pulled.zip_map(&sj, |a, b| a * b)
            }
        };
        let norm_sq = f.inner(&f);
        let vol = f.grid().total_volume();
        if norm_sq > 0.0 {
            f.scale((vol / norm_sq).sqrt())
        } else {
            f
        }
    }

    pub fn energy(&self, state: &FlowState) -> EnergyTerms {
        let f = self.action_on_source(state);
        energy_from_fields(&state.jacobian, &f, &self.w1, self.params.sigma)
    }

    pub fn momentum(&self, state: &FlowState) -> Result<VectorField> {
        let f = self.action_on_source(state);
        momentum_from_fields(
            self.plan,
            &state.jacobian,
            &f,
            &self.w1,
            &self.grad_w1,
            self.params.sigma,
            self.params.infinite_volume,
        )
    }

    /// Descent direction `v = −(−Δ + λξ)⁻¹ m / vol(M)`.
    ///
    /// The flow descends `E / vol(M)`, the energy of the densities scaled to
    /// unit mass, so the step size does not depend on the size of the domain.
    pub fn gradient_velocity(&self, state: &FlowState) -> Result<VectorField> {
        if !(state.jacobian.min() > 0.0) {
            return Err(OitError::Folded {
                min_jacobian: state.jacobian.min(),
                iteration: state.iteration,
            });
        }
        let m = self.momentum(state)?;
        let vol = self.plan.grid().total_volume();
        Ok(self.plan.metric_inverse(&m, &self.params.inertia()).scale(-1.0 / vol))
    }

    /// One step of size `eps` along `v`.
    pub fn step(&self, state: &FlowState, v: &VectorField, eps: f64) -> Result<FlowState> {
        flow_step(
            self.plan,
            state,
            v,
            eps,
            self.params.splitting,
            self.params.scheme,
            self.params.guard,
        )
    }
}

/// Advances `φ`, `φ⁻¹` and `J` by one step of size `eps` along `v`.
pub fn flow_step(
    plan: &SpectralPlan,
    state: &FlowState,
    v: &VectorField,
    eps: f64,
    splitting: Splitting,
    scheme: StepScheme,
    guard: StepGuard,
) -> Result<FlowState> {
    let psi = exp_step_guarded(v, eps, scheme, guard)?;
    let (fwd, inv) = compose_maps(&psi, &state.warp)?;
    let div = plan.divergence(v);
    // J is transported through its logarithm: interpolating J itself
    // overshoots below zero where the flow compresses regions to nothing
    let log_j = state.jacobian.map(|v| v.max(SQRT_FLOOR).ln());
    let jacobian = match splitting {
        Splitting::LieTrotter => {
            let moved = compose_field(&log_j, psi.inverse_displacement());
            moved.zip_map(&div, |l, d| (l - eps * d).exp())
        }
        Splitting::Strang => {
            let half = log_j.zip_map(&div, |l, d| l - 0.5 * eps * d);
            let moved = compose_field(&half, psi.inverse_displacement());
            moved.zip_map(&div, |l, d| (l - 0.5 * eps * d).exp())
        }
    };
    // the exponential factor does not conserve ∫J; the exact flow does, so
    // project back onto mass vol(M)
    let mass = integrate(&jacobian);
    let correction = plan.grid().total_volume() / mass;
    let jacobian = jacobian.scale(correction);
    // half-densities move like √J: transport, then a factor e^{−ε div v / 2}
    let half_density = state.half_density.as_ref().map(|f| match splitting {
        Splitting::LieTrotter => {
            let moved = compose_field(f, psi.inverse_displacement());
            moved.zip_map(&div, |g, d| g * (-0.5 * eps * d).exp())
        }
        Splitting::Strang => {
            let half = f.zip_map(&div, |g, d| g * (-0.25 * eps * d).exp());
            let moved = compose_field(&half, psi.inverse_displacement());
            moved.zip_map(&div, |g, d| g * (-0.25 * eps * d).exp())
        }
    });
    let warp = Warp::from_parts(fwd, inv, jacobian.clone())?;
    Ok(FlowState {
        warp,
        jacobian,
        half_density,
        iteration: state.iteration + 1,
        energy_trace: state.energy_trace.clone(),
        max_mass_correction: state.max_mass_correction.max((correction - 1.0).abs()),
    })
}

/// Summary of a flow run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub iterations: usize,
    /// Stopped by the energy criterion rather than the iteration cap.
    pub converged: bool,
    pub initial_energy: EnergyTerms,
    pub final_energy: EnergyTerms,
    pub min_jacobian: f64,
    /// Cells where `J` fell below the square-root floor.
    pub clamped_cells: usize,
    /// `sup |φ(φ⁻¹(x)) − x|`.
    pub consistency_error: f64,
    pub max_mass_correction: f64,
    /// Step size in use at the end; half the requested one after a fallback.
    pub eps: f64,
}

/// Runs the flow from the identity; see [`run_flow_with`].
pub fn run_flow(
    plan: &SpectralPlan,
    mu0: &Density,
    mu1: &Density,
    params: &FlowParams,
) -> Result<(FlowState, FlowReport)> {
    run_flow_with(plan, mu0, mu1, params, |_| {})
}

/// Runs the flow, calling `observe` after every accepted step.
///
/// A step that trips the size guard, folds `J` or raises the energy by more
/// than [`ENERGY_SLACK`] is retried once with half the step size, which is
/// kept for the rest of the run; a second failure is returned as an error.
pub fn run_flow_with(
    plan: &SpectralPlan,
    mu0: &Density,
    mu1: &Density,
    params: &FlowParams,
    mut observe: impl FnMut(&FlowState),
) -> Result<(FlowState, FlowReport)> {
    let problem = FlowProblem::new(plan, mu0, mu1, params.clone())?;
    let mut state = problem.initial_state();
    let e0 = problem.energy(&state);
    state.energy_trace.push(e0);
    let mut eps = params.eps;
    let mut halved = false;
    let mut converged = false;
    while state.iteration < params.max_iter {
        let v = problem.gradient_velocity(&state)?;
        let before = *state.energy_trace.last().expect("nonempty");
        let (next, after) = loop {
            match try_step(&problem, &state, &v, eps, before) {
                Ok(ok) => break ok,
                Err(e) if !halved => {
                    let _ = e;
                    halved = true;
                    eps *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        state = next;
        state.energy_trace.push(after);
        observe(&state);
        if (before.total - after.total).abs() <= params.rel_tol * e0.total {
            converged = true;
            break;
        }
    }
    let (_, clamped) = sqrt_floor(&state.jacobian);
    let report = FlowReport {
        iterations: state.iteration,
        converged,
        initial_energy: e0,
        final_energy: *state.energy_trace.last().expect("nonempty"),
        min_jacobian: state.jacobian.min(),
        clamped_cells: clamped,
        consistency_error: state.warp.consistency_error(),
        max_mass_correction: state.max_mass_correction,
        eps,
    };
    Ok((state, report))
}

fn try_step(
    problem: &FlowProblem<'_>,
    state: &FlowState,
    v: &VectorField,
    eps: f64,
    before: EnergyTerms,
) -> Result<(FlowState, EnergyTerms)> {
    let next = problem.step(state, v, eps)?;
    let min = next.jacobian.min();
    if !(min > 0.0) {
        return Err(OitError::Folded {
            min_jacobian: min,
            iteration: next.iteration,
        });
    }
    let after = problem.energy(&next);
    if !(after.total <= before.total + ENERGY_SLACK) {
        return Err(OitError::EnergyIncrease {
            before: before.total,
            after: after.total,
            iteration: next.iteration,
        });
    }
    Ok((next, after))
}

/// `E` for a state, from the densities directly.
pub fn energy(plan: &SpectralPlan, state: &FlowState, mu0: &Density, mu1: &Density, sigma: f64) -> Result<f64> {
    let mut params = FlowParams::new(sigma, 1.0)?;
    params.max_iter = 1;
    Ok(FlowProblem::new(plan, mu0, mu1, params)?.energy(state).total)
}

/// Right-hand side of the descended flow on `(J, P)`:
/// `J̇ = −div(J v)`, `Ṗ = −div(P v)` with `v` built from `√J` and `√P`.
pub fn two_component_rhs(
    plan: &SpectralPlan,
    j: &ScalarField,
    p: &ScalarField,
    mu1: &Density,
    params: &FlowParams,
) -> Result<(ScalarField, ScalarField)> {
    params.validate()?;
    if j.min() < 0.0 || p.min() < 0.0 {
        return Err(OitError::InvalidField("J and P must be nonnegative".into()));
    }
    let w1 = w_map(mu1);
    let grad_w1 = plan.gradient(&w1);
    let (f, _) = sqrt_floor(p);
    let m = momentum_from_fields(plan, j, &f, &w1, &grad_w1, params.sigma, params.infinite_volume)?;
    let v = plan
        .metric_inverse(&m, &params.inertia())
        .scale(-1.0 / plan.grid().total_volume());
    let flux = |q: &ScalarField| plan.divergence(&v.mul_scalar(q)).scale(-1.0);
    Ok((flux(j), flux(p)))
}
