//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use oitk::{normalize_density, Density, Grid, ScalarField, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `1 − a cos x cos 2y`, normalized.
pub fn cosine(g: Grid, a: f64) -> Density {
    normalize_density(
        &ScalarField::from_fn(g, |x, y| 1.0 - a * x.cos() * (2.0 * y).cos()),
        true,
    )
    .unwrap()
}

/// A Gaussian bump at `(cx, π)` over a background of 0.3.
pub fn bump(g: Grid, cx: f64) -> Density {
    let raw = ScalarField::from_fn(g, |x, y| 0.3 + (-1.5 * ((x - cx).powi(2) + (y - PI).powi(2))).exp());
    normalize_density(&raw, true).unwrap()
}

/// `1 + amp·(mean of four random low-order sines)`, normalized.
pub fn random_density(g: Grid, rng: &mut ChaCha8Rng, amp: f64) -> Density {
    let c: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0..3) as f64,
                rng.random_range(0..3) as f64,
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let raw = ScalarField::from_fn(g, |x, y| {
        1.0 + amp * c.iter().map(|&(a, k, l, p)| a * (k * x + l * y + p).sin()).sum::<f64>() / 4.0
    });
    normalize_density(&raw, true).unwrap()
}

/// Smooth trigonometric direction `u` with its Jacobian matrix.
pub struct Direction {
    pub modes: Vec<(f64, f64, f64, f64, f64)>,
}

impl Direction {
    pub fn zero() -> Self {
        Self { modes: Vec::new() }
    }

    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let modes = (0..4)
            .map(|_| {
                (
                    rng.random_range(-2..=2) as f64,
                    rng.random_range(-2..=2) as f64,
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        Self { modes }
    }

    /// `(u, Du)` at a point.
    pub fn eval(&self, x: f64, y: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let mut u = [0.0; 2];
        let mut du = [[0.0; 2]; 2];
        for &(kx, ky, ph, ax, ay) in &self.modes {
            let arg = kx * x + ky * y + ph;
            let (s, c) = arg.sin_cos();
            u[0] += ax * s;
            u[1] += ay * s;
            du[0][0] += ax * kx * c;
            du[0][1] += ax * ky * c;
            du[1][0] += ay * kx * c;
            du[1][1] += ay * ky * c;
        }
        (u, du)
    }

    pub fn field(&self, g: Grid) -> VectorField {
        VectorField {
            x: ScalarField::from_fn(g, |x, y| self.eval(x, y).0[0]),
            y: ScalarField::from_fn(g, |x, y| self.eval(x, y).0[1]),
        }
    }
}

/// A density pushed forward by `x ↦ x + εu(x)` to first order:
/// `ρ_ε(x) = ρ(x − εu) det(I − εDu)`, evaluated from the closed form of `ρ`.
pub fn pushed(g: Grid, rho: &dyn Fn(f64, f64) -> f64, dir: &Direction, eps: f64) -> ScalarField {
    ScalarField::from_fn(g, |x, y| {
        let (u, du) = dir.eval(x, y);
        let det = (1.0 - eps * du[0][0]) * (1.0 - eps * du[1][1]) - eps * eps * du[0][1] * du[1][0];
        rho(x - eps * u[0], y - eps * u[1]) * det
    })
}

/// Largest relative error of the energy gradient against central differences
/// over `count` random directions, on an `n × n` grid.
pub fn gradient_check(n: usize, count: usize, seed: u64) -> f64 {
    use oitk::flow::{FlowParams, FlowProblem, FlowState};
    use oitk::{InertiaConfig, SpectralPlan};

    let mut rng = rng(seed);
    let g = Grid::torus(n).unwrap();
    let plan = SpectralPlan::new(g);
    let vol = g.total_volume();
    let mu1 = bump(g, 3.6);
    let problem = FlowProblem::new(&plan, &mu1, &mu1, FlowParams::new(0.7, 0.1).unwrap()).unwrap();
    // a generic state: smooth J and source density, each of mass vol(M)
    let j_fn = |x: f64, y: f64| 1.0 + 0.3 * (x + 2.0 * y).sin() + 0.2 * (2.0 * x).cos();
    let p_fn = |x: f64, y: f64| 0.4 + (1.2 * (x - 2.2).cos() + 0.8 * (y - 3.0).cos()).exp() * (1.0 + 0.2 * y.sin());
    let jm = ScalarField::from_fn(g, j_fn).mean();
    let pm = ScalarField::from_fn(g, p_fn).mean();
    let j = move |x: f64, y: f64| j_fn(x, y) / jm;
    let p = move |x: f64, y: f64| p_fn(x, y) / pm;
    let state_at = |eps: f64, dir: &Direction| {
        let mut s = FlowState::initial(g);
        s.jacobian = pushed(g, &j, dir, eps);
        s.half_density = Some(pushed(g, &p, dir, eps).map(f64::sqrt));
        s
    };
    // the gradient velocity descends E / vol(M) through the metric inverse
    let v = problem.gradient_velocity(&state_at(0.0, &Direction::zero())).unwrap();
    let m = plan.metric_apply(&v.scale(-vol), &InertiaConfig::default());
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let dir = Direction::random(&mut rng);
        let h = 1e-5;
        let ep = problem.energy(&state_at(h, &dir)).total;
        let em = problem.energy(&state_at(-h, &dir)).total;
        let fd = (ep - em) / (2.0 * h);
        let an = m.inner(&dir.field(g));
        worst = worst.max((fd - an).abs() / an.abs().max(1e-300));
    }
    worst
}

/// `sup |J − |Dφ⁻¹||` after `steps` flow steps of size `eps` between two bumps.
pub fn jacobian_tracking_error(n: usize, eps: f64, steps: usize) -> f64 {
    use oitk::flow::{FlowParams, FlowProblem};
    use oitk::warp::displacement_jacobian;
    use oitk::SpectralPlan;

    let g = Grid::torus(n).unwrap();
    let plan = SpectralPlan::new(g);
    let (a, b) = (bump(g, 2.4), bump(g, 3.9));
    let problem = FlowProblem::new(&plan, &a, &b, FlowParams::new(0.5, eps).unwrap()).unwrap();
    let mut s = problem.initial_state();
    for _ in 0..steps {
        let v = problem.gradient_velocity(&s).unwrap();
        s = problem.step(&s, &v, eps).unwrap();
    }
    let jd = displacement_jacobian(s.warp.inverse_displacement());
    s.jacobian.zip_map(&jd, |x, y| (x - y).abs()).max()
}
