//! Fisher–Rao geometry of densities through the square-root map.
//!
//! `W(μ) = √I` sends densities of mass `vol(M)` onto the sphere of radius
//! `√vol(M)` in `L²`. Geodesics and distances are great circles and angles on
//! that sphere.

use std::f64::consts::PI;

use crate::error::{OitError, Result};
use crate::grid::{integrate, normalize_density, Density, ScalarField};

/// Below this angle the geodesic is the constant path.
pub const THETA_EPS: f64 = 1e-12;
/// Angles within this distance of `π` are treated as antipodal.
pub const ANTIPODAL_EPS: f64 = 1e-8;

/// Square-root image of a density, `√I`.
pub fn w_map(mu: &Density) -> ScalarField {
    mu.intensity().map(|v| v.max(0.0).sqrt())
}

/// Density with intensity `f²`; `f` must lie on the sphere to within `1e-6`.
pub fn w_unmap(f: &ScalarField) -> Result<Density> {
    let min = f.min();
    if min < 0.0 {
        return Err(OitError::InvalidField(format!("negative value {min}")));
    }
    let sq = f.map(|v| v * v);
    let vol = f.grid().total_volume();
    let mass = integrate(&sq);
    if ((mass - vol) / vol).abs() > 1e-6 {
        return Err(OitError::InvalidDensity(format!(
            "squared norm {mass} is off the sphere of radius² {vol}"
        )));
    }
    let strict = min > 0.0;
    normalize_density(&sq, strict)
}

fn cos_angle(f0: &ScalarField, f1: &ScalarField) -> f64 {
    let vol = f0.grid().total_volume();
    (f0.inner(f1) / vol).clamp(-1.0, 1.0)
}

/// Square-root images of two densities and the angle between them.
#[derive(Debug, Clone)]
pub struct GeodesicPair {
    pub f0: ScalarField,
    pub f1: ScalarField,
    pub theta: f64,
}

impl GeodesicPair {
    pub fn new(mu0: &Density, mu1: &Density) -> Result<Self> {
        mu0.grid().check_same(mu1.grid())?;
        let f0 = w_map(mu0);
        let f1 = w_map(mu1);
        let theta = cos_angle(&f0, &f1).acos();
        Ok(Self { f0, f1, theta })
    }

    fn check_antipodal(&self) -> Result<()> {
        if self.theta >= PI - ANTIPODAL_EPS {
            Err(OitError::Antipodal { theta: self.theta })
        } else {
            Ok(())
        }
    }

    fn is_constant(&self) -> bool {
        self.theta < THETA_EPS
    }

    /// Great-circle coefficients `(a, b)` and their time derivatives.
    fn coefficients(&self, t: f64) -> ((f64, f64), (f64, f64)) {
        let th = self.theta;
        if self.is_constant() {
            // limits of sin((1-t)θ)/sinθ and sin(tθ)/sinθ as θ → 0
            return ((1.0 - t, t), (-1.0, 1.0));
        }
        let s = th.sin();
        (
            (((1.0 - t) * th).sin() / s, (t * th).sin() / s),
            (-th * ((1.0 - t) * th).cos() / s, th * (t * th).cos() / s),
        )
    }

    /// `W(μ(t))` on the great circle.
    pub fn point(&self, t: f64) -> ScalarField {
        let ((a, b), _) = self.coefficients(t);
        self.f0.zip_map(&self.f1, |u, v| a * u + b * v)
    }

    /// Density `μ(t)` on the geodesic.
    pub fn density(&self, t: f64, strict: bool) -> Result<Density> {
        self.check_antipodal()?;
        let f = self.point(t);
        normalize_density(&f.map(|v| v * v), strict)
    }

    /// `μ̇(t)/μ(t)` in closed form.
    pub fn log_derivative(&self, t: f64) -> Result<ScalarField> {
        self.check_antipodal()?;
        let g = *self.f0.grid();
        if self.is_constant() {
            return Ok(ScalarField::zeros(g));
        }
        let ((a, b), (da, db)) = self.coefficients(t);
        let mut min = f64::INFINITY;
        let vals: Vec<f64> = self
            .f0
            .values()
            .iter()
            .zip(self.f1.values())
            .map(|(&u, &v)| {
                let den = a * u + b * v;
                min = min.min(den.abs());
                2.0 * (da * u + db * v) / den
            })
            .collect();
        if !(min >= 1e-12) {
            return Err(OitError::DegenerateDenominator { min });
        }
        ScalarField::from_values(g, vals)
    }
}

/// `√vol(M)·arccos(⟨√I₀, √I₁⟩/vol(M))`.
pub fn fisher_rao_distance(mu0: &Density, mu1: &Density) -> Result<f64> {
    let pair = GeodesicPair::new(mu0, mu1)?;
    Ok(mu0.grid().total_volume().sqrt() * pair.theta)
}

/// Point `μ(t)` on the Fisher–Rao geodesic from `μ₀` to `μ₁`.
pub fn fisher_rao_geodesic(mu0: &Density, mu1: &Density, t: f64) -> Result<Density> {
    check_time(t)?;
    mu0.require_strict()?;
    mu1.require_strict()?;
    let pair = GeodesicPair::new(mu0, mu1)?;
    if t == 0.0 {
        pair.check_antipodal()?;
        return Ok(mu0.clone());
    }
    if t == 1.0 {
        pair.check_antipodal()?;
        return Ok(mu1.clone());
    }
    pair.density(t, true)
}

/// `μ̇(t)/μ(t)` along the Fisher–Rao geodesic.
pub fn geodesic_log_derivative(mu0: &Density, mu1: &Density, t: f64) -> Result<ScalarField> {
    check_time(t)?;
    GeodesicPair::new(mu0, mu1)?.log_derivative(t)
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(OitError::InvalidParameter(format!("t = {t} outside [0, 1]")))
    }
}

/// `‖√I₀ − √I₁‖_{L²}`, the flat counterpart of the Fisher–Rao distance.
pub fn hellinger_distance(mu0: &Density, mu1: &Density) -> Result<f64> {
    mu0.grid().check_same(mu1.grid())?;
    let d = w_map(mu0).zip_map(&w_map(mu1), |a, b| a - b);
    Ok(d.norm_l2())
}

/// Total variation, Kullback–Leibler and χ² between probability-normalized
/// intensities `pᵢ = Iᵢ / vol(M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxiliaryDivergences {
    pub tv: f64,
    pub kl: f64,
    pub chi2: f64,
}

/// Computes [`AuxiliaryDivergences`]. KL and χ² need `μ₁ > 0` wherever
/// `μ₀ > 0` (KL) or everywhere (χ²); `0·log 0 = 0`.
pub fn auxiliary_divergences(mu0: &Density, mu1: &Density) -> Result<AuxiliaryDivergences> {
    mu0.grid().check_same(mu1.grid())?;
    let g = mu0.grid();
    let vol = g.total_volume();
    let da = g.cell_area();
    let (mut tv, mut kl, mut chi2) = (0.0, 0.0, 0.0);
    for (&a, &b) in mu0.intensity().values().iter().zip(mu1.intensity().values()) {
        let (p, q) = (a / vol, b / vol);
        tv += (p - q).abs();
        if q <= 0.0 {
            return Err(OitError::NotStrict);
        }
        if p > 0.0 {
            kl += p * (p / q).ln();
        }
        chi2 += (p - q) * (p - q) / q;
    }
    Ok(AuxiliaryDivergences {
        tv: 0.5 * tv * da,
        kl: kl * da,
        chi2: chi2 * da,
    })
}

/// All distances between probability-normalized densities.
///
/// Hellinger is `‖√p₀ − √p₁‖` (no ½ factor) and the Fisher–Rao distance is
/// the angle `θ`; both equal the mass-`vol(M)` values divided by `√vol(M)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityDistances {
    pub hellinger: f64,
    pub fisher_rao: f64,
    pub tv: f64,
    pub kl: f64,
    pub chi2: f64,
}

pub fn probability_distances(mu0: &Density, mu1: &Density) -> Result<ProbabilityDistances> {
    let s = mu0.grid().total_volume().sqrt();
    let aux = auxiliary_divergences(mu0, mu1)?;
    Ok(ProbabilityDistances {
        hellinger: hellinger_distance(mu0, mu1)? / s,
        fisher_rao: fisher_rao_distance(mu0, mu1)? / s,
        tv: aux.tv,
        kl: aux.kl,
        chi2: aux.chi2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Grid {
        Grid::torus(64).unwrap()
    }

    fn cosine(g: Grid) -> Density {
        let raw = ScalarField::from_fn(g, |x, y| 1.0 - 0.8 * x.cos() * (2.0 * y).cos());
        normalize_density(&raw, true).unwrap()
    }

    fn random_density(g: Grid, rng: &mut ChaCha8Rng, amp: f64) -> Density {
        let c: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0..3) as f64,
                    rng.random_range(0..3) as f64,
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let raw = ScalarField::from_fn(g, |x, y| {
            1.0 + amp * c.iter().map(|&(a, k, l, p)| a * (k * x + l * y + p).sin()).sum::<f64>() / 4.0
        });
        normalize_density(&raw, true).unwrap()
    }

    #[test]
    fn w_map_examples() {
        let g = grid();
        assert!(w_map(&Density::uniform(g)).values().iter().all(|&v| v == 1.0));
        let mu = cosine(g);
        let f = w_map(&mu);
        let err = f.map(|v| v * v).zip_map(mu.intensity(), |a, b| (a - b).abs()).max();
        assert!(err < 1e-14);
        assert!((f.inner(&f) - g.total_volume()).abs() < 1e-10 * g.total_volume());
    }

    #[test]
    fn w_unmap_round_trip_and_errors() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mu = random_density(g, &mut rng, 0.9);
            let back = w_unmap(&w_map(&mu)).unwrap();
            let err = back.intensity().zip_map(mu.intensity(), |a, b| (a - b).abs()).max();
            assert!(err < 1e-12, "{err}");
        }
        let one = ScalarField::constant(g, 1.0);
        assert_eq!(w_unmap(&one).unwrap(), Density::uniform(g));
        assert!(w_unmap(&ScalarField::constant(g, 1.005)).is_err());
        let neg = ScalarField::from_fn(g, |x, _| x.sin());
        assert!(w_unmap(&neg).is_err());
    }

    #[test]
    fn distance_basics() {
        let g = grid();
        let mu = cosine(g);
        let nu = Density::uniform(g);
        assert_eq!(fisher_rao_distance(&mu, &mu).unwrap(), 0.0);
        assert_eq!(
            fisher_rao_distance(&mu, &nu).unwrap(),
            fisher_rao_distance(&nu, &mu).unwrap()
        );
        assert_eq!(hellinger_distance(&mu, &mu).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_supports_are_a_quarter_turn_apart() {
        let g = grid();
        let left = ScalarField::from_fn(g, |x, _| if x < std::f64::consts::PI { 1.0 } else { 0.0 });
        let right = left.map(|v| 1.0 - v);
        let a = normalize_density(&left, false).unwrap();
        let b = normalize_density(&right, false).unwrap();
        let d = fisher_rao_distance(&a, &b).unwrap();
        let expect = g.total_volume().sqrt() * PI / 2.0;
        assert!((d - expect).abs() < 1e-12);
    }

    #[test]
    fn geodesic_endpoints_and_mass() {
        let g = grid();
        let mu0 = cosine(g);
        let mu1 = Density::uniform(g);
        assert_eq!(fisher_rao_geodesic(&mu0, &mu1, 0.0).unwrap(), mu0);
        assert_eq!(fisher_rao_geodesic(&mu0, &mu1, 1.0).unwrap(), mu1);
        let pair = GeodesicPair::new(&mu0, &mu1).unwrap();
        for (t, target) in [(0.0, &mu0), (1.0, &mu1)] {
            let f = pair.point(t);
            let err = f.map(|v| v * v).zip_map(target.intensity(), |a, b| (a - b).abs()).max();
            assert!(err < 1e-12);
        }
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let m = pair.point(t).map(|v| v * v);
            let vol = g.total_volume();
            assert!(((integrate(&m) - vol) / vol).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_path_when_equal() {
        let g = grid();
        let mu = cosine(g);
        let mid = fisher_rao_geodesic(&mu, &mu, 0.37).unwrap();
        let err = mid.intensity().zip_map(mu.intensity(), |a, b| (a - b).abs()).max();
        assert!(err < 1e-14);
        let h = geodesic_log_derivative(&mu, &mu, 0.5).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn midpoint_is_equidistant() {
        let g = grid();
        let mu0 = cosine(g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu1 = random_density(g, &mut rng, 0.8);
        let mid = fisher_rao_geodesic(&mu0, &mu1, 0.5).unwrap();
        let d = fisher_rao_distance(&mu0, &mu1).unwrap();
        let a = fisher_rao_distance(&mu0, &mid).unwrap();
        let b = fisher_rao_distance(&mid, &mu1).unwrap();
        assert!((a - 0.5 * d).abs() < 1e-8 && (b - 0.5 * d).abs() < 1e-8);
    }

    #[test]
    fn log_derivative_matches_finite_differences() {
        let g = grid();
        let mu0 = cosine(g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu1 = random_density(g, &mut rng, 0.9);
        let pair = GeodesicPair::new(&mu0, &mu1).unwrap();
        let h = 1e-5;
        for t in [0.1, 0.5, 0.9] {
            let an = pair.log_derivative(t).unwrap();
            let lp = pair.point(t + h).map(|v| 2.0 * v.ln());
            let lm = pair.point(t - h).map(|v| 2.0 * v.ln());
            let fd = lp.zip_map(&lm, |a, b| (a - b) / (2.0 * h));
            let err = an.zip_map(&fd, |a, b| (a - b).abs()).max();
            assert!(err < 1e-6, "t={t} err={err}");
            let mu_t = pair.point(t).map(|v| v * v);
            let m = integrate(&an.zip_map(&mu_t, |a, b| a * b));
            assert!(m.abs() < 1e-10, "{m}");
        }
    }

    #[test]
    fn chord_formula() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_density(g, &mut rng, 0.9);
            let b = random_density(g, &mut rng, 0.9);
            let pair = GeodesicPair::new(&a, &b).unwrap();
            let chord = 2.0 * g.total_volume().sqrt() * (pair.theta / 2.0).sin();
            let h = hellinger_distance(&a, &b).unwrap();
            assert!((chord - h).abs() < 1e-10, "{chord} {h}");
            assert!(h <= fisher_rao_distance(&a, &b).unwrap());
        }
    }

    #[test]
    fn antipodal_and_time_errors() {
        let g = grid();
        let mu = cosine(g);
        assert!(fisher_rao_geodesic(&mu, &mu, 1.5).is_err());
        let pair = GeodesicPair {
            f0: w_map(&mu),
            f1: w_map(&mu).scale(-1.0),
            theta: PI,
        };
        assert!(matches!(pair.log_derivative(0.5), Err(OitError::Antipodal { .. })));
        let half = ScalarField::from_fn(g, |x, _| if x < 1.0 { 0.0 } else { 1.0 });
        let z = normalize_density(&half, false).unwrap();
        assert!(fisher_rao_geodesic(&z, &mu, 0.5).is_err());
    }

    #[test]
    fn divergences_of_identical_densities_vanish() {
        let g = grid();
        let mu = cosine(g);
        let d = auxiliary_divergences(&mu, &mu).unwrap();
        assert_eq!((d.tv, d.kl, d.chi2), (0.0, 0.0, 0.0));
        let half = ScalarField::from_fn(g, |x, _| if x < 1.0 { 0.0 } else { 1.0 });
        let z = normalize_density(&half, false).unwrap();
        assert!(auxiliary_divergences(&mu, &z).is_err());
        let d = auxiliary_divergences(&z, &mu).unwrap();
        assert!(d.kl.is_finite() && d.kl > 0.0);
    }
}
