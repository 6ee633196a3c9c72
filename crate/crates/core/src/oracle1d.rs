//! Transport on the circle by cumulative integrals.
//!
//! In one dimension the density matching problem has a closed-form answer:
//! the monotone map `φ = C₁⁻¹ ∘ C₀`, with `Cᵢ(x) = ∫₀ˣ Iᵢ`, satisfies
//! `|Dφ⁻¹|·(I₀∘φ⁻¹) = I₁` and fixes the base point `0`. This module computes
//! it with fourth-order quadrature and monotone cubic Hermite interpolation
//! only, sharing nothing with the FFT machinery, so it can serve as an
//! independent reference for the two-dimensional solvers on data that does
//! not depend on `y`.

use crate::error::{OitError, Result};

/// A density on the circle of length `L`, sampled at `xᵢ = i·L/n`, with
/// mass `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density1D {
    values: Vec<f64>,
    length: f64,
}

impl Density1D {
    /// Rescales positive samples to mass `length`.
    pub fn new(values: Vec<f64>, length: f64) -> Result<Self> {
        if values.len() < 4 {
            return Err(OitError::InvalidField("need at least 4 samples".into()));
        }
        if !(length > 0.0) {
            return Err(OitError::InvalidParameter(format!("length {length}")));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(OitError::NotStrict);
        }
        let h = length / values.len() as f64;
        let mass: f64 = values.iter().sum::<f64>() * h;
        let values = values.into_iter().map(|v| v * length / mass).collect();
        Ok(Self { values, length })
    }

    pub fn from_fn(n: usize, length: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = length / n as f64;
        Self::new((0..n).map(|i| f(i as f64 * h)).collect(), length)
    }

    pub fn uniform(n: usize, length: f64) -> Self {
        Self {
            values: vec![1.0; n],
            length,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing()
    }

    /// Cumulative integral `C(x) = ∫₀ˣ I` as a monotone interpolant.
    pub fn cumulative(&self) -> Hermite1D {
        let n = self.len();
        let h = self.spacing();
        let v = &self.values;
        let at = |i: isize| v[i.rem_euclid(n as isize) as usize];
        let mut c = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n as isize {
            c.push(acc);
            // integral of the cubic through i-1..i+2 over [x_i, x_{i+1}]
            acc += h / 24.0 * (-at(i - 1) + 13.0 * at(i) + 13.0 * at(i + 1) - at(i + 2));
        }
        Hermite1D::new(h, c, v.clone(), acc)
    }

    /// Periodic interpolant of the intensity.
    pub fn interpolant(&self) -> Hermite1D {
        Hermite1D::from_values(self.spacing(), self.values.clone(), 0.0)
    }
}

/// Cubic Hermite interpolant on nodes `xᵢ = i·h`, extended by
/// `y(x + n·h) = y(x) + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermite1D {
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
    shift: f64,
}

impl Hermite1D {
    /// Interpolant with prescribed node slopes, limited to stay monotone
    /// wherever the data are.
    pub fn new(h: f64, y: Vec<f64>, slopes: Vec<f64>, shift: f64) -> Self {
        let mut s = Self { h, y, m: slopes, shift };
        s.limit();
        s
    }

    /// Interpolant with slopes from fourth-order central differences.
    pub fn from_values(h: f64, y: Vec<f64>, shift: f64) -> Self {
        let n = y.len() as isize;
        let tmp = Self {
            h,
            y,
            m: Vec::new(),
            shift,
        };
        let slopes = (0..n)
            .map(|i| (-tmp.node(i + 2) + 8.0 * tmp.node(i + 1) - 8.0 * tmp.node(i - 1) + tmp.node(i - 2)) / (12.0 * h))
            .collect();
        Self::new(h, tmp.y, slopes, shift)
    }

    fn n(&self) -> isize {
        self.y.len() as isize
    }

    /// Node value with the periodic shift applied.
    fn node(&self, i: isize) -> f64 {
        let n = self.n();
        let wraps = i.div_euclid(n);
        self.y[i.rem_euclid(n) as usize] + wraps as f64 * self.shift
    }

    fn slope(&self, i: isize) -> f64 {
        self.m[i.rem_euclid(self.n()) as usize]
    }

    /// Fritsch–Carlson limiter on monotone segments.
    fn limit(&mut self) {
        let n = self.n();
        for i in 0..n {
            let delta = (self.node(i + 1) - self.node(i)) / self.h;
            let (a, b) = (i as usize, (i + 1).rem_euclid(n) as usize);
            if delta == 0.0 {
                self.m[a] = 0.0;
                self.m[b] = 0.0;
                continue;
            }
            let alpha = self.m[a] / delta;
            let beta = self.m[b] / delta;
            if alpha < 0.0 || beta < 0.0 {
                continue;
            }
            let r = alpha * alpha + beta * beta;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                self.m[a] = tau * alpha * delta;
                self.m[b] = tau * beta * delta;
            }
        }
    }

    fn segment(&self, x: f64) -> (isize, f64) {
        let u = x / self.h;
        let k = u.floor();
        (k as isize, u - k)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (k, t) = self.segment(x);
        if t == 0.0 {
            return self.node(k);
        }
        let (y0, y1) = (self.node(k), self.node(k + 1));
        let (m0, m1) = (self.slope(k) * self.h, self.slope(k + 1) * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (k, t) = self.segment(x);
        let (y0, y1) = (self.node(k), self.node(k + 1));
        let (m0, m1) = (self.slope(k) * self.h, self.slope(k + 1) * self.h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / self.h
    }

    /// Solves `eval(x) = target` for an increasing interpolant.
    pub fn inverse(&self, target: f64) -> f64 {
        let n = self.n();
        // locate the period, then the segment, by bisection on node values
        let wraps = if self.shift > 0.0 {
            ((target - self.y[0]) / self.shift).floor()
        } else {
            0.0
        };
        let local = target - wraps * self.shift;
        let (mut lo, mut hi) = (0isize, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.node(mid) <= local {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let base = wraps * n as f64 * self.h;
        if self.node(lo) == local {
            return base + lo as f64 * self.h;
        }
        let (mut a, mut b) = (lo as f64 * self.h, (lo + 1) as f64 * self.h);
        let mut x = 0.5 * (a + b);
        for _ in 0..100 {
            let f = self.eval(x) - local;
            if f == 0.0 || b - a < 1e-15 * self.h {
                break;
            }
            if f > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let d = self.derivative(x);
            let newton = x - f / d;
            x = if d > 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
        }
        base + x
    }
}

/// A monotone degree-one circle map `φ`, sampled at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport1D {
    map: Hermite1D,
    length: f64,
}

impl Transport1D {
    /// Map with node values `φ(xᵢ)`; values must be strictly increasing
    /// within one period and below `φ(x₀) + L`.
    pub fn from_samples(values: Vec<f64>, length: f64) -> Result<Self> {
        let n = values.len();
        if n < 4 {
            return Err(OitError::InvalidField("need at least 4 samples".into()));
        }
        let inc = values.windows(2).all(|w| w[1] > w[0]) && values[n - 1] < values[0] + length;
        if !inc {
            return Err(OitError::InvalidField("map samples are not increasing".into()));
        }
        let h = length / n as f64;
        Ok(Self {
            map: Hermite1D::from_values(h, values, length),
            length,
        })
    }

    /// `φ(xᵢ)` at the nodes.
    pub fn values(&self) -> &[f64] {
        &self.map.y
    }

    /// `φ(xᵢ) − xᵢ`.
    pub fn displacement(&self) -> Vec<f64> {
        let h = self.map.h;
        self.map.y.iter().enumerate().map(|(i, v)| v - i as f64 * h).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.map.eval(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.map.derivative(x)
    }

    pub fn inverse_eval(&self, y: f64) -> f64 {
        self.map.inverse(y)
    }

    /// `sup |(I₀∘φ⁻¹)·|Dφ⁻¹| − I₁|` over the nodes of `I₁`.
    ///
    /// `φ⁻¹` is obtained by inverting the interpolant of `φ` and `|Dφ⁻¹|`
    /// as the reciprocal of its derivative.
    pub fn matching_residual(&self, i0: &Density1D, i1: &Density1D) -> f64 {
        let interp0 = i0.interpolant();
        let h = i1.spacing();
        i1.values()
            .iter()
            .enumerate()
            .map(|(j, &target)| {
                let y = j as f64 * h;
                let x = self.inverse_eval(y);
                let pushed = interp0.eval(x) / self.derivative(x);
                (pushed - target).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `self ∘ inner`, sampled at the nodes.
    pub fn compose(&self, inner: &Transport1D) -> Result<Transport1D> {
        let vals = inner.values().iter().map(|&x| self.eval(x)).collect();
        Transport1D::from_samples(vals, self.length)
    }
}

fn check_pair(i0: &Density1D, i1: &Density1D) -> Result<()> {
    if i0.len() != i1.len() || i0.length != i1.length {
        return Err(OitError::GridMismatch);
    }
    Ok(())
}

/// The monotone map `φ = C₁⁻¹ ∘ C₀` with `φ_* I₀ = I₁` and `φ(0) = 0`.
pub fn cdf_transport_1d(i0: &Density1D, i1: &Density1D) -> Result<Transport1D> {
    cdf_transport_1d_offset(i0, i1, 0.0)
}

/// `x ↦ C₁⁻¹(C₀(x) + c)`.
///
/// On the circle every orientation-preserving map with `φ_* I₀ = I₁` has this
/// form for some mass offset `c`.
pub fn cdf_transport_1d_offset(i0: &Density1D, i1: &Density1D, c: f64) -> Result<Transport1D> {
    check_pair(i0, i1)?;
    let c0 = i0.cumulative();
    let c1 = i1.cumulative();
    let vals = c0.y.iter().map(|&m| c1.inverse(m + c)).collect();
    Transport1D::from_samples(vals, i0.length)
}

/// Mass offset `c` of the member of the family closest to the map with
/// node values `values`, averaged over the nodes.
pub fn fit_mass_offset(i0: &Density1D, i1: &Density1D, values: &[f64]) -> Result<f64> {
    check_pair(i0, i1)?;
    if values.len() != i0.len() {
        return Err(OitError::GridMismatch);
    }
    let c0 = i0.cumulative();
    let c1 = i1.cumulative();
    let sum: f64 = values.iter().zip(&c0.y).map(|(&v, &m)| c1.eval(v) - m).sum();
    Ok(sum / values.len() as f64)
}

/// Fisher–Rao geodesic between two circle densities.
pub fn fisher_rao_geodesic_1d(i0: &Density1D, i1: &Density1D, t: f64) -> Result<Density1D> {
    check_pair(i0, i1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(OitError::InvalidParameter(format!("t = {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(i0.clone());
    }
    if t == 1.0 {
        return Ok(i1.clone());
    }
    let h = i0.spacing();
    let f0: Vec<f64> = i0.values.iter().map(|v| v.sqrt()).collect();
    let f1: Vec<f64> = i1.values.iter().map(|v| v.sqrt()).collect();
    let dot: f64 = f0.iter().zip(&f1).map(|(a, b)| a * b).sum::<f64>() * h;
    let theta = (dot / i0.length).clamp(-1.0, 1.0).acos();
    if theta >= std::f64::consts::PI - 1e-8 {
        return Err(OitError::Antipodal { theta });
    }
    let (a, b) = if theta < 1e-12 {
        (1.0 - t, t)
    } else {
        (((1.0 - t) * theta).sin() / theta.sin(), (t * theta).sin() / theta.sin())
    };
    let vals = f0.iter().zip(&f1).map(|(u, v)| (a * u + b * v).powi(2)).collect();
    Density1D::new(vals, i0.length)
}
