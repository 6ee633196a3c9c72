//! Random sampling from a density by transporting uniform samples.
//!
//! Once the optimal information transport map `φ` with `φ_* vol = μ` is
//! known, `φ(x)` is distributed according to `μ` whenever `x` is uniform.
//! Solving for `φ` is the expensive part; every further batch costs one
//! interpolation per point, so [`Sampler`] keeps the map around.
//!
//! Uniform points come from ChaCha8 with one stream per fixed-size chunk, so
//! a batch is bit-identical regardless of how many threads draw it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{OitError, Result};
use crate::grid::{Density, Grid};
use crate::lifting::solve_oit;
use crate::spectral::SpectralPlan;
use crate::warp::{transform_points, Warp};

/// Points drawn per generator stream.
const CHUNK: usize = 4096;

/// A batch of points in the fundamental domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub points: Vec<(f64, f64)>,
    pub seed: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One `x,y` line per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 40);
        out.push_str("x,y\n");
        for (x, y) in &self.points {
            out.push_str(&format!("{x:.17e},{y:.17e}\n"));
        }
        out
    }
}

/// `n` uniform points in `[0, Lx) × [0, Ly)`, determined by `seed`.
pub fn draw_uniform(n: usize, seed: u64, grid: Grid) -> Result<SampleBatch> {
    if n == 0 {
        return Err(OitError::InvalidParameter("sample count must be at least 1".into()));
    }
    let (lx, ly) = (grid.lx(), grid.ly());
    let chunks: Vec<Vec<(f64, f64)>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len)
                .map(|_| (rng.random::<f64>() * lx, rng.random::<f64>() * ly))
                .collect()
        })
        .collect();
    Ok(SampleBatch {
        points: chunks.concat(),
        seed,
    })
}

/// Draws samples of one density through a cached transport map.
#[derive(Debug, Clone)]
pub struct Sampler {
    map: Warp,
}

impl Sampler {
    /// Solves for the map pushing `vol` forward to `mu` with `n_lift` steps.
    pub fn new(plan: &SpectralPlan, mu: &Density, n_lift: usize) -> Result<Self> {
        mu.require_strict()?;
        plan.grid().check_same(mu.grid())?;
        Ok(Self {
            map: solve_oit(plan, mu, n_lift)?.transport_map(),
        })
    }

    /// Reuses a map with `φ_* vol = μ`, e.g. one loaded from disk.
    pub fn from_map(map: Warp) -> Self {
        Self { map }
    }

    pub fn map(&self) -> &Warp {
        &self.map
    }

    /// Transports `draw_uniform(n, seed)` through the map.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        let uniform = draw_uniform(n, seed, *self.map.grid())?;
        Ok(self.transport(&uniform))
    }

    pub fn transport(&self, batch: &SampleBatch) -> SampleBatch {
        SampleBatch {
            points: transform_points(&self.map, &batch.points),
            seed: batch.seed,
        }
    }
}

/// `n` samples of `mu` from a fresh `n_lift`-step transport solve.
pub fn sample_density(plan: &SpectralPlan, mu: &Density, n: usize, seed: u64, n_lift: usize) -> Result<SampleBatch> {
    Sampler::new(plan, mu, n_lift)?.sample(n, seed)
}

/// Pearson goodness-of-fit result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2 {
    pub stat: f64,
    pub dof: usize,
    /// `P(X ≥ stat)` for `X ~ χ²(dof)`.
    pub p_value: f64,
}

impl Chi2 {
    /// Accepts the fit at `level` (e.g. 0.999) when the statistic lies below
    /// the `level` quantile.
    pub fn accepts(&self, level: f64) -> bool {
        self.stat <= chi2_quantile(self.dof, level)
    }
}

/// Quantile of the χ² distribution with `dof` degrees of freedom.
pub fn chi2_quantile(dof: usize, level: f64) -> f64 {
    ChiSquared::new(dof as f64).expect("positive dof").inverse_cdf(level)
}

/// Probability mass of `mu` in each of `bx × by` equal bins, row-major.
///
/// Bins must be unions of grid cells; the mass is integrated with the
/// trapezoidal rule on each bin.
pub fn bin_masses(mu: &Density, bx: usize, by: usize) -> Result<Vec<f64>> {
    let g = *mu.grid();
    if bx == 0 || by == 0 || !g.nx().is_multiple_of(bx) || !g.ny().is_multiple_of(by) {
        return Err(OitError::InvalidParameter(format!(
            "{bx}×{by} bins do not divide the {}×{} grid",
            g.nx(),
            g.ny()
        )));
    }
    let (sx, sy) = (g.nx() / bx, g.ny() / by);
    let mut mass = vec![0.0; bx * by];
    let v = mu.intensity().values();
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let val = v[g.index(i, j)] * g.cell_area();
            // a node on a bin edge is shared by the bins on both sides
            let xs: &[(usize, f64)] = &if i % sx == 0 {
                [((i / sx + bx - 1) % bx, 0.5), (i / sx, 0.5)]
            } else {
                [(i / sx, 1.0), (0, 0.0)]
            };
            let ys: &[(usize, f64)] = &if j % sy == 0 {
                [((j / sy + by - 1) % by, 0.5), (j / sy, 0.5)]
            } else {
                [(j / sy, 1.0), (0, 0.0)]
            };
            for &(ci, wi) in xs {
                for &(cj, wj) in ys {
                    mass[cj * bx + ci] += wi * wj * val;
                }
            }
        }
    }
    let total = g.total_volume();
    Ok(mass.into_iter().map(|m| m / total).collect())
}

/// Bin counts of a batch on `bx × by` equal bins, row-major.
pub fn bin_counts(batch: &SampleBatch, grid: Grid, bx: usize, by: usize) -> Vec<usize> {
    let mut counts = vec![0; bx * by];
    for &(x, y) in &batch.points {
        let (x, y) = grid.wrap(x, y);
        let i = ((x / grid.lx() * bx as f64) as usize).min(bx - 1);
        let j = ((y / grid.ly() * by as f64) as usize).min(by - 1);
        counts[j * bx + i] += 1;
    }
    counts
}

/// Pearson χ² statistic of `batch` against `mu` on `bx × by` bins.
pub fn chi2_gof(batch: &SampleBatch, mu: &Density, bx: usize, by: usize) -> Result<Chi2> {
    let p = bin_masses(mu, bx, by)?;
    let n = batch.len() as f64;
    let min_expected = p.iter().fold(f64::INFINITY, |a, &q| a.min(q * n));
    if min_expected < 5.0 {
        return Err(OitError::Underfilled(format!(
            "smallest expected bin count is {min_expected:.2}, need at least 5"
        )));
    }
    let counts = bin_counts(batch, *mu.grid(), bx, by);
    let stat = counts
        .iter()
        .zip(&p)
        .map(|(&c, &q)| {
            let e = q * n;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = bx * by - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat);
    Ok(Chi2 { stat, dof, p_value })
}
