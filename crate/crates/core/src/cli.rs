//! Batch jobs behind the `oitk` binary.
//!
//! A [`JobConfig`] names a command, its inputs and solver settings;
//! [`execute`] loads the inputs, runs the solver, writes the artifacts and
//! returns a [`Report`] that serializes to the JSON shipped in
//! `schemas/report.schema.json`.
//!
//! Every warp written by a job is the map `φ` that pushes the source (the
//! uniform density when there is none) forward to the target or to the
//! point reached on the way there.
//!
//! Output directory layout:
//!
//! | File | Written by |
//! |------|------------|
//! | `warp.f64` + `warp.json` | all commands except `distances` and `sample --warp` |
//! | `jacobian.png` | determinant of `Dφ`, every command that writes a warp |
//! | `warped_source.png` | `φ_* μ₀`, matching and registration commands |
//! | `energy.csv` | `register` |
//! | `frames/frame_NNNN.png` | `morph` every `checkpoint_stride` steps (default 1), `register` when it is set |
//! | `samples.csv` | `sample` |
//! | `report.json` | all commands |

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compat::{
    lift_path_conformal_to, lift_path_flat_compatible_to, symmetric_match_detailed, FlatCompatibleMetric, MetricKind,
};
use crate::error::{OitError, Result};
use crate::flow::{run_flow_with, FlowParams, Splitting};
use crate::geometry::{fisher_rao_distance, probability_distances};
use crate::glyphs::{glyph_density, Glyph};
use crate::grid::{normalize_density, Density, Grid, ScalarField};
use crate::io::{self, Colormap, GridHeader};
use crate::lifting::{lift_path_to, solve_inexact_compatible, solve_oit, FisherRaoPath, LiftOptions, LiftResult};
use crate::sampling::{chi2_gof, Chi2, Sampler};
use crate::spectral::SpectralPlan;
use crate::warp::{displacement_jacobian, pushforward_density, Warp};

/// Resolution of builtin inputs when no grid is given.
pub const DEFAULT_RESOLUTION: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Exact matching: `solve_oit` from the volume form, or symmetric
    /// matching when a source is given.
    MatchExact,
    /// Inexact compatible matching from the volume form.
    MatchInexact,
    /// Gradient-flow registration of a source onto a target.
    Register,
    /// Frames of the lifted geodesic from source to target.
    Morph,
    /// Transport-based samples of the target.
    Sample,
    /// Distances between source and target.
    Distances,
    /// Lift of the geodesic from source to target up to `t_end`.
    Lift,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::MatchExact,
        Command::MatchInexact,
        Command::Register,
        Command::Morph,
        Command::Sample,
        Command::Distances,
        Command::Lift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::MatchExact => "match-exact",
            Command::MatchInexact => "match-inexact",
            Command::Register => "register",
            Command::Morph => "morph",
            Command::Sample => "sample",
            Command::Distances => "distances",
            Command::Lift => "lift",
        }
    }

    fn lifts(self) -> bool {
        !matches!(self, Command::Register | Command::Distances)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = OitError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| OitError::InvalidParameter(format!("unknown command `{s}`")))
    }
}

/// Densities available without a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Uniform,
    /// `1 − 0.8 cos x cos 2y`.
    Cosine,
    Letter(Glyph),
}

/// A density input: `builtin:NAME` (`uniform`, `cosine`, `J`, `V`) or a path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    Builtin(Builtin),
    File(PathBuf),
}

impl FromStr for Input {
    type Err = OitError;

    fn from_str(s: &str) -> Result<Self> {
        let Some(name) = s.strip_prefix("builtin:") else {
            return Ok(Input::File(PathBuf::from(s)));
        };
        let b = match name {
            "uniform" => Builtin::Uniform,
            "cosine" => Builtin::Cosine,
            other => Builtin::Letter(
                Glyph::parse(other).ok_or_else(|| OitError::InvalidParameter(format!("unknown builtin `{other}`")))?,
            ),
        };
        Ok(Input::Builtin(b))
    }
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Input::Builtin(Builtin::Uniform) => f.write_str("builtin:uniform"),
            Input::Builtin(Builtin::Cosine) => f.write_str("builtin:cosine"),
            Input::Builtin(Builtin::Letter(Glyph::J)) => f.write_str("builtin:J"),
            Input::Builtin(Builtin::Letter(Glyph::V)) => f.write_str("builtin:V"),
            Input::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl Serialize for Input {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Input {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for MetricKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            MetricKind::Conformal => "conformal",
            MetricKind::Flat => "flat",
        })
    }
}

impl<'de> Deserialize<'de> for MetricKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Grid settings; resolution applies to builtins and must agree with files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridOverride {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub lx: Option<f64>,
    pub ly: Option<f64>,
}

/// One job. Unset optional settings take per-command defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub command: Command,
    pub source: Option<Input>,
    pub target: Option<Input>,
    pub grid: GridOverride,
    /// Lift steps `N`; defaults to 20, or `1/eps` when only `eps` is set.
    pub steps: Option<usize>,
    /// Lift step `1/N`, or the flow step for `register` (default 0.2).
    pub eps: Option<f64>,
    /// Volume penalty; defaults to 1 for `match-inexact`, 0.05 for `register`.
    pub sigma: Option<f64>,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub lambda: f64,
    /// Added to `[0, 1]` images before normalizing; defaults to 0.2 for
    /// letters and 0 otherwise.
    pub background_floor: Option<f64>,
    pub metric_kind: MetricKind,
    pub strang: bool,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    /// Frames are written every this many steps; 0 writes none.
    pub checkpoint_stride: usize,
    /// Sample count.
    pub samples: usize,
    /// Bins per axis of the goodness-of-fit check.
    pub bins: usize,
    /// End time of `lift`.
    pub t_end: f64,
    /// Cached transport map for `sample`.
    pub warp: Option<PathBuf>,
}

impl JobConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            source: None,
            target: None,
            grid: GridOverride::default(),
            steps: None,
            eps: None,
            sigma: None,
            max_iter: 400,
            rel_tol: 0.0,
            lambda: 1.0,
            background_floor: None,
            metric_kind: MetricKind::Conformal,
            strang: false,
            out_dir: None,
            seed: 0,
            checkpoint_stride: 0,
            samples: 100_000,
            bins: 16,
            t_end: 1.0,
            warp: None,
        }
    }

    fn lift_steps(&self) -> Result<usize> {
        let bad = |m: String| Err(OitError::InvalidParameter(m));
        match (self.steps, self.eps) {
            (Some(0), _) => bad("steps must be at least 1".into()),
            (Some(n), None) => Ok(n),
            (None, None) => Ok(20),
            (steps, Some(eps)) => {
                if !(eps > 0.0 && eps <= 1.0) {
                    return bad(format!("eps must lie in (0, 1], got {eps}"));
                }
                let n = (1.0 / eps).round() as usize;
                if (n as f64 * eps - 1.0).abs() > 1e-9 {
                    return bad(format!("eps = {eps} is not 1/N for an integer N"));
                }
                match steps {
                    Some(s) if s != n => bad(format!("steps {s} disagree with eps {eps}")),
                    _ => Ok(n),
                }
            }
        }
    }

    fn sigma_or(&self, default: f64) -> Result<f64> {
        let s = self.sigma.unwrap_or(default);
        if !(s > 0.0 && s.is_finite()) {
            return Err(OitError::InvalidParameter(format!("sigma must be positive, got {s}")));
        }
        Ok(s)
    }

    /// Checks required inputs and parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OitError::InvalidParameter(m));
        let c = self.command;
        let needs_source = matches!(c, Command::Register | Command::Morph | Command::Distances);
        let needs_target = !(c == Command::Sample && self.warp.is_some());
        if needs_source && self.source.is_none() {
            return bad(format!("{c} needs a source"));
        }
        if needs_target && self.target.is_none() {
            return bad(format!("{c} needs a target"));
        }
        if matches!(c, Command::MatchInexact | Command::Sample) && self.source.is_some() {
            return bad(format!("{c} starts from the volume form and takes no source"));
        }
        if self.warp.is_some() && c != Command::Sample {
            return bad("a cached warp is only used by sample".into());
        }
        if c.lifts() {
            self.lift_steps()?;
        }
        if c == Command::MatchInexact {
            self.sigma_or(1.0)?;
        }
        if c == Command::Register {
            self.flow_params()?;
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if let Some(f) = self.background_floor {
            if !(f >= 0.0 && f.is_finite()) {
                return bad(format!("background floor must be nonnegative, got {f}"));
            }
        }
        if !(0.0..=1.0).contains(&self.t_end) {
            return bad(format!("t_end must lie in [0, 1], got {}", self.t_end));
        }
        if self.samples == 0 || self.bins == 0 {
            return bad("samples and bins must be at least 1".into());
        }
        for (name, v) in [("lx", self.grid.lx), ("ly", self.grid.ly)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        Ok(())
    }

    fn flow_params(&self) -> Result<FlowParams> {
        let mut p = FlowParams::new(self.sigma_or(0.05)?, self.eps.unwrap_or(0.2))?;
        p.max_iter = self.max_iter;
        p.rel_tol = self.rel_tol;
        p.lambda = self.lambda;
        if self.strang {
            p.splitting = Splitting::Strang;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Exit code for a failed job: 2 configuration, 3 input, 4 solver
/// divergence, 5 I/O.
pub fn exit_code(err: &OitError) -> i32 {
    match err {
        OitError::InvalidParameter(_) | OitError::Underfilled(_) => 2,
        OitError::Input(_)
        | OitError::InvalidGrid(_)
        | OitError::InvalidField(_)
        | OitError::InvalidDensity(_)
        | OitError::GridMismatch
        | OitError::NotStrict
        | OitError::Antipodal { .. } => 3,
        OitError::StepTooLarge { .. }
        | OitError::Folded { .. }
        | OitError::EnergyIncrease { .. }
        | OitError::DegenerateDenominator { .. }
        | OitError::OutOfDomain { .. } => 4,
        OitError::Io(_) => 5,
    }
}

/// Caps the global thread pool at `value` threads (the `OITK_THREADS`
/// setting). Has no effect once the pool is running.
pub fn configure_threads(value: Option<&str>) -> Result<()> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| OitError::InvalidParameter(format!("OITK_THREADS must be a positive integer, got `{v}`")))?;
    // an already initialized pool keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub solve: f64,
    pub write: f64,
    pub total: f64,
}

/// Quality of a map `φ` with `φ_* μ₀ ≈ μ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapQuality {
    /// `‖φ_* μ₀ − μ₁‖₂ / ‖μ₁‖₂`.
    pub mismatch: f64,
    /// Extremes of `|Dφ|`.
    pub min_jacobian: f64,
    pub max_jacobian: f64,
    /// `sup |φ(φ⁻¹(x)) − x|`.
    pub consistency_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySplit {
    pub total: f64,
    pub volume: f64,
    pub mismatch: f64,
}

/// Command-specific results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    MatchExact {
        steps: usize,
        /// Largest lift residual.
        residual: f64,
        symmetric: bool,
        quality: MapQuality,
    },
    MatchInexact {
        steps: usize,
        sigma: f64,
        stop_time: f64,
        residual: f64,
        /// `d_F(vol, φ_* vol) / d_F(vol, μ₁)`, ideally the stop time.
        distance_ratio: f64,
        quality: MapQuality,
    },
    Register {
        iterations: usize,
        converged: bool,
        sigma: f64,
        eps: f64,
        initial_energy: EnergySplit,
        final_energy: EnergySplit,
        /// Minimum of the tracked `|Dφ⁻¹|`.
        min_tracked_jacobian: f64,
        clamped_cells: usize,
        max_mass_correction: f64,
        quality: MapQuality,
    },
    Morph {
        steps: usize,
        frames: usize,
        residual: f64,
        quality: MapQuality,
    },
    Sample {
        samples: usize,
        seed: u64,
        warp_reused: bool,
        /// Absent without a target or when a bin would expect fewer than 5 points.
        chi2: Option<Chi2>,
    },
    Distances {
        /// Angle between the square roots of the probability densities.
        fisher_rao: f64,
        /// The same distance for densities of mass `vol(M)`.
        fisher_rao_volume: f64,
        hellinger: f64,
        tv: f64,
        kl: f64,
        chi2: f64,
    },
    Lift {
        steps: usize,
        t_end: f64,
        residual: f64,
        path_energy: f64,
        quality: MapQuality,
    },
}

/// What a job did, as written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: JobConfig,
    pub grid: GridHeader,
    pub result: Outcome,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub timings: Timings,
}

fn builtin_density(b: Builtin, grid: Grid, floor: Option<f64>) -> Result<Density> {
    match b {
        Builtin::Uniform => Ok(Density::uniform(grid)),
        Builtin::Cosine => {
            let raw = ScalarField::from_fn(grid, |x, y| 1.0 - 0.8 * x.cos() * (2.0 * y).cos());
            let f = floor.unwrap_or(0.0);
            normalize_density(&raw.map(|v| v + f), true)
        }
        Builtin::Letter(g) => glyph_density(g, grid, floor.unwrap_or(0.2)),
    }
}

fn check_override(grid: &Grid, o: &GridOverride) -> Result<()> {
    let clash = o.nx.is_some_and(|n| n != grid.nx()) || o.ny.is_some_and(|n| n != grid.ny());
    if clash {
        return Err(OitError::Input(format!(
            "input is {}×{} but the configured grid is {}×{}",
            grid.nx(),
            grid.ny(),
            o.nx.unwrap_or(grid.nx()),
            o.ny.unwrap_or(grid.ny())
        )));
    }
    Ok(())
}

fn load_file(path: &Path, cfg: &JobConfig) -> Result<Density> {
    let floor = cfg.background_floor.unwrap_or(0.0);
    let mu = io::load_density(path, floor, false)?;
    let mut grid = *mu.grid();
    check_override(&grid, &cfg.grid)?;
    if cfg.grid.lx.is_some() || cfg.grid.ly.is_some() {
        grid = Grid::new(
            grid.nx(),
            grid.ny(),
            cfg.grid.lx.unwrap_or(grid.lx()),
            cfg.grid.ly.unwrap_or(grid.ly()),
        )?;
        let values = mu.into_intensity().into_values();
        return normalize_density(&ScalarField::from_values(grid, values)?, false);
    }
    Ok(mu)
}

/// Loads source and target; builtins follow the grid of any file input or
/// of a cached warp (`known`).
fn load_inputs(cfg: &JobConfig, known: Option<Grid>) -> Result<(Grid, Option<Density>, Option<Density>)> {
    let inputs = [cfg.source.as_ref(), cfg.target.as_ref()];
    let mut loaded: [Option<Density>; 2] = [None, None];
    if let Some(g) = &known {
        check_override(g, &cfg.grid)?;
    }
    let mut grid = known;
    for (slot, input) in loaded.iter_mut().zip(inputs) {
        if let Some(Input::File(p)) = input {
            let mu = load_file(p, cfg)?;
            if let Some(g) = &grid {
                g.check_same(mu.grid())?;
            }
            grid = Some(*mu.grid());
            *slot = Some(mu);
        }
    }
    let grid = match grid {
        Some(g) => g,
        None => {
            let o = &cfg.grid;
            let nx = o.nx.or(o.ny).unwrap_or(DEFAULT_RESOLUTION);
            let tau = std::f64::consts::TAU;
            Grid::new(nx, o.ny.unwrap_or(nx), o.lx.unwrap_or(tau), o.ly.unwrap_or(tau))?
        }
    };
    for (slot, input) in loaded.iter_mut().zip(inputs) {
        if let Some(Input::Builtin(b)) = input {
            *slot = Some(builtin_density(*b, grid, cfg.background_floor)?);
        }
    }
    let [source, target] = loaded;
    Ok((grid, source, target))
}

fn strict(mu: &Density) -> Result<Density> {
    normalize_density(mu.intensity(), true)
}

/// `|Dφ|` from the forward displacement.
fn forward_jacobian(w: &Warp) -> ScalarField {
    displacement_jacobian(w.forward_displacement())
}

fn quality(map: &Warp, mu0: &Density, mu1: &Density) -> Result<MapQuality> {
    let (pushed, _) = pushforward_density(map, mu0)?;
    let diff = pushed.intensity().zip_map(mu1.intensity(), |a, b| a - b);
    let jac = forward_jacobian(map);
    Ok(MapQuality {
        mismatch: diff.norm_l2() / mu1.intensity().norm_l2(),
        min_jacobian: jac.min(),
        max_jacobian: jac.max(),
        consistency_error: map.consistency_error(),
    })
}

fn refuse_fold(q: &MapQuality) -> Result<()> {
    if !(q.min_jacobian > 0.0) {
        return Err(OitError::Folded {
            min_jacobian: q.min_jacobian,
            iteration: 0,
        });
    }
    Ok(())
}

/// Turns a lift snapshot `φ(t)` into `φ(t)⁻¹` with its Jacobian, the map
/// pushing the start of the path forward to `μ(t)`.
fn snapshot_map(snapshot: &Warp) -> Result<Warp> {
    Warp::from_displacements(
        snapshot.inverse_displacement().clone(),
        snapshot.forward_displacement().clone(),
    )
}

/// Artifacts gathered while a job runs, written afterwards in a fixed order.
#[derive(Default)]
struct Artifacts {
    warp: Option<Warp>,
    warped_source: Option<Density>,
    energy: Option<(Vec<crate::flow::EnergyTerms>, f64)>,
    frames: Vec<(usize, ScalarField)>,
    samples: Option<String>,
}

impl Artifacts {
    fn write(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        let mut put = |name: &str| {
            out.push(name.to_string());
            dir.join(name)
        };
        if let Some(w) = &self.warp {
            io::save_warp(&put("warp.f64"), w)?;
            put("warp.json");
            io::write_heatmap(&put("jacobian.png"), &forward_jacobian(w), Colormap::Jacobian)?;
        }
        if let Some(mu) = &self.warped_source {
            let max = mu.intensity().max();
            io::write_heatmap(&put("warped_source.png"), mu.intensity(), Colormap::Gray { max })?;
        }
        if let Some((trace, sigma)) = &self.energy {
            io::write_energy_csv(&put("energy.csv"), trace, *sigma)?;
        }
        if !self.frames.is_empty() {
            fs::create_dir_all(dir.join("frames"))?;
            // one scale for the whole sequence
            let max = self.frames.iter().map(|(_, f)| f.max()).fold(0.0, f64::max);
            for (k, f) in &self.frames {
                io::write_heatmap(&put(&format!("frames/frame_{k:04}.png")), f, Colormap::Gray { max })?;
            }
        }
        if let Some(csv) = &self.samples {
            fs::write(put("samples.csv"), csv)?;
        }
        Ok(out)
    }
}

fn lift_quality(res: &LiftResult, mu0: &Density, mu1: &Density) -> Result<(Warp, MapQuality)> {
    let map = res.transport_map();
    let q = quality(&map, mu0, mu1)?;
    refuse_fold(&q)?;
    Ok((map, q))
}

/// Runs a job: loads inputs, solves, writes artifacts into `out_dir` (if
/// set) and returns the report, which is also saved as `report.json`.
pub fn execute(cfg: &JobConfig) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let cached = cfg.warp.as_deref().map(io::load_warp).transpose()?;
    let (grid, source, target) = load_inputs(cfg, cached.as_ref().map(|w| *w.grid()))?;
    let plan = SpectralPlan::new(grid);
    let load = start.elapsed().as_secs_f64();
    let solve_start = Instant::now();
    let mut art = Artifacts::default();
    let uniform = Density::uniform(grid);
    let result = match cfg.command {
        Command::MatchExact => {
            let n = cfg.lift_steps()?;
            let mu1 = strict(target.as_ref().expect("validated"))?;
            match &source {
                None => {
                    let res = solve_oit(&plan, &mu1, n)?;
                    let (map, q) = lift_quality(&res, &uniform, &mu1)?;
                    art.warped_source = Some(pushforward_density(&map, &uniform)?.0);
                    art.warp = Some(map);
                    Outcome::MatchExact {
                        steps: n,
                        residual: res.residual,
                        symmetric: false,
                        quality: q,
                    }
                }
                Some(mu0) => {
                    let mu0 = strict(mu0)?;
                    let m = symmetric_match_detailed(&plan, &mu0, &mu1, n, cfg.metric_kind)?;
                    let q = quality(&m.warp, &mu0, &mu1)?;
                    refuse_fold(&q)?;
                    art.warped_source = Some(pushforward_density(&m.warp, &mu0)?.0);
                    art.warp = Some(m.warp);
                    Outcome::MatchExact {
                        steps: n,
                        residual: m.residuals[0].max(m.residuals[1]),
                        symmetric: true,
                        quality: q,
                    }
                }
            }
        }
        Command::MatchInexact => {
            let n = cfg.lift_steps()?;
            let sigma = cfg.sigma_or(1.0)?;
            let mu1 = strict(target.as_ref().expect("validated"))?;
            let res = solve_inexact_compatible(&plan, &mu1, sigma, n)?;
            let (map, q) = lift_quality(&res, &uniform, &mu1)?;
            let (pushed, _) = pushforward_density(&map, &uniform)?;
            let ratio = fisher_rao_distance(&uniform, &pushed)? / fisher_rao_distance(&uniform, &mu1)?;
            art.warped_source = Some(pushed);
            art.warp = Some(map);
            Outcome::MatchInexact {
                steps: res.steps,
                sigma,
                stop_time: res.t_end,
                residual: res.residual,
                distance_ratio: ratio,
                quality: q,
            }
        }
        Command::Register => {
            let params = cfg.flow_params()?;
            let mu0 = source.as_ref().expect("validated");
            let mu1 = target.as_ref().expect("validated");
            let stride = cfg.checkpoint_stride;
            let mut frames = Vec::new();
            if stride > 0 {
                frames.push((0, mu0.intensity().clone()));
            }
            let (state, rep) = run_flow_with(&plan, mu0, mu1, &params, |s| {
                if stride > 0 && s.iteration % stride == 0 {
                    if let Some(f) = &s.half_density {
                        frames.push((s.iteration, f.map(|v| v * v)));
                    }
                }
            })?;
            let q = quality(&state.warp, mu0, mu1)?;
            let split = |e: crate::flow::EnergyTerms| EnergySplit {
                total: e.total,
                volume: e.volume,
                mismatch: e.mismatch,
            };
            art.warped_source = Some(pushforward_density(&state.warp, mu0)?.0);
            art.warp = Some(state.warp.clone());
            art.energy = Some((state.energy_trace.clone(), params.sigma));
            art.frames = frames;
            Outcome::Register {
                iterations: rep.iterations,
                converged: rep.converged,
                sigma: params.sigma,
                eps: rep.eps,
                initial_energy: split(rep.initial_energy),
                final_energy: split(rep.final_energy),
                min_tracked_jacobian: rep.min_jacobian,
                clamped_cells: rep.clamped_cells,
                max_mass_correction: rep.max_mass_correction,
                quality: q,
            }
        }
        Command::Morph | Command::Lift => {
            let n = cfg.lift_steps()?;
            let mu0 = strict(source.as_ref().unwrap_or(&uniform))?;
            let mu1 = strict(target.as_ref().expect("validated"))?;
            let t_end = if cfg.command == Command::Morph { 1.0 } else { cfg.t_end };
            let opts = LiftOptions {
                checkpoint_stride: if cfg.command == Command::Morph {
                    cfg.checkpoint_stride.max(1)
                } else {
                    0
                },
                ..LiftOptions::default()
            };
            let path = FisherRaoPath::new(&mu0, &mu1)?;
            let res = if source.is_none() {
                lift_path_to(&plan, &path, n, t_end, &opts)?
            } else {
                match cfg.metric_kind {
                    MetricKind::Conformal => lift_path_conformal_to(&plan, &path, n, t_end, &opts)?,
                    MetricKind::Flat => {
                        let metric = FlatCompatibleMetric::compatible_with(&plan, &mu0, n)?;
                        lift_path_flat_compatible_to(&plan, &path, &metric, n, t_end, &opts)?
                    }
                }
            };
            let reached = crate::geometry::fisher_rao_geodesic(&mu0, &mu1, t_end)?;
            let (map, q) = lift_quality(&res, &mu0, &reached)?;
            art.warped_source = Some(pushforward_density(&map, &mu0)?.0);
            art.warp = Some(map);
            if cfg.command == Command::Morph {
                art.frames.push((0, mu0.intensity().clone()));
                for (k, (_, snap)) in res.checkpoints.iter().enumerate() {
                    let step = ((k + 1) * opts.checkpoint_stride).min(res.steps);
                    let (frame, _) = pushforward_density(&snapshot_map(snap)?, &mu0)?;
                    art.frames.push((step, frame.into_intensity()));
                }
                Outcome::Morph {
                    steps: res.steps,
                    frames: art.frames.len(),
                    residual: res.residual,
                    quality: q,
                }
            } else {
                Outcome::Lift {
                    steps: res.steps,
                    t_end: res.t_end,
                    residual: res.residual,
                    path_energy: res.path_energy(),
                    quality: q,
                }
            }
        }
        Command::Sample => {
            let reused = cfg.warp.is_some();
            let sampler = match cached {
                Some(map) => Sampler::from_map(map),
                None => Sampler::new(&plan, &strict(target.as_ref().expect("validated"))?, cfg.lift_steps()?)?,
            };
            let batch = sampler.sample(cfg.samples, cfg.seed)?;
            let chi2 = match &target {
                Some(mu) => match chi2_gof(&batch, mu, cfg.bins, cfg.bins) {
                    Ok(c) => Some(c),
                    Err(OitError::Underfilled(_)) => None,
                    Err(e) => return Err(e),
                },
                None => None,
            };
            art.samples = Some(batch.to_csv());
            if !reused {
                art.warp = Some(sampler.map().clone());
            }
            Outcome::Sample {
                samples: batch.len(),
                seed: cfg.seed,
                warp_reused: reused,
                chi2,
            }
        }
        Command::Distances => {
            let mu0 = source.as_ref().expect("validated");
            let mu1 = target.as_ref().expect("validated");
            let d = probability_distances(mu0, mu1)?;
            Outcome::Distances {
                fisher_rao: d.fisher_rao,
                fisher_rao_volume: fisher_rao_distance(mu0, mu1)?,
                hellinger: d.hellinger,
                tv: d.tv,
                kl: d.kl,
                chi2: d.chi2,
            }
        }
    };
    let solve = solve_start.elapsed().as_secs_f64();
    let write_start = Instant::now();
    let mut outputs = match &cfg.out_dir {
        Some(dir) => art.write(dir)?,
        None => Vec::new(),
    };
    if cfg.out_dir.is_some() {
        outputs.push("report.json".into());
    }
    let mut report = Report {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        grid: GridHeader::of(&grid),
        result,
        outputs,
        timings: Timings {
            load,
            solve,
            ..Timings::default()
        },
    };
    report.timings.write = write_start.elapsed().as_secs_f64();
    report.timings.total = start.elapsed().as_secs_f64();
    if let Some(dir) = &cfg.out_dir {
        let text = serde_json::to_string_pretty(&report).map_err(std::io::Error::other)?;
        fs::write(dir.join("report.json"), text + "\n")?;
    }
    Ok(report)
}
