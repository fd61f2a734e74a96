//! Experiment configs, the task runner, report files, plots and presets.
//!
//! A report is a flat JSON object holding the task results next to the
//! envelope fields `version`, `config_hash`, `timestamp`, `task` and
//! `status`. Failures keep the envelope and add an `error` object. Apart
//! from `timestamp`, a report depends only on the config.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::entropy::{
    furstenberg_bound, furstenberg_bound_stderr, ly_report, lyapunov_dimension_stderr, lyapunov_profile, mollified_depth, mollified_mi,
    rw_entropy, ArrowDimension, EntropyEstimate,
};
use crate::error::{Error, Result};
use crate::flag::FlagPoint;
use crate::linalg::Matrix;
use crate::measure::{
    condition_on_projection, configurations_from_flags, default_radii, knn_dimension, local_dimension,
    mean_log_mass, sample_stationary_cloud, suggest_bin_radius, DepthCheck, DimensionEstimate, Embedded,
    FiberOptions, FiberReport, PointCloud,
};
use crate::parallel::chunk_rng;
use crate::plot::{self, Series, Style};
use crate::topology::{
    all_arrows, chain_arrows, chain_decompose, enumerate_admissible, filtered_from_partition, is_finer,
    pair_exponent, AdmissibleTopology, IntervalPartition,
};
use crate::walk::{
    convergence_depth, convergence_rate_probe, lyapunov_spectrum, oseledets_frames, partial_sum_check,
    LyapunovSpectrum, MatrixMeasure, Mollifier, MollifierKind,
};

/// Environment variable naming the cloud cache directory.
pub const CACHE_ENV: &str = "FURSTLAB_CACHE";

/// Bundled preset configs.
pub const PRESETS: &[(&str, &str)] = &[
    ("diag3", include_str!("../presets/diag3.json")),
    ("rot2", include_str!("../presets/rot2.json")),
    ("sl2z-free", include_str!("../presets/sl2z-free.json")),
    ("sl3-zariski", include_str!("../presets/sl3-zariski.json")),
    ("sl3-mollified", include_str!("../presets/sl3-mollified.json")),
];

/// Steps of the auxiliary spectrum used to pick a default sampling depth.
const DEPTH_SPECTRUM_STEPS: usize = 100_000;

fn default_steps() -> usize {
    1_000_000
}
fn default_n_max() -> usize {
    12
}
fn default_points() -> usize {
    100_000
}
fn default_centers() -> usize {
    2000
}
fn default_k() -> usize {
    10
}
fn default_mi_k() -> usize {
    5
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_min_bin() -> usize {
    500
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub fine: AdmissibleTopology,
    pub coarse: AdmissibleTopology,
    pub depths: Vec<usize>,
    #[serde(default = "default_rate_points")]
    pub n_points: usize,
}

fn default_rate_points() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub fine: AdmissibleTopology,
    pub coarse: AdmissibleTopology,
    pub chi: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimMethod {
    BallMass,
    KnnMle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyKind {
    Rw,
    Mi,
}

/// What a config asks for. Omitted numeric parameters take the defaults
/// shown by `--help` in the command-line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    Topo {
        d: usize,
        #[serde(default)]
        chain: Option<ChainSpec>,
    },
    Exponents {
        #[serde(default = "default_steps")]
        steps: usize,
        /// Also estimate Oseledets frames at this depth (0: convergence depth).
        #[serde(default)]
        frames: Option<usize>,
        /// Number of stationary flags for the partial-sum cross-check.
        #[serde(default)]
        partial_sums: Option<usize>,
        #[serde(default)]
        rate: Option<RateSpec>,
    },
    Cloud {
        #[serde(default)]
        partition: Option<IntervalPartition>,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default)]
        depth: Option<usize>,
    },
    Dimension {
        #[serde(default)]
        partition: Option<IntervalPartition>,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default)]
        depth: Option<usize>,
        #[serde(default = "default_dim_method")]
        method: DimMethod,
        #[serde(default)]
        radii: Option<Vec<f64>>,
        #[serde(default = "default_centers")]
        n_centers: usize,
        #[serde(default = "default_k")]
        k: usize,
    },
    Entropy {
        #[serde(default = "default_entropy_kind")]
        method: EntropyKind,
        #[serde(default = "default_n_max")]
        n_max: usize,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_points")]
        samples: usize,
        #[serde(default = "default_mi_k")]
        k: usize,
        #[serde(default)]
        partition: Option<IntervalPartition>,
        #[serde(default = "default_steps")]
        steps: usize,
    },
    /// Full pipeline: spectrum, entropy, bound, Lyapunov dimension, cloud
    /// dimension, fiber dimensions along a chain and the consistency checks.
    Lyapdim {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "default_n_max")]
        n_max: usize,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default = "default_centers")]
        n_centers: usize,
        #[serde(default)]
        partition: Option<IntervalPartition>,
        #[serde(default = "default_true")]
        fibers: bool,
        #[serde(default = "default_min_bin")]
        min_bin: usize,
        #[serde(default = "default_mi_k")]
        mi_k: usize,
    },
    Fibers {
        fine: AdmissibleTopology,
        coarse: AdmissibleTopology,
        #[serde(default = "default_points")]
        n_points: usize,
        #[serde(default)]
        depth: Option<usize>,
        #[serde(default)]
        bin_radius: Option<f64>,
        #[serde(default = "default_min_bin")]
        min_bin: usize,
    },
}

fn default_dim_method() -> DimMethod {
    DimMethod::BallMass
}
fn default_entropy_kind() -> EntropyKind {
    EntropyKind::Rw
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Topo { .. } => "topo",
            Task::Exponents { .. } => "exponents",
            Task::Cloud { .. } => "cloud",
            Task::Dimension { .. } => "dimension",
            Task::Entropy { .. } => "entropy",
            Task::Lyapdim { .. } => "lyapdim",
            Task::Fibers { .. } => "fibers",
        }
    }

    fn stochastic(&self) -> bool {
        !matches!(self, Task::Topo { .. })
    }
}

/// Where artifacts go. All optional; the report is also returned in memory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Binary cloud file (cloud, dimension and pipeline tasks).
    #[serde(default)]
    pub cloud: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Directory for SVG plots.
    #[serde(default)]
    pub plots: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub measure: Option<MatrixMeasure>,
    pub task: Task,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A bundled preset by name.
    pub fn preset(name: &str) -> Result<Self> {
        let (_, src) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Format(format!("unknown preset {name:?}")))?;
        Self::from_json(src)
    }

    /// Reads a config file, falling back to a preset of that name.
    pub fn load(path_or_preset: &str) -> Result<Self> {
        let p = Path::new(path_or_preset);
        if p.exists() {
            Self::from_json(&fs::read_to_string(p)?)
        } else {
            Self::preset(path_or_preset)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.task.stochastic() {
            if self.seed.is_none() {
                return Err(Error::Format(format!("task {} needs a seed", self.task.name())));
            }
            if self.measure.is_none() {
                return Err(Error::Format(format!("task {} needs a measure", self.task.name())));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of measure, task and seed.
    pub fn hash(&self) -> String {
        let v = json!({ "measure": self.measure, "task": self.task, "seed": self.seed });
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    fn measure(&self) -> Result<&MatrixMeasure> {
        self.measure.as_ref().ok_or_else(|| Error::Format("config has no measure".into()))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Result of [`run`]: the report and the process exit code.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub code: i32,
}

/// Pretty JSON with a trailing newline.
pub fn render_report(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// The report without the `timestamp` field, for reproducibility checks.
pub fn without_timestamp(report: &Value) -> Value {
    let mut r = report.clone();
    if let Some(m) = r.as_object_mut() {
        m.remove("timestamp");
    }
    r
}

/// Independent sub-seed of `seed` for one stage of a task.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    chunk_rng(seed, tag, 0).next_u64()
}

/// Executes the config, writes the requested artifacts and returns the report.
pub fn run(cfg: &ExperimentConfig) -> Outcome {
    let mut env = Map::new();
    env.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    env.insert("config_hash".into(), json!(cfg.hash()));
    env.insert("name".into(), json!(cfg.name));
    env.insert("task".into(), json!(cfg.task.name()));
    env.insert("seed".into(), json!(cfg.seed));
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    env.insert("timestamp".into(), json!(ts));
    let result = cfg.validate().and_then(|_| execute(cfg));
    let (body, code) = match result {
        Ok((body, flagged)) => {
            let code = if flagged { 2 } else { 0 };
            (body, code)
        }
        Err(e) => {
            let mut m = Map::new();
            m.insert("error".into(), error_json(&e));
            (m, e.exit_code())
        }
    };
    env.insert("status".into(), json!(match code {
        0 => "ok",
        2 => "quality_failure",
        _ => "input_error",
    }));
    env.extend(body);
    let report = Value::Object(env);
    if let Some(path) = &cfg.outputs.report {
        if let Err(e) = write_file(path, render_report(&report).as_bytes()) {
            let mut r = report;
            r["error"] = error_json(&e);
            r["status"] = json!("input_error");
            return Outcome { report: r, code: 1 };
        }
    }
    Outcome { report, code }
}

fn error_json(e: &Error) -> Value {
    let mut v = json!({ "kind": e.kind(), "message": e.to_string() });
    match e {
        Error::StateExplosion { partial, .. } => v["partial"] = json!(partial),
        Error::EstimatorUnstable { estimates, .. } => v["estimates"] = json!(estimates),
        Error::InsufficientScaling { r2, estimate } => {
            v["r2"] = json!(r2);
            v["estimate"] = json!(estimate);
        }
        _ => {}
    }
    v
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

type Body = (Map<String, Value>, bool);

fn into_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    }
}

fn execute(cfg: &ExperimentConfig) -> Result<Body> {
    match &cfg.task {
        Task::Topo { d, chain } => run_topo(*d, chain.as_ref()),
        Task::Exponents { steps, frames, partial_sums, rate } => {
            run_exponents(cfg, *steps, *frames, *partial_sums, rate.as_ref())
        }
        Task::Cloud { partition, n_points, depth } => {
            let mu = cfg.measure()?;
            let q = partition.clone().unwrap_or_else(|| IntervalPartition::full(mu.d()));
            let cloud = stationary_cloud(mu, &q, *n_points, *depth, cfg.seed())?;
            write_cloud(cfg, &cloud)?;
            let m = json!({
                "cloud": { "n_points": cloud.len(), "d": cloud.d(), "partition": q, "meta": cloud.meta() },
            });
            Ok((into_map(m), false))
        }
        Task::Dimension { partition, n_points, depth, method, radii, n_centers, k } => {
            let mu = cfg.measure()?;
            let q = partition.clone().unwrap_or_else(|| IntervalPartition::full(mu.d()));
            let cloud = stationary_cloud(mu, &q, *n_points, *depth, cfg.seed())?;
            write_cloud(cfg, &cloud)?;
            let radii = radii.clone().unwrap_or_else(default_radii);
            let est = match method {
                DimMethod::BallMass => local_dimension(&cloud, &radii, *n_centers, sub_seed(cfg.seed(), "dimension"))?,
                DimMethod::KnnMle => knn_dimension(&cloud, *k, sub_seed(cfg.seed(), "dimension"))?,
            };
            if *method == DimMethod::BallMass {
                mass_plot(cfg, &cloud, &radii, *n_centers, &est, "log_mass.svg")?;
            }
            Ok((into_map(json!({ "delta": delta_json(&est), "depth": cloud.meta().depth })), false))
        }
        Task::Entropy { method, n_max, epsilon, samples, k, partition, steps } => {
            let mu = cfg.measure()?;
            let q = partition.clone().unwrap_or_else(|| IntervalPartition::full(mu.d()));
            match method {
                EntropyKind::Rw => {
                    let est = rw_entropy(mu, *n_max)?;
                    let spec = lyapunov_spectrum(mu, *steps, sub_seed(cfg.seed(), "spectrum"));
                    let m = json!({
                        "entropy": est,
                        "increments": est.increments(),
                        "bound": furstenberg_bound(&spec, &q),
                        "bound_stderr": furstenberg_bound_stderr(&spec, &q),
                        "spectrum": spec.chi,
                        "stderr": spec.stderr,
                    });
                    Ok((into_map(m), false))
                }
                EntropyKind::Mi => {
                    let est = mollified_mi(mu, *epsilon, &q, *samples, *k, sub_seed(cfg.seed(), "mi"))?;
                    let m = json!({
                        "entropy": est.entropy(),
                        "mi": est,
                        "relative_error": est.relative_error(),
                    });
                    Ok((into_map(m), false))
                }
            }
        }
        Task::Lyapdim { steps, n_max, n_points, n_centers, partition, fibers, min_bin, mi_k } => {
            let p = PipelineParams {
                steps: *steps,
                n_max: *n_max,
                n_points: *n_points,
                n_centers: *n_centers,
                partition: partition.clone(),
                fibers: *fibers,
                min_bin: *min_bin,
                mi_k: *mi_k,
            };
            run_pipeline(cfg, &p)
        }
        Task::Fibers { fine, coarse, n_points, depth, bin_radius, min_bin } => {
            let mu = cfg.measure()?;
            let seed = cfg.seed();
            let q = IntervalPartition::full(mu.d());
            let cloud = stationary_cloud(mu, &q, *n_points, *depth, seed)?;
            write_cloud(cfg, &cloud)?;
            let spec = lyapunov_spectrum(mu, DEPTH_SPECTRUM_STEPS, sub_seed(seed, "depth_spectrum"));
            let anchor = anchor_flag(mu, &spec, seed)?;
            let arrow = fiber_arrow(&cloud, fine, coarse, &anchor, *bin_radius, *min_bin, seed)?;
            Ok((into_map(json!({ "fibers": arrow })), false))
        }
    }
}

fn run_topo(d: usize, chain: Option<&ChainSpec>) -> Result<Body> {
    let tops = enumerate_admissible(d)?;
    let arrows = all_arrows(&tops);
    let mut m = into_map(json!({
        "counts": { "topologies": tops.len(), "arrows": arrows.len() },
        "topologies": tops,
    }));
    if let Some(c) = chain {
        let ch = chain_decompose(&c.fine, &c.coarse, &c.chi)?;
        let exps: Vec<f64> = chain_arrows(&ch).iter().map(|&p| pair_exponent(&c.chi, p)).collect();
        m.insert("chain".into(), json!({ "topologies": ch, "arrows": chain_arrows(&ch), "exponents": exps }));
    }
    Ok((m, false))
}

fn run_exponents(
    cfg: &ExperimentConfig,
    steps: usize,
    frames: Option<usize>,
    partial_sums: Option<usize>,
    rate: Option<&RateSpec>,
) -> Result<Body> {
    let mu = cfg.measure()?;
    let seed = cfg.seed();
    let spec = lyapunov_spectrum(mu, steps, sub_seed(seed, "spectrum"));
    let (gap, gap_se) = spec.min_gap();
    let mut m = into_map(json!({
        "spectrum": spec.chi,
        "stderr": spec.stderr,
        "partial_stderr": spec.partial_stderr,
        "steps": spec.steps,
        "sum_z": spec.sum_z(),
        "min_gap": { "value": gap, "stderr": gap_se },
    }));
    if let Some(depth) = frames {
        let depth = if depth == 0 { convergence_depth(&spec) } else { depth };
        let f = oseledets_frames(mu, &spec, depth, sub_seed(seed, "frames"), 1e-8)?;
        m.insert("frames".into(), json!({
            "depth": depth,
            "e_plus": f.e_plus.frame().to_rows(),
            "e_minus": f.e_minus.frame().to_rows(),
            "lines": f.directions(),
            "residual": f.residual,
        }));
    }
    if let Some(n) = partial_sums {
        let q = IntervalPartition::full(mu.d());
        let cloud = stationary_cloud(mu, &q, n, None, sub_seed(seed, "partial_cloud"))?;
        let flags: Vec<FlagPoint> = cloud.points().iter().map(|p| FlagPoint::from_orthogonal(*p)).collect();
        let checks = (1..=mu.d())
            .map(|j| partial_sum_check(mu, &spec, j, &flags, sub_seed(seed, "partial_sums")))
            .collect::<Result<Vec<_>>>()?;
        m.insert("partial_sums".into(), json!(checks));
    }
    if let Some(r) = rate {
        let probe = convergence_rate_probe(&r.fine, &r.coarse, mu, &spec, &r.depths, r.n_points, sub_seed(seed, "rate"))?;
        if let Some(dir) = &cfg.outputs.plots {
            let pts: Vec<(f64, f64)> =
                probe.depths.iter().zip(&probe.mean_log_dist).map(|(&n, &y)| (n as f64, y)).collect();
            let mut series = vec![Series::new("mean log distance", pts.clone(), Style::Points)];
            if let (Some(s), Some(&(x0, y0))) = (probe.slope, pts.iter().find(|p| probe.fitted.contains(&(p.0 as usize)))) {
                let x1 = pts.last().map(|p| p.0).unwrap_or(x0);
                series.push(Series::new(format!("fit slope {s:.4}"), vec![(x0, y0), (x1, y0 + s * (x1 - x0))], Style::Line));
                series.push(Series::new(
                    format!("bound {:.4}", probe.bound),
                    vec![(x0, y0), (x1, y0 + probe.bound * (x1 - x0))],
                    Style::Dashed,
                ));
            }
            write_file(&dir.join("rate.svg"), plot::render("Configuration extension rate", "depth n", "log dist", &series).as_bytes())?;
        }
        m.insert("rate".into(), json!(probe));
    }
    Ok((m, false))
}

/// Loads a cached cloud or samples and caches it.
fn cached<F: FnOnce() -> Result<PointCloud>>(key: &Value, make: F) -> Result<PointCloud> {
    let dir = match std::env::var_os(CACHE_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => return make(),
    };
    let name = format!("{}.flgc", hex::encode(Sha256::digest(key.to_string().as_bytes())));
    let path = dir.join(name);
    if let Ok(f) = fs::File::open(&path) {
        if let Ok(c) = PointCloud::read_binary(std::io::BufReader::new(f)) {
            return Ok(c);
        }
    }
    let cloud = make()?;
    fs::create_dir_all(&dir)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut buf = Vec::new();
    cloud.write_binary(&mut buf)?;
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, &path)?;
    Ok(cloud)
}

/// Stationary cloud at the given depth, or at a depth fitted to the walk.
fn stationary_cloud(
    mu: &MatrixMeasure,
    q: &IntervalPartition,
    n_points: usize,
    depth: Option<usize>,
    seed: u64,
) -> Result<PointCloud> {
    let (depth, check) = match depth {
        Some(d) => (d, DepthCheck::Auto),
        None => {
            let spec = lyapunov_spectrum(mu, DEPTH_SPECTRUM_STEPS, sub_seed(seed, "depth_spectrum"));
            match mu.mollifier() {
                Some(m) => mollified_depth(&spec, m.epsilon),
                None => (convergence_depth(&spec), DepthCheck::Auto),
            }
        }
    };
    let key = json!({ "measure": mu, "partition": q, "n": n_points, "depth": depth, "seed": seed, "check": check == DepthCheck::Auto });
    cached(&key, || sample_stationary_cloud(mu, q, n_points, depth, sub_seed(seed, "cloud"), check))
}

fn write_cloud(cfg: &ExperimentConfig, cloud: &PointCloud) -> Result<()> {
    if let Some(p) = &cfg.outputs.cloud {
        let mut buf = Vec::new();
        cloud.write_binary(&mut buf)?;
        write_file(p, &buf)?;
    }
    if let Some(p) = &cfg.outputs.csv {
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf)?;
        write_file(p, &buf)?;
    }
    Ok(())
}

fn delta_json(e: &DimensionEstimate) -> Value {
    json!({ "value": e.delta, "ci": e.ci, "method": e.method, "r2": e.r2, "r_range": e.r_range })
}

fn mass_plot(
    cfg: &ExperimentConfig,
    cloud: &PointCloud,
    radii: &[f64],
    n_centers: usize,
    est: &DimensionEstimate,
    file: &str,
) -> Result<()> {
    let Some(dir) = &cfg.outputs.plots else { return Ok(()) };
    let pts = Embedded::new(cloud.embedding()?, cloud.embed_dim().max(1));
    let lm = mean_log_mass(&pts, radii, n_centers, sub_seed(cfg.seed(), "dimension"));
    let xy: Vec<(f64, f64)> = radii.iter().map(|r| r.ln()).zip(lm).collect();
    let finite: Vec<&(f64, f64)> = xy.iter().filter(|p| p.1.is_finite()).collect();
    let mut series = vec![Series::new("mean log mass", xy.clone(), Style::Points)];
    if let (Some(first), Some(last)) = (finite.first(), finite.last()) {
        let mid = finite.iter().map(|p| p.1 - est.delta * p.0).sum::<f64>() / finite.len() as f64;
        series.push(Series::new(
            format!("slope {:.3}", est.delta),
            vec![(first.0, mid + est.delta * first.0), (last.0, mid + est.delta * last.0)],
            Style::Line,
        ));
    }
    write_file(&dir.join(file), plot::render("Ball mass regression", "log r", "log mass", &series).as_bytes())
}

struct PipelineParams {
    steps: usize,
    n_max: usize,
    n_points: usize,
    n_centers: usize,
    partition: Option<IntervalPartition>,
    fibers: bool,
    min_bin: usize,
    mi_k: usize,
}

/// Stable Oseledets flag at a random point, used as the anchor `f'`.
fn anchor_flag(mu: &MatrixMeasure, spec: &LyapunovSpectrum, seed: u64) -> Result<FlagPoint> {
    let depth = convergence_depth(spec);
    if spec.require_simple().is_err() {
        // any flag in general position will do; take a random one
        let mut rng = chunk_rng(seed, "anchor", 0);
        return FlagPoint::from_matrix(&Matrix::random_gaussian(mu.d(), mu.d(), &mut rng));
    }
    let f = oseledets_frames(mu, spec, depth, sub_seed(seed, "anchor"), f64::INFINITY)?;
    Ok(f.e_plus)
}

#[derive(Clone, Debug, Serialize)]
pub struct ArrowResult {
    pub i: usize,
    pub j: usize,
    pub chi: f64,
    /// Pooled fiber dimension; `None` when every bin failed its quality gate.
    pub gamma: Option<f64>,
    pub gamma_ci: Option<f64>,
    pub bin_radius: f64,
    pub n_bins: usize,
    pub n_bins_ok: usize,
    /// Cloud points dropped for lack of general position with the anchor.
    pub dropped: usize,
    /// Pooled estimates at half and double the bin radius.
    pub sensitivity: Vec<(f64, Option<f64>)>,
    pub error: Option<String>,
    #[serde(skip)]
    pub estimate: Option<DimensionEstimate>,
}

fn fiber_arrow(
    cloud: &PointCloud,
    fine: &AdmissibleTopology,
    coarse: &AdmissibleTopology,
    anchor: &FlagPoint,
    bin_radius: Option<f64>,
    min_bin: usize,
    seed: u64,
) -> Result<ArrowResult> {
    let arrow = crate::topology::one_step(fine, coarse).ok_or(Error::NotOneStep)?;
    let cc = configurations_from_flags(cloud, fine, anchor)?;
    let dropped = cloud.len() - cc.len();
    let fseed = sub_seed(seed, &format!("fibers{}{}", arrow.0, arrow.1));
    let r = match bin_radius {
        Some(r) => r,
        None => suggest_bin_radius(&cc, coarse, min_bin, fseed)?,
    };
    let attempt = |br: f64| -> Result<std::result::Result<FiberReport, Error>> {
        let opts = FiberOptions { bin_radius: br, min_bin, ..FiberOptions::default() };
        match condition_on_projection(&cc, coarse, &opts, fseed) {
            Ok(rep) => Ok(Ok(rep)),
            Err(e) if e.is_quality_failure() => Ok(Err(e)),
            Err(e) => Err(e),
        }
    };
    let main = attempt(r)?;
    let sensitivity = [r / 2.0, 2.0 * r]
        .into_iter()
        .map(|br| Ok((br, attempt(br)?.ok().map(|rep| rep.pooled.delta))))
        .collect::<Result<Vec<_>>>()?;
    Ok(match main {
        Ok(rep) => ArrowResult {
            i: arrow.0,
            j: arrow.1,
            chi: 0.0,
            gamma: Some(rep.pooled.delta),
            gamma_ci: Some(rep.pooled.ci),
            bin_radius: r,
            n_bins: rep.bins.len(),
            n_bins_ok: rep.bins.iter().filter(|b| b.gamma.is_some()).count(),
            dropped,
            sensitivity,
            error: None,
            estimate: Some(rep.pooled),
        },
        Err(e) => ArrowResult {
            i: arrow.0,
            j: arrow.1,
            chi: 0.0,
            gamma: None,
            gamma_ci: None,
            bin_radius: r,
            n_bins: 0,
            n_bins_ok: 0,
            dropped,
            sensitivity,
            error: Some(e.to_string()),
            estimate: None,
        },
    })
}

fn run_pipeline(cfg: &ExperimentConfig, p: &PipelineParams) -> Result<Body> {
    let mu0 = cfg.measure()?;
    let seed = cfg.seed();
    let d = mu0.d();
    let q = p.partition.clone().unwrap_or_else(|| IntervalPartition::full(d));
    let mut flags: Vec<String> = Vec::new();

    // A mollified measure has no discrete entropy; use the mutual information.
    let (mu, spec, h, depth, check) = match mu0.mollifier() {
        Some(m) => {
            let base = mu0.with_mollifier(None)?;
            let mi = mollified_mi(&base, m.epsilon, &q, p.n_points, p.mi_k, sub_seed(seed, "mi"))?;
            let mu = mu0.with_mollifier(Some(Mollifier { kind: MollifierKind::SoBallFull, epsilon: m.epsilon }))?;
            let (depth, check) = mollified_depth(&mi.spectrum, m.epsilon);
            (mu, mi.spectrum.clone(), mi.entropy(), depth, check)
        }
        None => {
            let spec = lyapunov_spectrum(mu0, p.steps, sub_seed(seed, "spectrum"));
            let h = rw_entropy(mu0, p.n_max)?;
            let depth = convergence_depth(&spec);
            (mu0.clone(), spec, h, depth, DepthCheck::Auto)
        }
    };
    let bound = furstenberg_bound(&spec, &q);
    let bound_se = furstenberg_bound_stderr(&spec, &q);
    let profile = lyapunov_profile(&h, &spec, &q)?;

    let full = IntervalPartition::full(d);
    let key = json!({ "measure": mu, "partition": full, "n": p.n_points, "depth": depth, "seed": seed, "check": check == DepthCheck::Auto });
    let cloud = cached(&key, || sample_stationary_cloud(&mu, &full, p.n_points, depth, sub_seed(seed, "cloud"), check))?;
    write_cloud(cfg, &cloud)?;
    let qcloud = cloud.project_partition(&q)?;
    let radii = default_radii();
    let delta = local_dimension(&qcloud, &radii, p.n_centers, sub_seed(seed, "dimension"))?;
    mass_plot(cfg, &qcloud, &radii, p.n_centers, &delta, "log_mass.svg")?;

    let mut arrows: Vec<ArrowResult> = Vec::new();
    if p.fibers {
        let anchor = anchor_flag(&mu, &spec, seed)?;
        let t = filtered_from_partition(&q);
        let chain = chain_decompose(&t, &AdmissibleTopology::coarsest(d), &spec.chi)?;
        for (w, (i, j)) in chain.windows(2).zip(chain_arrows(&chain)) {
            let (fine, coarse) = if is_finer(&w[0], &w[1]) { (&w[0], &w[1]) } else { (&w[1], &w[0]) };
            let mut a = fiber_arrow(&cloud, fine, coarse, &anchor, None, p.min_bin, seed)?;
            a.chi = pair_exponent(&spec.chi, (i, j));
            if let Some(e) = &a.error {
                flags.push(format!("arrow ({i},{j}): {e}"));
            }
            arrows.push(a);
        }
    }

    let sigma = |ci: f64| ci / 1.96;
    let entropy_bound_z = (h.h - bound) / (sigma(h.ci).powi(2) + bound_se.powi(2)).sqrt().max(1e-12);
    let dim_ly_se = lyapunov_dimension_stderr(&h, &spec, &q);
    let delta_dimly_z = (delta.delta - profile.dim_ly) / sigma(delta.ci).hypot(dim_ly_se).max(1e-12);
    let mut checks = Map::new();
    checks.insert("entropy_bound_z".into(), json!(entropy_bound_z));
    checks.insert("delta_dimly_z".into(), json!(delta_dimly_z));
    let mut passed = entropy_bound_z < 3.0 && delta_dimly_z < 3.0;
    if d == 2 {
        let target = (h.h / (spec.chi[0] - spec.chi[1])).min(1.0);
        checks.insert("delta_target".into(), json!(target));
        checks.insert("delta_target_rel".into(), json!((delta.delta - target).abs() / target));
    }
    if p.fibers && flags.is_empty() {
        let dims: Vec<ArrowDimension> = arrows
            .iter()
            .map(|a| ArrowDimension { i: a.i, j: a.j, chi: a.chi, gamma: a.estimate.clone().expect("checked") })
            .collect();
        let ly = ly_report(&dims, &h, &delta)?;
        passed &= ly.ly_formula_z.abs() < 3.0 && ly.dim_sum_z.abs() < 3.0 && ly.gamma_bounds_ok;
        for (k, v) in into_map(json!(ly)) {
            checks.insert(k, v);
        }
    }
    checks.insert("passed".into(), json!(passed && flags.is_empty()));

    if let Some(dir) = &cfg.outputs.plots {
        let n = profile.lambdas.len();
        let pts: Vec<(f64, f64)> = (0..=4 * n).map(|k| k as f64 / 4.0).map(|s| (s, profile.eval(s))).collect();
        let series = vec![
            Series::new("D(s)", pts, Style::Line),
            Series::new(format!("dim_LY {:.4}", profile.dim_ly), vec![(profile.dim_ly, 0.0)], Style::Points),
            Series::new("zero", vec![(0.0, 0.0), (n as f64, 0.0)], Style::Dashed),
        ];
        write_file(&dir.join("profile.svg"), plot::render("Lyapunov dimension profile", "s", "D(s)", &series).as_bytes())?;
    }

    let entropy_json = entropy_summary(&h);
    let m = json!({
        "spectrum": spec.chi,
        "stderr": spec.stderr,
        "entropy": entropy_json,
        "bound": bound,
        "bound_stderr": bound_se,
        "lyapdim": profile.dim_ly,
        "lyapdim_stderr": dim_ly_se,
        "profile": profile,
        "delta": delta_json(&delta),
        "depth": depth,
        "arrows": arrows,
        "checks": checks,
        "flags": flags,
    });
    let flagged = !flags.is_empty();
    Ok((into_map(m), flagged))
}

fn entropy_summary(h: &EntropyEstimate) -> Value {
    let mut v = json!(h);
    v["increments"] = json!(h.increments());
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            assert!(cfg.measure.is_some(), "{name}");
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let src = r#"{"measure":{"d":2,"atoms":[{"p":1.0,"m":[[2,0],[0,0.5]]}]},"task":{"kind":"exponents"}}"#;
        assert!(matches!(ExperimentConfig::from_json(src), Err(Error::Format(_))));
        let topo = r#"{"task":{"kind":"topo","d":3}}"#;
        assert!(ExperimentConfig::from_json(topo).is_ok());
        let bad = r#"{"task":{"kind":"topo","d":3,"bogus":1}}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
    }

    #[test]
    fn topo_counts() {
        let cfg = ExperimentConfig::from_json(r#"{"task":{"kind":"topo","d":4}}"#).unwrap();
        let out = run(&cfg);
        assert_eq!(out.code, 0);
        assert_eq!(out.report["counts"], json!({"topologies": 40, "arrows": 92}));
    }

    #[test]
    fn diag3_exponents() {
        let mut cfg = ExperimentConfig::preset("diag3").unwrap();
        cfg.task = Task::Exponents { steps: 10_000, frames: None, partial_sums: None, rate: None };
        let out = run(&cfg);
        assert_eq!(out.code, 0);
        let chi: Vec<f64> = serde_json::from_value(out.report["spectrum"].clone()).unwrap();
        let l2 = 2f64.ln();
        for (a, b) in chi.iter().zip([l2, 0.0, -l2]) {
            assert!((a - b).abs() < 1e-12, "{chi:?}");
        }
    }

    #[test]
    fn error_codes() {
        // rotations have a zero spectrum, so the pipeline fails its gate
        let mut cfg = ExperimentConfig::preset("rot2").unwrap();
        cfg.task = Task::Lyapdim {
            steps: 10_000,
            n_max: 6,
            n_points: 1000,
            n_centers: 100,
            partition: None,
            fibers: false,
            min_bin: 500,
            mi_k: 5,
        };
        let out = run(&cfg);
        assert_eq!(out.code, 2);
        assert_eq!(out.report["error"]["kind"], "spectrum_not_simple");
        let cfg = ExperimentConfig::from_json(r#"{"task":{"kind":"topo","d":9}}"#).unwrap();
        let out = run(&cfg);
        assert_eq!(out.code, 1);
        assert_eq!(out.report["status"], "input_error");
    }

    #[test]
    fn reports_reproduce_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset("sl2z-free").unwrap();
        cfg.task = Task::Dimension {
            partition: None,
            n_points: 3000,
            depth: None,
            method: DimMethod::BallMass,
            radii: None,
            n_centers: 200,
            k: 10,
        };
        cfg.outputs.plots = Some(dir.path().join("plots"));
        cfg.outputs.cloud = Some(dir.path().join("c.flgc"));
        let a = run(&cfg);
        let b = crate::parallel::with_threads(Some(3), || run(&cfg));
        assert_eq!(a.code, 0, "{}", a.report);
        assert_eq!(render_report(&without_timestamp(&a.report)), render_report(&without_timestamp(&b.report)));
        let svg = fs::read_to_string(dir.path().join("plots/log_mass.svg")).unwrap();
        assert!(svg.contains("<svg"));
        let cloud = PointCloud::read_binary(fs::File::open(dir.path().join("c.flgc")).unwrap()).unwrap();
        assert_eq!(cloud.len(), 3000);
    }
}
