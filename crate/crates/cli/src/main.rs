use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use furstlab::harness::{render_report, run, ChainSpec, DimMethod, EntropyKind, ExperimentConfig, Outputs, RateSpec, Task};
use furstlab::parallel::with_threads;
use furstlab::topology::{hasse_dot, AdmissibleTopology, IntervalPartition};
use furstlab::walk::MatrixMeasure;
use furstlab::Error;

#[derive(Parser)]
#[command(name = "furstlab", version, about = "Experiments on random products of SL(d, R) matrices")]
struct Cli {
    /// Config file or preset name (diag3, rot2, sl2z-free, sl3-zariski, sl3-mollified).
    /// Subcommands take the measure and seed from it.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Measure JSON file, or a preset name whose measure is used.
    #[arg(long, global = true)]
    measure: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report path (the report is always printed to stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for SVG plots.
    #[arg(long, global = true)]
    plots: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Admissible topologies.
    #[command(subcommand)]
    Topo(TopoCmd),
    /// Lyapunov spectra, Oseledets frames, extension rates.
    #[command(subcommand)]
    Walk(WalkCmd),
    /// Stationary clouds and their dimensions.
    #[command(subcommand)]
    Measure(MeasureCmd),
    /// Entropy estimators.
    #[command(subcommand)]
    Entropy(EntropyCmd),
    /// Full pipeline: entropy, Lyapunov dimension, cloud and fiber dimensions.
    Lyapdim(LyapdimArgs),
    /// Summaries of existing reports.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Run the config given by --config as is.
    Run,
}

#[derive(Subcommand)]
enum TopoCmd {
    /// Count topologies of {1..d} and one-step arrows.
    Enum {
        #[arg(long)]
        d: usize,
        /// Write the Hasse diagram in Graphviz format.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// One-step chain between comparable topologies.
    Chain {
        /// Atoms as JSON, e.g. [[1],[2],[3]], or `finest` / `coarsest`.
        #[arg(long)]
        fine: String,
        #[arg(long)]
        coarse: String,
        /// Comma-separated exponents.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        chi: Vec<f64>,
    },
}

#[derive(Subcommand)]
enum WalkCmd {
    Exponents {
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        /// Also run the partial-sum cross-check on this many stationary flags.
        #[arg(long)]
        partial_sums: Option<usize>,
    },
    Frames {
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
        /// Tail length (default: convergence depth of the spectrum).
        #[arg(long, default_value_t = 0)]
        depth: usize,
    },
    Rate {
        #[arg(long)]
        fine: String,
        #[arg(long)]
        coarse: String,
        /// Depths as start:end:step (inclusive).
        #[arg(long, default_value = "4:40:4")]
        depths: String,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    BallMass,
    KnnMle,
}

#[derive(Args)]
struct CloudArgs {
    /// Interval partition cuts, e.g. 0,1,3 (default: full flags).
    #[arg(long, value_delimiter = ',')]
    partition: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    /// Sampling depth (default: fitted to the spectrum).
    #[arg(long)]
    depth: Option<usize>,
    /// Binary cloud output.
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MeasureCmd {
    Sample(CloudArgs),
    Dim {
        #[command(flatten)]
        cloud: CloudArgs,
        #[arg(long, value_enum, default_value = "ball-mass")]
        method: MethodArg,
        #[arg(long, default_value_t = 2000)]
        centers: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    Fibers {
        #[arg(long)]
        fine: String,
        #[arg(long)]
        coarse: String,
        #[arg(long, default_value_t = 100_000)]
        points: usize,
        #[arg(long)]
        depth: Option<usize>,
        /// Base bin radius (default: suggested from the cloud).
        #[arg(long)]
        bin_radius: Option<f64>,
        #[arg(long, default_value_t = 500)]
        min_bin: usize,
    },
}

#[derive(Subcommand)]
enum EntropyCmd {
    Rw {
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value_t = 1_000_000)]
        steps: usize,
    },
    Mi {
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, value_delimiter = ',')]
        partition: Option<Vec<usize>>,
    },
}

#[derive(Args)]
struct LyapdimArgs {
    #[arg(long, default_value_t = 1_000_000)]
    steps: usize,
    #[arg(long, default_value_t = 12)]
    n_max: usize,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    #[arg(long, default_value_t = 2000)]
    centers: usize,
    #[arg(long, value_delimiter = ',')]
    partition: Option<Vec<usize>>,
    /// Skip fiber conditioning.
    #[arg(long)]
    no_fibers: bool,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Table of a pipeline report's chain and checks; exit 2 unless all pass.
    Ly { report: PathBuf },
}

fn partition(cuts: Option<Vec<usize>>) -> Result<Option<IntervalPartition>, Error> {
    cuts.map(IntervalPartition::new).transpose()
}

fn topology(s: &str, d: usize) -> Result<AdmissibleTopology, Error> {
    match s {
        "finest" => Ok(AdmissibleTopology::finest(d)),
        "coarsest" => Ok(AdmissibleTopology::coarsest(d)),
        _ => {
            let atoms: Vec<Vec<usize>> = serde_json::from_str(s)?;
            AdmissibleTopology::from_atoms(atoms.len(), &atoms)
        }
    }
}

fn parse_depths(s: &str) -> Result<Vec<usize>, Error> {
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse::<usize>().map_err(|e| Error::Format(format!("depths: {e}"))))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, st] if st > 0 && a <= b => Ok((a..=b).step_by(st).collect()),
        _ => Err(Error::Format("depths must be start:end:step".into())),
    }
}

fn load_measure(s: &str) -> Result<MatrixMeasure, Error> {
    let p = std::path::Path::new(s);
    if p.exists() {
        let v: Value = serde_json::from_str(&fs::read_to_string(p)?)?;
        // accept either a bare measure or a whole config
        let m = if v.get("task").is_some() { v["measure"].clone() } else { v };
        Ok(serde_json::from_value(m)?)
    } else {
        ExperimentConfig::preset(s)?.measure.ok_or_else(|| Error::Format(format!("preset {s} has no measure")))
    }
}

fn build(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let base = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let mut measure = base.as_ref().and_then(|c| c.measure.clone());
    if let Some(m) = &cli.measure {
        measure = Some(load_measure(m)?);
    }
    let seed = cli.seed.or(base.as_ref().and_then(|c| c.seed));
    let d_of = |m: &Option<MatrixMeasure>| m.as_ref().map(|m| m.d()).ok_or_else(|| Error::Format("no measure given".into()));
    let mut outputs = Outputs::default();
    let task = match &cli.cmd {
        Cmd::Run => {
            let mut cfg = base.ok_or_else(|| Error::Format("run needs --config".into()))?;
            cfg.seed = seed;
            if let Some(m) = measure {
                cfg.measure = Some(m);
            }
            if cli.out.is_some() {
                cfg.outputs.report = cli.out.clone();
            }
            if cli.plots.is_some() {
                cfg.outputs.plots = cli.plots.clone();
            }
            return Ok(cfg);
        }
        Cmd::Topo(TopoCmd::Enum { d, dot }) => {
            if let Some(p) = dot {
                fs::write(p, hasse_dot(*d)?)?;
            }
            Task::Topo { d: *d, chain: None }
        }
        Cmd::Topo(TopoCmd::Chain { fine, coarse, chi }) => {
            let d = chi.len();
            let chain = ChainSpec { fine: topology(fine, d)?, coarse: topology(coarse, d)?, chi: chi.clone() };
            Task::Topo { d, chain: Some(chain) }
        }
        Cmd::Walk(WalkCmd::Exponents { steps, partial_sums }) => {
            Task::Exponents { steps: *steps, frames: None, partial_sums: *partial_sums, rate: None }
        }
        Cmd::Walk(WalkCmd::Frames { steps, depth }) => {
            Task::Exponents { steps: *steps, frames: Some(*depth), partial_sums: None, rate: None }
        }
        Cmd::Walk(WalkCmd::Rate { fine, coarse, depths, points, steps }) => {
            let d = d_of(&measure)?;
            let rate = RateSpec {
                fine: topology(fine, d)?,
                coarse: topology(coarse, d)?,
                depths: parse_depths(depths)?,
                n_points: *points,
            };
            Task::Exponents { steps: *steps, frames: None, partial_sums: None, rate: Some(rate) }
        }
        Cmd::Measure(MeasureCmd::Sample(a)) => {
            outputs.cloud = a.cloud.clone();
            outputs.csv = a.csv.clone();
            Task::Cloud { partition: partition(a.partition.clone())?, n_points: a.points, depth: a.depth }
        }
        Cmd::Measure(MeasureCmd::Dim { cloud: a, method, centers, k }) => {
            outputs.cloud = a.cloud.clone();
            outputs.csv = a.csv.clone();
            Task::Dimension {
                partition: partition(a.partition.clone())?,
                n_points: a.points,
                depth: a.depth,
                method: match method {
                    MethodArg::BallMass => DimMethod::BallMass,
                    MethodArg::KnnMle => DimMethod::KnnMle,
                },
                radii: None,
                n_centers: *centers,
                k: *k,
            }
        }
        Cmd::Measure(MeasureCmd::Fibers { fine, coarse, points, depth, bin_radius, min_bin }) => {
            let d = d_of(&measure)?;
            Task::Fibers {
                fine: topology(fine, d)?,
                coarse: topology(coarse, d)?,
                n_points: *points,
                depth: *depth,
                bin_radius: *bin_radius,
                min_bin: *min_bin,
            }
        }
        Cmd::Entropy(EntropyCmd::Rw { n_max, steps }) => Task::Entropy {
            method: EntropyKind::Rw,
            n_max: *n_max,
            epsilon: 0.1,
            samples: 0,
            k: 5,
            partition: None,
            steps: *steps,
        },
        Cmd::Entropy(EntropyCmd::Mi { epsilon, samples, k, partition: p }) => Task::Entropy {
            method: EntropyKind::Mi,
            n_max: 0,
            epsilon: *epsilon,
            samples: *samples,
            k: *k,
            partition: partition(p.clone())?,
            steps: 0,
        },
        Cmd::Lyapdim(a) => Task::Lyapdim {
            steps: a.steps,
            n_max: a.n_max,
            n_points: a.points,
            n_centers: a.centers,
            partition: partition(a.partition.clone())?,
            fibers: !a.no_fibers,
            min_bin: 500,
            mi_k: 5,
        },
        Cmd::Report(_) => unreachable!("handled before build"),
    };
    outputs.report = cli.out.clone();
    outputs.plots = cli.plots.clone();
    let name = base.map(|c| c.name).unwrap_or_default();
    let cfg = ExperimentConfig { name, measure, task, seed, outputs };
    cfg.validate()?;
    Ok(cfg)
}

fn fmt(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.4}"),
        None => v.to_string(),
    }
}

fn report_ly(path: &PathBuf) -> Result<i32, Error> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    if let Some(e) = v.get("error") {
        println!("report failed: {}", e["message"]);
        return Ok(1);
    }
    let checks = v.get("checks").ok_or_else(|| Error::Format("not a pipeline report".into()))?;
    println!("h = {} ± {}   bound = {}   dim_LY = {}", fmt(&v["entropy"]["h"]), fmt(&v["entropy"]["ci"]), fmt(&v["bound"]), fmt(&v["lyapdim"]));
    println!("delta = {} ± {}", fmt(&v["delta"]["value"]), fmt(&v["delta"]["ci"]));
    println!("{:>8} {:>10} {:>10} {:>10}", "arrow", "chi", "gamma", "ci");
    for a in v["arrows"].as_array().into_iter().flatten() {
        println!("{:>8} {:>10} {:>10} {:>10}", format!("({},{})", a["i"], a["j"]), fmt(&a["chi"]), fmt(&a["gamma"]), fmt(&a["gamma_ci"]));
    }
    if let Some(m) = checks.as_object() {
        for (k, c) in m {
            println!("{k:>18}: {}", fmt(c));
        }
    }
    for f in v["flags"].as_array().into_iter().flatten() {
        println!("flag: {}", f.as_str().unwrap_or_default());
    }
    Ok(if checks["passed"] == Value::Bool(true) { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Cmd::Report(ReportCmd::Ly { report }) = &cli.cmd {
        return match report_ly(report) {
            Ok(c) => ExitCode::from(c as u8),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        };
    }
    let cfg = match build(&cli) {
        Ok(c) => c,
        Err(e) => {
            let v = serde_json::json!({ "status": "input_error", "error": { "kind": e.kind(), "message": e.to_string() } });
            print!("{}", render_report(&v));
            return ExitCode::from(1);
        }
    };
    let out = with_threads(cli.threads, || run(&cfg));
    print!("{}", render_report(&out.report));
    ExitCode::from(out.code as u8)
}
