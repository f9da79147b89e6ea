use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use taskgeo::config::{resolve_threads, RunConfig, DEFAULT_MEMORY_BUDGET};
use taskgeo::Error;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "taskgeo", version, about = "Information geometry of classifier predictions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Worker threads (default: $TASKGEO_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Fixed seeds and sequential pipeline stages.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Seed for every random choice not given its own seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Bytes a distance matrix may occupy before it is spilled to disk.
    #[arg(long = "mem-budget", global = true, default_value_t = DEFAULT_MEMORY_BUDGET)]
    pub mem_budget: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check files for format and invariant violations.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Divergence between two models.
    Dist {
        p: PathBuf,
        q: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Bhattacharyya)]
        metric: Metric,
        /// Also report the per-sample values.
        #[arg(long)]
        per_sample: bool,
    },
    /// Points on the geodesic between two models.
    Geodesic {
        p: PathBuf,
        q: PathBuf,
        /// Single point at this position in [0, 1].
        #[arg(long, conflicts_with = "points")]
        lambda: Option<f64>,
        /// Evenly spaced points, endpoints included.
        #[arg(long)]
        points: Option<usize>,
        /// Output file (with --lambda) or directory (with --points).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Progress of a model between ignorance and truth.
    Progress {
        model: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Restrict to the samples of one class.
        #[arg(long)]
        class: Option<usize>,
        #[command(flatten)]
        frame: FrameArgs,
    },
    /// Reparameterize a trajectory by progress.
    Reindex {
        /// Trajectory manifest.
        trajectory: PathBuf,
        /// Labels, if the manifest does not name them.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[command(flatten)]
        frame: FrameArgs,
        /// Output curve directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Distance between two reindexed curves.
    Trajdist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
    },
    /// Riemann length of a curve, or of the geodesic between two models.
    Length {
        curve: Option<PathBuf>,
        #[arg(long, requires = "to", conflicts_with = "curve")]
        from: Option<PathBuf>,
        #[arg(long, requires = "from")]
        to: Option<PathBuf>,
    },
    /// Build a classifier from features by imprinting.
    Imprint {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Normalize each sample's features before summing.
        #[arg(long)]
        normalize: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Predict with an imprinted classifier.
    Map {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Map every checkpoint of a feature trajectory onto its task.
    MapTraj {
        /// Feature manifest.
        features: PathBuf,
        #[arg(long)]
        normalize: bool,
        /// Output trajectory directory.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Embed a set of models with InPCA.
    Inpca {
        #[command(flatten)]
        source: ModelSourceArgs,
        /// Coordinates to keep.
        #[arg(short, default_value_t = 3)]
        k: usize,
        /// Models per block when computing distances.
        #[arg(long, default_value_t = 64)]
        chunk: usize,
        /// Also write the distance matrix.
        #[arg(long)]
        save_dmat: Option<PathBuf>,
        /// Output stem; writes <stem>.csv and <stem>.json.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Project models onto fewer pseudo-classes.
    Project {
        model: PathBuf,
        /// Number of output classes.
        #[arg(long)]
        to: usize,
        /// Row-stochastic C x C' map as CSV (default: random).
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Explained stress of an embedding or distance matrix.
    Stress {
        /// Embedding stem written by `inpca`.
        #[arg(long, conflicts_with = "dmat", required_unless_present = "dmat")]
        embedding: Option<PathBuf>,
        #[arg(long)]
        dmat: Option<PathBuf>,
    },
    /// Mean curve of a bundle.
    Meantraj {
        bundle: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Tube radius of a bundle around its mean.
    Tube { bundle: PathBuf },
    /// Normalized distance between two bundles along progress.
    Normdist { a: PathBuf, b: PathBuf },
    /// Synthetic tasks and training runs.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run a multi-stage pipeline manifest.
    Pipeline {
        manifest: PathBuf,
        /// Skip stages whose inputs and outputs are unchanged.
        #[arg(long)]
        resume: bool,
        /// Record input hashes into the manifest instead of running.
        #[arg(long)]
        record_hashes: bool,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Bhattacharyya,
    GreatCircle,
    Kl,
}

#[derive(Args, Debug)]
pub struct FrameArgs {
    /// Start of the reference geodesic (default: ignorance).
    #[arg(long)]
    pub p0: Option<PathBuf>,
    /// End of the reference geodesic (default: truth).
    #[arg(long)]
    pub pstar: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ModelSourceArgs {
    /// Model list (JSON or one path per line).
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Curve directory whose grid points are embedded; repeatable.
    #[arg(long = "curve")]
    pub curves: Vec<PathBuf>,
    /// Bundle manifest whose curves are embedded; repeatable.
    #[arg(long = "bundle")]
    pub bundles: Vec<PathBuf>,
    /// Precomputed distance matrix.
    #[arg(long)]
    pub dmat: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Generate a Gaussian-blob task.
    Gen {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 800)]
        samples: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 2.0)]
        mean_scale: f64,
        #[arg(long, default_value_t = 0.6)]
        scale: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train logistic regression on a generated task.
    Train {
        /// Directory written by `synth gen`.
        #[arg(long)]
        task: PathBuf,
        /// Restrict to these classes, comma separated.
        #[arg(long, value_delimiter = ',')]
        classes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
        #[arg(long, default_value_t = 10)]
        every: usize,
        #[arg(long, default_value_t = 0.0)]
        init_scale: f64,
        /// inputs, logits, or projection:<dim>
        #[arg(long, default_value = "logits")]
        features: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Several related tasks over shared blobs, mapped onto their union.
    Related {
        /// Seeds per task.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 30)]
        grid: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.global.json;
    let result = configure(&cli.global).and_then(|cfg| commands::run(cli.command, &cli.global, &cfg));
    match result {
        Ok(out) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("serializable"));
            } else if !out.text.is_empty() {
                println!("{}", out.text.trim_end());
            }
            if out.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(out.failure_code)
            }
        }
        Err(e) => report_error(&e, json),
    }
}

fn configure(g: &GlobalArgs) -> taskgeo::Result<RunConfig> {
    let cfg = RunConfig {
        threads: resolve_threads(g.threads)?,
        determinism: g.deterministic,
        memory_budget_bytes: g.mem_budget,
        tolerances: Default::default(),
        seed: g.seed,
    };
    cfg.validate()?;
    cfg.install_thread_pool()?;
    Ok(cfg)
}

fn report_error(e: &Error, json: bool) -> ExitCode {
    let code = e.kind().exit_code();
    if json {
        let kind = format!("{:?}", e.kind()).to_lowercase();
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({ "ok": false, "kind": kind, "error": e.to_string() }))
                .expect("serializable")
        );
    } else {
        eprintln!("error: {e}");
    }
    ExitCode::from(code as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_follow_subcommands() {
        let cli = Cli::try_parse_from(["taskgeo", "stress", "--dmat", "d.dmat", "--json", "--threads", "2"]).unwrap();
        assert!(cli.global.json);
        assert_eq!(cli.global.threads, Some(2));
        assert!(Cli::try_parse_from(["taskgeo", "stress"]).is_err());
        assert!(Cli::try_parse_from(["taskgeo", "length", "--from", "a.pmat"]).is_err());
    }
}
