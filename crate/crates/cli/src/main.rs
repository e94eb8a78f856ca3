use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mtw_core::barycenter::{barycenter_with, BarycenterOptions};
use mtw_core::ensemble::{ari, kmeans_with, nmi, temporal_reduce_with, track_with};
use mtw_core::field::ScalarField;
use mtw_core::geodesic::interpolate;
use mtw_core::metric::{diagram_distance, distance_matrix, mt_distance_with, Executor, Solver};
use mtw_core::preprocess::MetricParams;
use mtw_core::stability::{stability_sweep, StabilityConfig};
use mtw_core::synth::field_bdt;
use mtw_core::tree::{build_bdt, compute_merge_tree, simplify, Bdt, MergeTree, TreeKind};

#[derive(Parser)]
#[command(name = "mtw", version, about = "Wasserstein distances, geodesics and barycenters of merge trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Join,
    Split,
}

impl From<Kind> for TreeKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Join => TreeKind::Join,
            Kind::Split => TreeKind::Split,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Auction,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0.05)]
    eps1: f64,
    #[arg(long, default_value_t = 0.95)]
    eps2: f64,
    #[arg(long, default_value_t = 0.9)]
    eps3: f64,
    /// Compare raw instead of locally normalized branches.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Persistence simplification of field inputs, as a fraction of the data range.
    #[arg(long, default_value_t = 0.0025)]
    simplify: f64,
    /// Tree type built from field inputs.
    #[arg(long, value_enum, default_value_t = Kind::Split)]
    kind: Kind,
    /// Write the result here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Common {
    fn params(&self) -> Result<MetricParams> {
        let p = MetricParams {
            eps1: self.eps1,
            eps2: self.eps2,
            eps3: self.eps3,
            normalize: !self.no_normalize,
        };
        p.validate()?;
        Ok(p)
    }

    fn solver(&self) -> Solver {
        match self.solver {
            SolverArg::Exact => Solver::Exact,
            SolverArg::Auction => Solver::Auction,
        }
    }

    fn executor(&self) -> Result<Executor> {
        Ok(Executor::new(self.threads)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Merge tree, BDT and persistence diagram of a scalar field.
    Tree {
        field: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Distance between two inputs, or the CSV distance matrix of a directory.
    Distance {
        #[arg(required = true, num_args = 1..=2)]
        inputs: Vec<PathBuf>,
        /// Compare persistence diagrams instead of trees.
        #[arg(long)]
        diagram: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Samples of the geodesic between two inputs.
    Geodesic {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        alpha: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Barycenter of an ensemble directory.
    Barycenter {
        dir: PathBuf,
        /// `uniform` or comma-separated weights in file order.
        #[arg(long, default_value = "uniform")]
        weights: String,
        /// Member the descent starts from; defaults to the median total persistence.
        #[arg(long)]
        init: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// k-means clustering of an ensemble directory.
    Cluster {
        dir: PathBuf,
        #[arg(long, short)]
        k: usize,
        /// Ground-truth labels in file order, to report NMI and ARI.
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<usize>>,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy key-frame selection of a sequence directory.
    Reduce {
        dir: PathBuf,
        #[arg(long)]
        target: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Matchings between consecutive frames of a sequence directory.
    Track {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Distance to noisy copies of a field for several eps1 values.
    Stability {
        /// Field to perturb; a built-in profile when omitted.
        field: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        noise: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,1")]
        eps1_values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

enum Input {
    Field(ScalarField),
    Tree(MergeTree),
    Bdt(Bdt),
}

fn read_input(path: &Path) -> Result<Input> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let ctx = || format!("loading {}", path.display());
    if value.get("dims").is_some() {
        Ok(Input::Field(ScalarField::from_json_str(&text).with_context(ctx)?))
    } else if value.get("branches").is_some() {
        Ok(Input::Bdt(Bdt::from_json_str(&text).with_context(ctx)?))
    } else if value.get("nodes").is_some() {
        Ok(Input::Tree(MergeTree::from_json_str(&text).with_context(ctx)?))
    } else {
        bail!("{}: not a field, merge tree or BDT", path.display())
    }
}

fn load_bdt(path: &Path, common: &Common) -> Result<Bdt> {
    Ok(match read_input(path)? {
        Input::Field(f) => field_bdt(&f, common.kind.into(), common.simplify)?,
        Input::Tree(t) => build_bdt(&simplify(&t, common.simplify)?),
        Input::Bdt(b) => b,
    })
}

fn load_dir(dir: &Path, common: &Common) -> Result<Vec<Bdt>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    if paths.is_empty() {
        bail!("{}: no JSON inputs", dir.display());
    }
    paths.iter().map(|p| load_bdt(p, common)).collect()
}

fn emit(text: &str, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

fn emit_json(value: &Value, output: &Option<PathBuf>) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?, output)
}

fn tree(path: &Path, common: &Common) -> Result<()> {
    let field = match read_input(path)? {
        Input::Field(f) => f,
        _ => bail!("{}: expected a scalar field", path.display()),
    };
    let tree = simplify(&compute_merge_tree(&field, common.kind.into()), common.simplify)?;
    let bdt = build_bdt(&tree);
    emit_json(
        &json!({
            "merge_tree": tree.to_json_value(),
            "bdt": bdt.to_json_value(),
            "diagram": bdt.pairs(),
        }),
        &common.output,
    )
}

fn distance(inputs: &[PathBuf], diagram: bool, common: &Common) -> Result<()> {
    let params = common.params()?;
    let exec = common.executor()?;
    if let [dir] = inputs {
        if !dir.is_dir() {
            bail!("{}: a single input must be a directory", dir.display());
        }
        let trees = load_dir(dir, common)?;
        let matrix = if diagram {
            trees
                .iter()
                .map(|a| {
                    trees
                        .iter()
                        .map(|b| Ok(diagram_distance(&a.pairs(), &b.pairs(), 2.0)?.distance))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            distance_matrix(&trees, &params, common.solver(), &exec)?
        };
        let csv: Vec<String> = matrix
            .iter()
            .map(|row| row.iter().map(|d| format!("{d:?}")).collect::<Vec<_>>().join(","))
            .collect();
        return emit(&csv.join("\n"), &common.output);
    }
    let (a, b) = (load_bdt(&inputs[0], common)?, load_bdt(&inputs[1], common)?);
    let (d, report) = if diagram {
        let m = diagram_distance(&a.pairs(), &b.pairs(), 2.0)?;
        (m.distance, json!({"metric": "diagram_w2", "distance": m.distance, "matching": m}))
    } else {
        let m = mt_distance_with(&a, &b, &params, common.solver(), &exec)?;
        (m.distance, json!({"metric": "merge_tree_w2", "distance": m.distance, "matching": m}))
    };
    match &common.output {
        Some(_) => emit_json(&report, &common.output),
        None => emit(&format!("{d:?}"), &None),
    }
}

fn geodesic(a: &Path, b: &Path, alphas: &[f64], common: &Common) -> Result<()> {
    let params = common.params()?;
    let (a, b) = (load_bdt(a, common)?, load_bdt(b, common)?);
    let m = mt_distance_with(&a, &b, &params, common.solver(), &common.executor()?)?;
    let samples = alphas
        .iter()
        .map(|&alpha| {
            let s = interpolate(&a, &b, &m, alpha, &params)?;
            Ok(json!({"alpha": s.alpha, "bdt": s.bdt.to_json_value()}))
        })
        .collect::<Result<Vec<_>>>()?;
    emit_json(
        &json!({"metric": "merge_tree_w2", "distance": m.distance, "matching": m, "samples": samples}),
        &common.output,
    )
}

fn parse_weights(text: &str, n: usize) -> Result<Option<Vec<f64>>> {
    if text == "uniform" {
        return Ok(None);
    }
    let w = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad weight {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if w.len() != n {
        bail!("{} weights for {n} members", w.len());
    }
    Ok(Some(w))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tree { field, common } => tree(&field, &common),
        Command::Distance { inputs, diagram, common } => distance(&inputs, diagram, &common),
        Command::Geodesic { a, b, alpha, common } => geodesic(&a, &b, &alpha, &common),
        Command::Barycenter { dir, weights, init, common } => {
            let trees = load_dir(&dir, &common)?;
            let options = BarycenterOptions {
                weights: parse_weights(&weights, trees.len())?,
                init_index: init,
                solver: common.solver(),
            };
            let run = barycenter_with(&trees, &common.params()?, &options, &common.executor()?)?;
            let mut out = run.to_json_value();
            out["metric"] = json!("merge_tree_w2");
            out["energy"] = json!(run.energy());
            if let Some(t) = &run.merge_tree {
                out["merge_tree"] = t.to_json_value();
            }
            emit_json(&out, &common.output)
        }
        Command::Cluster { dir, k, labels, common } => {
            let trees = load_dir(&dir, &common)?;
            let result = kmeans_with(&trees, k, &common.params()?, common.seed, common.solver(), &common.executor()?)?;
            let mut out = serde_json::to_value(&result)?;
            if let Some(truth) = labels {
                out["nmi"] = json!(nmi(&result.assignments, &truth)?);
                out["ari"] = json!(ari(&result.assignments, &truth)?);
            }
            emit_json(&out, &common.output)
        }
        Command::Reduce { dir, target, common } => {
            let trees = load_dir(&dir, &common)?;
            let result = temporal_reduce_with(&trees, target, &common.params()?, common.solver(), &common.executor()?)?;
            emit_json(&serde_json::to_value(&result)?, &common.output)
        }
        Command::Track { dir, common } => {
            let trees = load_dir(&dir, &common)?;
            let ms = track_with(&trees, &common.params()?, common.solver(), &common.executor()?)?;
            emit_json(&json!({"matchings": ms}), &common.output)
        }
        Command::Stability { field, noise, eps1_values, common } => {
            let mut config = StabilityConfig::standard(common.seed);
            if let Some(path) = field {
                config.field = match read_input(&path)? {
                    Input::Field(f) => f,
                    _ => bail!("{}: expected a scalar field", path.display()),
                };
            }
            if let Some(levels) = noise {
                config.noise_levels = levels;
            }
            config.eps1_values = eps1_values;
            config.kind = common.kind.into();
            config.simplify = common.simplify;
            config.params = MetricParams { eps1: 0.0, ..common.params()? };
            config.solver = common.solver();
            let curves = stability_sweep(&config, &common.executor()?)?;
            emit_json(&json!({"metric": "merge_tree_w2", "curves": curves}), &common.output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
