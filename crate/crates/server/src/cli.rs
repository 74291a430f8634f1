use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use relfeed::corpus::{load_corpus, save_corpus, synthesize_corpus, AttributeSpec, Corpus, EmbeddingView, SynthConfig, ViewSpec};
use relfeed::engine::{Algorithm, BaseEmbeddings, EngineConfig};
use relfeed::metrics::{dci_report, distribution_similarity, fairness, retrieval_metrics, DciConfig, FairnessConfig, Regressor};
use relfeed::network::{from_checkpoint_json, pretrain, to_checkpoint_json, PretrainConfig, ProjectionNet};
use relfeed::simulator::{run_experiment, simulate_session, ExperimentConfig, SimulatorConfig, ViewCombo};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::tabular::{read_embeddings, FactorTable};

#[derive(Debug, Parser)]
#[command(name = "relfeed", version, about = "Relevance-feedback image retrieval: corpora, simulation, metrics, and the session service")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus whose embeddings encode its attributes.
    Synth(SynthArgs),
    /// Run one simulated user session and print its summary.
    Simulate(SimulateArgs),
    /// Run every algorithm on every view combo several times and tabulate.
    Experiment(ExperimentArgs),
    /// Disentanglement, fairness, and distribution metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Self-supervised pretraining of a projection network.
    Pretrain(PretrainArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    /// JSON file: `{"attributes": [{"name", "classes"}], "sensitive": [...]}`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Attribute count when no schema is given.
    #[arg(long, default_value_t = 4)]
    pub attributes: usize,
    /// Comma-separated `name:dim` list.
    #[arg(long, default_value = "facenet:128,mix:64,hog:256")]
    pub views: String,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Corpus manifest.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "contrastive")]
    pub algorithm: Algorithm,
    /// Weighted views for both the simulated user and the ranker, e.g. `facenet:2+mix`.
    #[arg(long, default_value = "facenet+mix+hog")]
    pub views: ViewCombo,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Fixed target id instead of a seeded draw.
    #[arg(long)]
    pub target: Option<String>,
    /// JSON with optional `engine` and `simulator` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Starting network checkpoint for the contrastive ranker.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Full per-round log as JSONL.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Final projected embeddings of every record as CSV.
    #[arg(long)]
    pub export_embeddings: Option<PathBuf>,
    /// Summary JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<Algorithm>>,
    /// Comma-separated view combos, each like `facenet+mix`.
    #[arg(long = "views-combos", value_delimiter = ',')]
    pub views_combos: Option<Vec<ViewCombo>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Worker threads; all cores when absent.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Experiment config JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for report.csv, report.json, and report.md.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricInputs {
    /// Embedding matrix: CSV, or the binary matrix format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// CSV of categorical factors with a header row and optional `id` column.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    /// Corpus manifest supplying whichever of the two is missing.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// View (or `+`-joined combo) taken from `--corpus`.
    #[arg(long, default_value = "mix")]
    pub view: ViewCombo,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegressorArg {
    Stumps,
    Ridge,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Disentanglement, completeness, and informativeness.
    Dci {
        #[command(flatten)]
        inputs: MetricInputs,
        #[arg(long, value_enum, default_value = "stumps")]
        regressor: RegressorArg,
    },
    /// kNN attribute-prediction heatmaps and demographic-parity gap.
    Fairness {
        #[command(flatten)]
        inputs: MetricInputs,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Write one heatmap CSV per attribute pair here.
        #[arg(long)]
        heatmaps: Option<PathBuf>,
    },
    /// Attribute histograms of a selection against the whole table.
    Dist {
        #[command(flatten)]
        inputs: MetricInputs,
        /// File with one selected id per line.
        #[arg(long)]
        selected: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "facenet+mix+hog")]
    pub views: ViewCombo,
    #[arg(long, value_delimiter = ',', default_value = "128")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub output_dim: usize,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint JSON destination.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service config JSON; environment and flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub addr: Option<std::net::SocketAddr>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

impl ServeArgs {
    pub fn resolve(&self) -> anyhow::Result<ServiceConfig> {
        let mut cfg = match &self.config {
            Some(p) => ServiceConfig::from_file(p)?,
            None => ServiceConfig::default(),
        }
        .with_env()?;
        if let Some(a) = self.addr {
            cfg.addr = a;
        }
        if let Some(c) = &self.corpus {
            cfg.corpus = c.clone();
        }
        if let Some(r) = &self.image_root {
            cfg.image_root = r.clone();
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
struct SchemaFile {
    attributes: Vec<AttributeSpec>,
    #[serde(default)]
    sensitive: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SimulateFile {
    engine: Option<EngineConfig>,
    simulator: Option<SimulatorConfig>,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    algorithm: Algorithm,
    seed: u64,
    target: String,
    converged: bool,
    iterations: usize,
    max_iterations: usize,
    trained_rounds: usize,
    initial_thr: f64,
    pr: Option<f64>,
    ar: f64,
    convergence_score: f64,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            Ok(so.flush()?)
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn parse_views(spec: &str, noise: f64) -> anyhow::Result<Vec<ViewSpec>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (name, dim) = s.split_once(':').with_context(|| format!("view {s:?} is not name:dim"))?;
            Ok(ViewSpec {
                name: name.trim().to_string(),
                dim: dim.trim().parse().with_context(|| format!("view {s:?}: bad dim"))?,
                noise_sigma: noise,
            })
        })
        .collect()
}

fn load(path: &Path) -> anyhow::Result<Arc<Corpus>> {
    Ok(Arc::new(load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))?))
}

/// Base embeddings for a view combo as one concatenated view.
fn combo_view(corpus: &Corpus, combo: &ViewCombo) -> anyhow::Result<EmbeddingView> {
    let cfg = EngineConfig {
        view_weights: Some(combo.weights.clone()),
        ..Default::default()
    };
    let base = BaseEmbeddings::from_corpus(corpus, &cfg)?;
    let data = (0..base.len()).flat_map(|i| base.row(i).iter().map(|&x| x as f32)).collect::<Vec<_>>();
    Ok(EmbeddingView::new(combo.name.clone(), base.dim(), data)?)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::Metrics(m) => metrics(m),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Serve(a) => {
            let cfg = a.resolve()?;
            tokio::runtime::Runtime::new()?.block_on(crate::service::serve(cfg))
        }
    }
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut cfg = SynthConfig::standard(a.n, a.attributes, a.noise, a.seed);
    if let Some(p) = &a.schema {
        let schema: SchemaFile = read_json(p)?;
        cfg.attributes = schema.attributes;
        cfg.sensitive = schema.sensitive;
    }
    cfg.views = parse_views(&a.views, a.noise)?;
    if cfg.views.is_empty() {
        bail!("at least one view is required");
    }
    let corpus = synthesize_corpus(&cfg)?;
    let manifest = save_corpus(&corpus, &a.out)?;
    eprintln!("wrote {} records to {}", corpus.len(), manifest.display());
    Ok(())
}

fn simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let corpus = load(&a.corpus)?;
    let file: SimulateFile = match &a.config {
        Some(p) => read_json(p)?,
        None => SimulateFile::default(),
    };
    let mut sim = file.simulator.unwrap_or_default();
    sim.weights = a.views.weights.clone();
    if let Some(m) = a.max_iterations {
        sim.max_iterations = m;
    }
    if a.target.is_some() {
        sim.target = a.target.clone();
    }
    let engine = EngineConfig {
        view_weights: Some(a.views.weights.clone()),
        ..file.engine.unwrap_or_default()
    };
    let net = match &a.network {
        Some(p) => Some(from_checkpoint_json(&std::fs::read_to_string(p)?)?),
        None => None,
    };
    let base = Arc::new(BaseEmbeddings::from_corpus(&corpus, &engine)?);
    let (log, session) = simulate_session(&corpus, &base, a.algorithm, &sim, &engine, a.seed, net)?;

    if let Some(p) = &a.log {
        let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        log.write_jsonl(std::io::BufWriter::new(f))?;
    }
    if let Some(p) = &a.export_embeddings {
        let mut w = csv::Writer::from_path(p)?;
        for i in 0..corpus.len() {
            let z = session.project(i);
            let mut row = vec![corpus.id(i).to_string()];
            row.extend(z.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let m = retrieval_metrics(&log);
    let summary = SimulationSummary {
        algorithm: log.algorithm,
        seed: log.seed,
        target: log.target.clone(),
        converged: log.converged,
        iterations: log.iterations,
        max_iterations: log.max_iterations,
        trained_rounds: log.trained_rounds,
        initial_thr: log.initial_thr,
        pr: m.pr,
        ar: m.ar,
        convergence_score: m.c,
    };
    emit(&pretty(&summary), a.out.as_deref())
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    let corpus = load(&a.corpus)?;
    let mut cfg: ExperimentConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(algs) = a.algorithms {
        cfg.algorithms = algs;
    }
    if let Some(c) = a.views_combos {
        cfg.combos = c;
    }
    if let Some(r) = a.runs {
        cfg.runs_per_cell = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.max_iterations {
        cfg.simulator.max_iterations = m;
    }
    let report = match a.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()?
            .install(|| run_experiment(&corpus, &cfg))?,
        None => run_experiment(&corpus, &cfg)?,
    };
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("report.csv"), report.to_csv())?;
    std::fs::write(a.out.join("report.json"), report.to_json())?;
    let md = report.to_markdown();
    std::fs::write(a.out.join("report.md"), &md)?;
    emit(&md, None)?;
    eprintln!("experiment finished in {} ms", report.wall_ms);
    Ok(())
}

/// Embeddings and factors from files, falling back to the corpus for whichever is missing.
fn metric_inputs(i: &MetricInputs, need_embeddings: bool) -> anyhow::Result<(Option<Vec<Vec<f64>>>, FactorTable)> {
    let corpus = i.corpus.as_deref().map(load).transpose()?;
    let factors = match (&i.factors, &corpus) {
        (Some(p), _) => FactorTable::read(p)?,
        (None, Some(c)) => FactorTable::from_corpus(c),
        (None, None) => bail!("--factors or --corpus is required"),
    };
    let z = if !need_embeddings {
        None
    } else {
        Some(match (&i.embeddings, &corpus) {
            (Some(p), _) => read_embeddings(p)?,
            (None, Some(c)) => {
                let v = combo_view(c, &i.view)?;
                (0..v.rows()).map(|r| v.row_f64(r)).collect()
            }
            (None, None) => bail!("--embeddings or --corpus is required"),
        })
    };
    if let Some(z) = &z {
        if z.len() != factors.len() {
            bail!("{} embedding rows but {} factor rows", z.len(), factors.len());
        }
    }
    Ok((z, factors))
}

fn metrics(m: MetricsCommand) -> anyhow::Result<()> {
    match m {
        MetricsCommand::Dci { inputs, regressor } => {
            let (z, f) = metric_inputs(&inputs, true)?;
            let cfg = DciConfig {
                regressor: match regressor {
                    RegressorArg::Stumps => Regressor::BoostedStumps,
                    RegressorArg::Ridge => Regressor::Ridge,
                },
                split_seed: inputs.split_seed,
                ..Default::default()
            };
            let report = dci_report(&z.expect("requested"), &f.code_matrix(), &cfg)?;
            emit(&pretty(&report), inputs.out.as_deref())
        }
        MetricsCommand::Fairness { inputs, k, heatmaps } => {
            let (z, f) = metric_inputs(&inputs, true)?;
            let cfg = FairnessConfig {
                k,
                split_seed: inputs.split_seed,
                ..Default::default()
            };
            let report = fairness(&z.expect("requested"), &f.attributes(), &cfg)?;
            if let Some(dir) = &heatmaps {
                std::fs::create_dir_all(dir)?;
                for h in &report.heatmaps {
                    std::fs::write(dir.join(format!("{}__{}.csv", h.target, h.sensitive)), h.to_csv())?;
                }
            }
            emit(&pretty(&report), inputs.out.as_deref())
        }
        MetricsCommand::Dist { inputs, selected } => {
            let (_, f) = metric_inputs(&inputs, false)?;
            let text = std::fs::read_to_string(&selected).with_context(|| format!("reading {}", selected.display()))?;
            let ids: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            let corpus = f.to_corpus()?;
            let report = distribution_similarity(&corpus, &ids)?;
            emit(&pretty(&report), inputs.out.as_deref())
        }
    }
}

fn pretrain_cmd(a: PretrainArgs) -> anyhow::Result<()> {
    let corpus = load(&a.corpus)?;
    let view = combo_view(&corpus, &a.views)?;
    let init = ProjectionNet::new(view.dim(), &a.hidden, a.output_dim, a.seed)?;
    let cfg = PretrainConfig {
        steps: a.steps,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seed: a.seed,
        ..Default::default()
    };
    let net = pretrain(init, &view, &cfg)?;
    emit(&to_checkpoint_json(&net), Some(&a.out))
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
    fn view_specs_parse() {
        let v = parse_views("a:3, b:5", 0.2).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!((v[1].name.as_str(), v[1].dim, v[1].noise_sigma), ("b", 5, 0.2));
        assert!(parse_views("a", 0.1).is_err());
    }

    #[test]
    fn experiment_flags_split_on_commas() {
        let cli = Cli::try_parse_from([
            "relfeed",
            "experiment",
            "--corpus",
            "m.json",
            "--algorithms",
            "rocchio,random",
            "--views-combos",
            "facenet+mix,hog",
            "--out",
            "r",
        ])
        .unwrap();
        let Command::Experiment(a) = cli.command else { panic!() };
        assert_eq!(a.algorithms.unwrap(), vec![Algorithm::Rocchio, Algorithm::Random]);
        let combos = a.views_combos.unwrap();
        assert_eq!(combos[0].weights.len(), 2);
        assert_eq!(combos[1].name, "hog");
    }
}
