use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowgat_core::dataset::{self, write_netflow_csv};
use flowgat_core::eval::{classification_report_named, cost_estimate, CostInputs};
use flowgat_core::gat::{train_gat, write_history_csv, GatArchitecture, GatModel};
use flowgat_core::graph::{build_knn_graph, graph_stats, load_graph, save_graph};
use flowgat_core::pipeline::{
    self, balanced_weights, fit_reducer, prepare, run_grid, run_pipeline, PipelineConfig, Scaling,
    CONFIG_FILE, GRAPH_FILE, HISTORY_FILE, MODEL_FILE, REDUCED_FILE, REDUCER_FILE, REPORT_FILE,
    REPORT_TABLE_FILE, SPLIT_FILE,
};
use flowgat_core::{Checkpoint, Error, ErrorClass, Metric, ReducerKind, Result, RoleMasks, Split};

/// Default output root when neither `--out` nor the config file sets one.
const OUT_ENV: &str = "FLOWGAT_OUT";
const LABELS_FILE: &str = "labels.txt";
const CONFIG_COPY: &str = "config.toml";

#[derive(Parser)]
#[command(
    name = "flowgat",
    version,
    about = "Botnet flow classification: reduce, build a KNN graph, train a GAT, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic 5-class flow corpus as a NetFlow CSV.
    Synth(SynthArgs),
    /// Load, split, scale and fit a reducer; writes the reduced data into a stage directory.
    Reduce(RunArgs),
    /// Build the KNN graph over a stage directory's reduced data.
    Graph(RunArgs),
    /// Train the GAT on a stage directory's graph.
    Train(RunArgs),
    /// Evaluate a trained stage directory on its test split.
    Eval(RunArgs),
    /// Run all four stages for one configuration.
    Pipeline(RunArgs),
    /// Run the 12-cell reducer × neighbourhood grid.
    Grid(RunArgs),
    /// Print the analytic cost model for all three reducers.
    Cost(CostArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "Label")]
    label_column: String,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// NetFlow CSV for reduce/pipeline/grid, stage directory for graph/train/eval.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output root (pipeline, grid) or stage directory (reduce).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reducer: Option<ReducerKind>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    scaling: Option<Scaling>,
    #[arg(long)]
    label_column: Option<String>,
    /// Column to drop before parsing; repeatable.
    #[arg(long = "drop-column")]
    drop_columns: Vec<String>,
    /// Size of the synthetic corpus when no input is given.
    #[arg(long)]
    synth_n: Option<usize>,
    /// Allow neighbour counts other than 3 and 5.
    #[arg(long)]
    allow_any_k: bool,
    /// Weigh the GAT loss by inverse class frequency.
    #[arg(long)]
    balanced: bool,
}

#[allow(non_snake_case)]
#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct CostArgs {
    #[arg(long = "N", default_value_t = 1000)]
    N: i64,
    #[arg(long = "D", default_value_t = 8)]
    D: i64,
    #[arg(long = "E", default_value_t = 3000)]
    E: i64,
    #[arg(long = "C", default_value_t = 8)]
    C: i64,
    #[arg(long = "K", default_value_t = 8)]
    K: i64,
    #[arg(long = "H", default_value_t = 4)]
    H: i64,
    /// Attention layers.
    #[arg(long = "n", default_value_t = 2)]
    layers: i64,
    #[arg(long, default_value_t = 2)]
    a: i64,
    #[arg(long, default_value_t = 2)]
    b: i64,
    #[arg(long, default_value_t = 4)]
    c: i64,
    #[arg(long, default_value_t = 32)]
    d_in: i64,
    #[arg(long, default_value_t = 8)]
    d_out: i64,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let mut out_from_file = false;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            out_from_file = table.contains_key("out");
            cfg = toml::Value::Table(table)
                .try_into()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        if !out_from_file {
            if let Ok(root) = std::env::var(OUT_ENV) {
                cfg.out = PathBuf::from(root);
            }
        }
        if let Some(v) = &self.input {
            cfg.input = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.reducer {
            cfg.reducer = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.metric {
            cfg.metric = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch {
            cfg.batch = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.latent_dim {
            cfg.latent_dim = v;
        }
        if let Some(v) = self.scaling {
            cfg.scaling = v;
        }
        if let Some(v) = &self.label_column {
            cfg.label_column = v.clone();
        }
        if !self.drop_columns.is_empty() {
            cfg.drop_columns = self.drop_columns.clone();
        }
        if let Some(v) = self.synth_n {
            cfg.synth.n = v;
        }
        cfg.allow_any_k |= self.allow_any_k;
        cfg.balanced_class_weights |= self.balanced;
        cfg.validate()?;
        Ok(cfg)
    }

    fn archive_config(&self, dir: &Path) -> Result<()> {
        if let Some(path) = &self.config {
            fs::create_dir_all(dir)?;
            fs::copy(path, dir.join(CONFIG_COPY))?;
        }
        Ok(())
    }

    fn stage_dir(&self) -> Result<PathBuf> {
        self.input
            .clone()
            .ok_or_else(|| Error::Config("--input <stage directory> is required".into()))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synth(a) => synth(a)?,
        Command::Reduce(a) => reduce(&a)?,
        Command::Graph(a) => graph(&a)?,
        Command::Train(a) => train(&a)?,
        Command::Eval(a) => eval(&a)?,
        Command::Pipeline(a) => {
            let cfg = a.resolve()?;
            a.archive_config(&cfg.cell_dir())?;
            let outcome = run_pipeline(&cfg)?;
            print!("{}", outcome.report.to_table());
            println!("artifacts in {}", outcome.dir.display());
        }
        Command::Grid(a) => {
            let cfg = a.resolve()?;
            a.archive_config(&cfg.out)?;
            let outcome = run_grid(&cfg)?;
            print!("{}", outcome.report.to_table());
            if let Some((_, Err(e))) = outcome.cells.iter().find(|(_, r)| r.is_err()) {
                eprintln!("{} of 12 cells failed", outcome.report.failed().len());
                return Ok(ExitCode::from(exit_code(e)));
            }
        }
        Command::Cost(a) => cost(&a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = pipeline::SynthSpec {
        n: a.n,
        dim: a.dim,
        separation: a.separation,
        seed: a.seed,
        ..Default::default()
    };
    let ds = spec.generate()?;
    if let Some(parent) = a.out.parent() {
        fs::create_dir_all(parent)?;
    }
    write_netflow_csv(&a.out, &ds, &a.label_column)?;
    println!("wrote {} flows to {}", ds.len(), a.out.display());
    Ok(())
}

/// Everything later stages need, read back from a stage directory.
struct Stage {
    cfg: PipelineConfig,
    reduced: flowgat_core::FeatureMatrix,
    labels: Vec<usize>,
    label_names: Vec<String>,
    masks: RoleMasks,
}

fn load_stage(dir: &Path) -> Result<Stage> {
    let cfg = PipelineConfig::from_json(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let (reduced, labels, _) = dataset::read_labeled_csv(dir.join(REDUCED_FILE))?;
    let label_names: Vec<String> = fs::read_to_string(dir.join(LABELS_FILE))?
        .lines()
        .map(str::to_string)
        .collect();
    let split = Split::from_json(&fs::read_to_string(dir.join(SPLIT_FILE))?)?;
    let masks = RoleMasks::from_split(labels.len(), &split)?;
    Ok(Stage {
        cfg,
        reduced,
        labels,
        label_names,
        masks,
    })
}

fn reduce(a: &RunArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir)?;
    a.archive_config(&dir)?;
    let prepared = prepare(&cfg)?;
    let (reducer, reduced) = fit_reducer(&prepared, cfg.reducer, &cfg)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_json()?)?;
    fs::write(dir.join(SPLIT_FILE), prepared.split.to_json()?)?;
    fs::write(
        dir.join(LABELS_FILE),
        prepared.dataset.label_names.join("\n") + "\n",
    )?;
    let names: Vec<String> = (0..reduced.cols()).map(|i| format!("z{i}")).collect();
    dataset::write_labeled_csv(
        dir.join(REDUCED_FILE),
        &reduced,
        &prepared.dataset.labels,
        &names,
    )?;
    reducer.to_checkpoint().save(dir.join(REDUCER_FILE))?;
    println!(
        "{} rows reduced to {} dims with {} in {}",
        reduced.rows(),
        reduced.cols(),
        cfg.reducer,
        dir.display()
    );
    Ok(())
}

/// Flags given on a later stage override the settings recorded by `reduce`.
fn stage_config(a: &RunArgs, recorded: PipelineConfig) -> Result<PipelineConfig> {
    let mut cfg = recorded;
    if let Some(v) = a.k {
        cfg.k = v;
    }
    if let Some(v) = a.metric {
        cfg.metric = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.allow_any_k |= a.allow_any_k;
    cfg.balanced_class_weights |= a.balanced;
    cfg.validate()?;
    Ok(cfg)
}

fn graph(a: &RunArgs) -> Result<()> {
    let dir = a.stage_dir()?;
    let stage = load_stage(&dir)?;
    let cfg = stage_config(a, stage.cfg)?;
    let g = build_knn_graph(&stage.reduced, cfg.k, cfg.metric)?;
    save_graph(&g, dir.join(GRAPH_FILE))?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_json()?)?;
    let s = graph_stats(&g);
    println!(
        "{} nodes, {} edges, degree {}..{} (mean {:.2})",
        s.node_count, s.edge_count, s.min_degree, s.max_degree, s.mean_degree
    );
    Ok(())
}

fn train(a: &RunArgs) -> Result<()> {
    let dir = a.stage_dir()?;
    let stage = load_stage(&dir)?;
    let cfg = stage_config(a, stage.cfg)?;
    let g = load_graph(dir.join(GRAPH_FILE))?;
    let classes = stage.label_names.len();
    let weights = cfg
        .balanced_class_weights
        .then(|| balanced_weights(&stage.labels, &stage.masks.train, classes));
    let arch = GatArchitecture::standard(stage.reduced.cols(), classes);
    let (model, history) = train_gat(
        &g,
        &stage.reduced,
        &stage.labels,
        &stage.masks,
        arch,
        &cfg.gat_config(weights),
    )?;
    model.to_checkpoint().save(dir.join(MODEL_FILE))?;
    write_history_csv(dir.join(HISTORY_FILE), &history)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_json()?)?;
    if let Some(last) = history.last() {
        println!(
            "epoch {}: train loss {:.4}, train accuracy {:.4}",
            last.epoch, last.train_loss, last.train_acc
        );
    }
    Ok(())
}

fn eval(a: &RunArgs) -> Result<()> {
    let dir = a.stage_dir()?;
    let stage = load_stage(&dir)?;
    let g = load_graph(dir.join(GRAPH_FILE))?;
    let model = GatModel::from_checkpoint(&Checkpoint::load(dir.join(MODEL_FILE))?)?;
    let pred = model.predict(&g, &stage.reduced, &stage.masks.test)?;
    let truth: Vec<usize> = stage.masks.test.iter().map(|&i| stage.labels[i]).collect();
    let report = classification_report_named(&truth, &pred.classes, stage.label_names)?;
    fs::write(dir.join(REPORT_FILE), report.to_json()?)?;
    fs::write(dir.join(REPORT_TABLE_FILE), report.to_table())?;
    print!("{}", report.to_table());
    Ok(())
}

fn cost(a: &CostArgs) -> Result<()> {
    let fields = [
        ("N", a.N),
        ("D", a.D),
        ("E", a.E),
        ("C", a.C),
        ("K", a.K),
        ("H", a.H),
        ("n", a.layers),
        ("a", a.a),
        ("b", a.b),
        ("c", a.c),
        ("d-in", a.d_in),
        ("d-out", a.d_out),
    ];
    if let Some((name, v)) = fields.iter().find(|(_, v)| *v < 0) {
        return Err(Error::Config(format!(
            "--{name} must be non-negative, got {v}"
        )));
    }
    let u = |v: i64| v as u64;
    let inputs = CostInputs {
        n: u(a.N),
        d: u(a.D),
        e: u(a.E),
        components: u(a.C),
        k: u(a.K),
        h: u(a.H),
        layers: u(a.layers),
        a: u(a.a),
        b: u(a.b),
        c: u(a.c),
        d_in: u(a.d_in),
        d_out: u(a.d_out),
    };
    inputs.validate()?;
    let est: Vec<_> = ReducerKind::ALL
        .iter()
        .map(|&m| (m, cost_estimate(m, &inputs)))
        .collect();
    println!("{:<10}{:>16}{:>16}{:>16}", "", "ae", "vae", "pca");
    let line = |name: &str, f: fn(&flowgat_core::CostEstimate) -> u128| {
        print!("{name:<10}");
        for (_, e) in &est {
            print!("{:>16}", f(e));
        }
        println!();
    };
    line("reducer", |e| e.reducer_cost);
    line("graph", |e| e.graph_cost);
    line("gat", |e| e.gat_cost);
    line("total", |e| e.total);
    Ok(())
}
