//! End-to-end runs: reduce → build graph → train GAT → evaluate, for one
//! configuration or the full 12-cell grid.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    self, FlowDataset, LoadOptions, Scaler, Split, SplitSpec, Standardizer, CORPUS_PROPORTIONS,
};
use crate::dimred::{Reducer, ReducerKind, TrainConfig, DEFAULT_LATENT_DIM};
use crate::error::{Error, Result};
use crate::eval::{
    classification_report_named, grid_cells, grid_report, CellResult, ClassificationReport,
    GridCell, GridReport,
};
use crate::gat::{
    train_gat, write_history_csv, EpochRecord, GatArchitecture, GatTrainConfig, RoleMasks,
};
use crate::graph::{build_knn_graph, save_graph, Metric};
use crate::matrix::FeatureMatrix;

pub const SPLIT_FILE: &str = "split.json";
pub const REDUCED_FILE: &str = "reduced.csv";
pub const REDUCER_FILE: &str = "reducer.ckpt";
pub const GRAPH_FILE: &str = "graph.knng";
pub const MODEL_FILE: &str = "model.ckpt";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const GRID_SUMMARY_FILE: &str = "grid_summary.csv";
pub const GRID_REPORT_FILE: &str = "grid_summary.json";

/// Parameters of the synthetic surrogate corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n: usize,
    pub proportions: Vec<f64>,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n: 10_000,
            proportions: CORPUS_PROPORTIONS.to_vec(),
            dim: 20,
            separation: 1.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn generate(&self) -> Result<FlowDataset> {
        dataset::synth_blobs(
            self.n,
            &self.proportions,
            self.dim,
            self.separation,
            self.seed,
        )
    }
}

/// Feature normalisation applied before reduction, fit on training rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Zero mean, unit variance per column.
    Standard,
    /// Min-max onto `[0, 1]`, clamped.
    MinMax,
}

impl std::str::FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "standard" => Ok(Scaling::Standard),
            "minmax" | "min-max" => Ok(Scaling::MinMax),
            other => Err(Error::Config(format!(
                "unknown scaling `{other}` (expected standard or minmax)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// NetFlow CSV; the synthetic corpus is used when absent.
    pub input: Option<PathBuf>,
    pub label_column: String,
    pub drop_columns: Vec<String>,
    pub synth: SynthSpec,
    pub scaling: Scaling,
    pub reducer: ReducerKind,
    pub latent_dim: usize,
    pub k: usize,
    pub metric: Metric,
    /// Permits neighbour counts other than 3 and 5.
    pub allow_any_k: bool,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub stratify: bool,
    /// Weigh the GAT loss by inverse training-class frequency.
    pub balanced_class_weights: bool,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            label_column: "Label".into(),
            drop_columns: Vec::new(),
            synth: SynthSpec::default(),
            scaling: Scaling::Standard,
            reducer: ReducerKind::Vae,
            latent_dim: DEFAULT_LATENT_DIM,
            k: 3,
            metric: Metric::Euclidean,
            allow_any_k: false,
            epochs: 20,
            batch: 128,
            lr: 0.001,
            seed: 0,
            stratify: false,
            balanced_class_weights: false,
            out: PathBuf::from("runs"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.allow_any_k && !matches!(self.k, 3 | 5) {
            return Err(Error::Config(format!(
                "k must be 3 or 5 (got {}); pass the override flag to allow others",
                self.k
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.latent_dim == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config(
                "latent width, epochs and batch size must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and ≥ 0, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    pub fn cell(&self) -> GridCell {
        GridCell {
            reducer: self.reducer,
            k: self.k,
            metric: self.metric,
        }
    }

    pub fn cell_dir(&self) -> PathBuf {
        self.out.join(self.cell().dir_name())
    }

    pub fn reducer_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            seed: self.seed,
            latent_dim: self.latent_dim,
            ..TrainConfig::default()
        }
    }

    pub fn gat_config(&self, class_weights: Option<Vec<f64>>) -> GatTrainConfig {
        GatTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            seed: self.seed,
            class_weights,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad run config: {e}")))
    }
}

/// Loaded, split and scaled data shared by every cell of a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: FlowDataset,
    pub split: Split,
    /// Features normalised with a scaler fit on the training rows only.
    pub scaled: FeatureMatrix,
}

impl Prepared {
    pub fn masks(&self) -> Result<RoleMasks> {
        RoleMasks::from_split(self.dataset.len(), &self.split)
    }
}

fn timed<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage));
    info!("stage {stage} finished in {:.2?}", start.elapsed());
    out
}

pub fn load_input(cfg: &PipelineConfig) -> Result<FlowDataset> {
    match &cfg.input {
        Some(path) => {
            let opts = LoadOptions {
                label_column: cfg.label_column.clone(),
                drop_columns: cfg.drop_columns.clone(),
                ..LoadOptions::default()
            };
            let (ds, report) = dataset::load_netflow_csv(path, &opts)?;
            info!(
                "loaded {} rows ({} dropped) from {}",
                report.rows_kept,
                report.rows_dropped,
                path.display()
            );
            Ok(ds)
        }
        None => cfg.synth.generate(),
    }
}

/// Loads the input, splits it, and scales features.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let dataset = timed("load", || load_input(cfg))?;
    timed("split", || {
        let spec = SplitSpec {
            stratify: cfg.stratify,
            ..SplitSpec::new(cfg.seed)
        };
        let split = dataset::split(&dataset.labels, &spec)?;
        let train = dataset.features.select_rows(&split.train)?;
        let scaled = match cfg.scaling {
            Scaling::Standard => Standardizer::fit(&train)?.apply(&dataset.features)?,
            Scaling::MinMax => Scaler::fit(&train)?.apply(&dataset.features)?,
        };
        Ok(Prepared {
            dataset,
            split,
            scaled,
        })
    })
}

/// Fits a reducer on the training rows and maps every row to the latent space.
pub fn fit_reducer(
    prepared: &Prepared,
    kind: ReducerKind,
    cfg: &PipelineConfig,
) -> Result<(Reducer, FeatureMatrix)> {
    timed("reduce", || {
        let train = prepared.scaled.select_rows(&prepared.split.train)?;
        let reducer = Reducer::fit(kind, &train, &cfg.reducer_config())?;
        let reduced = reducer.reduce(&prepared.scaled)?;
        Ok((reducer, reduced))
    })
}

/// Inverse-frequency class weights from the training labels; absent classes get 0.
pub fn balanced_weights(labels: &[usize], train: &[usize], classes: usize) -> Vec<f64> {
    let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let counts = dataset::class_counts(&train_labels, classes);
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                train.len() as f64 / (present as f64 * c as f64)
            }
        })
        .collect()
}

/// Result of one cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub dir: PathBuf,
    pub report: ClassificationReport,
    pub history: Vec<EpochRecord>,
}

/// Graph, training and evaluation for one (reducer, k, metric) cell, writing
/// every artifact into `dir`.
pub fn run_cell(
    prepared: &Prepared,
    reducer: &Reducer,
    reduced: &FeatureMatrix,
    cell: GridCell,
    cfg: &PipelineConfig,
    dir: &Path,
) -> Result<CellOutcome> {
    fs::create_dir_all(dir)?;
    let mut cell_cfg = cfg.clone();
    cell_cfg.reducer = cell.reducer;
    cell_cfg.k = cell.k;
    cell_cfg.metric = cell.metric;
    fs::write(dir.join(CONFIG_FILE), cell_cfg.to_json()?)?;
    fs::write(dir.join(SPLIT_FILE), prepared.split.to_json()?)?;
    let labels = &prepared.dataset.labels;
    timed("reduce", || {
        let names: Vec<String> = (0..reduced.cols()).map(|i| format!("z{i}")).collect();
        dataset::write_labeled_csv(dir.join(REDUCED_FILE), reduced, labels, &names)?;
        reducer.to_checkpoint().save(dir.join(REDUCER_FILE))
    })?;
    let graph = timed("graph", || {
        let g = build_knn_graph(reduced, cell.k, cell.metric)?;
        save_graph(&g, dir.join(GRAPH_FILE))?;
        Ok(g)
    })?;
    let masks = prepared.masks()?;
    let classes = prepared.dataset.label_names.len();
    let (model, history) = timed("train", || {
        let weights = cfg
            .balanced_class_weights
            .then(|| balanced_weights(labels, &masks.train, classes));
        let arch = GatArchitecture::standard(reduced.cols(), classes);
        let (model, history) = train_gat(
            &graph,
            reduced,
            labels,
            &masks,
            arch,
            &cfg.gat_config(weights),
        )?;
        model.to_checkpoint().save(dir.join(MODEL_FILE))?;
        write_history_csv(dir.join(HISTORY_FILE), &history)?;
        Ok((model, history))
    })?;
    let report = timed("eval", || {
        let pred = model.predict(&graph, reduced, &masks.test)?;
        let truth: Vec<usize> = masks.test.iter().map(|&i| labels[i]).collect();
        let report = classification_report_named(
            &truth,
            &pred.classes,
            prepared.dataset.label_names.clone(),
        )?;
        fs::write(dir.join(REPORT_FILE), report.to_json()?)?;
        fs::write(dir.join(REPORT_TABLE_FILE), report.to_table())?;
        Ok(report)
    })?;
    info!("{cell}: test accuracy {:.4}", report.accuracy);
    Ok(CellOutcome {
        dir: dir.to_path_buf(),
        report,
        history,
    })
}

/// Runs the four stages for the configured cell under `<out>/<reducer>_<k>_<metric>/`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<CellOutcome> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let (reducer, reduced) = fit_reducer(&prepared, cfg.reducer, cfg)?;
    run_cell(
        &prepared,
        &reducer,
        &reduced,
        cfg.cell(),
        cfg,
        &cfg.cell_dir(),
    )
}

#[derive(Debug)]
pub struct GridOutcome {
    pub report: GridReport,
    pub cells: Vec<(GridCell, Result<CellOutcome>)>,
}

impl GridOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.cells.iter().all(|(_, r)| r.is_ok())
    }
}

/// Runs all twelve cells over one shared split, one scaler and one reducer
/// fit per reducer kind. Cells run in parallel; each is deterministic on its
/// own. Failed cells are recorded in the summary rather than aborting.
pub fn run_grid(cfg: &PipelineConfig) -> Result<GridOutcome> {
    let mut base = cfg.clone();
    base.allow_any_k = false;
    base.validate()?;
    let prepared = prepare(&base)?;
    fs::create_dir_all(&base.out)?;
    fs::write(base.out.join(SPLIT_FILE), prepared.split.to_json()?)?;

    let reducers: Vec<(ReducerKind, Result<(Reducer, FeatureMatrix)>)> = ReducerKind::ALL
        .par_iter()
        .map(|&kind| (kind, fit_reducer(&prepared, kind, &base)))
        .collect();
    let cells: Vec<(GridCell, Result<CellOutcome>)> = grid_cells()
        .into_par_iter()
        .map(|cell| {
            let (_, fitted) = reducers
                .iter()
                .find(|(k, _)| *k == cell.reducer)
                .expect("every kind fitted");
            let result = match fitted {
                Ok((reducer, reduced)) => run_cell(
                    &prepared,
                    reducer,
                    reduced,
                    cell,
                    &base,
                    &base.out.join(cell.dir_name()),
                ),
                Err(e) => Err(Error::Stage {
                    stage: "reduce",
                    source: Box::new(Error::Data(e.to_string())),
                }),
            };
            if let Err(e) = &result {
                log::error!("{cell} failed: {e}");
            }
            (cell, result)
        })
        .collect();
    let summary: Vec<(GridCell, CellResult)> = cells
        .iter()
        .map(|(cell, r)| {
            let result = match r {
                Ok(o) => CellResult::Report(o.report.clone()),
                Err(e) => CellResult::Failed(e.to_string()),
            };
            (*cell, result)
        })
        .collect();
    let report = grid_report(&summary)?;
    report.save_csv(base.out.join(GRID_SUMMARY_FILE))?;
    fs::write(
        base.out.join(GRID_REPORT_FILE),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(GridOutcome { report, cells })
}
