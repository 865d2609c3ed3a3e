//! Ablation and sensitivity experiments.
//!
//! A run is a grid of cells `(ratio, seed, ablation)`. Each cell splits the
//! data, trains an encoder, builds decision boundaries for every sweep value
//! and scores the open-set predictions on the test split. Cells fail
//! independently; the failure is recorded and the rest of the grid proceeds.

use std::fmt;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    build_boundaries, build_single_boundary_baseline, classify_dataset, BoundaryModel,
    InferenceRule,
};
use crate::cluster::{cluster_adaptive, ClusterResult};
use crate::data::{Dataset, Label};
use crate::encoder::DenseEncoder;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::io::load_embeddings;
use crate::params::HyperParams;
use crate::split::{split_designated, split_open, OpenSplit, SplitFractions};
use crate::synth::{gen_synthetic, SyntheticSpec};
use crate::train::{
    nearest_sub_centroid_accuracy, train_ce_baseline, train_hrl, training_prototypes,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Granular-ball representation learning and multi-granularity boundaries.
    Full,
    /// Cross-entropy encoder, multi-granularity boundaries.
    NoHrl,
    /// Granular-ball encoder, one boundary per class.
    NoMb,
    /// Cross-entropy encoder, one boundary per class.
    NoHrlNoMb,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoHrl,
        Ablation::NoMb,
        Ablation::NoHrlNoMb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoHrl => "no_hrl",
            Ablation::NoMb => "no_mb",
            Ablation::NoHrlNoMb => "no_hrl_no_mb",
        }
    }

    pub fn uses_hrl(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoMb)
    }

    pub fn multi_granular(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoHrl)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PT,
    NT,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_t" => Ok(SweepParam::PT),
            "n_t" => Ok(SweepParam::NT),
            other => Err(Error::config(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

/// Quality-filter values applied when boundaries are built. The encoder and
/// the clustering are shared by every value of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    fn settings(&self, hp: &HyperParams) -> Result<Vec<(f64, usize)>> {
        self.values
            .iter()
            .map(|&v| match self.param {
                SweepParam::PT if v > 0.0 && v <= 1.0 => Ok((v, hp.n_t)),
                SweepParam::NT if v >= 1.0 && v.fract() == 0.0 => Ok((hp.p_t, v as usize)),
                _ => Err(Error::config(format!("invalid sweep value {v}"))),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generated per seed from this spec.
    Synthetic(SyntheticSpec),
    /// A named synthetic preset.
    Preset(String),
    /// A GBEM or TSV file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Value of the `dataset` CSV column.
    pub name: String,
    pub dataset: DatasetSource,
    /// Known-class ratios to run. Empty keeps every known class and sends
    /// pre-labeled open samples to test.
    pub known_class_ratios: Vec<f64>,
    pub split: SplitFractions,
    pub hyper: HyperParams,
    pub ablations: Vec<Ablation>,
    pub sweep: Option<Sweep>,
    pub inference: InferenceRule,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "ring".into(),
            dataset: DatasetSource::Preset("ring".into()),
            known_class_ratios: Vec::new(),
            split: SplitFractions::default(),
            hyper: HyperParams::default(),
            ablations: Ablation::ALL.to_vec(),
            sweep: None,
            inference: InferenceRule::Nearest,
            seeds: vec![0],
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.ablations.is_empty() {
            return Err(Error::config("at least one ablation is required"));
        }
        if let Some(r) = self
            .known_class_ratios
            .iter()
            .find(|r| !(**r > 0.0 && **r < 1.0))
        {
            return Err(Error::config(format!(
                "known class ratio {r} must lie in (0, 1)"
            )));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config("sweep needs at least one value"));
            }
            s.settings(&self.hyper)?;
        }
        if let DatasetSource::Preset(name) = &self.dataset {
            SyntheticSpec::preset(name)?;
        }
        Ok(())
    }

    fn filter_settings(&self) -> Vec<(f64, usize)> {
        match &self.sweep {
            Some(s) => s.settings(&self.hyper).expect("validated"),
            None => vec![(self.hyper.p_t, self.hyper.n_t)],
        }
    }

    fn ratio_slots(&self) -> Vec<Option<f64>> {
        if self.known_class_ratios.is_empty() {
            vec![None]
        } else {
            self.known_class_ratios.iter().copied().map(Some).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p_t: f64,
    pub n_t: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub ratio: Option<f64>,
    pub seed: u64,
    pub ablation: Ablation,
    /// Original labels of the known classes, in model label order.
    pub known_classes: Vec<Label>,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Closed-set nearest-sub-centroid accuracy on the validation split.
    pub valid_closed_acc: Option<f64>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub ratio: Option<f64>,
    pub seed: u64,
    pub ablation: Ablation,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
}

pub const CSV_HEADER: &str =
    "dataset,ratio,seed,ablation,p_t,n_t,n_boundaries,acc,f1_all,f1_u,f1_k";

fn ratio_tag(r: Option<f64>) -> String {
    r.map_or_else(|| "NA".to_string(), |r| r.to_string())
}

impl CellResult {
    pub fn file_name(&self) -> String {
        format!(
            "r{}_s{}_{}.json",
            ratio_tag(self.ratio),
            self.seed,
            self.ablation
        )
    }
}

impl ExperimentOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            for row in &c.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    c.dataset,
                    ratio_tag(c.ratio),
                    c.seed,
                    c.ablation,
                    row.p_t,
                    row.n_t,
                    row.report.n_boundaries,
                    row.report.csv_row()
                ));
            }
        }
        out
    }

    /// Mean `[acc, f1_all, f1_u, f1_k]` in percent over all cells of
    /// `ablation`, for sweep row `row`.
    pub fn mean_scores(&self, ablation: Ablation, row: usize) -> Option<[f64; 4]> {
        let picked: Vec<[f64; 4]> = self
            .cells
            .iter()
            .filter(|c| c.ablation == ablation)
            .filter_map(|c| c.rows.get(row))
            .map(|r| r.report.percentages())
            .collect();
        if picked.is_empty() {
            return None;
        }
        let n = picked.len() as f64;
        Some(std::array::from_fn(|i| {
            picked.iter().map(|p| p[i]).sum::<f64>() / n
        }))
    }

    /// Writes one JSON file per cell under `cells/`, the aggregate
    /// `results.csv` and `failed_cells.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let cells = dir.join("cells");
        fs::create_dir_all(&cells)?;
        for c in &self.cells {
            fs::write(cells.join(c.file_name()), serde_json::to_string_pretty(c)?)?;
        }
        fs::write(dir.join("results.csv"), self.csv())?;
        fs::write(
            dir.join("failed_cells.json"),
            serde_json::to_string_pretty(&self.failures)?,
        )?;
        Ok(())
    }
}

/// Loads or generates the dataset for one seed.
pub fn load_source(source: &DatasetSource, seed: u64) -> Result<Dataset> {
    match source {
        DatasetSource::Synthetic(spec) => gen_synthetic(spec, seed),
        DatasetSource::Preset(name) => gen_synthetic(&SyntheticSpec::preset(name)?, seed),
        DatasetSource::File(path) => load_embeddings(path),
    }
}

/// The split a cell runs on.
pub fn make_split(
    ds: &Dataset,
    ratio: Option<f64>,
    seed: u64,
    fractions: &SplitFractions,
) -> Result<OpenSplit> {
    match ratio {
        Some(r) => split_open(ds, r, seed, fractions),
        None => split_designated(ds, seed, fractions),
    }
}

/// A trained encoder with the clustering of its training embeddings.
struct Trained {
    encoder: DenseEncoder,
    encoded_train: Dataset,
    clusters: ClusterResult,
    loss: Vec<f64>,
}

fn train_route(split: &OpenSplit, hp: &HyperParams, hrl: bool) -> Result<Trained> {
    if hrl {
        let out = train_hrl(&split.train, hp)?;
        Ok(Trained {
            encoder: out.encoder,
            encoded_train: out.encoded,
            clusters: out.clusters,
            loss: out.history.iter().map(|e| e.loss).collect(),
        })
    } else {
        let out = train_ce_baseline(&split.train, hp)?;
        let encoded_train = out.encoder.encode(&split.train)?;
        let clusters = cluster_adaptive(&encoded_train, hp)?;
        Ok(Trained {
            encoder: out.encoder,
            encoded_train,
            clusters,
            loss: out.history,
        })
    }
}

fn score(encoded_test: &Dataset, model: &BoundaryModel, rule: InferenceRule) -> Result<EvalReport> {
    let preds: Vec<Label> = classify_dataset(encoded_test, model, rule)?
        .iter()
        .map(|p| p.label)
        .collect();
    let mut report = evaluate(&preds, &encoded_test.labels(), encoded_test.num_known())?;
    debug_assert_eq!(report.num_samples(), encoded_test.len() as u64);
    report.n_boundaries = model.n_boundaries();
    Ok(report)
}

fn run_cell(
    cfg: &ExperimentConfig,
    split: &OpenSplit,
    ratio: Option<f64>,
    seed: u64,
    ablation: Ablation,
    trained: &Trained,
) -> Result<CellResult> {
    let metric = cfg.hyper.metric;
    let encoded_test = trained.encoder.encode(&split.test)?;
    let encoded_valid = trained.encoder.encode(&split.valid)?;
    let mut rows = Vec::new();
    for (p_t, n_t) in cfg.filter_settings() {
        let model = if ablation.multi_granular() {
            build_boundaries(
                &trained.encoded_train,
                &trained.clusters.refilter(p_t, n_t),
                metric,
            )?
        } else {
            build_single_boundary_baseline(&trained.encoded_train, metric)?
        };
        rows.push(SweepRow {
            p_t,
            n_t,
            report: score(&encoded_test, &model, cfg.inference)?,
        });
    }
    let valid_closed_acc = if encoded_valid.is_empty() {
        None
    } else {
        let protos = training_prototypes(&trained.encoded_train, &trained.clusters, metric)?;
        Some(nearest_sub_centroid_accuracy(&encoded_valid, &protos)?)
    };
    Ok(CellResult {
        dataset: cfg.name.clone(),
        ratio,
        seed,
        ablation,
        known_classes: split.known_originals(),
        train_loss: trained.loss.clone(),
        valid_closed_acc,
        rows,
    })
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

/// Every cell of one `(ratio, seed)` pair. Training is shared between the
/// ablations that use the same route.
fn run_unit(
    cfg: &ExperimentConfig,
    ratio: Option<f64>,
    seed: u64,
) -> Vec<std::result::Result<CellResult, CellFailure>> {
    let fail = |ablation: Ablation, error: String| CellFailure {
        ratio,
        seed,
        ablation,
        error,
    };
    let hp = HyperParams {
        seed,
        ..cfg.hyper.clone()
    };
    let split =
        load_source(&cfg.dataset, seed).and_then(|ds| make_split(&ds, ratio, seed, &cfg.split));
    let split = match split {
        Ok(s) => s,
        Err(e) => {
            return cfg
                .ablations
                .iter()
                .map(|&a| Err(fail(a, e.to_string())))
                .collect()
        }
    };
    let guarded = |f: &dyn Fn() -> Result<Trained>| -> std::result::Result<Trained, String> {
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r.map_err(|e| e.to_string()),
            Err(p) => Err(panic_message(p)),
        }
    };
    let needs = |hrl: bool| cfg.ablations.iter().any(|a| a.uses_hrl() == hrl);
    let hrl = needs(true).then(|| guarded(&|| train_route(&split, &hp, true)));
    let ce = needs(false).then(|| guarded(&|| train_route(&split, &hp, false)));

    cfg.ablations
        .iter()
        .map(|&ablation| {
            let trained = if ablation.uses_hrl() { &hrl } else { &ce };
            let trained = trained.as_ref().expect("trained for every requested route");
            let trained = trained.as_ref().map_err(|e| fail(ablation, e.clone()))?;
            match catch_unwind(AssertUnwindSafe(|| {
                run_cell(cfg, &split, ratio, seed, ablation, trained)
            })) {
                Ok(Ok(cell)) => Ok(cell),
                Ok(Err(e)) => Err(fail(ablation, e.to_string())),
                Err(p) => Err(fail(ablation, panic_message(p))),
            }
        })
        .collect()
}

/// Runs the whole grid. Results come back in config order regardless of
/// scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let units: Vec<(Option<f64>, u64)> = cfg
        .ratio_slots()
        .into_iter()
        .flat_map(|r| cfg.seeds.iter().map(move |&s| (r, s)))
        .collect();
    let results: Vec<_> = units
        .par_iter()
        .map(|&(r, s)| {
            let t = std::time::Instant::now();
            let out = run_unit(cfg, r, s);
            log::info!("ratio {} seed {s}: {:.2?}", ratio_tag(r), t.elapsed());
            out
        })
        .collect();
    let mut outcome = ExperimentOutcome {
        cells: Vec::new(),
        failures: Vec::new(),
    };
    for r in results.into_iter().flatten() {
        match r {
            Ok(c) => outcome.cells.push(c),
            Err(f) => {
                log::error!(
                    "cell r{} s{} {} failed: {}",
                    ratio_tag(f.ratio),
                    f.seed,
                    f.ablation,
                    f.error
                );
                outcome.failures.push(f);
            }
        }
    }
    if let Some(dir) = &cfg.output_dir {
        outcome.write(dir)?;
    }
    Ok(outcome)
}
