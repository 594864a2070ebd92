use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use qpac_core::channel::{channel_to_weight, ChannelRep, KrausSet, WeightKind};
use qpac_core::clusterdata::{read_dataset, sample_dataset, write_dataset};
use qpac_core::models::{layer_norms, ModelSpec};
use qpac_core::norms::{norm_report, DEFAULT_SPARSITY_TOL};
use qpac_core::pacbayes::{
    complexity_report, gap_and_correlation, margin_loss, write_correlation_csv, ComplexityInputs, ComplexityReport,
    CorrelationRow, Formalism, LayerNorms,
};
use qpac_core::seed::derive_seed;
use qpac_core::train::{model_outputs, train_run, Batch, TrainConfig};
use qpac_core::verify::run_suite;

use crate::config::{
    read_json, resolve, BoundConfig, ChannelLayer, CorrelateConfig, GenDataConfig, ModelFile, VerifyConfig,
};
use crate::error::{CliError, CliResult};

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(CliError::io(path))
}

pub fn gen_data(cfg: &GenDataConfig, ctx: &Context) -> CliResult<serde_json::Value> {
    if cfg.count == 0 {
        return Err(CliError::Config("field `count` must be at least 1".into()));
    }
    let ds = sample_dataset(cfg.n, cfg.count, cfg.seed, &cfg.labeler)?;
    let path = resolve(&ctx.out_dir, &cfg.output);
    let mut w = create(&path)?;
    write_dataset(&ds, &mut w)?;
    w.flush().map_err(CliError::io(&path))?;
    let mut histogram = [0usize; 4];
    for s in &ds.samples {
        histogram[s.label - 1] += 1;
    }
    Ok(json!({
        "count": ds.samples.len(),
        "seed": cfg.seed,
        "n": cfg.n,
        "labeler": ds.header.labeler,
        "label_histogram": histogram,
        "path": path,
    }))
}

pub fn verify(cfg: &VerifyConfig, ctx: &Context) -> CliResult<(serde_json::Value, bool)> {
    let report = run_suite(cfg.suite, &cfg.suite_config())?;
    if let Some(p) = &cfg.output {
        write_json(&resolve(&ctx.out_dir, p), &report)?;
    }
    let passed = report.passed();
    let value = serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((value, passed))
}

fn fixed_layer_norms(formalism: Formalism, layers: &[ChannelLayer]) -> CliResult<Vec<LayerNorms>> {
    let kind = match formalism {
        Formalism::Pm => WeightKind::Pm,
        Formalism::Ptm => WeightKind::Ptm,
        Formalism::Eq => {
            return Err(CliError::Config("channel models support the PM and PTM formalisms".into()));
        }
    };
    layers
        .iter()
        .enumerate()
        .map(|(j, layer)| {
            let k = KrausSet::new(layer.kraus.clone())?;
            if !k.is_trace_preserving(1e-9) {
                return Err(CliError::Config(format!("layer {j} is not trace preserving")));
            }
            if kind == WeightKind::Pm && k.d_in != k.d_out {
                return Err(CliError::Config(format!(
                    "PM formalism needs square layers, layer {j} maps {} to {}",
                    k.d_in, k.d_out
                )));
            }
            let (d_in, d_out) = (k.d_in, k.d_out);
            let w = channel_to_weight(&ChannelRep::Kraus(k), kind)?;
            let r = norm_report(&w.w, DEFAULT_SPARSITY_TOL)?;
            Ok(LayerNorms { xi: r.sparsity, w1: r.norm_11, wf2: r.norm_f2(), d_in, d_out, unital: layer.unital })
        })
        .collect()
}

pub fn bound(cfg: &BoundConfig, ctx: &Context) -> CliResult<ComplexityReport> {
    let model: ModelFile = read_json(&cfg.model, "model")?;
    let (formalism, layers, loss, n_samples) = match &model {
        ModelFile::Architecture { architecture, n } => {
            let spec = ModelSpec::new(*architecture, *n)?;
            let path = cfg.params.as_ref().ok_or_else(|| CliError::Config("field `params` is required for architecture models".into()))?;
            let params: Vec<f64> = read_json(path, "params")?;
            if params.len() != spec.param_count {
                return Err(CliError::Config(format!(
                    "params file has {} entries, the model needs {}",
                    params.len(),
                    spec.param_count
                )));
            }
            let (loss, n) = match &cfg.dataset {
                Some(p) => {
                    let file = File::open(p).map_err(CliError::io(p))?;
                    let ds = read_dataset(std::io::BufReader::new(file))?;
                    let batch = Batch::from_samples(&ds.samples);
                    let out = model_outputs(&spec.build(&params)?, &batch)?;
                    (margin_loss(&out, &batch.labels, cfg.gamma)?, batch.len())
                }
                None => (cfg.empirical_margin_loss.unwrap_or(0.0), required_samples(cfg)?),
            };
            (spec.formalism(), layer_norms(&spec, &params)?, loss, n)
        }
        ModelFile::Channels { formalism, layers } => {
            if cfg.dataset.is_some() || cfg.params.is_some() {
                return Err(CliError::Config("channel models take neither `params` nor `dataset`".into()));
            }
            let norms = fixed_layer_norms(*formalism, layers)?;
            (*formalism, norms, cfg.empirical_margin_loss.unwrap_or(0.0), required_samples(cfg)?)
        }
    };
    if !(0.0..=1.0).contains(&loss) {
        return Err(CliError::Config("field `empirical_margin_loss` must lie in [0, 1]".into()));
    }
    let report = complexity_report(&ComplexityInputs {
        formalism,
        layers,
        gamma: cfg.gamma,
        delta: cfg.delta,
        n_samples,
        empirical_margin_loss: loss,
        eq: None,
    })?;
    if let Some(p) = &cfg.output {
        write_json(&resolve(&ctx.out_dir, p), &report)?;
    }
    if let Some(p) = &cfg.csv {
        let row = CorrelationRow {
            run_id: 0,
            seed: 0,
            formalism: report.formalism,
            depth: report.depth,
            beta: report.beta,
            fro_sum: report.fro_sum,
            xi_max: report.xi_max,
            complexity_term: report.complexity_term,
            train_loss_margin: report.empirical_margin_loss,
            test_loss_0: f64::NAN,
            gap: f64::NAN,
            bound_value: report.bound_value,
        };
        let path = resolve(&ctx.out_dir, p);
        let mut w = create(&path)?;
        write_correlation_csv(&[row], &mut w)?;
        w.flush().map_err(CliError::io(&path))?;
    }
    Ok(report)
}

fn required_samples(cfg: &BoundConfig) -> CliResult<usize> {
    match cfg.n_samples {
        Some(n) if n >= 2 => Ok(n),
        Some(_) => Err(CliError::Config("field `n_samples` must be at least 2".into())),
        None => Err(CliError::Config("field `n_samples` is required without a dataset".into())),
    }
}

/// Seeds of run `r`: training, training data, test data.
pub fn run_seeds(base: u64, r: usize) -> (u64, u64, u64) {
    let r = r as u64;
    (derive_seed(base, &[r, 0]), derive_seed(base, &[r, 1]), derive_seed(base, &[r, 2]))
}

#[derive(Debug, Serialize)]
pub struct CorrelateSummary {
    pub architecture: qpac_core::models::Architecture,
    pub runs: usize,
    pub completed: usize,
    pub failed: Vec<FailedRun>,
    pub pearson_r: Option<f64>,
    pub ci90: Option<(f64, f64)>,
    pub csv: PathBuf,
    pub records: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct FailedRun {
    pub run_id: usize,
    pub message: String,
}

pub fn correlate(cfg: &CorrelateConfig, ctx: &Context) -> CliResult<CorrelateSummary> {
    if cfg.runs < 3 {
        return Err(CliError::Config("field `runs` must be at least 3".into()));
    }
    if cfg.train_size < 2 || cfg.test_size == 0 {
        return Err(CliError::Config("need `train_size` ≥ 2 and `test_size` ≥ 1".into()));
    }
    cfg.train.validate().map_err(|e| CliError::Config(format!("field `train`: {e}")))?;
    let spec = ModelSpec::new(cfg.architecture, cfg.n)?;
    let start = Instant::now();
    let results: Vec<Result<qpac_core::train::TrainingRun, String>> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let (seed, train_seed, test_seed) = run_seeds(cfg.base_seed, r);
            let one = || -> qpac_core::Result<_> {
                let train = Batch::from_samples(&sample_dataset(cfg.n, cfg.train_size, train_seed, &cfg.labeler)?.samples);
                let test = Batch::from_samples(&sample_dataset(cfg.n, cfg.test_size, test_seed, &cfg.labeler)?.samples);
                let tc = TrainConfig { seed, ..cfg.train.clone() };
                train_run(&spec, &train, &test, &tc, r)
            };
            one().map_err(|e| e.to_string())
        })
        .collect();
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(run) => runs.push(run),
            Err(message) => failed.push(FailedRun { run_id: r, message }),
        }
    }
    let rows: Vec<CorrelationRow> = runs.iter().map(|r| r.correlation_row()).collect();
    let csv_path = resolve(&ctx.out_dir, &cfg.csv);
    let mut w = create(&csv_path)?;
    write_correlation_csv(&rows, &mut w)?;
    w.flush().map_err(CliError::io(&csv_path))?;
    let rec_path = resolve(&ctx.out_dir, &cfg.records);
    let mut w = create(&rec_path)?;
    for run in &runs {
        serde_json::to_writer(&mut w, run).map_err(|e| CliError::Runtime(e.to_string()))?;
        w.write_all(b"\n").map_err(CliError::io(&rec_path))?;
    }
    w.flush().map_err(CliError::io(&rec_path))?;
    eprintln!("correlate: {} runs in {:.1}s", cfg.runs, start.elapsed().as_secs_f64());

    let (pearson_r, ci90) = if rows.len() >= 3 {
        let s = gap_and_correlation(&rows, cfg.base_seed)?;
        (s.pearson_r, s.ci90)
    } else {
        (None, None)
    };
    let summary = CorrelateSummary {
        architecture: cfg.architecture,
        runs: cfg.runs,
        completed: rows.len(),
        failed,
        pearson_r,
        ci90,
        csv: csv_path,
        records: rec_path,
    };
    if summary.failed.len() * 10 > cfg.runs {
        return Err(CliError::Runtime(format!(
            "{} of {} runs failed; first: {}",
            summary.failed.len(),
            cfg.runs,
            summary.failed[0].message
        )));
    }
    Ok(summary)
}
