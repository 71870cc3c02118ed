//! Config-driven experiment pipeline: data, training/sampling, predictive
//! summaries, metrics, traces, and SVG heatmaps, plus a hashed manifest of
//! every produced file.

use crate::config::{ExperimentConfig, Resolved};
use crate::error::{Error, Result};
use crate::hmc::{hmc_sample, ChainStats, PosteriorSamples};
use crate::inverse::{estimate_lambda, lambda_of, LambdaEstimate};
use crate::mlp::{init_params, write_param_records, ParameterVector};
use crate::oracles::{
    generate_sensor_dataset, load_dataset_csv, load_residual_points_csv, save_dataset_csv,
    save_residual_points_csv, SensorDataset,
};
use crate::render::{render_heatmap, Colormap};
use crate::rng::{rng, Stream};
use crate::stats::{
    coverage_from_values, error_csv, error_fields_from_values, exact_on_grid, predictive_summary,
    summary_csv, ErrorFields, PredictiveSummary, Realizations,
};
use crate::training::{
    trace_csv, train_adam, train_deep_ensemble, McdModel, TraceRow,
};
use crate::Method;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "PINN_UQ_OUT";

#[derive(Debug, Clone, Serialize)]
pub struct LambdaMetrics {
    pub lambda1_mean: f64,
    pub lambda1_std: f64,
    pub lambda2_mean: f64,
    pub lambda2_std: f64,
    pub degenerate: bool,
}

impl From<&LambdaEstimate> for LambdaMetrics {
    fn from(e: &LambdaEstimate) -> Self {
        LambdaMetrics {
            lambda1_mean: e.mean.0,
            lambda1_std: e.std.0,
            lambda2_mean: e.mean.1,
            lambda2_std: e.std.1,
            degenerate: e.degenerate,
        }
    }
}

/// Scalar results of one run; serialized as `metrics.json`. Field values
/// depend only on the config and seed, never on wall time, so reruns are
/// byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    pub n_realizations: usize,
    /// Per-output relative L2 error of the predictive mean (absent for
    /// external datasets without an exact reference).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub relative_l2: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_2sigma: Option<f64>,
    pub mean_predictive_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaMetrics>,
}

/// Everything a run produced.
#[derive(Debug)]
pub struct ExperimentReport {
    pub metrics: Metrics,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Output directory for a config: explicit override, else
/// `$PINN_UQ_OUT/<problem>-<method>-seed<seed>`, else the same under
/// `./runs`.
pub fn output_dir_for(config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &config.output_dir {
        return dir.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!(
        "{}-{}-seed{}",
        config.problem, config.method, config.seed
    ))
}

struct Stage<'a>(&'a str);

impl Stage<'_> {
    fn wrap(&self, e: Error) -> Error {
        match e {
            Error::Usage(m) => Error::Usage(format!("[{}] {m}", self.0)),
            Error::Numeric { stage, detail } => Error::Numeric {
                stage: format!("{}/{stage}", self.0),
                detail,
            },
            other => other,
        }
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    files.push(path.clone());
    Ok(path)
}

/// Loads or generates the sensor dataset for a resolved config.
pub fn prepare_dataset(r: &Resolved) -> Result<(SensorDataset, bool)> {
    match &r.csv_state {
        Some(path) => {
            let mut ds = load_dataset_csv(path)?;
            if let Some(rp) = &r.csv_residual {
                ds.residual_points = load_residual_points_csv(rp)?;
            }
            ds.noise_sigma_u = r.sigma_u;
            ds.noise_sigma_f = r.sigma_f;
            ds.validate(&r.problem)?;
            Ok((ds, true))
        }
        None => {
            let ds = generate_sensor_dataset(
                &r.problem,
                &r.exact,
                r.n_state,
                r.n_residual,
                r.sigma_u,
                r.sigma_f,
                r.seed,
            )?;
            Ok((ds, false))
        }
    }
}

enum Trained {
    Ensemble(crate::training::EnsembleModel),
    Mcd(McdModel),
    Hmc(PosteriorSamples),
}

fn run_method(r: &Resolved, dataset: &SensorDataset) -> Result<Trained> {
    match r.method {
        Method::DeepEnsemble => {
            let model = train_deep_ensemble(
                &r.spec,
                dataset,
                &r.problem,
                &r.train,
                r.n_members,
                r.lambda_init,
            )
            .map_err(|e| Stage("train").wrap(e))?;
            Ok(Trained::Ensemble(model))
        }
        Method::McDropout => {
            let model = McdModel::train(&r.spec, dataset, &r.problem, &r.train, r.lambda_init)
                .map_err(|e| Stage("train").wrap(e))?;
            Ok(Trained::Mcd(model))
        }
        Method::Hmc => {
            let mut warm_rng = rng(r.seed, Stream::Init);
            let init: ParameterVector = {
                let base = if r.warm_start_iterations > 0 {
                    let warm = crate::training::TrainConfig {
                        iterations: r.warm_start_iterations,
                        seed: r.seed,
                        ..r.train.clone()
                    };
                    let lambda_start = r.lambda_init.map(|li| {
                        let theta = init_params(&r.spec, &mut warm_rng);
                        crate::inverse::extend_parameters(&theta, (li.l1, li.l2))
                    });
                    train_adam(&r.spec, dataset, &r.problem, &warm, &mut warm_rng, lambda_start)
                        .map_err(|e| Stage("warm-start").wrap(e))?
                        .params
                } else {
                    let theta = init_params(&r.spec, &mut warm_rng);
                    match r.lambda_init {
                        Some(li) => crate::inverse::extend_parameters(&theta, (li.l1, li.l2)),
                        None => theta,
                    }
                };
                base
            };
            let mut chain_rng = rng(r.seed, Stream::HmcMomentum);
            let samples = hmc_sample(&r.spec, dataset, &r.problem, &r.hmc, &init, &mut chain_rng)
                .map_err(|e| Stage("sample").wrap(e))?;
            Ok(Trained::Hmc(samples))
        }
    }
}

fn summarize(r: &Resolved, trained: &Trained) -> Result<PredictiveSummary> {
    let real = match trained {
        Trained::Ensemble(m) => Realizations::Ensemble(m),
        Trained::Mcd(m) => Realizations::Mcd {
            model: m,
            n_passes: r.mcd_passes,
            seed: r.seed,
        },
        Trained::Hmc(s) => Realizations::Hmc(s, &r.spec),
    };
    predictive_summary(&real, &r.grid).map_err(|e| Stage("evaluate").wrap(e))
}

fn lambda_estimate(r: &Resolved, trained: &Trained) -> Result<Option<LambdaEstimate>> {
    if r.lambda_init.is_none() {
        return Ok(None);
    }
    let base = r.spec.param_count();
    let raw: Vec<(f64, f64)> = match trained {
        Trained::Ensemble(m) => m.members.iter().map(|p| lambda_of(&p.0, base)).collect(),
        Trained::Mcd(m) => vec![lambda_of(&m.params.0, base)],
        Trained::Hmc(s) => s
            .lambda_samples
            .clone()
            .ok_or_else(|| Error::Structure("inverse chain lost its lambda samples".into()))?,
    };
    Ok(Some(estimate_lambda(r.method, &raw)?))
}

fn output_names(n_out: usize) -> &'static [&'static str] {
    match n_out {
        1 => &["u"],
        _ => &["u", "v", "p"],
    }
}

/// Full pipeline: data, train/sample, evaluate, render, manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let r = config.resolve()?;
    let dir = output_dir_for(config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();

    // the stored config describes the experiment, not its location
    let mut stored = config.clone();
    stored.output_dir = None;
    write_file(&dir, "config.json", stored.to_json().as_bytes(), &mut files)?;

    // data
    let (dataset, external) = prepare_dataset(&r).map_err(|e| Stage("data").wrap(e))?;
    let mut state_csv = String::new();
    {
        let tmp = dir.join("dataset.csv");
        save_dataset_csv(&dataset, r.problem.kind, &tmp)?;
        state_csv.push_str(&std::fs::read_to_string(&tmp).map_err(|e| Error::io(&tmp, e))?);
        files.push(tmp);
        let rp = dir.join("residual_points.csv");
        save_residual_points_csv(&dataset.residual_points, r.problem.kind, &rp)?;
        files.push(rp);
    }
    let _ = state_csv;

    // train or sample
    let trained = run_method(&r, &dataset)?;
    let mut chain: Option<ChainStats> = None;
    match &trained {
        Trained::Ensemble(m) => {
            let records: Vec<Vec<f64>> = m.members.iter().map(|p| p.0.clone()).collect();
            let path = dir.join("members.bin");
            write_param_records(&path, &r.spec, &records)?;
            files.push(path);
            for (k, trace) in m.traces.iter().enumerate() {
                write_file(
                    &dir,
                    &format!("loss_trace_member_{k}.csv"),
                    trace_csv(trace).as_bytes(),
                    &mut files,
                )?;
            }
        }
        Trained::Mcd(m) => {
            let path = dir.join("model.bin");
            write_param_records(&path, &r.spec, &[m.params.0.clone()])?;
            files.push(path);
            write_file(
                &dir,
                "loss_trace.csv",
                trace_csv(&m.trace).as_bytes(),
                &mut files,
            )?;
        }
        Trained::Hmc(s) => {
            let records: Vec<Vec<f64>> = s.samples.iter().map(|p| p.0.clone()).collect();
            let path = dir.join("samples.bin");
            write_param_records(&path, &r.spec, &records)?;
            files.push(path);
            chain = Some(s.stats());
            let stats_json = serde_json::to_string_pretty(&s.stats()).expect("stats serialize");
            write_file(&dir, "hmc_stats.json", stats_json.as_bytes(), &mut files)?;
        }
    }

    // predictive summary + error metrics
    let summary = summarize(&r, &trained)?;
    write_file(
        &dir,
        "summary.csv",
        summary_csv(&summary).as_bytes(),
        &mut files,
    )?;
    let names = output_names(summary.n_out);
    let mut relative_l2 = BTreeMap::new();
    let mut coverage = None;
    let mut errors: Option<ErrorFields> = None;
    if !external {
        let exact_vals =
            exact_on_grid(&r.exact, &summary.grid).map_err(|e| Stage("evaluate").wrap(e))?;
        let ef = error_fields_from_values(&summary, &exact_vals)?;
        for (o, name) in names.iter().take(summary.n_out).enumerate() {
            relative_l2.insert((*name).to_string(), ef.relative_l2[o]);
        }
        // coverage over the observed state components (pressure is defined
        // only up to a constant and never observed)
        let observed: Vec<usize> = (0..r.problem.observed_dim()).collect();
        coverage = Some(coverage_from_values(&summary, &exact_vals, 2.0, &observed)?);
        write_file(
            &dir,
            "errors.csv",
            error_csv(&summary, &ef).as_bytes(),
            &mut files,
        )?;
        errors = Some(ef);
    }

    // lambda estimates
    let lambda = lambda_estimate(&r, &trained)?;
    if let Some(est) = &lambda {
        write_file(
            &dir,
            "lambda.csv",
            crate::inverse::lambda_csv(std::slice::from_ref(est)).as_bytes(),
            &mut files,
        )?;
    }

    // heatmaps
    let summary_path = dir.join("summary.csv");
    for name in names.iter().take(summary.n_out) {
        for kind in ["mean", "std"] {
            let svg = dir.join(format!("{kind}_{name}.svg"));
            render_heatmap(
                &summary_path,
                &svg,
                Colormap::Viridis,
                Some(&format!("{kind}_{name}")),
            )
            .map_err(|e| Stage("render").wrap(e))?;
            files.push(svg);
        }
    }
    if errors.is_some() {
        let errors_path = dir.join("errors.csv");
        for name in names.iter().take(summary.n_out) {
            let svg = dir.join(format!("err_{name}.svg"));
            render_heatmap(
                &errors_path,
                &svg,
                Colormap::Viridis,
                Some(&format!("err_{name}")),
            )
            .map_err(|e| Stage("render").wrap(e))?;
            files.push(svg);
        }
    }

    let mean_predictive_std =
        summary.std.iter().sum::<f64>() / summary.std.len().max(1) as f64;
    let metrics = Metrics {
        problem: r.preset.to_string(),
        method: r.method,
        seed: r.seed,
        n_realizations: summary.n_realizations,
        relative_l2,
        coverage_2sigma: coverage,
        mean_predictive_std,
        chain,
        lambda: lambda.as_ref().map(LambdaMetrics::from),
    };
    for v in metrics.relative_l2.values() {
        if !v.is_finite() {
            return Err(Error::Numeric {
                stage: "evaluate".into(),
                detail: "non-finite relative L2".into(),
            });
        }
    }
    let metrics_json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    write_file(&dir, "metrics.json", metrics_json.as_bytes(), &mut files)?;

    // manifest with content hashes
    files.sort();
    let manifest = manifest_json(&dir, &files)?;
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    files.push(manifest_path);

    Ok(ExperimentReport {
        metrics,
        output_dir: dir,
        files,
    })
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: usize,
    sha256: String,
}

fn manifest_json(dir: &Path, files: &[PathBuf]) -> Result<String> {
    let mut entries = Vec::new();
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let rel = f.strip_prefix(dir).unwrap_or(f);
        entries.push(ManifestEntry {
            path: rel.to_string_lossy().into_owned(),
            bytes: bytes.len(),
            sha256: hex,
        });
    }
    Ok(serde_json::to_string_pretty(&entries).expect("manifest serialize"))
}

/// Convenience for tests and the CLI `evaluate` subcommand: recomputes the
/// predictive summary from stored artifacts.
pub fn summary_from_artifacts(
    r: &Resolved,
    dir: &Path,
) -> Result<PredictiveSummary> {
    let trained = load_trained(r, dir)?;
    summarize(r, &trained)
}

/// Dataset for a staged run: reuse `dataset.csv` under `dir` when present,
/// otherwise generate (or load external CSVs) and persist it there.
fn dataset_for_dir(r: &Resolved, dir: &Path, files: &mut Vec<PathBuf>) -> Result<SensorDataset> {
    let state = dir.join("dataset.csv");
    let residual = dir.join("residual_points.csv");
    if state.exists() && r.csv_state.is_none() {
        let mut ds = load_dataset_csv(&state)?;
        if residual.exists() {
            ds.residual_points = load_residual_points_csv(&residual)?;
        }
        ds.noise_sigma_u = r.sigma_u;
        ds.noise_sigma_f = r.sigma_f;
        ds.validate(&r.problem)?;
        return Ok(ds);
    }
    let (ds, _) = prepare_dataset(r).map_err(|e| Stage("data").wrap(e))?;
    save_dataset_csv(&ds, r.problem.kind, &state)?;
    files.push(state);
    save_residual_points_csv(&ds.residual_points, r.problem.kind, &residual)?;
    files.push(residual);
    Ok(ds)
}

/// `generate-data` stage: writes `dataset.csv` and `residual_points.csv`.
pub fn stage_generate_data(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let r = config.resolve()?;
    let dir = output_dir_for(config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (ds, _) = prepare_dataset(&r).map_err(|e| Stage("data").wrap(e))?;
    let mut files = Vec::new();
    let state = dir.join("dataset.csv");
    save_dataset_csv(&ds, r.problem.kind, &state)?;
    files.push(state);
    let residual = dir.join("residual_points.csv");
    save_residual_points_csv(&ds.residual_points, r.problem.kind, &residual)?;
    files.push(residual);
    Ok(files)
}

/// `train` stage (DE and MCD): writes the model records and loss traces.
pub fn stage_train(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let r = config.resolve()?;
    if r.method == Method::Hmc {
        return Err(Error::Usage(
            "`train` handles de/mcd; use `sample` for hmc".into(),
        ));
    }
    let dir = output_dir_for(config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    let dataset = dataset_for_dir(&r, &dir, &mut files)?;
    match run_method(&r, &dataset)? {
        Trained::Ensemble(m) => {
            let records: Vec<Vec<f64>> = m.members.iter().map(|p| p.0.clone()).collect();
            let path = dir.join("members.bin");
            write_param_records(&path, &r.spec, &records)?;
            files.push(path);
            for (k, trace) in m.traces.iter().enumerate() {
                write_file(
                    &dir,
                    &format!("loss_trace_member_{k}.csv"),
                    trace_csv(trace).as_bytes(),
                    &mut files,
                )?;
            }
        }
        Trained::Mcd(m) => {
            let path = dir.join("model.bin");
            write_param_records(&path, &r.spec, &[m.params.0.clone()])?;
            files.push(path);
            write_file(&dir, "loss_trace.csv", trace_csv(&m.trace).as_bytes(), &mut files)?;
        }
        Trained::Hmc(_) => unreachable!(),
    }
    Ok(files)
}

/// `sample` stage (HMC): writes the sample records and chain stats.
pub fn stage_sample(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let r = config.resolve()?;
    if r.method != Method::Hmc {
        return Err(Error::Usage("`sample` only applies to hmc".into()));
    }
    let dir = output_dir_for(config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();
    let dataset = dataset_for_dir(&r, &dir, &mut files)?;
    match run_method(&r, &dataset)? {
        Trained::Hmc(s) => {
            let records: Vec<Vec<f64>> = s.samples.iter().map(|p| p.0.clone()).collect();
            let path = dir.join("samples.bin");
            write_param_records(&path, &r.spec, &records)?;
            files.push(path);
            let stats_json = serde_json::to_string_pretty(&s.stats()).expect("stats serialize");
            write_file(&dir, "hmc_stats.json", stats_json.as_bytes(), &mut files)?;
        }
        _ => unreachable!(),
    }
    Ok(files)
}

/// `evaluate` stage: summary, error fields, metrics, and lambda estimates
/// from previously written artifacts.
pub fn stage_evaluate(config: &ExperimentConfig) -> Result<(Metrics, Vec<PathBuf>)> {
    let r = config.resolve()?;
    let dir = output_dir_for(config);
    let mut files = Vec::new();
    let trained = load_trained(&r, &dir)?;
    let summary = summarize(&r, &trained)?;
    write_file(&dir, "summary.csv", summary_csv(&summary).as_bytes(), &mut files)?;
    let names = output_names(summary.n_out);
    let mut relative_l2 = BTreeMap::new();
    let mut coverage = None;
    if r.csv_state.is_none() {
        let exact_vals =
            exact_on_grid(&r.exact, &summary.grid).map_err(|e| Stage("evaluate").wrap(e))?;
        let ef = error_fields_from_values(&summary, &exact_vals)?;
        for (o, name) in names.iter().take(summary.n_out).enumerate() {
            relative_l2.insert((*name).to_string(), ef.relative_l2[o]);
        }
        let observed: Vec<usize> = (0..r.problem.observed_dim()).collect();
        coverage = Some(coverage_from_values(&summary, &exact_vals, 2.0, &observed)?);
        write_file(&dir, "errors.csv", error_csv(&summary, &ef).as_bytes(), &mut files)?;
    }
    let lambda = lambda_estimate(&r, &trained)?;
    if let Some(est) = &lambda {
        write_file(
            &dir,
            "lambda.csv",
            crate::inverse::lambda_csv(std::slice::from_ref(est)).as_bytes(),
            &mut files,
        )?;
    }
    let metrics = Metrics {
        problem: r.preset.to_string(),
        method: r.method,
        seed: r.seed,
        n_realizations: summary.n_realizations,
        relative_l2,
        coverage_2sigma: coverage,
        mean_predictive_std: summary.std.iter().sum::<f64>()
            / summary.std.len().max(1) as f64,
        chain: match &trained {
            Trained::Hmc(_) => {
                let p = dir.join("hmc_stats.json");
                std::fs::read_to_string(&p)
                    .ok()
                    .and_then(|t| serde_json::from_str(&t).ok())
            }
            _ => None,
        },
        lambda: lambda.as_ref().map(LambdaMetrics::from),
    };
    let metrics_json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    write_file(&dir, "metrics.json", metrics_json.as_bytes(), &mut files)?;
    Ok((metrics, files))
}

fn load_trained(r: &Resolved, dir: &Path) -> Result<Trained> {
    match r.method {
        Method::DeepEnsemble => {
            let file = crate::mlp::read_param_records(&dir.join("members.bin"))?;
            Ok(Trained::Ensemble(crate::training::EnsembleModel {
                spec: r.spec.clone(),
                member_seeds: (0..file.records.len() as u64).collect(),
                members: file.records.into_iter().map(ParameterVector).collect(),
                traces: Vec::new(),
            }))
        }
        Method::McDropout => {
            let file = crate::mlp::read_param_records(&dir.join("model.bin"))?;
            let params = file
                .records
                .into_iter()
                .next()
                .ok_or_else(|| Error::Empty("model file holds no record".into()))?;
            Ok(Trained::Mcd(McdModel {
                spec: r.spec.clone(),
                params: ParameterVector(params),
                dropout_rate: r.spec.dropout_rate,
                trace: Vec::<TraceRow>::new(),
            }))
        }
        Method::Hmc => {
            let file = crate::mlp::read_param_records(&dir.join("samples.bin"))?;
            let base = r.spec.param_count();
            let inverse = file.records.first().map(|rec| rec.len()) == Some(base + 2);
            let lambda_samples = inverse.then(|| {
                file.records
                    .iter()
                    .map(|rec| lambda_of(rec, base))
                    .collect()
            });
            Ok(Trained::Hmc(PosteriorSamples {
                samples: file.records.into_iter().map(ParameterVector).collect(),
                acceptance_rate: f64::NAN,
                burn_in_acceptance_rate: f64::NAN,
                final_step_size: f64::NAN,
                divergences: 0,
                method: Method::Hmc,
                lambda_samples,
            }))
        }
    }
}
