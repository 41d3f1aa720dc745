//! Subcommand implementations. Each returns the files it wrote plus any
//! per-sample warnings; errors carry the exit status.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use splitig_core::metrics::{
    aggregate, evaluate_sample, MetricToggles, MetricsReport, SampleProtocol, SensitivityConfig, METRIC_NAMES,
};
use splitig_core::zoo::{gen_synthetic, load_model, ModelKind, TrainConfig};
use splitig_core::{
    damping_scan, find_alpha_star, gradcheck, path_scan, split_integrated_gradients, AlphaStar,
    AttributionResult, ComputeGraph, Dataset, Error as CoreError, FeatureVector, ModelSpec, PathProfile,
    PathSpec,
};

use crate::config::{BaselineKind, DatasetSource, ModelSource, RunConfig};
use crate::error::{is_numeric, CliError, CliResult};
use crate::output::{comment_block, config_map, num, Emitter};
use crate::svg::{self, Marker, PathChart};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Per-sample problems that did not abort the run.
    pub warnings: Vec<String>,
    /// Short human-readable results.
    pub messages: Vec<String>,
}

/// One input to attribute, with its target output component.
#[derive(Debug, Clone)]
pub struct Case {
    pub index: usize,
    pub x: FeatureVector,
    pub label: usize,
    pub target: usize,
    /// `None` for analytic models, which are not classifiers.
    pub predicted: Option<usize>,
}

impl Case {
    pub fn correct(&self) -> Option<bool> {
        self.predicted.map(|p| p == self.label)
    }
}

/// Model, samples and baseline resolved from a config.
pub struct Workload {
    pub spec: ModelSpec,
    pub cases: Vec<Case>,
    pub excluded: Vec<usize>,
    pub baseline: FeatureVector,
    /// Scalar target graph per output component.
    graphs: Vec<ComputeGraph>,
}

impl Workload {
    pub fn graph(&self, case: &Case) -> &ComputeGraph {
        &self.graphs[case.target]
    }

    pub fn path(&self, config: &RunConfig, x: &FeatureVector) -> splitig_core::Result<PathSpec> {
        Ok(PathSpec::new(self.baseline.clone(), x.clone())?
            .with_steps(config.n_steps)
            .with_rule(config.rule))
    }
}

pub fn resolve_model(config: &RunConfig) -> CliResult<ModelSpec> {
    match &config.model {
        ModelSource::Fixture(f) => Ok(f.model()?),
        ModelSource::File(path) => {
            if !path.exists() {
                return Err(CliError::Input(format!("model file `{}` does not exist", path.display())));
            }
            load_model(path).map_err(|e| CliError::at_path(path, e))
        }
    }
}

pub fn resolve_dataset(config: &RunConfig, spec: &ModelSpec) -> CliResult<Dataset> {
    let synthetic = || -> CliResult<Dataset> {
        if config.gen_samples == 0 {
            return Err(CliError::Input("dataset is empty (gen-samples = 0)".into()));
        }
        Ok(gen_synthetic(config.gen_seed, config.gen_samples, spec.input_dim(), config.gen_classes)?)
    };
    let mut dataset = match (&config.dataset, &config.model) {
        (DatasetSource::Default, ModelSource::Fixture(f)) => f.evaluation_set()?,
        (DatasetSource::Default, ModelSource::File(_)) | (DatasetSource::Synthetic, _) => synthetic()?,
        (DatasetSource::File(path), _) => {
            let file = std::fs::File::open(path)
                .map_err(|e| CliError::Input(format!("cannot open dataset `{}`: {e}", path.display())))?;
            Dataset::read_csv(file).map_err(|e| CliError::at_path(path, e))?
        }
    };
    if let Some(n) = config.samples {
        dataset.inputs.truncate(n);
        dataset.labels.truncate(n);
    }
    if dataset.is_empty() {
        return Err(CliError::Input("dataset is empty".into()));
    }
    if dataset.n_features() != spec.input_dim() {
        return Err(CliError::Input(format!(
            "dataset has {} features but the model expects {}",
            dataset.n_features(),
            spec.input_dim()
        )));
    }
    Ok(dataset)
}

pub fn resolve_workload(config: &RunConfig) -> CliResult<Workload> {
    let spec = resolve_model(config)?;
    let dataset = resolve_dataset(config, &spec)?;
    let graphs = (0..spec.output_dim())
        .map(|t| spec.with_target(t)?.graph())
        .collect::<splitig_core::Result<Vec<_>>>()?;
    let classifier = spec.kind == ModelKind::MlpClassifier;
    let network = spec.output_network()?;
    let mut cases = Vec::new();
    let mut excluded = Vec::new();
    for (index, (x, &label)) in dataset.inputs.iter().zip(&dataset.labels).enumerate() {
        let (target, predicted) = if classifier {
            if label >= spec.output_dim() {
                return Err(CliError::Input(format!(
                    "sample {index} has label {label} but the model has {} outputs",
                    spec.output_dim()
                )));
            }
            (label, Some(network.predict(x)?))
        } else {
            (spec.target_index, None)
        };
        let case = Case {
            index,
            x: x.clone(),
            label,
            target,
            predicted,
        };
        if config.exclude_misclassified && case.correct() == Some(false) {
            excluded.push(index);
        } else {
            cases.push(case);
        }
    }
    if cases.is_empty() {
        return Err(CliError::Input("no samples left after excluding misclassified ones".into()));
    }
    let n = spec.input_dim();
    let baseline = match config.baseline {
        BaselineKind::Zero => FeatureVector::zeros(n),
        BaselineKind::Constant(c) => FeatureVector::new(vec![c; n])?,
    };
    Ok(Workload {
        spec,
        cases,
        excluded,
        baseline,
        graphs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub sample: usize,
    pub psi: Option<f64>,
    pub reason: String,
}

/// Runs `f` on every case in parallel, in case order. Numeric failures skip
/// the case; any other failure aborts. Fails if every case was skipped.
fn run_cases<T: Send>(
    cases: &[Case],
    psi: Option<f64>,
    f: impl Fn(&Case) -> splitig_core::Result<T> + Sync,
) -> CliResult<(Vec<(usize, T)>, Vec<Skipped>)> {
    let results: Vec<splitig_core::Result<T>> = cases.par_iter().map(&f).collect();
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => done.push((i, v)),
            Err(e) if is_numeric(&e) => skipped.push(Skipped {
                sample: cases[i].index,
                psi,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    if done.is_empty() {
        return Err(CliError::Numeric(format!(
            "every sample failed; first: {}",
            skipped.first().map_or("", |s| s.reason.as_str())
        )));
    }
    Ok((done, skipped))
}

fn warnings(skipped: &[Skipped]) -> Vec<String> {
    skipped
        .iter()
        .map(|s| match s.psi {
            Some(p) => format!("sample {} (psi {p}) skipped: {}", s.sample, s.reason),
            None => format!("sample {} skipped: {}", s.sample, s.reason),
        })
        .collect()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct RunSummary<'a> {
    command: &'a str,
    config: BTreeMap<&'static str, String>,
    n_samples: usize,
    excluded_misclassified: &'a [usize],
    skipped: &'a [Skipped],
}

#[derive(Serialize)]
struct PsiSplit<'a> {
    psi: f64,
    alpha_star: &'a AlphaStar,
    left: &'a AttributionResult,
    right: &'a AttributionResult,
    full: &'a AttributionResult,
}

#[derive(Serialize)]
struct AttributeSample<'a> {
    command: &'a str,
    config: BTreeMap<&'static str, String>,
    sample: usize,
    label: usize,
    target: usize,
    predicted: Option<usize>,
    correct: Option<bool>,
    input: &'a [f64],
    baseline: &'a [f64],
    output_at_baseline: f64,
    output_at_input: f64,
    splits: Vec<PsiSplit<'a>>,
}

/// Split IG for every sample and ψ: one JSON file per sample and a summary
/// CSV with one row per (sample, ψ).
pub fn cmd_attribute(config: &RunConfig) -> CliResult<Outcome> {
    let work = resolve_workload(config)?;
    let (done, skipped) = run_cases(&work.cases, None, |case| {
        let path = work.path(config, &case.x)?;
        config
            .psi
            .iter()
            .map(|&psi| split_integrated_gradients(work.graph(case), &path, psi))
            .collect::<splitig_core::Result<Vec<_>>>()
    })?;

    let mut out = Emitter::new(&config.output)?;
    for (i, splits) in &done {
        let case = &work.cases[*i];
        let payload = AttributeSample {
            command: "attribute",
            config: config_map(config),
            sample: case.index,
            label: case.label,
            target: case.target,
            predicted: case.predicted,
            correct: case.correct(),
            input: case.x.values(),
            baseline: work.baseline.values(),
            output_at_baseline: splits[0].output_at_baseline,
            output_at_input: splits[0].output_at_input,
            splits: config
                .psi
                .iter()
                .zip(splits)
                .map(|(&psi, s)| PsiSplit {
                    psi,
                    alpha_star: &s.alpha_star,
                    left: &s.left,
                    right: &s.right,
                    full: &s.full,
                })
                .collect(),
        };
        out.json(&format!("attribute_sample_{:04}.json", case.index), &payload)?;
    }
    out.csv("attribute_summary.csv", "attribute", config, |w| {
        w.write_record([
            "sample",
            "label",
            "target",
            "predicted",
            "correct",
            "psi",
            "alpha_star",
            "alpha_star_index",
            "at_endpoint",
            "output_at_baseline",
            "output_at_input",
            "sum_left",
            "sum_right",
            "sum_full",
            "gap_left",
            "gap_right",
            "gap_full",
        ])?;
        for (i, splits) in &done {
            let case = &work.cases[*i];
            for (psi, s) in config.psi.iter().zip(splits) {
                w.write_record([
                    case.index.to_string(),
                    case.label.to_string(),
                    case.target.to_string(),
                    opt_usize(case.predicted),
                    opt_bool(case.correct()),
                    psi.to_string(),
                    s.alpha_star.alpha.to_string(),
                    s.alpha_star.index.to_string(),
                    s.alpha_star.at_endpoint.to_string(),
                    s.output_at_baseline.to_string(),
                    s.output_at_input.to_string(),
                    s.left.total().to_string(),
                    s.right.total().to_string(),
                    s.full.total().to_string(),
                    s.left.completeness_gap.to_string(),
                    s.right.completeness_gap.to_string(),
                    s.full.completeness_gap.to_string(),
                ])?;
            }
        }
        Ok(())
    })?;
    out.json(
        "attribute_run.json",
        &RunSummary {
            command: "attribute",
            config: config_map(config),
            n_samples: done.len(),
            excluded_misclassified: &work.excluded,
            skipped: &skipped,
        },
    )?;
    Ok(Outcome {
        files: out.written,
        messages: vec![format!("attributed {} samples at {} psi values", done.len(), config.psi.len())],
        warnings: warnings(&skipped),
    })
}

#[derive(Serialize)]
struct ScanPayload<'a> {
    command: &'a str,
    config: BTreeMap<&'static str, String>,
    sample: usize,
    label: usize,
    target: usize,
    predicted: Option<usize>,
    correct: Option<bool>,
    alpha_stars: Vec<(f64, AlphaStar)>,
    profile: &'a PathProfile,
    target_probabilities: Option<&'a [f64]>,
    damping_factors: Option<&'a [f64]>,
}

/// Output and gradient norm along the path of one sample: CSV with one row
/// per grid node, an SVG chart and a JSON payload with α* per ψ.
pub fn cmd_scan_path(config: &RunConfig) -> CliResult<Outcome> {
    let work = resolve_workload(config)?;
    let case = work
        .cases
        .iter()
        .find(|c| c.index == config.sample)
        .ok_or_else(|| {
            CliError::Input(format!(
                "sample {} is not in the selected set of {} samples",
                config.sample,
                work.cases.len()
            ))
        })?;
    let model = work.graph(case);
    let path = work.path(config, &case.x)?;
    let profile = path_scan(model, &path)?;
    let stars = config
        .psi
        .iter()
        .map(|&psi| Ok((psi, find_alpha_star(model, &path, psi)?)))
        .collect::<splitig_core::Result<Vec<_>>>()?;
    let damping = if work.spec.kind == ModelKind::MlpClassifier {
        Some(damping_scan(&work.spec.output_network()?, &path, case.target)?)
    } else {
        None
    };

    let mut out = Emitter::new(&config.output)?;
    let stem = format!("scan_path_sample_{:04}", case.index);
    let mut csv_bytes = comment_block("scan-path", config).into_bytes();
    match &damping {
        Some(d) => profile.write_csv(
            &mut csv_bytes,
            &[
                ("target_probability", &d.target_probabilities),
                ("damping_factor", &d.damping_factors),
            ],
        )?,
        None => profile.write_csv(&mut csv_bytes, &[])?,
    }
    out.write(&format!("{stem}.csv"), &csv_bytes)?;

    let chart = PathChart {
        title: format!("{} sample {} target {}", config.model, case.index, case.target),
        alphas: &profile.alphas,
        outputs: &profile.outputs,
        grad_norms: &profile.grad_l2_norms,
        markers: stars
            .iter()
            .map(|(psi, s)| Marker {
                psi: *psi,
                alpha: s.alpha,
            })
            .collect(),
        config_text: format!("splitig scan-path\n{}", config.render()),
    };
    out.write(&format!("{stem}.svg"), svg::render(&chart).as_bytes())?;
    out.json(
        &format!("{stem}.json"),
        &ScanPayload {
            command: "scan-path",
            config: config_map(config),
            sample: case.index,
            label: case.label,
            target: case.target,
            predicted: case.predicted,
            correct: case.correct(),
            alpha_stars: stars.clone(),
            profile: &profile,
            target_probabilities: damping.as_ref().map(|d| d.target_probabilities.as_slice()),
            damping_factors: damping.as_ref().map(|d| d.damping_factors.as_slice()),
        },
    )?;
    Ok(Outcome {
        files: out.written,
        messages: stars
            .iter()
            .map(|(psi, s)| format!("psi {psi}: alpha* = {}", s.alpha))
            .collect(),
        warnings: Vec::new(),
    })
}

#[derive(Serialize)]
struct SampleMetrics<'a> {
    sample: usize,
    label: usize,
    target: usize,
    predicted: Option<usize>,
    correct: Option<bool>,
    report: &'a MetricsReport,
}

#[derive(Serialize)]
struct PsiMetrics<'a> {
    psi: f64,
    summary: MetricsReport,
    samples: Vec<SampleMetrics<'a>>,
}

#[derive(Serialize)]
struct MetricsPayload<'a> {
    command: &'a str,
    config: BTreeMap<&'static str, String>,
    excluded_misclassified: &'a [usize],
    skipped: &'a [Skipped],
    results: Vec<PsiMetrics<'a>>,
}

fn protocol(config: &RunConfig, work: &Workload, psi: f64, case: &Case) -> SampleProtocol {
    SampleProtocol {
        baseline: work.baseline.clone(),
        psi,
        n_steps: config.n_steps,
        rule: config.rule,
        ablation_increments: config.ablation_increments,
        sensitivity: SensitivityConfig {
            radius: config.radius,
            n_samples: config.perturbations,
            seed: config.seed,
            // one stream per sample, so parallel and serial runs agree
            stream: case.index as u64,
        },
        toggles: MetricToggles {
            abpc: config.abpc,
            sensitivity: config.sensitivity,
        },
    }
}

/// Every metric for every sample and ψ, plus per-ψ means.
pub fn cmd_metrics(config: &RunConfig) -> CliResult<Outcome> {
    let work = resolve_workload(config)?;
    let mut per_psi = Vec::new();
    let mut skipped = Vec::new();
    for &psi in &config.psi {
        let (done, skips) = run_cases(&work.cases, Some(psi), |case| {
            let p = protocol(config, &work, psi, case);
            Ok(evaluate_sample(work.graph(case), &case.x, &p, Some(case.index))?.1)
        })?;
        let reports: Vec<MetricsReport> = done.iter().map(|(_, r)| r.clone()).collect();
        per_psi.push((psi, aggregate(&reports)?, done));
        skipped.extend(skips);
    }

    let mut out = Emitter::new(&config.output)?;
    let metric_header = || METRIC_NAMES.iter().map(|s| s.to_string());
    out.csv("metrics_samples.csv", "metrics", config, |w| {
        let mut header: Vec<String> = ["psi", "sample", "label", "target", "predicted", "correct"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(metric_header());
        w.write_record(&header)?;
        for (psi, _, done) in &per_psi {
            for (i, report) in done {
                let case = &work.cases[*i];
                let mut row = vec![
                    psi.to_string(),
                    case.index.to_string(),
                    case.label.to_string(),
                    case.target.to_string(),
                    opt_usize(case.predicted),
                    opt_bool(case.correct()),
                ];
                row.extend(report.metric_values().iter().map(|v| num(*v)));
                w.write_record(&row)?;
            }
        }
        Ok(())
    })?;
    out.csv("metrics_summary.csv", "metrics", config, |w| {
        let mut header = vec!["psi".to_string(), "n_reports".to_string()];
        header.extend(metric_header());
        header.push("undefined".to_string());
        w.write_record(&header)?;
        for (psi, summary, _) in &per_psi {
            let mut row = vec![psi.to_string(), summary.n_reports.to_string()];
            row.extend(summary.metric_values().iter().map(|v| num(*v)));
            row.push(
                summary
                    .skipped
                    .iter()
                    .map(|(m, c)| format!("{m}={c}"))
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    let payload = MetricsPayload {
        command: "metrics",
        config: config_map(config),
        excluded_misclassified: &work.excluded,
        skipped: &skipped,
        results: per_psi
            .iter()
            .map(|(psi, summary, done)| PsiMetrics {
                psi: *psi,
                summary: summary.clone(),
                samples: done
                    .iter()
                    .map(|(i, report)| {
                        let case = &work.cases[*i];
                        SampleMetrics {
                            sample: case.index,
                            label: case.label,
                            target: case.target,
                            predicted: case.predicted,
                            correct: case.correct(),
                            report,
                        }
                    })
                    .collect(),
            })
            .collect(),
    };
    out.json("metrics.json", &payload)?;
    let messages = per_psi
        .iter()
        .map(|(psi, s, _)| {
            format!(
                "psi {psi}: {} samples, mean alpha* {}, abpc left/full/right {}/{}/{}",
                s.n_reports,
                num(s.alpha_star),
                num(s.abpc.left),
                num(s.abpc.full),
                num(s.abpc.right)
            )
        })
        .collect();
    Ok(Outcome {
        files: out.written,
        warnings: warnings(&skipped),
        messages,
    })
}

/// Trains an MLP fixture and writes its weight file.
pub fn cmd_train_fixture(config: &RunConfig) -> CliResult<Outcome> {
    let fixture = match &config.model {
        ModelSource::Fixture(f) => *f,
        ModelSource::File(p) => {
            return Err(CliError::Config(format!(
                "train-fixture needs a fixture name, got `{}`",
                p.display()
            )))
        }
    };
    let base = fixture.train_config().ok_or_else(|| {
        CliError::Config(format!("fixture `{fixture}` is analytic and has nothing to train"))
    })?;
    let train = TrainConfig {
        layer_sizes: config.layer_sizes.clone().unwrap_or(base.layer_sizes),
        activation: config.activation.unwrap_or(base.activation),
        epochs: config.epochs.unwrap_or(base.epochs),
        learning_rate: config.learning_rate.unwrap_or(base.learning_rate),
        seed: config.train_seed.unwrap_or(base.seed),
    };
    let spec = splitig_core::train_mlp(&fixture.training_set()?, &train).map_err(|e| match e {
        CoreError::InvalidSpec(m) | CoreError::Precondition(m) => CliError::Config(m),
        other => other.into(),
    })?;
    let text = splitig_core::zoo::render_model(&spec)?;
    let (header, rest) = text.split_once('\n').expect("rendered model has a header line");
    let file = format!("{header}\n{}{rest}", comment_block("train-fixture", config));

    let mut out = Emitter::new(&config.output)?;
    out.write(&format!("{fixture}.model"), file.as_bytes())?;
    Ok(Outcome {
        files: out.written,
        messages: vec![format!(
            "training accuracy {}",
            num(spec.training_accuracy)
        )],
        warnings: Vec::new(),
    })
}

/// Reverse-mode gradients against central differences at every sample.
/// Fails with a numeric error when any sample exceeds the tolerance.
pub fn cmd_gradcheck(config: &RunConfig) -> CliResult<Outcome> {
    let work = resolve_workload(config)?;
    let (done, skipped) = run_cases(&work.cases, None, |case| {
        gradcheck(work.graph(case), &case.x, config.fd_step)
    })?;
    let mut out = Emitter::new(&config.output)?;
    out.csv("gradcheck.csv", "gradcheck", config, |w| {
        w.write_record(["sample", "target", "max_relative_deviation", "pass"])?;
        for (i, dev) in &done {
            let case = &work.cases[*i];
            w.write_record([
                case.index.to_string(),
                case.target.to_string(),
                dev.to_string(),
                (*dev <= config.gradcheck_tolerance).to_string(),
            ])?;
        }
        Ok(())
    })?;
    let worst = done.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let failed = done.iter().filter(|(_, d)| *d > config.gradcheck_tolerance).count();
    if failed > 0 {
        return Err(CliError::Numeric(format!(
            "gradient check failed on {failed} of {} samples (worst deviation {worst}, tolerance {})",
            done.len(),
            config.gradcheck_tolerance
        )));
    }
    Ok(Outcome {
        files: out.written,
        messages: vec![format!("{} samples, worst relative deviation {worst}", done.len())],
        warnings: warnings(&skipped),
    })
}
