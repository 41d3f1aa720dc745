//! Attribution quality instruments: segment norm ratios, cosine similarity,
//! area between perturbation curves (ABPC) and Monte-Carlo sensitivity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::DifferentiableModel;
use crate::error::{Error, Result};
use crate::path::{split_integrated_gradients, PathSpec, QuadratureRule, SplitAttribution};
use crate::tensor::{l2_norm, FeatureVector};

pub const DEFAULT_RADIUS: f64 = 0.05;
pub const DEFAULT_PERTURBATIONS: usize = 10;
pub const DEFAULT_INCREMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    fn of(self, v: &FeatureVector) -> f64 {
        match self {
            Norm::L1 => v.l1_norm(),
            Norm::L2 => v.l2_norm(),
        }
    }
}

/// `‖right‖_p / ‖left‖_p`.
pub fn norm_ratio(right: &FeatureVector, left: &FeatureVector, norm: Norm) -> Result<f64> {
    right.ensure_same_shape(left)?;
    let denom = norm.of(left);
    if denom == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(norm.of(right) / denom)
}

pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (na, nb) = (a.l2_norm(), b.l2_norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Feature order used for ablation: by signed attribution, descending for
/// the top curve and ascending for the bottom curve, lower index first on
/// ties in both.
pub fn ablation_order(attribution: &FeatureVector, descending: bool) -> Vec<usize> {
    let a = attribution.values();
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| {
        let ord = a[i].total_cmp(&a[j]);
        let ord = if descending { ord.reverse() } else { ord };
        ord.then(i.cmp(&j))
    });
    order
}

/// Number of features ablated at increment `k` of `n_increments`:
/// `k · n / n_increments` rounded half up.
pub fn ablation_count(k: usize, n_features: usize, n_increments: usize) -> usize {
    (2 * k * n_features + n_increments) / (2 * n_increments)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbpcOutcome {
    pub area: f64,
    /// Ablated fraction at each curve point, `k / n_increments`.
    pub fractions: Vec<f64>,
    /// Model output with top-ranked features ablated, after normalization.
    pub top_curve: Vec<f64>,
    pub bottom_curve: Vec<f64>,
    /// Curves were divided by `F(x) - F(fully ablated)`.
    pub normalized: bool,
    /// The attribution has repeated values, so the ranking relied on the
    /// index tie-break.
    pub has_ties: bool,
}

/// Area between the bottom-ablation and top-ablation curves.
///
/// At increment `k` the first `ablation_count(k, ..)` features of each
/// ranking are replaced by `ablation_baseline` and `F` is recorded. Both
/// curves start at `F(x)` (fraction 0) and end at the fully ablated output
/// (fraction 1). When `F(x)` differs from the fully ablated output, curves
/// are mapped to `(F - F_ablated) / (F(x) - F_ablated)`. The area is the
/// trapezoid rule over the `n_increments` equal fraction steps.
pub fn abpc<M: DifferentiableModel + ?Sized>(
    model: &M,
    x: &FeatureVector,
    attribution: &FeatureVector,
    ablation_baseline: &FeatureVector,
    n_increments: usize,
) -> Result<AbpcOutcome> {
    x.ensure_same_shape(attribution)?;
    x.ensure_same_shape(ablation_baseline)?;
    if n_increments == 0 {
        return Err(Error::Precondition("n_increments must be at least 1".into()));
    }
    let n = x.len();
    let mut sorted = attribution.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let has_ties = sorted.windows(2).any(|w| w[0] == w[1]);

    let curve = |order: &[usize]| -> Result<Vec<f64>> {
        (0..=n_increments)
            .map(|k| {
                let mut values = x.values().to_vec();
                for &i in &order[..ablation_count(k, n, n_increments)] {
                    values[i] = ablation_baseline.values()[i];
                }
                model.value(&x.map_values(values)?)
            })
            .collect()
    };
    let mut top = curve(&ablation_order(attribution, true))?;
    let mut bottom = curve(&ablation_order(attribution, false))?;

    let ablated = top[n_increments];
    let span = top[0] - ablated;
    let normalized = span != 0.0;
    if normalized {
        for v in top.iter_mut().chain(bottom.iter_mut()) {
            *v = (*v - ablated) / span;
        }
    }
    let width = 1.0 / n_increments as f64;
    let mut area = 0.0;
    for k in 1..=n_increments {
        let prev = bottom[k - 1] - top[k - 1];
        let cur = bottom[k] - top[k];
        area += 0.5 * (prev + cur) * width;
    }
    Ok(AbpcOutcome {
        area,
        fractions: (0..=n_increments).map(|k| k as f64 * width).collect(),
        top_curve: top,
        bottom_curve: bottom,
        normalized,
        has_ties,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    /// L∞ radius of the perturbation ball.
    pub radius: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// ChaCha stream; distinct per evaluated input.
    pub stream: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            n_samples: DEFAULT_PERTURBATIONS,
            seed: 0,
            stream: 0,
        }
    }
}

impl SensitivityConfig {
    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::Precondition("sensitivity radius must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Precondition("need at least one perturbation".into()));
        }
        Ok(())
    }

    /// Perturbations with coordinates independently uniform on `[-r, r]`.
    /// The first `k` draws do not depend on `n_samples`.
    pub fn perturbations(&self, n_features: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        (0..self.n_samples)
            .map(|_| {
                (0..n_features)
                    .map(|_| rng.random_range(-self.radius..=self.radius))
                    .collect()
            })
            .collect()
    }
}

/// Sensitivity of several attribution maps produced together by one
/// procedure: for output `m`, `max_δ ‖Φ_m(x + δ) - Φ_m(x)‖₂ / ‖Φ_m(x)‖₂`.
/// An output with `‖Φ_m(x)‖₂ = 0` yields `Err(UndefinedSensitivity)` in its
/// slot.
pub fn sensitivity_many<F>(
    procedure: F,
    x: &FeatureVector,
    config: &SensitivityConfig,
) -> Result<Vec<Result<f64>>>
where
    F: Fn(&FeatureVector) -> Result<Vec<FeatureVector>> + Sync,
{
    config.validate()?;
    let reference = procedure(x)?;
    let deltas = config.perturbations(x.len());
    let perturbed: Vec<Vec<FeatureVector>> = deltas
        .par_iter()
        .map(|delta| {
            let values = x.values().iter().zip(delta).map(|(a, d)| a + d).collect();
            procedure(&x.map_values(values)?)
        })
        .collect::<Result<_>>()?;
    Ok(reference
        .iter()
        .enumerate()
        .map(|(m, phi)| {
            let norm = phi.l2_norm();
            if norm == 0.0 {
                return Err(Error::UndefinedSensitivity);
            }
            let mut worst = 0.0_f64;
            for outputs in &perturbed {
                let other = &outputs[m];
                phi.ensure_same_shape(other)?;
                let diff: Vec<f64> = other
                    .values()
                    .iter()
                    .zip(phi.values())
                    .map(|(a, b)| a - b)
                    .collect();
                worst = worst.max(l2_norm(&diff) / norm);
            }
            Ok(worst)
        })
        .collect())
}

/// `max_δ ‖Φ(x + δ) - Φ(x)‖₂ / ‖Φ(x)‖₂` over `config.n_samples` seeded draws
/// from the L∞ ball of radius `config.radius`.
pub fn sensitivity<F>(procedure: F, x: &FeatureVector, config: &SensitivityConfig) -> Result<f64>
where
    F: Fn(&FeatureVector) -> Result<FeatureVector> + Sync,
{
    let wrapped = |v: &FeatureVector| procedure(v).map(|a| vec![a]);
    sensitivity_many(wrapped, x, config)?
        .pop()
        .expect("one output")
}

/// Metric value per Split IG variant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerVariant<T> {
    pub left: T,
    pub right: T,
    pub full: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub psi: f64,
    pub n_steps: usize,
    pub rule: QuadratureRule,
    pub seed: u64,
    pub radius: f64,
    pub n_perturbations: usize,
    pub ablation_increments: usize,
}

/// Metrics for one sample at one ψ, or their mean over a sample set.
/// `None` marks an undefined value (zero-norm denominators and the like).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sample: Option<usize>,
    pub alpha_star: Option<f64>,
    pub norm_ratio_l1: Option<f64>,
    pub norm_ratio_l2: Option<f64>,
    pub cosine_left_right: Option<f64>,
    pub cosine_left_full: Option<f64>,
    pub cosine_right_full: Option<f64>,
    pub abpc: PerVariant<Option<f64>>,
    pub sensitivity: PerVariant<Option<f64>>,
    pub run_params: RunParams,
    /// Samples averaged into this report (1 for per-sample reports).
    pub n_reports: usize,
    /// Per metric, how many reports had it undefined and were skipped.
    pub skipped: Vec<(String, usize)>,
}

pub const METRIC_NAMES: [&str; 12] = [
    "alpha_star",
    "norm_ratio_l1",
    "norm_ratio_l2",
    "cosine_left_right",
    "cosine_left_full",
    "cosine_right_full",
    "abpc_left",
    "abpc_right",
    "abpc_full",
    "sensitivity_left",
    "sensitivity_right",
    "sensitivity_full",
];

impl MetricsReport {
    /// Metric values in [`METRIC_NAMES`] order.
    pub fn metric_values(&self) -> [Option<f64>; 12] {
        [
            self.alpha_star,
            self.norm_ratio_l1,
            self.norm_ratio_l2,
            self.cosine_left_right,
            self.cosine_left_full,
            self.cosine_right_full,
            self.abpc.left,
            self.abpc.right,
            self.abpc.full,
            self.sensitivity.left,
            self.sensitivity.right,
            self.sensitivity.full,
        ]
    }

    fn metric_slots(&mut self) -> [&mut Option<f64>; 12] {
        [
            &mut self.alpha_star,
            &mut self.norm_ratio_l1,
            &mut self.norm_ratio_l2,
            &mut self.cosine_left_right,
            &mut self.cosine_left_full,
            &mut self.cosine_right_full,
            &mut self.abpc.left,
            &mut self.abpc.right,
            &mut self.abpc.full,
            &mut self.sensitivity.left,
            &mut self.sensitivity.right,
            &mut self.sensitivity.full,
        ]
    }
}

/// Arithmetic mean of each metric over the reports where it is defined.
/// Metrics undefined everywhere stay `None`. Run parameters are taken from
/// the first report.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Precondition("cannot aggregate an empty report list".into()))?;
    let mut out = MetricsReport {
        sample: None,
        n_reports: reports.len(),
        skipped: Vec::new(),
        ..first.clone()
    };
    let columns: Vec<[Option<f64>; 12]> = reports.iter().map(|r| r.metric_values()).collect();
    for (m, slot) in out.metric_slots().into_iter().enumerate() {
        let defined: Vec<f64> = columns.iter().filter_map(|c| c[m]).collect();
        *slot = if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        };
    }
    for (m, name) in METRIC_NAMES.iter().enumerate() {
        let skipped = columns.iter().filter(|c| c[m].is_none()).count();
        if skipped > 0 {
            out.skipped.push((name.to_string(), skipped));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricToggles {
    pub abpc: bool,
    pub sensitivity: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        Self {
            abpc: true,
            sensitivity: true,
        }
    }
}

/// Everything [`evaluate_sample`] needs besides the model and input.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleProtocol {
    pub baseline: FeatureVector,
    pub psi: f64,
    pub n_steps: usize,
    pub rule: QuadratureRule,
    pub ablation_increments: usize,
    pub sensitivity: SensitivityConfig,
    pub toggles: MetricToggles,
}

impl SampleProtocol {
    pub fn run_params(&self) -> RunParams {
        RunParams {
            psi: self.psi,
            n_steps: self.n_steps,
            rule: self.rule,
            seed: self.sensitivity.seed,
            radius: self.sensitivity.radius,
            n_perturbations: self.sensitivity.n_samples,
            ablation_increments: self.ablation_increments,
        }
    }

    fn path(&self, x: &FeatureVector) -> Result<PathSpec> {
        Ok(PathSpec::new(self.baseline.clone(), x.clone())?
            .with_steps(self.n_steps)
            .with_rule(self.rule))
    }
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedRatio | Error::UndefinedSimilarity | Error::UndefinedSensitivity) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Split IG at `x` plus every enabled metric for the three variants.
pub fn evaluate_sample<M: DifferentiableModel + ?Sized>(
    model: &M,
    x: &FeatureVector,
    protocol: &SampleProtocol,
    sample: Option<usize>,
) -> Result<(SplitAttribution, MetricsReport)> {
    let split = split_integrated_gradients(model, &protocol.path(x)?, protocol.psi)?;
    let (l, r, f) = (
        &split.left.attributions,
        &split.right.attributions,
        &split.full.attributions,
    );
    let mut report = MetricsReport {
        sample,
        alpha_star: Some(split.alpha_star.alpha),
        norm_ratio_l1: defined(norm_ratio(r, l, Norm::L1))?,
        norm_ratio_l2: defined(norm_ratio(r, l, Norm::L2))?,
        cosine_left_right: defined(cosine_similarity(l, r))?,
        cosine_left_full: defined(cosine_similarity(l, f))?,
        cosine_right_full: defined(cosine_similarity(r, f))?,
        abpc: PerVariant::default(),
        sensitivity: PerVariant::default(),
        run_params: protocol.run_params(),
        n_reports: 1,
        skipped: Vec::new(),
    };
    if protocol.toggles.abpc {
        let area = |a: &FeatureVector| -> Result<Option<f64>> {
            Ok(Some(abpc(model, x, a, &protocol.baseline, protocol.ablation_increments)?.area))
        };
        report.abpc = PerVariant {
            left: area(l)?,
            right: area(r)?,
            full: area(f)?,
        };
    }
    if protocol.toggles.sensitivity {
        let procedure = |v: &FeatureVector| -> Result<Vec<FeatureVector>> {
            let s = split_integrated_gradients(model, &protocol.path(v)?, protocol.psi)?;
            Ok(vec![s.left.attributions, s.right.attributions, s.full.attributions])
        };
        let mut values = sensitivity_many(procedure, x, &protocol.sensitivity)?.into_iter();
        let mut next = || defined(values.next().expect("three outputs"));
        report.sensitivity = PerVariant {
            left: next()?,
            right: next()?,
            full: next()?,
        };
    }
    Ok((split, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn norm_ratio_examples() {
        assert_eq!(norm_ratio(&fv(&[6.0, 8.0]), &fv(&[3.0, 4.0]), Norm::L2).unwrap(), 2.0);
        assert_eq!(norm_ratio(&fv(&[6.0, 8.0]), &fv(&[3.0, 4.0]), Norm::L1).unwrap(), 2.0);
        assert_eq!(norm_ratio(&fv(&[0.0, 0.0]), &fv(&[3.0, 4.0]), Norm::L2).unwrap(), 0.0);
        assert_eq!(
            norm_ratio(&fv(&[1.0, 0.0]), &fv(&[0.0, 0.0]), Norm::L1),
            Err(Error::UndefinedRatio)
        );
    }

    #[test]
    fn cosine_examples() {
        let a = fv(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine_similarity(&fv(&[1.0, 2.0]), &fv(&[2.0, 4.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[0.0, 1.0])),
            Err(Error::UndefinedSimilarity)
        );
    }

    #[test]
    fn ablation_order_tie_break() {
        let a = fv(&[1.0, 3.0, 1.0, -2.0]);
        assert_eq!(ablation_order(&a, true), vec![1, 0, 2, 3]);
        assert_eq!(ablation_order(&a, false), vec![3, 0, 2, 1]);
    }

    #[test]
    fn ablation_counts() {
        assert_eq!((0..=4).map(|k| ablation_count(k, 4, 4)).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        assert_eq!(ablation_count(10, 7, 10), 7);
        assert_eq!(ablation_count(1, 5, 10), 1);
        assert_eq!(ablation_count(0, 5, 10), 0);
    }

    #[test]
    fn aggregate_examples() {
        let base = MetricsReport {
            sample: Some(0),
            alpha_star: Some(0.5),
            norm_ratio_l1: Some(1.0),
            norm_ratio_l2: None,
            cosine_left_right: None,
            cosine_left_full: None,
            cosine_right_full: None,
            abpc: PerVariant {
                left: Some(0.1),
                right: None,
                full: None,
            },
            sensitivity: PerVariant::default(),
            run_params: RunParams {
                psi: 0.9,
                n_steps: 200,
                rule: QuadratureRule::RightRiemann,
                seed: 0,
                radius: 0.05,
                n_perturbations: 10,
                ablation_increments: 10,
            },
            n_reports: 1,
            skipped: vec![],
        };
        let single = aggregate(std::slice::from_ref(&base)).unwrap();
        assert_eq!(single.metric_values(), base.metric_values());
        assert_eq!(single.sample, None);
        assert!(single.skipped.contains(&("norm_ratio_l2".to_string(), 1)));

        let mut other = base.clone();
        other.sample = Some(1);
        other.abpc.left = Some(0.3);
        other.norm_ratio_l1 = None;
        let agg = aggregate(&[base, other]).unwrap();
        assert!((agg.abpc.left.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(agg.norm_ratio_l1, Some(1.0));
        assert_eq!(agg.norm_ratio_l2, None);
        assert_eq!(agg.n_reports, 2);
        assert!(agg.skipped.contains(&("norm_ratio_l1".to_string(), 1)));
        assert!(agg.skipped.contains(&("norm_ratio_l2".to_string(), 2)));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn sensitivity_preconditions() {
        let x = fv(&[1.0]);
        let id = |v: &FeatureVector| Ok(v.clone());
        let bad = SensitivityConfig {
            radius: 0.0,
            ..Default::default()
        };
        assert!(sensitivity(id, &x, &bad).is_err());
        let none = SensitivityConfig {
            n_samples: 0,
            ..Default::default()
        };
        assert!(sensitivity(id, &x, &none).is_err());
        assert_eq!(
            sensitivity(id, &fv(&[0.0]), &SensitivityConfig::default()),
            Err(Error::UndefinedSensitivity)
        );
    }
}
