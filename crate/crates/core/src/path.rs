//! Integrated Gradients along the straight line from a baseline to an input,
//! the saturation threshold α*, and Split IG (the integral cut at α* into a
//! left, unsaturated part and a right, saturated part).
//!
//! Everything is computed on a uniform master grid `α_j = j / n_steps`.
//! The threshold is resolved on that same grid, so the left and right
//! segments are exact sub-sums of the full sum.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::DifferentiableModel;
use crate::error::{Error, Result};
use crate::tensor::{l2_norm, FeatureVector};

pub const DEFAULT_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    #[default]
    RightRiemann,
    LeftRiemann,
    Trapezoid,
}

impl fmt::Display for QuadratureRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadratureRule::RightRiemann => "right-riemann",
            QuadratureRule::LeftRiemann => "left-riemann",
            QuadratureRule::Trapezoid => "trapezoid",
        })
    }
}

impl FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right-riemann" => Ok(QuadratureRule::RightRiemann),
            "left-riemann" => Ok(QuadratureRule::LeftRiemann),
            "trapezoid" => Ok(QuadratureRule::Trapezoid),
            other => Err(Error::Precondition(format!("unknown quadrature rule `{other}`"))),
        }
    }
}

/// The path `x' + α (x - x')`, its resolution and quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub baseline: FeatureVector,
    pub input: FeatureVector,
    pub n_steps: usize,
    pub rule: QuadratureRule,
}

impl PathSpec {
    /// Right Riemann sum with 200 steps.
    pub fn new(baseline: FeatureVector, input: FeatureVector) -> Result<Self> {
        let spec = PathSpec {
            baseline,
            input,
            n_steps: DEFAULT_STEPS,
            rule: QuadratureRule::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Zero baseline.
    pub fn from_zero(input: FeatureVector) -> Result<Self> {
        Self::new(FeatureVector::zeros_like(&input), input)
    }

    pub fn with_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps;
        self
    }

    pub fn with_rule(mut self, rule: QuadratureRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.ensure_same_shape(&self.input)?;
        if self.n_steps == 0 {
            return Err(Error::Precondition("n_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// `x' + α (x - x')`.
    pub fn point(&self, alpha: f64) -> Result<FeatureVector> {
        let values = self
            .baseline
            .values()
            .iter()
            .zip(self.input.values())
            .map(|(b, x)| b + alpha * (x - b))
            .collect();
        self.input.map_values(values)
    }

    /// `x - x'`.
    pub fn displacement(&self) -> Vec<f64> {
        self.input
            .values()
            .iter()
            .zip(self.baseline.values())
            .map(|(x, b)| x - b)
            .collect()
    }

    /// Node `j` of the master grid.
    pub fn grid_alpha(&self, j: usize) -> f64 {
        j as f64 / self.n_steps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Full,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionResult {
    pub attributions: FeatureVector,
    pub segment: Segment,
    pub psi: Option<f64>,
    pub alpha_star: Option<f64>,
    /// `|Σ attributions - expected segment total|`.
    pub completeness_gap: f64,
}

impl AttributionResult {
    pub fn total(&self) -> f64 {
        self.attributions.sum()
    }

    /// One `feature,attribution` row per feature.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "attribution"]).map_err(io_err)?;
        for (i, a) in self.attributions.values().iter().enumerate() {
            w.write_record([i.to_string(), a.to_string()]).map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Grid resolution of the saturation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaStar {
    pub alpha: f64,
    /// Master-grid node index of `alpha`.
    pub index: usize,
    /// `F(x') + ψ (F(x) - F(x'))`.
    pub threshold: f64,
    /// `F` at the returned node.
    pub output_at_alpha: f64,
    /// No node strictly exceeded the threshold; `alpha` was set to 1.
    pub at_endpoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitAttribution {
    pub left: AttributionResult,
    pub right: AttributionResult,
    pub full: AttributionResult,
    pub alpha_star: AlphaStar,
    pub output_at_baseline: f64,
    pub output_at_input: f64,
}

/// `F` and `‖∇F‖₂` along the master grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathProfile {
    pub alphas: Vec<f64>,
    pub outputs: Vec<f64>,
    pub grad_l2_norms: Vec<f64>,
}

impl PathProfile {
    /// Writes `alpha,output,grad_l2_norm` plus any extra equally long
    /// columns, one row per grid node.
    pub fn write_csv<W: Write>(&self, writer: W, extra: &[(&str, &[f64])]) -> Result<()> {
        if let Some((name, _)) = extra.iter().find(|(_, c)| c.len() != self.alphas.len()) {
            return Err(Error::Precondition(format!(
                "column `{name}` does not match profile length {}",
                self.alphas.len()
            )));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["alpha", "output", "grad_l2_norm"];
        header.extend(extra.iter().map(|(n, _)| *n));
        w.write_record(&header).map_err(io_err)?;
        for j in 0..self.alphas.len() {
            let mut row = vec![
                self.alphas[j].to_string(),
                self.outputs[j].to_string(),
                self.grad_l2_norms[j].to_string(),
            ];
            row.extend(extra.iter().map(|(_, c)| c[j].to_string()));
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

struct GridSamples {
    alphas: Vec<f64>,
    outputs: Vec<f64>,
    gradients: Vec<Vec<f64>>,
}

/// Evaluates `F` and `∇F` at `α_j = lo + (hi - lo) j / n` for `j = 0..=n`.
/// Nodes are evaluated in parallel and collected in grid order.
fn sample_grid<M: DifferentiableModel + ?Sized>(
    model: &M,
    path: &PathSpec,
    lo: f64,
    hi: f64,
) -> Result<GridSamples> {
    let n = path.n_steps;
    let alphas: Vec<f64> = (0..=n).map(|j| lo + (hi - lo) * (j as f64 / n as f64)).collect();
    let evaluated: Vec<(f64, Vec<f64>)> = alphas
        .par_iter()
        .map(|&a| {
            let (f, g) = model.value_and_gradient(&path.point(a)?)?;
            Ok((f, g.into_values()))
        })
        .collect::<Result<_>>()?;
    let (outputs, gradients) = evaluated.into_iter().unzip();
    Ok(GridSamples {
        alphas,
        outputs,
        gradients,
    })
}

/// `(x - x') · h · Σ_j w_j ∇F(α_j)` over nodes `from..=to`, summed in grid
/// order. Empty when `from == to`.
fn accumulate(
    samples: &GridSamples,
    from: usize,
    to: usize,
    rule: QuadratureRule,
    step: f64,
    displacement: &[f64],
) -> Vec<f64> {
    let mut acc = vec![0.0; displacement.len()];
    if from < to {
        let mut add = |j: usize, weight: f64| {
            for (a, g) in acc.iter_mut().zip(&samples.gradients[j]) {
                *a += weight * g;
            }
        };
        match rule {
            QuadratureRule::RightRiemann => (from + 1..=to).for_each(|j| add(j, 1.0)),
            QuadratureRule::LeftRiemann => (from..to).for_each(|j| add(j, 1.0)),
            QuadratureRule::Trapezoid => {
                add(from, 0.5);
                (from + 1..to).for_each(|j| add(j, 1.0));
                add(to, 0.5);
            }
        }
    }
    acc.iter()
        .zip(displacement)
        .map(|(a, d)| d * (step * a))
        .collect()
}

fn check_psi(psi: f64) -> Result<()> {
    if !(psi > 0.0 && psi < 1.0) {
        return Err(Error::Precondition(format!("psi must lie in (0, 1), got {psi}")));
    }
    Ok(())
}

fn check_model<M: DifferentiableModel + ?Sized>(model: &M, path: &PathSpec) -> Result<()> {
    path.validate()?;
    if model.input_dim() != path.input.len() {
        return Err(Error::InputShape {
            expected: model.input_dim(),
            found: path.input.len(),
        });
    }
    Ok(())
}

/// First grid node whose output has strictly crossed the threshold: above it
/// when `F(x) >= F(x')`, below it when the output decreases along the path.
fn locate_alpha_star(outputs: &[f64], psi: f64, n_steps: usize) -> AlphaStar {
    let start = outputs[0];
    let end = outputs[n_steps];
    let threshold = start + psi * (end - start);
    let crossed = |f: f64| if end < start { f < threshold } else { f > threshold };
    match outputs.iter().position(|&f| crossed(f)) {
        Some(index) => AlphaStar {
            alpha: index as f64 / n_steps as f64,
            index,
            threshold,
            output_at_alpha: outputs[index],
            at_endpoint: false,
        },
        None => AlphaStar {
            alpha: 1.0,
            index: n_steps,
            threshold,
            output_at_alpha: end,
            at_endpoint: true,
        },
    }
}

/// Integrated Gradients over `[alpha_lo, alpha_hi]` with `path.n_steps`
/// steps of width `(alpha_hi - alpha_lo) / n_steps`.
pub fn integrated_gradients<M: DifferentiableModel + ?Sized>(
    model: &M,
    path: &PathSpec,
    alpha_lo: f64,
    alpha_hi: f64,
) -> Result<AttributionResult> {
    check_model(model, path)?;
    if !(0.0 <= alpha_lo && alpha_lo < alpha_hi && alpha_hi <= 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 <= alpha_lo < alpha_hi <= 1, got [{alpha_lo}, {alpha_hi}]"
        )));
    }
    let n = path.n_steps;
    let samples = sample_grid(model, path, alpha_lo, alpha_hi)?;
    let step = (alpha_hi - alpha_lo) / n as f64;
    let values = accumulate(&samples, 0, n, path.rule, step, &path.displacement());
    let attributions = path.input.map_values(values)?;
    let expected = samples.outputs[n] - samples.outputs[0];
    Ok(AttributionResult {
        completeness_gap: (attributions.sum() - expected).abs(),
        attributions,
        segment: Segment::Full,
        psi: None,
        alpha_star: None,
    })
}

/// Smallest master-grid α with `F(x' + α (x - x')) > F(x') + ψ (F(x) - F(x'))`,
/// or `<` when `F(x) < F(x')`, so that α* always marks the point where the
/// output has covered the fraction ψ of its change.
pub fn find_alpha_star<M: DifferentiableModel + ?Sized>(
    model: &M,
    path: &PathSpec,
    psi: f64,
) -> Result<AlphaStar> {
    check_model(model, path)?;
    check_psi(psi)?;
    let outputs = (0..=path.n_steps)
        .into_par_iter()
        .map(|j| model.value(&path.point(path.grid_alpha(j))?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(locate_alpha_star(&outputs, psi, path.n_steps))
}

/// Left IG over `[0, α*]`, right IG over `[α*, 1]` and full IG, sharing one
/// set of gradient evaluations.
pub fn split_integrated_gradients<M: DifferentiableModel + ?Sized>(
    model: &M,
    path: &PathSpec,
    psi: f64,
) -> Result<SplitAttribution> {
    check_model(model, path)?;
    check_psi(psi)?;
    let n = path.n_steps;
    let samples = sample_grid(model, path, 0.0, 1.0)?;
    let star = locate_alpha_star(&samples.outputs, psi, n);
    let step = 1.0 / n as f64;
    let displacement = path.displacement();
    let f_base = samples.outputs[0];
    let f_input = samples.outputs[n];
    let total = f_input - f_base;

    let segment = |from: usize, to: usize, seg: Segment, expected: f64| -> Result<AttributionResult> {
        let values = accumulate(&samples, from, to, path.rule, step, &displacement);
        let attributions = path.input.map_values(values)?;
        let (psi, alpha_star) = match seg {
            Segment::Full => (None, None),
            _ => (Some(psi), Some(star.alpha)),
        };
        Ok(AttributionResult {
            completeness_gap: (attributions.sum() - expected).abs(),
            attributions,
            segment: seg,
            psi,
            alpha_star,
        })
    };

    Ok(SplitAttribution {
        left: segment(0, star.index, Segment::Left, psi * total)?,
        right: segment(star.index, n, Segment::Right, (1.0 - psi) * total)?,
        full: segment(0, n, Segment::Full, total)?,
        alpha_star: star,
        output_at_baseline: f_base,
        output_at_input: f_input,
    })
}

pub fn path_scan<M: DifferentiableModel + ?Sized>(model: &M, path: &PathSpec) -> Result<PathProfile> {
    check_model(model, path)?;
    let samples = sample_grid(model, path, 0.0, 1.0)?;
    Ok(PathProfile {
        grad_l2_norms: samples.gradients.iter().map(|g| l2_norm(g)).collect(),
        alphas: samples.alphas,
        outputs: samples.outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{make_analytic, ModelKind};

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn linear() -> crate::autodiff::ComputeGraph {
        make_analytic(ModelKind::Linear, &fv(&[1.0, 2.0]), 0.0, 1.0)
            .unwrap()
            .graph()
            .unwrap()
    }

    fn logistic() -> crate::autodiff::ComputeGraph {
        make_analytic(ModelKind::LogisticSaturator, &fv(&[1.0]), 0.0, 10.0)
            .unwrap()
            .graph()
            .unwrap()
    }

    fn sigmoid(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    #[test]
    fn linear_ig_is_exact_for_every_rule() {
        let g = linear();
        for rule in [
            QuadratureRule::RightRiemann,
            QuadratureRule::LeftRiemann,
            QuadratureRule::Trapezoid,
        ] {
            for n in [1, 7, 200] {
                let path = PathSpec::from_zero(fv(&[1.0, 1.0])).unwrap().with_steps(n).with_rule(rule);
                let r = integrated_gradients(&g, &path, 0.0, 1.0).unwrap();
                let a = r.attributions.values();
                assert!((a[0] - 1.0).abs() < 1e-12 && (a[1] - 2.0).abs() < 1e-12, "{rule} {n}: {a:?}");
                assert!(r.completeness_gap <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_displacement_gives_zero_attribution() {
        let x = fv(&[0.3, -0.2]);
        let path = PathSpec::new(x.clone(), x).unwrap();
        let r = integrated_gradients(&linear(), &path, 0.0, 1.0).unwrap();
        assert!(r.attributions.values().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn logistic_trapezoid_matches_closed_form() {
        let path = PathSpec::from_zero(fv(&[1.0]))
            .unwrap()
            .with_rule(QuadratureRule::Trapezoid);
        let r = integrated_gradients(&logistic(), &path, 0.0, 1.0).unwrap();
        let exact = sigmoid(10.0) - 0.5;
        assert!((r.attributions.values()[0] - exact).abs() < 1e-4);
    }

    #[test]
    fn preconditions() {
        let g = linear();
        let path = PathSpec::from_zero(fv(&[1.0, 1.0])).unwrap();
        assert!(integrated_gradients(&g, &path, 0.5, 0.5).is_err());
        assert!(integrated_gradients(&g, &path, -0.1, 1.0).is_err());
        assert!(integrated_gradients(&g, &path, 0.0, 1.1).is_err());
        assert!(find_alpha_star(&g, &path, 0.0).is_err());
        assert!(find_alpha_star(&g, &path, 1.0).is_err());
        assert!(split_integrated_gradients(&g, &path, f64::NAN).is_err());
        assert!(matches!(
            PathSpec::new(fv(&[0.0]), fv(&[1.0, 1.0])),
            Err(Error::InputShape { .. })
        ));
        let bad = path.clone().with_steps(0);
        assert!(integrated_gradients(&g, &bad, 0.0, 1.0).is_err());
        let wrong_dim = PathSpec::from_zero(fv(&[1.0])).unwrap();
        assert!(matches!(
            integrated_gradients(&g, &wrong_dim, 0.0, 1.0),
            Err(Error::InputShape { .. })
        ));
    }

    #[test]
    fn linear_alpha_star_is_first_strict_exceedance() {
        // F(α) = 3α against threshold 2.7; 180/200 ties, 181/200 exceeds
        let path = PathSpec::from_zero(fv(&[1.0, 1.0])).unwrap();
        let star = find_alpha_star(&linear(), &path, 0.9).unwrap();
        assert_eq!(star.index, 181);
        assert_eq!(star.alpha, 0.905);
        assert!(!star.at_endpoint);
    }

    #[test]
    fn flat_output_flags_endpoint() {
        let x = fv(&[0.5, 0.5]);
        let path = PathSpec::new(x.clone(), x).unwrap();
        let split = split_integrated_gradients(&linear(), &path, 0.9).unwrap();
        assert!(split.alpha_star.at_endpoint);
        assert_eq!(split.alpha_star.alpha, 1.0);
        assert!(split.right.attributions.values().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn linear_split_values() {
        let path = PathSpec::from_zero(fv(&[1.0, 1.0])).unwrap();
        let s = split_integrated_gradients(&linear(), &path, 0.9).unwrap();
        let l = s.left.attributions.values();
        let r = s.right.attributions.values();
        assert!((l[0] - 0.9).abs() + (l[1] - 1.8).abs() <= 3.0 / 200.0 + 1e-12);
        assert!((r[0] - 0.1).abs() + (r[1] - 0.2).abs() <= 3.0 / 200.0 + 1e-12);
        assert_eq!(s.left.segment, Segment::Left);
        assert_eq!(s.left.psi, Some(0.9));
        assert_eq!(s.full.alpha_star, None);
    }

    #[test]
    fn scan_of_linear_model() {
        let path = PathSpec::from_zero(fv(&[1.0, 1.0])).unwrap().with_steps(10);
        let p = path_scan(&linear(), &path).unwrap();
        assert_eq!(p.alphas.len(), 11);
        assert_eq!(p.alphas[0], 0.0);
        assert_eq!(p.alphas[10], 1.0);
        for (a, f) in p.alphas.iter().zip(&p.outputs) {
            assert!((f - 3.0 * a).abs() < 1e-12);
        }
        assert!(p.grad_l2_norms.iter().all(|&n| (n - 5f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn profile_csv_layout() {
        let path = PathSpec::from_zero(fv(&[1.0, 1.0])).unwrap().with_steps(4);
        let p = path_scan(&linear(), &path).unwrap();
        let extra = vec![1.0; 5];
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &[("damping", &extra)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "alpha,output,grad_l2_norm,damping");
        assert_eq!(lines.len(), 6);
        assert!(p.write_csv(Vec::new(), &[("short", &[1.0][..])]).is_err());
    }

    #[test]
    fn decreasing_output_crosses_downward() {
        // σ(10 x) from 0 to -1 falls from 0.5; mirror image of the rising path
        let g = logistic();
        let down = find_alpha_star(&g, &PathSpec::from_zero(fv(&[-1.0])).unwrap(), 0.9).unwrap();
        let up = find_alpha_star(&g, &PathSpec::from_zero(fv(&[1.0])).unwrap(), 0.9).unwrap();
        assert!(!down.at_endpoint);
        assert_eq!(down.index, up.index);
        assert!(down.output_at_alpha < down.threshold);
        let split = split_integrated_gradients(&g, &PathSpec::from_zero(fv(&[-1.0])).unwrap(), 0.9).unwrap();
        assert!(split.left.total() < 0.0 && split.right.total() < 0.0);
    }

    #[test]
    fn rule_names_round_trip() {
        for r in [
            QuadratureRule::RightRiemann,
            QuadratureRule::LeftRiemann,
            QuadratureRule::Trapezoid,
        ] {
            assert_eq!(r.to_string().parse::<QuadratureRule>().unwrap(), r);
        }
        assert!("simpson".parse::<QuadratureRule>().is_err());
    }
}
