mod common;

use common::*;
use splitig_core::zoo::{Fixture, ModelSpec, ALL_FIXTURES};
use splitig_core::{
    find_alpha_star, integrated_gradients, path_scan, split_integrated_gradients, ComputeGraph, FeatureVector,
    PathSpec, QuadratureRule,
};

const RULES: [QuadratureRule; 3] = [
    QuadratureRule::RightRiemann,
    QuadratureRule::LeftRiemann,
    QuadratureRule::Trapezoid,
];
const PSIS: [f64; 3] = [0.9, 0.95, 0.99];

/// Every fixture paired with the (target graph, input) cases it contributes.
fn cases() -> Vec<(Fixture, ComputeGraph, FeatureVector)> {
    let mut out = Vec::new();
    for fixture in ALL_FIXTURES {
        let spec: ModelSpec = fixture.model().unwrap();
        let eval = fixture.evaluation_set().unwrap();
        for (x, &label) in eval.inputs.iter().zip(&eval.labels).take(8) {
            let target = if spec.output_dim() > 1 { label } else { 0 };
            out.push((fixture, spec.with_target(target).unwrap().graph().unwrap(), x.clone()));
        }
    }
    out
}

/// Closed-form α* of σ(10α) on the path 0 → 1: solve σ(10α) = θ with
/// θ = σ(0) + ψ (σ(10) - σ(0)).
fn logistic_alpha_star(psi: f64) -> f64 {
    let theta = 0.5 + psi * (sigmoid(10.0) - 0.5);
    (theta / (1.0 - theta)).ln() / 10.0
}

#[test]
fn logistic_alpha_star_matches_inversion() {
    let analytic = logistic_alpha_star(0.9);
    assert!((analytic - 0.2944).abs() < 5e-5);
    let g = Fixture::Logistic1d.model().unwrap().graph().unwrap();
    let path = PathSpec::from_zero(fv(&[1.0])).unwrap();
    let star = find_alpha_star(&g, &path, 0.9).unwrap();
    assert!((star.alpha - analytic).abs() <= 1.0 / 200.0);
    assert!(star.alpha >= analytic);
    for psi in PSIS {
        let s = find_alpha_star(&g, &path, psi).unwrap();
        assert!((s.alpha - logistic_alpha_star(psi)).abs() <= 1.0 / 200.0);
    }
}

#[test]
fn alpha_star_is_monotone_in_psi_for_increasing_paths() {
    for (fixture, g, x) in cases() {
        let path = PathSpec::from_zero(x).unwrap();
        let stars: Vec<_> = PSIS.iter().map(|&p| find_alpha_star(&g, &path, p).unwrap()).collect();
        let rising = g.forward(&path.input).unwrap() >= g.forward(&path.baseline).unwrap();
        if rising {
            assert!(stars.windows(2).all(|w| w[0].alpha <= w[1].alpha), "{fixture}");
        }
        for s in &stars {
            assert_eq!(s.alpha, s.index as f64 / 200.0);
        }
    }
}

#[test]
fn split_segments_add_up_to_full() {
    for (fixture, g, x) in cases() {
        for rule in RULES {
            let path = PathSpec::from_zero(x.clone()).unwrap().with_rule(rule);
            let full_ig = integrated_gradients(&g, &path, 0.0, 1.0).unwrap();
            for psi in PSIS {
                let s = split_integrated_gradients(&g, &path, psi).unwrap();
                assert_eq!(s.full.attributions, full_ig.attributions);
                for i in 0..x.len() {
                    let l = s.left.attributions.values()[i];
                    let r = s.right.attributions.values()[i];
                    let f = s.full.attributions.values()[i];
                    assert!((l + r - f).abs() <= 1e-9, "{fixture} {rule} {psi}");
                }
            }
        }
    }
}

#[test]
fn logistic_left_segment_completeness() {
    let g = Fixture::Logistic1d.model().unwrap().graph().unwrap();
    let path = PathSpec::from_zero(fv(&[1.0]))
        .unwrap()
        .with_rule(QuadratureRule::Trapezoid)
        .with_steps(2000);
    let s = split_integrated_gradients(&g, &path, 0.9).unwrap();
    let total = s.output_at_input - s.output_at_baseline;
    let slack = (s.alpha_star.output_at_alpha - s.alpha_star.threshold).abs() + 1e-6;
    assert!((s.left.total() - 0.9 * total).abs() <= slack);
    assert!((s.right.total() - 0.1 * total).abs() <= slack);
}

fn gap(g: &ComputeGraph, x: &FeatureVector, rule: QuadratureRule, n: usize) -> f64 {
    let path = PathSpec::from_zero(x.clone()).unwrap().with_rule(rule).with_steps(n);
    integrated_gradients(g, &path, 0.0, 1.0).unwrap().completeness_gap
}

#[test]
fn completeness_gap_shrinks_with_resolution() {
    let spec = Fixture::MlpSaturating.model().unwrap();
    let eval = Fixture::MlpSaturating.evaluation_set().unwrap();
    for (x, &label) in eval.inputs.iter().zip(&eval.labels).take(10) {
        let g = spec.with_target(label).unwrap().graph().unwrap();
        let gaps: Vec<f64> = [50, 100, 200, 400]
            .iter()
            .map(|&n| gap(&g, x, QuadratureRule::Trapezoid, n))
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0]), "{gaps:?}");
        assert!(gaps[3] <= gaps[0]);
        let ratio = gap(&g, x, QuadratureRule::RightRiemann, 100) / gap(&g, x, QuadratureRule::RightRiemann, 200);
        assert!((1.5..=2.5).contains(&ratio), "right-riemann ratio {ratio}");
    }
}

#[test]
fn right_riemann_is_first_order_on_logistic() {
    let g = Fixture::Logistic1d.model().unwrap().graph().unwrap();
    let x = fv(&[1.0]);
    let ratio = gap(&g, &x, QuadratureRule::RightRiemann, 100) / gap(&g, &x, QuadratureRule::RightRiemann, 200);
    assert!((1.5..=2.5).contains(&ratio), "{ratio}");
}

#[test]
fn linear_models_complete_exactly() {
    let g = Fixture::Linear2d.model().unwrap().graph().unwrap();
    let mut r = rng(2);
    for _ in 0..20 {
        let x = random_input(&mut r, 2, 5.0);
        for rule in RULES {
            for n in [1, 3, 50, 200] {
                assert!(gap(&g, &x, rule, n) <= 1e-12);
            }
        }
    }
}

fn argsort(v: &FeatureVector) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v.values()[a].total_cmp(&v.values()[b]).then(a.cmp(&b)));
    idx
}

#[test]
fn positive_output_scaling_preserves_threshold_and_ranking() {
    let spec = Fixture::MlpSaturating.model().unwrap();
    let eval = Fixture::MlpSaturating.evaluation_set().unwrap();
    for (x, &label) in eval.inputs.iter().zip(&eval.labels).take(5) {
        let g = spec.with_target(label).unwrap().graph().unwrap();
        let scaled = g.scaled(4.0).unwrap();
        let path = PathSpec::from_zero(x.clone()).unwrap();
        let a = split_integrated_gradients(&g, &path, 0.9).unwrap();
        let b = split_integrated_gradients(&scaled, &path, 0.9).unwrap();
        assert_eq!(a.alpha_star.alpha, b.alpha_star.alpha);
        for (ra, rb) in [(&a.left, &b.left), (&a.right, &b.right), (&a.full, &b.full)] {
            assert_eq!(argsort(&ra.attributions), argsort(&rb.attributions));
            for (u, v) in ra.attributions.values().iter().zip(rb.attributions.values()) {
                assert!((4.0 * u - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }
}

#[test]
fn logistic_gradient_peaks_inside_the_path() {
    // z = 10(-1 + 2α) crosses zero at α = 0.5
    let g = Fixture::Logistic1d.model().unwrap().graph().unwrap();
    let path = PathSpec::new(fv(&[-1.0]), fv(&[1.0])).unwrap();
    let p = path_scan(&g, &path).unwrap();
    let (imax, _) = p
        .grad_l2_norms
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    assert!(imax > 0 && imax < 200);
    assert!((p.alphas[imax] - 0.5).abs() <= 1.0 / 200.0);
    for (a, n) in p.alphas.iter().zip(&p.grad_l2_norms) {
        let s = sigmoid(10.0 * (-1.0 + 2.0 * a));
        assert!((n - 10.0 * s * (1.0 - s)).abs() < 1e-12);
    }
}

#[test]
fn scan_at_the_baseline_is_flat() {
    let g = Fixture::MlpBlob2d.model().unwrap().graph().unwrap();
    let x = fv(&[1.5, -0.5]);
    let p = path_scan(&g, &PathSpec::new(x.clone(), x).unwrap()).unwrap();
    assert!(p.outputs.iter().all(|&f| f == p.outputs[0]));
    assert_eq!(p.outputs.len(), 201);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let spec = Fixture::MlpSaturating.model().unwrap();
    let g = spec.graph().unwrap();
    let x = Fixture::MlpSaturating.evaluation_set().unwrap().inputs[0].clone();
    let path = PathSpec::from_zero(x).unwrap().with_rule(QuadratureRule::Trapezoid);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| split_integrated_gradients(&g, &path, 0.9).unwrap())
    };
    assert_eq!(run(1), run(4));
}
