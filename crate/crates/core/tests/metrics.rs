mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use splitig_core::metrics::{
    abpc, aggregate, cosine_similarity, evaluate_sample, norm_ratio, sensitivity, MetricToggles, Norm,
    SampleProtocol, SensitivityConfig,
};
use splitig_core::zoo::{make_analytic, Activation, Fixture, ModelKind};
use splitig_core::{integrated_gradients, DifferentiableModel, FeatureVector, PathSpec, QuadratureRule};

fn output_of<M: DifferentiableModel>(model: &M) -> impl Fn(&[f64]) -> f64 + '_ {
    move |v: &[f64]| model.value(&fv(v)).unwrap()
}

#[test]
fn abpc_matches_exhaustive_subset_search() {
    let mut r = rng(31);
    let mut checked = 0;
    for &n in &[1usize, 2, 3, 5, 6, 8, 10, 12] {
        for trial in 0..4 {
            let spec = random_mlp(&mut r, &[n, 5, 3], Activation::Tanh)
                .with_target(trial % 3)
                .unwrap();
            let model = spec.graph().unwrap();
            let x = random_input(&mut r, n, 2.0);
            let baseline = if trial % 2 == 0 {
                FeatureVector::zeros(n)
            } else {
                random_input(&mut r, n, 0.5)
            };
            // trials 2 and 3 use coarse attributions so that ties occur
            let attribution: Vec<f64> = (0..n)
                .map(|_| {
                    let a: f64 = r.random_range(-1.0..=1.0);
                    if trial >= 2 {
                        (a * 2.0).round()
                    } else {
                        a
                    }
                })
                .collect();
            for &inc in &[1usize, 3, 4, 7, 10] {
                let got = abpc(&model, &x, &fv(&attribution), &baseline, inc).unwrap();
                let want = abpc_brute_force(output_of(&model), x.values(), &attribution, baseline.values(), inc);
                assert_eq!(got.area.to_bits(), want.to_bits(), "n={n} trial={trial} inc={inc}");
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 8 * 4 * 5);
}

#[test]
fn abpc_linear_example() {
    let spec = make_analytic(ModelKind::Linear, &fv(&[4.0, 3.0, 2.0, 1.0]), 0.0, 1.0).unwrap();
    let model = spec.graph().unwrap();
    let x = fv(&[1.0; 4]);
    let zero = FeatureVector::zeros(4);
    let out = abpc(&model, &x, &fv(&[4.0, 3.0, 2.0, 1.0]), &zero, 4).unwrap();
    // raw top curve 10, 6, 3, 1, 0 and bottom 10, 9, 7, 4, 0, normalized by 10
    let top = [1.0, 0.6, 0.3, 0.1, 0.0];
    let bottom = [1.0, 0.9, 0.7, 0.4, 0.0];
    for k in 0..5 {
        assert!((out.top_curve[k] - top[k]).abs() < 1e-15);
        assert!((out.bottom_curve[k] - bottom[k]).abs() < 1e-15);
    }
    assert!((out.area - 0.25).abs() < 1e-15);
    assert!(out.normalized);
    assert!(!out.has_ties);
}

#[test]
fn anti_faithful_ranking_has_negative_area() {
    let spec = make_analytic(ModelKind::Linear, &fv(&[4.0, 3.0, 2.0, 1.0]), 0.0, 1.0).unwrap();
    let model = spec.graph().unwrap();
    let x = fv(&[1.0; 4]);
    let zero = FeatureVector::zeros(4);
    let good = abpc(&model, &x, &fv(&[4.0, 3.0, 2.0, 1.0]), &zero, 4).unwrap().area;
    let bad = abpc(&model, &x, &fv(&[1.0, 2.0, 3.0, 4.0]), &zero, 4).unwrap().area;
    assert!(bad < 0.0);
    assert!((good + bad).abs() < 1e-15);
}

#[test]
fn abpc_at_the_ablation_baseline_is_zero() {
    let mut r = rng(5);
    let spec = random_mlp(&mut r, &[6, 4, 2], Activation::Relu);
    let model = spec.graph().unwrap();
    let x = random_input(&mut r, 6, 1.0);
    let out = abpc(&model, &x, &random_input(&mut r, 6, 1.0), &x, 5).unwrap();
    assert_eq!(out.area, 0.0);
    assert!(!out.normalized);
}

#[test]
fn abpc_rejects_zero_increments() {
    let spec = make_analytic(ModelKind::Linear, &fv(&[1.0, 1.0]), 0.0, 1.0).unwrap();
    let model = spec.graph().unwrap();
    let x = fv(&[1.0, 1.0]);
    assert!(abpc(&model, &x, &x, &FeatureVector::zeros(2), 0).is_err());
}

#[test]
fn sensitivity_of_a_constant_map_is_zero() {
    let x = fv(&[0.5, -1.0, 2.0]);
    let constant = |_: &FeatureVector| Ok(fv(&[1.0, 2.0, 3.0]));
    assert_eq!(sensitivity(constant, &x, &SensitivityConfig::default()).unwrap(), 0.0);
}

#[test]
fn sensitivity_of_the_identity_is_bounded_by_the_ball() {
    let x = fv(&[0.5, -1.0, 2.0, 0.25]);
    let config = SensitivityConfig {
        radius: 0.1,
        n_samples: 50,
        seed: 11,
        stream: 3,
    };
    let s = sensitivity(|v: &FeatureVector| Ok(v.clone()), &x, &config).unwrap();
    assert!(s > 0.0);
    assert!(s <= (x.len() as f64).sqrt() * config.radius / x.l2_norm() + 1e-15);
}

#[test]
fn sensitivity_is_seeded_and_monotone_in_draws() {
    let spec = make_analytic(ModelKind::LogisticSaturator, &fv(&[1.0, -0.5]), 0.2, 3.0).unwrap();
    let model = spec.graph().unwrap();
    let x = fv(&[0.4, 0.3]);
    let procedure = |v: &FeatureVector| {
        let path = PathSpec::from_zero(v.clone())?.with_steps(50);
        Ok(integrated_gradients(&model, &path, 0.0, 1.0)?.attributions)
    };
    let with = |n_samples, seed| {
        let config = SensitivityConfig {
            radius: 0.05,
            n_samples,
            seed,
            stream: 0,
        };
        sensitivity(procedure, &x, &config).unwrap()
    };
    assert_eq!(with(10, 1).to_bits(), with(10, 1).to_bits());
    let mut prev = 0.0;
    for n in [1, 2, 5, 10, 20, 40] {
        let s = with(n, 1);
        assert!(s >= prev);
        prev = s;
    }
}

#[test]
fn zero_attribution_has_undefined_sensitivity() {
    let x = fv(&[1.0]);
    let zero = |_: &FeatureVector| Ok(fv(&[0.0]));
    assert!(sensitivity(zero, &x, &SensitivityConfig::default()).is_err());
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_scale_free(
        a in prop::collection::vec(-10.0f64..10.0, 1..8),
        seed in 0u64..1000,
        scale in 0.01f64..100.0,
    ) {
        let mut r = rng(seed);
        let b: Vec<f64> = a.iter().map(|_| r.random_range(-10.0..10.0)).collect();
        let (a, b) = (fv(&a), fv(&b));
        prop_assume!(a.l2_norm() > 1e-6 && b.l2_norm() > 1e-6);
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
        let scaled = a.map_values(a.values().iter().map(|v| v * scale).collect()).unwrap();
        prop_assert!((cosine_similarity(&scaled, &b).unwrap() - ab).abs() < 1e-12);
        let ratio = norm_ratio(&scaled, &a, Norm::L2).unwrap();
        prop_assert!((ratio - scale).abs() <= 1e-12 * scale);
    }
}

/// On the saturating classifier, the unsaturated segment ranks features more
/// faithfully and more stably than full IG, and the saturated segment less so.
#[test]
fn split_segments_order_as_expected_on_saturating_classifier() {
    let fixture = Fixture::MlpSaturating;
    let spec = fixture.model().unwrap();
    let eval = fixture.evaluation_set().unwrap();
    let mut reports = Vec::new();
    for (i, (x, &label)) in eval.inputs.iter().zip(&eval.labels).enumerate() {
        let model = spec.with_target(label).unwrap().graph().unwrap();
        let protocol = SampleProtocol {
            baseline: FeatureVector::zeros(x.len()),
            psi: 0.9,
            n_steps: 200,
            rule: QuadratureRule::RightRiemann,
            ablation_increments: 10,
            sensitivity: SensitivityConfig {
                radius: 0.05,
                n_samples: 10,
                seed: 7,
                stream: i as u64,
            },
            toggles: MetricToggles::default(),
        };
        reports.push(evaluate_sample(&model, x, &protocol, Some(i)).unwrap().1);
    }
    let mean = aggregate(&reports).unwrap();
    let abpc = mean.abpc;
    let sens = mean.sensitivity;
    let (al, af, ar) = (abpc.left.unwrap(), abpc.full.unwrap(), abpc.right.unwrap());
    let (sl, sf, sr) = (sens.left.unwrap(), sens.full.unwrap(), sens.right.unwrap());
    assert!(al > af && af > ar, "abpc left {al} full {af} right {ar}");
    assert!(sl < sf && sf < sr, "sensitivity left {sl} full {sf} right {sr}");
}

#[test]
fn aggregate_skips_undefined_values() {
    let spec = make_analytic(ModelKind::Linear, &fv(&[1.0, 2.0]), 0.0, 1.0).unwrap();
    let model = spec.graph().unwrap();
    let protocol = SampleProtocol {
        baseline: FeatureVector::zeros(2),
        psi: 0.9,
        n_steps: 20,
        rule: QuadratureRule::RightRiemann,
        ablation_increments: 2,
        sensitivity: SensitivityConfig::default(),
        toggles: MetricToggles {
            abpc: true,
            sensitivity: false,
        },
    };
    // x equal to the baseline makes every attribution zero
    let (_, at_base) = evaluate_sample(&model, &fv(&[0.0, 0.0]), &protocol, Some(0)).unwrap();
    let (_, live) = evaluate_sample(&model, &fv(&[1.0, 1.0]), &protocol, Some(1)).unwrap();
    assert_eq!(at_base.norm_ratio_l2, None);
    let mean = aggregate(&[at_base, live.clone()]).unwrap();
    assert_eq!(mean.n_reports, 2);
    assert_eq!(mean.norm_ratio_l2, live.norm_ratio_l2);
    assert!(mean.skipped.iter().any(|(m, c)| m == "norm_ratio_l2" && *c == 1));
    assert_eq!(mean.sensitivity.left, None);
}
