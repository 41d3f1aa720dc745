//! Reference computations for tests. Nothing here calls into the engine:
//! every function works on plain slices and closures so that it can serve
//! as an independent check.

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Central finite differences of `f` at `x`.
pub fn finite_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += step;
            m[i] -= step;
            (f(&p) - f(&m)) / (2.0 * step)
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-12)`.
pub fn max_relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Dense layer stack evaluated with explicit loops. `layers[i]` is
/// `(row-major weight, bias)`; `hidden` is applied after every layer but the
/// last.
pub fn dense_forward(layers: &[(&[f64], &[f64])], hidden: fn(f64) -> f64, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, (w, b)) in layers.iter().enumerate() {
        let n_in = h.len();
        let mut z = vec![0.0; b.len()];
        for r in 0..b.len() {
            let mut acc = 0.0;
            for c in 0..n_in {
                acc += w[r * n_in + c] * h[c];
            }
            z[r] = acc + b[r];
        }
        if i + 1 < layers.len() {
            z.iter_mut().for_each(|v| *v = hidden(*v));
        }
        h = z;
    }
    h
}

pub fn softmax_by_hand(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = z.iter().map(|v| (v - m).exp()).sum();
    z.iter().map(|v| (v - m).exp() / total).collect()
}

/// α at which `σ(scale (base + α (input - base)))` first reaches
/// `σ(scale·base) + ψ (σ(scale·input) - σ(scale·base))`, for a scalar
/// pre-activation path from `base` to `input`.
pub fn logistic_alpha_star(scale: f64, base: f64, input: f64, psi: f64) -> f64 {
    let (f0, f1) = (sigmoid(scale * base), sigmoid(scale * input));
    let theta = f0 + psi * (f1 - f0);
    let z = (theta / (1.0 - theta)).ln() / scale;
    (z - base) / (input - base)
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, size, &mut Vec::new(), &mut out);
    out
}

/// Among all index subsets of `size`, the one holding the `size` largest
/// (`largest = true`) or smallest attributions, preferring lower indices
/// among equal values. Found by exhaustive search.
fn extreme_subset(attribution: &[f64], size: usize, largest: bool) -> Vec<usize> {
    let key = |s: &Vec<usize>| {
        let mut v: Vec<f64> = s.iter().map(|&i| attribution[i]).collect();
        v.sort_by(|a, b| if largest { b.total_cmp(a) } else { a.total_cmp(b) });
        v
    };
    let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
    for s in subsets(attribution.len(), size) {
        let k = key(&s);
        let better = match &best {
            None => true,
            Some((bk, bs)) => {
                let ord = k
                    .iter()
                    .zip(bk)
                    .map(|(a, b)| if largest { b.total_cmp(a) } else { a.total_cmp(b) })
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal);
                ord.is_lt() || (ord.is_eq() && s < *bs)
            }
        };
        if better {
            best = Some((k, s));
        }
    }
    best.map(|(_, s)| s).unwrap_or_default()
}

/// Area between perturbation curves, computed by materializing the ablated
/// input for every increment from an exhaustive subset search. Same curve
/// normalization and trapezoid arithmetic as the production metric.
pub fn abpc_brute_force(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    attribution: &[f64],
    baseline: &[f64],
    n_increments: usize,
) -> f64 {
    let n = x.len();
    let ablate = |subset: &[usize]| {
        let mut v = x.to_vec();
        for &i in subset {
            v[i] = baseline[i];
        }
        f(&v)
    };
    let count = |k: usize| ((k * n) as f64 / n_increments as f64 + 0.5).floor() as usize;
    let mut top = Vec::new();
    let mut bottom = Vec::new();
    for k in 0..=n_increments {
        let c = count(k);
        top.push(ablate(&extreme_subset(attribution, c, true)));
        bottom.push(ablate(&extreme_subset(attribution, c, false)));
    }
    let ablated = ablate(&(0..n).collect::<Vec<_>>());
    let span = x_output(&f, x) - ablated;
    if span != 0.0 {
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
    area
}

fn x_output(f: &impl Fn(&[f64]) -> f64, x: &[f64]) -> f64 {
    f(x)
}
