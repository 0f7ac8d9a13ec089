#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segunc::tensor::{ClassMap, ProbStack, ScalarMap};

pub const IGNORE: u32 = 255;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random distribution over `c` classes; roughly a third of the entries are
/// exact zeros, and one-hot vectors show up now and then.
pub fn random_distribution(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    if rng.random_bool(0.1) {
        let mut v = vec![0.0; c];
        v[rng.random_range(0..c)] = 1.0;
        return v;
    }
    let mut v: Vec<f64> =
        (0..c).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>().powi(3) }).collect();
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        v[0] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= total);
    v
}

pub fn random_stack(rng: &mut impl Rng, t: usize, c: usize, h: usize, w: usize) -> ProbStack {
    let hw = h * w;
    let mut values = vec![0.0; t * c * hw];
    for s in 0..t {
        for p in 0..hw {
            for (k, v) in random_distribution(rng, c).into_iter().enumerate() {
                values[(s * c + k) * hw + p] = v;
            }
        }
    }
    ProbStack::new(t, c, h, w, values).unwrap()
}

pub fn random_labels(rng: &mut impl Rng, h: usize, w: usize, c: u32, ignore_rate: f64) -> ClassMap {
    let values =
        (0..h * w).map(|_| if rng.random_bool(ignore_rate) { IGNORE } else { rng.random_range(0..c) }).collect();
    let ignore = (ignore_rate > 0.0).then_some(IGNORE);
    ClassMap::new(h, w, c, ignore, values).unwrap()
}

/// Copy of `gt` (ignore pixels replaced) with roughly `error_rate` of the
/// pixels relabelled.
pub fn noisy_prediction(rng: &mut impl Rng, gt: &ClassMap, error_rate: f64) -> ClassMap {
    let c = gt.class_count();
    let values = gt
        .values()
        .iter()
        .map(|&v| {
            let v = if v >= c { rng.random_range(0..c) } else { v };
            if rng.random_bool(error_rate) {
                (v + rng.random_range(1..c)) % c
            } else {
                v
            }
        })
        .collect();
    ClassMap::new(gt.height(), gt.width(), c, None, values).unwrap()
}

/// Uncertainty map on the grid `k / 8`, so every patch sum is exact.
pub fn dyadic_umap(rng: &mut impl Rng, h: usize, w: usize) -> ScalarMap {
    ScalarMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..=8u32) as f64 / 8.0).collect()).unwrap()
}

/// Window start offsets along one axis, listed independently of the library.
pub fn oracle_starts(len: usize, window: usize, stride: usize, include_partial: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0.. {
        let start = k * stride;
        if start >= len {
            break;
        }
        if start + window <= len {
            out.push((start, window));
        } else if include_partial && (k == 0 || (k - 1) * stride + window < len) {
            out.push((start, len - start));
        } else {
            break;
        }
    }
    out
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OracleCounts {
    pub n_ac: u64,
    pub n_au: u64,
    pub n_ic: u64,
    pub n_iu: u64,
    pub skipped: u64,
}

/// Exhaustive patch classifier. `a_th` and `u_th` must be dyadic and the
/// uncertainty values multiples of 1/8, so that every comparison below is
/// exact in integer-scaled arithmetic.
#[allow(clippy::too_many_arguments)]
pub fn oracle_classify(
    pred: &ClassMap,
    gt: &ClassMap,
    umap: &ScalarMap,
    window: usize,
    stride: usize,
    include_partial: bool,
    a_th: f64,
    u_th: f64,
    strict: bool,
) -> OracleCounts {
    let (h, w) = gt.dims();
    let mut out = OracleCounts::default();
    for &(top, ph) in &oracle_starts(h, window, stride, include_partial) {
        for &(left, pw) in &oracle_starts(w, window, stride, include_partial) {
            let (mut correct, mut scorable) = (0u64, 0u64);
            let mut sum_eighths = 0u64;
            for r in top..top + ph {
                for c in left..left + pw {
                    sum_eighths += (umap.get(r, c) * 8.0) as u64;
                    if gt.is_ignored(r, c) {
                        continue;
                    }
                    scorable += 1;
                    correct += u64::from(pred.get(r, c) == gt.get(r, c));
                }
            }
            if scorable == 0 {
                out.skipped += 1;
                continue;
            }
            let accurate = correct as f64 >= a_th * scorable as f64;
            // mean >= u_th  <=>  sum_eighths >= 8 n u_th, exact for dyadic u_th
            let n = (ph * pw) as f64;
            let lhs = sum_eighths as f64;
            let rhs = 8.0 * n * u_th;
            let uncertain = if strict { lhs > rhs } else { lhs >= rhs };
            match (accurate, uncertain) {
                (true, false) => out.n_ac += 1,
                (true, true) => out.n_au += 1,
                (false, false) => out.n_ic += 1,
                (false, true) => out.n_iu += 1,
            }
        }
    }
    out
}

pub fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Conditional metrics written out from their definitions.
pub fn oracle_metrics(c: &OracleCounts) -> (Option<f64>, Option<f64>, Option<f64>) {
    (
        ratio(c.n_ac, c.n_ac + c.n_ic),
        ratio(c.n_iu, c.n_ic + c.n_iu),
        ratio(c.n_ac + c.n_iu, c.n_ac + c.n_au + c.n_ic + c.n_iu),
    )
}

/// Entropy in nats written directly from its definition.
pub fn oracle_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

/// Mean NLL of `softmax(z / T)` over all pixels, straight log-sum-exp.
pub fn oracle_nll(logits: &[Vec<f64>], labels: &[usize], temperature: f64) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| {
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) / temperature;
            let lse = m + z.iter().map(|v| (v / temperature - m).exp()).sum::<f64>().ln();
            lse - z[y] / temperature
        })
        .sum();
    total / logits.len() as f64
}

/// Grid minimiser of [`oracle_nll`] over `[lo, hi]` with step `step`.
pub fn oracle_best_temperature(logits: &[Vec<f64>], labels: &[usize], lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n)
        .map(|i| lo + i as f64 * step)
        .map(|t| (t, oracle_nll(logits, labels, t)))
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
        .0
}

/// Random logits in `[-4, 4]` and labels drawn from their softmax.
pub fn logit_dataset(seed: u64, pixels: usize, classes: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let mut logits = Vec::with_capacity(pixels);
    let mut labels = Vec::with_capacity(pixels);
    for _ in 0..pixels {
        let z: Vec<f64> = (0..classes).map(|_| r.random_range(-4.0..4.0)).collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let mut u = r.random::<f64>() * s;
        let mut y = classes - 1;
        for (k, v) in e.iter().enumerate() {
            if u < *v {
                y = k;
                break;
            }
            u -= v;
        }
        logits.push(z);
        labels.push(y);
    }
    (logits, labels)
}
