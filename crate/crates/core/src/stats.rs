//! Small statistics toolbox used by the co-adaptation analysis and the
//! experiment harness: means, medians, Pearson correlation, z-normalization
//! and a paired one-sided bootstrap test.

use rand::Rng;

use crate::rng::{stream, SimRng, StreamDomain};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in median input"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pearson correlation coefficient; 0.0 for degenerate inputs.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

/// Z-normalize a series; `None` when the series is constant (zero variance).
pub fn z_normalize(xs: &[f64]) -> Option<Vec<f64>> {
    let sd = std_dev(xs);
    if sd == 0.0 || !sd.is_finite() {
        return None;
    }
    let m = mean(xs);
    Some(xs.iter().map(|x| (x - m) / sd).collect())
}

pub fn first_differences(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Count strict sign changes, skipping zeros (the last non-zero sign carries).
pub fn sign_changes(xs: &[f64]) -> u32 {
    let mut changes = 0;
    let mut last = 0i8;
    for &x in xs {
        let s = if x > 0.0 {
            1i8
        } else if x < 0.0 {
            -1i8
        } else {
            0i8
        };
        if s != 0 {
            if last != 0 && s != last {
                changes += 1;
            }
            last = s;
        }
    }
    changes
}

/// One-sided paired bootstrap: p-value for the hypothesis that the mean of
/// the paired differences is not positive. Small p supports "greater".
pub fn bootstrap_p_mean_positive(diffs: &[f64], iters: u32, seed: u64) -> f64 {
    assert!(!diffs.is_empty());
    let mut rng: SimRng = stream(seed, StreamDomain::Harness, 0xB007);
    let n = diffs.len();
    let mut not_positive = 0u32;
    for _ in 0..iters {
        let mut s = 0.0;
        for _ in 0..n {
            s += diffs[rng.gen_range(0..n)];
        }
        if s <= 0.0 {
            not_positive += 1;
        }
    }
    (not_positive + 1) as f64 / (iters + 1) as f64
}
