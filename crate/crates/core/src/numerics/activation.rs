/// Logistic sigmoid, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `v / temperature_divisor`, with max subtraction.
///
/// Empty input yields an empty output.
pub fn softmax(v: &[f64], temperature_divisor: f64) -> Vec<f64> {
    debug_assert!(temperature_divisor > 0.0);
    let Some(max) = v.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let mut out: Vec<f64> = v
        .iter()
        .map(|x| ((x - max) / temperature_divisor).exp())
        .collect();
    let sum: f64 = out.iter().sum();
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// `log Σ exp(v)`, stable.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(1 + e^x)`, stable.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
