//! Exponentiated-gradient step on the probability simplex.

/// Computes `x ⊙ exp(−rate · g)` followed by L1 normalization into `out`.
///
/// The exponent is shifted by the smallest gradient entry so nothing
/// overflows; the shift cancels in the normalization. Positive entries stay
/// strictly positive and zero entries stay zero. Returns `|Σ out − 1|`.
pub(crate) fn exponentiated_step(x: &[f64], grad: &[f64], rate: f64, out: &mut [f64]) -> f64 {
    debug_assert_eq!(x.len(), grad.len());
    debug_assert_eq!(x.len(), out.len());
    let g_min = x
        .iter()
        .zip(grad)
        .filter(|(xi, _)| **xi > 0.0)
        .map(|(_, g)| *g)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for ((o, &xi), &gi) in out.iter_mut().zip(x).zip(grad) {
        *o = if xi > 0.0 {
            (xi * (-rate * (gi - g_min)).exp()).max(f64::MIN_POSITIVE)
        } else {
            0.0
        };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    (out.iter().sum::<f64>() - 1.0).abs()
}

/// Spread `max g − min g` over the support of `x`; a step is a no-op after
/// normalization when this is zero.
pub(crate) fn gradient_spread(x: &[f64], grad: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&xi, &gi) in x.iter().zip(grad) {
        if xi > 0.0 {
            lo = lo.min(gi);
            hi = hi.max(gi);
        }
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}
