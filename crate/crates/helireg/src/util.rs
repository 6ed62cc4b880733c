//! Small shared helpers.

/// Format with 17 significant digits, enough to round-trip any f64.
pub fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Median of a nonempty slice (average of the middle pair for even counts).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
