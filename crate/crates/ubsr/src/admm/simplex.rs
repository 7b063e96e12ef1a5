//! Euclidean projection onto the standard simplex by sort and threshold.

/// Projects `v` onto `{ w : w_i >= 0, sum w_i = 1 }`.
///
/// Sorts in decreasing order, finds the largest prefix whose running mean
/// shifted by the budget stays below its last element, and clips at that
/// threshold.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    if v.len() == 1 {
        return vec![1.0];
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &val) in sorted.iter().enumerate() {
        cumsum += val;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if candidate < val {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}
