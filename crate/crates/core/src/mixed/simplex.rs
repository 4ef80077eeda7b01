/// Euclidean projection onto `{p ≥ 0, Σ p = 1}` by the sort-and-threshold rule.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // fold the rounding error into the largest entry
    let sum: f64 = out.iter().sum();
    if let Some((idx, _)) = out.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)) {
        out[idx] += 1.0 - sum;
    }
    out
}
