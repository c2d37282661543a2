//! Dense vector helpers.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cosine similarity; `None` when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    (na > 0.0 && nb > 0.0).then(|| dot(a, b) / (na * nb))
}

/// Unit-length copy, or `None` for the zero vector.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0).then(|| a.iter().map(|x| x / n).collect())
}

pub fn is_zero(a: &[f64]) -> bool {
    a.iter().all(|&x| x == 0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients of `cos(a, b)` with respect to `a` and `b`, scaled by `upstream`
/// and accumulated into `ga` / `gb`. Both inputs must be nonzero.
pub fn cosine_backward(a: &[f64], b: &[f64], upstream: f64, ga: &mut [f64], gb: &mut [f64]) {
    let (na, nb) = (norm(a), norm(b));
    let c = dot(a, b) / (na * nb);
    for i in 0..a.len() {
        ga[i] += upstream * (b[i] / (na * nb) - c * a[i] / (na * na));
        gb[i] += upstream * (a[i] / (na * nb) - c * b[i] / (nb * nb));
    }
}
