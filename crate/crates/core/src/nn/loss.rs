//! Training losses and softmax.

use super::Real;

/// Mean over samples of the summed squared error over `width` outputs.
/// Returns the loss and its gradient with respect to `pred`.
pub fn mse<T: Real>(pred: &[T], target: &[T], width: usize) -> (f64, Vec<T>) {
    assert_eq!(pred.len(), target.len());
    let n = (pred.len() / width.max(1)).max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    let k = T::lit(2.0 / n);
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        loss += d.f64() * d.f64();
        grad.push(k * d);
    }
    (loss / n, grad)
}

/// Row-wise softmax of `[n, k]` logits, computed with max subtraction.
pub fn softmax<T: Real>(logits: &[T], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    out
}

/// Mean softmax cross-entropy of `[n, k]` logits against class labels.
/// Returns the loss and the gradient `(p − onehot)/n`.
pub fn cross_entropy<T: Real>(logits: &[T], labels: &[usize], k: usize) -> (f64, Vec<T>) {
    let n = labels.len();
    assert_eq!(logits.len(), n * k);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks(k).zip(labels) {
        let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v.f64() - max).exp()).sum::<f64>().ln() + max;
        loss += lse - row[label].f64();
        for (j, v) in row.iter().enumerate() {
            let p = (v.f64() - lse).exp();
            let y = if j == label { 1.0 } else { 0.0 };
            grad.push(T::lit((p - y) / n.max(1) as f64));
        }
    }
    (loss / n.max(1) as f64, grad)
}
