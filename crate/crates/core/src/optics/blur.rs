/// Separable Gaussian blur of a square `n`×`n` grid with periodic boundaries.
pub(crate) fn gaussian_blur_periodic(data: &[f64], n: usize, sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.into_iter().map(|w| w / norm).collect();
    let wrap = |i: isize| i.rem_euclid(n as isize) as usize;

    let mut rows = vec![0.0; n * n];
    for r in 0..n {
        let line = &data[r * n..(r + 1) * n];
        for c in 0..n {
            let mut acc = 0.0;
            for (k, w) in weights.iter().enumerate() {
                acc += w * line[wrap(c as isize + k as isize - radius)];
            }
            rows[r * n + c] = acc;
        }
    }
    let mut out = vec![0.0; n * n];
    for c in 0..n {
        for r in 0..n {
            let mut acc = 0.0;
            for (k, w) in weights.iter().enumerate() {
                acc += w * rows[wrap(r as isize + k as isize - radius) * n + c];
            }
            out[r * n + c] = acc;
        }
    }
    out
}
