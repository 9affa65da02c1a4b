//! Layer kernels: convolution, ReLU, batch normalization, max pooling and
//! fully connected, each with its backward pass.

use rayon::prelude::*;

use super::{NnError, Real, Tensor};

fn shape_err<T>(msg: String) -> Result<T, NnError> {
    Err(NnError::Shape(msg))
}

/// Unfold one `c×h×w` sample into a `(c·k·k)×(h·w)` matrix for "same" padding.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * hw..][..hw];
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y + ky;
                    if sy < p || sy - p >= h || x0 >= x1 {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(sy - p) * w..(sy - p + 1) * w];
                    out[..x0].fill(T::zero());
                    out[x1..].fill(T::zero());
                    let sx0 = x0 + kx - p;
                    out[x0..x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back into a `c×h×w` sample.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, x: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    x.fill(T::zero());
    for ch in 0..c {
        let plane = &mut x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * hw..][..hw];
                let x0 = p.saturating_sub(kx);
                let x1 = (w + p).saturating_sub(kx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < p || sy - p >= h {
                        continue;
                    }
                    let sx0 = x0 + kx - p;
                    let dst = &mut plane[(sy - p) * w + sx0..][..x1 - x0];
                    for (d, &v) in dst.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

fn conv_dims<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
) -> Result<([usize; 4], [usize; 4]), NnError> {
    let xd = input.dims4()?;
    let kd = kernels.dims4()?;
    if kd[1] != xd[1] {
        return shape_err(format!(
            "conv: input has {} channels, kernels expect {}",
            xd[1], kd[1]
        ));
    }
    if kd[2] != kd[3] || kd[2] % 2 == 0 {
        return shape_err(format!("conv: kernel {}×{} must be square and odd", kd[2], kd[3]));
    }
    Ok((xd, kd))
}

/// Cross-correlation with zero "same" padding. Kernels are `[out, in, k, k]`.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>, NnError> {
    let ([n, c, h, w], [o, _, k, _]) = conv_dims(input, kernels)?;
    if bias.len() != o {
        return shape_err(format!("conv: bias has {} entries, expected {o}", bias.len()));
    }
    let hw = h * w;
    let ckk = c * k * k;
    let mut out = vec![T::zero(); n * o * hw];
    out.par_chunks_mut(o * hw)
        .zip(input.data().par_chunks(c * hw))
        .for_each(|(y, x)| {
            let mut cols = vec![T::zero(); ckk * hw];
            im2col(x, c, h, w, k, &mut cols);
            for (oc, row) in y.chunks_mut(hw).enumerate() {
                row.fill(bias[oc]);
            }
            T::gemm(false, false, o, hw, ckk, T::one(), kernels.data(), &cols, T::one(), y);
        });
    Tensor::new(&[n, o, h, w], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernels: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradients of a "same" convolution. Per-sample kernel gradients are summed
/// in sample order, so the result does not depend on the thread count.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    dout: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>, NnError> {
    let ([n, c, h, w], [o, _, k, _]) = conv_dims(input, kernels)?;
    if dout.shape() != [n, o, h, w] {
        return shape_err(format!(
            "conv backward: gradient shape {:?}, expected {:?}",
            dout.shape(),
            [n, o, h, w]
        ));
    }
    let hw = h * w;
    let ckk = c * k * k;
    let per_sample: Vec<(Vec<T>, Vec<T>)> = input
        .data()
        .par_chunks(c * hw)
        .zip(dout.data().par_chunks(o * hw))
        .map(|(x, dy)| {
            let mut cols = vec![T::zero(); ckk * hw];
            im2col(x, c, h, w, k, &mut cols);
            let mut dk = vec![T::zero(); o * ckk];
            T::gemm(false, true, o, ckk, hw, T::one(), dy, &cols, T::zero(), &mut dk);
            let mut dx = Vec::new();
            if need_input {
                T::gemm(true, false, ckk, hw, o, T::one(), kernels.data(), dy, T::zero(), &mut cols);
                dx = vec![T::zero(); c * hw];
                col2im(&cols, c, h, w, k, &mut dx);
            }
            (dk, dx)
        })
        .collect();

    let mut dkernels = vec![T::zero(); o * ckk];
    let mut dinput = Vec::with_capacity(if need_input { n * c * hw } else { 0 });
    for (dk, dx) in per_sample {
        for (a, b) in dkernels.iter_mut().zip(&dk) {
            *a = *a + *b;
        }
        dinput.extend_from_slice(&dx);
    }
    let mut dbias = vec![T::zero(); o];
    for dy in dout.data().chunks(o * hw) {
        for (oc, row) in dy.chunks(hw).enumerate() {
            dbias[oc] = dbias[oc] + row.iter().copied().sum::<T>();
        }
    }
    Ok(ConvGrads {
        input: if need_input {
            Some(Tensor::new(&[n, c, h, w], dinput)?)
        } else {
            None
        },
        kernels: dkernels,
        bias: dbias,
    })
}

pub fn relu<T: Real>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Zero the gradient wherever the ReLU output was not positive.
pub fn relu_backward<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        if !(y > T::zero()) {
            *g = T::zero();
        }
    }
}

/// Channel layout `[n, c, s]` of a rank-2 (`s = 1`) or rank-4 tensor.
fn bn_layout<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize), NnError> {
    match x.shape()[..] {
        [n, c] => Ok((n, c, 1)),
        [n, c, h, w] => Ok((n, c, h * w)),
        _ => shape_err(format!("batchnorm: unsupported shape {:?}", x.shape())),
    }
}

/// Batch statistics and normalized activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub xhat: Tensor<T>,
    pub(crate) inv_std: Vec<T>,
}

/// Training-mode batch normalization over all axes except the channel axis.
/// Variance is the biased batch variance.
pub fn batchnorm_train<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> Result<(Tensor<T>, BnCache<T>), NnError> {
    let (n, c, s) = bn_layout(x)?;
    if gamma.len() != c || beta.len() != c {
        return shape_err(format!("batchnorm: {c} channels, affine of {}", gamma.len()));
    }
    if n < 2 {
        return Err(NnError::BatchTooSmall(n));
    }
    let m = (n * s) as f64;
    let data = x.data();
    let mut sum = vec![0.0f64; c];
    for (i, plane) in data.chunks(s).enumerate() {
        sum[i % c] += plane.iter().fold(T::zero(), |a, &v| a + v).f64();
    }
    let mean: Vec<T> = sum.iter().map(|&v| T::lit(v / m)).collect();
    let mut sq = vec![0.0f64; c];
    for (i, plane) in data.chunks(s).enumerate() {
        let mu = mean[i % c];
        sq[i % c] += plane.iter().fold(T::zero(), |a, &v| a + (v - mu) * (v - mu)).f64();
    }
    let var: Vec<T> = sq.iter().map(|&v| T::lit(v / m)).collect();
    let inv_std: Vec<T> = sq.iter().map(|&v| T::lit(1.0 / (v / m + eps).sqrt())).collect();
    let mut xhat = Vec::with_capacity(data.len());
    let mut y = Vec::with_capacity(data.len());
    for (i, plane) in data.chunks(s).enumerate() {
        let ch = i % c;
        let (mu, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
        for &v in plane {
            let z = (v - mu) * is;
            xhat.push(z);
            y.push(g * z + b);
        }
    }
    let xhat = Tensor::new(x.shape(), xhat)?;
    let y = Tensor::new(x.shape(), y)?;
    Ok((
        y,
        BnCache {
            mean,
            var,
            xhat,
            inv_std,
        },
    ))
}

/// Inference-mode batch normalization with fixed statistics.
pub fn batchnorm_infer<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: f64,
) -> Result<Tensor<T>, NnError> {
    let (n, c, s) = bn_layout(x)?;
    if gamma.len() != c || mean.len() != c {
        return shape_err(format!("batchnorm: {c} channels, statistics of {}", mean.len()));
    }
    let scale: Vec<T> = (0..c)
        .map(|ch| gamma[ch] * T::lit(1.0 / (var[ch].f64() + eps).sqrt()))
        .collect();
    let mut y = x.clone();
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * s;
            for v in &mut y.data_mut()[off..off + s] {
                *v = (*v - mean[ch]) * scale[ch] + beta[ch];
            }
        }
    }
    Ok(y)
}

pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub fn batchnorm_backward<T: Real>(
    cache: &BnCache<T>,
    gamma: &[T],
    dout: &Tensor<T>,
) -> Result<BnGrads<T>, NnError> {
    let (n, c, s) = bn_layout(dout)?;
    if dout.shape() != cache.xhat.shape() {
        return shape_err("batchnorm backward: gradient shape mismatch".into());
    }
    let dy = dout.data();
    let xh = cache.xhat.data();
    let m = T::lit((n * s) as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (i, (g, z)) in dy.chunks(s).zip(xh.chunks(s)).enumerate() {
        let (sg, sb) = g
            .iter()
            .zip(z)
            .fold((T::zero(), T::zero()), |(a, b), (&g, &z)| (a + g * z, b + g));
        dgamma[i % c] = dgamma[i % c] + sg;
        dbeta[i % c] = dbeta[i % c] + sb;
    }
    // dx = γ/σ · (dy − mean(dy) − x̂·mean(dy·x̂))
    let mut dx = Vec::with_capacity(dy.len());
    for (i, (g, z)) in dy.chunks(s).zip(xh.chunks(s)).enumerate() {
        let ch = i % c;
        let k = gamma[ch] * cache.inv_std[ch];
        let mdy = dbeta[ch] / m;
        let mdyx = dgamma[ch] / m;
        dx.extend(g.iter().zip(z).map(|(&g, &z)| k * (g - mdy - z * mdyx)));
    }
    let dx = Tensor::new(dout.shape(), dx)?;
    Ok(BnGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    })
}

/// 2×2 max pooling with stride 2. Returns the output and, per output cell,
/// the flat input index of the winner (first maximum in row-major order).
pub fn maxpool_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>), NnError> {
    let [n, c, h, w] = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return shape_err(format!("maxpool: odd spatial dims {h}×{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for idx in [
                    base + 2 * y * w + 2 * xo + 1,
                    base + (2 * y + 1) * w + 2 * xo,
                    base + (2 * y + 1) * w + 2 * xo + 1,
                ] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, arg))
}

pub fn maxpool_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[u32],
    dout: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if dout.len() != argmax.len() {
        return shape_err("maxpool backward: gradient/argmax length mismatch".into());
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dout.data()) {
        d[i as usize] = d[i as usize] + g;
    }
    Ok(dx)
}

/// `y = x·Wᵀ + b` for `x: [n, in]`, `W: [out, in]`.
pub fn dense_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>, NnError> {
    let [n, fin] = x.dims2()?;
    let [fout, win] = weight.dims2()?;
    if win != fin || bias.len() != fout {
        return shape_err(format!(
            "dense: input width {fin}, weight {fout}×{win}, bias {}",
            bias.len()
        ));
    }
    let mut y = Vec::with_capacity(n * fout);
    for _ in 0..n {
        y.extend_from_slice(bias);
    }
    T::gemm(false, true, n, fout, fin, T::one(), x.data(), weight.data(), T::one(), &mut y);
    Tensor::new(&[n, fout], y)
}

pub struct DenseGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    dout: &Tensor<T>,
    need_input: bool,
) -> Result<DenseGrads<T>, NnError> {
    let [n, fin] = x.dims2()?;
    let [fout, _] = weight.dims2()?;
    if dout.shape() != [n, fout] {
        return shape_err(format!(
            "dense backward: gradient {:?}, expected {:?}",
            dout.shape(),
            [n, fout]
        ));
    }
    let mut dw = vec![T::zero(); fout * fin];
    T::gemm(true, false, fout, fin, n, T::one(), dout.data(), x.data(), T::zero(), &mut dw);
    let mut db = vec![T::zero(); fout];
    for row in dout.data().chunks(fout) {
        for (b, &g) in db.iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    let input = if need_input {
        let mut dx = vec![T::zero(); n * fin];
        T::gemm(false, false, n, fin, fout, T::one(), dout.data(), weight.data(), T::zero(), &mut dx);
        Some(Tensor::new(&[n, fin], dx)?)
    } else {
        None
    };
    Ok(DenseGrads {
        input,
        weight: dw,
        bias: db,
    })
}
