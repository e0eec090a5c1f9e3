//! Forward kernels shared by the float32 tape and the float64 replay path.
//!
//! Every reduction accumulates in f64 and iterates in a fixed left-to-right
//! order regardless of the storage type, which keeps the f32 path
//! deterministic and the f64 replay numerically tight for finite-difference
//! oracles.

pub(crate) trait Real: Copy + PartialOrd {
    const ZERO: Self;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// y[r,j] = sum_i x[r,i] * w[i,j] + b[j]
pub(crate) fn dense<F: Real>(x: &[F], rows: usize, ci: usize, w: &[F], co: usize, b: Option<&[F]>) -> Vec<F> {
    let mut out = vec![F::ZERO; rows * co];
    let mut acc = vec![0.0f64; co];
    for r in 0..rows {
        for a in acc.iter_mut() {
            *a = 0.0;
        }
        let xrow = &x[r * ci..(r + 1) * ci];
        for (i, &xv) in xrow.iter().enumerate() {
            let a = xv.to_f64();
            let wrow = &w[i * co..(i + 1) * co];
            for (j, &wv) in wrow.iter().enumerate() {
                acc[j] += a * wv.to_f64();
            }
        }
        let orow = &mut out[r * co..(r + 1) * co];
        match b {
            Some(bias) => {
                for j in 0..co {
                    orow[j] = F::from_f64(acc[j] + bias[j].to_f64());
                }
            }
            None => {
                for j in 0..co {
                    orow[j] = F::from_f64(acc[j]);
                }
            }
        }
    }
    out
}

/// Causal dilated convolution with zero left-padding.
///
/// y[t,j] = sum_{tap,i} w[tap,i,j] * x[t - (k-1-tap)*dilation, i]
/// (taps that reach before t=0 read the implicit zero pad).
pub(crate) fn conv1d_causal<F: Real>(
    x: &[F],
    t_len: usize,
    ci: usize,
    w: &[F],
    k: usize,
    co: usize,
    dilation: usize,
) -> Vec<F> {
    let mut out = vec![F::ZERO; t_len * co];
    let mut acc = vec![0.0f64; co];
    for t in 0..t_len {
        for a in acc.iter_mut() {
            *a = 0.0;
        }
        for tap in 0..k {
            let offset = (k - 1 - tap) * dilation;
            if offset > t {
                continue;
            }
            let src = t - offset;
            let xrow = &x[src * ci..(src + 1) * ci];
            let wslab = &w[tap * ci * co..(tap + 1) * ci * co];
            for (i, &xv) in xrow.iter().enumerate() {
                let a = xv.to_f64();
                let wrow = &wslab[i * co..(i + 1) * co];
                for (j, &wv) in wrow.iter().enumerate() {
                    acc[j] += a * wv.to_f64();
                }
            }
        }
        let orow = &mut out[t * co..(t + 1) * co];
        for j in 0..co {
            orow[j] = F::from_f64(acc[j]);
        }
    }
    out
}

pub(crate) fn relu<F: Real>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| if v > F::ZERO { v } else { F::ZERO }).collect()
}

pub(crate) fn sigmoid<F: Real>(x: &[F]) -> Vec<F> {
    x.iter()
        .map(|&v| F::from_f64(1.0 / (1.0 + (-v.to_f64()).exp())))
        .collect()
}

pub(crate) fn exp<F: Real>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| F::from_f64(v.to_f64().exp())).collect()
}

pub(crate) fn ln<F: Real>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| F::from_f64(v.to_f64().ln())).collect()
}

pub(crate) fn abs<F: Real>(x: &[F]) -> Vec<F> {
    x.iter()
        .map(|&v| if v < F::ZERO { F::from_f64(-v.to_f64()) } else { v })
        .collect()
}

pub(crate) fn affine<F: Real>(x: &[F], mul: f64, add: f64) -> Vec<F> {
    x.iter().map(|&v| F::from_f64(v.to_f64() * mul + add)).collect()
}

/// Numerically stable softmax over a flat vector (max subtraction).
pub(crate) fn softmax_1d<F: Real>(x: &[F]) -> Vec<F> {
    let mut max = f64::NEG_INFINITY;
    for &v in x {
        let v = v.to_f64();
        if v > max {
            max = v;
        }
    }
    let exps: Vec<f64> = x.iter().map(|&v| (v.to_f64() - max).exp()).collect();
    let mut sum = 0.0f64;
    for &e in &exps {
        sum += e;
    }
    exps.iter().map(|&e| F::from_f64(e / sum)).collect()
}

/// y[t] = sum_d a[t,d] * b[t,d]
pub(crate) fn row_dot<F: Real>(a: &[F], b: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut out = vec![F::ZERO; rows];
    for t in 0..rows {
        let ar = &a[t * cols..(t + 1) * cols];
        let br = &b[t * cols..(t + 1) * cols];
        let mut acc = 0.0f64;
        for d in 0..cols {
            acc += ar[d].to_f64() * br[d].to_f64();
        }
        out[t] = F::from_f64(acc);
    }
    out
}

/// y[d] = sum_t alpha[t] * e[t,d]
pub(crate) fn weighted_row_sum<F: Real>(e: &[F], alpha: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut acc = vec![0.0f64; cols];
    for t in 0..rows {
        let at = alpha[t].to_f64();
        let er = &e[t * cols..(t + 1) * cols];
        for (d, &ev) in er.iter().enumerate() {
            acc[d] += at * ev.to_f64();
        }
    }
    acc.iter().map(|&v| F::from_f64(v)).collect()
}

/// Column-wise max over rows; ties resolve to the earliest row.
pub(crate) fn max_rows<F: Real>(e: &[F], rows: usize, cols: usize) -> (Vec<F>, Vec<usize>) {
    let mut out: Vec<F> = e[..cols].to_vec();
    let mut arg = vec![0usize; cols];
    for t in 1..rows {
        let er = &e[t * cols..(t + 1) * cols];
        for d in 0..cols {
            if er[d] > out[d] {
                out[d] = er[d];
                arg[d] = t;
            }
        }
    }
    (out, arg)
}

pub(crate) fn mean_rows<F: Real>(e: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut acc = vec![0.0f64; cols];
    for t in 0..rows {
        let er = &e[t * cols..(t + 1) * cols];
        for (d, &ev) in er.iter().enumerate() {
            acc[d] += ev.to_f64();
        }
    }
    acc.iter().map(|&v| F::from_f64(v / rows as f64)).collect()
}

pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> f64 {
    let mut acc = 0.0f64;
    for i in 0..a.len() {
        acc += a[i].to_f64() * b[i].to_f64();
    }
    acc
}

pub(crate) fn norm2<F: Real>(a: &[F]) -> f64 {
    dot(a, a).sqrt()
}

/// Guard below which a vector is treated as zero for cosine similarity.
pub(crate) const COSINE_NORM_EPS: f64 = 1e-12;

/// Normalized inner product; 0 when either norm vanishes.
pub(crate) fn cosine<F: Real>(a: &[F], b: &[F]) -> f64 {
    let na = norm2(a);
    let nb = norm2(b);
    if na < COSINE_NORM_EPS || nb < COSINE_NORM_EPS {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

pub(crate) fn mean_all<F: Real>(x: &[F]) -> f64 {
    let mut acc = 0.0f64;
    for &v in x {
        acc += v.to_f64();
    }
    acc / x.len() as f64
}

/// Stable binary cross-entropy on a logit: max(x,0) - x*y + ln(1 + e^-|x|).
pub(crate) fn bce_with_logits(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}
