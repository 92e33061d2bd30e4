//! Straight-line reference implementations used to cross-check the kernels
//! and modules.
//!
//! Everything here is written with explicit index loops and its own small
//! helpers. Nothing calls into `ops` or the tape, so a shared mistake would
//! have to be made twice.

use crate::attention::{PcaParams, PsaParams};
use crate::dgc::{DgcParams, GeometricParams, GranularParams, InteractionParams, LocationParams};
use crate::fusion::LgfParams;
use crate::mde::MdeParams;
use crate::params::ConvParams;
use crate::tensor::Tensor;

fn dims(x: &Tensor) -> (usize, usize, usize) {
    let s = x.shape();
    (s[0], s[1], s[2])
}

fn get(x: &Tensor, c: usize, y: usize, xx: usize) -> f64 {
    let (_, h, w) = dims(x);
    x.data()[(c * h + y) * w + xx]
}

fn build(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Tensor {
    let mut data = Vec::with_capacity(c * h * w);
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                data.push(f(ci, y, x));
            }
        }
    }
    Tensor::new(&[c, h, w], data).expect("sized")
}

fn concat(parts: &[Tensor]) -> Tensor {
    let (_, h, w) = dims(&parts[0]);
    let mut data = Vec::new();
    let mut c = 0;
    for p in parts {
        data.extend_from_slice(p.data());
        c += p.shape()[0];
    }
    Tensor::new(&[c, h, w], data).expect("sized")
}

fn plus(a: &Tensor, b: &Tensor) -> Tensor {
    let (c, h, w) = dims(a);
    build(c, h, w, |ci, y, x| get(a, ci, y, x) + get(b, ci, y, x))
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Direct convolution with zero padding, no kernel flip.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (cin, h, w) = dims(x);
    let (cout, k) = (weight.shape()[0], weight.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let wt = weight.data();
    build(cout, ho, wo, |o, oy, ox| {
        let mut acc = bias.data()[o];
        for i in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        acc += wt[((o * cin + i) * k + ky) * k + kx] * get(x, i, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
}

pub fn conv(x: &Tensor, p: &ConvParams) -> Tensor {
    conv2d(x, &p.weight, &p.bias, p.stride, p.padding)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a.data()[i * k + t] * b.data()[t * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(&[m, n], out).expect("sized")
}

pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Tensor {
    let (c, h, w) = dims(x);
    build(c * r * r, h / r, w / r, |oc, y, xx| {
        let (ci, dy, dx) = (oc / (r * r), (oc / r) % r, oc % r);
        get(x, ci, y * r + dy, xx * r + dx)
    })
}

pub fn pixel_shuffle(x: &Tensor, r: usize) -> Tensor {
    let (c, h, w) = dims(x);
    build(c / (r * r), h * r, w * r, |ci, y, xx| get(x, ci * r * r + (y % r) * r + xx % r, y / r, xx / r))
}

pub fn channel_max(x: &Tensor) -> Tensor {
    let (c, h, w) = dims(x);
    build(1, h, w, |_, y, xx| (1..c).fold(get(x, 0, y, xx), |m, ci| m.max(get(x, ci, y, xx))))
}

pub fn channel_avg(x: &Tensor) -> Tensor {
    let (c, h, w) = dims(x);
    build(1, h, w, |_, y, xx| (0..c).map(|ci| get(x, ci, y, xx)).sum::<f64>() / c as f64)
}

/// Bilinear sampling with half-pixel centres; coordinates below zero clamp
/// to the first sample, above the last to the last.
pub fn resize_bilinear(x: &Tensor, ho: usize, wo: usize) -> Tensor {
    let (c, h, w) = dims(x);
    let axis = |o: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        let src = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).max(0.0);
        let lo = (src.floor() as usize).min(inp - 1);
        let hi = (lo + 1).min(inp - 1);
        (lo, hi, src - lo as f64)
    };
    build(c, ho, wo, |ci, oy, ox| {
        let (y0, y1, fy) = axis(oy, ho, h);
        let (x0, x1, fx) = axis(ox, wo, w);
        let top = get(x, ci, y0, x0) * (1.0 - fx) + get(x, ci, y0, x1) * fx;
        let bottom = get(x, ci, y1, x0) * (1.0 - fx) + get(x, ci, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// `M[i][j] = sum_n k[i][n] q[j][n]`, `out[j][n] = sum_i v[i][n] M[i][j]`.
pub fn location_sensing(x: &Tensor, p: &LocationParams) -> Tensor {
    let (c, h, w) = dims(x);
    let hw = h * w;
    let (q, k, v) = (conv(x, &p.query), conv(x, &p.key), conv(x, &p.value));
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let scale = if p.scaled { 1.0 / (c as f64).sqrt() } else { 1.0 };
    let mut m = vec![0.0; c * c];
    for i in 0..c {
        for j in 0..c {
            let mut acc = 0.0;
            for n in 0..hw {
                acc += kd[i * hw + n] * qd[j * hw + n];
            }
            m[i * c + j] = acc * scale;
        }
    }
    let mut out = vec![0.0; c * hw];
    for j in 0..c {
        for n in 0..hw {
            let mut acc = 0.0;
            for i in 0..c {
                acc += vd[i * hw + n] * m[i * c + j];
            }
            out[j * hw + n] = acc;
        }
    }
    Tensor::new(&[c, h, w], out).expect("sized")
}

pub fn bce(s: &Tensor, g: &Tensor) -> f64 {
    let mut acc = 0.0;
    for (&s, &g) in s.data().iter().zip(g.data()) {
        let s = s.clamp(1e-7, 1.0 - 1e-7);
        acc -= g * s.ln() + (1.0 - g) * (1.0 - s).ln();
    }
    acc / s.len() as f64
}

pub fn iou(s: &Tensor, g: &Tensor) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    for (&s, &g) in s.data().iter().zip(g.data()) {
        inter += s * g;
        union += s + g - s * g;
    }
    if s.data().iter().all(|&v| v == 0.0) && g.data().iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    1.0 - inter / (union + 1e-8)
}

pub fn fm(s: &Tensor, g: &Tensor, beta2: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &g) in s.data().iter().zip(g.data()) {
        tp += s * g;
        fp += s * (1.0 - g);
        fn_ += (1.0 - s) * g;
    }
    let h = beta2 * (tp + fn_) + tp + fp;
    1.0 - (1.0 + beta2) * tp / (h + 1e-8)
}

pub fn mae(s: &Tensor, g: &Tensor) -> f64 {
    s.data().iter().zip(g.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / s.len() as f64
}

pub fn f_measure(s: &Tensor, g: &Tensor, beta2: f64) -> f64 {
    let t = (2.0 * s.data().iter().sum::<f64>() / s.len() as f64).min(1.0);
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &g) in s.data().iter().zip(g.data()) {
        let p = s >= t && s > 0.0;
        let y = g >= 0.5;
        tp += (p && y) as u8 as f64;
        fp += (p && !y) as u8 as f64;
        fn_ += (!p && y) as u8 as f64;
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if beta2 * precision + recall == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / (beta2 * precision + recall)
    }
}

/// Weight `a * max + b * mean + bias` of the block containing each pixel,
/// where the max and mean run over every channel and every pixel of the
/// `r x r` block.
fn block_gate(x: &Tensor, r: usize, fuse: &ConvParams) -> Vec<f64> {
    let (c, h, w) = dims(x);
    let (a, b, bias) = (fuse.weight.data()[0], fuse.weight.data()[1], fuse.bias.data()[0]);
    let mut gate = vec![0.0; (h / r) * (w / r)];
    for by in 0..h / r {
        for bx in 0..w / r {
            let mut mx = f64::NEG_INFINITY;
            let mut sum = 0.0;
            for ci in 0..c {
                for dy in 0..r {
                    for dx in 0..r {
                        let v = get(x, ci, by * r + dy, bx * r + dx);
                        mx = mx.max(v);
                        sum += v;
                    }
                }
            }
            gate[by * (w / r) + bx] = a * mx + b * sum / (c * r * r) as f64 + bias;
        }
    }
    gate
}

fn refine_scale(x: &Tensor, r: usize, fuse: &ConvParams) -> Tensor {
    let (c, h, w) = dims(x);
    let gate = block_gate(x, r, fuse);
    build(c, h, w, |ci, y, xx| {
        let v = get(x, ci, y, xx);
        gate[(y / r) * (w / r) + xx / r] * v + v
    })
}

pub fn psa(x: &Tensor, p: &PsaParams) -> Tensor {
    let scales: Vec<Tensor> = p.factors.iter().zip(&p.fuse).map(|(&r, f)| refine_scale(x, r, f)).collect();
    conv(&concat(&scales), &p.merge)
}

pub fn pca(x: &Tensor, p: &PcaParams) -> Tensor {
    let (c, h, w) = dims(x);
    let k = p.grid;
    let e = h * w;
    // grids[n] is the K x K arrangement of the channels of pixel n
    let grids = build(e, k, k, |n, i, j| x.data()[(i * k + j) * e + n]);
    let scales: Vec<Tensor> = p.factors.iter().zip(&p.fuse).map(|(&r, f)| refine_scale(&grids, r, f)).collect();
    let mut out = vec![0.0; c * e];
    for n in 0..e {
        let stack = build(scales.len(), k, k, |s, i, j| get(&scales[s], n, i, j));
        let merged = conv(&stack, &p.merge);
        for i in 0..k {
            for j in 0..k {
                out[(i * k + j) * e + n] = get(&merged, 0, i, j);
            }
        }
    }
    Tensor::new(&[c, h, w], out).expect("sized")
}

pub fn mde(x: &Tensor, p: &MdeParams) -> Tensor {
    let (_, h, w) = dims(x);
    let branches: Vec<Tensor> = p
        .branches
        .iter()
        .map(|b| {
            let a = conv(x, &b.conv_a);
            let down = resize_bilinear(&a, h / 2, w / 2);
            let up = resize_bilinear(&conv(&conv(&down, &b.inner), &b.conv_b), h, w);
            let f = plus(&up, &a);
            conv(&concat(&[psa(&f, &b.psa), pca(&f, &b.pca)]), &b.fuse)
        })
        .collect();
    conv(&concat(&branches), &p.merge)
}

pub fn granular(x: &Tensor, p: &GranularParams) -> Tensor {
    let mut stages: Vec<Tensor> = Vec::new();
    for (i, f) in p.convs.iter().enumerate() {
        let input = if i == 0 { x.clone() } else { plus(x, &stages[i - 1]) };
        stages.push(conv(&input, f));
    }
    conv(&concat(&stages), &p.merge)
}

pub fn geometric(x: &Tensor, p: &GeometricParams) -> Tensor {
    let scales: Vec<Tensor> = p
        .factors
        .iter()
        .zip(&p.sensing)
        .map(|(&r, s)| pixel_shuffle(&location_sensing(&pixel_unshuffle(x, r), s), r))
        .collect();
    conv(&concat(&scales), &p.merge)
}

/// Literal `(fs * W + fs, fd * W + fd)` with the single-channel sigmoid map `W`.
pub fn interaction(fs: &Tensor, fd: &Tensor, p: &InteractionParams) -> (Tensor, Tensor, Tensor) {
    let (c, h, w) = dims(fs);
    let logits = conv(&concat(&[fs.clone(), fd.clone()]), &p.conv);
    let weight = build(1, h, w, |_, y, x| logistic(get(&logits, 0, y, x)));
    let apply = |f: &Tensor| build(c, h, w, |ci, y, x| get(f, ci, y, x) * get(&weight, 0, y, x) + get(f, ci, y, x));
    (apply(fs), apply(fd), weight)
}

pub fn dgc(x: &Tensor, p: &DgcParams) -> Tensor {
    let (c, h, w) = dims(x);
    let wide = conv(x, &p.expand);
    let first = build(c, h, w, |ci, y, xx| get(&wide, ci, y, xx));
    let second = build(c, h, w, |ci, y, xx| get(&wide, c + ci, y, xx));
    let detail = granular(&first, &p.granular);
    let position = geometric(&second, &p.geometric);
    let (se, de, _) = interaction(&position, &detail, &p.interaction);
    let sde = conv(&concat(&[se, de]), &p.fuse);
    let refined = conv(&concat(&[pca(&sde, &p.pca), psa(&sde, &p.psa)]), &p.refine);
    plus(&sde, &refined)
}

pub fn dsp(x: &Tensor, p: &LocationParams) -> Tensor {
    location_sensing(x, p)
}

pub fn lgf(low: &Tensor, high: &Tensor, p: &LgfParams) -> Tensor {
    let (c, h, w) = dims(low);
    let up = resize_bilinear(high, h, w);
    let gl = plus(&conv(low, &p.gate_low), low);
    let gh = plus(&conv(&up, &p.gate_high), &up);
    build(c, h, w, |ci, y, x| get(&gh, ci, y, x) * get(&gl, ci, y, x) + get(&up, ci, y, x))
}

pub fn decode(features: &[Tensor], lgfs: &[LgfParams]) -> Vec<Tensor> {
    let n = features.len();
    let mut out = vec![Tensor::scalar(0.0); n];
    out[n - 1] = features[n - 1].clone();
    for i in (0..n - 1).rev() {
        out[i] = lgf(&features[i], &out[i + 1], &lgfs[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_counts_valid_taps() {
        let x = Tensor::full(&[1, 4, 4], 2.0);
        let y = conv2d(&x, &Tensor::ones(&[1, 1, 3, 3]), &Tensor::zeros(&[1]), 1, 1);
        assert_eq!(get(&y, 0, 0, 0), 8.0);
        assert_eq!(get(&y, 0, 1, 1), 18.0);
        assert_eq!(get(&y, 0, 0, 1), 12.0);
    }

    #[test]
    fn unshuffle_block_order() {
        let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pixel_unshuffle(&x, 2).data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pixel_shuffle(&pixel_unshuffle(&x, 2), 2), x);
    }

    #[test]
    fn resize_hand_values() {
        // [0, 2] upsampled to 4 samples at -0.25, 0.25, 0.75, 1.25 (clamped)
        let x = Tensor::new(&[1, 1, 2], vec![0.0, 2.0]).unwrap();
        assert_eq!(resize_bilinear(&x, 1, 4).data(), &[0.0, 0.5, 1.5, 2.0]);
    }
}
