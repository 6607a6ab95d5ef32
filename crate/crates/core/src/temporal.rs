//! Temporal stock encoding.
//!
//! The primary path turns each stock's standardized indicator window into a
//! width-M embedding: wavelet decomposition (see [`crate::wavelet`]) is
//! pooled into per-level detail maxima plus an approximation mean, each
//! detail level is mapped to width M, an attention softmax over levels picks
//! the fluctuation summary, and a sigmoid gate adds it onto the trend term.
//! An alternative recurrent encoder over the raw window (same output width)
//! is provided for the ablation that disables the wavelet path.

use alloc::vec;
use alloc::vec::Vec;

use crate::mat::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Mat};
use crate::nn::{sigmoid, tanh, Linear};
use crate::panel::WindowBatch;
use crate::wavelet::{
    dwt_decompose, pool_features, BoundaryMode, PooledFeatures, WaveletError, WaveletKind,
};

/// Numerically shifted softmax; uniform over all-equal inputs.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| libm::exp(s - max)).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Two-layer scoring network for level attention: e = w2 . tanh(W1 h + b1) + b2.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct AttentionParams {
    pub l1: Linear,
    pub l2: Linear,
}

impl AttentionParams {
    pub fn zeros(width: usize) -> Self {
        AttentionParams {
            l1: Linear::zeros(width, width),
            l2: Linear::zeros(width, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        AttentionParams {
            l1: self.l1.zeros_like(),
            l2: self.l2.zeros_like(),
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.l1.slices_mut();
        out.extend(self.l2.slices_mut());
        out
    }
}

/// Level feature maps, trend map, and the fluctuation gate.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FusionParams {
    /// One D -> M map per detail level.
    pub level_maps: Vec<Linear>,
    /// D -> M map over the time-averaged approximation.
    pub trend: Linear,
    /// M -> M map whose sigmoid scales the fluctuation summary.
    pub gate: Linear,
}

impl FusionParams {
    pub fn zeros(channels: usize, levels: usize, width: usize) -> Self {
        FusionParams {
            level_maps: (0..levels).map(|_| Linear::zeros(channels, width)).collect(),
            trend: Linear::zeros(channels, width),
            gate: Linear::zeros(width, width),
        }
    }

    pub fn zeros_like(&self) -> Self {
        FusionParams {
            level_maps: self.level_maps.iter().map(Linear::zeros_like).collect(),
            trend: self.trend.zeros_like(),
            gate: self.gate.zeros_like(),
        }
    }

    pub fn levels(&self) -> usize {
        self.level_maps.len()
    }

    pub fn width(&self) -> usize {
        self.trend.d_out()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.level_maps {
            out.extend(l.slices_mut());
        }
        out.extend(self.trend.slices_mut());
        out.extend(self.gate.slices_mut());
        out
    }
}

/// Everything the wavelet-path encoder learns.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TemporalParams {
    pub attention: AttentionParams,
    pub fusion: FusionParams,
}

impl TemporalParams {
    pub fn zeros(channels: usize, levels: usize, width: usize) -> Self {
        TemporalParams {
            attention: AttentionParams::zeros(width),
            fusion: FusionParams::zeros(channels, levels, width),
        }
    }

    pub fn zeros_like(&self) -> Self {
        TemporalParams {
            attention: self.attention.zeros_like(),
            fusion: self.fusion.zeros_like(),
        }
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.attention.slices_mut();
        out.extend(self.fusion.slices_mut());
        out
    }
}

/// Decomposes and pools every stock window in a batch. Gradients never flow
/// through this stage, so callers may compute it once per anchor and reuse it
/// across epochs.
pub fn pooled_from_batch(
    batch: &WindowBatch,
    kind: WaveletKind,
    boundary: BoundaryMode,
    level: usize,
) -> Result<Vec<PooledFeatures>, WaveletError> {
    let mut out = Vec::with_capacity(batch.n_stocks());
    for i in 0..batch.n_stocks() {
        let coeffs = dwt_decompose(&batch.window(i), kind, level, boundary)?;
        out.push(pool_features(&coeffs));
    }
    Ok(out)
}

pub struct TemporalCache {
    /// Per level: N x D pooled detail inputs.
    detail_in: Vec<Mat>,
    /// N x D time-averaged approximations.
    approx_in: Mat,
    /// Per level: N x M level features.
    h: Vec<Mat>,
    /// Per level: N x M tanh activations inside the scorer.
    t: Vec<Mat>,
    /// N x levels attention weights.
    alpha: Mat,
    /// N x M attention-combined fluctuation summary.
    zeta: Mat,
    h_trend: Mat,
    /// N x M sigmoid gate values.
    lam: Mat,
}

/// Encodes pooled wavelet features into stock embeddings Z (N x M).
pub fn encode_pooled(
    pooled: &[PooledFeatures],
    p: &TemporalParams,
) -> (Mat, TemporalCache) {
    let n = pooled.len();
    let levels = p.fusion.levels();
    let d = p.fusion.trend.d_in();
    let m = p.fusion.width();

    let mut detail_in = vec![Mat::zeros(n, d); levels];
    let mut approx_in = Mat::zeros(n, d);
    for (i, feat) in pooled.iter().enumerate() {
        assert_eq!(feat.detail_max.rows(), levels, "level count mismatch");
        assert_eq!(feat.detail_max.cols(), d, "channel count mismatch");
        for k in 0..levels {
            detail_in[k].row_mut(i).copy_from_slice(feat.detail_max.row(k));
        }
        approx_in.row_mut(i).copy_from_slice(&feat.approx_mean);
    }

    // Per-level features and their attention scores.
    let mut h = Vec::with_capacity(levels);
    let mut t = Vec::with_capacity(levels);
    let mut scores = Mat::zeros(n, levels);
    for k in 0..levels {
        let hk = p.fusion.level_maps[k].forward(&detail_in[k]);
        let mut tk = p.attention.l1.forward(&hk);
        for v in tk.data_mut() {
            *v = tanh(*v);
        }
        let ek = p.attention.l2.forward(&tk);
        for i in 0..n {
            scores.set(i, k, ek.at(i, 0));
        }
        h.push(hk);
        t.push(tk);
    }
    let mut alpha = Mat::zeros(n, levels);
    for i in 0..n {
        alpha.row_mut(i).copy_from_slice(&softmax(scores.row(i)));
    }
    let mut zeta = Mat::zeros(n, m);
    for k in 0..levels {
        for i in 0..n {
            let a = alpha.at(i, k);
            let hk = h[k].row(i);
            for (z, v) in zeta.row_mut(i).iter_mut().zip(hk) {
                *z += a * v;
            }
        }
    }

    let h_trend = p.fusion.trend.forward(&approx_in);
    let mut lam = p.fusion.gate.forward(&h_trend);
    for v in lam.data_mut() {
        *v = sigmoid(*v);
    }
    let mut z = Mat::zeros(n, m);
    for i in 0..n {
        let (tr, la, ze) = (h_trend.row(i), lam.row(i), zeta.row(i));
        for (j, out) in z.row_mut(i).iter_mut().enumerate() {
            *out = tr[j] + la[j] * ze[j];
        }
    }
    (
        z,
        TemporalCache {
            detail_in,
            approx_in,
            h,
            t,
            alpha,
            zeta,
            h_trend,
            lam,
        },
    )
}

pub fn encode_pooled_backward(
    dz: &Mat,
    p: &TemporalParams,
    cache: &TemporalCache,
    grads: &mut TemporalParams,
) {
    let n = dz.rows();
    let m = dz.cols();
    let levels = p.fusion.levels();

    // z = h_trend + lam * zeta.
    let mut dh_trend = dz.clone();
    let mut dzeta = Mat::zeros(n, m);
    let mut dpre_gate = Mat::zeros(n, m);
    for i in 0..n {
        let (dzr, lar, zer) = (dz.row(i), cache.lam.row(i), cache.zeta.row(i));
        let dze = dzeta.row_mut(i);
        for j in 0..m {
            dze[j] = dzr[j] * lar[j];
        }
        let dpg = dpre_gate.row_mut(i);
        for j in 0..m {
            // d lam / d pre = lam (1 - lam).
            dpg[j] = dzr[j] * zer[j] * lar[j] * (1.0 - lar[j]);
        }
    }
    p.fusion.gate.backward(
        &cache.h_trend,
        &dpre_gate,
        &mut grads.fusion.gate,
        Some(&mut dh_trend),
    );

    // zeta = sum_k alpha_k h_k with alpha = softmax(e).
    let mut dalpha = Mat::zeros(n, levels);
    let mut dh: Vec<Mat> = (0..levels).map(|_| Mat::zeros(n, m)).collect();
    for k in 0..levels {
        for i in 0..n {
            let hk = cache.h[k].row(i);
            let dze = dzeta.row(i);
            dalpha.set(i, k, hk.iter().zip(dze).map(|(a, b)| a * b).sum());
            let a = cache.alpha.at(i, k);
            for (g, v) in dh[k].row_mut(i).iter_mut().zip(dze) {
                *g += a * v;
            }
        }
    }
    let mut de = Mat::zeros(n, levels);
    for i in 0..n {
        let ar = cache.alpha.row(i);
        let dar = dalpha.row(i);
        let inner: f64 = ar.iter().zip(dar).map(|(a, d)| a * d).sum();
        let der = de.row_mut(i);
        for k in 0..levels {
            der[k] = ar[k] * (dar[k] - inner);
        }
    }

    // Scores flow back through the two-layer scorer into each h_k.
    for k in 0..levels {
        let mut dek = Mat::zeros(n, 1);
        for i in 0..n {
            dek.set(i, 0, de.at(i, k));
        }
        let mut dt = Mat::zeros(n, m);
        p.attention
            .l2
            .backward(&cache.t[k], &dek, &mut grads.attention.l2, Some(&mut dt));
        for i in 0..n {
            let tk = cache.t[k].row(i);
            for (g, v) in dt.row_mut(i).iter_mut().zip(tk) {
                *g *= 1.0 - v * v;
            }
        }
        p.attention
            .l1
            .backward(&cache.h[k], &dt, &mut grads.attention.l1, Some(&mut dh[k]));
        // Pooled inputs are data; only parameter gradients are needed below.
        p.fusion.level_maps[k].backward(
            &cache.detail_in[k],
            &dh[k],
            &mut grads.fusion.level_maps[k],
            None,
        );
    }
    p.fusion
        .trend
        .backward(&cache.approx_in, &dh_trend, &mut grads.fusion.trend, None);
}

/// Full wavelet-path embedding of a standardized window batch.
pub fn embed_all(
    batch: &WindowBatch,
    kind: WaveletKind,
    boundary: BoundaryMode,
    level: usize,
    p: &TemporalParams,
) -> Result<Mat, WaveletError> {
    assert!(batch.standardized, "windows must be standardized before encoding");
    let pooled = pooled_from_batch(batch, kind, boundary, level)?;
    Ok(encode_pooled(&pooled, p).0)
}

/// Single-layer gated recurrent encoder over the raw window; the final
/// hidden state is projected to the embedding width. Update rule per step:
/// r = sig(x Wr + h Ur + br), u = sig(x Wu + h Uu + bu),
/// n = tanh(x Wn + (r*h) Un + bn), h' = (1-u)*n + u*h.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GruEncoder {
    pub wr: Mat,
    pub ur: Mat,
    pub br: Vec<f64>,
    pub wu: Mat,
    pub uu: Mat,
    pub bu: Vec<f64>,
    pub wn: Mat,
    pub un: Mat,
    pub bn: Vec<f64>,
    pub proj: Linear,
}

impl GruEncoder {
    pub fn zeros(channels: usize, width: usize) -> Self {
        GruEncoder {
            wr: Mat::zeros(channels, width),
            ur: Mat::zeros(width, width),
            br: vec![0.0; width],
            wu: Mat::zeros(channels, width),
            uu: Mat::zeros(width, width),
            bu: vec![0.0; width],
            wn: Mat::zeros(channels, width),
            un: Mat::zeros(width, width),
            bn: vec![0.0; width],
            proj: Linear::zeros(width, width),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GruEncoder::zeros(self.wr.rows(), self.wr.cols())
    }

    pub fn width(&self) -> usize {
        self.wr.cols()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.wr.data_mut(),
            self.ur.data_mut(),
            self.br.as_mut_slice(),
            self.wu.data_mut(),
            self.uu.data_mut(),
            self.bu.as_mut_slice(),
            self.wn.data_mut(),
            self.un.data_mut(),
            self.bn.as_mut_slice(),
        ];
        out.extend(self.proj.slices_mut());
        out
    }
}

struct GruStep {
    x: Mat,
    h_prev: Mat,
    r: Mat,
    u: Mat,
    n: Mat,
    rh: Mat,
}

pub struct GruCache {
    steps: Vec<GruStep>,
    h_last: Mat,
}

fn gate_forward(x: &Mat, w: &Mat, h: &Mat, uw: &Mat, b: &[f64]) -> Mat {
    let mut pre = Mat::zeros(x.rows(), w.cols());
    matmul_acc(x, w, &mut pre);
    matmul_acc(h, uw, &mut pre);
    pre.add_row_bias(b);
    pre
}

/// Runs the recurrence over a standardized batch and projects the final
/// hidden state.
pub fn gru_forward(batch: &WindowBatch, p: &GruEncoder) -> (Mat, GruCache) {
    assert!(batch.standardized, "windows must be standardized before encoding");
    let n = batch.n_stocks();
    let d = batch.channels();
    let m = p.width();
    let mut h = Mat::zeros(n, m);
    let mut steps = Vec::with_capacity(batch.lookback);
    for tstep in 0..batch.lookback {
        let mut x = Mat::zeros(n, d);
        for i in 0..n {
            let row = batch.windows.row(i);
            x.row_mut(i).copy_from_slice(&row[tstep * d..(tstep + 1) * d]);
        }
        let mut r = gate_forward(&x, &p.wr, &h, &p.ur, &p.br);
        for v in r.data_mut() {
            *v = sigmoid(*v);
        }
        let mut u = gate_forward(&x, &p.wu, &h, &p.uu, &p.bu);
        for v in u.data_mut() {
            *v = sigmoid(*v);
        }
        let mut rh = Mat::zeros(n, m);
        for i in 0..n {
            let (rr, hr) = (r.row(i), h.row(i));
            for (o, (a, b)) in rh.row_mut(i).iter_mut().zip(rr.iter().zip(hr)) {
                *o = a * b;
            }
        }
        let mut nn = gate_forward(&x, &p.wn, &rh, &p.un, &p.bn);
        for v in nn.data_mut() {
            *v = tanh(*v);
        }
        let mut h_next = Mat::zeros(n, m);
        for i in 0..n {
            let (ur_, nr, hr) = (u.row(i), nn.row(i), h.row(i));
            for (o, j) in h_next.row_mut(i).iter_mut().zip(0..m) {
                *o = (1.0 - ur_[j]) * nr[j] + ur_[j] * hr[j];
            }
        }
        steps.push(GruStep {
            x,
            h_prev: h,
            r,
            u,
            n: nn,
            rh,
        });
        h = h_next;
    }
    let out = p.proj.forward(&h);
    (out, GruCache { steps, h_last: h })
}

pub fn gru_backward(dout: &Mat, p: &GruEncoder, cache: &GruCache, grads: &mut GruEncoder) {
    let n = dout.rows();
    let m = p.width();
    let mut dh = Mat::zeros(n, m);
    p.proj
        .backward(&cache.h_last, dout, &mut grads.proj, Some(&mut dh));

    for step in cache.steps.iter().rev() {
        // h' = (1-u)*n + u*h_prev.
        let mut du = Mat::zeros(n, m);
        let mut dn = Mat::zeros(n, m);
        let mut dh_prev = Mat::zeros(n, m);
        for i in 0..n {
            let (dhr, ur, nr, hr) = (
                dh.row(i),
                step.u.row(i),
                step.n.row(i),
                step.h_prev.row(i),
            );
            let dur = du.row_mut(i);
            for j in 0..m {
                dur[j] = dhr[j] * (hr[j] - nr[j]) * ur[j] * (1.0 - ur[j]);
            }
            let dnr = dn.row_mut(i);
            for j in 0..m {
                // Through tanh.
                dnr[j] = dhr[j] * (1.0 - ur[j]) * (1.0 - nr[j] * nr[j]);
            }
            let dpr = dh_prev.row_mut(i);
            for j in 0..m {
                dpr[j] = dhr[j] * ur[j];
            }
        }

        // n pre-activation: x Wn + rh Un + bn.
        matmul_tn_acc(&step.x, &dn, &mut grads.wn);
        matmul_tn_acc(&step.rh, &dn, &mut grads.un);
        for i in 0..n {
            for (g, v) in grads.bn.iter_mut().zip(dn.row(i)) {
                *g += v;
            }
        }
        let mut drh = Mat::zeros(n, m);
        matmul_nt_acc(&dn, &p.un, &mut drh);
        let mut dr = Mat::zeros(n, m);
        for i in 0..n {
            let (drhr, rr, hr) = (drh.row(i), step.r.row(i), step.h_prev.row(i));
            let drr = dr.row_mut(i);
            for j in 0..m {
                // rh = r * h_prev, then through the reset sigmoid.
                drr[j] = drhr[j] * hr[j] * rr[j] * (1.0 - rr[j]);
            }
            let dpr = dh_prev.row_mut(i);
            for j in 0..m {
                dpr[j] += drhr[j] * rr[j];
            }
        }

        // Gate pre-activations: x W + h_prev U + b.
        matmul_tn_acc(&step.x, &du, &mut grads.wu);
        matmul_tn_acc(&step.h_prev, &du, &mut grads.uu);
        matmul_nt_acc(&du, &p.uu, &mut dh_prev);
        matmul_tn_acc(&step.x, &dr, &mut grads.wr);
        matmul_tn_acc(&step.h_prev, &dr, &mut grads.ur);
        matmul_nt_acc(&dr, &p.ur, &mut dh_prev);
        for i in 0..n {
            for (g, v) in grads.bu.iter_mut().zip(du.row(i)) {
                *g += v;
            }
            for (g, v) in grads.br.iter_mut().zip(dr.row(i)) {
                *g += v;
            }
        }
        dh = dh_prev;
    }
}
