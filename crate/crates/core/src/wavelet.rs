//! Cascade filter-bank decomposition of lookback windows.
//!
//! The analysis convention is y[k] = sum_m f[m] * x[(2k+1-m) mod n], with
//! quadrature-mirror high-pass taps hi[m] = (-1)^(m+1) * lo[F-1-m]. Under
//! periodization every step is an orthogonal map for even input lengths, so
//! the transform conserves energy and inverts exactly; odd intermediate
//! lengths are handled by repeating the last sample before the step, which
//! keeps the inverse exact but adds one coefficient. Symmetric half-sample
//! extension is available as an alternative boundary; it is redundant rather
//! than orthogonal and exists for feature extraction only.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WaveletKind {
    Db1,
    Db2,
    Db4,
}

// Decomposition low-pass taps. db1/db2 have closed forms; db4 taps are the
// standard published table for the 4-vanishing-moment Daubechies filter.
const SQRT_2: f64 = core::f64::consts::SQRT_2;
const SQRT_3: f64 = 1.732050807568877293527446341505872367_f64;

const DB1_LO: [f64; 2] = [1.0 / SQRT_2, 1.0 / SQRT_2];
const DB2_LO: [f64; 4] = [
    (1.0 - SQRT_3) / (4.0 * SQRT_2),
    (3.0 - SQRT_3) / (4.0 * SQRT_2),
    (3.0 + SQRT_3) / (4.0 * SQRT_2),
    (1.0 + SQRT_3) / (4.0 * SQRT_2),
];
const DB4_LO: [f64; 8] = [
    -0.010597401784997278,
    0.032883011666982945,
    0.030841381835986965,
    -0.18703481171888114,
    -0.027983769416983849,
    0.63088076792959036,
    0.71484657055254153,
    0.23037781330885523,
];

impl WaveletKind {
    pub fn from_name(name: &str) -> Result<Self, WaveletError> {
        match name {
            "db1" => Ok(WaveletKind::Db1),
            "db2" => Ok(WaveletKind::Db2),
            "db4" => Ok(WaveletKind::Db4),
            other => Err(WaveletError::UnknownWavelet(String::from(other))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WaveletKind::Db1 => "db1",
            WaveletKind::Db2 => "db2",
            WaveletKind::Db4 => "db4",
        }
    }

    pub fn dec_lo(&self) -> &'static [f64] {
        match self {
            WaveletKind::Db1 => &DB1_LO,
            WaveletKind::Db2 => &DB2_LO,
            WaveletKind::Db4 => &DB4_LO,
        }
    }

    pub fn dec_hi(&self) -> Vec<f64> {
        let lo = self.dec_lo();
        let f = lo.len();
        (0..f)
            .map(|m| {
                let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
                sign * lo[f - 1 - m]
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundaryMode {
    Periodization,
    Symmetric,
}

impl BoundaryMode {
    pub fn from_name(name: &str) -> Result<Self, WaveletError> {
        match name {
            "periodization" => Ok(BoundaryMode::Periodization),
            "symmetric" => Ok(BoundaryMode::Symmetric),
            other => Err(WaveletError::UnknownBoundary(String::from(other))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundaryMode::Periodization => "periodization",
            BoundaryMode::Symmetric => "symmetric",
        }
    }
}

#[derive(Debug, PartialEq)]
pub enum WaveletError {
    UnknownWavelet(String),
    UnknownBoundary(String),
    EmptySignal,
    LevelZero,
    /// Requested depth leaves a sub-band shorter than one coefficient.
    TooDeep { len: usize, level: usize, max_level: usize },
}

impl core::fmt::Display for WaveletError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            WaveletError::UnknownWavelet(n) => write!(f, "unknown wavelet {n:?} (expected db1, db2, or db4)"),
            WaveletError::UnknownBoundary(n) => {
                write!(f, "unknown boundary mode {n:?} (expected periodization or symmetric)")
            }
            WaveletError::EmptySignal => write!(f, "cannot decompose an empty signal"),
            WaveletError::LevelZero => write!(f, "decomposition level must be at least 1"),
            WaveletError::TooDeep { len, level, max_level } => write!(
                f,
                "level {level} too deep for length {len}: sub-band would be shorter than 1 (max level {max_level})"
            ),
        }
    }
}

/// Deepest level allowed for a length-`len` signal: floor(log2 len).
pub fn max_level(len: usize) -> usize {
    let mut l = 0;
    let mut n = len;
    while n >= 2 {
        n /= 2;
        l += 1;
    }
    l
}

/// One analysis step. Odd-length inputs are extended by repeating the last
/// sample so the decimated outputs have ceil(n/2) coefficients each.
pub fn dwt_step(x: &[f64], kind: WaveletKind, boundary: BoundaryMode) -> (Vec<f64>, Vec<f64>) {
    match boundary {
        BoundaryMode::Periodization => step_periodized(x, kind),
        BoundaryMode::Symmetric => step_symmetric(x, kind),
    }
}

fn step_periodized(x: &[f64], kind: WaveletKind) -> (Vec<f64>, Vec<f64>) {
    let lo = kind.dec_lo();
    let hi = kind.dec_hi();
    let n = x.len();
    let ne = if n % 2 == 0 { n } else { n + 1 };
    let sample = |i: isize| -> f64 {
        let j = i.rem_euclid(ne as isize) as usize;
        if j < n {
            x[j]
        } else {
            x[n - 1]
        }
    };
    let half = ne / 2;
    let mut ca = vec![0.0; half];
    let mut cd = vec![0.0; half];
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for m in 0..lo.len() {
            let v = sample(2 * k as isize + 1 - m as isize);
            a += lo[m] * v;
            d += hi[m] * v;
        }
        ca[k] = a;
        cd[k] = d;
    }
    (ca, cd)
}

fn step_symmetric(x: &[f64], kind: WaveletKind) -> (Vec<f64>, Vec<f64>) {
    let lo = kind.dec_lo();
    let hi = kind.dec_hi();
    let n = x.len() as isize;
    // Half-sample reflection: ..., x1, x0 | x0, x1, ..., x(n-1) | x(n-1), ...
    let sample = |mut i: isize| -> f64 {
        loop {
            if i < 0 {
                i = -1 - i;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return x[i as usize];
            }
        }
    };
    let f = lo.len() as isize;
    let out_len = (x.len() + lo.len() - 1) / 2;
    let mut ca = vec![0.0; out_len];
    let mut cd = vec![0.0; out_len];
    for k in 0..out_len as isize {
        let mut a = 0.0;
        let mut d = 0.0;
        for m in 0..f {
            let v = sample(2 * k + 1 - m);
            a += lo[m as usize] * v;
            d += hi[m as usize] * v;
        }
        ca[k as usize] = a;
        cd[k as usize] = d;
    }
    (ca, cd)
}

/// Multi-level coefficients for one lookback window (rows = time, cols =
/// channels). `input_lens[k]` records the signal length fed into level k+1,
/// which the inverse needs to trim periodized odd-length extensions.
#[derive(Clone, Debug)]
pub struct WaveletCoeffs {
    pub kind: WaveletKind,
    pub boundary: BoundaryMode,
    pub level: usize,
    /// Approximation at the deepest level, per channel.
    pub approx: Vec<Vec<f64>>,
    /// detail[ch][k] holds level k+1 detail coefficients for that channel.
    pub detail: Vec<Vec<Vec<f64>>>,
    pub input_lens: Vec<usize>,
}

impl WaveletCoeffs {
    pub fn channels(&self) -> usize {
        self.approx.len()
    }

    /// Coefficient count for one channel, all sub-bands together.
    pub fn total_count(&self) -> usize {
        self.approx[0].len() + self.detail[0].iter().map(Vec::len).sum::<usize>()
    }

    pub fn channel_energy(&self, ch: usize) -> f64 {
        let sq = |xs: &[f64]| xs.iter().map(|x| x * x).sum::<f64>();
        sq(&self.approx[ch]) + self.detail[ch].iter().map(|d| sq(d)).sum::<f64>()
    }
}

/// Decomposes every channel of a window to `level` scales.
pub fn dwt_decompose(
    window: &Mat,
    kind: WaveletKind,
    level: usize,
    boundary: BoundaryMode,
) -> Result<WaveletCoeffs, WaveletError> {
    let len = window.rows();
    if len == 0 || window.cols() == 0 {
        return Err(WaveletError::EmptySignal);
    }
    if level == 0 {
        return Err(WaveletError::LevelZero);
    }
    let channels = window.cols();
    let mut approx = Vec::with_capacity(channels);
    let mut detail = Vec::with_capacity(channels);
    let mut input_lens = Vec::new();
    for ch in 0..channels {
        let mut cur: Vec<f64> = (0..len).map(|t| window.at(t, ch)).collect();
        let mut per_level = Vec::with_capacity(level);
        for _ in 0..level {
            if cur.len() < 2 {
                return Err(WaveletError::TooDeep {
                    len,
                    level,
                    max_level: max_level(len),
                });
            }
            if ch == 0 {
                input_lens.push(cur.len());
            }
            let (ca, cd) = dwt_step(&cur, kind, boundary);
            per_level.push(cd);
            cur = ca;
        }
        approx.push(cur);
        detail.push(per_level);
    }
    Ok(WaveletCoeffs {
        kind,
        boundary,
        level,
        approx,
        detail,
        input_lens,
    })
}

/// Single-channel convenience wrapper.
pub fn dwt_decompose_1d(
    x: &[f64],
    kind: WaveletKind,
    level: usize,
    boundary: BoundaryMode,
) -> Result<WaveletCoeffs, WaveletError> {
    let col = Mat::from_vec(x.len(), 1, x.to_vec());
    dwt_decompose(&col, kind, level, boundary)
}

/// Per-window summary consumed by the temporal encoder: max over time of each
/// detail sub-band and mean over time of the deepest approximation.
#[derive(Clone, Debug)]
pub struct PooledFeatures {
    /// level x channels.
    pub detail_max: Mat,
    /// channels.
    pub approx_mean: Vec<f64>,
}

pub fn pool_features(c: &WaveletCoeffs) -> PooledFeatures {
    let channels = c.channels();
    let mut detail_max = Mat::zeros(c.level, channels);
    for ch in 0..channels {
        for k in 0..c.level {
            let m = c.detail[ch][k]
                .iter()
                .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            detail_max.set(k, ch, m);
        }
    }
    let approx_mean = (0..channels)
        .map(|ch| {
            let a = &c.approx[ch];
            a.iter().sum::<f64>() / a.len() as f64
        })
        .collect();
    PooledFeatures {
        detail_max,
        approx_mean,
    }
}

pub fn format_levels(c: &WaveletCoeffs) -> String {
    format!(
        "{} level {} ({}), {} coefficients/channel",
        c.kind.name(),
        c.level,
        c.boundary.name(),
        c.total_count()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decompose1(x: &[f64], kind: WaveletKind, level: usize) -> WaveletCoeffs {
        dwt_decompose_1d(x, kind, level, BoundaryMode::Periodization).unwrap()
    }

    #[test]
    fn haar_level1_matches_hand_values() {
        let c = decompose1(&[1.0, 2.0, 3.0, 4.0], WaveletKind::Db1, 1);
        let want_ca = [2.121320343559643, 4.949747468305833];
        let want_cd = [-0.7071067811865476, -0.7071067811865476];
        for (got, want) in c.approx[0].iter().zip(want_ca) {
            assert!((got - want).abs() < 1e-9, "cA got {got} want {want}");
        }
        for (got, want) in c.detail[0][0].iter().zip(want_cd) {
            assert!((got - want).abs() < 1e-9, "cD got {got} want {want}");
        }
    }

    #[test]
    fn filters_are_orthonormal_qmf_pairs() {
        for kind in [WaveletKind::Db1, WaveletKind::Db2, WaveletKind::Db4] {
            let lo = kind.dec_lo();
            let hi = kind.dec_hi();
            assert!((lo.iter().sum::<f64>() - SQRT_2).abs() < 1e-12, "{kind:?} lo sum");
            assert!((lo.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(hi.iter().sum::<f64>().abs() < 1e-12, "{kind:?} hi sum");
            for shift in 1..lo.len() / 2 {
                let acc: f64 = (0..lo.len() - 2 * shift)
                    .map(|m| lo[m] * lo[m + 2 * shift])
                    .sum();
                assert!(acc.abs() < 1e-12, "{kind:?} even-shift autocorrelation");
            }
            let cross: f64 = lo.iter().zip(hi.iter()).map(|(a, b)| a * b).sum();
            assert!(cross.abs() < 1e-12, "{kind:?} lo/hi orthogonality");
        }
    }

    #[test]
    fn constant_signals_have_zero_detail() {
        for kind in [WaveletKind::Db1, WaveletKind::Db2, WaveletKind::Db4] {
            for boundary in [BoundaryMode::Periodization, BoundaryMode::Symmetric] {
                let x = vec![3.25; 32];
                let c = dwt_decompose_1d(&x, kind, 3, boundary).unwrap();
                for d in &c.detail[0] {
                    for &v in d {
                        assert!(v.abs() < 1e-12, "{kind:?} {boundary:?} detail {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn periodized_even_lengths_conserve_count_and_energy() {
        let mut rng = crate::rng::Rng::new(5);
        for kind in [WaveletKind::Db1, WaveletKind::Db2, WaveletKind::Db4] {
            for level in 1..=3usize {
                let len = 8 * (1 << level);
                let x: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
                let c = dwt_decompose_1d(&x, kind, level, BoundaryMode::Periodization).unwrap();
                assert_eq!(c.total_count(), len, "{kind:?} level {level}");
                let ex: f64 = x.iter().map(|v| v * v).sum();
                assert!((c.channel_energy(0) - ex).abs() < 1e-8 * ex.max(1.0));
            }
        }
    }

    #[test]
    fn odd_intermediate_lengths_extend_to_ceil_halves() {
        // 20 -> 10 -> 5 -> 3 under repeated halving with odd extension.
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = dwt_decompose_1d(&x, WaveletKind::Db4, 3, BoundaryMode::Periodization).unwrap();
        assert_eq!(c.input_lens, vec![20, 10, 5]);
        assert_eq!(c.detail[0][0].len(), 10);
        assert_eq!(c.detail[0][1].len(), 5);
        assert_eq!(c.detail[0][2].len(), 3);
        assert_eq!(c.approx[0].len(), 3);
    }

    #[test]
    fn too_deep_reports_max_level() {
        let x = vec![1.0; 8];
        let err = dwt_decompose_1d(&x, WaveletKind::Db1, 4, BoundaryMode::Periodization).unwrap_err();
        assert_eq!(
            err,
            WaveletError::TooDeep {
                len: 8,
                level: 4,
                max_level: 3
            }
        );
        assert!(dwt_decompose_1d(&x, WaveletKind::Db1, 3, BoundaryMode::Periodization).is_ok());
    }

    #[test]
    fn level_zero_and_empty_are_rejected() {
        assert_eq!(
            dwt_decompose_1d(&[1.0, 2.0], WaveletKind::Db1, 0, BoundaryMode::Periodization).unwrap_err(),
            WaveletError::LevelZero
        );
        assert_eq!(
            dwt_decompose_1d(&[], WaveletKind::Db1, 1, BoundaryMode::Periodization).unwrap_err(),
            WaveletError::EmptySignal
        );
    }

    #[test]
    fn symmetric_output_lengths_match_half_of_extended() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let (ca, cd) = dwt_step(&x, WaveletKind::Db4, BoundaryMode::Symmetric);
        assert_eq!(ca.len(), (20 + 8 - 1) / 2);
        assert_eq!(cd.len(), ca.len());
    }

    #[test]
    fn symmetric_interior_matches_periodized_interior() {
        // Away from the boundary the two modes see the same samples.
        let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).cos() * (1.0 + i as f64 * 0.01)).collect();
        let (pa, _) = dwt_step(&x, WaveletKind::Db2, BoundaryMode::Periodization);
        let (sa, _) = dwt_step(&x, WaveletKind::Db2, BoundaryMode::Symmetric);
        // Same index convention; they differ only where the filter crosses
        // the boundary (k = 0 here for a 4-tap filter on length 32).
        for k in 1..=15 {
            let diff = (sa[k] - pa[k]).abs();
            assert!(diff < 1e-10, "k {k} diff {diff}");
        }
    }

    #[test]
    fn pooling_takes_max_and_mean() {
        let w = Mat::from_rows(&[
            vec![1.0, 10.0],
            vec![2.0, -3.0],
            vec![0.5, 4.0],
            vec![-1.0, 2.0],
        ]);
        let c = dwt_decompose(&w, WaveletKind::Db1, 1, BoundaryMode::Periodization).unwrap();
        let p = pool_features(&c);
        assert_eq!(p.detail_max.rows(), 1);
        assert_eq!(p.detail_max.cols(), 2);
        for ch in 0..2 {
            let want_max = c.detail[ch][0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(p.detail_max.at(0, ch), want_max);
            let want_mean = c.approx[ch].iter().sum::<f64>() / c.approx[ch].len() as f64;
            assert!((p.approx_mean[ch] - want_mean).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_names_error() {
        assert!(WaveletKind::from_name("db3").is_err());
        assert!(BoundaryMode::from_name("zero").is_err());
    }
}
