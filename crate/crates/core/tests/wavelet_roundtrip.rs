//! Round-trip checks of the periodized analysis bank against the independent
//! synthesis operator in gamestock-oracle. Reconstruction must be exact for
//! every length; energy and coefficient count are conserved exactly when all
//! cascade stages see even lengths.

use gamestock_core::rng::Rng;
use gamestock_core::wavelet::{dwt_decompose_1d, BoundaryMode, WaveletKind};

const KINDS: [WaveletKind; 3] = [WaveletKind::Db1, WaveletKind::Db2, WaveletKind::Db4];

fn roundtrip(x: &[f64], kind: WaveletKind, level: usize) -> Vec<f64> {
    let c = dwt_decompose_1d(x, kind, level, BoundaryMode::Periodization).unwrap();
    // Oracle wants details deepest-first.
    let details: Vec<Vec<f64>> = c.detail[0].iter().rev().cloned().collect();
    gamestock_oracle::reconstruct(&c.approx[0], &details, &c.input_lens, kind.name())
}

#[test]
fn reconstruction_is_exact_for_divisible_lengths() {
    let mut rng = Rng::new(11);
    for kind in KINDS {
        for level in 1..=3usize {
            for rep in 0..20 {
                let len = (1 << level) * (2 + rep % 6);
                let x: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
                let y = roundtrip(&x, kind, level);
                assert_eq!(y.len(), x.len());
                let err = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-10, "{kind:?} level {level} len {len}: err {err}");
            }
        }
    }
}

#[test]
fn reconstruction_is_exact_for_odd_intermediate_lengths() {
    let mut rng = Rng::new(12);
    // Lengths chosen so some cascade stage is odd, including the pipeline's
    // own 20 -> 10 -> 5 case.
    for kind in KINDS {
        for &(len, level) in &[(20usize, 3usize), (17, 1), (21, 2), (50, 3), (27, 3)] {
            let x: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
            let y = roundtrip(&x, kind, level);
            assert_eq!(y.len(), x.len());
            let err = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "{kind:?} level {level} len {len}: err {err}");
        }
    }
}

#[test]
fn energy_matches_oracle_energy_for_even_cascades() {
    let mut rng = Rng::new(13);
    for kind in KINDS {
        for level in 1..=3usize {
            let len = 8 << level;
            let x: Vec<f64> = (0..len).map(|_| rng.normal() * 3.0).collect();
            let c = dwt_decompose_1d(&x, kind, level, BoundaryMode::Periodization).unwrap();
            let ex = gamestock_oracle::energy(&x);
            let ec = c.channel_energy(0);
            assert!(
                (ex - ec).abs() < 1e-8 * ex.max(1.0),
                "{kind:?} level {level}: {ex} vs {ec}"
            );
        }
    }
}

#[test]
fn filter_tables_agree_with_oracle_tables() {
    for kind in KINDS {
        let lo = kind.dec_lo();
        let reference = gamestock_oracle::dec_lo(kind.name());
        assert_eq!(lo.len(), reference.len());
        for (a, b) in lo.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
