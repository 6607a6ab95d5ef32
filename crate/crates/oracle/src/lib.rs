//! Reference implementations used by the gamestock test suites.
//!
//! Everything in this crate is written directly from textbook definitions and
//! deliberately shares no code with the crates under test: wavelet synthesis
//! is the adjoint of the periodized analysis operator, equilibrium checks
//! enumerate every deviation, and correlations use the plain sum formulas.
//! Keep it dependency-free so a bug in the main crates cannot leak in here.

/// Decomposition low-pass taps for the supported orthonormal wavelets,
/// ordered so that cA\[k\] = sum_m lo\[m\] * x\[(2k+1-m) mod n\].
pub fn dec_lo(name: &str) -> Vec<f64> {
    let s2 = 2.0_f64.sqrt();
    let s3 = 3.0_f64.sqrt();
    match name {
        "db1" => vec![1.0 / s2, 1.0 / s2],
        "db2" => vec![
            (1.0 - s3) / (4.0 * s2),
            (3.0 - s3) / (4.0 * s2),
            (3.0 + s3) / (4.0 * s2),
            (1.0 + s3) / (4.0 * s2),
        ],
        "db4" => vec![
            -0.010597401784997278,
            0.032883011666982945,
            0.030841381835986965,
            -0.18703481171888114,
            -0.027983769416983849,
            0.63088076792959036,
            0.71484657055254153,
            0.23037781330885523,
        ],
        other => panic!("unsupported wavelet {other}"),
    }
}

/// Quadrature-mirror high-pass taps for the same convention.
pub fn dec_hi(name: &str) -> Vec<f64> {
    let lo = dec_lo(name);
    let f = lo.len();
    (0..f)
        .map(|m| {
            let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
            sign * lo[f - 1 - m]
        })
        .collect()
}

/// One periodized synthesis step: the adjoint of
/// y\[k\] = sum_m f\[m\] * x\[(2k+1-m) mod n\], trimmed to `out_len`.
///
/// `out_len` may be one less than 2*ca.len() when the analysis side extended
/// an odd-length input by repeating its last sample; the adjoint then
/// reconstructs the extended signal and the trim drops the duplicate.
pub fn idwt_step(ca: &[f64], cd: &[f64], name: &str, out_len: usize) -> Vec<f64> {
    assert_eq!(ca.len(), cd.len(), "sub-band lengths must match");
    let lo = dec_lo(name);
    let hi = dec_hi(name);
    let n = 2 * ca.len();
    assert!(out_len == n || out_len + 1 == n, "bad target length");
    let mut ext = vec![0.0; n];
    for k in 0..ca.len() {
        for m in 0..lo.len() {
            let j = (2 * k as isize + 1 - m as isize).rem_euclid(n as isize) as usize;
            ext[j] += lo[m] * ca[k] + hi[m] * cd[k];
        }
    }
    // When the analysis side extended an odd input by repeating its last
    // sample, the adjoint reproduces the extended signal exactly; the
    // duplicate slot is simply dropped.
    ext.truncate(out_len);
    ext
}

/// Full multi-level inverse: `details` ordered deepest level first,
/// `lens[k]` the analysis input length at level k+1 (lens[0] = original L).
pub fn reconstruct(approx: &[f64], details: &[Vec<f64>], lens: &[usize], name: &str) -> Vec<f64> {
    assert_eq!(details.len(), lens.len(), "one input length per level");
    let mut cur = approx.to_vec();
    for (i, cd) in details.iter().enumerate() {
        let out_len = lens[lens.len() - 1 - i];
        cur = idwt_step(&cur, cd, name, out_len);
    }
    cur
}

pub fn energy(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum()
}

/// Payoff of player `p` in profile `a` given realized return `r`:
/// own action times return plus the follow term over the other players.
pub fn payoff(a: [i8; 3], p: usize, r: f64, lambda: f64, beta: &[[f64; 3]; 3]) -> f64 {
    let own = a[p] as f64;
    let mut follow = 0.0;
    for q in 0..3 {
        if q != p {
            follow += beta[p][q] * a[q] as f64;
        }
    }
    own * r + lambda * own * follow
}

const ACTIONS: [i8; 3] = [-1, 0, 1];

pub fn all_profiles() -> Vec<[i8; 3]> {
    let mut out = Vec::with_capacity(27);
    for &x in &ACTIONS {
        for &y in &ACTIONS {
            for &z in &ACTIONS {
                out.push([x, y, z]);
            }
        }
    }
    out
}

/// Pure equilibria by exhaustive weak-deviation check: 27 profiles, 3 players,
/// every alternative action.
pub fn nash_pure_set(r: f64, lambda: f64, beta: &[[f64; 3]; 3]) -> Vec<[i8; 3]> {
    let mut out = Vec::new();
    'profiles: for a in all_profiles() {
        for p in 0..3 {
            let here = payoff(a, p, r, lambda, beta);
            for &alt in &ACTIONS {
                let mut dev = a;
                dev[p] = alt;
                if payoff(dev, p, r, lambda, beta) > here {
                    continue 'profiles;
                }
            }
        }
        out.push(a);
    }
    out
}

/// Sum over players of (best deviation payoff - current payoff).
pub fn total_regret(a: [i8; 3], r: f64, lambda: f64, beta: &[[f64; 3]; 3]) -> f64 {
    let mut total = 0.0;
    for p in 0..3 {
        let here = payoff(a, p, r, lambda, beta);
        let mut best = f64::NEG_INFINITY;
        for &alt in &ACTIONS {
            let mut dev = a;
            dev[p] = alt;
            best = best.max(payoff(dev, p, r, lambda, beta));
        }
        total += best - here;
    }
    total
}

pub fn min_total_regret(r: f64, lambda: f64, beta: &[[f64; 3]; 3]) -> f64 {
    all_profiles()
        .into_iter()
        .map(|a| total_regret(a, r, lambda, beta))
        .fold(f64::INFINITY, f64::min)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with the n-1 denominator.
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Plain-sum Pearson correlation; None when either side has no variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Midranks: ties get the average of the positions they span (1-based).
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&midranks(xs), &midranks(ys))
}

/// Central-difference gradient over an externally stored parameter vector.
/// `h_scale` is multiplied by max(1, |theta|) per coordinate.
pub fn fd_gradient(
    n: usize,
    mut get: impl FnMut(usize) -> f64,
    mut set: impl FnMut(usize, f64),
    mut eval: impl FnMut() -> f64,
    h_scale: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let theta = get(i);
        let h = h_scale * theta.abs().max(1.0);
        set(i, theta + h);
        let fp = eval();
        set(i, theta - h);
        let fm = eval();
        set(i, theta);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error with a floor so near-zero pairs compare absolutely.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_synthesis_inverts_known_coefficients() {
        let s2 = 2.0_f64.sqrt();
        let ca = [3.0 / s2, 7.0 / s2];
        let cd = [-1.0 / s2, -1.0 / s2];
        let x = idwt_step(&ca, &cd, "db1", 4);
        for (got, want) in x.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn filter_tables_are_orthonormal_qmf_pairs() {
        for name in ["db1", "db2", "db4"] {
            let lo = dec_lo(name);
            let hi = dec_hi(name);
            let sum: f64 = lo.iter().sum();
            assert!((sum - 2.0_f64.sqrt()).abs() < 1e-10, "{name} sum");
            let norm: f64 = lo.iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-10, "{name} norm");
            let hsum: f64 = hi.iter().sum();
            assert!(hsum.abs() < 1e-10, "{name} hi sum");
            for shift in 1..lo.len() / 2 {
                let acc: f64 = (0..lo.len() - 2 * shift)
                    .map(|m| lo[m] * lo[m + 2 * shift])
                    .sum();
                assert!(acc.abs() < 1e-10, "{name} shift {shift}");
            }
        }
    }

    #[test]
    fn zero_game_has_all_27_profiles_pure() {
        let beta = [[0.0; 3]; 3];
        assert_eq!(nash_pure_set(0.0, 1.0, &beta).len(), 27);
        assert_eq!(min_total_regret(0.0, 1.0, &beta), 0.0);
    }

    #[test]
    fn pearson_and_spearman_hand_values() {
        let p = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let s = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((s + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn fd_gradient_matches_polynomial() {
        use std::cell::RefCell;
        let theta = RefCell::new(vec![0.5, -1.5]);
        // f = x^2 + 3xy, grad = (2x + 3y, 3x).
        let g = fd_gradient(
            2,
            |i| theta.borrow()[i],
            |i, v| theta.borrow_mut()[i] = v,
            || {
                let t = theta.borrow();
                t[0] * t[0] + 3.0 * t[0] * t[1]
            },
            1e-6,
        );
        assert!((g[0] - (2.0 * 0.5 + 3.0 * -1.5)).abs() < 1e-6);
        assert!((g[1] - 3.0 * 0.5).abs() < 1e-6);
    }
}
