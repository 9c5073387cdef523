//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped and tied |d| share midranks. For up to
//! [`EXACT_LIMIT`] non-zero differences the two-sided p-value is exact: the
//! share of all 2^n sign assignments whose |W⁺ − E[W⁺]| is at least the
//! observed one. Midranks are half-integers, so the null distribution is
//! counted over doubled ranks, which keeps every sum an integer.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    ExactEnumeration,
    /// Normal approximation with continuity and tie correction.
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub n_nonzero: usize,
    /// Zero differences removed before ranking.
    pub zeros_dropped: usize,
    pub w_plus: f64,
    pub p_two_sided: f64,
    pub method: WilcoxonMethod,
}

/// Midranks of `values` (1-based), doubled so ties stay integral.
pub fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1; twice their mean is i+j+2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let zeros_dropped = diffs.len() - nonzero.len();
    let n = nonzero.len();
    if n == 0 {
        return Err(EvalError::DegenerateSample);
    }
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&magnitudes);
    let w2: u64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let w_plus = w2 as f64 / 2.0;

    let (p, method) = if n <= EXACT_LIMIT {
        (exact_p(&ranks, w2), WilcoxonMethod::ExactEnumeration)
    } else {
        (normal_p(&magnitudes, w_plus), WilcoxonMethod::NormalApprox)
    };
    Ok(WilcoxonResult {
        n_nonzero: n,
        zeros_dropped,
        w_plus,
        p_two_sided: p.clamp(f64::MIN_POSITIVE, 1.0),
        method,
    })
}

/// Count sign assignments by doubled W⁺ with a subset-sum table.
fn exact_p(ranks: &[u64], observed: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    // |W - total/2| >= |obs - total/2|, all in doubled units
    let dev = |s: u64| (2 * s).abs_diff(total);
    let threshold = dev(observed);
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| dev(*s as u64) >= threshold)
        .map(|(_, c)| c)
        .sum();
    extreme as f64 / (1u64 << ranks.len()) as f64
}

fn normal_p(magnitudes: &[f64], w_plus: f64) -> f64 {
    let n = magnitudes.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_five() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p_two_sided, 0.0625);
        assert_eq!(r.method, WilcoxonMethod::ExactEnumeration);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        assert_eq!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap_err(),
            EvalError::DegenerateSample
        );
    }

    #[test]
    fn swap_symmetry() {
        let a = [3.1, 2.0, 5.5, 1.0, 4.2, 0.3];
        let b = [1.0, 2.5, 2.0, 1.0, 4.0, 1.3];
        let x = wilcoxon_signed_rank(&a, &b).unwrap();
        let y = wilcoxon_signed_rank(&b, &a).unwrap();
        let n = x.n_nonzero as f64;
        assert_eq!(x.p_two_sided, y.p_two_sided);
        assert_eq!(y.w_plus, n * (n + 1.0) / 2.0 - x.w_plus);
        assert_eq!(x.zeros_dropped, 1);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(doubled_midranks(&[1.0, 2.0, 2.0, 3.0]), vec![2, 5, 5, 8]);
    }

    #[test]
    fn large_sample_uses_normal_approximation() {
        let a: Vec<f64> = (1..=30).map(f64::from).collect();
        let r = wilcoxon_signed_rank(&a, &vec![0.0; 30]).unwrap();
        assert_eq!(r.method, WilcoxonMethod::NormalApprox);
        assert!(r.p_two_sided < 1e-5);
        let mixed: Vec<f64> = (1..=30).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) }).collect();
        let r = wilcoxon_signed_rank(&mixed, &vec![0.0; 30]).unwrap();
        assert!(r.p_two_sided > 0.5);
    }
}
