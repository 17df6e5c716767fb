//! Two-sided Mann–Whitney U test and order statistics.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::{Error, Result};

/// Largest `n1 * n2` for which the exact null distribution is enumerated.
pub const EXACT_LIMIT: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Exact permutation distribution (no ties).
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample: pairs `(a, b)` with `a > b`, ties
    /// counting one half.
    pub u: f64,
    pub n1: usize,
    pub n2: usize,
    pub p_value: f64,
    pub method: Method,
}

pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Degenerate("median of an empty sample"));
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Ok(if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    })
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let rank = 0.5 * ((start + 1) + end) as f64;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

/// Counts of `U = 0..=n1*n2` over all `C(n1 + n2, n1)` arrangements: the
/// coefficients of the Gaussian binomial `[n1 + n2, n1]_q`.
fn exact_counts(n1: usize, n2: usize) -> Vec<i128> {
    let len = n1 * n2 + 1;
    let mut c = vec![0i128; len];
    c[0] = 1;
    for i in 1..=n1 {
        // multiply by (1 - q^(n2 + i)), then divide by (1 - q^i)
        let m = n2 + i;
        for k in (m..len).rev() {
            c[k] -= c[k - m];
        }
        for k in i..len {
            c[k] += c[k - i];
        }
    }
    c
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Degenerate("rank test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::Degenerate("rank test input contains NaN"));
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let prod = n1 * n2;

    if ties.is_empty() && prod <= EXACT_LIMIT {
        let counts = exact_counts(n1, n2);
        let total: i128 = counts.iter().sum();
        let u_int = libm::round(u) as usize;
        let lower: i128 = counts[..=u_int].iter().sum();
        let upper: i128 = counts[u_int..].iter().sum();
        let tail = lower.min(upper) as f64 / total as f64;
        return Ok(MannWhitney {
            u,
            n1,
            n2,
            p_value: (2.0 * tail).min(1.0),
            method: Method::Exact,
        });
    }

    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = prod as f64 / 12.0 * ((n + 1.0) - tie_term);
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let dev = (libm::fabs(u - prod as f64 / 2.0) - 0.5).max(0.0);
        let z = dev / sqrt(var);
        libm::erfc(z / core::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney {
        u,
        n1,
        n2,
        p_value,
        method: Method::Normal,
    })
}
