//! Minimum resonance gap of the neglected oscillating terms.
//!
//! For a frame index `k` the candidate frequency is
//! `Σ_{j<k} c_j υ_j + a_k υ_k + Σ_{j>k} d_j υ_j` with `c_j ∈ {0, ±1}`,
//! `a_k ∈ {±2}` and `d_j ∈ {0, ±1, ±2, ±3}`. A gap bounded away from zero
//! means no combination of modulation sidebands becomes static.
//!
//! The search is exhaustive. Results are ordered by `|Δ|`, then by `k`,
//! then lexicographically by the coefficient tuple, so the answer does not
//! depend on how the enumeration is split across threads.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOWER_COEFFS: [i8; 3] = [-1, 0, 1];
pub const PIVOT_COEFFS: [i8; 2] = [-2, 2];
pub const UPPER_COEFFS: [i8; 7] = [-3, -2, -1, 0, 1, 2, 3];

/// One point of the coefficient lattice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapAssignment {
    /// Pivot frame, 1-based.
    pub k: usize,
    /// Full coefficient tuple, one entry per modulation frequency.
    pub coeffs: Vec<i8>,
}

impl GapAssignment {
    pub fn lower(&self) -> &[i8] {
        &self.coeffs[..self.k - 1]
    }

    pub fn pivot(&self) -> i8 {
        self.coeffs[self.k - 1]
    }

    pub fn upper(&self) -> &[i8] {
        &self.coeffs[self.k..]
    }

    /// Signed frequency `Δ` of this assignment.
    pub fn delta(&self, upsilon: &[f64]) -> f64 {
        lattice_value(&self.coeffs, upsilon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub delta_min: f64,
    pub assignment: GapAssignment,
    pub near_threshold: f64,
    pub near_resonances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub assignment: GapAssignment,
    pub delta: f64,
}

fn lattice_value(coeffs: &[i8], upsilon: &[f64]) -> f64 {
    coeffs
        .iter()
        .zip(upsilon)
        .fold(0.0, |acc, (&c, &u)| acc + f64::from(c) * u)
}

fn validate(upsilon: &[f64]) -> Result<()> {
    if upsilon.is_empty() {
        return Err(Error::invalid("upsilon", "empty frequency list"));
    }
    if upsilon.iter().any(|u| !(u.is_finite() && *u > 0.0)) {
        return Err(Error::invalid("upsilon", "frequencies must be positive"));
    }
    if upsilon.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("upsilon", "frequencies must strictly decrease"));
    }
    Ok(())
}

/// Coefficient choices for pivot `k` (1-based) in an `n`-frame lattice.
fn choices(n: usize, k: usize) -> Vec<&'static [i8]> {
    (1..=n)
        .map(|j| match j.cmp(&k) {
            Ordering::Less => &LOWER_COEFFS[..],
            Ordering::Equal => &PIVOT_COEFFS[..],
            Ordering::Greater => &UPPER_COEFFS[..],
        })
        .collect()
}

/// Visits every tuple for pivot `k` in lexicographic order.
fn for_each_tuple(upsilon: &[f64], k: usize, mut visit: impl FnMut(&[i8], f64)) {
    let sets = choices(upsilon.len(), k);
    let mut idx = vec![0usize; sets.len()];
    let mut tuple: Vec<i8> = sets.iter().map(|s| s[0]).collect();
    loop {
        visit(&tuple, lattice_value(&tuple, upsilon));
        // odometer, last position fastest
        let mut pos = sets.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < sets[pos].len() {
                tuple[pos] = sets[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            tuple[pos] = sets[pos][0];
        }
    }
}

struct Best {
    abs: f64,
    k: usize,
    coeffs: Vec<i8>,
    below: usize,
}

fn better(a: &Best, b: &Best) -> bool {
    match a.abs.total_cmp(&b.abs) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => (a.k, &a.coeffs) < (b.k, &b.coeffs),
    }
}

/// Smallest `|Δ|` over the full lattice, with a count of lattice points
/// whose `|Δ|` is strictly below `threshold`.
pub fn min_gap_with_threshold(upsilon: &[f64], threshold: f64) -> Result<GapResult> {
    validate(upsilon)?;
    let n = upsilon.len();
    let best = (1..=n)
        .into_par_iter()
        .map(|k| {
            let mut best: Option<Best> = None;
            let mut below = 0usize;
            for_each_tuple(upsilon, k, |tuple, delta| {
                let abs = delta.abs();
                if abs < threshold {
                    below += 1;
                }
                // enumeration is already (k, lex) ordered: strict improvement only
                if best.as_ref().is_none_or(|b| abs < b.abs) {
                    best = Some(Best {
                        abs,
                        k,
                        coeffs: tuple.to_vec(),
                        below: 0,
                    });
                }
            });
            let mut best = best.expect("every pivot has at least one tuple");
            best.below = below;
            best
        })
        .reduce_with(|a, b| {
            let below = a.below + b.below;
            let mut keep = if better(&a, &b) { a } else { b };
            keep.below = below;
            keep
        })
        .expect("non-empty upsilon");

    Ok(GapResult {
        delta_min: best.abs,
        assignment: GapAssignment {
            k: best.k,
            coeffs: best.coeffs,
        },
        near_threshold: threshold,
        near_resonances: best.below,
    })
}

pub fn min_gap(upsilon: &[f64]) -> Result<GapResult> {
    min_gap_with_threshold(upsilon, 0.0)
}

/// Every lattice point with `|Δ| < threshold`, in `(k, lexicographic)` order.
pub fn gap_report(upsilon: &[f64], threshold: f64) -> Result<Vec<GapEntry>> {
    validate(upsilon)?;
    let per_k: Vec<Vec<GapEntry>> = (1..=upsilon.len())
        .into_par_iter()
        .map(|k| {
            let mut found = Vec::new();
            for_each_tuple(upsilon, k, |tuple, delta| {
                if delta.abs() < threshold {
                    found.push(GapEntry {
                        assignment: GapAssignment {
                            k,
                            coeffs: tuple.to_vec(),
                        },
                        delta,
                    });
                }
            });
            found
        })
        .collect();
    Ok(per_k.into_iter().flatten().collect())
}

/// Number of lattice points for `n` frames.
pub fn lattice_size(n: usize) -> usize {
    (1..=n)
        .map(|k| 3usize.pow(k as u32 - 1) * 2 * 7usize.pow((n - k) as u32))
        .sum()
}
