//! The predicted rank-density distribution: alpha_d, its generating function
//! F, the partition-sum identity, and Monte Carlo estimation of pi_d(n) over
//! random symbol configurations.

use crate::error::{Error, Result};
use crate::localspaces::TwistFamily;
use crate::selmer::{selmer_rank, selmer_rank_formal, FormalTwistModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Truncation index for the infinite products; the first omitted factor is
/// 1 + 2^{-65}, so the relative truncation error is below 1e-12.
const PRODUCT_TRUNCATION: u32 = 64;

fn product_constant() -> f64 {
    // Π_{j=0}^{64} (1 + 2^{-j})
    let mut p = 1.0f64;
    for j in 0..=PRODUCT_TRUNCATION {
        p *= 1.0 + 0.5f64.powi(j as i32);
    }
    p
}

/// alpha_d: zero for d < 2, and 2^n / (Π_{j=1}^n (2^j - 1) · Π_{j>=0}(1+2^{-j}))
/// for d = n + 2. Evaluated by the stable ratio recurrence
/// alpha_{d+1} = alpha_d · 2/(2^{d-1} - 1), which underflows gracefully.
pub fn alpha(d: u32) -> f64 {
    if d < 2 {
        return 0.0;
    }
    let mut a = 1.0 / product_constant(); // alpha_2
    for k in 2..d {
        a *= 2.0 / (2.0f64.powi(k as i32 - 1) - 1.0);
    }
    a
}

/// Table of alpha_0..alpha_dmax with a bound on the missing tail mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaTable {
    pub dmax: u32,
    pub values: Vec<f64>,
    pub tail_bound: f64,
}

impl AlphaTable {
    pub fn new(dmax: u32) -> AlphaTable {
        let values: Vec<f64> = (0..=dmax).map(alpha).collect();
        // ratio alpha_{d+1}/alpha_d < 2/3 from d >= 3, so a geometric bound
        let tail_bound = 3.0 * alpha(dmax + 1);
        let table = AlphaTable {
            dmax,
            values,
            tail_bound,
        };
        debug_assert!(table.values[0] == 0.0 && table.values.get(1).copied().unwrap_or(0.0) == 0.0);
        debug_assert!(table.partial_sum() <= 1.0 + 1e-12);
        table
    }

    pub fn value(&self, d: u32) -> f64 {
        self.values.get(d as usize).copied().unwrap_or(0.0)
    }

    pub fn partial_sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// alpha_d recomputed as the partition sum: over partitions into exactly
/// d - 2 distinct parts (one part may be 0) of 2^{-|P|}, divided by
/// Π(1 + 2^{-j}). Bounded dynamic programming over parts up to 220; the
/// omitted tail is below 2^{-200}.
pub fn alpha_by_partitions(d: u32) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidArgument(
            "partition form needs d >= 2".into(),
        ));
    }
    let n = (d - 2) as usize;
    const PART_CAP: usize = 220;
    // g[k] = Σ over k distinct parts drawn from {0..=j} of 2^{-sum}
    let mut g = vec![0.0f64; n + 1];
    g[0] = 1.0;
    for j in 0..=PART_CAP {
        let w = 0.5f64.powi(j as i32);
        for k in (1..=n).rev() {
            g[k] += w * g[k - 1];
        }
    }
    Ok(g[n] / product_constant())
}

/// F(x) = Σ alpha_n x^n = x² Π_{j>=0}(1 + 2^{-j} x) / Π_{j>=0}(1 + 2^{-j}),
/// with both products truncated at j = 64. Entire in x; F(-1) is exactly 0
/// because the j = 0 factor vanishes.
pub fn f_eval(x: f64) -> f64 {
    let mut num = x * x;
    for j in 0..=PRODUCT_TRUNCATION {
        num *= 1.0 + 0.5f64.powi(j as i32) * x;
    }
    num / product_constant()
}

/// Monte Carlo estimate of pi_d(n): the rank distribution over uniform
/// symbol configurations on n formal primes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiEstimate {
    pub n: usize,
    pub samples: u64,
    pub seed: u64,
    pub histogram: BTreeMap<u32, u64>,
    pub std_errors: BTreeMap<u32, f64>,
}

impl PiEstimate {
    pub fn fraction(&self, d: u32) -> f64 {
        *self.histogram.get(&d).unwrap_or(&0) as f64 / self.samples as f64
    }

    /// Total-variation distance to the alpha distribution.
    pub fn tv_distance(&self, table: &AlphaTable) -> f64 {
        let dmax = self
            .histogram
            .keys()
            .next_back()
            .copied()
            .unwrap_or(0)
            .max(table.dmax);
        let mut tv = 0.0;
        for d in 0..=dmax {
            tv += (self.fraction(d) - table.value(d)).abs();
        }
        tv / 2.0
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-sample generator: the stream for sample i depends only on (seed, i),
/// so any sharding of the index range reproduces the same histogram.
fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index)))
}

/// Draws `samples` uniform formal twist models on n primes and ranks each.
/// Reproducible given the seed, independent of worker count.
pub fn pi_estimate(
    family: &TwistFamily,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<PiEstimate> {
    if samples < 1 {
        return Err(Error::InvalidArgument("need samples >= 1".into()));
    }
    let table = family.class_table();
    let histogram = (0..samples)
        .into_par_iter()
        .fold(BTreeMap::<u32, u64>::new, |mut acc, idx| {
            let mut rng = sample_rng(seed, idx);
            let model = FormalTwistModel::sample(&table, n, &mut rng);
            let d = selmer_rank_formal(family, &model).expect("formal rank is total");
            *acc.entry(d).or_insert(0) += 1;
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_insert(0) += v;
            }
            a
        });
    let std_errors = histogram
        .iter()
        .map(|(&d, &count)| {
            let p = count as f64 / samples as f64;
            (d, (p * (1.0 - p) / samples as f64).sqrt())
        })
        .collect();
    Ok(PiEstimate {
        n,
        samples,
        seed,
        histogram,
        std_errors,
    })
}

/// Exact pi_d(n) by exhaustive enumeration of the configuration space;
/// feasible only for tiny n. Returns the histogram and the total count.
pub fn exhaustive_pi(family: &TwistFamily, n: usize) -> Result<(BTreeMap<u32, u64>, u64)> {
    let table = family.class_table();
    let classes = table.class_count() as u64;
    let pairs = if n == 0 { 0 } else { n * (n - 1) / 2 };
    let total = classes
        .checked_pow(n as u32)
        .and_then(|c| c.checked_mul(1u64 << pairs))
        .ok_or_else(|| Error::BudgetExceeded("configuration space overflows".into()))?;
    if total > 5_000_000 {
        return Err(Error::BudgetExceeded(format!(
            "exhaustive enumeration of {total} configurations refused"
        )));
    }
    let mut histogram = BTreeMap::new();
    let mut class_ids = vec![0u32; n];
    loop {
        for mask in 0u64..(1 << pairs) {
            let mut bits = vec![vec![0u8; n]; n];
            let mut t = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let bit = (mask >> t & 1) as u8;
                    bits[i][j] = bit;
                    bits[j][i] = bit;
                    t += 1;
                }
            }
            let model = FormalTwistModel::new(&table, class_ids.clone(), bits)?;
            let d = selmer_rank_formal(family, &model)?;
            *histogram.entry(d).or_insert(0u64) += 1;
        }
        // odometer over class vectors
        let mut i = 0;
        loop {
            if i == n {
                let counted: u64 = histogram.values().sum();
                debug_assert_eq!(counted, total);
                return Ok((histogram, total));
            }
            class_ids[i] += 1;
            if (class_ids[i] as u64) < classes {
                break;
            }
            class_ids[i] = 0;
            i += 1;
        }
    }
}

/// Exact distribution at n = 0 is a point mass at dim S2(E_1).
pub fn point_mass_dim(family: &TwistFamily) -> Result<u32> {
    Ok(selmer_rank(family, 1)?.selmer_dim)
}
