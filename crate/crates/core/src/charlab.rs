//! Desk-scale evaluation of the character sums and Legendre double sums
//! whose asymptotic decay powers the moment computation.
//!
//! Sums are enumerated over squarefree b with omega(b) = n via the factor
//! sieve and then symmetrized exactly over the n! orderings; the summands
//! are units, so totals accumulate in wide integers and only the final
//! division by n! leaves the integers.

use crate::arith::{is_prime, kronecker, squarefree_part, FactorSieve};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// A real quadratic character selector over (Z/D)*.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharacterSelector {
    /// The trivial character (modulus 1).
    Trivial,
    /// The character mod 4: +1 iff p ≡ 1 (mod 4).
    Mod4,
    /// The character mod 8 with chi(p) = +1 iff p ≡ ±1 (mod 8), i.e. (2|p).
    Mod8Plus,
    /// The character mod 8 with chi(p) = +1 iff p ≡ 1, 3 (mod 8), i.e. (-2|p).
    Mod8Minus,
    /// Kronecker character (t | ·).
    Kronecker(i64),
}

/// Coarse conductor class, as the activity conditions need it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulusClass {
    One,
    Four,
    Other,
}

impl CharacterSelector {
    pub fn value(&self, p: u64) -> i32 {
        match self {
            CharacterSelector::Trivial => 1,
            CharacterSelector::Mod4 => {
                if p % 4 == 1 {
                    1
                } else {
                    -1
                }
            }
            CharacterSelector::Mod8Plus => match p % 8 {
                1 | 7 => 1,
                _ => -1,
            },
            CharacterSelector::Mod8Minus => match p % 8 {
                1 | 3 => 1,
                _ => -1,
            },
            CharacterSelector::Kronecker(t) => kronecker(*t, p as i64),
        }
    }

    pub fn modulus_class(&self) -> ModulusClass {
        match self {
            CharacterSelector::Trivial => ModulusClass::One,
            CharacterSelector::Mod4 => ModulusClass::Four,
            CharacterSelector::Mod8Plus | CharacterSelector::Mod8Minus => ModulusClass::Other,
            CharacterSelector::Kronecker(t) => match squarefree_part(*t) {
                1 => ModulusClass::One,
                -1 => ModulusClass::Four,
                _ => ModulusClass::Other,
            },
        }
    }
}

impl std::fmt::Display for CharacterSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CharacterSelector::Trivial => write!(f, "trivial"),
            CharacterSelector::Mod4 => write!(f, "mod4"),
            CharacterSelector::Mod8Plus => write!(f, "mod8:+"),
            CharacterSelector::Mod8Minus => write!(f, "mod8:-"),
            CharacterSelector::Kronecker(t) => write!(f, "kronecker:{t}"),
        }
    }
}

impl FromStr for CharacterSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<CharacterSelector> {
        match s {
            "trivial" => Ok(CharacterSelector::Trivial),
            "mod4" => Ok(CharacterSelector::Mod4),
            "mod8:+" => Ok(CharacterSelector::Mod8Plus),
            "mod8:-" => Ok(CharacterSelector::Mod8Minus),
            other => {
                if let Some(t) = other.strip_prefix("kronecker:") {
                    let t: i64 = t
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad kronecker discriminant in {other:?}")))?;
                    Ok(CharacterSelector::Kronecker(t))
                } else {
                    Err(Error::Parse(format!("unknown character label {other:?}")))
                }
            }
        }
    }
}

impl Serialize for CharacterSelector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CharacterSelector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Specification of one character sum: n character selectors and the
/// symmetric bit matrices d (eps-pair signs) and e (Legendre exponents).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharSumSpec {
    pub n: usize,
    #[serde(rename = "N")]
    pub n_limit: u64,
    #[serde(rename = "D")]
    pub modulus: u64,
    pub chi: Vec<CharacterSelector>,
    pub d_matrix: Vec<Vec<u8>>,
    pub e_matrix: Vec<Vec<u8>>,
}

const CHARSUM_TERM_BUDGET: u128 = 2_000_000_000;
const CHARSUM_MAX_N: usize = 8;

impl CharSumSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n > CHARSUM_MAX_N {
            return Err(Error::BudgetExceeded(format!(
                "n = {} exceeds the symmetrization budget",
                self.n
            )));
        }
        if self.chi.len() != self.n {
            return Err(Error::InvalidArgument("chi list length differs from n".into()));
        }
        if self.modulus < 1 || self.n_limit < 1 {
            return Err(Error::InvalidArgument("need N >= 1 and D >= 1".into()));
        }
        for m in [&self.d_matrix, &self.e_matrix] {
            if m.len() != self.n || m.iter().any(|row| row.len() != self.n) {
                return Err(Error::InvalidArgument("matrices must be n x n".into()));
            }
            for i in 0..self.n {
                if m[i][i] != 0 {
                    return Err(Error::InvalidArgument("matrix diagonals must be 0".into()));
                }
                for j in 0..self.n {
                    if m[i][j] != m[j][i] || m[i][j] > 1 {
                        return Err(Error::InvalidArgument(
                            "matrices must be symmetric bit matrices".into(),
                        ));
                    }
                }
            }
        }
        for c in &self.chi {
            if let CharacterSelector::Kronecker(t) = c {
                if *t == 0 || self.modulus % t.unsigned_abs() != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "kronecker discriminant {t} does not divide D = {}",
                        self.modulus
                    )));
                }
            }
        }
        Ok(())
    }

    /// The number of active indices: i is active when some e_{i,j} = 1, or
    /// chi_i has modulus not dividing 4, or chi_i has modulus exactly 4 and
    /// every d_{i,j} = 0. Recomputed from the fields on each call.
    pub fn active_count(&self) -> usize {
        (0..self.n)
            .filter(|&i| {
                let has_e = (0..self.n).any(|j| self.e_matrix[i][j] == 1);
                let all_d_zero = (0..self.n).all(|j| self.d_matrix[i][j] == 0);
                match self.chi[i].modulus_class() {
                    ModulusClass::Other => true,
                    ModulusClass::Four => has_e || all_d_zero,
                    ModulusClass::One => has_e,
                }
            })
            .count()
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product::<u64>().max(1)
}

/// Eligible tuples for a spec: squarefree b <= N coprime to D with
/// omega(b) = n, each carrying its ascending prime factorization.
fn eligible_b(spec: &CharSumSpec) -> Result<Vec<Vec<u64>>> {
    let sieve = FactorSieve::new(spec.n_limit)?;
    let mut out = Vec::new();
    'outer: for b in 1..=spec.n_limit {
        let fac = sieve.factorize(b);
        if fac.len() != spec.n {
            continue;
        }
        let mut primes = Vec::with_capacity(spec.n);
        for (p, e) in fac {
            if e > 1 || spec.modulus % p == 0 {
                continue 'outer;
            }
            primes.push(p);
        }
        out.push(primes);
    }
    Ok(out)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut perms = vec![vec![]];
    for k in 0..n {
        let mut next = Vec::new();
        for p in &perms {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k);
                next.push(q);
            }
        }
        perms = next;
    }
    perms
}

fn char_sum_impl(spec: &CharSumSpec, reversed_pair: Option<(usize, usize)>) -> Result<f64> {
    spec.validate()?;
    let tuples = eligible_b(spec)?;
    let n = spec.n;
    let nfac = factorial(n);
    let budget = tuples.len() as u128 * nfac as u128 * (n * n).max(1) as u128;
    if budget > CHARSUM_TERM_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "character sum needs ~{budget} operations"
        )));
    }
    let perms = permutations(n);
    let mut total: i128 = 0;
    let mut chi_vals = vec![vec![0i32; n]; n];
    let mut eps = vec![0u8; n];
    let mut leg = vec![vec![0u8; n]; n];
    for primes in &tuples {
        for (i, c) in spec.chi.iter().enumerate() {
            for (t, &p) in primes.iter().enumerate() {
                chi_vals[i][t] = c.value(p);
            }
        }
        for (t, &p) in primes.iter().enumerate() {
            eps[t] = u8::from(p % 4 == 3);
        }
        for s in 0..n {
            for t in (s + 1)..n {
                let bit = u8::from(
                    crate::arith::legendre_unchecked(primes[s] as i64, primes[t]) == -1,
                );
                leg[s][t] = bit;
                // (q_t | q_s) by reciprocity
                leg[t][s] = bit ^ (eps[s] & eps[t]);
            }
        }
        let mut b_sum: i64 = 0;
        for perm in &perms {
            let mut sign = 0u8; // exponent of -1
            let mut value: i32 = 1;
            for i in 0..n {
                value *= chi_vals[i][perm[i]];
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let (pi, pj) = (perm[i], perm[j]);
                    sign ^= spec.d_matrix[i][j] & eps[pi] & eps[pj];
                    if spec.e_matrix[i][j] == 1 {
                        // canonical orientation: smaller prime on top, so the
                        // symmetrized sum is invariant under index reordering
                        let (s, t) = (pi.min(pj), pi.max(pj));
                        if reversed_pair == Some((i, j)) {
                            // reversed orientation with the compensating
                            // eps-pair term
                            sign ^= leg[t][s] ^ (eps[s] & eps[t]);
                        } else {
                            sign ^= leg[s][t];
                        }
                    }
                }
            }
            b_sum += i64::from(value) * if sign == 0 { 1 } else { -1 };
        }
        total += b_sum as i128;
    }
    Ok(total as f64 / nfac as f64)
}

/// Exact value of (1/n!) Σ over ordered tuples of distinct primes coprime to
/// D with product ≤ N of Π chi_i(p_i) · Π (-1)^{eps eps d} · Π (p_i|p_j)^e.
///
/// Legendre factors are oriented canonically (smaller prime on top); the
/// opposite orientation is the same spec with the d-bit of that pair flipped.
pub fn char_sum(spec: &CharSumSpec) -> Result<f64> {
    char_sum_impl(spec, None)
}

/// The same sum with the Legendre factor of one index pair evaluated in the
/// reversed orientation and compensated through the eps-pair sign, per
/// (p|q)(q|p) = (-1)^{eps(p) eps(q)}. Must equal [`char_sum`] exactly.
pub fn char_sum_with_reversal(spec: &CharSumSpec, pair: (usize, usize)) -> Result<f64> {
    if pair.0 >= pair.1 || pair.1 >= spec.n {
        return Err(Error::InvalidArgument("reversal pair must have i < j < n".into()));
    }
    if spec.e_matrix[pair.0][pair.1] != 1 {
        return Err(Error::InvalidArgument("reversal pair must have e = 1".into()));
    }
    char_sum_impl(spec, Some(pair))
}

/// |prime-tuple average of f minus the uniform class average times the tuple
/// count|: the measurable gap of the equidistribution statement.
///
/// `f` is a table over ((Z/D)*/sq)^n indexed little-endian by class id with
/// stride class_count, and must be bounded by 1 in absolute value.
pub fn class_average_gap(f: &[f64], n: usize, n_limit: u64, d: u64) -> Result<f64> {
    if f.iter().any(|x| x.abs() > 1.0 + 1e-12) {
        return Err(Error::InvalidArgument("|f| must be bounded by 1".into()));
    }
    let table = crate::localspaces::class_table_for_modulus(d)?;
    let k = table.class_count();
    let expected_len = k.checked_pow(n as u32).ok_or_else(|| {
        Error::BudgetExceeded("class-vector space too large".into())
    })?;
    if f.len() != expected_len {
        return Err(Error::InvalidArgument(format!(
            "table length {} differs from {k}^{n}",
            f.len()
        )));
    }
    let spec = CharSumSpec {
        n,
        n_limit,
        modulus: d,
        chi: vec![CharacterSelector::Trivial; n],
        d_matrix: vec![vec![0; n]; n],
        e_matrix: vec![vec![0; n]; n],
    };
    spec.validate()?;
    let tuples = eligible_b(&spec)?;
    let nfac = factorial(n) as f64;
    let budget = tuples.len() as u128 * factorial(n) as u128;
    if budget > CHARSUM_TERM_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "class average needs ~{budget} evaluations"
        )));
    }
    let perms = permutations(n);
    let mut lhs = 0.0f64;
    for primes in &tuples {
        let ids: Vec<usize> = primes
            .iter()
            .map(|&p| table.class_of(p as i64).map(|id| id as usize))
            .collect::<Result<_>>()?;
        for perm in &perms {
            let mut index = 0usize;
            let mut stride = 1usize;
            for i in 0..n {
                index += ids[perm[i]] * stride;
                stride *= k;
            }
            lhs += f[index];
        }
    }
    lhs /= nfac;
    let mean: f64 = f.iter().sum::<f64>() / f.len() as f64;
    let main = mean * tuples.len() as f64;
    Ok((lhs - main).abs())
}

/// Σ over prime pairs p1, p2 >= A with p1·p2 <= X of a(p1)·b(p2)·(p1|p2).
/// Pairs with p1 = p2 contribute 0 and are skipped.
pub fn legendre_pair_sum(
    a_floor: u64,
    x_limit: u64,
    a: impl Fn(u64) -> f64,
    b: impl Fn(u64) -> f64,
) -> Result<f64> {
    if a_floor > x_limit {
        return Ok(0.0);
    }
    let upper = x_limit / a_floor.max(1);
    let primes: Vec<u64> = (a_floor.max(2)..=upper).filter(|&p| is_prime(p)).collect();
    let mut total = 0.0f64;
    for &p1 in &primes {
        for &p2 in &primes {
            if p1 == p2 {
                continue;
            }
            match p1.checked_mul(p2) {
                Some(prod) if prod <= x_limit => {
                    let sym = crate::arith::legendre_unchecked(p1 as i64, p2) as f64;
                    total += a(p1) * b(p2) * sym;
                }
                _ => continue,
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn trivial_spec(n: usize, n_limit: u64, d: u64) -> CharSumSpec {
        CharSumSpec {
            n,
            n_limit,
            modulus: d,
            chi: vec![CharacterSelector::Trivial; n],
            d_matrix: vec![vec![0; n]; n],
            e_matrix: vec![vec![0; n]; n],
        }
    }

    #[test]
    fn char_sum_counts_semiprimes() {
        // the 7 products {35,55,65,85,95,77,91}
        let spec = trivial_spec(2, 100, 24);
        assert_eq!(char_sum(&spec).unwrap(), 7.0);
    }

    #[test]
    fn char_sum_n1_counts_primes() {
        let spec = trivial_spec(1, 500, 6);
        let count = (2..=500u64)
            .filter(|&p| is_prime(p) && p % 2 != 0 && p % 3 != 0)
            .count() as f64;
        assert_eq!(char_sum(&spec).unwrap(), count);
    }

    #[test]
    fn char_sum_trivial_equals_eligible_count() {
        for n in 1..=3usize {
            for (nl, d) in [(200u64, 8u64), (500, 24)] {
                let spec = trivial_spec(n, nl, d);
                assert_eq!(spec.active_count(), 0);
                let count = eligible_b(&spec).unwrap().len() as f64;
                assert_eq!(char_sum(&spec).unwrap(), count, "n={n} N={nl} D={d}");
            }
        }
    }

    #[test]
    fn char_sum_decay_with_active_pair() {
        let mut prev = f64::INFINITY;
        for nl in [1_000u64, 10_000, 100_000] {
            let mut spec = trivial_spec(2, nl, 24);
            spec.e_matrix[0][1] = 1;
            spec.e_matrix[1][0] = 1;
            assert_eq!(spec.active_count(), 2);
            let v = char_sum(&spec).unwrap().abs() / nl as f64;
            assert!(v < prev, "|sum|/N not decreasing at N = {nl}: {v} vs {prev}");
            prev = v;
        }
    }

    fn random_spec(rng: &mut StdRng, n: usize, n_limit: u64, d: u64) -> CharSumSpec {
        let choices = [
            CharacterSelector::Trivial,
            CharacterSelector::Mod4,
            CharacterSelector::Mod8Plus,
            CharacterSelector::Mod8Minus,
        ];
        let chi = (0..n).map(|_| choices[rng.gen_range(0..4)]).collect();
        let mut dm = vec![vec![0u8; n]; n];
        let mut em = vec![vec![0u8; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let db = rng.gen_range(0..2) as u8;
                let eb = rng.gen_range(0..2) as u8;
                dm[i][j] = db;
                dm[j][i] = db;
                em[i][j] = eb;
                em[j][i] = eb;
            }
        }
        CharSumSpec {
            n,
            n_limit,
            modulus: d,
            chi,
            d_matrix: dm,
            e_matrix: em,
        }
    }

    #[test]
    fn char_sum_invariant_under_index_reordering() {
        let mut rng = StdRng::seed_from_u64(2024);
        for _ in 0..30 {
            let n = rng.gen_range(2..4);
            let spec = random_spec(&mut rng, n, 2000, 8);
            let base = char_sum(&spec).unwrap();
            // simultaneous permutation of chi, d, e
            let perm: Vec<usize> = if n == 2 { vec![1, 0] } else { vec![2, 0, 1] };
            let mut permuted = spec.clone();
            for i in 0..n {
                permuted.chi[i] = spec.chi[perm[i]];
                for j in 0..n {
                    permuted.d_matrix[i][j] = spec.d_matrix[perm[i]][perm[j]];
                    permuted.e_matrix[i][j] = spec.e_matrix[perm[i]][perm[j]];
                }
            }
            assert_eq!(char_sum(&permuted).unwrap(), base);
        }
    }

    #[test]
    fn reciprocity_compensation_invariance() {
        let mut rng = StdRng::seed_from_u64(55);
        for _ in 0..30 {
            let n = rng.gen_range(2..4);
            let mut spec = random_spec(&mut rng, n, 2000, 8);
            spec.e_matrix[0][1] = 1;
            spec.e_matrix[1][0] = 1;
            let a = char_sum(&spec).unwrap();
            let b = char_sum_with_reversal(&spec, (0, 1)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn class_average_gap_examples() {
        // constant f has gap exactly 0
        let table = crate::localspaces::class_table_for_modulus(24).unwrap();
        let k = table.class_count();
        let f = vec![1.0; k * k];
        assert_eq!(class_average_gap(&f, 2, 3000, 24).unwrap(), 0.0);

        // a nontrivial character of G reduces to a char_sum
        // chi((g1, g2)) = mod4(g1): table over pairs
        let mut f = vec![0.0; k * k];
        for g1 in 0..k {
            for g2 in 0..k {
                let v = if table.rep(g1 as u32) % 4 == 1 { 1.0 } else { -1.0 };
                f[g1 + k * g2] = v;
            }
        }
        let gap = class_average_gap(&f, 2, 3000, 24).unwrap();
        let mut spec = trivial_spec(2, 3000, 24);
        spec.chi[0] = CharacterSelector::Mod4;
        let cs = char_sum(&spec).unwrap().abs();
        assert!((gap - cs).abs() < 1e-9, "gap {gap} vs |char_sum| {cs}");
    }

    #[test]
    fn legendre_pair_sum_examples() {
        // empty range
        assert_eq!(legendre_pair_sum(101, 100, |_| 1.0, |_| 1.0).unwrap(), 0.0);
        // exact brute force for A = 3, X = 100
        let mut brute = 0.0;
        for p1 in [3u64, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
            for p2 in [3u64, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
                if p1 != p2 && p1 * p2 <= 100 {
                    brute += crate::arith::legendre_unchecked(p1 as i64, p2) as f64;
                }
            }
        }
        let got = legendre_pair_sum(3, 100, |_| 1.0, |_| 1.0).unwrap();
        assert_eq!(got, brute);
    }

    #[test]
    fn legendre_pair_sum_decay_diagnostic() {
        // |sum|/(X log X) should trend below a fitted constant times A^{-1/8};
        // C = 0.01 is fitted to the observed values, diagnostic only.
        for a in [3u64, 11] {
            let bound = 0.01 * (a as f64).powf(-0.125);
            let mut prev = f64::INFINITY;
            for x in [1_000u64, 10_000, 100_000] {
                let v = legendre_pair_sum(a, x, |_| 1.0, |_| 1.0).unwrap();
                let ratio = v.abs() / (x as f64 * (x as f64).ln());
                assert!(ratio < prev, "A={a}: ratio not decreasing at X={x}");
                assert!(ratio <= bound, "A={a} X={x}: {ratio} > {bound}");
                prev = ratio;
            }
        }
    }

    #[test]
    fn class_average_gap_random_table_is_small() {
        let mut rng = StdRng::seed_from_u64(1);
        let table = crate::localspaces::class_table_for_modulus(8).unwrap();
        let k = table.class_count();
        let f: Vec<f64> = (0..k * k)
            .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let mut prev = f64::INFINITY;
        for n_limit in [10_000u64, 100_000] {
            let gap = class_average_gap(&f, 2, n_limit, 8).unwrap();
            let rel = gap / n_limit as f64;
            assert!(rel < 0.1, "gap/N = {rel} at N = {n_limit}");
            assert!(rel < prev);
            prev = rel;
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = trivial_spec(2, 1000, 24);
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"N\":1000"));
        assert!(json.contains("\"D\":24"));
        assert!(json.contains("\"trivial\""));
        let back: CharSumSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n, 2);
        back.validate().unwrap();
    }

    #[test]
    fn active_count_follows_the_three_conditions() {
        let mut spec = trivial_spec(3, 100, 24);
        assert_eq!(spec.active_count(), 0);
        // an e-pair activates both endpoints
        spec.e_matrix[0][1] = 1;
        spec.e_matrix[1][0] = 1;
        assert_eq!(spec.active_count(), 2);
        // modulus-8 character activates its index
        spec.chi[2] = CharacterSelector::Mod8Plus;
        assert_eq!(spec.active_count(), 3);
        // modulus exactly 4 with some d is NOT active
        let mut spec = trivial_spec(2, 100, 24);
        spec.chi[0] = CharacterSelector::Mod4;
        assert_eq!(spec.active_count(), 1); // all d zero: active
        spec.d_matrix[0][1] = 1;
        spec.d_matrix[1][0] = 1;
        assert_eq!(spec.active_count(), 0);
    }
}
