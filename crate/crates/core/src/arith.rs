//! Elementary number theory: sieves, factorization, Legendre/Jacobi/Kronecker
//! symbols, Hilbert symbols, local square classes, and prime-divisor counts.
//!
//! Everything here is pure and deterministic. Integers are capped at 64 bits
//! by configuration; intermediate products are carried in `i128` so that
//! clearing denominators never overflows.

use crate::error::{Error, Result};
use num::BigRational;
use num::{BigInt, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Rational numbers as used in the public symbol API.
pub type Rat = num::rational::Ratio<i64>;

/// A place of the rationals: the real place, the prime 2, or an odd prime.
///
/// The derived ordering (`RealInfinity < Two < OddPrime(p)`, odd primes
/// ascending) is the canonical place order used everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Place {
    RealInfinity,
    Two,
    OddPrime(u64),
}

impl Place {
    pub fn odd_prime(p: u64) -> Result<Place> {
        if p < 3 || p % 2 == 0 || !is_prime(p) {
            return Err(Error::InvalidArgument(format!("{p} is not an odd prime")));
        }
        Ok(Place::OddPrime(p))
    }

    /// Dimension of Q_nu^* / (Q_nu^*)^2 as an F_2 vector space.
    pub fn class_dim(&self) -> usize {
        match self {
            Place::RealInfinity => 1,
            Place::Two => 3,
            Place::OddPrime(_) => 2,
        }
    }

    pub fn is_finite(&self) -> bool {
        !matches!(self, Place::RealInfinity)
    }
}

impl std::fmt::Display for Place {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Place::RealInfinity => write!(f, "inf"),
            Place::Two => write!(f, "2"),
            Place::OddPrime(p) => write!(f, "{p}"),
        }
    }
}

/// Canonical square class of a nonzero element of Q_nu^*.
///
/// Bit layout (lowest bit first):
/// - real place: `sign` (1 = negative);
/// - odd prime p: `valuation mod 2`, `unit is a non-residue`;
/// - place 2: `valuation mod 2`, `eps(unit)`, `omega8(unit)` where
///   `eps(u) = (u-1)/2 mod 2` and `omega8(u) = (u^2-1)/8 mod 2`.
///
/// With this encoding the class-group law is XOR on the bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SquareClass {
    place: Place,
    bits: u8,
}

impl SquareClass {
    pub fn identity(place: Place) -> SquareClass {
        SquareClass { place, bits: 0 }
    }

    pub fn from_bits(place: Place, bits: u8) -> SquareClass {
        debug_assert!(bits < (1 << place.class_dim()));
        SquareClass { place, bits }
    }

    pub fn place(&self) -> Place {
        self.place
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn is_identity(&self) -> bool {
        self.bits == 0
    }

    /// Group law: class(xy) = class(x) ⊕ class(y).
    pub fn compose(&self, other: &SquareClass) -> Result<SquareClass> {
        if self.place != other.place {
            return Err(Error::InvalidArgument(
                "cannot compose square classes at different places".into(),
            ));
        }
        Ok(SquareClass {
            place: self.place,
            bits: self.bits ^ other.bits,
        })
    }

    /// Sign bit at the real place.
    pub fn sign_bit(&self) -> u8 {
        debug_assert_eq!(self.place, Place::RealInfinity);
        self.bits & 1
    }

    /// Valuation bit at a finite place.
    pub fn valuation_bit(&self) -> u8 {
        debug_assert!(self.place.is_finite());
        self.bits & 1
    }

    /// Non-residue bit of the unit part at an odd prime.
    pub fn unit_qr_bit(&self) -> u8 {
        debug_assert!(matches!(self.place, Place::OddPrime(_)));
        (self.bits >> 1) & 1
    }

    /// Unit class mod 8 at the place 2, one of {1,3,5,7}.
    pub fn unit_mod8(&self) -> u8 {
        debug_assert_eq!(self.place, Place::Two);
        let eps = (self.bits >> 1) & 1;
        let om = (self.bits >> 2) & 1;
        match (eps, om) {
            (0, 0) => 1,
            (1, 1) => 3,
            (0, 1) => 5,
            (1, 0) => 7,
            _ => unreachable!(),
        }
    }

    /// Small integer representative. Representatives are multiplicative:
    /// rep(x)·rep(y) differs from rep(xy) by an exact square.
    pub fn representative(&self) -> i64 {
        match self.place {
            Place::RealInfinity => {
                if self.bits & 1 == 1 {
                    -1
                } else {
                    1
                }
            }
            Place::Two => {
                let u: i64 = match ((self.bits >> 1) & 1, (self.bits >> 2) & 1) {
                    (0, 0) => 1,
                    (1, 0) => -1,
                    (0, 1) => 5,
                    (1, 1) => -5,
                    _ => unreachable!(),
                };
                if self.bits & 1 == 1 {
                    2 * u
                } else {
                    u
                }
            }
            Place::OddPrime(p) => {
                let u = if (self.bits >> 1) & 1 == 1 {
                    smallest_nonresidue(p) as i64
                } else {
                    1
                };
                if self.bits & 1 == 1 {
                    (p as i64) * u
                } else {
                    u
                }
            }
        }
    }
}

/// Histogram of omega(b) over a completed enumeration, together with the
/// integer bounds `floor(loglog N ∓ (loglog N)^{3/4})` of the typical window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaStats {
    pub n_limit: u64,
    pub histogram: BTreeMap<u32, u64>,
    pub window_lo: i64,
    pub window_hi: i64,
}

impl OmegaStats {
    pub fn new(n_limit: u64) -> OmegaStats {
        let (window_lo, window_hi) = match omega_window(n_limit) {
            Ok((lo, hi)) => (lo.floor() as i64, hi.floor() as i64),
            Err(_) => (0, i64::MAX),
        };
        OmegaStats {
            n_limit,
            histogram: BTreeMap::new(),
            window_lo,
            window_hi,
        }
    }

    pub fn record(&mut self, omega: u32) {
        *self.histogram.entry(omega).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn merge(&mut self, other: &OmegaStats) {
        debug_assert_eq!(self.n_limit, other.n_limit);
        for (&k, &v) in &other.histogram {
            *self.histogram.entry(k).or_insert(0) += v;
        }
    }
}

// ---------------------------------------------------------------------------
// Primality and symbols
// ---------------------------------------------------------------------------

fn modmul(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn modpow(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = modmul(acc, base, m);
        }
        base = modmul(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, valid for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let d = n - 1;
    let s = d.trailing_zeros();
    let d = d >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = modpow(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = modmul(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Jacobi symbol (a | n) for odd positive n, by the reciprocity recursion.
pub fn jacobi(a: i64, n: u64) -> i32 {
    debug_assert!(n % 2 == 1 && n > 0);
    let mut num = a.rem_euclid(n as i64) as u64;
    let mut den = n;
    let mut acc = 1i32;
    while num != 0 {
        while num % 2 == 0 {
            num /= 2;
            if matches!(den % 8, 3 | 5) {
                acc = -acc;
            }
        }
        std::mem::swap(&mut num, &mut den);
        if num % 4 == 3 && den % 4 == 3 {
            acc = -acc;
        }
        num %= den;
    }
    if den == 1 {
        acc
    } else {
        0
    }
}

/// Kronecker symbol (a | n), extending Jacobi to all integer n.
pub fn kronecker(a: i64, n: i64) -> i32 {
    if n == 0 {
        return if a == 1 || a == -1 { 1 } else { 0 };
    }
    let mut acc = 1i32;
    let mut n = n;
    if n < 0 {
        n = -n;
        if a < 0 {
            acc = -acc;
        }
    }
    while n % 2 == 0 {
        n /= 2;
        match a.rem_euclid(8) {
            1 | 7 => {}
            3 | 5 => acc = -acc,
            _ => return 0,
        }
    }
    acc * jacobi(a, n as u64)
}

/// Legendre symbol (a | p) for an odd prime p.
///
/// Evaluated by the Jacobi recursion rather than modular exponentiation.
pub fn legendre(a: i64, p: u64) -> Result<i32> {
    if p < 3 || p % 2 == 0 || !is_prime(p) {
        return Err(Error::InvalidArgument(format!("{p} is not an odd prime")));
    }
    Ok(jacobi(a, p))
}

/// Legendre symbol without the primality check, for hot paths where the
/// caller already knows p is an odd prime.
pub(crate) fn legendre_unchecked(a: i64, p: u64) -> i32 {
    jacobi(a, p)
}

/// eps(p) = (p-1)/2 reduced mod 2, i.e. 0 iff p ≡ 1 (mod 4).
pub fn epsilon(p: i64) -> Result<u8> {
    if p % 2 == 0 {
        return Err(Error::InvalidArgument(format!("epsilon of even {p}")));
    }
    Ok(if p.rem_euclid(4) == 1 { 0 } else { 1 })
}

fn eps_bit(u: i128) -> u8 {
    debug_assert!(u % 2 != 0);
    if u.rem_euclid(4) == 1 {
        0
    } else {
        1
    }
}

fn omega8_bit(u: i128) -> u8 {
    debug_assert!(u % 2 != 0);
    match u.rem_euclid(8) {
        1 | 7 => 0,
        3 | 5 => 1,
        _ => unreachable!(),
    }
}

pub fn smallest_nonresidue(p: u64) -> u64 {
    let mut n = 2;
    while jacobi(n as i64, p) != -1 {
        n += 1;
    }
    n
}

fn v2_i128(mut n: i128) -> (u32, i128) {
    debug_assert!(n != 0);
    let mut v = 0;
    while n % 2 == 0 {
        n /= 2;
        v += 1;
    }
    (v, n)
}

fn vp_i128(mut n: i128, p: u64) -> (u32, i128) {
    debug_assert!(n != 0);
    let p = p as i128;
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    (v, n)
}

/// Square class of a nonzero rational at a place. Denominator squares are
/// cleared up front: class(n/d) = class(n·d).
pub fn square_class(x: Rat, place: Place) -> Result<SquareClass> {
    if x.numer() == &0 {
        return Err(Error::InvalidArgument("square class of zero".into()));
    }
    let a = *x.numer() as i128 * *x.denom() as i128;
    Ok(square_class_i128(a, place))
}

pub fn square_class_int(n: i64, place: Place) -> Result<SquareClass> {
    if n == 0 {
        return Err(Error::InvalidArgument("square class of zero".into()));
    }
    Ok(square_class_i128(n as i128, place))
}

pub(crate) fn square_class_i128(a: i128, place: Place) -> SquareClass {
    debug_assert!(a != 0);
    let bits = match place {
        Place::RealInfinity => u8::from(a < 0),
        Place::Two => {
            let (v, u) = v2_i128(a);
            (v as u8 & 1) | (eps_bit(u) << 1) | (omega8_bit(u) << 2)
        }
        Place::OddPrime(p) => {
            let (v, u) = vp_i128(a, p);
            let qr = if legendre_unchecked((u.rem_euclid(p as i128)) as i64, p) == 1 {
                0
            } else {
                1
            };
            (v as u8 & 1) | (qr << 1)
        }
    };
    SquareClass { place, bits }
}

/// Square class of a nonzero `BigRational`, for callers whose intermediate
/// values exceed 128 bits.
pub fn square_class_big(x: &BigRational, place: Place) -> Result<SquareClass> {
    if x.is_zero() {
        return Err(Error::InvalidArgument("square class of zero".into()));
    }
    let a: BigInt = x.numer() * x.denom();
    let bits = match place {
        Place::RealInfinity => u8::from(a.is_negative()),
        Place::Two => {
            let mut v = 0u32;
            let mut u = a;
            let two = BigInt::from(2);
            while (&u % &two).is_zero() {
                u /= &two;
                v += 1;
            }
            let um8 = u.mod_floor_small(8);
            (v as u8 & 1) | (eps_bit(um8) << 1) | (omega8_bit(um8) << 2)
        }
        Place::OddPrime(p) => {
            let mut v = 0u32;
            let mut u = a;
            let pb = BigInt::from(p);
            while (&u % &pb).is_zero() {
                u /= &pb;
                v += 1;
            }
            let r = u.mod_floor_small(p as i128);
            let qr = if legendre_unchecked(r as i64, p) == 1 { 0 } else { 1 };
            (v as u8 & 1) | (qr << 1)
        }
    };
    Ok(SquareClass { place, bits })
}

trait ModFloorSmall {
    fn mod_floor_small(&self, m: i128) -> i128;
}

impl ModFloorSmall for BigInt {
    fn mod_floor_small(&self, m: i128) -> i128 {
        use num::Integer;
        let r = self.mod_floor(&BigInt::from(m));
        i128::try_from(r).expect("residue fits i128")
    }
}

/// Whether a nonzero rational is a square in the completion at `place`.
pub fn is_local_square(x: &BigRational, place: Place) -> Result<bool> {
    Ok(square_class_big(x, place)?.is_identity())
}

/// Hilbert symbol (a, b)_nu in {-1, +1}.
///
/// Standard local formulas: at an odd p with a = u·p^alpha, b = v·p^beta,
/// the symbol is (-1)^{alpha·beta·eps(p)} (u|p)^beta (v|p)^alpha; at 2 it is
/// (-1)^{eps(u)eps(v) + alpha·omega8(v) + beta·omega8(u)}; at the real place
/// it is -1 iff both arguments are negative.
pub fn hilbert_symbol(a: Rat, b: Rat, place: Place) -> Result<i32> {
    if a.numer() == &0 || b.numer() == &0 {
        return Err(Error::InvalidArgument("hilbert symbol of zero".into()));
    }
    let an = *a.numer() as i128 * *a.denom() as i128;
    let bn = *b.numer() as i128 * *b.denom() as i128;
    Ok(hilbert_i128(an, bn, place))
}

pub fn hilbert_symbol_int(a: i64, b: i64, place: Place) -> Result<i32> {
    if a == 0 || b == 0 {
        return Err(Error::InvalidArgument("hilbert symbol of zero".into()));
    }
    Ok(hilbert_i128(a as i128, b as i128, place))
}

pub(crate) fn hilbert_i128(a: i128, b: i128, place: Place) -> i32 {
    debug_assert!(a != 0 && b != 0);
    let bit = match place {
        Place::RealInfinity => u8::from(a < 0 && b < 0),
        Place::Two => {
            let (alpha, u) = v2_i128(a);
            let (beta, v) = v2_i128(b);
            (eps_bit(u) & eps_bit(v))
                ^ ((alpha as u8 & 1) & omega8_bit(v))
                ^ ((beta as u8 & 1) & omega8_bit(u))
        }
        Place::OddPrime(p) => {
            let (alpha, u) = vp_i128(a, p);
            let (beta, v) = vp_i128(b, p);
            let alpha = alpha as u8 & 1;
            let beta = beta as u8 & 1;
            let qr_u = u8::from(legendre_unchecked((u.rem_euclid(p as i128)) as i64, p) == -1);
            let qr_v = u8::from(legendre_unchecked((v.rem_euclid(p as i128)) as i64, p) == -1);
            let eps_p = u8::from(p % 4 == 3);
            (alpha & beta & eps_p) ^ (beta & qr_u) ^ (alpha & qr_v)
        }
    };
    if bit == 0 {
        1
    } else {
        -1
    }
}

/// Hilbert symbol as an F_2 bit: 0 for +1, 1 for -1.
pub fn hilbert_bit(a: Rat, b: Rat, place: Place) -> Result<u8> {
    Ok(u8::from(hilbert_symbol(a, b, place)? == -1))
}

// ---------------------------------------------------------------------------
// Sieves
// ---------------------------------------------------------------------------

/// Smallest-prime-factor table built by a linear sieve; factorizations and
/// squarefree tests for every integer up to the limit.
pub struct FactorSieve {
    limit: u64,
    spf: Vec<u32>,
}

const SIEVE_LIMIT_CAP: u64 = 200_000_000;

impl FactorSieve {
    pub fn new(limit: u64) -> Result<FactorSieve> {
        if limit > SIEVE_LIMIT_CAP {
            return Err(Error::InvalidArgument(format!(
                "sieve limit {limit} exceeds cap {SIEVE_LIMIT_CAP}"
            )));
        }
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut primes: Vec<u32> = Vec::new();
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u32);
            }
            for &p in &primes {
                if p > spf[i] || (p as usize) * i > n {
                    break;
                }
                spf[p as usize * i] = p;
            }
        }
        Ok(FactorSieve { limit, spf })
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    /// Prime factorization as (prime, exponent) pairs, primes ascending.
    pub fn factorize(&self, n: u64) -> Vec<(u64, u32)> {
        debug_assert!(n >= 1 && n <= self.limit);
        let mut n = n as usize;
        let mut out = Vec::new();
        while n > 1 {
            let p = self.spf[n] as u64;
            let mut e = 0u32;
            while n > 1 && self.spf[n] as u64 == p {
                n /= p as usize;
                e += 1;
            }
            out.push((p, e));
        }
        out
    }

    pub fn is_squarefree(&self, n: u64) -> bool {
        self.factorize(n).iter().all(|&(_, e)| e == 1)
    }

    /// Distinct prime factors, ascending.
    pub fn distinct_primes(&self, n: u64) -> Vec<u64> {
        self.factorize(n).into_iter().map(|(p, _)| p).collect()
    }
}

/// All squarefree b in [1, N] coprime to D, ascending, each with its sorted
/// prime factorization.
pub fn sieve_squarefree_coprime(n: u64, d: u64) -> Result<Vec<(u64, Vec<u64>)>> {
    if n < 1 || d < 1 {
        return Err(Error::InvalidArgument("need N >= 1 and D >= 1".into()));
    }
    let sieve = FactorSieve::new(n)?;
    Ok(squarefree_coprime_with(&sieve, n, d))
}

/// Same as [`sieve_squarefree_coprime`] but reusing a prebuilt sieve.
pub fn squarefree_coprime_with(sieve: &FactorSieve, n: u64, d: u64) -> Vec<(u64, Vec<u64>)> {
    debug_assert!(n <= sieve.limit());
    let mut out = Vec::new();
    'outer: for b in 1..=n {
        let fac = sieve.factorize(b);
        let mut primes = Vec::with_capacity(fac.len());
        for (p, e) in fac {
            if e > 1 || d % p == 0 {
                continue 'outer;
            }
            primes.push(p);
        }
        out.push((b, primes));
    }
    out
}

/// Number of 1 <= b <= N with exactly `n` distinct prime factors,
/// optionally restricted to squarefree b.
pub fn count_omega(limit: u64, n: u32, squarefree_only: bool) -> Result<u64> {
    if limit < 1 {
        return Err(Error::InvalidArgument("need N >= 1".into()));
    }
    let sieve = FactorSieve::new(limit)?;
    let mut count = 0u64;
    for b in 1..=limit {
        let fac = sieve.factorize(b);
        if squarefree_only && fac.iter().any(|&(_, e)| e > 1) {
            continue;
        }
        if fac.len() as u32 == n {
            count += 1;
        }
    }
    Ok(count)
}

/// The real interval (loglog N - (loglog N)^{3/4}, loglog N + (loglog N)^{3/4}).
pub fn omega_window(n: u64) -> Result<(f64, f64)> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!(
            "omega window needs N >= 16, got {n}"
        )));
    }
    let ll = (n as f64).ln().ln();
    let spread = ll.powf(0.75);
    Ok((ll - spread, ll + spread))
}

/// Squarefree part of a nonzero integer (sign preserved), by trial division.
pub fn squarefree_part(n: i64) -> i64 {
    debug_assert!(n != 0);
    let sign = n.signum();
    let mut n = n.unsigned_abs();
    let mut out = 1i64;
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            if e % 2 == 1 {
                out *= p as i64;
            }
        }
        p += 1;
    }
    sign * out * n as i64
}

pub fn gcd_u64(a: u64, b: u64) -> u64 {
    num::integer::gcd(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    #[test]
    fn sieve_squarefree_coprime_examples() {
        // Independent oracle: trial division.
        let brute: Vec<u64> = (1..=30u64)
            .filter(|&b| {
                let sf = (2..=b).all(|k| k * k > b || b % (k * k) != 0);
                sf && gcd_u64(b, 6) == 1
            })
            .collect();
        assert_eq!(brute, vec![1, 5, 7, 11, 13, 17, 19, 23, 29]);
        let got: Vec<u64> = sieve_squarefree_coprime(30, 6)
            .unwrap()
            .into_iter()
            .map(|(b, _)| b)
            .collect();
        assert_eq!(got, brute);

        let got: Vec<u64> = sieve_squarefree_coprime(1, 1)
            .unwrap()
            .into_iter()
            .map(|(b, _)| b)
            .collect();
        assert_eq!(got, vec![1]);

        let got: Vec<u64> = sieve_squarefree_coprime(10, 2310)
            .unwrap()
            .into_iter()
            .map(|(b, _)| b)
            .collect();
        assert_eq!(got, vec![1]);
    }

    #[test]
    fn sieve_factorizations_match_trial_division() {
        let sieve = FactorSieve::new(10_000).unwrap();
        for n in 2..=10_000u64 {
            let mut m = n;
            let mut brute = Vec::new();
            let mut p = 2;
            while p * p <= m {
                if m % p == 0 {
                    let mut e = 0;
                    while m % p == 0 {
                        m /= p;
                        e += 1;
                    }
                    brute.push((p, e));
                }
                p += 1;
            }
            if m > 1 {
                brute.push((m, 1));
            }
            assert_eq!(sieve.factorize(n), brute, "n = {n}");
        }
    }

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre(2, 7).unwrap(), 1);
        // Squares mod 7 are {1, 2, 4}; 3 is not among them.
        let squares: std::collections::BTreeSet<u64> = (1..7u64).map(|x| x * x % 7).collect();
        assert_eq!(squares, [1, 2, 4].into_iter().collect());
        assert_eq!(legendre(3, 7).unwrap(), -1);
        assert_eq!(legendre(14, 7).unwrap(), 0);
        assert!(legendre(2, 9).is_err());
        assert!(legendre(2, 2).is_err());
    }

    #[test]
    fn legendre_matches_euler_criterion() {
        // Jacobi recursion vs modular exponentiation on 10^4 random cases.
        let mut rng = StdRng::seed_from_u64(0xE01E5);
        let primes: Vec<u64> = (3..2000u64).filter(|&p| p % 2 == 1 && is_prime(p)).collect();
        for _ in 0..10_000 {
            let p = primes[rng.gen_range(0..primes.len())];
            let a = rng.gen_range(-1_000_000i64..1_000_000);
            let euler = {
                let r = a.rem_euclid(p as i64) as u64;
                if r == 0 {
                    0
                } else {
                    let e = modpow(r, (p - 1) / 2, p);
                    if e == 1 {
                        1
                    } else {
                        -1
                    }
                }
            };
            assert_eq!(legendre(a, p).unwrap(), euler, "a={a} p={p}");
        }
    }

    #[test]
    fn legendre_multiplicativity() {
        let mut rng = StdRng::seed_from_u64(42);
        let primes: Vec<u64> = (3..500u64).filter(|&p| p % 2 == 1 && is_prime(p)).collect();
        for _ in 0..2000 {
            let p = primes[rng.gen_range(0..primes.len())];
            let a = rng.gen_range(1..10_000i64);
            let b = rng.gen_range(1..10_000i64);
            if a % p as i64 == 0 || b % p as i64 == 0 {
                continue;
            }
            assert_eq!(
                legendre(a * b, p).unwrap(),
                legendre(a, p).unwrap() * legendre(b, p).unwrap()
            );
        }
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon(5).unwrap(), 0);
        assert_eq!(epsilon(7).unwrap(), 1);
        assert_eq!(epsilon(3).unwrap(), 1);
        assert!(epsilon(4).is_err());
    }

    /// Brute-force solvability of z^2 = a x^2 + b y^2 over Z/p^3, used as an
    /// independent check of the odd-place Hilbert formula.
    fn hilbert_brute_odd(a: i64, b: i64, p: u64) -> i32 {
        let m = (p * p * p) as i64;
        for x in 0..m {
            for y in 0..m {
                for z in 0..m {
                    if (x, y, z) == (0, 0, 0) {
                        continue;
                    }
                    // primitive solutions only
                    if x % p as i64 == 0 && y % p as i64 == 0 && z % p as i64 == 0 {
                        continue;
                    }
                    if (a * x * x + b * y * y - z * z).rem_euclid(m) == 0 {
                        return 1;
                    }
                }
            }
        }
        -1
    }

    #[test]
    fn hilbert_examples() {
        assert_eq!(
            hilbert_symbol(rat(-1, 1), rat(-1, 1), Place::RealInfinity).unwrap(),
            -1
        );
        let five = Place::odd_prime(5).unwrap();
        assert_eq!(hilbert_symbol(rat(2, 1), rat(5, 1), five).unwrap(), -1);
        assert_eq!(hilbert_brute_odd(2, 5, 5), -1);
        let seven = Place::odd_prime(7).unwrap();
        assert_eq!(hilbert_symbol(rat(3, 1), rat(5, 1), seven).unwrap(), 1);
        assert!(hilbert_symbol(rat(0, 1), rat(1, 1), seven).is_err());
    }

    #[test]
    fn hilbert_agrees_with_brute_force_at_small_odd_places() {
        for p in [3u64, 5, 7] {
            let place = Place::OddPrime(p);
            for a in [1i64, 2, 3, 5, -1, -2, p as i64, -(p as i64), 2 * p as i64] {
                for b in [1i64, 2, 3, 5, -1, p as i64, 3 * p as i64] {
                    if a % p as i64 == 0 && b % p as i64 == 0 && p == 7 {
                        continue; // keep the brute cube small
                    }
                    let fast = hilbert_symbol_int(a, b, place).unwrap();
                    let brute = hilbert_brute_odd(a, b, p);
                    assert_eq!(fast, brute, "a={a} b={b} p={p}");
                }
            }
        }
    }

    fn random_rat(rng: &mut StdRng) -> Rat {
        loop {
            let n = rng.gen_range(-300i64..300);
            let d = rng.gen_range(1i64..60);
            if n != 0 {
                return Rat::new(n, d);
            }
        }
    }

    #[test]
    fn hilbert_bilinear_and_symmetric() {
        let mut rng = StdRng::seed_from_u64(7);
        let places = [
            Place::RealInfinity,
            Place::Two,
            Place::OddPrime(3),
            Place::OddPrime(5),
            Place::OddPrime(13),
        ];
        for _ in 0..2000 {
            let place = places[rng.gen_range(0..places.len())];
            let a = random_rat(&mut rng);
            let a2 = random_rat(&mut rng);
            let b = random_rat(&mut rng);
            let lhs = hilbert_symbol(a * a2, b, place).unwrap();
            let rhs = hilbert_symbol(a, b, place).unwrap() * hilbert_symbol(a2, b, place).unwrap();
            assert_eq!(lhs, rhs, "bilinearity at {place}");
            assert_eq!(
                hilbert_symbol(a, b, place).unwrap(),
                hilbert_symbol(b, a, place).unwrap(),
                "symmetry at {place}"
            );
        }
    }

    /// Product over all relevant places of (a,b)_nu must be +1.
    #[test]
    fn hilbert_product_formula() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..2000 {
            let a = random_rat(&mut rng);
            let b = random_rat(&mut rng);
            let mut prod = hilbert_symbol(a, b, Place::RealInfinity).unwrap()
                * hilbert_symbol(a, b, Place::Two).unwrap();
            let mut support = std::collections::BTreeSet::new();
            for x in [*a.numer(), *a.denom(), *b.numer(), *b.denom()] {
                let mut n = x.unsigned_abs();
                while n % 2 == 0 {
                    n /= 2;
                }
                let mut p = 3u64;
                while p * p <= n {
                    if n % p == 0 {
                        support.insert(p);
                        while n % p == 0 {
                            n /= p;
                        }
                    }
                    p += 2;
                }
                if n > 2 {
                    support.insert(n);
                }
            }
            for p in support {
                prod *= hilbert_symbol(a, b, Place::OddPrime(p)).unwrap();
            }
            assert_eq!(prod, 1, "product formula for a={a} b={b}");
        }
    }

    #[test]
    fn square_class_examples() {
        let c = square_class(rat(18, 1), Place::Two).unwrap();
        assert_eq!(c.valuation_bit(), 1);
        assert_eq!(c.unit_mod8(), 1);

        let c = square_class(rat(-4, 1), Place::RealInfinity).unwrap();
        assert_eq!(c.sign_bit(), 1);

        let five = Place::OddPrime(5);
        let c = square_class(rat(50, 1), five).unwrap();
        assert_eq!(c.valuation_bit(), 0);
        assert_eq!(c.unit_qr_bit(), 1); // residual unit 2 is a non-residue mod 5
        assert!(square_class(rat(0, 1), five).is_err());
    }

    #[test]
    fn square_class_is_homomorphism_and_square_invariant() {
        let mut rng = StdRng::seed_from_u64(123);
        let places = [
            Place::RealInfinity,
            Place::Two,
            Place::OddPrime(3),
            Place::OddPrime(11),
        ];
        for _ in 0..2000 {
            let place = places[rng.gen_range(0..places.len())];
            let x = random_rat(&mut rng);
            let y = random_rat(&mut rng);
            let cx = square_class(x, place).unwrap();
            let cy = square_class(y, place).unwrap();
            let cxy = square_class(x * y, place).unwrap();
            assert_eq!(cx.compose(&cy).unwrap(), cxy);
            assert_eq!(square_class(x * y * y, place).unwrap(), cx);
        }
    }

    #[test]
    fn square_class_representative_is_in_class() {
        for place in [Place::RealInfinity, Place::Two, Place::OddPrime(7)] {
            for bits in 0..(1u8 << place.class_dim()) {
                let c = SquareClass::from_bits(place, bits);
                let r = c.representative();
                assert_eq!(square_class_int(r, place).unwrap(), c, "{place} {bits}");
            }
        }
    }

    #[test]
    fn count_omega_examples() {
        assert_eq!(count_omega(100, 1, false).unwrap(), 35);
        assert_eq!(count_omega(10, 2, false).unwrap(), 2); // {6, 10}
        assert_eq!(count_omega(1, 0, false).unwrap(), 1); // b = 1
    }

    #[test]
    fn count_omega_partitions_all_integers() {
        for limit in [1u64, 17, 100, 10_000] {
            let mut total = 0;
            for n in 0..16 {
                total += count_omega(limit, n, false).unwrap();
            }
            assert_eq!(total, limit);
        }
    }

    #[test]
    fn count_omega_upper_bound_diagnostic() {
        // Shape check against K·N/log N·(loglog N + C)^{n-1}/(n-1)! with
        // generously fitted constants; diagnostic, not a sharp bound.
        let (k, c) = (6.0f64, 3.0f64);
        for limit in [1000u64, 10_000, 100_000] {
            let logn = (limit as f64).ln();
            let loglogn = logn.ln();
            for n in 1..8u32 {
                let bound =
                    k * limit as f64 / logn * (loglogn + c).powi(n as i32 - 1)
                        / (1..n).map(|i| i as f64).product::<f64>().max(1.0);
                let actual = count_omega(limit, n, false).unwrap() as f64;
                assert!(
                    actual <= bound,
                    "N={limit} n={n}: {actual} > {bound}"
                );
            }
        }
    }

    #[test]
    fn omega_window_examples() {
        let (lo, hi) = omega_window(1618).unwrap();
        assert!((lo - (2.0 - 2f64.powf(0.75))).abs() < 0.01, "lo = {lo}");
        assert!((hi - (2.0 + 2f64.powf(0.75))).abs() < 0.01, "hi = {hi}");
        let (lo, hi) = omega_window(1_000_000).unwrap();
        let center = (lo + hi) / 2.0;
        assert!((center - 2.626).abs() < 0.01, "center = {center}");
        assert!(omega_window(15).is_err());
    }

    #[test]
    fn kronecker_extends_jacobi() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..2000 {
            let a = rng.gen_range(-500i64..500);
            let n = rng.gen_range(0..250i64) * 2 + 1;
            assert_eq!(kronecker(a, n), jacobi(a, n as u64));
        }
        // Values used by the parity criterion.
        assert_eq!(kronecker(-2, 1), 1);
        assert_eq!(kronecker(-2, 3), 1);
        assert_eq!(kronecker(-2, 5), -1);
        assert_eq!(kronecker(-2, 7), -1);
        assert_eq!(kronecker(-2, 9), 1);
    }

    #[test]
    fn squarefree_part_basics() {
        assert_eq!(squarefree_part(4), 1);
        assert_eq!(squarefree_part(18), 2);
        assert_eq!(squarefree_part(-12), -3);
        assert_eq!(squarefree_part(1), 1);
        assert_eq!(squarefree_part(30), 30);
    }

    #[test]
    fn is_prime_small_and_large() {
        let small: Vec<u64> = (0..100).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            small,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73,
                 79, 83, 89, 97]
        );
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(1_000_000_007u64 * 3));
    }
}
