//! Local symplectic spaces attached to a twist family: the blocks V_nu with
//! their Hilbert-symbol form, the global unit subspace U, and the local
//! descent images W_nu.
//!
//! Coordinates of a block V_nu: an element (u1, u2, u3) with u1·u2·u3 = 1 is
//! stored as the class bits of u1 followed by the class bits of u2 (u3 is
//! implied). With G the Hilbert Gram matrix on Q_nu^*/(Q_nu^*)^2, the product
//! pairing on triples becomes x1·G·y2 + x2·G·y1, which is alternating and
//! nondegenerate.

use crate::arith::{
    gcd_u64, legendre_unchecked, square_class_big, square_class_int, Place, Rat, SquareClass,
};
use crate::error::{Error, Result};
use crate::f2linalg::{BilinearFormF2, SubspaceF2, VectorF2};
use num::{BigInt, BigRational, One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, LazyLock, RwLock};

// ---------------------------------------------------------------------------
// TwistFamily
// ---------------------------------------------------------------------------

/// The curve data (c1, c2, c3) with its bad-place set S and modulus D.
///
/// Validated on construction: the c_i are distinct integers, none of
/// (c_i - c_j)(c_i - c_k) is a perfect square, S contains infinity, 2 and
/// every odd prime dividing a difference, and D is 8 times the product of the
/// odd primes of S.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwistFamily {
    c: [i64; 3],
    odd_s: Vec<u64>,
    d: u64,
}

const MAX_MODULUS: u64 = 10_000_000;

fn is_perfect_square(n: i64) -> bool {
    if n < 0 {
        return false;
    }
    let r = (n as f64).sqrt() as i64;
    for s in r.saturating_sub(2)..=r + 2 {
        if s >= 0 && s * s == n {
            return true;
        }
    }
    false
}

fn odd_prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    while n % 2 == 0 {
        n /= 2;
    }
    let mut p = 3u64;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 2;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl TwistFamily {
    pub fn from_integers(c: [i64; 3]) -> Result<TwistFamily> {
        if c[0] == c[1] || c[0] == c[2] || c[1] == c[2] {
            return Err(Error::InvalidFamily(format!("roots {c:?} are not distinct")));
        }
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            let prod = (c[i] - c[j]) as i128 * (c[i] - c[k]) as i128;
            let prod = i64::try_from(prod)
                .map_err(|_| Error::InvalidFamily("root differences too large".into()))?;
            if is_perfect_square(prod) {
                return Err(Error::InvalidFamily(format!(
                    "(c{} - c{})(c{} - c{}) = {} is a square; the curve has a rational \
                     cyclic 4-subgroup",
                    i + 1,
                    j + 1,
                    i + 1,
                    k + 1,
                    prod
                )));
            }
        }
        let mut odd: BTreeSet<u64> = BTreeSet::new();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            for p in odd_prime_factors((c[i] - c[j]).unsigned_abs()) {
                odd.insert(p);
            }
        }
        let odd_s: Vec<u64> = odd.into_iter().collect();
        let mut d: u64 = 8;
        for &q in &odd_s {
            d = d.checked_mul(q).ok_or_else(|| {
                Error::InvalidFamily("family modulus overflows".into())
            })?;
        }
        if d > MAX_MODULUS {
            return Err(Error::InvalidFamily(format!(
                "family modulus D = {d} exceeds supported cap {MAX_MODULUS}"
            )));
        }
        Ok(TwistFamily { c, odd_s, d })
    }

    /// Rational roots are folded to integers by twisting with the square of
    /// the common denominator; the Selmer rank is unchanged.
    pub fn from_rationals(c: [Rat; 3]) -> Result<TwistFamily> {
        let mut q: i64 = 1;
        for ci in &c {
            q = num::integer::lcm(q, *ci.denom());
        }
        let mut ints = [0i64; 3];
        for (slot, ci) in ints.iter_mut().zip(c.iter()) {
            let scaled = ci * Rat::from_integer(q) * Rat::from_integer(q);
            debug_assert_eq!(*scaled.denom(), 1);
            *slot = *scaled.numer();
        }
        TwistFamily::from_integers(ints)
    }

    /// The family with roots scaled by `factor`; y² = Π(x − b·factor·cᵢ)
    /// twisted by b equals this family twisted by b·factor.
    pub fn scaled(&self, factor: i64) -> Result<TwistFamily> {
        if factor == 0 {
            return Err(Error::InvalidArgument("scale factor must be nonzero".into()));
        }
        TwistFamily::from_integers([
            self.c[0] * factor,
            self.c[1] * factor,
            self.c[2] * factor,
        ])
    }

    pub fn c(&self) -> [i64; 3] {
        self.c
    }

    /// S in canonical order: infinity, 2, odd primes ascending.
    pub fn s_places(&self) -> Vec<Place> {
        let mut out = vec![Place::RealInfinity, Place::Two];
        out.extend(self.odd_s.iter().map(|&q| Place::OddPrime(q)));
        out
    }

    pub fn odd_s_primes(&self) -> &[u64] {
        &self.odd_s
    }

    pub fn modulus(&self) -> u64 {
        self.d
    }

    /// Pairwise root differences (c1-c2, c1-c3, c2-c3).
    pub fn differences(&self) -> [i64; 3] {
        [
            self.c[0] - self.c[1],
            self.c[0] - self.c[2],
            self.c[1] - self.c[2],
        ]
    }

    /// Checks b is a valid twist parameter (nonzero, squarefree, coprime to
    /// D) and returns the primes of |b| ascending.
    pub fn validate_twist(&self, b: i64) -> Result<Vec<u64>> {
        if b == 0 {
            return Err(Error::InvalidTwist("b must be nonzero".into()));
        }
        let mut n = b.unsigned_abs();
        let mut primes = Vec::new();
        let mut p = 2u64;
        while p * p <= n {
            if n % p == 0 {
                n /= p;
                if n % p == 0 {
                    return Err(Error::InvalidTwist(format!("{b} is not squarefree")));
                }
                primes.push(p);
            }
            p += 1;
        }
        if n > 1 {
            primes.push(n);
        }
        for &p in &primes {
            if self.d % p == 0 {
                return Err(Error::InvalidTwist(format!(
                    "{b} shares the factor {p} with D = {}",
                    self.d
                )));
            }
        }
        Ok(primes)
    }

    /// Stable identity string used for cache keys and sweep-file headers.
    pub fn key(&self) -> String {
        format!("c={},{},{};D={}", self.c[0], self.c[1], self.c[2], self.d)
    }

    pub fn class_table(&self) -> Arc<ClassTable> {
        family_data(self).class_table.clone()
    }
}

impl std::fmt::Display for TwistFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "y^2 =")?;
        for ci in self.c {
            if ci == 0 {
                write!(f, " x")?;
            } else if ci > 0 {
                write!(f, " (x - {ci}b)")?;
            } else {
                write!(f, " (x + {}b)", -ci)?;
            }
        }
        write!(f, ", D = {}", self.d)
    }
}

// ---------------------------------------------------------------------------
// Class table for (Z/D)*/squares
// ---------------------------------------------------------------------------

/// The square-class group (Z/D)*/((Z/D)*)² of a family, with the per-class
/// data a formal twist prime carries: eps, the mod-8 bit, and the residue
/// bits at every odd prime of S.
#[derive(Debug)]
pub struct ClassTable {
    d: u64,
    class_of_residue: Vec<u32>,
    reps: Vec<u64>,
    eps: Vec<u8>,
    omega8: Vec<u8>,
    qr_at: Vec<Vec<u8>>,
    odd_s: Vec<u64>,
}

impl ClassTable {
    fn build(d: u64, odd_s: &[u64]) -> ClassTable {
        let du = d as usize;
        // orbit of each unit under multiplication by squares
        let squares: BTreeSet<u64> = (1..d)
            .filter(|&r| gcd_u64(r, d) == 1)
            .map(|r| r * r % d)
            .collect();
        let mut class_of_residue = vec![u32::MAX; du];
        let mut reps: Vec<u64> = Vec::new();
        for r in 1..d {
            if gcd_u64(r, d) != 1 || class_of_residue[r as usize] != u32::MAX {
                continue;
            }
            let id = reps.len() as u32;
            let mut orbit_min = r;
            for &s in &squares {
                let x = r * s % d;
                class_of_residue[x as usize] = id;
                orbit_min = orbit_min.min(x);
            }
            reps.push(orbit_min);
        }
        let eps = reps
            .iter()
            .map(|&r| if r % 4 == 1 { 0 } else { 1 })
            .collect();
        let omega8 = reps
            .iter()
            .map(|&r| match r % 8 {
                1 | 7 => 0,
                _ => 1,
            })
            .collect();
        let qr_at = reps
            .iter()
            .map(|&r| {
                odd_s
                    .iter()
                    .map(|&q| u8::from(legendre_unchecked(r as i64, q) != 1))
                    .collect()
            })
            .collect();
        ClassTable {
            d,
            class_of_residue,
            reps,
            eps,
            omega8,
            qr_at,
            odd_s: odd_s.to_vec(),
        }
    }

    pub fn modulus(&self) -> u64 {
        self.d
    }

    pub fn class_count(&self) -> usize {
        self.reps.len()
    }

    /// Class id of an integer coprime to D.
    pub fn class_of(&self, x: i64) -> Result<u32> {
        let r = x.rem_euclid(self.d as i64) as u64;
        let id = self.class_of_residue[r as usize];
        if id == u32::MAX {
            return Err(Error::InvalidArgument(format!(
                "{x} is not coprime to D = {}",
                self.d
            )));
        }
        Ok(id)
    }

    /// Canonical (smallest positive) representative of a class.
    pub fn rep(&self, id: u32) -> u64 {
        self.reps[id as usize]
    }

    pub fn product(&self, a: u32, b: u32) -> u32 {
        let r = self.reps[a as usize] * self.reps[b as usize] % self.d;
        self.class_of_residue[r as usize]
    }

    pub fn eps(&self, id: u32) -> u8 {
        self.eps[id as usize]
    }

    pub fn omega8(&self, id: u32) -> u8 {
        self.omega8[id as usize]
    }

    /// Bit of (p | q) for p in this class and q the i-th odd prime of S.
    pub fn qr_bit(&self, id: u32, s_index: usize) -> u8 {
        self.qr_at[id as usize][s_index]
    }

    pub fn odd_s_index(&self, q: u64) -> Option<usize> {
        self.odd_s.iter().position(|&x| x == q)
    }
}

// ---------------------------------------------------------------------------
// Per-family caches
// ---------------------------------------------------------------------------

struct FamilyData {
    class_table: Arc<ClassTable>,
    ws_memo: RwLock<HashMap<(Place, u8), Arc<SubspaceF2>>>,
}

static FAMILY_DATA: LazyLock<RwLock<HashMap<[i64; 3], Arc<FamilyData>>>> =
    LazyLock::new(|| RwLock::new(HashMap::new()));

fn family_data(family: &TwistFamily) -> Arc<FamilyData> {
    if let Some(data) = FAMILY_DATA.read().unwrap().get(&family.c) {
        return data.clone();
    }
    let data = Arc::new(FamilyData {
        class_table: Arc::new(ClassTable::build(family.d, &family.odd_s)),
        ws_memo: RwLock::new(HashMap::new()),
    });
    FAMILY_DATA
        .write()
        .unwrap()
        .entry(family.c)
        .or_insert(data)
        .clone()
}

/// Class table for an arbitrary modulus, for callers working with (Z/D)*
/// outside a family context. Residue data at the odd primes of D is included.
pub fn class_table_for_modulus(d: u64) -> Result<Arc<ClassTable>> {
    if d < 1 || d > 200_000 {
        return Err(Error::InvalidArgument(format!(
            "modulus {d} outside supported range"
        )));
    }
    let odd: Vec<u64> = odd_prime_factors(d);
    Ok(Arc::new(ClassTable::build(d, &odd)))
}

fn ws_cache_path(family: &TwistFamily, place: Place, class_bits: u8) -> Option<std::path::PathBuf> {
    let dir = std::env::var_os("TWISTRANK_CACHE")?;
    let mut path = std::path::PathBuf::from(dir);
    path.push(format!(
        "ws_c{}_{}_{}_p{}_k{}.json",
        family.c[0], family.c[1], family.c[2], place, class_bits
    ));
    Some(path)
}

// ---------------------------------------------------------------------------
// Hilbert Gram matrices and block spaces
// ---------------------------------------------------------------------------

/// Gram matrix of the Hilbert pairing on Q_nu^*/(Q_nu^*)² in the bit
/// coordinates of [`SquareClass`]. For an odd prime only eps(p) enters.
fn class_gram(place_kind: BlockKind, eps: u8) -> Vec<Vec<u8>> {
    match place_kind {
        BlockKind::Infinity => vec![vec![1]],
        BlockKind::Two => vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]],
        BlockKind::Odd => vec![vec![eps, 1], vec![1, 0]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Infinity,
    Two,
    Odd,
}

/// Where a block of V lives: an actual place, or the i-th formal twist prime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSite {
    Place(Place),
    FormalPrime(usize),
}

impl std::fmt::Display for BlockSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlockSite::Place(p) => write!(f, "{p}"),
            BlockSite::FormalPrime(i) => write!(f, "p{}", i + 1),
        }
    }
}

/// One local factor V_nu: triples over the local square-class group with the
/// Hilbert-symbol symplectic form.
#[derive(Debug, Clone)]
pub struct LocalTripleSpace {
    site: BlockSite,
    class_dim: usize,
    form: BilinearFormF2,
}

impl LocalTripleSpace {
    fn new(site: BlockSite, eps: u8) -> LocalTripleSpace {
        let kind = match site {
            BlockSite::Place(Place::RealInfinity) => BlockKind::Infinity,
            BlockSite::Place(Place::Two) => BlockKind::Two,
            BlockSite::Place(Place::OddPrime(_)) | BlockSite::FormalPrime(_) => BlockKind::Odd,
        };
        let g = class_gram(kind, eps);
        let r = g.len();
        let dim = 2 * r;
        let mut rows = vec![VectorF2::zero(dim); dim];
        for i in 0..r {
            for j in 0..r {
                if g[i][j] == 1 {
                    rows[i].set(r + j, true);
                    rows[r + i].set(j, true);
                }
            }
        }
        LocalTripleSpace {
            site,
            class_dim: r,
            form: BilinearFormF2::from_rows(rows).expect("block gram is symmetric"),
        }
    }

    pub fn site(&self) -> BlockSite {
        self.site
    }

    /// Dimension of the block (2 at infinity, 6 at 2, 4 at an odd prime).
    pub fn dim(&self) -> usize {
        2 * self.class_dim
    }

    pub fn class_dim(&self) -> usize {
        self.class_dim
    }

    pub fn form(&self) -> &BilinearFormF2 {
        &self.form
    }

    /// Block vector for the triple (u1, u2, u1·u2) given by class bits.
    pub fn vector_from_class_bits(&self, u1: u8, u2: u8) -> VectorF2 {
        debug_assert!(u1 < 1 << self.class_dim && u2 < 1 << self.class_dim);
        let mut v = VectorF2::zero(self.dim());
        for i in 0..self.class_dim {
            if u1 >> i & 1 == 1 {
                v.set(i, true);
            }
            if u2 >> i & 1 == 1 {
                v.set(self.class_dim + i, true);
            }
        }
        v
    }

    /// Class bits (u1, u2, u3) of a block vector; u3 = u1 XOR u2.
    pub fn class_bits_of(&self, v: &VectorF2) -> (u8, u8, u8) {
        debug_assert_eq!(v.dim(), self.dim());
        let mut u1 = 0u8;
        let mut u2 = 0u8;
        for i in 0..self.class_dim {
            u1 |= (v.get(i) as u8) << i;
            u2 |= (v.get(self.class_dim + i) as u8) << i;
        }
        (u1, u2, u1 ^ u2)
    }
}

// ---------------------------------------------------------------------------
// Twist-prime data providers (actual primes vs formal symbol data)
// ---------------------------------------------------------------------------

/// Answers the symbol questions the space builders ask about twist primes.
/// The real provider evaluates symbols directly; the formal provider expands
/// them into eps bits, class characters, and stored Legendre bits.
pub(crate) trait PrimeData: Send + Sync {
    fn count(&self) -> usize;
    fn eps(&self, i: usize) -> u8;
    fn omega8(&self, i: usize) -> u8;
    /// Class bits of p_i at a finite place of S (valuation bit is 0).
    fn class_at_s_place(&self, i: usize, place: Place) -> u8;
    /// Bit of the Legendre symbol (p_i | p_j), i != j.
    fn pair_bit(&self, i: usize, j: usize) -> u8;
    /// Bit of (x | p_i) for integers x supported on S and sign.
    fn s_unit_bit(&self, x: i64, i: usize) -> u8;
}

struct RealPrimes {
    primes: Vec<u64>,
}

impl PrimeData for RealPrimes {
    fn count(&self) -> usize {
        self.primes.len()
    }

    fn eps(&self, i: usize) -> u8 {
        u8::from(self.primes[i] % 4 == 3)
    }

    fn omega8(&self, i: usize) -> u8 {
        match self.primes[i] % 8 {
            1 | 7 => 0,
            _ => 1,
        }
    }

    fn class_at_s_place(&self, i: usize, place: Place) -> u8 {
        square_class_int(self.primes[i] as i64, place)
            .expect("prime is nonzero")
            .bits()
    }

    fn pair_bit(&self, i: usize, j: usize) -> u8 {
        u8::from(legendre_unchecked(self.primes[i] as i64, self.primes[j]) == -1)
    }

    fn s_unit_bit(&self, x: i64, i: usize) -> u8 {
        u8::from(legendre_unchecked(x, self.primes[i]) == -1)
    }
}

struct FormalPrimes {
    class_ids: Vec<u32>,
    table: Arc<ClassTable>,
    /// Upper-triangular storage: bit of (p_i | p_j) for i < j.
    pair_bits: Vec<Vec<u8>>,
}

impl FormalPrimes {
    fn qr_at_prime(&self, q: u64, i: usize) -> u8 {
        // (q | p_i) from (p_i | q) by quadratic reciprocity.
        let s_index = self.table.odd_s_index(q).expect("q is an odd prime of S");
        let id = self.class_ids[i];
        let eps_q = u8::from(q % 4 == 3);
        self.table.qr_bit(id, s_index) ^ (eps_q & self.table.eps(id))
    }
}

impl PrimeData for FormalPrimes {
    fn count(&self) -> usize {
        self.class_ids.len()
    }

    fn eps(&self, i: usize) -> u8 {
        self.table.eps(self.class_ids[i])
    }

    fn omega8(&self, i: usize) -> u8 {
        self.table.omega8(self.class_ids[i])
    }

    fn class_at_s_place(&self, i: usize, place: Place) -> u8 {
        let id = self.class_ids[i];
        match place {
            Place::RealInfinity => 0,
            Place::Two => (self.table.eps(id) << 1) | (self.table.omega8(id) << 2),
            Place::OddPrime(q) => {
                let s_index = self.table.odd_s_index(q).expect("place is in S");
                self.table.qr_bit(id, s_index) << 1
            }
        }
    }

    fn pair_bit(&self, i: usize, j: usize) -> u8 {
        debug_assert_ne!(i, j);
        if i < j {
            self.pair_bits[i][j - i - 1]
        } else {
            self.pair_bits[j][i - j - 1] ^ (self.eps(i) & self.eps(j))
        }
    }

    fn s_unit_bit(&self, x: i64, i: usize) -> u8 {
        debug_assert!(x != 0);
        let mut bit = 0u8;
        let mut n = x.unsigned_abs();
        if x < 0 {
            bit ^= self.eps(i);
        }
        while n % 2 == 0 {
            n /= 2;
            bit ^= self.omega8(i);
        }
        let odd_s: Vec<u64> = self.table.odd_s.clone();
        for q in odd_s {
            while n % q == 0 {
                n /= q;
                bit ^= self.qr_at_prime(q, i);
            }
        }
        assert_eq!(n, 1, "formal evaluation of (x|p_i) with x = {x} not supported on S");
        bit
    }
}

// ---------------------------------------------------------------------------
// GlobalSpace
// ---------------------------------------------------------------------------

struct Block {
    space: LocalTripleSpace,
    offset: usize,
}

/// The product space V = Π V_nu over B = S ∪ {p | b}, with its block-diagonal
/// symplectic form. Holds the twist data needed to build U and W.
pub struct GlobalSpace {
    family: TwistFamily,
    /// Actual twist parameter; None in formal mode.
    b: Option<i64>,
    provider: Box<dyn PrimeData>,
    blocks: Vec<Block>,
    form: BilinearFormF2,
    m: usize,
}

/// Unit generators of U, in the global canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnitGen {
    MinusOne,
    Two,
    SPrime(u64),
    TwistPrime(usize),
}

impl GlobalSpace {
    /// Formal-mode assembly: twist blocks carry only an index.
    fn assemble_formal(family: TwistFamily, provider: Box<dyn PrimeData>) -> GlobalSpace {
        let mut blocks = Vec::new();
        let mut offset = 0usize;
        for place in family.s_places() {
            let eps = match place {
                Place::OddPrime(q) => u8::from(q % 4 == 3),
                _ => 0,
            };
            let space = LocalTripleSpace::new(BlockSite::Place(place), eps);
            let dim = space.dim();
            blocks.push(Block { space, offset });
            offset += dim;
        }
        for i in 0..provider.count() {
            let space = LocalTripleSpace::new(BlockSite::FormalPrime(i), provider.eps(i));
            let dim = space.dim();
            blocks.push(Block { space, offset });
            offset += dim;
        }
        let form = BilinearFormF2::block_diagonal(
            &blocks.iter().map(|b| b.space.form().clone()).collect::<Vec<_>>(),
        );
        debug_assert_eq!(offset % 2, 0);
        GlobalSpace {
            family,
            b: None,
            provider,
            blocks,
            form,
            m: offset / 2,
        }
    }

    pub fn family(&self) -> &TwistFamily {
        &self.family
    }

    pub fn b(&self) -> Option<i64> {
        self.b
    }

    /// Half the dimension of V.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        2 * self.m
    }

    pub fn form(&self) -> &BilinearFormF2 {
        &self.form
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, idx: usize) -> (&LocalTripleSpace, usize) {
        (&self.blocks[idx].space, self.blocks[idx].offset)
    }

    /// Number of twist primes (omega of b).
    pub fn twist_prime_count(&self) -> usize {
        self.provider.count()
    }

    fn s_place_count(&self) -> usize {
        self.blocks.len() - self.provider.count()
    }

    fn unit_gens(&self) -> Vec<UnitGen> {
        let mut gens = vec![UnitGen::MinusOne, UnitGen::Two];
        gens.extend(self.family.odd_s.iter().map(|&q| UnitGen::SPrime(q)));
        gens.extend((0..self.provider.count()).map(UnitGen::TwistPrime));
        gens
    }

    /// Class bits of the generator's value at the given block.
    fn gen_class_at_block(&self, gen: UnitGen, block_idx: usize) -> u8 {
        let block = &self.blocks[block_idx];
        match block.space.site() {
            BlockSite::Place(place) if block_idx < self.s_place_count() => match gen {
                UnitGen::MinusOne => square_class_int(-1, place).unwrap().bits(),
                UnitGen::Two => square_class_int(2, place).unwrap().bits(),
                UnitGen::SPrime(q) => square_class_int(q as i64, place).unwrap().bits(),
                UnitGen::TwistPrime(i) => match place {
                    Place::RealInfinity => 0,
                    _ => self.provider.class_at_s_place(i, place),
                },
            },
            // Twist-prime block for index j.
            _ => {
                let j = block_idx - self.s_place_count();
                match gen {
                    UnitGen::MinusOne => self.provider.eps(j) << 1,
                    UnitGen::Two => self.provider.omega8(j) << 1,
                    UnitGen::SPrime(q) => self.provider.s_unit_bit(q as i64, j) << 1,
                    UnitGen::TwistPrime(i) if i == j => 1,
                    UnitGen::TwistPrime(i) => self.provider.pair_bit(i, j) << 1,
                }
            }
        }
    }

    /// The span of the global unit generators: for -1 and for every finite
    /// prime q of B the pair of triples (q, q, 1) and (1, q, q), each taken
    /// to its square classes at all places of B.
    pub fn u_subspace(&self) -> SubspaceF2 {
        let dim = self.dim();
        let mut gens: Vec<VectorF2> = Vec::with_capacity(2 * self.unit_gens().len());
        for gen in self.unit_gens() {
            for first_slot in [true, false] {
                let mut v = VectorF2::zero(dim);
                for (idx, block) in self.blocks.iter().enumerate() {
                    let bits = self.gen_class_at_block(gen, idx);
                    let (u1, u2) = if first_slot { (bits, bits) } else { (0, bits) };
                    let bv = block.space.vector_from_class_bits(u1, u2);
                    for k in 0..bv.dim() {
                        if bv.get(k) {
                            v.set(block.offset + k, true);
                        }
                    }
                }
                gens.push(v);
            }
        }
        SubspaceF2::from_generators(dim, &gens).expect("generators have ambient dimension")
    }

    /// Block-local generators of W at the i-th twist prime (the two
    /// 2-torsion images), as vectors in the 4-dimensional block.
    fn w_twist_block_gens(&self, i: usize) -> [VectorF2; 2] {
        let [d12, d13, d23] = self.family.differences();
        let space = &self.blocks[self.s_place_count() + i].space;
        // qr bit of the unit part of b/p_i at p_i
        let mut b_unit = 0u8;
        for j in 0..self.provider.count() {
            if j != i {
                b_unit ^= self.provider.pair_bit(j, i);
            }
        }
        if self.b.is_some_and(|b| b < 0) {
            b_unit ^= self.provider.eps(i);
        }
        // ((c1-c2)(c1-c3), b(c1-c2), b(c1-c3)): unit, then valuation 1 twice
        let g1c1 = (self.provider.s_unit_bit(d12, i) ^ self.provider.s_unit_bit(d13, i)) << 1;
        let g1c2 = 1 | ((b_unit ^ self.provider.s_unit_bit(d12, i)) << 1);
        // (b(c3-c1), b(c3-c2), (c3-c1)(c3-c2))
        let g2c1 = 1 | ((b_unit ^ self.provider.s_unit_bit(-d13, i)) << 1);
        let g2c2 = 1 | ((b_unit ^ self.provider.s_unit_bit(-d23, i)) << 1);
        [
            space.vector_from_class_bits(g1c1, g1c2),
            space.vector_from_class_bits(g2c1, g2c2),
        ]
    }

    /// Square-class bits of b at an S-place block.
    fn b_class_at(&self, place: Place) -> u8 {
        match self.b {
            Some(b) => square_class_int(b, place).unwrap().bits(),
            None => {
                // formal twists are positive products of the formal primes
                let mut bits = 0u8;
                if place != Place::RealInfinity {
                    for i in 0..self.provider.count() {
                        bits ^= self.provider.class_at_s_place(i, place);
                    }
                }
                bits
            }
        }
    }

    /// W = W_S × W_b: local descent images at the places of S (memoized per
    /// class of b) and the closed-form 2-torsion generators at twist primes.
    pub fn w_subspace(&self) -> Result<SubspaceF2> {
        let dim = self.dim();
        let mut gens: Vec<VectorF2> = Vec::new();
        for (idx, place) in self.family.s_places().into_iter().enumerate() {
            let class_bits = self.b_class_at(place);
            let block = ws_block_cached(&self.family, place, class_bits)?;
            let offset = self.blocks[idx].offset;
            for v in block.basis() {
                gens.push(v.embed(offset, dim));
            }
        }
        for i in 0..self.provider.count() {
            let offset = self.blocks[self.s_place_count() + i].offset;
            for v in self.w_twist_block_gens(i) {
                gens.push(v.embed(offset, dim));
            }
        }
        SubspaceF2::from_generators(dim, &gens)
    }
}

/// Builds V for an actual twist: blocks at S in canonical order, then at the
/// primes of b ascending.
pub fn build_v(family: &TwistFamily, b: i64) -> Result<GlobalSpace> {
    let primes = family.validate_twist(b)?;
    Ok(build_v_with_factors(family, b, primes))
}

pub(crate) fn build_v_with_factors(
    family: &TwistFamily,
    b: i64,
    primes: Vec<u64>,
) -> GlobalSpace {
    debug_assert!(primes.windows(2).all(|w| w[0] < w[1]));
    let family = family.clone();
    let provider = RealPrimes { primes };
    // Assemble by hand to keep the actual prime values in the block sites.
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    for place in family.s_places() {
        let eps = match place {
            Place::OddPrime(q) => u8::from(q % 4 == 3),
            _ => 0,
        };
        let space = LocalTripleSpace::new(BlockSite::Place(place), eps);
        let dim = space.dim();
        blocks.push(Block { space, offset });
        offset += dim;
    }
    for (i, &p) in provider.primes.iter().enumerate() {
        let space = LocalTripleSpace::new(BlockSite::Place(Place::OddPrime(p)), provider.eps(i));
        let dim = space.dim();
        blocks.push(Block { space, offset });
        offset += dim;
    }
    let form = BilinearFormF2::block_diagonal(
        &blocks.iter().map(|b| b.space.form().clone()).collect::<Vec<_>>(),
    );
    GlobalSpace {
        family,
        b: Some(b),
        provider: Box::new(provider),
        blocks,
        form,
        m: offset / 2,
    }
}

/// Builds V for a formal twist model: class ids and pairwise Legendre bits
/// stand in for actual primes.
pub(crate) fn build_v_formal(
    family: &TwistFamily,
    class_ids: Vec<u32>,
    pair_bits: Vec<Vec<u8>>,
) -> GlobalSpace {
    let table = family.class_table();
    let provider = FormalPrimes {
        class_ids,
        table,
        pair_bits,
    };
    GlobalSpace::assemble_formal(family.clone(), Box::new(provider))
}

/// The span of the unit generators of B embedded in V. Free-function form of
/// [`GlobalSpace::u_subspace`].
pub fn u_subspace(space: &GlobalSpace) -> SubspaceF2 {
    space.u_subspace()
}

/// Free-function form of [`GlobalSpace::w_subspace`].
pub fn w_subspace(space: &GlobalSpace) -> Result<SubspaceF2> {
    space.w_subspace()
}

/// The two closed-form generators of W at a twist prime p | b, as vectors in
/// the 4-dimensional block V_p.
pub fn w_twist_prime(family: &TwistFamily, b: i64, p: u64) -> Result<[VectorF2; 2]> {
    let primes = family.validate_twist(b)?;
    let Some(i) = primes.iter().position(|&q| q == p) else {
        return Err(Error::InvalidArgument(format!("{p} does not divide b = {b}")));
    };
    let space = build_v_with_factors(family, b, primes);
    Ok(space.w_twist_block_gens(i))
}

// ---------------------------------------------------------------------------
// Local descent image by point enumeration
// ---------------------------------------------------------------------------

/// Precision schedule for the local point search, and the hard cap.
const PRECISION_SCHEDULE: [u32; 4] = [3, 5, 8, 12];
const PRECISION_CAP: u32 = 20;

fn big_rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// The image of E_b(Q_nu) under x ↦ (x−bc1, x−bc2, x−bc3), as a subspace of
/// the block V_nu. Seeds with the three 2-torsion images, then samples x
/// around 0 and the roots at growing precision until the rank reaches half
/// the block dimension.
pub fn w_local_image(family: &TwistFamily, b: i64, place: Place) -> Result<SubspaceF2> {
    family.validate_twist(b)?;
    let in_s = family.s_places().contains(&place);
    let divides_b = matches!(place, Place::OddPrime(p) if b.unsigned_abs() % p == 0);
    if !in_s && !divides_b {
        return Err(Error::InvalidArgument(format!(
            "{place} is neither in S nor a prime of b"
        )));
    }
    let roots: Vec<BigRational> = family.c.iter().map(|&ci| big_rat(b) * big_rat(ci)).collect();
    local_image_from_roots(&roots, place)
}

pub(crate) fn local_image_from_roots(
    roots: &[BigRational],
    place: Place,
) -> Result<SubspaceF2> {
    let eps = match place {
        Place::OddPrime(q) => u8::from(q % 4 == 3),
        _ => 0,
    };
    let space = LocalTripleSpace::new(BlockSite::Place(place), eps);
    let target = space.class_dim();
    let mut gens: Vec<VectorF2> = Vec::new();

    let push_classes = |gens: &mut Vec<VectorF2>, c1: SquareClass, c2: SquareClass| {
        gens.push(space.vector_from_class_bits(c1.bits(), c2.bits()));
    };

    // 2-torsion seeds: x = root_i, coordinate i replaced by the product of
    // the other two.
    for i in 0..3 {
        let mut coords: Vec<SquareClass> = Vec::new();
        for j in 0..3 {
            if j != i {
                let diff = &roots[i] - &roots[j];
                coords.push(square_class_big(&diff, place)?);
            }
        }
        let missing = coords[0].compose(&coords[1])?;
        let triple = match i {
            0 => (missing, coords[0]),
            1 => (coords[0], missing),
            _ => (coords[0], coords[1]),
        };
        push_classes(&mut gens, triple.0, triple.1);
    }

    let rank_of = |gens: &[VectorF2]| -> usize {
        crate::f2linalg::row_reduce(gens).map(|(_, r)| r).unwrap_or(0)
    };
    if rank_of(&gens) >= target {
        return SubspaceF2::from_generators(space.dim(), &gens);
    }

    if place == Place::RealInfinity {
        let mut sorted = roots.to_vec();
        sorted.sort();
        let one = BigRational::one();
        let samples = [
            &sorted[0] - &one,
            (&sorted[0] + &sorted[1]) / big_rat(2),
            (&sorted[1] + &sorted[2]) / big_rat(2),
            &sorted[2] + &one,
        ];
        for x in samples {
            try_point(&x, roots, place, &space, &mut gens)?;
        }
        if rank_of(&gens) >= target {
            return SubspaceF2::from_generators(space.dim(), &gens);
        }
        return Err(Error::PrecisionExhausted(
            "real-place image did not reach half dimension".into(),
        ));
    }

    let p: u64 = match place {
        Place::Two => 2,
        Place::OddPrime(q) => q,
        Place::RealInfinity => unreachable!(),
    };
    let mut schedule: Vec<u32> = PRECISION_SCHEDULE.to_vec();
    schedule.push(PRECISION_CAP);
    for k in schedule {
        let units: Vec<i64> = if p == 2 {
            let depth = 1i64 << (k.min(7) + 1);
            (1..depth).step_by(2).collect()
        } else {
            let depth = (p as i64).pow(2).min(600);
            (1..=depth).filter(|m| m % p as i64 != 0).collect()
        };
        let mut centers: Vec<BigRational> = vec![BigRational::zero()];
        centers.extend(roots.iter().cloned());
        for j in -(2 * k as i32)..=(2 * k as i32) {
            let scale = pow_rat(p, j);
            for center in &centers {
                for &m in &units {
                    for sign in [1i64, -1] {
                        let x = center + big_rat(sign * m) * &scale;
                        try_point(&x, roots, place, &space, &mut gens)?;
                    }
                }
            }
            if rank_of(&gens) >= target {
                return SubspaceF2::from_generators(space.dim(), &gens);
            }
        }
        if rank_of(&gens) >= target {
            return SubspaceF2::from_generators(space.dim(), &gens);
        }
    }
    Err(Error::PrecisionExhausted(format!(
        "local image at {place} stuck below half dimension at precision cap {PRECISION_CAP}"
    )))
}

fn pow_rat(p: u64, j: i32) -> BigRational {
    let pb = BigInt::from(p);
    if j >= 0 {
        BigRational::from_integer(pb.pow(j as u32))
    } else {
        BigRational::new(BigInt::one(), pb.pow((-j) as u32))
    }
}

fn try_point(
    x: &BigRational,
    roots: &[BigRational],
    place: Place,
    space: &LocalTripleSpace,
    gens: &mut Vec<VectorF2>,
) -> Result<()> {
    let t1 = x - &roots[0];
    let t2 = x - &roots[1];
    let t3 = x - &roots[2];
    if t1.is_zero() || t2.is_zero() || t3.is_zero() {
        return Ok(());
    }
    let f = &t1 * &t2 * &t3;
    if !square_class_big(&f, place)?.is_identity() {
        return Ok(());
    }
    let c1 = square_class_big(&t1, place)?;
    let c2 = square_class_big(&t2, place)?;
    gens.push(space.vector_from_class_bits(c1.bits(), c2.bits()));
    Ok(())
}

/// W_nu for the class of b at a place of S, memoized per family. Only the
/// square class of b at nu matters, so the enumeration runs on a small
/// representative of that class.
pub(crate) fn ws_block_cached(
    family: &TwistFamily,
    place: Place,
    class_bits: u8,
) -> Result<Arc<SubspaceF2>> {
    let data = family_data(family);
    if let Some(block) = data.ws_memo.read().unwrap().get(&(place, class_bits)) {
        return Ok(block.clone());
    }
    if let Some(path) = ws_cache_path(family, place, class_bits) {
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(block) = serde_json::from_str::<SubspaceF2>(&text) {
                let block = Arc::new(block);
                data.ws_memo
                    .write()
                    .unwrap()
                    .insert((place, class_bits), block.clone());
                return Ok(block);
            }
        }
    }
    let rep = SquareClass::from_bits(place, class_bits).representative();
    let roots: Vec<BigRational> = family
        .c
        .iter()
        .map(|&ci| big_rat(rep) * big_rat(ci))
        .collect();
    let block = Arc::new(local_image_from_roots(&roots, place)?);
    if let Some(path) = ws_cache_path(family, place, class_bits) {
        if let Some(dir) = path.parent() {
            let _ = std::fs::create_dir_all(dir);
        }
        let _ = std::fs::write(&path, serde_json::to_string(&*block).unwrap());
    }
    data.ws_memo
        .write()
        .unwrap()
        .insert((place, class_bits), block.clone());
    Ok(block)
}

/// Splits a twist parameter whose support meets D into a scaled family and a
/// coprime remainder: y² = Π(x − b·cᵢ) equals the family with roots d·cᵢ
/// twisted by b/d, where d is the product of the primes b shares with D.
pub fn fold_twist(family: &TwistFamily, b: i64) -> Result<(TwistFamily, i64)> {
    if b == 0 {
        return Err(Error::InvalidTwist("b must be nonzero".into()));
    }
    let mut shared: i64 = 1;
    let mut n = b.unsigned_abs();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return Err(Error::InvalidTwist(format!("{b} is not squarefree")));
            }
            if family.d % p == 0 {
                shared *= p as i64;
            }
        }
        p += 1;
    }
    if n > 1 && family.d % n == 0 {
        shared *= n as i64;
    }
    if shared == 1 {
        return Ok((family.clone(), b));
    }
    let scaled = family.scaled(shared)?;
    Ok((scaled, b / shared))
}
