//! Bit-packed linear algebra over F₂: spans, ranks, intersections, and
//! symplectic-form bookkeeping.
//!
//! Reduced bases are in reduced row echelon form with the lowest-index pivot
//! first, so they are unique for the subspace and byte-identical across runs
//! regardless of generator order.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A vector in F₂^dim, packed into 64-bit words (bit i of word w is
/// coordinate 64·w + i).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VectorF2 {
    dim: usize,
    words: Vec<u64>,
}

impl VectorF2 {
    pub fn zero(dim: usize) -> VectorF2 {
        VectorF2 {
            dim,
            words: vec![0; dim.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: &[u8]) -> VectorF2 {
        let mut v = VectorF2::zero(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b & 1 == 1 {
                v.set(i, true);
            }
        }
        v
    }

    /// Parse a string like "1101" (index 0 first).
    pub fn from_str_bits(s: &str) -> VectorF2 {
        let bits: Vec<u8> = s
            .chars()
            .map(|c| if c == '1' { 1 } else { 0 })
            .collect();
        VectorF2::from_bits(&bits)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.dim);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        debug_assert!(i < self.dim);
        if bit {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn xor_assign(&mut self, other: &VectorF2) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// Parity of the standard inner product <self, other>.
    pub fn dot(&self, other: &VectorF2) -> u8 {
        debug_assert_eq!(self.dim, other.dim);
        let mut acc = 0u32;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= (a & b).count_ones();
        }
        (acc & 1) as u8
    }

    pub fn lowest_set_bit(&self) -> Option<usize> {
        for (w, &word) in self.words.iter().enumerate() {
            if word != 0 {
                return Some(w * 64 + word.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn popcount(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Copy of this vector embedded at `offset` in a larger ambient space.
    pub fn embed(&self, offset: usize, ambient: usize) -> VectorF2 {
        debug_assert!(offset + self.dim <= ambient);
        let mut out = VectorF2::zero(ambient);
        for i in 0..self.dim {
            if self.get(i) {
                out.set(offset + i, true);
            }
        }
        out
    }

    /// Coordinates [offset, offset+len) as a new vector.
    pub fn extract(&self, offset: usize, len: usize) -> VectorF2 {
        debug_assert!(offset + len <= self.dim);
        let mut out = VectorF2::zero(len);
        for i in 0..len {
            if self.get(offset + i) {
                out.set(i, true);
            }
        }
        out
    }
}

impl std::fmt::Display for VectorF2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.dim {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        Ok(())
    }
}

/// Unique reduced echelon basis spanning the same subspace as `generators`,
/// together with its rank. Errors on ragged input.
pub fn row_reduce(generators: &[VectorF2]) -> Result<(Vec<VectorF2>, usize)> {
    if let Some(first) = generators.first() {
        if generators.iter().any(|g| g.dim() != first.dim()) {
            return Err(Error::InvalidArgument(
                "generators have mismatched lengths".into(),
            ));
        }
    }
    let mut basis: Vec<VectorF2> = Vec::new();
    for g in generators {
        let mut v = g.clone();
        for b in &basis {
            let p = b.lowest_set_bit().unwrap();
            if v.get(p) {
                v.xor_assign(b);
            }
        }
        if let Some(p) = v.lowest_set_bit() {
            for b in &mut basis {
                if b.get(p) {
                    b.xor_assign(&v);
                }
            }
            let pos = basis
                .binary_search_by_key(&p, |b| b.lowest_set_bit().unwrap())
                .unwrap_err();
            basis.insert(pos, v);
        }
    }
    let rank = basis.len();
    Ok((basis, rank))
}

/// A subspace of F₂^ambient_dim held by its reduced echelon basis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceF2 {
    ambient_dim: usize,
    basis: Vec<VectorF2>,
}

impl SubspaceF2 {
    pub fn zero(ambient_dim: usize) -> SubspaceF2 {
        SubspaceF2 {
            ambient_dim,
            basis: Vec::new(),
        }
    }

    pub fn from_generators(ambient_dim: usize, generators: &[VectorF2]) -> Result<SubspaceF2> {
        if generators.iter().any(|g| g.dim() != ambient_dim) {
            return Err(Error::InvalidArgument(
                "generator length differs from ambient dimension".into(),
            ));
        }
        let (basis, _) = row_reduce(generators)?;
        Ok(SubspaceF2 { ambient_dim, basis })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// The reduced echelon basis, pivots ascending.
    pub fn basis(&self) -> &[VectorF2] {
        &self.basis
    }

    pub fn contains(&self, v: &VectorF2) -> bool {
        debug_assert_eq!(v.dim(), self.ambient_dim);
        let mut v = v.clone();
        for b in &self.basis {
            let p = b.lowest_set_bit().unwrap();
            if v.get(p) {
                v.xor_assign(b);
            }
        }
        v.is_zero()
    }

    /// Span of the union of the two subspaces.
    pub fn sum(&self, other: &SubspaceF2) -> Result<SubspaceF2> {
        if self.ambient_dim != other.ambient_dim {
            return Err(Error::InvalidArgument(
                "ambient dimension mismatch".into(),
            ));
        }
        let gens: Vec<VectorF2> = self
            .basis
            .iter()
            .chain(other.basis.iter())
            .cloned()
            .collect();
        SubspaceF2::from_generators(self.ambient_dim, &gens)
    }

    /// Exact intersection, computed from the left kernel of the stacked basis
    /// matrix [A; B]: a kernel row (λ, μ) has Σλᵢaᵢ = Σμⱼbⱼ, which is an
    /// element of A ∩ B.
    pub fn intersect(&self, other: &SubspaceF2) -> Result<SubspaceF2> {
        if self.ambient_dim != other.ambient_dim {
            return Err(Error::InvalidArgument(
                "ambient dimension mismatch".into(),
            ));
        }
        let ra = self.basis.len();
        let rb = other.basis.len();
        let tags = ra + rb;
        let full = self.ambient_dim + tags;
        // Stack [A; B], augmenting each row with an identity tag.
        let mut rows: Vec<VectorF2> = Vec::with_capacity(tags);
        for (i, b) in self.basis.iter().chain(other.basis.iter()).enumerate() {
            let mut row = b.embed(0, full);
            row.set(self.ambient_dim + i, true);
            rows.push(row);
        }
        let (reduced, _) = row_reduce(&rows)?;
        let mut elements = Vec::new();
        for row in &reduced {
            let main = row.extract(0, self.ambient_dim);
            if main.is_zero() {
                let mut elem = VectorF2::zero(self.ambient_dim);
                for i in 0..ra {
                    if row.get(self.ambient_dim + i) {
                        elem.xor_assign(&self.basis[i]);
                    }
                }
                elements.push(elem);
            }
        }
        SubspaceF2::from_generators(self.ambient_dim, &elements)
    }

    /// All 2^rank elements, in Gray-code order starting from zero.
    pub fn elements(&self) -> impl Iterator<Item = VectorF2> + '_ {
        let rank = self.basis.len();
        let total: u64 = 1u64 << rank;
        let mut current = VectorF2::zero(self.ambient_dim);
        let mut idx = 0u64;
        std::iter::from_fn(move || {
            if idx >= total {
                return None;
            }
            if idx > 0 {
                let flip = (idx ^ (idx >> 1)) ^ ((idx - 1) ^ ((idx - 1) >> 1));
                current.xor_assign(&self.basis[flip.trailing_zeros() as usize]);
            }
            idx += 1;
            Some(current.clone())
        })
    }
}

/// A symmetric bilinear form on F₂^dim, held as its Gram bit matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilinearFormF2 {
    dim: usize,
    rows: Vec<VectorF2>,
}

impl BilinearFormF2 {
    pub fn from_rows(rows: Vec<VectorF2>) -> Result<BilinearFormF2> {
        let dim = rows.len();
        if rows.iter().any(|r| r.dim() != dim) {
            return Err(Error::InvalidArgument("gram matrix is not square".into()));
        }
        let form = BilinearFormF2 { dim, rows };
        if !form.is_symmetric() {
            return Err(Error::InvalidArgument("gram matrix is not symmetric".into()));
        }
        Ok(form)
    }

    /// Block-diagonal assembly of smaller forms.
    pub fn block_diagonal(blocks: &[BilinearFormF2]) -> BilinearFormF2 {
        let dim: usize = blocks.iter().map(|b| b.dim).sum();
        let mut rows = Vec::with_capacity(dim);
        let mut offset = 0;
        for b in blocks {
            for r in &b.rows {
                rows.push(r.embed(offset, dim));
            }
            offset += b.dim;
        }
        BilinearFormF2 { dim, rows }
    }

    /// The standard symplectic form on F₂^{2m}: blocks [[0,1],[1,0]].
    pub fn standard_symplectic(m: usize) -> BilinearFormF2 {
        let dim = 2 * m;
        let mut rows = vec![VectorF2::zero(dim); dim];
        for i in 0..m {
            rows[2 * i].set(2 * i + 1, true);
            rows[2 * i + 1].set(2 * i, true);
        }
        BilinearFormF2 { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram_rows(&self) -> &[VectorF2] {
        &self.rows
    }

    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if self.rows[i].get(j) != self.rows[j].get(i) {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_alternating(&self) -> bool {
        (0..self.dim).all(|i| !self.rows[i].get(i))
    }

    pub fn is_nondegenerate(&self) -> bool {
        match row_reduce(&self.rows) {
            Ok((_, rank)) => rank == self.dim,
            Err(_) => false,
        }
    }

    /// G·v as a vector, so that pair(u, v) = <u, G·v>.
    pub fn apply(&self, v: &VectorF2) -> VectorF2 {
        debug_assert_eq!(v.dim(), self.dim);
        let mut out = VectorF2::zero(self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            if row.dot(v) == 1 {
                out.set(i, true);
            }
        }
        out
    }
}

/// uᵀ·G·v over F₂.
pub fn pair(u: &VectorF2, v: &VectorF2, form: &BilinearFormF2) -> Result<u8> {
    if u.dim() != form.dim() || v.dim() != form.dim() {
        return Err(Error::InvalidArgument(
            "vector dimension differs from form dimension".into(),
        ));
    }
    Ok(u.dot(&form.apply(v)))
}

/// True iff `a` is self-orthogonal of half dimension for a symplectic form
/// on an even-dimensional ambient space.
pub fn is_lagrangian(a: &SubspaceF2, form: &BilinearFormF2) -> Result<bool> {
    if form.dim() % 2 != 0 {
        return Err(Error::InvalidArgument(
            "symplectic ambient space must have even dimension".into(),
        ));
    }
    if a.ambient_dim() != form.dim() {
        return Err(Error::InvalidArgument(
            "subspace and form dimensions differ".into(),
        ));
    }
    if a.rank() != form.dim() / 2 {
        return Ok(false);
    }
    let images: Vec<VectorF2> = a.basis().iter().map(|b| form.apply(b)).collect();
    for u in a.basis() {
        for gv in &images {
            if u.dot(gv) == 1 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn v(s: &str) -> VectorF2 {
        VectorF2::from_str_bits(s)
    }

    #[test]
    fn row_reduce_examples() {
        let (basis, rank) = row_reduce(&[v("110"), v("011"), v("101")]).unwrap();
        assert_eq!(rank, 2); // 101 = 110 ⊕ 011
        assert_eq!(basis, vec![v("101"), v("011")]);

        let (_, rank) = row_reduce(&[]).unwrap();
        assert_eq!(rank, 0);

        let (_, rank) = row_reduce(&[v("0000")]).unwrap();
        assert_eq!(rank, 0);

        assert!(row_reduce(&[v("10"), v("100")]).is_err());
    }

    #[test]
    fn row_reduce_is_order_independent() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let dim = rng.gen_range(1..20);
            let count = rng.gen_range(0..8);
            let mut gens: Vec<VectorF2> = (0..count)
                .map(|_| {
                    let mut x = VectorF2::zero(dim);
                    for i in 0..dim {
                        x.set(i, rng.gen());
                    }
                    x
                })
                .collect();
            let (a, _) = row_reduce(&gens).unwrap();
            use rand::seq::SliceRandom;
            gens.shuffle(&mut rng);
            let (b, _) = row_reduce(&gens).unwrap();
            assert_eq!(a, b);
        }
    }

    fn random_subspace(rng: &mut StdRng, dim: usize, gens: usize) -> SubspaceF2 {
        let generators: Vec<VectorF2> = (0..gens)
            .map(|_| {
                let mut x = VectorF2::zero(dim);
                for i in 0..dim {
                    x.set(i, rng.gen());
                }
                x
            })
            .collect();
        SubspaceF2::from_generators(dim, &generators).unwrap()
    }

    #[test]
    fn intersect_examples() {
        let mut rng = StdRng::seed_from_u64(3);
        // A = B -> A
        for _ in 0..50 {
            let a = random_subspace(&mut rng, 12, 5);
            assert_eq!(a.intersect(&a).unwrap(), a);
        }
        // span{10} ∩ span{01} = 0
        let a = SubspaceF2::from_generators(2, &[v("10")]).unwrap();
        let b = SubspaceF2::from_generators(2, &[v("01")]).unwrap();
        assert_eq!(a.intersect(&b).unwrap().rank(), 0);
        // ambient mismatch
        let c = SubspaceF2::from_generators(3, &[v("100")]).unwrap();
        assert!(a.intersect(&c).is_err());
    }

    #[test]
    fn intersect_matches_enumeration_oracle() {
        // Brute force: enumerate all elements of A, keep those in B.
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let na = rng.gen_range(0..11);
            let nb = rng.gen_range(0..11);
            let a = random_subspace(&mut rng, 20, na);
            let b = random_subspace(&mut rng, 20, nb);
            assert!(a.rank() <= 12);
            let inter = a.intersect(&b).unwrap();
            let brute: Vec<VectorF2> = a.elements().filter(|x| b.contains(x)).collect();
            assert_eq!(1usize << inter.rank(), brute.len());
            assert!(brute.iter().all(|x| inter.contains(x)));
        }
    }

    #[test]
    fn pair_examples() {
        let form = BilinearFormF2::standard_symplectic(1);
        assert_eq!(pair(&v("10"), &v("01"), &form).unwrap(), 1);
        assert_eq!(pair(&v("10"), &v("10"), &form).unwrap(), 0);
        assert_eq!(pair(&v("11"), &v("11"), &form).unwrap(), 0);
        assert!(pair(&v("100"), &v("01"), &form).is_err());
    }

    #[test]
    fn pair_is_bilinear() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..500 {
            let m = rng.gen_range(1..6);
            let form = BilinearFormF2::standard_symplectic(m);
            let dim = 2 * m;
            let mut rand_vec = || {
                let mut x = VectorF2::zero(dim);
                for i in 0..dim {
                    x.set(i, rng.gen());
                }
                x
            };
            let u = rand_vec();
            let u2 = rand_vec();
            let w = rand_vec();
            let mut sum = u.clone();
            sum.xor_assign(&u2);
            assert_eq!(
                pair(&sum, &w, &form).unwrap(),
                pair(&u, &w, &form).unwrap() ^ pair(&u2, &w, &form).unwrap()
            );
        }
    }

    #[test]
    fn lagrangian_examples() {
        let form = BilinearFormF2::standard_symplectic(1);
        let a = SubspaceF2::from_generators(2, &[v("10")]).unwrap();
        assert!(is_lagrangian(&a, &form).unwrap());
        let full = SubspaceF2::from_generators(2, &[v("10"), v("01")]).unwrap();
        assert!(!is_lagrangian(&full, &form).unwrap());
        // odd ambient dimension is rejected
        let odd = BilinearFormF2::from_rows(vec![v("1")]).unwrap();
        let sub = SubspaceF2::zero(1);
        assert!(is_lagrangian(&sub, &odd).is_err());
    }

    #[test]
    fn elements_enumerates_whole_subspace() {
        let a = SubspaceF2::from_generators(5, &[v("10010"), v("01000"), v("00101")]).unwrap();
        let all: std::collections::HashSet<Vec<u8>> = a
            .elements()
            .map(|x| (0..5).map(|i| u8::from(x.get(i))).collect())
            .collect();
        assert_eq!(all.len(), 8);
        assert!(all.contains(&vec![0, 0, 0, 0, 0]));
        assert!(all.contains(&vec![1, 1, 0, 1, 0]));
    }

    proptest! {
        #[test]
        fn dimension_formula(seed in 0u64..500) {
            let mut rng = StdRng::seed_from_u64(seed);
            let dim = rng.gen_range(1..24);
            let na = rng.gen_range(0..10);
            let nb = rng.gen_range(0..10);
            let a = random_subspace(&mut rng, dim, na);
            let b = random_subspace(&mut rng, dim, nb);
            let inter = a.intersect(&b).unwrap();
            let sum = a.sum(&b).unwrap();
            prop_assert_eq!(a.rank() + b.rank(), inter.rank() + sum.rank());
        }

        #[test]
        fn intersect_commutative_associative(seed in 0u64..300) {
            let mut rng = StdRng::seed_from_u64(seed.wrapping_add(10_000));
            let dim = rng.gen_range(1..16);
            let (na, nb, nc) = (rng.gen_range(0..8), rng.gen_range(0..8), rng.gen_range(0..8));
            let a = random_subspace(&mut rng, dim, na);
            let b = random_subspace(&mut rng, dim, nb);
            let c = random_subspace(&mut rng, dim, nc);
            prop_assert_eq!(a.intersect(&b).unwrap(), b.intersect(&a).unwrap());
            let ab_c = a.intersect(&b).unwrap().intersect(&c).unwrap();
            let a_bc = a.intersect(&b.intersect(&c).unwrap()).unwrap();
            prop_assert_eq!(ab_c, a_bc);
        }

        #[test]
        fn contains_respects_span(seed in 0u64..300) {
            let mut rng = StdRng::seed_from_u64(seed.wrapping_add(20_000));
            let dim = rng.gen_range(1..16);
            let na = rng.gen_range(0..6);
            let a = random_subspace(&mut rng, dim, na);
            for x in a.elements() {
                prop_assert!(a.contains(&x));
            }
        }
    }
}
