//! Dynamics of correlations: normal-ordered polynomials in the four doubled
//! generator species with discrete mode kernels, the Wick product with
//! respect to the doubled Gaussian reference state, the interaction
//! splitting by coupling count, the flattening map, tree operators, and the
//! correlation-tree expansion of the interaction-picture evolution.

use crate::modespace::{pairing, InteractionKernel, ModeGrid, OccupationField, PairingValue, Species};
use crate::quad::{self, QuadValue};
use crate::treealg::DirectedTree;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("tree is not right or cyclic: {0}")]
    BadTree(#[from] crate::treealg::TreeError),
    #[error("delay vector has wrong length: expected {expected}, got {got}")]
    BadDelays { expected: usize, got: usize },
    #[error("shoot inputs have wrong arity: expected {expected}, got {got}")]
    BadShoots { expected: usize, got: usize },
    #[error("quadrature failure on tree {tree:?}: {source}")]
    Quadrature {
        tree: DirectedTree,
        source: quad::QuadError,
    },
    #[error("monomial degree {0} exceeds the configured cap {1}")]
    DegreeCap(usize, usize),
}

/// Grid-level context every Wick operation needs: the quadrature weight,
/// per-mode occupations, and per-mode free energies `omega(k) - mu`.
#[derive(Debug, Clone)]
pub struct WickContext {
    pub n_modes: usize,
    pub weight: f64,
    pub occupation: Vec<f64>,
    pub energy: Vec<f64>,
    /// Hard cap on monomial degree (keeps desk-scale runs bounded).
    pub degree_cap: usize,
}

impl WickContext {
    pub fn new(grid: &ModeGrid, occ: &OccupationField) -> Self {
        WickContext {
            n_modes: grid.len(),
            weight: grid.weight,
            occupation: occ.values.clone(),
            energy: (0..grid.len()).map(|i| grid.energy(i)).collect(),
            degree_cap: 12,
        }
    }

    /// Kernel-level factor for one contracted pair summed over the shared
    /// mode: the delta eats one mode sum, leaving `pairing(k) * weight` per
    /// surviving summand.
    fn pair_factor(&self, left: Species, right: Species, mode: usize) -> f64 {
        pairing(left, right).eval(self.occupation[mode]) * self.weight
    }
}

/// Counts per species in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature(pub [u8; 4]);

impl Signature {
    pub fn from_species(list: &[Species]) -> Self {
        let mut c = [0u8; 4];
        for &s in list {
            c[s as usize] += 1;
        }
        Signature(c)
    }
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&x| x as usize).sum()
    }
    pub fn species_list(&self) -> Vec<Species> {
        let mut v = Vec::with_capacity(self.degree());
        for (i, &c) in self.0.iter().enumerate() {
            for _ in 0..c {
                v.push(Species::ALL[i]);
            }
        }
        v
    }
    pub fn star(&self) -> Self {
        let [cp, ap, am, cm] = self.0;
        // Branch swap keeps flavor: CrePlus <-> CreMinus, AnnPlus <-> AnnMinus.
        Signature([cm, am, ap, cp])
    }
}

/// Dense kernel tensor over mode indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub rank: usize,
    pub n_modes: usize,
    pub data: Vec<C64>,
}

impl Kernel {
    pub fn zeros(rank: usize, n_modes: usize) -> Self {
        Kernel {
            rank,
            n_modes,
            data: vec![C64::new(0.0, 0.0); n_modes.pow(rank as u32)],
        }
    }
    #[inline]
    pub fn index(&self, tuple: &[usize]) -> usize {
        let mut idx = 0usize;
        for &t in tuple {
            idx = idx * self.n_modes + t;
        }
        idx
    }
    pub fn get(&self, tuple: &[usize]) -> C64 {
        self.data[self.index(tuple)]
    }
    pub fn set(&mut self, tuple: &[usize], v: C64) {
        let i = self.index(tuple);
        self.data[i] = v;
    }
    pub fn add_at(&mut self, tuple: &[usize], v: C64) {
        let i = self.index(tuple);
        self.data[i] += v;
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.norm_sqr() == 0.0)
    }
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
    pub fn conj(&self) -> Self {
        Kernel {
            rank: self.rank,
            n_modes: self.n_modes,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Nonzero entries as (mode tuple, value) pairs.
    pub fn nonzero(&self) -> Vec<(Vec<usize>, C64)> {
        let mut out = Vec::new();
        let mut tuple = vec![0usize; self.rank];
        for (idx, &v) in self.data.iter().enumerate() {
            if v.norm_sqr() != 0.0 {
                let mut rem = idx;
                for slot in (0..self.rank).rev() {
                    tuple[slot] = rem % self.n_modes;
                    rem /= self.n_modes;
                }
                out.push((tuple.clone(), v));
            }
        }
        out
    }
}

/// Iterate over all mode tuples of a given rank.
pub fn for_each_tuple(rank: usize, n_modes: usize, mut f: impl FnMut(&[usize])) {
    let mut tuple = vec![0usize; rank];
    if rank == 0 {
        f(&tuple);
        return;
    }
    loop {
        f(&tuple);
        let mut i = rank;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            tuple[i] += 1;
            if tuple[i] < n_modes {
                break;
            }
            tuple[i] = 0;
            if i == 0 {
                return;
            }
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let smaller = permutations(n - 1);
    for p in smaller {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// A sum of normal-ordered monomials; each monomial is a species signature
/// with a kernel whose slots follow the canonical species order and are
/// symmetrized within each species block.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalPolynomial {
    pub n_modes: usize,
    pub terms: BTreeMap<Signature, Kernel>,
}

impl NormalPolynomial {
    pub fn zero(n_modes: usize) -> Self {
        NormalPolynomial {
            n_modes,
            terms: BTreeMap::new(),
        }
    }

    /// The scalar monomial c (degree zero).
    pub fn scalar(n_modes: usize, c: C64) -> Self {
        let mut p = Self::zero(n_modes);
        if c.norm_sqr() != 0.0 {
            let mut k = Kernel::zeros(0, n_modes);
            k.data[0] = c;
            p.terms.insert(Signature([0; 4]), k);
        }
        p
    }

    /// A single smeared generator.
    pub fn generator(n_modes: usize, species: Species, kernel: Vec<C64>) -> Self {
        assert_eq!(kernel.len(), n_modes);
        let mut p = Self::zero(n_modes);
        let mut counts = [0u8; 4];
        counts[species as usize] = 1;
        p.terms.insert(
            Signature(counts),
            Kernel {
                rank: 1,
                n_modes,
                data: kernel,
            },
        );
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(Kernel::is_zero)
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(Kernel::max_abs).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, c: C64) {
        for k in self.terms.values_mut() {
            for z in k.data.iter_mut() {
                *z *= c;
            }
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (sig, k) in &other.terms {
            match self.terms.get_mut(sig) {
                Some(mine) => {
                    for (a, b) in mine.data.iter_mut().zip(k.data.iter()) {
                        *a += b;
                    }
                }
                None => {
                    self.terms.insert(*sig, k.clone());
                }
            }
        }
    }

    pub fn sub_assign(&mut self, other: &Self) {
        self.add_assign(&other.scaled(C64::new(-1.0, 0.0)));
    }

    pub fn prune(&mut self, eps: f64) {
        self.terms.retain(|_, k| k.max_abs() > eps);
    }

    /// Insert a monomial given an arbitrary slot order; the kernel is
    /// permuted to canonical species order and symmetrized within blocks.
    pub fn insert_monomial(&mut self, species: &[Species], kernel: &Kernel) {
        assert_eq!(species.len(), kernel.rank);
        let sig = Signature::from_species(species);
        let rank = species.len();
        // Stable sort permutation: canonical position -> original slot.
        let mut order: Vec<usize> = (0..rank).collect();
        order.sort_by_key(|&i| (species[i] as usize, i));
        // Contiguous blocks of equal species in the canonical layout.
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        let mut start = 0usize;
        for c in sig.0 {
            let len = c as usize;
            if len > 0 {
                blocks.push((start, len));
            }
            start += len;
        }
        let block_perms: Vec<Vec<Vec<usize>>> =
            blocks.iter().map(|&(_, len)| permutations(len)).collect();
        let mut nperm = 1.0;
        for p in &block_perms {
            nperm *= p.len() as f64;
        }
        if !self.terms.contains_key(&sig) {
            self.terms.insert(sig, Kernel::zeros(rank, self.n_modes));
        }
        let target = self.terms.get_mut(&sig).unwrap();
        let nonzero = kernel.nonzero();
        if nonzero.is_empty() {
            return;
        }
        let mut perm_idx = vec![0usize; blocks.len()];
        let mut canon_tuple = vec![0usize; rank];
        loop {
            // Compose: canonical slot -> permuted canonical slot -> original.
            let mut composed = vec![0usize; rank];
            for (bi, &(bstart, blen)) in blocks.iter().enumerate() {
                let perm = &block_perms[bi][perm_idx[bi]];
                for j in 0..blen {
                    composed[bstart + j] = order[bstart + perm[j]];
                }
            }
            for (src_tuple, v) in &nonzero {
                for (c, &orig) in composed.iter().enumerate() {
                    canon_tuple[c] = src_tuple[orig];
                }
                target.add_at(&canon_tuple, v / nperm);
            }
            // Advance permutation odometer.
            if blocks.is_empty() {
                return;
            }
            let mut i = 0;
            loop {
                if i == blocks.len() {
                    return;
                }
                perm_idx[i] += 1;
                if perm_idx[i] < block_perms[i].len() {
                    break;
                }
                perm_idx[i] = 0;
                i += 1;
            }
        }
    }

    /// Wick product of two normal-ordered polynomials (self on the left):
    /// sum over all matchings between left slots and right slots, each pair
    /// contributing the two-point contraction of the reference state.
    pub fn mul(&self, rhs: &Self, ctx: &WickContext) -> Self {
        let mut out = Self::zero(self.n_modes);
        for (sig_a, ker_a) in &self.terms {
            let species_a = sig_a.species_list();
            for (sig_b, ker_b) in &rhs.terms {
                let species_b = sig_b.species_list();
                accumulate_wick_products(
                    &species_a,
                    ker_a,
                    &species_b,
                    ker_b,
                    ctx,
                    &mut |species, kernel, _| out.insert_monomial(species, kernel),
                );
            }
        }
        out.prune(0.0);
        out
    }

    /// Normal form of a plain (operator-ordered) product of generators with
    /// a joint kernel: sum over partial matchings of positions i < j with
    /// ordered contractions.
    pub fn from_plain(
        n_modes: usize,
        species: &[Species],
        kernel: &Kernel,
        ctx: &WickContext,
    ) -> Self {
        Self::matching_expansion(n_modes, species, kernel, ctx, 1.0, &mut |out, sp, ker| {
            out.insert_monomial(sp, ker)
        })
    }

    /// Shared matching-sum driver: expands over partial matchings of the
    /// slot positions with pair weight `sign * pair_factor`, feeding residual
    /// monomials to the sink.
    fn matching_expansion(
        n_modes: usize,
        species: &[Species],
        kernel: &Kernel,
        ctx: &WickContext,
        sign: f64,
        sink: &mut dyn FnMut(&mut Self, &[Species], &Kernel),
    ) -> Self {
        let mut out = Self::zero(n_modes);
        let r = species.len();
        let nonzero = kernel.nonzero();
        for m in partial_matchings(r) {
            if m
                .iter()
                .any(|&(i, j)| pairing(species[i], species[j]) == PairingValue::Zero)
            {
                continue;
            }
            let paired: Vec<usize> = m.iter().flat_map(|&(i, j)| [i, j]).collect();
            let rest: Vec<usize> = (0..r).filter(|i| !paired.contains(i)).collect();
            let rest_species: Vec<Species> = rest.iter().map(|&i| species[i]).collect();
            let mut result = Kernel::zeros(rest.len(), n_modes);
            let mut rest_tuple = vec![0usize; rest.len()];
            let mut any = false;
            for (full, v) in &nonzero {
                let mut cfac = 1.0;
                let mut ok = true;
                for &(i, j) in &m {
                    if full[i] != full[j] {
                        ok = false;
                        break;
                    }
                    cfac *= sign * ctx.pair_factor(species[i], species[j], full[i]);
                }
                if !ok || cfac == 0.0 {
                    continue;
                }
                for (t, &slot) in rest.iter().enumerate() {
                    rest_tuple[t] = full[slot];
                }
                result.add_at(&rest_tuple, v * cfac);
                any = true;
            }
            if any && !result.is_zero() {
                sink(&mut out, &rest_species, &result);
            }
        }
        out.prune(0.0);
        out
    }

    /// Expand every normal-ordered monomial into plain operator products:
    /// the inverse of `from_plain` (negated pair weights). Slot lists come
    /// out sorted creators-first per branch, the order in which the plain
    /// products must be applied.
    pub fn to_plain_terms(&self, ctx: &WickContext) -> Vec<(Vec<Species>, Kernel)> {
        let mut plain: Vec<(Vec<Species>, Kernel)> = Vec::new();
        for (sig, kernel) in &self.terms {
            let mut species = sig.species_list();
            let mut order: Vec<usize> = (0..species.len()).collect();
            let rank_of = |s: Species| match s {
                Species::CrePlus => 0,
                Species::AnnPlus => 1,
                Species::CreMinus => 2,
                Species::AnnMinus => 3,
            };
            order.sort_by_key(|&i| (rank_of(species[i]), i));
            // Permute the kernel slots into application order.
            let mut sorted_kernel = Kernel::zeros(kernel.rank, kernel.n_modes);
            let mut tuple = vec![0usize; kernel.rank];
            for (src, v) in kernel.nonzero() {
                for (dst, &orig) in order.iter().enumerate() {
                    tuple[dst] = src[orig];
                }
                sorted_kernel.add_at(&tuple, v);
            }
            species.sort_by_key(|&s| rank_of(s));
            Self::matching_expansion(
                self.n_modes,
                &species,
                &sorted_kernel,
                ctx,
                -1.0,
                &mut |_out, sp, ker| {
                    // Merge into the flat list, keyed by species sequence.
                    if let Some(entry) = plain.iter_mut().find(|(s, _)| s == sp) {
                        for (a, b) in entry.1.data.iter_mut().zip(ker.data.iter()) {
                            *a += b;
                        }
                    } else {
                        plain.push((sp.to_vec(), ker.clone()));
                    }
                },
            );
        }
        plain.retain(|(_, k)| !k.is_zero());
        plain
    }

    /// Free evolution `exp(L0 t)`: each slot picks up the phase
    /// `exp(i * sign(species) * (omega(k) - mu) * t)`.
    pub fn free_evolve(&self, t: f64, ctx: &WickContext) -> Self {
        let mut out = self.clone();
        for (sig, k) in out.terms.iter_mut() {
            let species = sig.species_list();
            let n_modes = k.n_modes;
            let rank = k.rank;
            let data = &mut k.data;
            let mut tuple = vec![0usize; rank];
            let mut idx = 0usize;
            loop {
                let mut phase = 0.0;
                for (slot, &s) in species.iter().enumerate() {
                    phase += s.phase_sign() * ctx.energy[tuple[slot]] * t;
                }
                data[idx] *= C64::from_polar(1.0, phase);
                idx += 1;
                if rank == 0 {
                    break;
                }
                let mut i = rank;
                let mut done = false;
                loop {
                    if i == 0 {
                        done = true;
                        break;
                    }
                    i -= 1;
                    tuple[i] += 1;
                    if tuple[i] < n_modes {
                        break;
                    }
                    tuple[i] = 0;
                    if i == 0 {
                        done = true;
                        break;
                    }
                }
                if done {
                    break;
                }
            }
        }
        out
    }

    /// The star involution: swap branches, conjugate kernels.
    pub fn star(&self) -> Self {
        let mut out = Self::zero(self.n_modes);
        for (sig, k) in &self.terms {
            let species: Vec<Species> = sig.species_list().iter().map(|s| s.star()).collect();
            out.insert_monomial(&species, &k.conj());
        }
        out
    }

    /// Max total degree across monomials.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Signature::degree).max().unwrap_or(0)
    }

    /// Deterministic ordering key used to canonicalize factor lists.
    pub fn cmp_canonical(&self, other: &Self) -> std::cmp::Ordering {
        let sa: Vec<_> = self.terms.keys().collect();
        let sb: Vec<_> = other.terms.keys().collect();
        sa.cmp(&sb).then_with(|| {
            for (ka, kb) in self.terms.values().zip(other.terms.values()) {
                for (a, b) in ka.data.iter().zip(kb.data.iter()) {
                    let c = a.re.total_cmp(&b.re).then_with(|| a.im.total_cmp(&b.im));
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
            }
            std::cmp::Ordering::Equal
        })
    }
}

fn partial_matchings(r: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![vec![]];
    fn go(free: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if free.len() < 2 {
            return;
        }
        // Either free[0] stays unpaired in every extension...
        go(&free[1..], acc, out);
        // ...or it pairs with some later position.
        for idx in 1..free.len() {
            let (i, j) = (free[0], free[idx]);
            acc.push((i, j));
            out.push(acc.clone());
            let rest: Vec<usize> = free
                .iter()
                .enumerate()
                .filter(|&(t, _)| t != 0 && t != idx)
                .map(|(_, &v)| v)
                .collect();
            go(&rest, acc, out);
            acc.pop();
        }
    }
    let free: Vec<usize> = (0..r).collect();
    let mut acc = Vec::new();
    go(&free, &mut acc, &mut out);
    out
}

impl QuadValue for NormalPolynomial {
    fn zero_like(&self) -> Self {
        NormalPolynomial::zero(self.n_modes)
    }
    fn scaled_add(&mut self, coeff: f64, other: &Self) {
        self.add_assign(&other.scaled(C64::new(coeff, 0.0)));
    }
    fn magnitude(&self) -> f64 {
        self.terms
            .values()
            .map(|k| k.data.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Enumerate Wick product terms of `:A: * :B:` (A left of B). For every
/// matching between A-slots and B-slots with nonvanishing contractions, the
/// sink receives the residual species list, the contracted kernel, and the
/// matched slot pairs.
pub fn accumulate_wick_products(
    species_a: &[Species],
    ker_a: &Kernel,
    species_b: &[Species],
    ker_b: &Kernel,
    ctx: &WickContext,
    sink: &mut dyn FnMut(&[Species], &Kernel, &[(usize, usize)]),
) {
    let ra = species_a.len();
    let rb = species_b.len();
    let n = ctx.n_modes;
    fn go(
        slot: usize,
        assignment: &mut Vec<Option<usize>>,
        used_b: &mut Vec<bool>,
        species_a: &[Species],
        species_b: &[Species],
        emit: &mut dyn FnMut(&[Option<usize>]),
    ) {
        if slot == species_a.len() {
            emit(assignment);
            return;
        }
        assignment[slot] = None;
        go(slot + 1, assignment, used_b, species_a, species_b, emit);
        for j in 0..species_b.len() {
            if !used_b[j] && pairing(species_a[slot], species_b[j]) != PairingValue::Zero {
                used_b[j] = true;
                assignment[slot] = Some(j);
                go(slot + 1, assignment, used_b, species_a, species_b, emit);
                assignment[slot] = None;
                used_b[j] = false;
            }
        }
    }
    let mut assignment: Vec<Option<usize>> = vec![None; ra];
    let mut used_b = vec![false; rb];
    let nz_a = ker_a.nonzero();
    let nz_b = ker_b.nonzero();
    let mut emit = |assignment: &[Option<usize>]| {
        let pairs: Vec<(usize, usize)> = assignment
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (i, j)))
            .collect();
        let rest_a: Vec<usize> = (0..ra).filter(|i| assignment[*i].is_none()).collect();
        let paired_b: Vec<usize> = pairs.iter().map(|&(_, j)| j).collect();
        let rest_b: Vec<usize> = (0..rb).filter(|j| !paired_b.contains(j)).collect();
        let mut rest_species: Vec<Species> = rest_a.iter().map(|&i| species_a[i]).collect();
        rest_species.extend(rest_b.iter().map(|&j| species_b[j]));
        let mut result = Kernel::zeros(rest_a.len() + rest_b.len(), n);
        let mut rest_tuple = vec![0usize; rest_a.len() + rest_b.len()];
        let mut any = false;
        for (ta, va) in &nz_a {
            for (tb, vb) in &nz_b {
                let mut cfac = 1.0;
                let mut ok = true;
                for &(i, j) in &pairs {
                    if ta[i] != tb[j] {
                        ok = false;
                        break;
                    }
                    cfac *= ctx.pair_factor(species_a[i], species_b[j], ta[i]);
                }
                if !ok || cfac == 0.0 {
                    continue;
                }
                for (t, &i) in rest_a.iter().enumerate() {
                    rest_tuple[t] = ta[i];
                }
                for (t, &j) in rest_b.iter().enumerate() {
                    rest_tuple[rest_a.len() + t] = tb[j];
                }
                result.add_at(&rest_tuple, va * vb * cfac);
                any = true;
            }
        }
        if any && !result.is_zero() {
            sink(&rest_species, &result, &pairs);
        }
    };
    go(
        0,
        &mut assignment,
        &mut used_b,
        species_a,
        species_b,
        &mut emit,
    );
}

/// A symmetrized tensor product of normal-ordered factors; terms are factor
/// multisets in canonical order (symmetrization is idempotent on this
/// representation).
#[derive(Debug, Clone)]
pub struct CorrelationVector {
    pub n_modes: usize,
    pub terms: Vec<Vec<NormalPolynomial>>,
}

impl CorrelationVector {
    pub fn zero(n_modes: usize) -> Self {
        CorrelationVector {
            n_modes,
            terms: Vec::new(),
        }
    }

    pub fn single(factors: Vec<NormalPolynomial>) -> Self {
        let n_modes = factors.first().map_or(1, |f| f.n_modes);
        let mut cv = CorrelationVector {
            n_modes,
            terms: vec![factors],
        };
        cv.symmetrize();
        cv
    }

    /// Canonical multiset ordering of factors in each term.
    pub fn symmetrize(&mut self) {
        for t in self.terms.iter_mut() {
            t.sort_by(|a, b| a.cmp_canonical(b));
        }
    }

    pub fn push(&mut self, factors: Vec<NormalPolynomial>) {
        self.terms.push(factors);
        self.symmetrize();
    }

    /// The flattening map: replace each tensor product of normal factors by
    /// the single normal-ordered product of the concatenation; cross-factor
    /// contractions are never generated.
    pub fn flatten(&self) -> NormalPolynomial {
        let mut out = NormalPolynomial::zero(self.n_modes);
        for factors in &self.terms {
            let mut merged = NormalPolynomial::scalar(self.n_modes, C64::new(1.0, 0.0));
            for f in factors {
                merged = tensor_merge(&merged, f);
            }
            out.add_assign(&merged);
        }
        out.prune(0.0);
        out
    }
}

/// Concatenate two normal-ordered polynomials without any contraction: the
/// image of the tensor product under the flattening map.
pub fn tensor_merge(a: &NormalPolynomial, b: &NormalPolynomial) -> NormalPolynomial {
    let n = a.n_modes;
    let mut out = NormalPolynomial::zero(n);
    for (sig_a, ker_a) in &a.terms {
        let sa = sig_a.species_list();
        let nz_a = ker_a.nonzero();
        for (sig_b, ker_b) in &b.terms {
            let sb = sig_b.species_list();
            let nz_b = ker_b.nonzero();
            let mut species = sa.clone();
            species.extend(sb.iter().copied());
            let mut kernel = Kernel::zeros(species.len(), n);
            let mut tuple = vec![0usize; species.len()];
            for (ta, va) in &nz_a {
                for (tb, vb) in &nz_b {
                    tuple[..sa.len()].copy_from_slice(ta);
                    tuple[sa.len()..].copy_from_slice(tb);
                    kernel.add_at(&tuple, va * vb);
                }
            }
            if !kernel.is_zero() {
                out.insert_monomial(&species, &kernel);
            }
        }
    }
    out.prune(0.0);
    out
}

/// The interaction in normal form over the doubled algebra:
/// `-i H(backward generators) + i H^dagger(forward generators)`.
pub fn interaction_normal_form(
    grid: &ModeGrid,
    kernel: &InteractionKernel,
    ctx: &WickContext,
) -> NormalPolynomial {
    let n = grid.len();
    let mut joint_minus = Kernel::zeros(4, n);
    let mut joint_plus = Kernel::zeros(4, n);
    for_each_tuple(4, n, |t| {
        let (p1, p2, q1, q2) = (
            &grid.modes[t[0]],
            &grid.modes[t[1]],
            &grid.modes[t[2]],
            &grid.modes[t[3]],
        );
        // Momentum conservation as a grid Kronecker delta over the weight.
        let conserved = (0..grid.dim).all(|d| {
            let s = p1[d] + p2[d] - q1[d] - q2[d];
            s.abs() < 1e-9
        });
        if conserved {
            let v = kernel.eval(p1, p2, q1, q2) / grid.weight;
            joint_minus.set(t, v);
            joint_plus.set(t, v.conj());
        }
    });
    use Species::*;
    let minus = NormalPolynomial::from_plain(
        n,
        &[CreMinus, CreMinus, AnnMinus, AnnMinus],
        &joint_minus,
        ctx,
    );
    let plus =
        NormalPolynomial::from_plain(n, &[CrePlus, CrePlus, AnnPlus, AnnPlus], &joint_plus, ctx);
    let mut out = minus.scaled(C64::new(0.0, -1.0));
    out.add_assign(&plus.scaled(C64::new(0.0, 1.0)));
    out.prune(0.0);
    out
}

/// Apply the interaction to a product of normal factors keeping exactly the
/// terms where it couples with `l` distinct factors. The touched factors
/// merge with the interaction remainder into one new factor; untouched
/// factors survive unchanged. `l = 0` appends the interaction as a new
/// factor. `l` greater than the factor count gives zero.
pub fn wick_split(
    l: usize,
    lint: &NormalPolynomial,
    factors: &[NormalPolynomial],
    ctx: &WickContext,
) -> CorrelationVector {
    let n_modes = lint.n_modes;
    let nf = factors.len();
    let mut out = CorrelationVector::zero(n_modes);
    if l > nf {
        return out;
    }
    for subset in subsets_of_size(nf, l) {
        let touched: Vec<&NormalPolynomial> = subset.iter().map(|&i| &factors[i]).collect();
        let untouched: Vec<NormalPolynomial> = (0..nf)
            .filter(|i| !subset.contains(i))
            .map(|i| factors[i].clone())
            .collect();
        let merged_sum = couple_all(lint, &touched, ctx);
        if merged_sum.is_zero() {
            continue;
        }
        let mut term = untouched;
        term.push(merged_sum);
        out.push(term);
    }
    out
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// Sum of all Wick terms where the interaction contracts with every one of
/// the given factors at least once; the result is the merged single factor.
fn couple_all(
    lint: &NormalPolynomial,
    factors: &[&NormalPolynomial],
    ctx: &WickContext,
) -> NormalPolynomial {
    let n_modes = lint.n_modes;
    if factors.is_empty() {
        return lint.clone();
    }
    struct Partial {
        species: Vec<Species>,
        kernel: Kernel,
        /// Positions in `species` that are interaction slots.
        lint_slots: Vec<usize>,
    }
    let mut partials: Vec<Partial> = lint
        .terms
        .iter()
        .map(|(sig, k)| Partial {
            species: sig.species_list(),
            kernel: k.clone(),
            lint_slots: (0..sig.degree()).collect(),
        })
        .collect();
    for factor in factors {
        let mut next: Vec<Partial> = Vec::new();
        for part in &partials {
            for (sig_f, ker_f) in &factor.terms {
                let species_f = sig_f.species_list();
                accumulate_wick_products(
                    &part.species,
                    &part.kernel,
                    &species_f,
                    ker_f,
                    ctx,
                    &mut |rest_species, rest_kernel, pairs| {
                        if pairs.is_empty()
                            || pairs.iter().any(|&(i, _)| !part.lint_slots.contains(&i))
                        {
                            return;
                        }
                        let paired_left: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
                        let rest_left: Vec<usize> = (0..part.species.len())
                            .filter(|i| !paired_left.contains(i))
                            .collect();
                        let new_lint_slots: Vec<usize> = rest_left
                            .iter()
                            .enumerate()
                            .filter(|(_, orig)| part.lint_slots.contains(orig))
                            .map(|(newpos, _)| newpos)
                            .collect();
                        next.push(Partial {
                            species: rest_species.to_vec(),
                            kernel: rest_kernel.clone(),
                            lint_slots: new_lint_slots,
                        });
                    },
                );
            }
        }
        partials = next;
        if partials.is_empty() {
            break;
        }
    }
    let mut out = NormalPolynomial::zero(n_modes);
    for p in partials {
        out.insert_monomial(&p.species, &p.kernel);
    }
    out.prune(0.0);
    out
}

/// Vertex labels of a correlation tree.
#[derive(Debug, Clone)]
pub enum VertexLabel {
    /// The interaction split with coupling count equal to the fan-in.
    VonNeumann,
    /// An explicit operator insertion (only at leaves).
    Explicit(NormalPolynomial),
}

/// A correlation tree: directed tree plus per-delay-line delays and vertex
/// labels.
#[derive(Debug, Clone)]
pub struct CorrelationTree {
    pub tree: DirectedTree,
    /// Delay per line id (entries for shoot lines are ignored).
    pub taus: Vec<f64>,
    pub labels: Vec<VertexLabel>,
}

impl CorrelationTree {
    pub fn von_neumann(tree: DirectedTree, taus: Vec<f64>) -> Result<Self, CorrError> {
        tree.validate_right()?;
        if taus.len() != tree.lines.len() {
            return Err(CorrError::BadDelays {
                expected: tree.lines.len(),
                got: taus.len(),
            });
        }
        let labels = vec![VertexLabel::VonNeumann; tree.n];
        Ok(CorrelationTree { tree, taus, labels })
    }
}

/// Evaluate the tree operator at observation time `t` on the given shoot
/// inputs (one normal factor per shoot label, in label order). Returns the
/// output factors, one per root line, ordered by root-line id.
pub fn tree_operator(
    ct: &CorrelationTree,
    t: f64,
    shoot_inputs: &[NormalPolynomial],
    lint: &NormalPolynomial,
    ctx: &WickContext,
) -> Result<Vec<NormalPolynomial>, CorrError> {
    let tree = &ct.tree;
    tree.validate_right()?;
    let n_sh = tree.n_shoots();
    if shoot_inputs.len() != n_sh {
        return Err(CorrError::BadShoots {
            expected: n_sh,
            got: shoot_inputs.len(),
        });
    }
    let parent = tree.parent();
    let mut order: Vec<usize> = (0..tree.n).collect();
    let mut depth = vec![0usize; tree.n];
    for v in 0..tree.n {
        let mut x = v;
        while let Some(p) = parent[x] {
            depth[v] += 1;
            x = p;
        }
    }
    // Children before parents.
    order.sort_by_key(|&v| std::cmp::Reverse(depth[v]));
    let mut pending: Vec<Option<NormalPolynomial>> = vec![None; tree.n];
    for &v in &order {
        let mut inputs: Vec<NormalPolynomial> = Vec::new();
        for (id, upper, lower) in tree.internal_lines() {
            if upper == v {
                let f = pending[lower].take().expect("child processed");
                inputs.push(f.free_evolve(ct.taus[id], ctx));
            }
        }
        // Shoot inputs dressed by exp(L0 (t - t_r)); t_r sums the delays
        // along the decreasing path from the root line down to this vertex.
        for (_, sv, label) in tree.shoot_lines() {
            if sv == v {
                let t_r: f64 = tree.root_path(v).iter().map(|&id| ct.taus[id]).sum();
                inputs.push(shoot_inputs[label].free_evolve(t - t_r, ctx));
            }
        }
        let result = match &ct.labels[v] {
            VertexLabel::VonNeumann => {
                let l = inputs.len();
                let cv = wick_split(l, lint, &inputs, ctx);
                // Every input is touched, so each term has exactly one factor.
                let mut merged = NormalPolynomial::zero(lint.n_modes);
                for term in cv.terms {
                    debug_assert_eq!(term.len(), 1);
                    for f in term {
                        merged.add_assign(&f);
                    }
                }
                merged
            }
            VertexLabel::Explicit(op) => {
                debug_assert!(inputs.is_empty());
                op.clone()
            }
        };
        if result.degree() > ctx.degree_cap {
            return Err(CorrError::DegreeCap(result.degree(), ctx.degree_cap));
        }
        pending[v] = Some(result);
    }
    // Root dressing: exp(-(t - tau_root) L0) per component.
    let mut outputs = Vec::new();
    for (id, v) in tree.root_lines() {
        let f = pending[v].take().expect("root processed");
        outputs.push(f.free_evolve(-(t - ct.taus[id]), ctx));
    }
    Ok(outputs)
}

/// The correlation-tree expansion of the interaction-picture evolution at a
/// fixed order in the coupling, applied to the cyclic vector and flattened:
/// sum over shootless right trees of 1/n! times the delay integral of the
/// tree operator, with every vertex insertion time inside `(t_low, t)`.
pub fn tree_expansion(
    order: usize,
    t: f64,
    t_low: f64,
    lint: &NormalPolynomial,
    ctx: &WickContext,
    tol: f64,
) -> Result<NormalPolynomial, CorrError> {
    let n_modes = lint.n_modes;
    if order == 0 {
        return Ok(NormalPolynomial::scalar(n_modes, C64::new(1.0, 0.0)));
    }
    let trees = crate::treealg::enumerate_trees(order, 4, 0, false);
    let mut total = NormalPolynomial::zero(n_modes);
    let factorial: f64 = (1..=order).map(|k| k as f64).product();
    for tree in trees {
        let contrib = integrate_tree(&tree, t, t_low, lint, ctx, tol).map_err(|source| {
            CorrError::Quadrature {
                tree: tree.clone(),
                source,
            }
        })?;
        total.add_assign(&contrib);
    }
    total.scale(C64::new(1.0 / factorial, 0.0));
    total.prune(0.0);
    Ok(total)
}

/// Integrate the flattened tree operator over vertex insertion times
/// `t_low < s_v < s_parent(v) < ... < t` (unit Jacobian to the delays).
fn integrate_tree(
    tree: &DirectedTree,
    t: f64,
    t_low: f64,
    lint: &NormalPolynomial,
    ctx: &WickContext,
    tol: f64,
) -> Result<NormalPolynomial, quad::QuadError> {
    let parent = tree.parent();
    let mut order: Vec<usize> = (0..tree.n).collect();
    let mut depth = vec![0usize; tree.n];
    for v in 0..tree.n {
        let mut x = v;
        while let Some(p) = parent[x] {
            depth[v] += 1;
            x = p;
        }
    }
    // Parents before children so bounds are available.
    order.sort_by_key(|&v| depth[v]);
    let eval = |times: &[f64]| -> NormalPolynomial {
        let mut time_of = vec![0.0; tree.n];
        for (i, &v) in order.iter().enumerate() {
            time_of[v] = times[i];
        }
        let mut taus = vec![0.0; tree.lines.len()];
        for (id, upper, lower) in tree.internal_lines() {
            taus[id] = time_of[upper] - time_of[lower];
        }
        for (id, v) in tree.root_lines() {
            taus[id] = t - time_of[v];
        }
        let ct = CorrelationTree {
            tree: tree.clone(),
            taus,
            labels: vec![VertexLabel::VonNeumann; tree.n],
        };
        let outputs = tree_operator(&ct, t, &[], lint, ctx).expect("tree evaluation");
        CorrelationVector::single(outputs).flatten()
    };
    // Nested spectral integration: the integrand is analytic in every
    // vertex time, so each level is sampled on Chebyshev nodes and resolved
    // by antidifferentiation; the node count doubles until the series tails
    // pass the tolerance.
    struct Level<'a> {
        order: &'a [usize],
        parent: &'a [Option<usize>],
        t: f64,
        t_low: f64,
        n_nodes: usize,
        worst_tail: std::cell::Cell<f64>,
    }
    impl<'a> Level<'a> {
        fn go(
            &self,
            i: usize,
            times: &mut Vec<f64>,
            eval: &dyn Fn(&[f64]) -> NormalPolynomial,
        ) -> NormalPolynomial {
            if i == self.order.len() {
                return eval(times);
            }
            let v = self.order[i];
            let hi = match self.parent[v] {
                Some(p) => {
                    let pos = self.order.iter().position(|&x| x == p).unwrap();
                    times[pos]
                }
                None => self.t,
            };
            let nodes = quad::ChebSeries::<NormalPolynomial>::nodes(self.t_low, hi, self.n_nodes);
            let samples: Vec<NormalPolynomial> = nodes
                .iter()
                .map(|&s| {
                    times.push(s);
                    let r = self.go(i + 1, times, eval);
                    times.pop();
                    r
                })
                .collect();
            let anti = quad::ChebSeries::fit(self.t_low, hi, &samples).antiderivative();
            self.worst_tail
                .set(self.worst_tail.get().max(anti.tail_magnitude()));
            anti.eval(hi)
        }
    }
    let mut n_nodes = 24usize;
    loop {
        let level = Level {
            order: &order,
            parent: &parent,
            t,
            t_low,
            n_nodes,
            worst_tail: std::cell::Cell::new(0.0),
        };
        let mut times = Vec::new();
        let value = level.go(0, &mut times, &eval);
        if level.worst_tail.get() < tol {
            return Ok(value);
        }
        n_nodes *= 2;
        if n_nodes > 192 {
            return Err(quad::QuadError::NoConvergence {
                requested: tol,
                achieved: level.worst_tail.get(),
                evals: n_nodes,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::{ModeGrid, OccupationField, OccupationSpec};
    use crate::treealg::Line;

    fn setup(n0: f64) -> (ModeGrid, WickContext, NormalPolynomial) {
        let grid = ModeGrid::build(1, 1, 1.0, -1.0).unwrap();
        let occ = if n0 == 0.0 {
            OccupationField::build(&grid, OccupationSpec::Vacuum).unwrap()
        } else {
            OccupationField::build(&grid, OccupationSpec::Gaussian { n0, b: 1.0 }).unwrap()
        };
        let ctx = WickContext::new(&grid, &occ);
        let kernel = InteractionKernel::new(C64::new(0.5, 0.0), 0.2).unwrap();
        let lint = interaction_normal_form(&grid, &kernel, &ctx);
        (grid, ctx, lint)
    }

    #[test]
    fn vacuum_interaction_is_pure_quartic() {
        let (_, _, lint) = setup(0.0);
        for sig in lint.terms.keys() {
            assert_eq!(sig.degree(), 4, "unexpected signature {sig:?}");
        }
        assert_eq!(lint.terms.len(), 2);
    }

    #[test]
    fn thermal_interaction_has_lower_terms() {
        let (_, _, lint) = setup(0.4);
        assert!(lint.terms.keys().any(|s| s.degree() < 4));
    }

    #[test]
    fn wick_product_single_pair() {
        let grid = ModeGrid::build(1, 1, 1.0, -1.0).unwrap();
        let occ =
            OccupationField::build(&grid, OccupationSpec::Gaussian { n0: 0.3, b: 0.0 }).unwrap();
        let ctx = WickContext::new(&grid, &occ);
        let one = vec![C64::new(1.0, 0.0)];
        let a = NormalPolynomial::generator(1, Species::AnnMinus, one.clone());
        let adag = NormalPolynomial::generator(1, Species::CreMinus, one);
        // a a^+ contracts with 1 + n = 1.3 (times weight/weight = 1).
        let prod = a.mul(&adag, &ctx);
        let scalar = prod.terms.get(&Signature([0, 0, 0, 0])).unwrap();
        assert!((scalar.data[0] - C64::new(1.3, 0.0)).norm() < 1e-12);
        // a^+ a picks up n = 0.3 instead.
        let a2 = NormalPolynomial::generator(1, Species::AnnMinus, vec![C64::new(1.0, 0.0)]);
        let prod2 = adag.mul(&a2, &ctx);
        let scalar2 = prod2.terms.get(&Signature([0, 0, 0, 0])).unwrap();
        assert!((scalar2.data[0] - C64::new(0.3, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wick_monomials_commute() {
        // :a:*:a^+: and :a^+:*:a: differ exactly by the commutator scalar.
        let (_, ctx, _) = setup(0.3);
        let a = NormalPolynomial::generator(1, Species::AnnMinus, vec![C64::new(1.0, 0.0)]);
        let c = NormalPolynomial::generator(1, Species::CreMinus, vec![C64::new(1.0, 0.0)]);
        let ac = a.mul(&c, &ctx);
        let ca = c.mul(&a, &ctx);
        let mut diff = ac;
        diff.sub_assign(&ca);
        diff.prune(1e-14);
        // Difference is the scalar delta_{kk}/weight = 1.
        assert_eq!(diff.terms.len(), 1);
        let s = diff.terms.get(&Signature([0; 4])).unwrap();
        assert!((s.data[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn wick_split_overflow_is_zero() {
        let (_, ctx, lint) = setup(0.0);
        let f = NormalPolynomial::generator(1, Species::CreMinus, vec![C64::new(1.0, 0.0)]);
        let cv = wick_split(2, &lint, &[f], &ctx);
        assert!(cv.terms.is_empty());
    }

    #[test]
    fn wick_split_zero_appends_interaction() {
        let (_, ctx, lint) = setup(0.0);
        let cv = wick_split(0, &lint, &[], &ctx);
        assert_eq!(cv.terms.len(), 1);
        assert_eq!(cv.terms[0].len(), 1);
        assert_eq!(cv.terms[0][0], lint);
    }

    #[test]
    fn wick_split_completeness() {
        // Sum over l of the split, flattened, equals the plain Wick product
        // of the interaction with the flattened input.
        let (_, ctx, lint) = setup(0.35);
        let f1 = NormalPolynomial::generator(1, Species::CreMinus, vec![C64::new(0.7, 0.1)]);
        let f2 = NormalPolynomial::generator(1, Species::AnnPlus, vec![C64::new(-0.2, 0.4)]);
        let factors = vec![f1.clone(), f2.clone()];
        let mut lhs = NormalPolynomial::zero(1);
        for l in 0..=2 {
            let cv = wick_split(l, &lint, &factors, &ctx);
            lhs.add_assign(&cv.flatten());
        }
        let rhs = lint.mul(&CorrelationVector::single(factors).flatten(), &ctx);
        let mut diff = lhs.clone();
        diff.sub_assign(&rhs);
        assert!(diff.max_abs() < 1e-12, "difference {:.3e}", diff.max_abs());
    }

    #[test]
    fn star_is_involution_and_interaction_real() {
        let (_, _ctx, lint) = setup(0.25);
        let twice = lint.star().star();
        let mut diff = twice;
        diff.sub_assign(&lint);
        assert!(diff.max_abs() < 1e-12);
        // Real kernel: the interaction is star-fixed.
        let mut diff2 = lint.star();
        diff2.sub_assign(&lint);
        assert!(diff2.max_abs() < 1e-12);
    }

    #[test]
    fn star_intertwines_multiplication() {
        // (L x)* = L* x*; with a real interaction this is L x*.
        let (_, ctx, lint) = setup(0.3);
        let x = NormalPolynomial::generator(1, Species::CreMinus, vec![C64::new(0.3, -0.8)]);
        let lhs = lint.mul(&x, &ctx).star();
        let rhs = lint.star().mul(&x.star(), &ctx);
        let mut diff = lhs;
        diff.sub_assign(&rhs);
        assert!(diff.max_abs() < 1e-10, "difference {:.3e}", diff.max_abs());
    }

    #[test]
    fn flatten_tensor_merge_disjoint_modes() {
        let f1 = NormalPolynomial::generator(
            2,
            Species::CreMinus,
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        );
        let f2 = NormalPolynomial::generator(
            2,
            Species::CreMinus,
            vec![C64::new(0.0, 0.0), C64::new(2.0, 0.0)],
        );
        let merged = tensor_merge(&f1, &f2);
        let sig = Signature([0, 0, 0, 2]);
        let k = merged.terms.get(&sig).unwrap();
        // Symmetrized kernel: value 1.0*2.0/2 at (0,1) and (1,0).
        assert!((k.get(&[0, 1]) - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((k.get(&[1, 0]) - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(k.get(&[0, 0]).norm() < 1e-12);
    }

    #[test]
    fn flatten_single_factor_is_identity() {
        let (_, _, lint) = setup(0.2);
        let cv = CorrelationVector::single(vec![lint.clone()]);
        let mut diff = cv.flatten();
        diff.sub_assign(&lint);
        assert!(diff.max_abs() < 1e-14);
    }

    #[test]
    fn free_evolution_phases() {
        let (_, ctx, _) = setup(0.0);
        let f = NormalPolynomial::generator(1, Species::CreMinus, vec![C64::new(1.0, 0.0)]);
        let g = f.free_evolve(2.0, &ctx);
        // CreMinus at energy 1 (omega=0, mu=-1): phase exp(-i*1*2).
        let k = g.terms.values().next().unwrap();
        assert!((k.data[0] - C64::from_polar(1.0, -2.0)).norm() < 1e-12);
        let back = g.free_evolve(-2.0, &ctx);
        let mut diff = back;
        diff.sub_assign(&f);
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn one_vertex_tree_operator() {
        let (_, ctx, lint) = setup(0.2);
        let tree = DirectedTree::new(1, vec![Line::Root { vertex: 0 }]);
        let t = 1.0;
        // At tau = t the free dressing is the identity.
        let ct = CorrelationTree::von_neumann(tree, vec![t]).unwrap();
        let out = tree_operator(&ct, t, &[], &lint, &ctx).unwrap();
        assert_eq!(out.len(), 1);
        let mut diff = out[0].clone();
        diff.sub_assign(&lint);
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn disconnected_tree_factorizes() {
        let (_, ctx, lint) = setup(0.2);
        let two = DirectedTree::new(2, vec![Line::Root { vertex: 0 }, Line::Root { vertex: 1 }]);
        let ct = CorrelationTree::von_neumann(two, vec![0.3, 0.7]).unwrap();
        let out = tree_operator(&ct, 1.0, &[], &lint, &ctx).unwrap();
        assert_eq!(out.len(), 2);
        for (tau, got) in [(0.3, &out[0]), (0.7, &out[1])] {
            let single = DirectedTree::new(1, vec![Line::Root { vertex: 0 }]);
            let ct1 = CorrelationTree::von_neumann(single, vec![tau]).unwrap();
            let want = tree_operator(&ct1, 1.0, &[], &lint, &ctx).unwrap();
            let mut diff = got.clone();
            diff.sub_assign(&want[0]);
            assert!(diff.max_abs() < 1e-12);
        }
    }

    #[test]
    fn tree_operator_arity_matches_roots_and_shoots() {
        let (_, ctx, lint) = setup(0.1);
        let tree = DirectedTree::new(
            1,
            vec![
                Line::Root { vertex: 0 },
                Line::Shoot { vertex: 0, label: 0 },
            ],
        );
        let ct = CorrelationTree::von_neumann(tree, vec![0.4, 0.0]).unwrap();
        let f = NormalPolynomial::generator(1, Species::CreMinus, vec![C64::new(1.0, 0.0)]);
        let out = tree_operator(&ct, 1.0, &[f], &lint, &ctx).unwrap();
        assert_eq!(out.len(), 1);
    }
}
