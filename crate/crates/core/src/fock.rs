//! Exact finite-dimensional oracle for the doubled algebra and the von
//! Neumann dynamics on a truncated Fock space.
//!
//! Backward-branch generators act by left multiplication on density arrays,
//! forward-branch generators by swapped right multiplication; the cyclic
//! vector is the reference density array and expectations are plain traces.
//! Everything the symbolic layers produce can be realized here and checked.

use crate::corrdyn::{for_each_tuple, NormalPolynomial, WickContext};
use crate::modespace::{InteractionKernel, ModeGrid, OccupationField, Species};
use crate::quad;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

pub type Array = DMatrix<C64>;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("dense-array budget exceeded: dim^2 = {got} > {budget}")]
    Budget { got: usize, budget: usize },
    #[error("n_max must be at least 1")]
    BadNmax,
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] quad::QuadError),
}

/// Truncated-Fock realization of the doubled algebra. The basis enumerates
/// occupation vectors with per-mode occupation at most `n_max` and total
/// occupation at most `total_cap`; ladder actions are precomputed index
/// remaps.
#[derive(Debug, Clone)]
pub struct DoubledRep {
    pub grid: ModeGrid,
    pub n_max: usize,
    pub total_cap: usize,
    pub dim: usize,
    /// Occupation vector of each basis state.
    pub basis: Vec<Vec<usize>>,
    /// raise_map[mode][state] = (target state, sqrt(occ+1)) if within caps.
    raise_map: Vec<Vec<Option<(usize, f64)>>>,
    /// lower_map[mode][state] = (target state, sqrt(occ)) if occ > 0.
    lower_map: Vec<Vec<Option<(usize, f64)>>>,
}

impl DoubledRep {
    pub fn new(grid: ModeGrid, n_max: usize, budget: usize) -> Result<Self, FockError> {
        Self::with_total_cap(grid, n_max, usize::MAX, budget)
    }

    /// Truncation by per-mode occupation `n_max` and total occupation
    /// `total_cap`; total-occupation truncation keeps the dimension tame on
    /// multi-mode grids while preserving the same headroom guarantees.
    pub fn with_total_cap(
        grid: ModeGrid,
        n_max: usize,
        total_cap: usize,
        budget: usize,
    ) -> Result<Self, FockError> {
        if n_max < 1 {
            return Err(FockError::BadNmax);
        }
        let m = grid.len();
        let cap = total_cap.min(n_max * m);
        // Enumerate occupation vectors in lexicographic order.
        let mut basis: Vec<Vec<usize>> = Vec::new();
        let mut occ = vec![0usize; m];
        'enumerate: loop {
            if occ.iter().sum::<usize>() <= cap {
                basis.push(occ.clone());
            }
            let mut k = 0;
            loop {
                if k == m {
                    break 'enumerate;
                }
                occ[k] += 1;
                if occ[k] <= n_max {
                    break;
                }
                occ[k] = 0;
                k += 1;
            }
        }
        basis.sort();
        let dim = basis.len();
        if dim * dim > budget {
            return Err(FockError::Budget {
                got: dim * dim,
                budget,
            });
        }
        let index_of = |occ: &[usize]| -> Option<usize> {
            basis.binary_search_by(|b| b.as_slice().cmp(occ)).ok()
        };
        let mut raise_map = vec![vec![None; dim]; m];
        let mut lower_map = vec![vec![None; dim]; m];
        for (idx, occ) in basis.iter().enumerate() {
            for k in 0..m {
                let mut up = occ.clone();
                up[k] += 1;
                if up[k] <= n_max && up.iter().sum::<usize>() <= cap {
                    if let Some(t) = index_of(&up) {
                        raise_map[k][idx] = Some((t, ((occ[k] + 1) as f64).sqrt()));
                    }
                }
                if occ[k] > 0 {
                    let mut down = occ.clone();
                    down[k] -= 1;
                    if let Some(t) = index_of(&down) {
                        lower_map[k][idx] = Some((t, (occ[k] as f64).sqrt()));
                    }
                }
            }
        }
        Ok(DoubledRep {
            grid,
            n_max,
            total_cap: cap,
            dim,
            basis,
            raise_map,
            lower_map,
        })
    }

    /// Apply a doubled generator (density-normalized) to an array via the
    /// precomputed index remaps.
    pub fn apply_generator(&self, species: Species, mode: usize, x: &Array) -> Array {
        let s = 1.0 / self.grid.weight.sqrt();
        let mut out = Array::zeros(self.dim, self.dim);
        match species {
            // adag X: rows remap downward through the raise table.
            Species::CreMinus => {
                for (src, entry) in self.raise_map[mode].iter().enumerate() {
                    if let Some((dst, amp)) = entry {
                        let a = C64::new(amp * s, 0.0);
                        for c in 0..self.dim {
                            out[(*dst, c)] += a * x[(src, c)];
                        }
                    }
                }
            }
            // a X.
            Species::AnnMinus => {
                for (src, entry) in self.lower_map[mode].iter().enumerate() {
                    if let Some((dst, amp)) = entry {
                        let a = C64::new(amp * s, 0.0);
                        for c in 0..self.dim {
                            out[(*dst, c)] += a * x[(src, c)];
                        }
                    }
                }
            }
            // X a: the lowering operator has entries a[src, src+e_k], so
            // column dst of the output pulls column src with the raise
            // amplitude.
            Species::CrePlus => {
                for (src, entry) in self.raise_map[mode].iter().enumerate() {
                    if let Some((dst, amp)) = entry {
                        let a = C64::new(amp * s, 0.0);
                        for r in 0..self.dim {
                            out[(r, *dst)] += a * x[(r, src)];
                        }
                    }
                }
            }
            // X adag: adag has entries adag[src, src-e_k].
            Species::AnnPlus => {
                for (src, entry) in self.lower_map[mode].iter().enumerate() {
                    if let Some((dst, amp)) = entry {
                        let a = C64::new(amp * s, 0.0);
                        for r in 0..self.dim {
                            out[(r, *dst)] += a * x[(r, src)];
                        }
                    }
                }
            }
        }
        out
    }

    /// Reference density array for the given occupation (vacuum projector,
    /// or the normalized truncated Gaussian).
    pub fn reference_state(&self, occ: &OccupationField) -> Array {
        let m = self.grid.len();
        let mut diag = vec![1.0f64; self.dim];
        for k in 0..m {
            let n = occ.value(k);
            let x = if n > 0.0 { n / (1.0 + n) } else { 0.0 };
            for (idx, d) in diag.iter_mut().enumerate() {
                *d *= x.powi(self.basis[idx][k] as i32);
            }
        }
        let z: f64 = diag.iter().sum();
        let mut rho = Array::zeros(self.dim, self.dim);
        for (idx, d) in diag.iter().enumerate() {
            rho[(idx, idx)] = C64::new(d / z, 0.0);
        }
        rho
    }

    /// Free energies above mu per basis state.
    pub fn h0_diag(&self) -> Vec<f64> {
        let m = self.grid.len();
        self.basis
            .iter()
            .map(|occ| (0..m).map(|k| occ[k] as f64 * self.grid.energy(k)).sum())
            .collect()
    }

    /// Free Hamiltonian as a diagonal matrix (energies above mu).
    pub fn h0(&self) -> Array {
        let mut h = Array::zeros(self.dim, self.dim);
        for (idx, e) in self.h0_diag().iter().enumerate() {
            h[(idx, idx)] = C64::new(*e, 0.0);
        }
        h
    }

    /// Two-body interaction as sparse triplets (row, col, value).
    pub fn interaction_triplets(&self, kernel: &InteractionKernel) -> Vec<(usize, usize, C64)> {
        let m = self.grid.len();
        let mut entries: std::collections::BTreeMap<(usize, usize), C64> =
            std::collections::BTreeMap::new();
        for_each_tuple(4, m, |t| {
            let (p1, p2, q1, q2) = (
                &self.grid.modes[t[0]],
                &self.grid.modes[t[1]],
                &self.grid.modes[t[2]],
                &self.grid.modes[t[3]],
            );
            let conserved = (0..self.grid.dim).all(|d| {
                let s = p1[d] + p2[d] - q1[d] - q2[d];
                s.abs() < 1e-9
            });
            if !conserved {
                return;
            }
            let c = kernel.eval(p1, p2, q1, q2) * self.grid.weight;
            // adag_{t0} adag_{t1} a_{t2} a_{t3} on each basis state.
            for (idx, _) in self.basis.iter().enumerate() {
                let mut cur = idx;
                let mut amp = 1.0f64;
                let steps = [
                    (t[3], &self.lower_map),
                    (t[2], &self.lower_map),
                    (t[1], &self.raise_map),
                    (t[0], &self.raise_map),
                ];
                let mut ok = true;
                for (k, map) in steps {
                    match map[k][cur] {
                        Some((next, a)) => {
                            amp *= a;
                            cur = next;
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    *entries.entry((cur, idx)).or_insert(C64::new(0.0, 0.0)) += c * amp;
                }
            }
        });
        entries
            .into_iter()
            .filter(|(_, v)| v.norm_sqr() != 0.0)
            .map(|((r, c), v)| (r, c, v))
            .collect()
    }

    /// Two-body interaction as a dense matrix.
    pub fn interaction(&self, kernel: &InteractionKernel) -> Array {
        let mut v = Array::zeros(self.dim, self.dim);
        for (r, c, val) in self.interaction_triplets(kernel) {
            v[(r, c)] += val;
        }
        v
    }

    /// Trace pairing of an ordered product of two generators against a state.
    pub fn two_point(
        &self,
        state: &Array,
        g1: (Species, usize),
        g2: (Species, usize),
    ) -> C64 {
        let y = self.apply_generator(g2.0, g2.1, state);
        let z = self.apply_generator(g1.0, g1.1, &y);
        z.diagonal().iter().sum()
    }

    /// Realize a normal-ordered polynomial as its action on an array, with
    /// contractions taken against the occupation the polynomial was built
    /// with. The normal monomials are first expanded into plain operator
    /// products (creators applied leftmost per branch, matching the oracle's
    /// operator assembly on the truncated space), then applied slotwise.
    pub fn realize_apply(
        &self,
        np: &NormalPolynomial,
        occ: &OccupationField,
        x: &Array,
    ) -> Array {
        let ctx = WickContext::new(&self.grid, occ);
        let w = self.grid.weight;
        let mut out = Array::zeros(self.dim, self.dim);
        for (species, kernel) in np.to_plain_terms(&ctx) {
            let rank = species.len();
            let scale = C64::new(w.powi(rank as i32), 0.0);
            for (tuple, c) in kernel.nonzero() {
                // Apply right-to-left: the last slot acts first.
                let mut y = x.clone();
                for (slot, &sp) in species.iter().enumerate().rev() {
                    y = self.apply_generator(sp, tuple[slot], &y);
                }
                out += y * (c * scale);
            }
        }
        out
    }
}

/// The free and interacting parts of the von Neumann generator, realized on
/// vectorized density arrays.
#[derive(Debug, Clone)]
pub struct LiouvillePair {
    pub dim: usize,
    pub h0_diag: Vec<f64>,
    pub v: Array,
    pub v_dag: Array,
    /// Sparse triplets of V (row, col, value) for fast application.
    v_sparse: Vec<(usize, usize, C64)>,
    pub coupling: f64,
}

impl LiouvillePair {
    pub fn new(rep: &DoubledRep, kernel: &InteractionKernel, coupling: f64) -> Self {
        let v_sparse = rep.interaction_triplets(kernel);
        let mut v = Array::zeros(rep.dim, rep.dim);
        for &(r, c, val) in &v_sparse {
            v[(r, c)] += val;
        }
        let v_dag = v.adjoint();
        LiouvillePair {
            dim: rep.dim,
            h0_diag: rep.h0_diag(),
            v,
            v_dag,
            v_sparse,
            coupling,
        }
    }

    /// `L0 X = -i (H0 X - X H0)` (diagonal in the array basis).
    pub fn l0_apply(&self, x: &Array) -> Array {
        let mut out = x.clone();
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(r, c)] *= C64::new(0.0, -(self.h0_diag[r] - self.h0_diag[c]));
            }
        }
        out
    }

    /// `exp(L0 s) X`: elementwise phases.
    pub fn free_flow(&self, s: f64, x: &Array) -> Array {
        let mut out = x.clone();
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[(r, c)] *= C64::from_polar(1.0, -(self.h0_diag[r] - self.h0_diag[c]) * s);
            }
        }
        out
    }

    /// `L_int X = -i (V X - X V^dagger)`, applied through the sparse
    /// triplets of V.
    pub fn lint_apply(&self, x: &Array) -> Array {
        let mut out = Array::zeros(self.dim, self.dim);
        let mi = C64::new(0.0, -1.0);
        for &(r, s, val) in &self.v_sparse {
            // -i V X: row r accumulates val * X[s, :].
            let a = mi * val;
            for c in 0..self.dim {
                out[(r, c)] += a * x[(s, c)];
            }
            // +i X V^dag: V^dag[(s, r)] = conj(val), so column r of the
            // output accumulates conj(val) * X[:, s].
            let b = -mi * val.conj();
            for i in 0..self.dim {
                out[(i, r)] += b * x[(i, s)];
            }
        }
        out
    }

    /// Interaction-picture generator at time s applied to an array.
    pub fn lint_t_apply(&self, s: f64, x: &Array) -> Array {
        let y = self.free_flow(s, x);
        let z = self.lint_apply(&y);
        self.free_flow(-s, &z)
    }

    /// n-th coupling coefficient of the interaction-picture evolution,
    /// applied to an array. Each nested time-ordered integral is resolved
    /// spectrally: sample the level on Chebyshev nodes, antidifferentiate
    /// the series, feed the next level. Node count adapts until the series
    /// tail is below tolerance.
    pub fn dyson_apply(
        &self,
        order: usize,
        t_hi: f64,
        t_lo: f64,
        x: &Array,
        tol: f64,
    ) -> Result<Array, FockError> {
        if order == 0 {
            return Ok(x.clone());
        }
        let mut n_nodes = 48usize;
        loop {
            let nodes = quad::ChebSeries::<Array>::nodes(t_lo, t_hi, n_nodes);
            // Level 1: K_1(s) = int_{t_lo}^{s} L(u) x du.
            let mut level: quad::ChebSeries<Array> = {
                let samples: Vec<Array> =
                    nodes.iter().map(|&u| self.lint_t_apply(u, x)).collect();
                quad::ChebSeries::fit(t_lo, t_hi, &samples).antiderivative()
            };
            let mut worst_tail = level.tail_magnitude();
            for _ in 1..order {
                let samples: Vec<Array> = nodes
                    .iter()
                    .map(|&u| self.lint_t_apply(u, &level.eval(u)))
                    .collect();
                level = quad::ChebSeries::fit(t_lo, t_hi, &samples).antiderivative();
                worst_tail = worst_tail.max(level.tail_magnitude());
            }
            if worst_tail < tol {
                return Ok(level.eval(t_hi));
            }
            n_nodes *= 2;
            if n_nodes > 1024 {
                return Err(FockError::Quadrature(quad::QuadError::NoConvergence {
                    requested: tol,
                    achieved: worst_tail,
                    evals: n_nodes,
                }));
            }
        }
    }

    /// Full generator as a dense superoperator on vectorized arrays
    /// (column-major); practical only at small dimension.
    pub fn full_superop(&self, coupling: f64) -> Array {
        let d = self.dim;
        let n = d * d;
        let mut sup = Array::zeros(n, n);
        // L0: diagonal.
        for c in 0..d {
            for r in 0..d {
                let idx = c * d + r;
                sup[(idx, idx)] = C64::new(0.0, -(self.h0_diag[r] - self.h0_diag[c]));
            }
        }
        // -i lambda (I (x) V): block-diagonal in the column index.
        for c in 0..d {
            for r in 0..d {
                for rp in 0..d {
                    sup[(c * d + r, c * d + rp)] += C64::new(0.0, -coupling) * self.v[(r, rp)];
                }
            }
        }
        // +i lambda (conj(V) (x) I).
        for c in 0..d {
            for cp in 0..d {
                let vc = self.v_dag[(cp, c)];
                for r in 0..d {
                    sup[(c * d + r, cp * d + r)] += C64::new(0.0, coupling) * vc;
                }
            }
        }
        sup
    }
}

/// Swap-and-adjoint involution on arrays: realizes the star involution of
/// the doubled algebra in the array representation.
pub fn array_star(x: &Array) -> Array {
    x.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrdyn::{interaction_normal_form, tensor_merge};
    use crate::linalg::expm;
    use crate::modespace::{OccupationSpec, PropagatorTable};

    fn grid1() -> ModeGrid {
        ModeGrid::build(1, 1, 1.0, -1.0).unwrap()
    }

    fn grid2() -> ModeGrid {
        ModeGrid::build(1, 2, 0.5, -1.0).unwrap()
    }

    #[test]
    fn two_level_lowering() {
        let rep = DoubledRep::new(grid1(), 1, 1 << 20).unwrap();
        assert_eq!(rep.dim, 2);
        let mut x = Array::zeros(2, 2);
        x[(1, 1)] = C64::new(1.0, 0.0);
        let y = rep.apply_generator(Species::AnnMinus, 0, &x);
        assert!((y[(0, 1)] - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn ladder_commutator_with_headroom() {
        let rep = DoubledRep::new(grid1(), 3, 1 << 20).unwrap();
        // [a_-, a^+_-] = 1/weight on occupations {0,1,2}: apply both
        // orderings to basis projectors and compare diagonals.
        for n in 0..3usize {
            let mut x = Array::zeros(rep.dim, rep.dim);
            x[(n, n)] = C64::new(1.0, 0.0);
            let ac = rep.apply_generator(
                Species::AnnMinus,
                0,
                &rep.apply_generator(Species::CreMinus, 0, &x),
            );
            let ca = rep.apply_generator(
                Species::CreMinus,
                0,
                &rep.apply_generator(Species::AnnMinus, 0, &x),
            );
            let comm = &ac - &ca;
            assert!((comm[(n, n)] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn cross_branch_commutators_vanish() {
        // Exhaustive sweep over generator pairs from opposite branches on a
        // 2-mode rep: left and right multiplications commute exactly.
        let rep = DoubledRep::new(grid2(), 2, 1 << 22).unwrap();
        let minus = [Species::AnnMinus, Species::CreMinus];
        let plus = [Species::AnnPlus, Species::CrePlus];
        let mut x = Array::zeros(rep.dim, rep.dim);
        for i in 0..rep.dim {
            for j in 0..rep.dim {
                x[(i, j)] = C64::new((i + 1) as f64, (j as f64) - 1.5);
            }
        }
        for &sm in &minus {
            for &sp in &plus {
                for km in 0..2 {
                    for kp in 0..2 {
                        let ab = rep.apply_generator(sm, km, &rep.apply_generator(sp, kp, &x));
                        let ba = rep.apply_generator(sp, kp, &rep.apply_generator(sm, km, &x));
                        assert!((ab - ba).norm() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn h0_spectrum_on_occupation_basis() {
        let rep = DoubledRep::new(grid1(), 2, 1 << 20).unwrap();
        let h0 = rep.h0();
        // Energies 0, (omega - mu), 2(omega - mu) with omega = 0, mu = -1.
        for n in 0..3 {
            assert!((h0[(n, n)] - C64::new(n as f64, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn interaction_matches_naive_assembly() {
        // Independent second assembly path: explicit basis-state loops.
        let grid = grid2();
        let kernel = InteractionKernel::new(C64::new(0.4, 0.0), 0.3).unwrap();
        let rep = DoubledRep::new(grid.clone(), 2, 1 << 22).unwrap();
        let v = rep.interaction(&kernel);
        let radix = rep.n_max + 1;
        let m = grid.len();
        let occ_of = |idx: usize, k: usize| idx / radix.pow(k as u32) % radix;
        let mut naive = Array::zeros(rep.dim, rep.dim);
        for_each_tuple(4, m, |t| {
            let (p1, p2, q1, q2) = (t[0], t[1], t[2], t[3]);
            let conserved = (0..grid.dim).all(|d| {
                (grid.modes[p1][d] + grid.modes[p2][d] - grid.modes[q1][d] - grid.modes[q2][d])
                    .abs()
                    < 1e-9
            });
            if !conserved {
                return;
            }
            let c = kernel.eval(
                &grid.modes[p1],
                &grid.modes[p2],
                &grid.modes[q1],
                &grid.modes[q2],
            ) * grid.weight;
            // adag_p1 adag_p2 a_q1 a_q2 acting on each basis state.
            for idx in 0..rep.dim {
                let mut occ: Vec<usize> = (0..m).map(|k| occ_of(idx, k)).collect();
                let mut amp = 1.0f64;
                let steps = [(q2, false), (q1, false), (p2, true), (p1, true)];
                let mut ok = true;
                for &(k, up) in &steps {
                    if up {
                        if occ[k] >= rep.n_max {
                            ok = false;
                            break;
                        }
                        amp *= ((occ[k] + 1) as f64).sqrt();
                        occ[k] += 1;
                    } else {
                        if occ[k] == 0 {
                            ok = false;
                            break;
                        }
                        amp *= (occ[k] as f64).sqrt();
                        occ[k] -= 1;
                    }
                }
                if ok {
                    let target: usize =
                        (0..m).map(|k| occ[k] * radix.pow(k as u32)).sum();
                    naive[(target, idx)] += c * amp;
                }
            }
        });
        assert!((&v - &naive).norm() < 1e-12);
    }

    #[test]
    fn two_point_vacuum_table() {
        let rep = DoubledRep::new(grid1(), 2, 1 << 20).unwrap();
        let occ = OccupationField::build(&rep.grid, OccupationSpec::Vacuum).unwrap();
        let rho = rep.reference_state(&occ);
        use Species::*;
        // Annihilator pair on opposite branches: n = 0.
        let v = rep.two_point(&rho, (AnnPlus, 0), (AnnMinus, 0));
        assert!(v.norm() < 1e-14);
        // Creator pair on opposite branches: (1+n)/weight = 1.
        let v = rep.two_point(&rho, (CrePlus, 0), (CreMinus, 0));
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-14);
        // Forbidden pairing.
        let v = rep.two_point(&rho, (CrePlus, 0), (AnnMinus, 0));
        assert!(v.norm() < 1e-14);
    }

    #[test]
    fn two_point_thermal_matches_propagator() {
        // Gaussian occupation with headroom: 1e-10 agreement.
        let grid = grid1();
        let occ =
            OccupationField::build(&grid, OccupationSpec::Gaussian { n0: 0.05, b: 0.7 }).unwrap();
        let rep = DoubledRep::new(grid.clone(), 10, 1 << 20).unwrap();
        let rho = rep.reference_state(&occ);
        let table = PropagatorTable::new(&occ);
        use crate::modespace::{Branch, Orientation};
        for or in [Orientation::Plus, Orientation::Minus] {
            for gu in [Branch::Plus, Branch::Minus] {
                for gl in [Branch::Plus, Branch::Minus] {
                    let (su, sl) = PropagatorTable::end_species(or, gu, gl);
                    let got = rep.two_point(&rho, (su, 0), (sl, 0)) * C64::new(grid.weight, 0.0);
                    let want = table.value(or, gu, gl, 0);
                    assert!(
                        (got - C64::new(want, 0.0)).norm() < 1e-10,
                        "or={or:?} gu={gu:?} gl={gl:?}: got {got}, want {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn realize_interaction_matches_liouvillian() {
        // The symbolic interaction realized on arrays equals -i[V, .] with
        // the adjoint on the right for complex kernels.
        for n0 in [0.0, 0.2] {
            let grid = grid2();
            let occ = if n0 == 0.0 {
                OccupationField::build(&grid, OccupationSpec::Vacuum).unwrap()
            } else {
                OccupationField::build(&grid, OccupationSpec::Gaussian { n0, b: 0.5 }).unwrap()
            };
            let ctx = WickContext::new(&grid, &occ);
            let kernel = InteractionKernel::new(C64::new(0.3, 0.1), 0.4).unwrap();
            let lint = interaction_normal_form(&grid, &kernel, &ctx);
            let rep = DoubledRep::new(grid.clone(), 2, 1 << 22).unwrap();
            let pair = LiouvillePair::new(&rep, &kernel, 1.0);
            let mut x = Array::zeros(rep.dim, rep.dim);
            for i in 0..rep.dim {
                for j in 0..rep.dim {
                    x[(i, j)] = C64::new((i * 7 % 5) as f64 - 1.0, (j * 3 % 4) as f64 * 0.5);
                }
            }
            let got = rep.realize_apply(&lint, &occ, &x);
            let want = pair.lint_apply(&x);
            assert!(
                (&got - &want).norm() < 1e-10 * want.norm().max(1.0),
                "n0={n0}: {} vs {}",
                got.norm(),
                want.norm()
            );
        }
    }

    #[test]
    fn realize_star_is_adjoint() {
        let grid = grid1();
        let occ =
            OccupationField::build(&grid, OccupationSpec::Gaussian { n0: 0.1, b: 0.3 }).unwrap();
        let ctx = WickContext::new(&grid, &occ);
        let kernel = InteractionKernel::new(C64::new(0.5, 0.0), 0.2).unwrap();
        let lint = interaction_normal_form(&grid, &kernel, &ctx);
        let a = NormalPolynomial::generator(1, Species::CreMinus, vec![C64::new(0.4, 0.3)]);
        let np = tensor_merge(&lint, &a);
        let rep = DoubledRep::new(grid, 4, 1 << 20).unwrap();
        let rho = rep.reference_state(&occ);
        let lhs = rep.realize_apply(&np.star(), &occ, &rho);
        let rhs = array_star(&rep.realize_apply(&np, &occ, &rho));
        assert!((lhs - rhs).norm() < 1e-11);
    }

    #[test]
    fn dyson_order_zero_and_ftc() {
        let grid = grid1();
        let kernel = InteractionKernel::new(C64::new(0.6, 0.0), 0.2).unwrap();
        let rep = DoubledRep::new(grid, 3, 1 << 20).unwrap();
        let pair = LiouvillePair::new(&rep, &kernel, 1.0);
        let mut x = Array::zeros(rep.dim, rep.dim);
        x[(1, 2)] = C64::new(1.0, 0.0);
        x[(0, 0)] = C64::new(0.5, -0.5);
        let k0 = pair.dyson_apply(0, 1.0, 0.0, &x, 1e-12).unwrap();
        assert!((&k0 - &x).norm() < 1e-14);
        // d/dt of the order-1 term at t equals L_int(t) applied to x.
        let t = 0.8;
        let h = 1e-5;
        let plus = pair.dyson_apply(1, t + h, 0.0, &x, 1e-12).unwrap();
        let minus = pair.dyson_apply(1, t - h, 0.0, &x, 1e-12).unwrap();
        let deriv = (&plus - &minus) * C64::new(0.5 / h, 0.0);
        let want = pair.lint_t_apply(t, &x);
        assert!((deriv - want).norm() < 1e-8);
    }

    #[test]
    fn dyson_order2_matches_exponential_series() {
        // Extract the quadratic coupling coefficient of
        // exp(-L0 t2) exp(L (t2-t1)) exp(L0 t1) by finite differences in the
        // coupling and compare with the quadrature result.
        let grid = grid1();
        let kernel = InteractionKernel::new(C64::new(0.6, 0.0), 0.2).unwrap();
        let rep = DoubledRep::new(grid, 4, 1 << 20).unwrap();
        let pair = LiouvillePair::new(&rep, &kernel, 1.0);
        let d = rep.dim;
        let (t2, t1) = (0.9, 0.1);
        let f = |lambda: f64| -> Array {
            let sup = pair.full_superop(lambda);
            let e = expm(&(sup * C64::new(t2 - t1, 0.0)));
            // Free dressing on both sides.
            let mut out = e;
            for c in 0..d {
                for r in 0..d {
                    let row_phase = C64::from_polar(
                        1.0,
                        -(pair.h0_diag[r] - pair.h0_diag[c]) * -t2,
                    );
                    let _ = row_phase;
                }
            }
            out
        };
        // Dress columns/rows of the exponential with the free flows: build
        // the full map X -> e^{-L0 t2} e^{L dt} e^{L0 t1} X on a probe.
        let mut x = Array::zeros(d, d);
        x[(0, 1)] = C64::new(0.7, 0.2);
        x[(2, 0)] = C64::new(-0.3, 0.4);
        let apply_f = |lambda: f64, x: &Array| -> Array {
            let sup = f(lambda);
            // vec(X) column-major, apply, unvec.
            let mut vecx = DMatrix::<C64>::zeros(d * d, 1);
            let pre = pair.free_flow(t1, x);
            for c in 0..d {
                for r in 0..d {
                    vecx[(c * d + r, 0)] = pre[(r, c)];
                }
            }
            let vecy = &sup * &vecx;
            let mut y = Array::zeros(d, d);
            for c in 0..d {
                for r in 0..d {
                    y[(r, c)] = vecy[(c * d + r, 0)];
                }
            }
            pair.free_flow(-t2, &y)
        };
        let second_coeff = |h: f64| -> Array {
            let plus = apply_f(h, &x);
            let minus = apply_f(-h, &x);
            let zero = apply_f(0.0, &x);
            (plus + minus - zero * C64::new(2.0, 0.0)) * C64::new(0.5 / (h * h), 0.0)
        };
        // Richardson over two step sizes kills the h^2 error term.
        let s1 = second_coeff(1e-2);
        let s2 = second_coeff(5e-3);
        let extrap = (s2 * C64::new(4.0 / 3.0, 0.0)) - (s1 * C64::new(1.0 / 3.0, 0.0));
        let got = pair.dyson_apply(2, t2, t1, &x, 1e-11).unwrap();
        let rel = (&got - &extrap).norm() / got.norm().max(1e-30);
        assert!(rel < 1e-7, "relative error {rel:.3e}");
    }

    #[test]
    fn trace_preservation_under_full_flow() {
        let grid = grid1();
        let kernel = InteractionKernel::new(C64::new(0.6, 0.0), 0.2).unwrap();
        let rep = DoubledRep::new(grid, 3, 1 << 20).unwrap();
        let pair = LiouvillePair::new(&rep, &kernel, 0.7);
        let sup = pair.full_superop(0.7);
        let e = expm(&(sup * C64::new(0.4, 0.0)));
        let d = rep.dim;
        let mut x = Array::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                x[(i, j)] = C64::new((i + 2 * j) as f64 * 0.1, (i as f64) - 0.4);
            }
        }
        let mut vecx = DMatrix::<C64>::zeros(d * d, 1);
        for c in 0..d {
            for r in 0..d {
                vecx[(c * d + r, 0)] = x[(r, c)];
            }
        }
        let vecy = &e * &vecx;
        let mut tr = C64::new(0.0, 0.0);
        for r in 0..d {
            tr += vecy[(r * d + r, 0)];
        }
        let tr0: C64 = x.diagonal().iter().sum();
        assert!((tr - tr0).norm() < 1e-10);
    }

    #[test]
    fn budget_guard() {
        let grid = ModeGrid::build(1, 3, 0.5, -1.0).unwrap();
        assert!(matches!(
            DoubledRep::new(grid, 9, 100),
            Err(FockError::Budget { .. })
        ));
    }
}
