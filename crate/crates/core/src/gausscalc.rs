//! Closed-form evaluation of oscillatory Gaussian momentum integrals:
//! integrands are sums of terms `coeff * poly * exp(x^T Q(tau) x + L(tau).x
//! + c0(tau))` over d-dimensional momentum variables subject to linear
//! conservation constraints. Quadratic coefficients are isotropic, so a
//! scalar matrix per term suffices and the d components share determinants.
//!
//! The inverse square root of the determinant is continued continuously
//! from the delay-free point where the matrix is real positive definite.

use crate::linalg::{self, LinalgError};
use crate::modespace::ModeGrid;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GaussError {
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] LinalgError),
    #[error("integrability certificate failed: Re part of the quadratic form on the integration subspace is not negative definite (pivot {0:e})")]
    Certificate(f64),
    #[error("inconsistent delta constraints (structural zero)")]
    InconsistentConstraints,
    #[error("polynomial prefactors of degree > 2 are not supported (got {0})")]
    PrefactorDegree(usize),
    #[error("variable {0} out of range or missing an assignment")]
    BadVariable(usize),
    #[error("phase translation needs a proper nonempty external subset")]
    BadTranslationSubset,
}

/// A complex coefficient with an affine, purely imaginary delay dependence:
/// `value(tau) = base + i * sum_l itau[l] * tau[l]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AffineTau {
    pub base: C64,
    pub itau: Vec<f64>,
}

impl AffineTau {
    pub fn constant(base: C64, n_lines: usize) -> Self {
        AffineTau {
            base,
            itau: vec![0.0; n_lines],
        }
    }
    pub fn zero(n_lines: usize) -> Self {
        Self::constant(C64::new(0.0, 0.0), n_lines)
    }
    pub fn value(&self, tau: &[f64]) -> C64 {
        let phase: f64 = self.itau.iter().zip(tau.iter()).map(|(c, t)| c * t).sum();
        self.base + C64::new(0.0, phase)
    }
    pub fn add_base(&mut self, c: C64) {
        self.base += c;
    }
    pub fn add_itau(&mut self, line: usize, coeff: f64) {
        self.itau[line] += coeff;
    }
}

/// Product of at most two momentum components, e.g. `p3.x * p1.x`.
pub type Prefactor = Vec<(usize, usize)>;

/// One Gaussian term: `coeff * prod(prefactor) * exp(x^T Q x + L.x + c0)`.
/// `q` is stored as a full symmetric matrix; `lin[i]` is a d-vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussTerm {
    pub coeff: C64,
    pub q: Vec<Vec<AffineTau>>,
    pub lin: Vec<Vec<AffineTau>>,
    pub c0: AffineTau,
    pub prefactor: Prefactor,
}

/// A sum of Gaussian terms over momentum variables with shared linear
/// conservation constraints (componentwise identical).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianIntegrand {
    /// Spatial dimension of each momentum variable.
    pub dim: usize,
    pub n_vars: usize,
    /// Number of delay parameters the coefficients may depend on.
    pub n_lines: usize,
    /// Whether each variable is integrated (internal) or external.
    pub internal: Vec<bool>,
    /// Homogeneous constraint rows over all variables.
    pub constraints: Vec<Vec<f64>>,
    pub terms: Vec<GaussTerm>,
}

impl GaussianIntegrand {
    pub fn new(dim: usize, n_vars: usize, n_lines: usize) -> Self {
        GaussianIntegrand {
            dim,
            n_vars,
            n_lines,
            internal: vec![true; n_vars],
            constraints: Vec::new(),
            terms: Vec::new(),
        }
    }

    pub fn blank_term(&self, coeff: C64) -> GaussTerm {
        GaussTerm {
            coeff,
            q: vec![vec![AffineTau::zero(self.n_lines); self.n_vars]; self.n_vars],
            lin: vec![vec![AffineTau::zero(self.n_lines); self.dim]; self.n_vars],
            c0: AffineTau::zero(self.n_lines),
            prefactor: Vec::new(),
        }
    }

    /// Multiply every term by the plane wave `exp(i a x_j^1)` for each
    /// external variable j in `subset` (first momentum component only);
    /// the subset must be proper and nonempty among the externals.
    pub fn translate_phase(&mut self, subset: &[usize], a: f64) -> Result<(), GaussError> {
        let externals: Vec<usize> = (0..self.n_vars).filter(|&v| !self.internal[v]).collect();
        if subset.is_empty() || subset.len() >= externals.len() {
            return Err(GaussError::BadTranslationSubset);
        }
        for &v in subset {
            if v >= self.n_vars || self.internal[v] {
                return Err(GaussError::BadVariable(v));
            }
        }
        for term in self.terms.iter_mut() {
            for &v in subset {
                term.lin[v][0].add_base(C64::new(0.0, a));
            }
        }
        Ok(())
    }

    /// Evaluate the integrand pointwise (no integration): every variable
    /// assigned an explicit momentum.
    pub fn eval_point(&self, tau: &[f64], x: &[Vec<f64>]) -> C64 {
        let mut total = C64::new(0.0, 0.0);
        for term in &self.terms {
            let mut expo = term.c0.value(tau);
            for i in 0..self.n_vars {
                for a in 0..self.dim {
                    expo += term.lin[i][a].value(tau) * x[i][a];
                }
                for j in 0..self.n_vars {
                    let qij = term.q[i][j].value(tau);
                    if qij.norm_sqr() == 0.0 {
                        continue;
                    }
                    let dot: f64 = (0..self.dim).map(|a| x[i][a] * x[j][a]).sum();
                    expo += qij * dot;
                }
            }
            let mut pref = C64::new(1.0, 0.0);
            for &(v, comp) in &term.prefactor {
                pref *= x[v][comp];
            }
            total += term.coeff * pref * expo.exp();
        }
        total
    }

    /// Integrate the internal variables in closed form at the given delays
    /// and external momenta. Constraint rows with no internal support must
    /// be satisfied by the external assignment (else the result is zero by
    /// the structural delta).
    pub fn integrate(&self, tau: &[f64], ext: &[(usize, Vec<f64>)]) -> Result<C64, GaussError> {
        let internal_vars: Vec<usize> = (0..self.n_vars).filter(|&v| self.internal[v]).collect();
        let ext_lookup = |v: usize| -> Option<&Vec<f64>> {
            ext.iter().find(|(e, _)| *e == v).map(|(_, x)| x)
        };
        for v in 0..self.n_vars {
            if !self.internal[v] && ext_lookup(v).is_none() {
                return Err(GaussError::BadVariable(v));
            }
        }
        let m = internal_vars.len();
        // Split constraints into internal rows and external-only checks.
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<Vec<f64>> = Vec::new();
        for c in &self.constraints {
            let int_part: Vec<f64> = internal_vars.iter().map(|&v| c[v]).collect();
            let mut b = vec![0.0; self.dim];
            for v in 0..self.n_vars {
                if !self.internal[v] && c[v] != 0.0 {
                    let xv = ext_lookup(v).unwrap();
                    for a in 0..self.dim {
                        b[a] -= c[v] * xv[a];
                    }
                }
            }
            if int_part.iter().all(|&x| x == 0.0) {
                if b.iter().any(|&x| x.abs() > 1e-9) {
                    return Ok(C64::new(0.0, 0.0));
                }
                // A satisfied external-only delta at a point would be
                // delta(0); callers integrate against test functions
                // instead of hitting this.
                return Err(GaussError::InconsistentConstraints);
            }
            rows.push(int_part);
            rhs.push(b);
        }
        let (c_rows, c_rhs) = match reduce_constraints(&rows, &rhs) {
            Ok(x) => x,
            // Dependent rows with clashing right-hand sides: the deltas
            // multiply to zero.
            Err(GaussError::InconsistentConstraints) => return Ok(C64::new(0.0, 0.0)),
            Err(e) => return Err(e),
        };
        let r = c_rows.len();
        let delta_norm = if r > 0 {
            let mut cct = DMatrix::<C64>::zeros(r, r);
            for i in 0..r {
                for j in 0..r {
                    let dot: f64 = c_rows[i]
                        .iter()
                        .zip(c_rows[j].iter())
                        .map(|(a, b)| a * b)
                        .sum();
                    cct[(i, j)] = C64::new(dot, 0.0);
                }
            }
            linalg::det(&cct).re.powf(-(self.dim as f64) / 2.0)
        } else {
            1.0
        };
        let nullsp = linalg::nullspace(&c_rows, m);
        let k = nullsp.len();
        // Minimum-norm particular solution from the orthonormalized system.
        let (on_rows, on_rhs) = orthonormalize_with_rhs(&c_rows, &c_rhs, self.dim);
        let mut x0 = vec![vec![0.0; self.dim]; m];
        for (row, b) in on_rows.iter().zip(on_rhs.iter()) {
            for i in 0..m {
                for a in 0..self.dim {
                    x0[i][a] += row[i] * b[a];
                }
            }
        }
        let mut total = C64::new(0.0, 0.0);
        for term in &self.terms {
            total +=
                self.integrate_term(term, tau, &ext_lookup, &internal_vars, &nullsp, &x0, k)?;
        }
        Ok(total * delta_norm * std::f64::consts::PI.powf((self.dim * k) as f64 / 2.0))
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate_term<'a>(
        &self,
        term: &GaussTerm,
        tau: &[f64],
        ext_lookup: &dyn Fn(usize) -> Option<&'a Vec<f64>>,
        internal_vars: &[usize],
        nullsp: &[Vec<f64>],
        x0: &[Vec<f64>],
        k: usize,
    ) -> Result<C64, GaussError> {
        if term.prefactor.len() > 2 {
            return Err(GaussError::PrefactorDegree(term.prefactor.len()));
        }
        let m = internal_vars.len();
        let d = self.dim;
        let int_index = |v: usize| internal_vars.iter().position(|&w| w == v);
        // Numeric quadratic form over internal vars, source J per component,
        // and the constant.
        let mut a_mat = DMatrix::<C64>::zeros(m, m);
        let mut j_src = vec![vec![C64::new(0.0, 0.0); m]; d];
        let mut con = term.c0.value(tau);
        for i in 0..self.n_vars {
            for j in 0..self.n_vars {
                let qij = term.q[i][j].value(tau);
                if qij.norm_sqr() == 0.0 {
                    continue;
                }
                match (int_index(i), int_index(j)) {
                    (Some(ii), Some(jj)) => {
                        a_mat[(ii, jj)] += qij;
                    }
                    (Some(ii), None) => {
                        let xj = ext_lookup(j).unwrap();
                        for (alpha, js) in j_src.iter_mut().enumerate() {
                            js[ii] += qij * xj[alpha];
                        }
                    }
                    (None, Some(jj)) => {
                        let xi = ext_lookup(i).unwrap();
                        for (alpha, js) in j_src.iter_mut().enumerate() {
                            js[jj] += qij * xi[alpha];
                        }
                    }
                    (None, None) => {
                        let (xi, xj) = (ext_lookup(i).unwrap(), ext_lookup(j).unwrap());
                        let dot: f64 = (0..d).map(|a| xi[a] * xj[a]).sum();
                        con += qij * dot;
                    }
                }
            }
            for alpha in 0..d {
                let li = term.lin[i][alpha].value(tau);
                if li.norm_sqr() == 0.0 {
                    continue;
                }
                match int_index(i) {
                    Some(ii) => j_src[alpha][ii] += li,
                    None => con += li * ext_lookup(i).unwrap()[alpha],
                }
            }
        }
        // Shift x = x0 + N y: con gains x0^T A x0 + J.x0 and the source
        // becomes J + 2 A x0.
        for alpha in 0..d {
            let mut ax0 = vec![C64::new(0.0, 0.0); m];
            for i in 0..m {
                for j in 0..m {
                    ax0[i] += a_mat[(i, j)] * x0[j][alpha];
                }
            }
            for i in 0..m {
                con += (j_src[alpha][i] + ax0[i]) * x0[i][alpha];
            }
            for (i, ax) in ax0.iter().enumerate() {
                j_src[alpha][i] += 2.0 * ax;
            }
        }
        // Reduced form M = -N^T A N so the exponent is -y^T M y + J~.y.
        let mut m_red = DMatrix::<C64>::zeros(k, k);
        for (a_idx, na) in nullsp.iter().enumerate() {
            for (b_idx, nb) in nullsp.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..m {
                    for j in 0..m {
                        acc += C64::new(na[i] * nb[j], 0.0) * a_mat[(i, j)];
                    }
                }
                m_red[(a_idx, b_idx)] = -acc;
            }
        }
        let mut j_red = vec![vec![C64::new(0.0, 0.0); k]; d];
        for alpha in 0..d {
            for (a_idx, na) in nullsp.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..m {
                    acc += C64::new(na[i], 0.0) * j_src[alpha][i];
                }
                j_red[alpha][a_idx] = acc;
            }
        }
        if k > 0 {
            let re = m_red.map(|z| z.re);
            match cholesky_min_pivot(&re) {
                Some(pivot) if pivot > 0.0 => {}
                Some(pivot) => return Err(GaussError::Certificate(pivot)),
                None => return Err(GaussError::Certificate(f64::NEG_INFINITY)),
            }
        }
        let det_inv_sqrt = if k > 0 {
            linalg::det_inv_sqrt_branched(&m_red)?
        } else {
            C64::new(1.0, 0.0)
        };
        let det_factor = powi_complex(det_inv_sqrt, d as u32);
        // Solve M z[alpha] = J[alpha]; the exponent gains J.z/4.
        let mut z = vec![vec![C64::new(0.0, 0.0); k]; d];
        let mut quad_gain = C64::new(0.0, 0.0);
        for alpha in 0..d {
            if k > 0 && j_red[alpha].iter().any(|c| c.norm_sqr() != 0.0) {
                z[alpha] = linalg::solve(&m_red, &j_red[alpha])?;
                for a_idx in 0..k {
                    quad_gain += 0.25 * j_red[alpha][a_idx] * z[alpha][a_idx];
                }
            }
        }
        // Prefactors up to degree 2 via Gaussian moments: mean of y is z/2,
        // covariance (1/2) M^{-1} per component.
        let mean_x = |v: usize, comp: usize| -> C64 {
            match int_index(v) {
                Some(idx) => {
                    let mut val = C64::new(x0[idx][comp], 0.0);
                    for (a_idx, na) in nullsp.iter().enumerate() {
                        val += C64::new(na[idx], 0.0) * 0.5 * z[comp][a_idx];
                    }
                    val
                }
                None => C64::new(ext_lookup(v).unwrap()[comp], 0.0),
            }
        };
        let moment = match term.prefactor.len() {
            0 => C64::new(1.0, 0.0),
            1 => {
                let (v, comp) = term.prefactor[0];
                mean_x(v, comp)
            }
            2 => {
                let (v1, c1) = term.prefactor[0];
                let (v2, c2) = term.prefactor[1];
                let mut val = mean_x(v1, c1) * mean_x(v2, c2);
                if c1 == c2 {
                    if let (Some(i1), Some(i2)) = (int_index(v1), int_index(v2)) {
                        for (a_idx, na) in nullsp.iter().enumerate() {
                            let mut e_a = vec![C64::new(0.0, 0.0); k];
                            e_a[a_idx] = C64::new(1.0, 0.0);
                            let col = linalg::solve(&m_red, &e_a)?;
                            for (b_idx, nb) in nullsp.iter().enumerate() {
                                val += C64::new(na[i1] * nb[i2] * 0.5, 0.0) * col[b_idx];
                            }
                        }
                    }
                }
                val
            }
            _ => unreachable!(),
        };
        Ok(term.coeff * moment * det_factor * (con + quad_gain).exp())
    }

    /// Brute-force grid summation of the internal variables: the
    /// discretization oracle for the closed form. Constraint rows become
    /// Kronecker deltas divided by weight^dim.
    pub fn grid_sum(&self, grid: &ModeGrid, tau: &[f64], ext: &[(usize, Vec<f64>)]) -> C64 {
        assert_eq!(grid.dim, self.dim);
        let internal_vars: Vec<usize> = (0..self.n_vars).filter(|&v| self.internal[v]).collect();
        let m = internal_vars.len();
        let mut x: Vec<Vec<f64>> = vec![vec![0.0; self.dim]; self.n_vars];
        for (v, p) in ext {
            x[*v] = p.clone();
        }
        let mut total = C64::new(0.0, 0.0);
        let mut idx = vec![0usize; m];
        let norm = grid
            .weight
            .powi(m as i32 - self.constraints.len() as i32);
        loop {
            for (slot, &v) in internal_vars.iter().enumerate() {
                x[v] = grid.modes[idx[slot]].clone();
            }
            let mut ok = true;
            'rows: for c in &self.constraints {
                for a in 0..self.dim {
                    let s: f64 = (0..self.n_vars).map(|v| c[v] * x[v][a]).sum();
                    if s.abs() > 1e-9 {
                        ok = false;
                        break 'rows;
                    }
                }
            }
            if ok {
                total += self.eval_point(tau, &x);
            }
            if m == 0 {
                return total * C64::new(norm, 0.0);
            }
            let mut i = 0;
            loop {
                if i == m {
                    return total * C64::new(norm, 0.0);
                }
                idx[i] += 1;
                if idx[i] < grid.len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }
}

fn powi_complex(z: C64, n: u32) -> C64 {
    let mut out = C64::new(1.0, 0.0);
    for _ in 0..n {
        out *= z;
    }
    out
}

/// Keep a maximal independent subset of rows; dependent rows must have
/// consistent right-hand sides, otherwise the deltas multiply to zero.
fn reduce_constraints(
    rows: &[Vec<f64>],
    rhs: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), GaussError> {
    let mut kept_rows: Vec<Vec<f64>> = Vec::new();
    let mut kept_rhs: Vec<Vec<f64>> = Vec::new();
    let mut basis: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (row, b) in rows.iter().zip(rhs.iter()) {
        let mut v = row.clone();
        let mut vb = b.clone();
        for (u, ub) in &basis {
            let dot: f64 = v.iter().zip(u.iter()).map(|(x, y)| x * y).sum();
            for (vi, ui) in v.iter_mut().zip(u.iter()) {
                *vi -= dot * ui;
            }
            for (bi, ubi) in vb.iter_mut().zip(ub.iter()) {
                *bi -= dot * ubi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            kept_rows.push(row.clone());
            kept_rhs.push(b.clone());
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            for bi in vb.iter_mut() {
                *bi /= norm;
            }
            basis.push((v, vb));
        } else if vb.iter().any(|&x| x.abs() > 1e-9) {
            return Err(GaussError::InconsistentConstraints);
        }
    }
    Ok((kept_rows, kept_rhs))
}

/// Orthonormalized rows with consistently transformed right-hand sides,
/// used for the minimum-norm particular solution.
fn orthonormalize_with_rhs(
    rows: &[Vec<f64>],
    rhs: &[Vec<f64>],
    d: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut on_rows: Vec<Vec<f64>> = Vec::new();
    let mut on_rhs: Vec<Vec<f64>> = Vec::new();
    for (row, b) in rows.iter().zip(rhs.iter()) {
        let mut v = row.clone();
        let mut vb = b.clone();
        for (u, ub) in on_rows.iter().zip(on_rhs.iter()) {
            let dot: f64 = v.iter().zip(u.iter()).map(|(x, y)| x * y).sum();
            for (vi, ui) in v.iter_mut().zip(u.iter()) {
                *vi -= dot * ui;
            }
            for a in 0..d {
                vb[a] -= dot * ub[a];
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            for bi in vb.iter_mut() {
                *bi /= norm;
            }
            on_rows.push(v);
            on_rhs.push(vb);
        }
    }
    (on_rows, on_rhs)
}

fn cholesky_min_pivot(a: &DMatrix<f64>) -> Option<f64> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut min_pivot = f64::INFINITY;
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                min_pivot = min_pivot.min(s);
                if s <= 0.0 {
                    return Some(min_pivot);
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(min_pivot)
}

/// A closed-form delay function: an integrand whose internal momenta are
/// integrated out on demand at each (delay, external-momentum) point, with
/// the branch convention carried by the integrator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauFunction {
    pub integrand: GaussianIntegrand,
}

impl TauFunction {
    pub fn new(integrand: GaussianIntegrand) -> Self {
        TauFunction { integrand }
    }
    pub fn eval(&self, tau: &[f64], ext: &[(usize, Vec<f64>)]) -> Result<C64, GaussError> {
        self.integrand.integrate(tau, ext)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple(dim: usize, n_vars: usize) -> GaussianIntegrand {
        GaussianIntegrand::new(dim, n_vars, 1)
    }

    #[test]
    fn pure_gaussian_sqrt_pi() {
        let mut g = simple(1, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        g.terms.push(t);
        let v = g.integrate(&[0.0], &[]).unwrap();
        assert!((v - C64::new(std::f64::consts::PI.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn oscillatory_branch() {
        // int exp(-p^2 + i tau p^2) dp = sqrt(pi / (1 - i tau)).
        let mut g = simple(1, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau {
            base: C64::new(-1.0, 0.0),
            itau: vec![1.0],
        };
        g.terms.push(t);
        for tau in [0.0, 0.5, 3.0, 20.0] {
            let v = g.integrate(&[tau], &[]).unwrap();
            let exact = (C64::new(std::f64::consts::PI, 0.0) / C64::new(1.0, -tau)).sqrt();
            assert!((v - exact).norm() < 1e-10, "tau={tau}: {v} vs {exact}");
            let mag = (std::f64::consts::PI / (1.0 + tau * tau).sqrt()).sqrt();
            assert!((v.norm() - mag).abs() < 1e-10);
        }
    }

    #[test]
    fn constrained_two_vars() {
        // int dp dq delta(p + q) exp(-p^2 - q^2) = int exp(-2p^2) dp
        //   = sqrt(pi/2).
        let mut g = simple(1, 2);
        g.constraints.push(vec![1.0, 1.0]);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        t.q[1][1] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        g.terms.push(t);
        let v = g.integrate(&[0.0], &[]).unwrap();
        let exact = (std::f64::consts::PI / 2.0_f64).sqrt();
        assert!((v - C64::new(exact, 0.0)).norm() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn external_source_shift() {
        // int dp exp(-p^2 + 2 p e) = sqrt(pi) exp(e^2).
        let mut g = simple(1, 2);
        g.internal[1] = false;
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        t.q[0][1] = AffineTau::constant(C64::new(1.0, 0.0), 1);
        t.q[1][0] = AffineTau::constant(C64::new(1.0, 0.0), 1);
        g.terms.push(t);
        let e = 0.7;
        let v = g.integrate(&[0.0], &[(1, vec![e])]).unwrap();
        let exact = std::f64::consts::PI.sqrt() * (e * e).exp();
        assert!((v - C64::new(exact, 0.0)).norm() < 1e-11);
    }

    #[test]
    fn plane_wave_gives_gaussian_decay() {
        // Fourier factor on an internal Gaussian: extra exp(-a^2/4).
        let mut g = simple(1, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        t.lin[0][0] = AffineTau::constant(C64::new(0.0, 2.0), 1);
        g.terms.push(t);
        let v = g.integrate(&[0.0], &[]).unwrap();
        let expect = std::f64::consts::PI.sqrt() * (-1.0f64).exp();
        assert!((v - C64::new(expect, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn translate_phase_checks_subset() {
        let mut g = simple(1, 3);
        g.internal[1] = false;
        g.internal[2] = false;
        let t = g.blank_term(C64::new(1.0, 0.0));
        g.terms.push(t);
        assert!(g.translate_phase(&[], 1.0).is_err());
        assert!(g.translate_phase(&[1, 2], 1.0).is_err());
        assert!(g.translate_phase(&[0], 1.0).is_err());
        assert!(g.translate_phase(&[1], 1.0).is_ok());
    }

    #[test]
    fn prefactor_first_moment() {
        // int p exp(-p^2 + bp) dp = sqrt(pi) (b/2) exp(b^2/4).
        let mut g = simple(1, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        t.lin[0][0] = AffineTau::constant(C64::new(0.4, 0.0), 1);
        t.prefactor = vec![(0, 0)];
        g.terms.push(t);
        let v = g.integrate(&[0.0], &[]).unwrap();
        let exact = std::f64::consts::PI.sqrt() * 0.2 * (0.04f64).exp();
        assert!((v - C64::new(exact, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn prefactor_second_moment() {
        // int p^2 exp(-p^2) dp = sqrt(pi)/2.
        let mut g = simple(1, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        t.prefactor = vec![(0, 0), (0, 0)];
        g.terms.push(t);
        let v = g.integrate(&[0.0], &[]).unwrap();
        assert!((v - C64::new(0.5 * std::f64::consts::PI.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn certificate_rejects_growing_gaussian() {
        let mut g = simple(1, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(0.5, 0.0), 1);
        g.terms.push(t);
        assert!(matches!(
            g.integrate(&[0.0], &[]),
            Err(GaussError::Certificate(_))
        ));
    }

    #[test]
    fn matches_grid_sum() {
        let mut g = simple(1, 3);
        g.internal[2] = false;
        g.constraints.push(vec![1.0, -1.0, 1.0]);
        let mut t = g.blank_term(C64::new(0.8, 0.2));
        t.q[0][0] = AffineTau {
            base: C64::new(-0.7, 0.0),
            itau: vec![0.5],
        };
        t.q[1][1] = AffineTau {
            base: C64::new(-0.9, 0.0),
            itau: vec![-0.3],
        };
        t.q[0][1] = AffineTau::constant(C64::new(0.1, 0.0), 1);
        t.q[1][0] = AffineTau::constant(C64::new(0.1, 0.0), 1);
        t.c0 = AffineTau {
            base: C64::new(0.0, 0.0),
            itau: vec![0.2],
        };
        g.terms.push(t);
        let ext = vec![(2usize, vec![0.4])];
        let tau = vec![0.8];
        let closed = g.integrate(&tau, &ext).unwrap();
        let grid = ModeGrid::build(1, 241, 0.1, -1.0).unwrap();
        let brute = g.grid_sum(&grid, &tau, &ext);
        assert!(
            (closed - brute).norm() / closed.norm() < 1e-6,
            "closed {closed} vs grid {brute}"
        );
    }

    #[test]
    fn branch_continuity_along_delay_path() {
        let mut g = simple(1, 2);
        g.constraints.push(vec![1.0, 1.0]);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau {
            base: C64::new(-0.5, 0.0),
            itau: vec![1.0],
        };
        t.q[1][1] = AffineTau {
            base: C64::new(-0.5, 0.0),
            itau: vec![1.0],
        };
        g.terms.push(t);
        let mut prev: Option<C64> = None;
        for i in 0..1000 {
            let tau = i as f64 * 0.02;
            let v = g.integrate(&[tau], &[]).unwrap();
            if let Some(p) = prev {
                // A branch error would flip the sign (jump of order 2|v|).
                assert!((v - p).norm() < 0.2, "jump at tau={tau}");
            }
            prev = Some(v);
        }
    }

    #[test]
    fn decay_exponent_along_ray() {
        // |int exp(-p^2 + i tau p^2) dp| ~ tau^{-1/2}: fitted log-log slope
        // settles near -1/2 across decades.
        let mut g = simple(1, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau {
            base: C64::new(-1.0, 0.0),
            itau: vec![1.0],
        };
        g.terms.push(t);
        let mut slopes = Vec::new();
        for decade in [10.0, 100.0] {
            let v1 = g.integrate(&[decade], &[]).unwrap().norm();
            let v2 = g.integrate(&[10.0 * decade], &[]).unwrap().norm();
            slopes.push((v2.ln() - v1.ln()) / (10.0f64).ln());
        }
        for s in &slopes {
            assert!((s + 0.5).abs() < 0.05, "slope {s}");
        }
        assert!((slopes[0] - slopes[1]).abs() < 0.05 * 0.5);
    }

    #[test]
    fn three_dim_isotropic() {
        let mut g = simple(3, 1);
        let mut t = g.blank_term(C64::new(1.0, 0.0));
        t.q[0][0] = AffineTau::constant(C64::new(-1.0, 0.0), 1);
        g.terms.push(t);
        let v = g.integrate(&[0.0], &[]).unwrap();
        assert!((v - C64::new(std::f64::consts::PI.powf(1.5), 0.0)).norm() < 1e-11);
    }
}
