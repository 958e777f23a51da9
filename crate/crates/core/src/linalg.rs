//! Small dense complex linear algebra: LU determinants/solves, orthonormal
//! null spaces, matrix exponentials, and the branch-tracked inverse square
//! root of a determinant along the homotopy from its real-positive point.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("integrability certificate failed: real part not negative definite on the integration subspace (min eigenvalue of -Re Q = {min_eig:e})")]
    NotIntegrable { min_eig: f64 },
}

/// LU factorization with partial pivoting; returns (LU, perm, sign-swaps).
fn lu_decompose(a: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<usize>, usize), LinalgError> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut swaps = 0usize;
    for k in 0..n {
        let mut pivot = k;
        let mut best = lu[(k, k)].norm();
        for i in (k + 1)..n {
            let v = lu[(i, k)].norm();
            if v > best {
                best = v;
                pivot = i;
            }
        }
        if best < 1e-300 {
            return Err(LinalgError::Singular);
        }
        if pivot != k {
            lu.swap_rows(pivot, k);
            perm.swap(pivot, k);
            swaps += 1;
        }
        let pk = lu[(k, k)];
        for i in (k + 1)..n {
            let factor = lu[(i, k)] / pk;
            lu[(i, k)] = factor;
            for j in (k + 1)..n {
                let upd = lu[(k, j)] * factor;
                lu[(i, j)] -= upd;
            }
        }
    }
    Ok((lu, perm, swaps))
}

/// Determinant via LU.
pub fn det(a: &DMatrix<C64>) -> C64 {
    if a.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    match lu_decompose(a) {
        Ok((lu, _, swaps)) => {
            let mut d = if swaps % 2 == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(-1.0, 0.0)
            };
            for k in 0..a.nrows() {
                d *= lu[(k, k)];
            }
            d
        }
        Err(_) => C64::new(0.0, 0.0),
    }
}

/// Solve A x = b for complex dense A.
pub fn solve(a: &DMatrix<C64>, b: &[C64]) -> Result<Vec<C64>, LinalgError> {
    let n = a.nrows();
    let (lu, perm, _) = lu_decompose(a)?;
    let mut x: Vec<C64> = perm.iter().map(|&p| b[p]).collect();
    for i in 1..n {
        for j in 0..i {
            let upd = lu[(i, j)] * x[j];
            x[i] -= upd;
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            let upd = lu[(i, j)] * x[j];
            x[i] -= upd;
        }
    }
    for i in (0..n).rev() {
        x[i] /= lu[(i, i)];
    }
    Ok(x)
}

/// Orthonormal basis (columns) of the null space of a real matrix, via
/// Gram-Schmidt on the complement of the row space.
pub fn nullspace(rows: &[Vec<f64>], ncols: usize) -> Vec<Vec<f64>> {
    // Orthonormalize the rows first.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut v = r.clone();
        for b in &basis {
            let d: f64 = v.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= d * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            basis.push(v);
        }
    }
    let rank = basis.len();
    // Extend with unit vectors to a full basis; the extensions span ker.
    let mut null: Vec<Vec<f64>> = Vec::new();
    for j in 0..ncols {
        if rank + null.len() == ncols {
            break;
        }
        let mut v = vec![0.0; ncols];
        v[j] = 1.0;
        for b in basis.iter().chain(null.iter()) {
            let d: f64 = v.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= d * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            null.push(v);
        }
    }
    null
}

/// Matrix exponential by scaling-and-squaring with a high-order Taylor core.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    let n = a.nrows();
    let norm = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max) * n as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 2.0f64.powi(-(squarings as i32));
    let b = a * C64::new(scale, 0.0);
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut sum = DMatrix::<C64>::identity(n, n);
    for k in 1..=24 {
        term = (&term * &b) / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// det(M)^{-1/2} continued continuously from a matrix with positive-definite
/// real part at the start of the straight-line homotopy
/// `M(sigma) = Re M + i sigma Im M`, `sigma` from 0 to 1.
///
/// Valid whenever Re M stays positive definite (then det never vanishes on
/// the path and every value has positive real part at sigma = 0).
pub fn det_inv_sqrt_branched(m: &DMatrix<C64>) -> Result<C64, LinalgError> {
    let n = m.nrows();
    if n == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let re = m.map(|z| C64::new(z.re, 0.0));
    let im = m.map(|z| C64::new(0.0, z.im));
    let d0 = det(&re);
    if d0.re <= 0.0 || d0.im.abs() > 1e-8 * d0.re.abs() {
        return Err(LinalgError::NotIntegrable {
            min_eig: d0.re.min(0.0),
        });
    }
    // Phase-unwrap log det along the path. Every eigenvalue stays in the
    // right half-plane, so the total winding is bounded by the dimension;
    // escalate the step count only if a single step ever turns too far.
    let mut steps = 8 * n + 8;
    'retry: loop {
        let mut phase = 0.0f64;
        let mut prev = d0;
        for k in 1..=steps {
            let sigma = k as f64 / steps as f64;
            let mk = &re + &im * C64::new(sigma, 0.0);
            let dk = det(&mk);
            if dk.norm() < 1e-300 {
                return Err(LinalgError::Singular);
            }
            let turn = (dk / prev).arg();
            if turn.abs() > 1.2 && steps < 4096 {
                steps *= 4;
                continue 'retry;
            }
            phase += turn;
            prev = dk;
        }
        let log_abs = 0.5 * prev.norm().ln();
        let half_phase = 0.5 * phase;
        return Ok(C64::from_polar((-log_abs).exp(), -half_phase));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: usize, cols: usize, vals: &[(f64, f64)]) -> DMatrix<C64> {
        DMatrix::from_row_slice(
            rows,
            cols,
            &vals.iter().map(|&(r, i)| C64::new(r, i)).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn det_2x2() {
        let a = cm(2, 2, &[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)]);
        assert!((det(&a) - C64::new(-2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn solve_roundtrip() {
        let a = cm(2, 2, &[(2.0, 1.0), (0.0, 0.0), (1.0, 0.0), (3.0, -1.0)]);
        let b = vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)];
        let x = solve(&a, &b).unwrap();
        let r0 = a[(0, 0)] * x[0] + a[(0, 1)] * x[1];
        let r1 = a[(1, 0)] * x[0] + a[(1, 1)] * x[1];
        assert!((r0 - b[0]).norm() < 1e-12);
        assert!((r1 - b[1]).norm() < 1e-12);
    }

    #[test]
    fn expm_diagonal() {
        let a = cm(2, 2, &[(0.0, 1.0), (0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        let e = expm(&a);
        assert!((e[(0, 0)] - C64::i().exp()).norm() < 1e-12);
        assert!((e[(1, 1)] - C64::new(1.0f64.exp(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn branched_sqrt_scalar() {
        // M = 1 - i tau: integral form of e^{-x^2(1-i tau)} needs
        // det^{-1/2} = (1 - i tau)^{-1/2} on the principal-like branch.
        let tau = 3.0;
        let m = cm(1, 1, &[(1.0, -tau)]);
        let v = det_inv_sqrt_branched(&m).unwrap();
        let exact = C64::new(1.0, -tau).powf(-0.5);
        assert!((v - exact).norm() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn nullspace_of_sum_constraint() {
        // x1 + x2 - x3 = 0 in R^3 -> 2-dim null space, orthonormal.
        let ns = nullspace(&[vec![1.0, 1.0, -1.0]], 3);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!((v[0] + v[1] - v[2]).abs() < 1e-12);
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn branched_sqrt_continuity_2x2() {
        // Walk tau and confirm no branch jumps against small steps.
        let mut prev: Option<C64> = None;
        for k in 0..200 {
            let tau = k as f64 * 0.1;
            let m = cm(
                2,
                2,
                &[(2.0, tau), (0.3, -0.2 * tau), (0.3, -0.2 * tau), (1.5, -2.0 * tau)],
            );
            let v = det_inv_sqrt_branched(&m).unwrap();
            if let Some(p) = prev {
                assert!((v - p).norm() < 0.2, "jump at tau={tau}: {v} vs {p}");
            }
            prev = Some(v);
        }
    }
}
