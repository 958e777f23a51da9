//! Adaptive Gauss-Kronrod quadrature over generic linear-space values.
//!
//! The integrands this crate produces are smooth complex scalars, dense
//! complex matrices, or normal-ordered polynomials; all of them implement
//! [`QuadValue`] so one adaptive driver serves every module.

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Values a quadrature rule can accumulate: a vector space with a norm.
pub trait QuadValue: Clone {
    fn zero_like(&self) -> Self;
    fn scaled_add(&mut self, coeff: f64, other: &Self);
    /// Magnitude used for error control (any norm works).
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn scaled_add(&mut self, coeff: f64, other: &Self) {
        *self += coeff * other;
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for C64 {
    fn zero_like(&self) -> Self {
        C64::new(0.0, 0.0)
    }
    fn scaled_add(&mut self, coeff: f64, other: &Self) {
        *self += coeff * other;
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl QuadValue for Vec<C64> {
    fn zero_like(&self) -> Self {
        vec![C64::new(0.0, 0.0); self.len()]
    }
    fn scaled_add(&mut self, coeff: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += coeff * b;
        }
    }
    fn magnitude(&self) -> f64 {
        self.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl QuadValue for nalgebra::DMatrix<C64> {
    fn zero_like(&self) -> Self {
        nalgebra::DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn scaled_add(&mut self, coeff: f64, other: &Self) {
        *self += other * C64::new(coeff, 0.0);
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature failed to converge: requested {requested:e}, achieved {achieved:e} after {evals} evaluations")]
    NoConvergence {
        requested: f64,
        achieved: f64,
        evals: usize,
    },
}

/// Result of an adaptive integration: value plus an error estimate.
#[derive(Debug, Clone)]
pub struct QuadResult<V> {
    pub value: V,
    pub error: f64,
    pub evals: usize,
}

// Gauss-Kronrod 7-15 nodes on [-1, 1] (positive half; nodes symmetric).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<V: QuadValue, F: FnMut(f64) -> V>(f: &mut F, a: f64, b: f64) -> (V, V, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc.zero_like();
    let mut gauss = fc.zero_like();
    kronrod.scaled_add(WGK[7] * half, &fc);
    gauss.scaled_add(WG[3] * half, &fc);
    let mut resasc = 0.0f64;
    for j in 0..7 {
        let x = XGK[j] * half;
        let f1 = f(center - x);
        let f2 = f(center + x);
        kronrod.scaled_add(WGK[j] * half, &f1);
        kronrod.scaled_add(WGK[j] * half, &f2);
        resasc += WGK[j] * (f1.magnitude() + f2.magnitude());
        if j % 2 == 1 {
            let wg = WG[j / 2];
            gauss.scaled_add(wg * half, &f1);
            gauss.scaled_add(wg * half, &f2);
        }
    }
    resasc = (resasc + WGK[7] * fc.magnitude()) * half.abs();
    (kronrod, gauss, resasc)
}

/// Adaptive Gauss-Kronrod on a finite interval to absolute tolerance `tol`.
pub fn integrate<V: QuadValue, F: FnMut(f64) -> V>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<QuadResult<V>, QuadError> {
    integrate_impl(&mut f, a, b, tol)
}

fn integrate_impl<V: QuadValue, F: FnMut(f64) -> V>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<QuadResult<V>, QuadError> {
    if a == b {
        let probe = f(a);
        return Ok(QuadResult {
            value: probe.zero_like(),
            error: 0.0,
            evals: 1,
        });
    }
    // Segment worklist ordered by error contribution.
    struct Seg<V> {
        a: f64,
        b: f64,
        value: V,
        err: f64,
    }
    let eval_seg = |f: &mut F, a: f64, b: f64| -> Seg<V> {
        let (k, g, resasc) = gk15(f, a, b);
        let mut diff = k.clone();
        diff.scaled_add(-1.0, &g);
        let raw = diff.magnitude();
        // GSL-style error rescale keeps estimates honest on rough integrands.
        let err = if resasc != 0.0 && raw != 0.0 {
            resasc * 1.0_f64.min((200.0 * raw / resasc).powf(1.5))
        } else {
            raw
        };
        Seg {
            a,
            b,
            value: k,
            err,
        }
    };
    // Seed with several segments so narrow features cannot hide from the
    // first error estimate.
    let mut segs = Vec::new();
    let seed = 8usize;
    for k in 0..seed {
        let x0 = a + (b - a) * k as f64 / seed as f64;
        let x1 = a + (b - a) * (k + 1) as f64 / seed as f64;
        segs.push(eval_seg(f, x0, x1));
    }
    let mut evals = 15usize * seed;
    const MAX_EVALS: usize = 4_000_000;
    loop {
        let total_err: f64 = segs.iter().map(|s| s.err).sum();
        if total_err <= tol {
            break;
        }
        if evals >= MAX_EVALS {
            return Err(QuadError::NoConvergence {
                requested: tol,
                achieved: total_err,
                evals,
            });
        }
        // Split the worst segment.
        let (worst, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.partial_cmp(&y.1.err).unwrap())
            .unwrap();
        let seg = segs.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval exhausted at machine precision; accept what we have.
            segs.push(seg);
            let achieved: f64 = segs.iter().map(|s| s.err).sum();
            if achieved > tol * 100.0 {
                return Err(QuadError::NoConvergence {
                    requested: tol,
                    achieved,
                    evals,
                });
            }
            break;
        }
        segs.push(eval_seg(f, seg.a, mid));
        segs.push(eval_seg(f, mid, seg.b));
        evals += 30;
    }
    let mut iter = segs.iter();
    let first = iter.next().unwrap();
    let mut value = first.value.clone();
    for s in iter {
        value.scaled_add(1.0, &s.value);
    }
    Ok(QuadResult {
        value,
        error: segs.iter().map(|s| s.err).sum(),
        evals,
    })
}

/// Integrate over `[a, +inf)` through the rational map `t = a + u/(1-u)`.
pub fn integrate_half_line<V: QuadValue, F: FnMut(f64) -> V>(
    mut f: F,
    a: f64,
    tol: f64,
) -> Result<QuadResult<V>, QuadError> {
    let mut g = |u: f64| -> V {
        let one_minus = 1.0 - u;
        let t = a + u / one_minus;
        let jac = 1.0 / (one_minus * one_minus);
        let mut v = f(t);
        let z = v.zero_like();
        let mut out = z;
        out.scaled_add(jac, &v);
        v = out;
        v
    };
    // Stop just short of u = 1; the jacobian-weighted integrand must decay.
    integrate_impl(&mut g, 0.0, 1.0 - 1e-12, tol)
}

/// Nested integration of a function of `n` variables over a box, adaptively
/// in each coordinate. Intended for the small `n` (1..3) this crate needs.
pub fn integrate_box<V: QuadValue + 'static, F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
) -> Result<QuadResult<V>, QuadError>
where
    F: Fn(&[f64]) -> V,
{
    assert_eq!(lo.len(), hi.len());
    fn go<V: QuadValue + 'static, F: Fn(&[f64]) -> V>(
        f: &F,
        lo: &[f64],
        hi: &[f64],
        prefix: &mut Vec<f64>,
        tol: f64,
    ) -> Result<QuadResult<V>, QuadError> {
        let k = prefix.len();
        if k == lo.len() {
            return Ok(QuadResult {
                value: f(prefix),
                error: 0.0,
                evals: 1,
            });
        }
        let inner_tol = tol / (2.0 * (hi[k] - lo[k]).abs().max(1.0));
        let mut err_acc = 0.0;
        let mut evals_acc = 0usize;
        let res = integrate_impl(
            &mut |x: f64| {
                prefix.push(x);
                let r = go(f, lo, hi, prefix, inner_tol).expect("inner quadrature");
                prefix.pop();
                err_acc += r.error;
                evals_acc += r.evals;
                r.value
            },
            lo[k],
            hi[k],
            tol,
        )?;
        Ok(QuadResult {
            value: res.value,
            error: res.error + err_acc,
            evals: res.evals + evals_acc,
        })
    }
    let mut prefix = Vec::new();
    go(f, lo, hi, &mut prefix, tol)
}

/// Chebyshev-Lobatto series over `[a, b]` with values in a linear space;
/// supports spectral antidifferentiation, which turns nested time-ordered
/// integrals into cheap series manipulations.
#[derive(Debug, Clone)]
pub struct ChebSeries<V> {
    pub a: f64,
    pub b: f64,
    /// Coefficients of T_0..T_n (already including the half-weight on T_0).
    pub coeffs: Vec<V>,
}

impl<V: QuadValue> ChebSeries<V> {
    /// Lobatto nodes mapped to `[a, b]`, ordered from `a` to `b`.
    pub fn nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|j| {
                let x = (std::f64::consts::PI * j as f64 / n as f64).cos();
                0.5 * (a + b) - 0.5 * (b - a) * x
            })
            .collect()
    }

    /// Interpolate the samples taken at `nodes(a, b, n)` (same order).
    pub fn fit(a: f64, b: f64, samples: &[V]) -> Self {
        let n = samples.len() - 1;
        let zero = samples[0].zero_like();
        let mut coeffs: Vec<V> = vec![zero; n + 1];
        for (k, c) in coeffs.iter_mut().enumerate() {
            for (j, s) in samples.iter().enumerate() {
                // samples[j] corresponds to x_j = cos(pi (n-j)/n) after the
                // ordering flip in `nodes`.
                let jj = n - j;
                let w = (std::f64::consts::PI * (jj * k) as f64 / n as f64).cos();
                let edge = if jj == 0 || jj == n { 0.5 } else { 1.0 };
                c.scaled_add(2.0 / n as f64 * w * edge, s);
            }
        }
        // Halve the k = 0 and k = n coefficients (Lobatto convention).
        let c0 = coeffs[0].clone();
        coeffs[0] = c0.zero_like();
        coeffs[0].scaled_add(0.5, &c0);
        let cn = coeffs[n].clone();
        coeffs[n] = cn.zero_like();
        coeffs[n].scaled_add(0.5, &cn);
        ChebSeries { a, b, coeffs }
    }

    /// Evaluate by Clenshaw recurrence.
    pub fn eval(&self, t: f64) -> V {
        let width = self.b - self.a;
        // Collapsed interval: the series is constant; any map point works.
        let x = if width.abs() < 1e-300 {
            1.0
        } else {
            (2.0 * t - (self.a + self.b)) / width
        };
        let zero = self.coeffs[0].zero_like();
        let mut b1 = zero.clone();
        let mut b2 = zero.clone();
        for c in self.coeffs.iter().skip(1).rev() {
            let mut next = zero.clone();
            next.scaled_add(2.0 * x, &b1);
            next.scaled_add(-1.0, &b2);
            next.scaled_add(1.0, c);
            b2 = b1;
            b1 = next;
        }
        let mut out = self.coeffs[0].clone();
        out.scaled_add(x, &b1);
        out.scaled_add(-1.0, &b2);
        out
    }

    /// Antiderivative vanishing at `a`.
    pub fn antiderivative(&self) -> Self {
        let n = self.coeffs.len() - 1;
        let zero = self.coeffs[0].zero_like();
        let scale = 0.5 * (self.b - self.a);
        let get = |k: usize| -> V {
            if k <= n {
                self.coeffs[k].clone()
            } else {
                zero.clone()
            }
        };
        let mut out: Vec<V> = vec![zero.clone(); n + 2];
        for k in 1..=(n + 1) {
            // b_k = (a_{k-1} - a_{k+1}) / (2k), with a_0 doubled back.
            let mut v = zero.clone();
            let prev = get(k - 1);
            let factor = if k == 1 { 2.0 } else { 1.0 };
            v.scaled_add(factor * scale / (2.0 * k as f64), &prev);
            v.scaled_add(-scale / (2.0 * k as f64), &get(k + 1));
            out[k] = v;
        }
        // Fix the constant so the antiderivative vanishes at x = -1.
        let mut b0 = zero.clone();
        for (k, c) in out.iter().enumerate().skip(1) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            b0.scaled_add(-sign, c);
        }
        out[0] = b0;
        ChebSeries {
            a: self.a,
            b: self.b,
            coeffs: out,
        }
    }

    /// Magnitude of the trailing coefficients, a convergence indicator.
    pub fn tail_magnitude(&self) -> f64 {
        let n = self.coeffs.len();
        self.coeffs[n.saturating_sub(2)..]
            .iter()
            .map(|c| c.magnitude())
            .fold(0.0, f64::max)
    }
}
