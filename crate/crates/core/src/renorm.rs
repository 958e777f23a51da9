//! Subtraction machinery over diagram amplitudes: the reciprocal-delay
//! transform, windowed moment subtraction with bottom-up counterterm
//! recursion, time-translation-invariant extension on shell-divisible
//! probes, sector-decomposed pairings, finiteness and cluster diagnostics,
//! and assembly of the stationary-state correction vector on mode grids.

use crate::corrdyn::{NormalPolynomial, WickContext};
use crate::friedrichs::{self, FriedrichsDiagram};
use crate::gausscalc::{GaussError, GaussianIntegrand};
use crate::modespace::{InteractionKernel, OccupationField};
use crate::quad;
use crate::treealg::Line;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenormError {
    #[error("gaussian calculus failure: {0}")]
    Gauss(#[from] GaussError),
    #[error("quadrature failure: {0}")]
    Quadrature(#[from] quad::QuadError),
    #[error("counterterm table is missing diagram {0:x}")]
    MissingEntry(u64),
    #[error("probe is not shell-divisible; invariant extension needs an explicit shell factor")]
    NotShellDivisible,
    #[error("diagram error: {0}")]
    Diagram(#[from] friedrichs::DiagramError),
    #[error("only orders up to 2 delay lines are implemented, got {0}")]
    OrderCap(usize),
}

/// Smooth window presets: the cutoff profile (identically one near zero,
/// supported below `hi`), and the normalized smearing bump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowPresets {
    pub xi_lo: f64,
    pub xi_hi: f64,
    psi_norm: f64,
}

fn smooth_step_raw(u: f64) -> f64 {
    // 1 at u <= 0, 0 at u >= 1, smooth bridge via exp(-1/u).
    if u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let f = |x: f64| (-1.0 / x).exp();
    f(1.0 - u) / (f(u) + f(1.0 - u))
}

impl WindowPresets {
    /// Presets for a diagram with `n_lines` delay lines: the cutoff is one
    /// below `1/(6 n)` and vanishes above `1/(3 n)`.
    pub fn for_lines(n_lines: usize) -> Self {
        let hi = 1.0 / (3.0 * n_lines.max(1) as f64);
        let lo = 0.5 * hi;
        // Normalize the bump profile once.
        let raw_bump = |x: f64| {
            let u = 10.0 * x;
            if u.abs() >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - u * u)).exp()
            }
        };
        let norm = quad::integrate(raw_bump, -0.1, 0.1, 1e-13)
            .expect("bump normalization")
            .value;
        WindowPresets {
            xi_lo: lo,
            xi_hi: hi,
            psi_norm: norm,
        }
    }

    /// Cutoff profile: one near zero, zero above `xi_hi`.
    pub fn xi(&self, x: f64) -> f64 {
        smooth_step_raw((x - self.xi_lo) / (self.xi_hi - self.xi_lo))
    }

    pub fn xi_prime(&self, x: f64) -> f64 {
        let h = 1e-6 * (self.xi_hi - self.xi_lo);
        (self.xi(x + h) - self.xi(x - h)) / (2.0 * h)
    }

    /// Normalized bump supported in [-1/10, 1/10].
    pub fn psi(&self, x: f64) -> f64 {
        let u = 10.0 * x;
        if u.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - u * u)).exp() / self.psi_norm
        }
    }

    /// Radial smearing kernel: integrates to one over the scale,
    /// `int_0^inf delta_smear(lambda, x) dlambda = 1` for x > 0.
    pub fn delta_smear(&self, lambda: f64, x: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        (x / (lambda * lambda)) * self.psi((x - lambda) / lambda)
    }

    /// Partition of unity member for the subset mask over delay variables.
    pub fn eta(&self, mask: usize, s: &[f64]) -> f64 {
        let mut v = 1.0;
        for (i, &si) in s.iter().enumerate() {
            let xi = self.xi(si);
            v *= if mask >> i & 1 == 1 { 1.0 - xi } else { xi };
        }
        v
    }

    /// The product window over all delay variables.
    pub fn window(&self, s: &[f64]) -> f64 {
        s.iter().map(|&x| self.xi(x)).product()
    }
}

/// One-dimensional probe factor in the reciprocal-delay variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SFactor {
    /// `s^m * xi(s)`: carries an m-th order jet at zero.
    Monomial { power: u32 },
    /// Smooth bump centered away from zero: all jets vanish.
    Bump { center: f64, width: f64 },
    /// `exp(-rate s)`: nonzero at the origin with jets the subtraction
    /// cannot reproduce exactly, so it probes the genuine finite part.
    Exp { rate: f64 },
}

impl SFactor {
    fn eval(&self, presets: &WindowPresets, s: f64) -> f64 {
        match *self {
            SFactor::Monomial { power } => s.powi(power as i32) * presets.xi(s),
            SFactor::Bump { center, width } => {
                let u = (s - center) / width;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    (-1.0 / (1.0 - u * u)).exp()
                }
            }
            SFactor::Exp { rate } => (-rate * s).exp(),
        }
    }
    /// k-th derivative at zero (the cutoff is one near zero; bumps sit
    /// away from zero).
    fn jet(&self, k: u32) -> f64 {
        match *self {
            SFactor::Monomial { power } => {
                if k == power {
                    (1..=k).map(|i| i as f64).product::<f64>().max(1.0)
                } else {
                    0.0
                }
            }
            SFactor::Bump { .. } => 0.0,
            SFactor::Exp { rate } => (-rate).powi(k as i32),
        }
    }
    fn has_deep_zero(&self, order: u32) -> bool {
        match *self {
            SFactor::Monomial { power } => power > order,
            SFactor::Bump { .. } => true,
            SFactor::Exp { .. } => false,
        }
    }
}

/// Product probe over the delay variables of a diagram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SProbe {
    pub factors: Vec<SFactor>,
}

impl SProbe {
    pub fn monomial(m: &[u32]) -> Self {
        SProbe {
            factors: m.iter().map(|&power| SFactor::Monomial { power }).collect(),
        }
    }
    pub fn eval(&self, presets: &WindowPresets, s: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(s.iter())
            .map(|(f, &x)| f.eval(presets, x))
            .product()
    }
    /// Mixed jet at the origin.
    pub fn jet(&self, m: &[u32]) -> f64 {
        self.factors
            .iter()
            .zip(m.iter())
            .map(|(f, &k)| f.jet(k))
            .product()
    }
    pub fn has_deep_zero(&self, order: u32) -> bool {
        self.factors.iter().any(|f| f.has_deep_zero(order))
    }
}

/// Gaussian test function over the external momenta of a diagram,
/// optionally multiplied by the free-frequency form `A(p)` (shell factor)
/// and the time-translation phase `exp(i A(p) t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FProbe {
    /// Gaussian width per external line (positive).
    pub widths: Vec<f64>,
    /// Center per external line (first component only, others zero).
    pub centers: Vec<f64>,
    /// Multiply by A(p)^shell_power (0 or 1).
    pub shell_power: u8,
    /// Multiply by exp(i A(p) shell_time).
    pub shell_time: f64,
}

impl FProbe {
    pub fn plain(widths: Vec<f64>, centers: Vec<f64>) -> Self {
        FProbe {
            widths,
            centers,
            shell_power: 0,
            shell_time: 0.0,
        }
    }
    pub fn with_shell(mut self, power: u8) -> Self {
        self.shell_power = power;
        self
    }
    pub fn with_time(mut self, t: f64) -> Self {
        self.shell_time = t;
        self
    }
    /// The same probe with the shell factor stripped (the divisible probe's
    /// quotient by A(p)).
    pub fn stripped(&self) -> Self {
        let mut f = self.clone();
        f.shell_power = 0;
        f
    }
}

/// A diagram amplitude paired with an external test function: a closed form
/// over the delay variables, evaluated on demand.
#[derive(Debug, Clone)]
pub struct PairedAmplitude {
    pub integrand: GaussianIntegrand,
    pub n_lines: usize,
}

/// Fold an external probe into a diagram integrand: Gaussian factors and
/// shell structure on the external variables, which then become internal.
pub fn pair_with_probe(
    diagram: &FriedrichsDiagram,
    base: &GaussianIntegrand,
    probe: &FProbe,
    mu: f64,
) -> PairedAmplitude {
    let mut g = base.clone();
    let ext = diagram.external_lines();
    assert_eq!(probe.widths.len(), ext.len(), "probe arity");
    // Orientation data for the shell form A(p) = sum or * (p^2/2 - mu).
    let ors: Vec<f64> = ext
        .iter()
        .map(|&i| diagram.orientation(&diagram.lines[i]))
        .collect();
    for term in g.terms.iter_mut() {
        for ((&var, &alpha), &c) in ext
            .iter()
            .zip(probe.widths.iter())
            .zip(probe.centers.iter())
        {
            // exp(-alpha (p - c e1)^2) = exp(-alpha p^2 + 2 alpha c p1 - alpha c^2).
            term.q[var][var].add_base(C64::new(-alpha, 0.0));
            if c != 0.0 {
                term.lin[var][0].add_base(C64::new(2.0 * alpha * c, 0.0));
                term.c0.add_base(C64::new(-alpha * c * c, 0.0));
            }
        }
        if probe.shell_time != 0.0 {
            for (&var, &or) in ext.iter().zip(ors.iter()) {
                term.q[var][var].add_base(C64::new(0.0, 0.5 * or * probe.shell_time));
                term.c0.add_base(C64::new(0.0, -mu * or * probe.shell_time));
            }
        }
    }
    if probe.shell_power > 0 {
        assert!(probe.shell_power == 1, "shell powers above 1 unsupported");
        // Multiply by A(p): expands each term into d p^2-prefactor pieces
        // per external line plus a constant piece.
        let dim = g.dim;
        let mut new_terms = Vec::new();
        let const_part: f64 = ors.iter().map(|&or| -mu * or).sum();
        for term in &g.terms {
            for (&var, &or) in ext.iter().zip(ors.iter()) {
                for alpha in 0..dim {
                    let mut t2 = term.clone();
                    t2.coeff *= 0.5 * or;
                    t2.prefactor.push((var, alpha));
                    t2.prefactor.push((var, alpha));
                    new_terms.push(t2);
                }
            }
            if const_part != 0.0 {
                let mut t2 = term.clone();
                t2.coeff *= const_part;
                new_terms.push(t2);
            }
        }
        g.terms = new_terms;
    }
    for &var in &ext {
        g.internal[var] = true;
    }
    PairedAmplitude {
        integrand: g,
        n_lines: diagram.tree.lines.len(),
    }
}

impl PairedAmplitude {
    /// Value at a delay assignment (delays indexed by tree line id).
    pub fn eval(&self, tau: &[f64]) -> Result<C64, RenormError> {
        Ok(self.integrand.integrate(tau, &[])?)
    }
}

/// How a diagram is routed through the subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubtractionKind {
    /// Power-counting safe (enough crossings everywhere): standard moment
    /// subtraction.
    Renormalizable,
    /// Shallow diagrams: same machinery, flagged for reporting.
    SimplySubtracted,
}

/// A counterterm table entry: the diagram, its subtraction degree, and the
/// measured divergence exponents per delay direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CtEntry {
    pub diagram: FriedrichsDiagram,
    pub degree: u32,
    pub kind: SubtractionKind,
    pub decay_exponents: Vec<f64>,
}

/// Counterterm table built bottom-up by the number of tree lines.
#[derive(Debug, Clone)]
pub struct CountertermTable {
    pub kernel: InteractionKernel,
    pub occ: OccupationField,
    pub dim: usize,
    pub mu: f64,
    pub entries: std::collections::BTreeMap<u64, CtEntry>,
    pub degree_cap: u32,
    /// Default quadrature tolerance for pairings built from this table.
    pub tol: f64,
}

impl CountertermTable {
    pub fn entry(&self, diagram: &FriedrichsDiagram) -> Result<&CtEntry, RenormError> {
        let id = diagram.content_id();
        self.entries.get(&id).ok_or(RenormError::MissingEntry(id))
    }

    pub fn paired(
        &self,
        diagram: &FriedrichsDiagram,
        probe: &FProbe,
    ) -> Result<PairedAmplitude, RenormError> {
        let base = friedrichs::assemble_integrand(diagram, &self.kernel, &self.occ, self.dim, self.mu)?;
        Ok(pair_with_probe(diagram, &base, probe, self.mu))
    }
}

/// Measured large-delay decay exponent of a paired amplitude along one
/// delay direction (other delays held at a fixed point).
pub fn decay_exponent(
    amp: &PairedAmplitude,
    direction: usize,
    base_point: &[f64],
) -> Result<f64, RenormError> {
    let mut slopes = Vec::new();
    for &t0 in &[64.0, 256.0] {
        let mut a = base_point.to_vec();
        let mut b = base_point.to_vec();
        a[direction] = t0;
        b[direction] = 4.0 * t0;
        let va = amp.eval(&a)?.norm().max(1e-290);
        let vb = amp.eval(&b)?.norm().max(1e-290);
        slopes.push((vb.ln() - va.ln()) / (4.0f64).ln());
    }
    // Richardson-flavored combination favoring the larger scale.
    Ok(slopes[1].min(slopes[0]))
}

/// Subtraction degree from numerical power counting: the amplitude decays
/// like tau^kappa (kappa < 0); the reciprocal-variable integrand then
/// scales like s^{-kappa-2} and needs moments up to 1 - kappa - 1, plus a
/// safety margin of one, capped.
pub fn degree_from_exponent(kappa: f64, cap: u32) -> u32 {
    // J ~ tau^kappa with kappa < 0; the bare probe pairing diverges when
    // the decay is 1 or slower, i.e. when dv = 1 + kappa >= 0. The small
    // deadband absorbs fit noise at the threshold.
    let dv = 1.0 + kappa;
    if dv < -0.05 {
        0
    } else {
        (((dv - 0.05).ceil() as i64 + 1).max(0) as u32).min(cap)
    }
}

/// Moment of the paired amplitude against the windowed monomial
/// `prod (1/tau_i)^{m_i} xi(1/tau_i)` (the reciprocal-variable moment),
/// computed in the delay variables.
pub fn windowed_moment(
    amp: &PairedAmplitude,
    presets: &WindowPresets,
    m: &[u32],
    tol: f64,
) -> Result<C64, RenormError> {
    let n = amp.n_lines;
    assert_eq!(m.len(), n);
    // Support: xi(1/tau) nonzero only for tau >= 1/xi_hi.
    let lo = 1.0 / presets.xi_hi;
    let value = integrate_tau_box(
        &|tau: &[f64]| {
            let mut weight = 1.0;
            for (i, &t) in tau.iter().enumerate() {
                let s = 1.0 / t;
                weight *= s.powi(m[i] as i32) * presets.xi(s);
            }
            if weight == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                amp.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * weight
            }
        },
        &vec![lo; n],
        tol,
    )?;
    Ok(value)
}

/// Nested half-line integration over delay variables starting at `lo[i]`.
fn integrate_tau_box(
    f: &dyn Fn(&[f64]) -> C64,
    lo: &[f64],
    tol: f64,
) -> Result<C64, RenormError> {
    fn go(
        i: usize,
        point: &mut Vec<f64>,
        f: &dyn Fn(&[f64]) -> C64,
        lo: &[f64],
        tol: f64,
    ) -> Result<C64, RenormError> {
        if i == lo.len() {
            return Ok(f(point));
        }
        let r = quad::integrate_half_line(
            |t| {
                point.push(t);
                let v = go(i + 1, point, f, lo, tol).expect("inner tau quadrature");
                point.pop();
                v
            },
            lo[i],
            tol,
        )?;
        Ok(r.value)
    }
    let mut point = Vec::new();
    go(0, &mut point, f, lo, tol)
}

/// Pairing of an amplitude with a probe over a finite delay window in each
/// direction (used by the consistency diagnostics where both routes share
/// the cut).
pub fn capped_probe_pairing(
    amp: &PairedAmplitude,
    presets: &WindowPresets,
    psi: &SProbe,
    cap: f64,
    tol: f64,
) -> Result<C64, RenormError> {
    let n = amp.n_lines;
    fn go(
        i: usize,
        point: &mut Vec<f64>,
        f: &dyn Fn(&[f64]) -> C64,
        n: usize,
        cap: f64,
        tol: f64,
    ) -> Result<C64, RenormError> {
        if i == n {
            return Ok(f(point));
        }
        let r = quad::integrate(
            |t| {
                point.push(t);
                let v = go(i + 1, point, f, n, cap, tol).expect("inner quadrature");
                point.pop();
                v
            },
            1e-4,
            cap,
            tol,
        )?;
        Ok(r.value)
    }
    let eval = |tau: &[f64]| {
        let sv: Vec<f64> = tau.iter().map(|&t| 1.0 / t).collect();
        let w = psi.eval(presets, &sv);
        if w == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            amp.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * w
        }
    };
    let mut point = Vec::new();
    go(0, &mut point, &eval, n, cap, tol)
}

/// The subtracted probe `(1 - T_1)...(1 - T_n) Psi` evaluated at the
/// reciprocal delays: windowed Taylor jets removed in every subset of
/// directions (inclusion-exclusion over the forest of corners).
pub fn subtracted_probe_value(
    probe: &SProbe,
    presets: &WindowPresets,
    degree: u32,
    s: &[f64],
) -> f64 {
    let n = s.len();
    let mut total = 0.0;
    for mask in 0..(1u32 << n) {
        // Product over directions: either the live factor or minus its
        // windowed Taylor jet.
        let mut sign = 1.0;
        let mut value = 1.0;
        for (i, factor) in probe.factors.iter().enumerate() {
            if mask >> i & 1 == 0 {
                value *= factor.eval(presets, s[i]);
            } else {
                sign = -sign;
                let mut jet_sum = 0.0;
                for k in 0..=degree {
                    let jet = factor.jet(k);
                    if jet != 0.0 {
                        let kfact: f64 = (1..=k).map(|x| x as f64).product::<f64>().max(1.0);
                        jet_sum += jet / kfact * s[i].powi(k as i32);
                    }
                }
                value *= presets.xi(s[i]) * jet_sum;
            }
        }
        total += sign * value;
    }
    total
}

/// Fully subtracted pairing of a diagram amplitude with a probe pair: the
/// forest-subtracted integrand plus the invariant-extension jet values.
pub fn renormalized_pairing(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    tol: f64,
) -> Result<C64, RenormError> {
    let entry = table.entry(diagram)?;
    let amp = table.paired(diagram, f)?;
    let n = amp.n_lines;
    if n > 2 {
        return Err(RenormError::OrderCap(n));
    }
    let degree = entry.degree;
    let bulk = integrate_tau_box(
        &|tau: &[f64]| {
            let s: Vec<f64> = tau.iter().map(|&t| 1.0 / t).collect();
            let w = subtracted_probe_value(psi, presets, degree, &s);
            if w == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                amp.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * w
            }
        },
        &vec![1e-4; n],
        tol,
    )?;
    // Invariant-extension jet contributions on shell-divisible probes.
    let ext = extension_jet_pairing(table, diagram, f, psi, presets, tol)?;
    Ok(bulk + ext)
}

/// Unsubtracted pairing (the raw reciprocal-delay distribution against the
/// probe); diverges when the probe does not vanish fast enough at zero.
pub fn bare_pairing(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    tol: f64,
    tau_cap: Option<f64>,
) -> Result<C64, RenormError> {
    let amp = table.paired(diagram, f)?;
    let n = amp.n_lines;
    let eval = |tau: &[f64]| {
        let s: Vec<f64> = tau.iter().map(|&t| 1.0 / t).collect();
        let w = psi.eval(presets, &s);
        if w == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            amp.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * w
        }
    };
    match tau_cap {
        None => integrate_tau_box(&eval, &vec![1e-4; n], tol),
        Some(cap) => {
            // Finite-window variant for the finiteness diagnostics.
            fn go(
                i: usize,
                point: &mut Vec<f64>,
                f: &dyn Fn(&[f64]) -> C64,
                n: usize,
                cap: f64,
                tol: f64,
            ) -> Result<C64, RenormError> {
                if i == n {
                    return Ok(f(point));
                }
                let r = quad::integrate(
                    |t| {
                        point.push(t);
                        let v = go(i + 1, point, f, n, cap, tol).expect("inner quadrature");
                        point.pop();
                        v
                    },
                    1e-4,
                    cap,
                    tol,
                )?;
                Ok(r.value)
            }
            let mut point = Vec::new();
            go(0, &mut point, &eval, n, cap, tol)
        }
    }
}

/// Windowed renormalized pairing: the subtracted integrand truncated at a
/// finite delay window (for stability-under-window-doubling diagnostics).
pub fn renormalized_pairing_windowed(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    tol: f64,
    cap: f64,
) -> Result<C64, RenormError> {
    let entry = table.entry(diagram)?;
    let amp = table.paired(diagram, f)?;
    let n = amp.n_lines;
    let degree = entry.degree;
    fn go(
        i: usize,
        point: &mut Vec<f64>,
        f: &dyn Fn(&[f64]) -> C64,
        n: usize,
        cap: f64,
        tol: f64,
    ) -> Result<C64, RenormError> {
        if i == n {
            return Ok(f(point));
        }
        let r = quad::integrate(
            |t| {
                point.push(t);
                let v = go(i + 1, point, f, n, cap, tol).expect("inner quadrature");
                point.pop();
                v
            },
            1e-4,
            cap,
            tol,
        )?;
        Ok(r.value)
    }
    let eval = |tau: &[f64]| {
        let s: Vec<f64> = tau.iter().map(|&t| 1.0 / t).collect();
        let w = subtracted_probe_value(psi, presets, degree, &s);
        if w == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            amp.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * w
        }
    };
    let mut point = Vec::new();
    let bulk = go(0, &mut point, &eval, n, cap, tol)?;
    let ext = extension_jet_pairing(table, diagram, f, psi, presets, tol)?;
    Ok(bulk + ext)
}

/// Jet contribution of the invariant extension: nonzero only on
/// shell-divisible external probes (explicit shell factor), where the
/// extension values are determined by the generator relation; the canonical
/// extension vanishes elsewhere.
fn extension_jet_pairing(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    tol: f64,
) -> Result<C64, RenormError> {
    if f.shell_power == 0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let entry = table.entry(diagram)?;
    let degree = entry.degree;
    let n = diagram.tree.lines.len();
    // Jet multi-indices with the root direction first.
    let root_id = diagram
        .tree
        .root_lines()
        .map(|(id, _)| id)
        .next()
        .expect("connected diagram");
    let mut total = C64::new(0.0, 0.0);
    let mut m = vec![0u32; n];
    loop {
        let jet = psi.jet(&m);
        if jet != 0.0 {
            let e = extension_value(table, diagram, f, &m, root_id, degree, presets, tol)?;
            let mfact: f64 = m
                .iter()
                .map(|&k| (1..=k).map(|x| x as f64).product::<f64>().max(1.0))
                .product();
            total += e / mfact * jet / {
                let mut jf = 1.0;
                for &k in &m {
                    jf *= (1..=k).map(|x| x as f64).product::<f64>().max(1.0);
                }
                jf
            } * mfact;
        }
        // Odometer over multi-indices with each entry at most `degree`.
        let mut i = 0;
        loop {
            if i == n {
                return Ok(total);
            }
            m[i] += 1;
            if m[i] <= degree {
                break;
            }
            m[i] = 0;
            i += 1;
        }
    }
}

/// Extension value E_m[f] for a shell-divisible probe, by the generator
/// recursion in the root direction: E_m[i A chi] = m_root E_{m+1}[chi]
/// plus the deep remainder pairing; extension values of plain probes at
/// degree <= N take the canonical zero.
#[allow(clippy::too_many_arguments)]
fn extension_value(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    m: &[u32],
    root_id: usize,
    degree: u32,
    presets: &WindowPresets,
    tol: f64,
) -> Result<C64, RenormError> {
    if f.shell_power == 0 {
        return Err(RenormError::NotShellDivisible);
    }
    let chi = f.stripped();
    let m_root = m[root_id];
    // Raised index in the root direction.
    let mut m_up = m.to_vec();
    m_up[root_id] += 1;
    let total_up: u32 = m_up.iter().sum();
    // E_{m_up}[chi]: canonical zero at degree <= N, deep moment otherwise.
    let upper = if total_up > degree {
        let amp = table.paired(diagram, &chi)?;
        windowed_moment(&amp, presets, &m_up, tol)?
    } else {
        C64::new(0.0, 0.0)
    };
    // Deep remainder: + < g, chi (x) s_root^{m_root+2} xi'(s_root) rest >.
    let amp_chi = table.paired(diagram, &chi)?;
    let n = m.len();
    let deep = integrate_tau_box(
        &|tau: &[f64]| {
            let mut weight = 1.0;
            for i in 0..n {
                let s = 1.0 / tau[i];
                if i == root_id {
                    weight *= s.powi(m_root as i32 + 2) * presets.xi_prime(s);
                } else {
                    weight *= s.powi(m[i] as i32) * presets.xi(s);
                }
            }
            if weight == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                amp_chi.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * weight
            }
        },
        &vec![1e-4; n],
        tol,
    )?;
    Ok((m_root as f64) * upper + deep)
}

/// The moment coefficient c_m[f] of a table entry: the windowed moment of
/// the forest-subtracted amplitude, negated and normalized, plus the
/// invariant-extension value on shell-divisible probes.
pub fn counterterm_coefficient(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    m: &[u32],
    presets: &WindowPresets,
    tol: f64,
) -> Result<C64, RenormError> {
    let entry = table.entry(diagram)?;
    let amp = table.paired(diagram, f)?;
    let n = amp.n_lines;
    let degree = entry.degree;
    // Moment of the sub-subtracted amplitude (inclusion-exclusion over the
    // proper corners only: the probe s^m w is reproduced by every windowed
    // jet, so proper subtractions cancel the bare moment; what remains is
    // evaluated directly for numerical honesty).
    let probe = SProbe::monomial(m);
    let bulk = integrate_tau_box(
        &|tau: &[f64]| {
            let s: Vec<f64> = tau.iter().map(|&t| 1.0 / t).collect();
            let w = subtracted_probe_value(&probe, presets, degree, &s);
            if w == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                amp.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * w
            }
        },
        &vec![1e-4; n],
        tol,
    )?;
    let mut e_val = C64::new(0.0, 0.0);
    if f.shell_power > 0 && n >= 1 {
        let root_id = diagram
            .tree
            .root_lines()
            .map(|(id, _)| id)
            .next()
            .expect("connected");
        e_val = extension_value(table, diagram, f, m, root_id, degree, presets, tol)?;
    }
    let mfact: f64 = m
        .iter()
        .map(|&k| (1..=k).map(|x| x as f64).product::<f64>().max(1.0))
        .product();
    Ok((-bulk + e_val) / mfact)
}

/// Build the counterterm table bottom-up through the given number of tree
/// lines (1 = one-vertex diagrams, 2 = two-vertex chains).
pub fn counterterm_recursion(
    kernel: &InteractionKernel,
    occ: &OccupationField,
    dim: usize,
    mu: f64,
    max_lines: usize,
    degree_cap: u32,
    probe_widths: f64,
    tol: f64,
) -> Result<CountertermTable, RenormError> {
    let mut table = CountertermTable {
        kernel: kernel.clone(),
        occ: occ.clone(),
        dim,
        mu,
        entries: std::collections::BTreeMap::new(),
        degree_cap,
        tol,
    };
    for n in 1..=max_lines {
        let trees = crate::treealg::enumerate_trees(n, 4, 0, true);
        for tree in trees {
            if tree.lines.len() > 2 {
                continue;
            }
            for diagram in friedrichs::enumerate_diagrams(&tree, occ)? {
                let n_ext = diagram.external_lines().len();
                if n_ext == 0 {
                    // Closed diagrams have no external pairing slot; they
                    // renormalize the normalization and are skipped here.
                    continue;
                }
                let probe = FProbe::plain(vec![probe_widths; n_ext], vec![0.0; n_ext]);
                let amp = table.paired(&diagram, &probe)?;
                let n_lines = diagram.tree.lines.len();
                let base = vec![1.5; n_lines];
                let mut exps = Vec::new();
                for dir in 0..n_lines {
                    exps.push(decay_exponent(&amp, dir, &base)?);
                }
                let worst = exps.iter().cloned().fold(f64::INFINITY, f64::min);
                let degree = degree_from_exponent(worst, degree_cap);
                let kind = if diagram.is_power_counting_safe() {
                    SubtractionKind::Renormalizable
                } else {
                    SubtractionKind::SimplySubtracted
                };
                table.entries.insert(
                    diagram.content_id(),
                    CtEntry {
                        diagram,
                        degree,
                        kind,
                        decay_exponents: exps,
                    },
                );
            }
        }
    }
    Ok(table)
}

/// Sector-decomposed evaluation of the same subtracted pairing: radial
/// smearing over the scale, partition of unity over the corner subsets, and
/// per-sector quadrature with reported errors.
pub fn sector_pairing(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    subtract: bool,
    tol: f64,
) -> Result<(C64, Vec<(usize, f64)>), RenormError> {
    let entry = table.entry(diagram)?;
    let amp = table.paired(diagram, f)?;
    let n = amp.n_lines;
    if n > 2 {
        return Err(RenormError::OrderCap(n));
    }
    let degree = entry.degree;
    let probe_value = |s: &[f64]| {
        if subtract {
            subtracted_probe_value(psi, presets, degree, s)
        } else {
            psi.eval(presets, s)
        }
    };
    let hat = |s: &[f64]| -> C64 {
        let w = probe_value(s);
        if w == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let tau: Vec<f64> = s.iter().map(|&x| 1.0 / x).collect();
        // Reciprocal-variable density: the hat transform carries 1/s^2 per
        // direction.
        let jac: f64 = s.iter().map(|&x| 1.0 / (x * x)).product();
        amp.eval(&tau).unwrap_or(C64::new(0.0, 0.0)) * w * jac
    };
    let (mut total, sector_errors) = sector_sum(presets, n, &hat, tol)?;
    if subtract {
        total += extension_jet_pairing(table, diagram, f, psi, presets, tol)?;
    }
    Ok((total, sector_errors))
}

/// Radial-smear plus partition-of-unity decomposition of an integral over
/// the positive orthant: `int F = sum_A int dlambda lambda^{n-1} int du
/// |u| psi(|u|-1) eta_A(u) F(lambda u)`.
pub fn sector_sum(
    presets: &WindowPresets,
    n: usize,
    hat: &dyn Fn(&[f64]) -> C64,
    tol: f64,
) -> Result<(C64, Vec<(usize, f64)>), RenormError> {
    let mut total = C64::new(0.0, 0.0);
    let mut sector_errors = Vec::new();
    for mask in 0..(1usize << n) {
        let inner = |lambda: f64| -> C64 {
            if lambda <= 0.0 {
                return C64::new(0.0, 0.0);
            }
            let f_u = |u: &[f64]| -> C64 {
                let norm1: f64 = u.iter().sum();
                let smear = norm1 * presets.psi(norm1 - 1.0);
                if smear == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let eta = presets.eta(mask, u);
                if eta == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let s: Vec<f64> = u.iter().map(|&x| lambda * x).collect();
                if s.iter().any(|&x| x <= 0.0) {
                    return C64::new(0.0, 0.0);
                }
                hat(&s) * smear * eta
            };
            if n == 1 {
                quad::integrate(|u| f_u(&[u]), 0.85, 1.15, tol)
                    .map(|r| r.value)
                    .unwrap_or(C64::new(0.0, 0.0))
            } else {
                quad::integrate(
                    |u1| {
                        quad::integrate(|u2| f_u(&[u1, u2]), (0.85 - u1).max(0.0), 1.15, tol)
                            .map(|r| r.value)
                            .unwrap_or(C64::new(0.0, 0.0))
                    },
                    0.0,
                    1.15,
                    tol,
                )
                .map(|r| r.value)
                .unwrap_or(C64::new(0.0, 0.0))
            }
        };
        let r = quad::integrate_half_line(
            |lambda| inner(lambda) * C64::new(lambda.powi(n as i32 - 1), 0.0),
            0.0,
            tol,
        )?;
        sector_errors.push((mask, r.error));
        total += r.value;
    }
    Ok((total, sector_errors))
}

/// Time-translation jets of the substituted probe: the derivative mixing of
/// `Psi(s_root/(1 - s_root t), s_rest)` at the origin.
pub fn translated_jet(psi: &SProbe, m: &[u32], root: usize, t: f64, degree: u32) -> f64 {
    // d^m [Psi o subst] (0) = m_root! sum_{i <= m_root} C(m_root-1, i-1)
    //   t^{m_root-i} d^{(i, m_rest)} Psi(0) / i!.
    let m_root = m[root];
    let mut total = 0.0;
    for i in 0..=m_root {
        let comb = if m_root == 0 {
            if i == 0 {
                1.0
            } else {
                0.0
            }
        } else if i == 0 {
            0.0
        } else {
            binomial(m_root - 1, i - 1)
        };
        if comb == 0.0 {
            continue;
        }
        let mut mi = m.to_vec();
        mi[root] = i;
        let jet = psi.jet(&mi);
        if jet == 0.0 {
            continue;
        }
        let ifact: f64 = (1..=i).map(|x| x as f64).product::<f64>().max(1.0);
        total += comb * t.powi((m_root - i) as i32) * jet / ifact;
    }
    let mfact: f64 = (1..=m_root).map(|x| x as f64).product::<f64>().max(1.0);
    let _ = degree;
    total * mfact
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut v = 1.0;
    for i in 0..k {
        v *= (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Counterterm pairing `<C[f], Psi> = sum_m c_m[f] jet_m(Psi)`.
pub fn counterterm_pairing(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    tol: f64,
) -> Result<C64, RenormError> {
    let entry = table.entry(diagram)?;
    let degree = entry.degree;
    let n = diagram.tree.lines.len();
    let mut total = C64::new(0.0, 0.0);
    let mut m = vec![0u32; n];
    loop {
        let jet = psi.jet(&m);
        if jet != 0.0 {
            let c = counterterm_coefficient(table, diagram, f, &m, presets, tol)?;
            total += c * jet;
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok(total);
            }
            m[i] += 1;
            if m[i] <= degree {
                break;
            }
            m[i] = 0;
            i += 1;
        }
    }
}

/// Counterterm pairing against the time-translated probe pair: the left
/// side pairs the phase-dressed external probe with Psi, the right side
/// pairs the plain probe with the substituted Psi (jets mixed analytically).
pub fn time_translation_defect(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    t: f64,
    tol: f64,
) -> Result<C64, RenormError> {
    let entry = table.entry(diagram)?;
    let degree = entry.degree;
    let n = diagram.tree.lines.len();
    let root_id = diagram
        .tree
        .root_lines()
        .map(|(id, _)| id)
        .next()
        .expect("connected");
    let f_shift = f.clone().with_time(f.shell_time + t);
    let mut lhs = C64::new(0.0, 0.0);
    let mut rhs = C64::new(0.0, 0.0);
    let mut m = vec![0u32; n];
    loop {
        let jet_plain = psi.jet(&m);
        if jet_plain != 0.0 {
            let c_shift = counterterm_coefficient(table, diagram, &f_shift, &m, presets, tol)?;
            lhs += c_shift * jet_plain;
        }
        let jet_mixed = translated_jet(psi, &m, root_id, t, degree);
        if jet_mixed != 0.0 {
            let c_plain = counterterm_coefficient(table, diagram, f, &m, presets, tol)?;
            rhs += c_plain * jet_mixed;
        }
        let mut i = 0;
        loop {
            if i == n {
                return Ok(lhs - rhs);
            }
            m[i] += 1;
            if m[i] <= degree {
                break;
            }
            m[i] = 0;
            i += 1;
        }
    }
}

/// Cluster diagnostic: evaluate the renormalized pairing with the
/// plane-wave translation on a proper subset of external lines at each
/// separation, then fit the log-magnitude against the log-separation.
pub struct ClusterFit {
    pub separations: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub exponent: f64,
    pub residual: f64,
    pub monotone: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn cluster_decay(
    table: &CountertermTable,
    diagram: &FriedrichsDiagram,
    subset: &[usize],
    separations: &[f64],
    f: &FProbe,
    psi: &SProbe,
    presets: &WindowPresets,
    tol: f64,
) -> Result<ClusterFit, RenormError> {
    let entry = table.entry(diagram)?;
    let degree = entry.degree;
    let mut magnitudes = Vec::new();
    for &a in separations {
        let base = friedrichs::assemble_integrand(
            diagram,
            &table.kernel,
            &table.occ,
            table.dim,
            table.mu,
        )?;
        let mut translated = base;
        if a != 0.0 {
            translated.translate_phase(subset, a)?;
        }
        let amp = pair_with_probe(diagram, &translated, f, table.mu);
        let n = amp.n_lines;
        let bulk = integrate_tau_box(
            &|tau: &[f64]| {
                let s: Vec<f64> = tau.iter().map(|&t| 1.0 / t).collect();
                let w = subtracted_probe_value(psi, presets, degree, &s);
                if w == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    amp.eval(tau).unwrap_or(C64::new(0.0, 0.0)) * w
                }
            },
            &vec![1e-4; n],
            tol,
        )?;
        magnitudes.push(bulk.norm());
    }
    // Log-log least squares.
    let xs: Vec<f64> = separations.iter().map(|&a| a.max(1e-12).ln()).collect();
    let ys: Vec<f64> = magnitudes.iter().map(|&v| v.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx.max(1e-300);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        let fit = ym + slope * (x - xm);
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - ym) * (y - ym);
    }
    let monotone = magnitudes.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    Ok(ClusterFit {
        separations: separations.to_vec(),
        magnitudes,
        exponent: -slope,
        residual: (ss_res / ss_tot.max(1e-300)).sqrt(),
        monotone,
    })
}

/// Free-phase rate of every monomial entry on a grid: the generator of the
/// root-line dressing, used for the regularized infinite-past evolution.
fn entry_phase(
    sig: &crate::corrdyn::Signature,
    tuple: &[usize],
    ctx: &WickContext,
) -> f64 {
    sig.species_list()
        .iter()
        .zip(tuple.iter())
        .map(|(s, &k)| s.phase_sign() * ctx.energy[k])
        .sum()
}

/// Regularized first-order infinite-past evolution on the grid: the
/// oscillation-averaged delay integral of the dressed interaction. Off the
/// free-frequency shell the improper integral has the closed Abel value;
/// the shell part is removed by the counterterm.
pub fn regularized_evolution(
    lint: &NormalPolynomial,
    ctx: &WickContext,
    t: f64,
) -> NormalPolynomial {
    let mut out = NormalPolynomial::zero(lint.n_modes);
    for (sig, kernel) in &lint.terms {
        let mut new_kernel = kernel.clone();
        for v in new_kernel.data.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        for (tuple, v) in kernel.nonzero() {
            let theta = entry_phase(sig, &tuple, ctx);
            if theta.abs() < 1e-9 {
                continue; // shell part cancelled by the counterterm
            }
            // Abel value of int_0^inf exp(i theta tau) dtau = i / theta,
            // dressed to observation time t.
            let value = v * C64::new(0.0, 1.0 / theta) * C64::from_polar(1.0, -theta * t);
            new_kernel.add_at(&tuple, value);
        }
        if !new_kernel.is_zero() {
            out.insert_monomial(&sig.species_list(), &new_kernel);
        }
    }
    out.prune(0.0);
    out
}

/// First-order stationary-state counterterm vector on the grid: the
/// on-shell component of the windowed delay integral, with reversed sign
/// (it cancels the secular window growth of the bare integral).
pub fn lambda_vector(lint: &NormalPolynomial, ctx: &WickContext, window: f64) -> NormalPolynomial {
    let mut out = NormalPolynomial::zero(lint.n_modes);
    for (sig, kernel) in &lint.terms {
        let mut new_kernel = kernel.clone();
        for v in new_kernel.data.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        for (tuple, v) in kernel.nonzero() {
            let theta = entry_phase(sig, &tuple, ctx);
            if theta.abs() < 1e-9 {
                new_kernel.add_at(&tuple, -v * window);
            }
        }
        if !new_kernel.is_zero() {
            out.insert_monomial(&sig.species_list(), &new_kernel);
        }
    }
    out.prune(0.0);
    out
}

/// The two-vertex chain tree used by the order-2 diagnostics.
pub fn chain_tree() -> crate::treealg::DirectedTree {
    crate::treealg::DirectedTree::new(
        2,
        vec![
            Line::Root { vertex: 1 },
            Line::Internal { upper: 1, lower: 0 },
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::{ModeGrid, OccupationSpec};
    use crate::treealg::DirectedTree;

    fn vacuum_table(max_lines: usize) -> (CountertermTable, WindowPresets) {
        let grid = ModeGrid::build(1, 1, 1.0, -1.0).unwrap();
        let occ = OccupationField::build(&grid, OccupationSpec::Vacuum).unwrap();
        let kernel = InteractionKernel::new(C64::new(0.7, 0.0), 0.35).unwrap();
        let table =
            counterterm_recursion(&kernel, &occ, 1, -1.0, max_lines, 4, 0.6, 1e-10).unwrap();
        let presets = WindowPresets::for_lines(max_lines);
        (table, presets)
    }

    #[test]
    fn partition_of_unity_sums_to_one() {
        let presets = WindowPresets::for_lines(2);
        let points = [
            vec![0.01, 0.2],
            vec![0.12, 0.12],
            vec![1.5, 0.03],
            vec![0.08, 0.9],
        ];
        for s in &points {
            let total: f64 = (0..4).map(|mask| presets.eta(mask, s)).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn smearing_normalization() {
        let presets = WindowPresets::for_lines(1);
        for &x in &[0.5, 1.0, 2.0] {
            // Support sits at lambda within 10% of x.
            let r = quad::integrate(|l| presets.delta_smear(l, x), x / 1.2, x / 0.8, 1e-12)
                .unwrap();
            assert!(
                (r.value - 1.0).abs() < 1e-10,
                "x={x}: integral {}",
                r.value
            );
        }
    }

    #[test]
    fn xi_window_shape() {
        let presets = WindowPresets::for_lines(1);
        assert_eq!(presets.xi(0.0), 1.0);
        assert_eq!(presets.xi(presets.xi_lo * 0.9), 1.0);
        assert_eq!(presets.xi(presets.xi_hi * 1.1), 0.0);
        let mid = presets.xi(0.5 * (presets.xi_lo + presets.xi_hi));
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn first_order_table_has_entries() {
        let (table, _) = vacuum_table(1);
        assert_eq!(table.entries.len(), 2);
        for e in table.entries.values() {
            // The free-frequency form has rank two on the conservation
            // subspace (the energy shell survives), so the amplitude decays
            // like 1/tau: logarithmically divergent, one subtraction order.
            assert_eq!(e.degree, 1, "exponents {:?}", e.decay_exponents);
            assert!(
                e.decay_exponents.iter().all(|&k| (-1.0 - k).abs() < 0.1),
                "exponents {:?}",
                e.decay_exponents
            );
        }
    }

    #[test]
    fn locality_deep_probes_annihilated() {
        // Counterterm jets vanish structurally on probes with deep zeros.
        let (table, _presets) = vacuum_table(1);
        for e in table.entries.values() {
            let deep = SProbe {
                factors: vec![SFactor::Monomial {
                    power: e.degree + 1,
                }],
            };
            assert_eq!(deep.jet(&[0]), 0.0);
            let bump = SProbe {
                factors: vec![SFactor::Bump {
                    center: 0.2,
                    width: 0.05,
                }],
            };
            for k in 0..=e.degree {
                assert_eq!(bump.jet(&[k]), 0.0);
            }
        }
    }

    #[test]
    fn renormalized_equals_bare_on_deep_probe() {
        let (table, presets) = vacuum_table(1);
        let e = table.entries.values().next().unwrap().clone();
        let f = FProbe::plain(vec![0.6; 4], vec![0.0; 4]);
        let deep = SProbe {
            factors: vec![SFactor::Bump {
                center: 0.15,
                width: 0.04,
            }],
        };
        let a = renormalized_pairing(&table, &e.diagram, &f, &deep, &presets, 1e-11).unwrap();
        let b = bare_pairing(&table, &e.diagram, &f, &deep, &presets, 1e-11, None).unwrap();
        assert!(
            (a - b).norm() < 1e-9 * b.norm().max(1e-12),
            "{a} vs {b}"
        );
    }

    #[test]
    fn sector_pairing_matches_direct_on_deep_probe() {
        let (table, presets) = vacuum_table(1);
        let e = table.entries.values().next().unwrap().clone();
        let f = FProbe::plain(vec![0.6; 4], vec![0.0; 4]);
        let deep = SProbe {
            factors: vec![SFactor::Bump {
                center: 0.2,
                width: 0.06,
            }],
        };
        let direct = bare_pairing(&table, &e.diagram, &f, &deep, &presets, 1e-11, None).unwrap();
        let (sector, errors) =
            sector_pairing(&table, &e.diagram, &f, &deep, &presets, false, 1e-10).unwrap();
        assert!(
            (direct - sector).norm() < 1e-8 * direct.norm().max(1e-10),
            "direct {direct} vs sector {sector} (errors {errors:?})"
        );
    }

    #[test]
    fn sector_sum_identity_on_plain_functions() {
        let presets = WindowPresets::for_lines(1);
        // int_0^inf exp(-s) ds = 1.
        let f1 = |s: &[f64]| C64::new((-s[0]).exp(), 0.0);
        let (v1, _) = sector_sum(&presets, 1, &f1, 1e-11).unwrap();
        assert!((v1 - C64::new(1.0, 0.0)).norm() < 1e-8, "{v1}");
        // A narrow feature away from zero.
        let f2 = |s: &[f64]| {
            let u: f64 = (s[0] - 0.2) / 0.06;
            C64::new(if u.abs() < 1.0 { (-1.0 / (1.0 - u * u)).exp() } else { 0.0 }, 0.0)
        };
        let direct = quad::integrate(|x| f2(&[x]).re, 0.1, 0.3, 1e-12).unwrap().value;
        let (v2, _) = sector_sum(&presets, 1, &f2, 1e-11).unwrap();
        assert!((v2.re - direct).abs() < 1e-8 * direct, "{} vs {direct}", v2.re);
        // Two dimensions: product exponential.
        let presets2 = WindowPresets::for_lines(2);
        let f3 = |s: &[f64]| C64::new((-s[0] - 2.0 * s[1]).exp(), 0.0);
        let (v3, _) = sector_sum(&presets2, 2, &f3, 1e-10).unwrap();
        assert!((v3 - C64::new(0.5, 0.0)).norm() < 1e-7, "{v3}");
    }

    #[test]
    fn degree_heuristic() {
        assert_eq!(degree_from_exponent(-2.0, 4), 0);
        assert_eq!(degree_from_exponent(-1.5, 4), 0);
        assert_eq!(degree_from_exponent(-1.0, 4), 1);
        assert_eq!(degree_from_exponent(-0.998, 4), 1);
        assert_eq!(degree_from_exponent(-0.5, 4), 2);
        assert_eq!(degree_from_exponent(0.0, 4), 2);
        assert_eq!(degree_from_exponent(-8.0, 4), 0);
    }

    #[test]
    fn translated_jet_reduces_to_plain_at_zero_shift() {
        let psi = SProbe::monomial(&[2, 1]);
        for m in [[2u32, 1u32], [1, 1], [2, 0]] {
            let a = translated_jet(&psi, &m, 0, 0.0, 4);
            let b = psi.jet(&m);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_table_builds() {
        let (table, _) = vacuum_table(2);
        // One-vertex entries plus two-vertex chain entries.
        let chains: Vec<&CtEntry> = table
            .entries
            .values()
            .filter(|e| e.diagram.tree.n == 2)
            .collect();
        assert!(!chains.is_empty());
        // At vacuum every open chain diagram keeps at least three crossings
        // on each tree line (the lower vertex contributes externals), so
        // all are power-counting safe; kind assignment must agree with the
        // measured crossing counts.
        for e in &chains {
            let safe = e.diagram.is_power_counting_safe();
            assert_eq!(
                e.kind == SubtractionKind::Renormalizable,
                safe,
                "crossings {:?}",
                e.diagram.crossing_counts()
            );
        }
    }

    #[test]
    fn chain_tree_shape() {
        let t: DirectedTree = chain_tree();
        assert_eq!(t.n, 2);
        assert_eq!(t.lines.len(), 2);
    }
}
