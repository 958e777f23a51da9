//! Finite momentum grids, dispersion and occupation functions, Gaussian
//! two-body interaction kernels, and the two-point propagator table of the
//! doubled Gaussian reference state.
//!
//! Continuum delta functions become Kronecker deltas divided by the mode
//! weight, so every momentum integral is a weighted sum and the finite-mode
//! oracle is exact.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("chemical potential must be negative, got {0}")]
    NonNegativeMu(f64),
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("extent must be at least 1")]
    BadExtent,
    #[error("occupation not finite at mode {0:?}")]
    BadOccupation(Vec<f64>),
    #[error("Planck form requires beta > 0, got {0}")]
    BadBeta(f64),
    #[error("kernel width must be positive, got {0}")]
    BadWidth(f64),
}

/// A momentum point in `d` dimensions.
pub type Mode = Vec<f64>;

/// Uniform symmetric momentum grid with quadrature weight and chemical
/// potential. Dispersion is quadratic, `omega(k) = k^2 / 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeGrid {
    pub dim: usize,
    pub modes: Vec<Mode>,
    /// Momentum-space volume element (spacing^d).
    pub weight: f64,
    pub mu: f64,
}

pub fn omega(k: &[f64]) -> f64 {
    0.5 * k.iter().map(|x| x * x).sum::<f64>()
}

impl ModeGrid {
    /// Uniform symmetric grid centered at 0 with `extent` points per axis.
    pub fn build(dim: usize, extent: usize, spacing: f64, mu: f64) -> Result<Self, ModeError> {
        if mu >= 0.0 {
            return Err(ModeError::NonNegativeMu(mu));
        }
        if spacing <= 0.0 {
            return Err(ModeError::BadSpacing(spacing));
        }
        if extent < 1 {
            return Err(ModeError::BadExtent);
        }
        let center = (extent as f64 - 1.0) / 2.0;
        let axis: Vec<f64> = (0..extent).map(|i| (i as f64 - center) * spacing).collect();
        let mut modes = vec![Vec::new()];
        for _ in 0..dim {
            let mut next = Vec::with_capacity(modes.len() * extent);
            for m in &modes {
                for &x in &axis {
                    let mut mm = m.clone();
                    mm.push(x);
                    next.push(mm);
                }
            }
            modes = next;
        }
        Ok(ModeGrid {
            dim,
            modes,
            weight: spacing.powi(dim as i32),
            mu,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Free dispersion above the chemical potential; strictly positive.
    pub fn energy(&self, mode: usize) -> f64 {
        omega(&self.modes[mode]) - self.mu
    }

    /// Index of the mode whose momentum equals the componentwise sum
    /// `sum_i signs_i * modes[idx_i]`, if it lies on the grid.
    pub fn find_mode(&self, k: &[f64]) -> Option<usize> {
        self.modes
            .iter()
            .position(|m| m.iter().zip(k.iter()).all(|(a, b)| (a - b).abs() < 1e-9))
    }
}

/// Occupation-number profiles for the reference Gaussian state.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum OccupationSpec {
    /// n(k) = 0.
    Vacuum,
    /// n(k) = e^{-beta(omega - mu)} / (1 - e^{-beta(omega - mu)}).
    Planck { beta: f64 },
    /// n(k) = n0 exp(-b k^2); stays inside the Gaussian calculus.
    Gaussian { n0: f64, b: f64 },
}

/// Occupation numbers evaluated on a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupationField {
    pub spec: OccupationSpec,
    pub values: Vec<f64>,
}

impl OccupationField {
    pub fn build(grid: &ModeGrid, spec: OccupationSpec) -> Result<Self, ModeError> {
        let values: Vec<f64> = match &spec {
            OccupationSpec::Vacuum => vec![0.0; grid.len()],
            OccupationSpec::Planck { beta } => {
                if *beta <= 0.0 {
                    return Err(ModeError::BadBeta(*beta));
                }
                grid.modes
                    .iter()
                    .map(|k| {
                        let x = (-beta * (omega(k) - grid.mu)).exp();
                        x / (1.0 - x)
                    })
                    .collect()
            }
            OccupationSpec::Gaussian { n0, b } => grid
                .modes
                .iter()
                .map(|k| n0 * (-b * k.iter().map(|x| x * x).sum::<f64>()).exp())
                .collect(),
        };
        for (v, k) in values.iter().zip(grid.modes.iter()) {
            if !v.is_finite() || *v < 0.0 {
                return Err(ModeError::BadOccupation(k.clone()));
            }
        }
        Ok(OccupationField { spec, values })
    }

    pub fn value(&self, mode: usize) -> f64 {
        self.values[mode]
    }

    /// Occupation as a sum of Gaussian terms `c * exp(-b k^2)` for the
    /// closed-form momentum calculus. `None` for the Planck form.
    pub fn gaussian_terms(&self) -> Option<Vec<(f64, f64)>> {
        match self.spec {
            OccupationSpec::Vacuum => Some(vec![]),
            OccupationSpec::Gaussian { n0, b } => Some(vec![(n0, b)]),
            OccupationSpec::Planck { .. } => None,
        }
    }
}

/// Two-body interaction kernel `v(p1,p2|q1,q2) = c exp(-a sum |k|^2)`,
/// symmetric in p's and in q's by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteractionKernel {
    pub amplitude: C64,
    pub width: f64,
}

impl InteractionKernel {
    pub fn new(amplitude: C64, width: f64) -> Result<Self, ModeError> {
        if width <= 0.0 {
            return Err(ModeError::BadWidth(width));
        }
        Ok(InteractionKernel { amplitude, width })
    }

    pub fn eval(&self, p1: &[f64], p2: &[f64], q1: &[f64], q2: &[f64]) -> C64 {
        let s: f64 = [p1, p2, q1, q2]
            .iter()
            .map(|k| k.iter().map(|x| x * x).sum::<f64>())
            .sum();
        self.amplitude * (-self.width * s).exp()
    }

    pub fn is_real(&self) -> bool {
        self.amplitude.im == 0.0
    }
}

/// Branch sign of a doubled generator: `Plus` for the backward branch,
/// `Minus` for the forward branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> i8 {
        match self {
            Branch::Plus => 1,
            Branch::Minus => -1,
        }
    }
    pub fn flip(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

/// Creation/annihilation flavor (the upper index of a doubled generator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    Create,
    Annihilate,
}

impl Flavor {
    pub fn sign(self) -> i8 {
        match self {
            Flavor::Create => 1,
            Flavor::Annihilate => -1,
        }
    }
    pub fn flip(self) -> Self {
        match self {
            Flavor::Create => Flavor::Annihilate,
            Flavor::Annihilate => Flavor::Create,
        }
    }
}

/// Species of a doubled generator, ordered as they appear in the canonical
/// normal form: creators on the backward branch, annihilators on the
/// backward branch, annihilators on the forward branch, creators on the
/// forward branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Species {
    /// a^+_+
    CrePlus = 0,
    /// a_+
    AnnPlus = 1,
    /// a_-
    AnnMinus = 2,
    /// a^+_-
    CreMinus = 3,
}

impl Species {
    pub const ALL: [Species; 4] = [
        Species::CrePlus,
        Species::AnnPlus,
        Species::AnnMinus,
        Species::CreMinus,
    ];

    pub fn branch(self) -> Branch {
        match self {
            Species::CrePlus | Species::AnnPlus => Branch::Plus,
            Species::AnnMinus | Species::CreMinus => Branch::Minus,
        }
    }

    pub fn flavor(self) -> Flavor {
        match self {
            Species::CrePlus | Species::CreMinus => Flavor::Create,
            Species::AnnPlus | Species::AnnMinus => Flavor::Annihilate,
        }
    }

    pub fn from_parts(flavor: Flavor, branch: Branch) -> Self {
        match (flavor, branch) {
            (Flavor::Create, Branch::Plus) => Species::CrePlus,
            (Flavor::Annihilate, Branch::Plus) => Species::AnnPlus,
            (Flavor::Annihilate, Branch::Minus) => Species::AnnMinus,
            (Flavor::Create, Branch::Minus) => Species::CreMinus,
        }
    }

    /// Branch swap with kernel conjugation is the star involution; on the
    /// species level it swaps the branch and keeps the flavor.
    pub fn star(self) -> Self {
        Species::from_parts(self.flavor(), self.branch().flip())
    }

    /// Sign of the free-evolution phase: `exp(L0 t)` multiplies a generator
    /// of this species at mode k by `exp(i * phase_sign * (omega - mu) * t)`.
    pub fn phase_sign(self) -> f64 {
        match self {
            Species::CreMinus => -1.0,
            Species::AnnMinus => 1.0,
            Species::CrePlus => 1.0,
            Species::AnnPlus => -1.0,
        }
    }
}

/// Kind of scalar attached to a two-point pairing, before evaluating n(k).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingValue {
    Zero,
    N,
    OnePlusN,
}

impl PairingValue {
    pub fn eval(self, n: f64) -> f64 {
        match self {
            PairingValue::Zero => 0.0,
            PairingValue::N => n,
            PairingValue::OnePlusN => 1.0 + n,
        }
    }
}

/// The two-point function of the doubled reference state for an ordered
/// pair of species (left factor first): the coefficient of
/// `delta_{k k'} / weight`.
pub fn pairing(left: Species, right: Species) -> PairingValue {
    use Species::*;
    match (left, right) {
        // Same-branch, backward (-): the original state.
        (CreMinus, AnnMinus) => PairingValue::N,
        (AnnMinus, CreMinus) => PairingValue::OnePlusN,
        // Same-branch, forward (+): reversed order with flipped flavors.
        (CrePlus, AnnPlus) => PairingValue::N,
        (AnnPlus, CrePlus) => PairingValue::OnePlusN,
        // Cross-branch (branches commute, so order does not matter).
        (AnnPlus, AnnMinus) | (AnnMinus, AnnPlus) => PairingValue::N,
        (CrePlus, CreMinus) | (CreMinus, CrePlus) => PairingValue::OnePlusN,
        _ => PairingValue::Zero,
    }
}

/// Orientation of a contraction line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Plus,
    Minus,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }
}

/// Propagator factor table: given the orientation and the branch signs at
/// the upper and lower ends of a line, the scalar factor multiplying
/// `delta(k - k')`.
#[derive(Debug, Clone)]
pub struct PropagatorTable<'a> {
    pub occupation: &'a OccupationField,
}

impl<'a> PropagatorTable<'a> {
    pub fn new(occupation: &'a OccupationField) -> Self {
        PropagatorTable { occupation }
    }

    /// Species at the two ends of a line implied by (orientation, branch
    /// signs): upper flavor has sign `-or * g_up`, lower flavor `or * g_lo`.
    pub fn end_species(or: Orientation, g_up: Branch, g_lo: Branch) -> (Species, Species) {
        let up_flavor = if -(or.sign() as i8) * g_up.sign() > 0 {
            Flavor::Create
        } else {
            Flavor::Annihilate
        };
        let lo_flavor = if (or.sign() as i8) * g_lo.sign() > 0 {
            Flavor::Create
        } else {
            Flavor::Annihilate
        };
        (
            Species::from_parts(up_flavor, g_up),
            Species::from_parts(lo_flavor, g_lo),
        )
    }

    /// Scalar propagator factor at a mode; forbidden sign triples give 0.
    pub fn value(&self, or: Orientation, g_up: Branch, g_lo: Branch, mode: usize) -> f64 {
        let (up, lo) = Self::end_species(or, g_up, g_lo);
        pairing(up, lo).eval(self.occupation.value(mode))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_grid() {
        let g = ModeGrid::build(1, 1, 1.0, -1.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.modes[0], vec![0.0]);
        assert_eq!(g.weight, 1.0);
    }

    #[test]
    fn three_point_grid() {
        let g = ModeGrid::build(1, 3, 0.5, -1.0).unwrap();
        let ks: Vec<f64> = g.modes.iter().map(|m| m[0]).collect();
        assert_eq!(ks, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn grid_3d_energy_checksum() {
        let g = ModeGrid::build(3, 3, 1.0, -0.5).unwrap();
        assert_eq!(g.len(), 27);
        // Independent recomputation of omega(k) per mode.
        let direct: f64 = g
            .modes
            .iter()
            .map(|m| 0.5 * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) + 0.5)
            .sum();
        let via_energy: f64 = (0..g.len()).map(|i| g.energy(i)).sum();
        assert!((direct - via_energy).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_mu() {
        assert!(ModeGrid::build(1, 1, 1.0, 0.0).is_err());
        assert!(ModeGrid::build(1, 1, 1.0, 0.5).is_err());
    }

    #[test]
    fn occupation_forms() {
        let g = ModeGrid::build(1, 3, 1.0, -1.0).unwrap();
        let vac = OccupationField::build(&g, OccupationSpec::Vacuum).unwrap();
        assert!(vac.values.iter().all(|&v| v == 0.0));

        // Planck at k=0, beta=1, mu=-1: e^{-1}/(1-e^{-1}).
        let planck = OccupationField::build(&g, OccupationSpec::Planck { beta: 1.0 }).unwrap();
        let k0 = g.find_mode(&[0.0]).unwrap();
        let expect = (-1.0f64).exp() / (1.0 - (-1.0f64).exp());
        assert!((planck.value(k0) - expect).abs() < 1e-15);

        let gauss = OccupationField::build(
            &g,
            OccupationSpec::Gaussian { n0: 0.3, b: 1.0 },
        )
        .unwrap();
        let k1 = g.find_mode(&[1.0]).unwrap();
        assert!((gauss.value(k1) - 0.3 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn planck_monotone_positive() {
        let g = ModeGrid::build(1, 9, 0.5, -0.7).unwrap();
        let n = OccupationField::build(&g, OccupationSpec::Planck { beta: 1.3 }).unwrap();
        let mut pairs: Vec<(f64, f64)> = g
            .modes
            .iter()
            .zip(n.values.iter())
            .map(|(k, &v)| (omega(k), v))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(w[0].1 > 0.0);
            if w[1].0 > w[0].0 + 1e-12 {
                assert!(w[1].1 < w[0].1, "occupation must decrease with energy");
            }
        }
    }

    #[test]
    fn kernel_symmetry() {
        let v = InteractionKernel::new(C64::new(0.7, 0.0), 0.3).unwrap();
        let (p1, p2, q1, q2) = (&[0.5][..], &[-0.5][..], &[1.0][..], &[0.0][..]);
        assert_eq!(v.eval(p1, p2, q1, q2), v.eval(p2, p1, q1, q2));
        assert_eq!(v.eval(p1, p2, q1, q2), v.eval(p1, p2, q2, q1));
    }

    #[test]
    fn pairing_table_matches_reference_state() {
        use Species::*;
        // Entries displayed for the doubled state.
        assert_eq!(pairing(AnnPlus, AnnMinus), PairingValue::N);
        assert_eq!(pairing(CrePlus, CreMinus), PairingValue::OnePlusN);
        assert_eq!(pairing(CrePlus, AnnMinus), PairingValue::Zero);
        assert_eq!(pairing(AnnPlus, CreMinus), PairingValue::Zero);
        // Same-branch backward pair behaves like the undoubled state.
        assert_eq!(pairing(CreMinus, AnnMinus), PairingValue::N);
        assert_eq!(pairing(AnnMinus, CreMinus), PairingValue::OnePlusN);
        // Creators never pair with creators on the same branch.
        assert_eq!(pairing(CreMinus, CreMinus), PairingValue::Zero);
        assert_eq!(pairing(CrePlus, CrePlus), PairingValue::Zero);
    }

    #[test]
    fn star_is_involution() {
        for s in Species::ALL {
            assert_eq!(s.star().star(), s);
            assert_eq!(s.star().flavor(), s.flavor());
            assert_ne!(s.star().branch(), s.branch());
        }
    }
}
