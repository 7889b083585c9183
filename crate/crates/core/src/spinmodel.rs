//! Spin-1 ground-state model of a single NV axis.
//!
//! In the axis-local frame the Hamiltonian is
//!
//! ```text
//! H = D·Sz² + γ·(B∥·Sz + B⊥·Sx)
//! ```
//!
//! in the `|+1⟩, |0⟩, |−1⟩` basis. Strain and electric-field terms are left
//! out. Without them the spectrum is invariant under rotations about the NV
//! axis, so the transverse field can always be placed along local x and the
//! matrix stays real symmetric.
//!
//! An NV axis is a line, not a direction: the ensemble contains both
//! orientations. [`transition_frequencies`] therefore orients every axis so
//! that `B∥ ≥ 0`, which makes `f_plus ≥ f_minus` and the axial limit
//! `f_± = D ± γ|B∥|`. `f_minus` is the signed level difference and goes
//! negative above the level anti-crossing; the observed line sits at
//! `|f_minus|`.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::crystal::{nv_axes, project_field, spherical_to_cartesian, SphericalField, Vec3};
use crate::error::{Error, Result};

/// Zero-field splitting in MHz.
pub const DEFAULT_D_ZFS_MHZ: f64 = 2870.0;
/// γ/2π in MHz per mT.
pub const DEFAULT_GAMMA_MHZ_PER_MT: f64 = 28.024;

const HERMITIAN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinModelParams {
    /// Zero-field splitting D (MHz).
    pub d_zfs: f64,
    /// Gyromagnetic ratio γ/2π (MHz/mT).
    pub gamma: f64,
}

impl SpinModelParams {
    pub fn new(d_zfs: f64, gamma: f64) -> Result<Self> {
        let p = Self { d_zfs, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_zfs.is_finite() && self.d_zfs > 0.0) {
            return Err(Error::InvalidParameter(format!("d_zfs = {} must be > 0", self.d_zfs)));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma = {} must be > 0", self.gamma)));
        }
        Ok(())
    }
}

impl Default for SpinModelParams {
    fn default() -> Self {
        Self {
            d_zfs: DEFAULT_D_ZFS_MHZ,
            gamma: DEFAULT_GAMMA_MHZ_PER_MT,
        }
    }
}

/// Field seen by one NV axis (mT, degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisProjection {
    pub b_parallel: f64,
    pub b_perp: f64,
    /// Angle between axis and field.
    pub beta_deg: f64,
    /// Field magnitude.
    pub omega: f64,
}

impl AxisProjection {
    pub fn from_components(b_parallel: f64, b_perp: f64) -> Self {
        let b_perp = b_perp.abs();
        let omega = b_parallel.hypot(b_perp);
        let beta_deg = if omega == 0.0 {
            0.0
        } else {
            b_perp.atan2(b_parallel).to_degrees()
        };
        Self {
            b_parallel,
            b_perp,
            beta_deg,
            omega,
        }
    }

    /// Transverse parts below `1e-12·|B|` are rounding residue of the
    /// projection and are set to zero, so fields along an axis are exactly axial.
    pub fn from_field(axis: &Vec3, b: &Vec3) -> Self {
        let p = project_field(axis, b);
        let perp = if p.perp <= 1e-12 * b.norm() { 0.0 } else { p.perp };
        Self::from_components(p.parallel, perp)
    }

    /// Same projection with the axis flipped so that `b_parallel ≥ 0`.
    pub fn oriented(&self) -> Self {
        Self::from_components(self.b_parallel.abs(), self.b_perp)
    }
}

/// Basis order used by every matrix in this module.
pub const PLUS: usize = 0;
pub const ZERO: usize = 1;
pub const MINUS: usize = 2;

fn sz() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::new(1.0, 0.0, -1.0))
}

fn sx() -> Matrix3<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Matrix3::new(0.0, s, 0.0, s, 0.0, s, 0.0, s, 0.0)
}

pub fn hamiltonian_matrix(p: &SpinModelParams, proj: &AxisProjection) -> Matrix3<f64> {
    let sz = sz();
    p.d_zfs * sz * sz + p.gamma * (proj.b_parallel * sz + proj.b_perp * sx())
}

/// Eigen-decomposition with states labeled by their dominant `m_s` character.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenlevels {
    /// Energies (MHz) indexed by [`PLUS`], [`ZERO`], [`MINUS`] label.
    pub energies: [f64; 3],
    /// Column `k` is the eigenvector carrying label `k`.
    pub vectors: Matrix3<f64>,
}

impl Eigenlevels {
    pub fn energy(&self, label: usize) -> f64 {
        self.energies[label]
    }
}

// All 3! assignments of eigenvector columns (sorted by ascending energy) to
// labels, listed as [col for PLUS, col for ZERO, col for MINUS]. The first
// entry is the energy-order fallback: 0-like lowest, −1-like next.
const PERMUTATIONS: [[usize; 3]; 6] = [
    [2, 0, 1],
    [1, 0, 2],
    [2, 1, 0],
    [0, 1, 2],
    [1, 2, 0],
    [0, 2, 1],
];

/// Diagonalizes a real symmetric 3×3 Hamiltonian and labels its eigenstates.
///
/// Labels maximize the summed squared overlap with the `Sz` eigenbasis over
/// all label permutations; ties keep the energy-order assignment.
pub fn eigenlevels(h: &Matrix3<f64>) -> Result<Eigenlevels> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hamiltonian".into()));
    }
    let asym = (h - h.transpose()).abs().max();
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }

    let off_diagonal = h[(0, 1)] != 0.0 || h[(0, 2)] != 0.0 || h[(1, 2)] != 0.0;
    let (values, vectors) = if off_diagonal {
        let sym = (h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        // Axial case: exact, and keeps the selection rules exact.
        (h.diagonal(), Matrix3::identity())
    };

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let overlap = |basis: usize, col: usize| vectors[(basis, order[col])].powi(2);
    let mut best = PERMUTATIONS[0];
    let mut best_score = f64::NEG_INFINITY;
    for perm in PERMUTATIONS {
        let score = overlap(PLUS, perm[PLUS]) + overlap(ZERO, perm[ZERO]) + overlap(MINUS, perm[MINUS]);
        if score > best_score + 1e-12 {
            best_score = score;
            best = perm;
        }
    }

    let mut energies = [0.0; 3];
    let mut labeled = Matrix3::zeros();
    for label in [PLUS, ZERO, MINUS] {
        let col = order[best[label]];
        energies[label] = values[col];
        labeled.set_column(label, &vectors.column(col));
    }
    Ok(Eigenlevels {
        energies,
        vectors: labeled,
    })
}

/// Single- and double-quantum transitions of one NV axis (MHz, relative strength).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisTransitions {
    pub f_minus: f64,
    pub f_plus: f64,
    pub f_dq: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    pub s_dq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transition {
    Minus,
    Plus,
    Dq,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Transition::Minus, Transition::Plus, Transition::Dq];

    pub fn name(&self) -> &'static str {
        match self {
            Transition::Minus => "minus",
            Transition::Plus => "plus",
            Transition::Dq => "dq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minus" | "-" | "m" => Some(Transition::Minus),
            "plus" | "+" | "p" => Some(Transition::Plus),
            "dq" => Some(Transition::Dq),
            _ => None,
        }
    }
}

impl std::fmt::Display for Transition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl AxisTransitions {
    /// Signed level difference of a transition.
    pub fn frequency(&self, t: Transition) -> f64 {
        match t {
            Transition::Minus => self.f_minus,
            Transition::Plus => self.f_plus,
            Transition::Dq => self.f_dq,
        }
    }

    pub fn strength(&self, t: Transition) -> f64 {
        match t {
            Transition::Minus => self.s_minus,
            Transition::Plus => self.s_plus,
            Transition::Dq => self.s_dq,
        }
    }
}

/// Transition table for the four NV axes; row `k` is axis `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionTable {
    pub axes: [AxisTransitions; 4],
}

impl TransitionTable {
    /// `axis` is the 1-based NV axis label.
    pub fn get(&self, axis: usize) -> Option<&AxisTransitions> {
        axis.checked_sub(1).and_then(|i| self.axes.get(i))
    }
}

/// Transitions of one axis for the given (signed) projection.
pub fn axis_transitions(p: &SpinModelParams, proj: &AxisProjection) -> AxisTransitions {
    let levels = eigenlevels(&hamiltonian_matrix(p, proj))
        .expect("model Hamiltonian is finite and symmetric");
    let e = levels.energies;
    let (s_minus, s_plus, s_dq) = strengths_from_levels(&levels);
    AxisTransitions {
        f_minus: e[MINUS] - e[ZERO],
        f_plus: e[PLUS] - e[ZERO],
        f_dq: e[PLUS] - e[MINUS],
        s_minus,
        s_plus,
        s_dq,
    }
}

fn strengths_from_levels(levels: &Eigenlevels) -> (f64, f64, f64) {
    let sx = sx();
    let v = &levels.vectors;
    let element = |a: usize, b: usize| {
        let m = (v.column(a).transpose() * sx * v.column(b))[(0, 0)];
        // axial |⟨±1|Sx|0⟩|² = 1/2 sets the unit
        2.0 * m * m
    };
    (element(MINUS, ZERO), element(PLUS, ZERO), element(PLUS, MINUS))
}

/// Drive strengths `(s_minus, s_plus, s_dq)`: `2·|⟨a|Sx|b⟩|²`, which is 1 for
/// either single-quantum line at zero transverse field.
pub fn transition_strength(p: &SpinModelParams, proj: &AxisProjection) -> (f64, f64, f64) {
    let levels = eigenlevels(&hamiltonian_matrix(p, proj))
        .expect("model Hamiltonian is finite and symmetric");
    strengths_from_levels(&levels)
}

/// Transition table for a crystal-frame field `b` (mT).
pub fn transition_frequencies(p: &SpinModelParams, b: &Vec3) -> TransitionTable {
    let axes = nv_axes();
    TransitionTable {
        axes: axes
            .axes
            .map(|axis| axis_transitions(p, &AxisProjection::from_field(&axis, b).oriented())),
    }
}

/// Gradient of every signed transition frequency with respect to the
/// crystal-frame field (MHz/mT), indexed `[axis][Transition as usize]`.
///
/// Uses first-order perturbation theory, `∂E/∂λ = ⟨ψ|∂H/∂λ|ψ⟩`, which is
/// exact for non-degenerate levels.
pub fn transition_gradients(p: &SpinModelParams, b: &Vec3) -> [[Vec3; 3]; 4] {
    let axes = nv_axes();
    let (sz, sx) = (sz(), sx());
    axes.axes.map(|axis| {
        let raw = project_field(&axis, b);
        let sign = if raw.parallel < 0.0 { -1.0 } else { 1.0 };
        let proj = AxisProjection::from_components(raw.parallel.abs(), raw.perp);
        let levels = eigenlevels(&hamiltonian_matrix(p, &proj)).expect("finite model");

        let d_par = axis * sign;
        let d_perp = if raw.perp > 1e-12 {
            (b - axis * raw.parallel) / raw.perp
        } else {
            Vec3::zeros()
        };
        let grad = |label: usize| {
            let c = levels.vectors.column(label);
            let ez = (c.transpose() * sz * c)[(0, 0)];
            let ex = (c.transpose() * sx * c)[(0, 0)];
            (d_par * ez + d_perp * ex) * p.gamma
        };
        let (gp, g0, gm) = (grad(PLUS), grad(ZERO), grad(MINUS));
        [gm - g0, gp - g0, gp - gm]
    })
}

/// Transition tables along one sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub values: Vec<f64>,
    pub tables: Vec<TransitionTable>,
}

/// One row of a flattened sweep (`axis` is 1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub sweep_value: f64,
    pub axis: usize,
    pub transition: Transition,
    pub freq: f64,
    pub strength: f64,
}

impl Sweep {
    pub fn points(&self) -> impl Iterator<Item = CurvePoint> + '_ {
        self.values.iter().zip(&self.tables).flat_map(|(&v, table)| {
            table.axes.iter().enumerate().flat_map(move |(k, row)| {
                Transition::ALL.into_iter().map(move |t| CurvePoint {
                    sweep_value: v,
                    axis: k + 1,
                    transition: t,
                    freq: row.frequency(t),
                    strength: row.strength(t),
                })
            })
        })
    }
}

/// Frequencies versus field magnitude along a fixed direction.
pub fn sweep_vs_field(p: &SpinModelParams, direction: &Vec3, magnitudes: &[f64]) -> Result<Sweep> {
    let norm = direction.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidParameter("sweep direction must be non-zero".into()));
    }
    if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::InvalidParameter("field magnitudes must be finite and >= 0".into()));
    }
    if magnitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("field magnitudes must be ascending".into()));
    }
    let unit = direction / norm;
    Ok(Sweep {
        values: magnitudes.to_vec(),
        tables: magnitudes
            .iter()
            .map(|&m| transition_frequencies(p, &(unit * m)))
            .collect(),
    })
}

/// Which spherical angle is held fixed during an angle sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleSweep {
    /// Sweep θ at fixed φ (degrees).
    Theta { phi_deg: f64 },
    /// Sweep φ at fixed θ (degrees).
    Phi { theta_deg: f64 },
}

pub fn sweep_vs_angle(p: &SpinModelParams, b_m: f64, mode: AngleSweep, angles_deg: &[f64]) -> Result<Sweep> {
    if !(b_m.is_finite() && b_m >= 0.0) {
        return Err(Error::InvalidParameter(format!("b_m = {b_m} must be >= 0")));
    }
    let tables = angles_deg
        .iter()
        .map(|&a| {
            let (theta, phi) = match mode {
                AngleSweep::Theta { phi_deg } => (a, phi_deg),
                AngleSweep::Phi { theta_deg } => (theta_deg, a),
            };
            let s = SphericalField::new(b_m, theta, phi)?;
            Ok(transition_frequencies(p, &spherical_to_cartesian(&s)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep {
        values: angles_deg.to_vec(),
        tables,
    })
}
