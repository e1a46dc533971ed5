//! Physical model of two inductively coupled, harmonically driven flux qubits.
//!
//! Units: every energy, frequency and rate is an angular frequency in ns⁻¹
//! (ħ = 1), so phases evolve as `exp(-i E t)` with `t` in ns and the drive
//! period is `T = 2π/ω`.
//!
//! Basis ordering: the two-qubit matrix basis is the σ_z product basis with
//! qubit 1 as the left tensor factor, ordered `(+,+), (+,−), (−,+), (−,−)`
//! (σ_z eigenvalues). For positive static bias the σ_z = +1 state of each
//! qubit is its lower energy level, so index 0 is the uncoupled ground state
//! (written |↓↓⟩ in the energy labelling) and the zeroth-order Floquet modes
//! are the literal unit vectors.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;
type Mat2 = Matrix2<C64>;

/// k_B/h in GHz per mK. Used to turn a bath temperature into the energy unit
/// of the bias parameters.
pub const KB_OVER_H_GHZ_PER_MK: f64 = 0.020_836_619;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Parameters of one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    /// Tunnel splitting Δ_q.
    pub delta: f64,
    /// Static bias ε_q.
    pub eps: f64,
    /// Relaxation rate Γ_q.
    pub gamma_relax: f64,
    /// Excitation rate Γ′_q. `None` derives it from the bath temperature.
    pub gamma_excite: Option<f64>,
    /// Dephasing rate Γ_φq.
    pub gamma_phi: f64,
}

impl QubitParams {
    pub fn new(delta: f64, eps: f64) -> Self {
        QubitParams {
            delta,
            eps,
            gamma_relax: 0.0,
            gamma_excite: None,
            gamma_phi: 0.0,
        }
    }
}

/// Harmonic bias modulation `A cos(ωt − φ₀)` shared by both qubits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub amplitude: f64,
    pub omega: f64,
    pub phi0: f64,
}

impl DriveParams {
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Start of the drive cycle, `t₀ = φ₀/ω`.
    pub fn cycle_start(&self) -> f64 {
        self.phi0 / self.omega
    }

    pub fn modulation(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t - self.phi0).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub qubits: [QubitParams; 2],
    /// Coupling strength g of the σ_z σ_z interaction.
    pub g: f64,
    pub drive: DriveParams,
    /// Bath temperature in mK.
    pub temperature_mk: f64,
    /// Conversion from mK to the energy unit (default k_B/h in GHz/mK).
    pub kb_conversion: f64,
}

/// Resolved incoherent rates for both qubits, indexed by qubit (0 or 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRates {
    pub relax: [f64; 2],
    pub excite: [f64; 2],
    pub dephase: [f64; 2],
}

impl ChannelRates {
    /// Largest of all rates; sets the scale of resonance line widths.
    pub fn max_rate(&self) -> f64 {
        self.relax
            .iter()
            .chain(&self.excite)
            .chain(&self.dephase)
            .fold(0.0, |m, &r| m.max(r))
    }

    pub fn is_dissipative(&self) -> bool {
        (0..2).any(|q| self.relax[q] + self.excite[q] > 0.0)
    }
}

impl SystemParams {
    pub fn new(qubit1: QubitParams, qubit2: QubitParams, g: f64, drive: DriveParams) -> Self {
        SystemParams {
            qubits: [qubit1, qubit2],
            g,
            drive,
            temperature_mk: 0.0,
            kb_conversion: KB_OVER_H_GHZ_PER_MK,
        }
    }

    pub fn qubit(&self, q: usize) -> &QubitParams {
        &self.qubits[q]
    }

    /// Bath temperature τ_B in energy units.
    pub fn tau_b(&self) -> f64 {
        self.temperature_mk * self.kb_conversion
    }

    pub fn rates(&self) -> ChannelRates {
        let tau = self.tau_b();
        let mut out = ChannelRates {
            relax: [0.0; 2],
            excite: [0.0; 2],
            dephase: [0.0; 2],
        };
        for (q, qp) in self.qubits.iter().enumerate() {
            out.relax[q] = qp.gamma_relax;
            out.dephase[q] = qp.gamma_phi;
            out.excite[q] = qp
                .gamma_excite
                .unwrap_or_else(|| thermal_excitation_rate(qp.gamma_relax, energy_gap(qp), tau));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::NotFinite(name))
            }
        };
        let nonneg = |name: &'static str, v: f64| {
            finite(name, v)?;
            if v < 0.0 {
                Err(ModelError::Negative { name, value: v })
            } else {
                Ok(())
            }
        };
        for qp in &self.qubits {
            nonneg("delta", qp.delta)?;
            finite("eps", qp.eps)?;
            nonneg("gamma_relax", qp.gamma_relax)?;
            nonneg("gamma_phi", qp.gamma_phi)?;
            if let Some(ge) = qp.gamma_excite {
                nonneg("gamma_excite", ge)?;
            }
        }
        finite("g", self.g)?;
        nonneg("amplitude", self.drive.amplitude)?;
        finite("omega", self.drive.omega)?;
        if self.drive.omega <= 0.0 {
            return Err(ModelError::NonPositiveFrequency(self.drive.omega));
        }
        finite("phi0", self.drive.phi0)?;
        if !(0.0..2.0 * PI).contains(&self.drive.phi0) {
            return Err(ModelError::PhaseOutOfRange(self.drive.phi0));
        }
        nonneg("temperature", self.temperature_mk)?;
        finite("kb_conversion", self.kb_conversion)?;
        if self.kb_conversion <= 0.0 {
            return Err(ModelError::Negative {
                name: "kb_conversion",
                value: self.kb_conversion,
            });
        }
        Ok(())
    }

    /// Diagnostics for the small-Δ regime assumed by the analytic oracles.
    pub fn perturbative_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (q, qp) in self.qubits.iter().enumerate() {
            if qp.delta > 0.1 * qp.eps.abs() {
                out.push(format!(
                    "qubit {}: delta={} is not small against eps={}",
                    q + 1,
                    qp.delta,
                    qp.eps
                ));
            }
            if self.drive.amplitude > 0.0 && qp.delta > 0.1 * self.drive.amplitude {
                out.push(format!(
                    "qubit {}: delta={} is not small against drive amplitude={}",
                    q + 1,
                    qp.delta,
                    self.drive.amplitude
                ));
            }
        }
        out
    }

    /// Parameters with the drive phase replaced, wrapped into `[0, 2π)`.
    pub fn with_phase(&self, phi0: f64) -> Self {
        let mut p = *self;
        p.drive.phi0 = phi0.rem_euclid(2.0 * PI);
        p
    }
}

/// Static single-qubit gap `√(ε² + Δ²)`.
pub fn energy_gap(q: &QubitParams) -> f64 {
    q.eps.hypot(q.delta)
}

/// Detailed-balance excitation rate `Γ exp(−ΔE/τ_B)`; zero at zero temperature.
pub fn thermal_excitation_rate(gamma_relax: f64, delta_e: f64, tau_b: f64) -> f64 {
    if tau_b <= 0.0 {
        0.0
    } else {
        gamma_relax * (-delta_e / tau_b).exp()
    }
}

/// Index of the basis state with the given σ_z signs (`true` = +1).
pub const fn basis_index(q1_plus: bool, q2_plus: bool) -> usize {
    (!q1_plus as usize) * 2 + (!q2_plus as usize)
}

/// σ_z eigenvalues of basis state `i` for qubit 1 and qubit 2.
pub(crate) const SZ_SIGNS: [[f64; 2]; 4] = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];

/// Diagonal of the static part of H: bias and coupling.
pub fn static_diagonal(p: &SystemParams) -> [f64; 4] {
    let (e1, e2, g) = (p.qubits[0].eps, p.qubits[1].eps, p.g);
    let mut d = [0.0; 4];
    for (i, s) in SZ_SIGNS.iter().enumerate() {
        d[i] = -0.5 * (e1 * s[0] + e2 * s[1]) - 0.5 * g * s[0] * s[1];
    }
    d
}

/// Diagonal of `−½(σ_z⁽¹⁾ + σ_z⁽²⁾)`, the operator multiplying the drive.
pub const DRIVE_DIAGONAL: [f64; 4] = [-1.0, 0.0, 0.0, 1.0];

/// The tunnelling part `−½ Σ Δ_q σ_x⁽q⁾`, the only off-diagonal piece of H.
pub fn tunnelling_part(p: &SystemParams) -> Mat4 {
    let mut h = Mat4::zeros();
    let d1 = C64::new(-0.5 * p.qubits[0].delta, 0.0);
    let d2 = C64::new(-0.5 * p.qubits[1].delta, 0.0);
    // σ_x on qubit 1 flips the left factor: 0↔2, 1↔3
    h[(0, 2)] = d1;
    h[(2, 0)] = d1;
    h[(1, 3)] = d1;
    h[(3, 1)] = d1;
    // σ_x on qubit 2: 0↔1, 2↔3
    h[(0, 1)] = d2;
    h[(1, 0)] = d2;
    h[(2, 3)] = d2;
    h[(3, 2)] = d2;
    h
}

/// `H(t) = −½ Σ_q (ε_q(t) σ_z⁽q⁾ + Δ_q σ_x⁽q⁾) − (g/2) σ_z⁽¹⁾σ_z⁽²⁾`.
pub fn hamiltonian(t: f64, p: &SystemParams) -> Mat4 {
    let mut h = tunnelling_part(p);
    let diag = static_diagonal(p);
    let v = p.drive.modulation(t);
    for i in 0..4 {
        h[(i, i)] = C64::new(diag[i] + v * DRIVE_DIAGONAL[i], 0.0);
    }
    h
}

/// Ground and excited vectors of `−½(ε σ_z + Δ σ_x)` in the σ_z basis.
fn local_eigenbasis(q: &QubitParams) -> ([f64; 2], [f64; 2]) {
    let theta = if q.eps == 0.0 && q.delta == 0.0 {
        0.0
    } else {
        q.delta.atan2(q.eps)
    };
    let (s, c) = (0.5 * theta).sin_cos();
    ([c, s], [-s, c])
}

fn outer2(a: [f64; 2], b: [f64; 2]) -> Mat2 {
    Mat2::new(
        C64::new(a[0] * b[0], 0.0),
        C64::new(a[0] * b[1], 0.0),
        C64::new(a[1] * b[0], 0.0),
        C64::new(a[1] * b[1], 0.0),
    )
}

pub(crate) fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn embed(op: &Mat2, qubit: usize) -> Mat4 {
    let id = Mat2::identity();
    if qubit == 0 {
        kron2(op, &id)
    } else {
        kron2(&id, op)
    }
}

/// Single-qubit jump operators in the qubit's own energy basis.
#[derive(Debug, Clone, Copy)]
pub struct LocalOperators {
    /// `|e⟩⟨e| − |g⟩⟨g|`
    pub sigma_z: Mat2,
    /// Relaxation `|g⟩⟨e|`
    pub lowering: Mat2,
    /// Excitation `|e⟩⟨g|`
    pub raising: Mat2,
}

pub fn local_operators(q: &QubitParams) -> LocalOperators {
    let (g, e) = local_eigenbasis(q);
    LocalOperators {
        sigma_z: outer2(e, e) - outer2(g, g),
        lowering: outer2(g, e),
        raising: outer2(e, g),
    }
}

/// A Lindblad channel `rate · D[op]`.
#[derive(Debug, Clone)]
pub struct LindbladChannel {
    pub rate: f64,
    pub op: Mat4,
}

/// The six channels of the dissipator (dephasing, relaxation, excitation per
/// qubit). Channels with zero rate are dropped.
pub fn lindblad_channels(p: &SystemParams) -> Vec<LindbladChannel> {
    let rates = p.rates();
    let mut out = Vec::with_capacity(6);
    for q in 0..2 {
        let ops = local_operators(&p.qubits[q]);
        for (rate, op) in [
            (rates.dephase[q], ops.sigma_z),
            (rates.relax[q], ops.lowering),
            (rates.excite[q], ops.raising),
        ] {
            if rate > 0.0 {
                out.push(LindbladChannel {
                    rate,
                    op: embed(&op, q),
                });
            }
        }
    }
    out
}

/// `D[a]ρ = aρa† − ½{a†a, ρ}`
pub fn lindblad_term(a: &Mat4, rho: &Mat4) -> Mat4 {
    let ad = a.adjoint();
    let ada = ad * a;
    a * rho * ad - (ada * rho + rho * ada) * C64::new(0.5, 0.0)
}

pub fn apply_channels(channels: &[LindbladChannel], rho: &Mat4) -> Mat4 {
    channels
        .iter()
        .fold(Mat4::zeros(), |acc, ch| acc + lindblad_term(&ch.op, rho) * C64::new(ch.rate, 0.0))
}

/// `Σ_q (Γ_φq D[σ̂_z] + Γ_q D[σ̂₋] + Γ′_q D[σ̂₊]) ρ`
pub fn dissipator(rho: &DensityMatrix, p: &SystemParams) -> Mat4 {
    apply_channels(&lindblad_channels(p), rho.matrix())
}

/// Hermiticity / trace / positivity tolerances for physical states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermiticity: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Tolerances {
    pub const STRICT: Tolerances = Tolerances {
        hermiticity: 1e-12,
        trace: 1e-10,
        min_eigenvalue: -1e-10,
    };
    /// Relaxed positivity for states in the middle of a transient.
    pub const TRANSIENT: Tolerances = Tolerances {
        hermiticity: 1e-10,
        trace: 1e-9,
        min_eigenvalue: -1e-8,
    };
}

/// Physical diagnostics of a 4×4 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Physicality {
    pub hermiticity: f64,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl Physicality {
    pub fn of(m: &Mat4) -> Self {
        let hermiticity = max_abs(&(m - m.adjoint()));
        let trace_error = (m.trace() - ONE).norm();
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let min_eigenvalue = SymmetricEigen::new(h).eigenvalues.min();
        Physicality {
            hermiticity,
            trace_error,
            min_eigenvalue,
        }
    }

    pub fn within(&self, tol: &Tolerances) -> bool {
        self.hermiticity <= tol.hermiticity
            && self.trace_error <= tol.trace
            && self.min_eigenvalue >= tol.min_eigenvalue
    }
}

pub fn max_abs(m: &Mat4) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Two-qubit density matrix in the basis documented at module level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    /// Validates against [`Tolerances::STRICT`].
    pub fn new(m: Mat4) -> Result<Self, ModelError> {
        Self::with_tolerances(m, &Tolerances::STRICT)
    }

    pub fn with_tolerances(m: Mat4, tol: &Tolerances) -> Result<Self, ModelError> {
        let phys = Physicality::of(&m);
        if phys.within(tol) {
            Ok(DensityMatrix(m))
        } else {
            Err(ModelError::NonPhysical(phys))
        }
    }

    /// Wraps without checks. Intended for integrator output that is checked
    /// separately.
    pub fn from_matrix_unchecked(m: Mat4) -> Self {
        DensityMatrix(m)
    }

    pub fn basis_state(index: usize) -> Self {
        let mut m = Mat4::zeros();
        m[(index, index)] = ONE;
        DensityMatrix(m)
    }

    /// Uncoupled ground state (index 0).
    pub fn ground() -> Self {
        Self::basis_state(0)
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity() * C64::new(0.25, 0.0))
    }

    /// `|ψ⟩⟨ψ|` after normalizing ψ.
    pub fn pure(psi: &[C64; 4]) -> Self {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v = nalgebra::Vector4::from_iterator(psi.iter().map(|z| z / norm));
        DensityMatrix(v * v.adjoint())
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn physicality(&self) -> Physicality {
        Physicality::of(&self.0)
    }

    /// Hermitian part rescaled to unit trace.
    pub fn normalized(m: &Mat4) -> Self {
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let tr = h.trace().re;
        DensityMatrix(h / C64::new(tr, 0.0))
    }

    pub fn population(&self, i: usize) -> f64 {
        self.0[(i, i)].re
    }

    /// `⟨ψ|ρ|ψ⟩` for a basis state.
    pub fn fidelity_with_basis(&self, i: usize) -> f64 {
        self.population(i)
    }

    /// `½ ‖ρ − σ‖₁`
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let d = self.0 - other.0;
        let h = (d + d.adjoint()) * C64::new(0.5, 0.0);
        0.5 * SymmetricEigen::new(h).eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        (self.0 - other.0).norm()
    }

    /// `(U₁⊗U₂) ρ (U₁⊗U₂)†`
    pub fn local_rotate(&self, u1: &Matrix2<C64>, u2: &Matrix2<C64>) -> Self {
        let u = kron2(u1, u2);
        DensityMatrix(u * self.0 * u.adjoint())
    }
}
