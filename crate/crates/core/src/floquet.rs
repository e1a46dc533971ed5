//! Non-resonant perturbative oracle in the tunnel splittings Δ_q.
//!
//! To zeroth order in Δ the basis vectors are the Floquet modes of the
//! driven Hamiltonian. The first mode dressed to second order, the series
//! `C_k` and the concurrence `C(t) = 2Δ₁Δ₂|Σ_k C_k e^{ik(ωt−φ₀)}|` follow from
//! Bessel expansions of the drive phase `e^{i(A/ω) sin ωt}`. Every series is
//! truncated at `|k| ≤ k_max`; denominators closer to zero than `denom_guard`
//! mark the point as resonant and are reported instead of evaluated.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bessel::BesselTable;
use crate::error::SeriesError;
use crate::model::{SystemParams, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesConfig {
    /// Truncation order; `None` picks `⌈A/ω⌉ + 20`.
    pub k_max: Option<usize>,
    /// Smallest admissible |denominator|; `None` picks `0.05 ω`.
    pub denom_guard: Option<f64>,
    /// Quadrature nodes for the phase average.
    pub n_quad: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            k_max: None,
            denom_guard: None,
            n_quad: 2048,
        }
    }
}

impl SeriesConfig {
    fn min_order(p: &SystemParams) -> usize {
        (p.drive.amplitude / p.drive.omega).ceil() as usize
    }

    pub fn k_max_for(&self, p: &SystemParams) -> usize {
        self.k_max.unwrap_or(Self::min_order(p) + 20)
    }

    pub fn guard_for(&self, p: &SystemParams) -> f64 {
        self.denom_guard.unwrap_or(0.05 * p.drive.omega)
    }

    pub fn validate(&self, p: &SystemParams) -> Result<(), SeriesError> {
        let bad = |m: String| Err(SeriesError::InvalidConfig(m));
        let k = self.k_max_for(p);
        if k < Self::min_order(p) + 10 {
            return bad(format!(
                "k_max = {k} is below ⌈A/ω⌉ + 10 = {}",
                Self::min_order(p) + 10
            ));
        }
        let guard = self.guard_for(p);
        if !(guard > 0.0 && guard.is_finite()) {
            return bad(format!("denom_guard must be positive, got {guard}"));
        }
        if self.n_quad < 16 {
            return bad(format!("n_quad = {} is too small", self.n_quad));
        }
        Ok(())
    }
}

/// Sign of the coupling in a single-qubit condition `ε_q ± g + kω ≈ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceKind {
    /// `ε_q ± g + kω ≈ 0`; `qubit` is 1 or 2.
    SingleQubit { qubit: u8, branch: Branch },
    /// `ε₁ + ε₂ + kω ≈ 0`
    TwoQubit,
}

impl ResonanceKind {
    /// Short label used in CSV output: `q1+g`, `q2-g`, `two`.
    pub fn label(&self) -> String {
        match self {
            ResonanceKind::SingleQubit { qubit, branch } => {
                let s = if *branch == Branch::Plus { '+' } else { '-' };
                format!("q{qubit}{s}g")
            }
            ResonanceKind::TwoQubit => "two".to_string(),
        }
    }

    /// Conditions with `−g` are not among the conditions that show up in the
    /// non-resonant series itself.
    pub fn is_extended(&self) -> bool {
        matches!(
            self,
            ResonanceKind::SingleQubit {
                branch: Branch::Minus,
                ..
            }
        )
    }

    /// Residual `ε_q ± g` or `ε₁ + ε₂` at `k = 0`.
    pub fn offset(&self, p: &SystemParams) -> f64 {
        match *self {
            ResonanceKind::SingleQubit { qubit, branch } => {
                let eps = p.qubits[(qubit - 1) as usize].eps;
                match branch {
                    Branch::Plus => eps + p.g,
                    Branch::Minus => eps - p.g,
                }
            }
            ResonanceKind::TwoQubit => p.qubits[0].eps + p.qubits[1].eps,
        }
    }

    pub const ALL: [ResonanceKind; 5] = [
        ResonanceKind::SingleQubit {
            qubit: 1,
            branch: Branch::Plus,
        },
        ResonanceKind::SingleQubit {
            qubit: 2,
            branch: Branch::Plus,
        },
        ResonanceKind::TwoQubit,
        ResonanceKind::SingleQubit {
            qubit: 1,
            branch: Branch::Minus,
        },
        ResonanceKind::SingleQubit {
            qubit: 2,
            branch: Branch::Minus,
        },
    ];
}

/// A resonance condition evaluated at its nearest photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceInfo {
    pub kind: ResonanceKind,
    pub k: i64,
    /// Residual `offset + kω`.
    pub detuning: f64,
}

impl ResonanceInfo {
    /// Nearest photon number for one condition (ties toward smaller |k|).
    pub fn nearest(kind: ResonanceKind, p: &SystemParams) -> Self {
        let w = p.drive.omega;
        let offset = kind.offset(p);
        let k = nearest_integer(-offset / w);
        ResonanceInfo {
            kind,
            k,
            detuning: offset + k as f64 * w,
        }
    }
}

impl fmt::Display for ResonanceInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} k={} detuning={:.6e}", self.kind.label(), self.k, self.detuning)
    }
}

/// Rounds to the nearest integer, breaking exact ties toward zero.
pub(crate) fn nearest_integer(x: f64) -> i64 {
    let lo = x.floor();
    let hi = lo + 1.0;
    let pick = match (x - lo).partial_cmp(&(hi - x)) {
        Some(Ordering::Less) => lo,
        Some(Ordering::Greater) => hi,
        _ => {
            if lo.abs() <= hi.abs() {
                lo
            } else {
                hi
            }
        }
    };
    pick as i64
}

/// Quasienergies of the uncoupled-tunnelling problem, reduced into
/// `(−ω/2, ω/2]`.
pub fn quasienergies_zeroth(p: &SystemParams) -> [f64; 4] {
    let raw = quasienergies_unreduced(p);
    raw.map(|e| reduce_quasienergy(e, p.drive.omega))
}

pub fn quasienergies_unreduced(p: &SystemParams) -> [f64; 4] {
    let (e1, e2, g) = (p.qubits[0].eps, p.qubits[1].eps, p.g);
    [
        -(e1 + e2 + g) / 2.0,
        -(e1 - e2 - g) / 2.0,
        (e1 - e2 + g) / 2.0,
        (e1 + e2 - g) / 2.0,
    ]
}

pub fn reduce_quasienergy(e: f64, omega: f64) -> f64 {
    // e − ω·⌈e/ω − ½⌉ lies in (−ω/2, ω/2]
    e - omega * (e / omega - 0.5).ceil()
}

/// A truncated series value with an estimate of the discarded tail (the
/// magnitude of the outermost retained terms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated {
    pub value: f64,
    pub tail: f64,
}

/// First perturbed Floquet mode harmonic `|u₁ₖ⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetModeCoeffs {
    pub k: i64,
    pub vector: [f64; 4],
}

/// Precomputed series data at one parameter point.
#[derive(Debug, Clone)]
pub struct NonresSeries {
    params: SystemParams,
    k_max: i64,
    n_quad: usize,
    bessel: BesselTable,
    /// `lambda[q][k + k_max]`
    lambda: [Vec<f64>; 2],
    /// `c[k + k_max]`
    c: Vec<f64>,
}

impl NonresSeries {
    pub fn new(p: &SystemParams, cfg: &SeriesConfig) -> Result<Self, SeriesError> {
        cfg.validate(p)?;
        let k_max = cfg.k_max_for(p) as i64;
        let guard = cfg.guard_for(p);
        let w = p.drive.omega;
        let bessel = BesselTable::new(p.drive.amplitude / w, 3 * k_max as usize + 2);

        let mut lambda = [Vec::new(), Vec::new()];
        for (q, lam) in lambda.iter_mut().enumerate() {
            let kind = ResonanceKind::SingleQubit {
                qubit: q as u8 + 1,
                branch: Branch::Plus,
            };
            let offset = kind.offset(p);
            for k in -k_max..=k_max {
                let d = offset + k as f64 * w;
                check_guard(kind, k, d, guard)?;
                lam.push(bessel.get(k) / (2.0 * d));
            }
        }

        let mut series = NonresSeries {
            params: *p,
            k_max,
            n_quad: cfg.n_quad,
            bessel,
            lambda,
            c: Vec::new(),
        };
        let offset = ResonanceKind::TwoQubit.offset(p);
        let mut c = Vec::with_capacity(2 * k_max as usize + 1);
        for k in -k_max..=k_max {
            let d = offset + k as f64 * w;
            check_guard(ResonanceKind::TwoQubit, k, d, guard)?;
            let mut s = 0.0;
            for n in -k_max..=k_max {
                s += (series.lambda(1, n) + series.lambda(2, n)) * series.j(k - n) / (2.0 * d)
                    - series.lambda(1, n) * series.lambda(2, k - n);
            }
            c.push(s);
        }
        series.c = c;
        Ok(series)
    }

    pub fn k_max(&self) -> i64 {
        self.k_max
    }

    fn j(&self, n: i64) -> f64 {
        self.bessel.get(n)
    }

    /// `λ_qk = J_k(A/ω) / (2(ε_q + g + kω))`; zero outside the truncation.
    pub fn lambda(&self, q: usize, k: i64) -> f64 {
        if k.abs() > self.k_max {
            0.0
        } else {
            self.lambda[q - 1][(k + self.k_max) as usize]
        }
    }

    /// `χ_qk = Σ_n J_{n+k}(A/ω) λ_qn`
    pub fn chi(&self, q: usize, k: i64) -> Truncated {
        let km = self.k_max;
        let value = (-km..=km).map(|n| self.j(n + k) * self.lambda(q, n)).sum();
        let tail = (self.j(km + k) * self.lambda(q, km)).abs()
            + (self.j(-km + k) * self.lambda(q, -km)).abs();
        Truncated { value, tail }
    }

    /// `C_k`; zero outside the truncation.
    pub fn coeff(&self, k: i64) -> f64 {
        if k.abs() > self.k_max {
            0.0
        } else {
            self.c[(k + self.k_max) as usize]
        }
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        (-self.k_max..=self.k_max).map(move |k| (k, self.coeff(k)))
    }

    fn amplitude(&self, alpha: f64) -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for (k, c) in self.coefficients() {
            s += C64::from_polar(c, k as f64 * alpha);
        }
        s.norm()
    }

    pub fn prefactor(&self) -> f64 {
        2.0 * self.params.qubits[0].delta * self.params.qubits[1].delta
    }

    /// `C(t) = 2Δ₁Δ₂ |Σ_k C_k e^{ik(ωt−φ₀)}|`
    pub fn concurrence_at(&self, t: f64) -> f64 {
        let d = &self.params.drive;
        self.prefactor() * self.amplitude(d.omega * t - d.phi0)
    }

    /// Phase average `(Δ₁Δ₂/π) ∫₀^{2π} |Σ_k C_k e^{ikα}| dα` by the trapezoid
    /// rule on a uniform periodic grid.
    pub fn averaged(&self) -> f64 {
        let n = self.n_quad;
        let mean = (0..n)
            .map(|i| self.amplitude(2.0 * PI * i as f64 / n as f64))
            .sum::<f64>()
            / n as f64;
        self.prefactor() * mean
    }

    /// `|u₁ₖ⟩` including the second-order normalization of the first
    /// component and the two-photon admixture in the fourth.
    pub fn mode_u1(&self, k: i64, cfg: &SeriesConfig) -> Result<FloquetModeCoeffs, SeriesError> {
        let p = &self.params;
        let (d1, d2) = (p.qubits[0].delta, p.qubits[1].delta);
        let (d1s, d2s) = (d1 * d1, d2 * d2);
        let w = p.drive.omega;
        let km = self.k_max;

        let norm: f64 = (-km..=km)
            .map(|n| d1s * self.lambda(1, n).powi(2) + d2s * self.lambda(2, n).powi(2))
            .sum();
        let mut shift = 0.0;
        for m in (-km..=km).filter(|&m| m != 0) {
            shift += self.j(k - m) * (d1s * self.chi(1, -m).value + d2s * self.chi(2, -m).value)
                / (m as f64 * w);
        }
        let first = self.j(k) * (1.0 - 0.5 * norm) + 0.5 * shift;

        let guard = cfg.guard_for(p);
        let offset = ResonanceKind::TwoQubit.offset(p);
        let mut fourth = 0.0;
        for m in -km..=km {
            let d = offset + m as f64 * w;
            check_guard(ResonanceKind::TwoQubit, m, d, guard)?;
            let jm = self.j(m - k);
            if jm == 0.0 {
                continue;
            }
            let inner: f64 = (-km..=km)
                .map(|n| (self.lambda(1, n) + self.lambda(2, n)) * self.j(m - n))
                .sum();
            fourth += jm * inner / d;
        }
        fourth *= 0.5 * d1 * d2;

        Ok(FloquetModeCoeffs {
            k,
            vector: [first, d2 * self.lambda(2, k), d1 * self.lambda(1, k), fourth],
        })
    }
}

fn check_guard(kind: ResonanceKind, k: i64, denominator: f64, guard: f64) -> Result<(), SeriesError> {
    if denominator.abs() <= guard {
        Err(SeriesError::ResonantDenominator(ResonanceInfo {
            kind,
            k,
            detuning: denominator,
        }))
    } else {
        Ok(())
    }
}

pub fn lambda_qk(q: usize, k: i64, p: &SystemParams, cfg: &SeriesConfig) -> Result<f64, SeriesError> {
    let kind = ResonanceKind::SingleQubit {
        qubit: q as u8,
        branch: Branch::Plus,
    };
    let d = kind.offset(p) + k as f64 * p.drive.omega;
    check_guard(kind, k, d, cfg.guard_for(p))?;
    let z = p.drive.amplitude / p.drive.omega;
    Ok(crate::bessel::bessel_j(k, z) / (2.0 * d))
}

pub fn chi_qk(q: usize, k: i64, p: &SystemParams, cfg: &SeriesConfig) -> Result<Truncated, SeriesError> {
    Ok(NonresSeries::new(p, cfg)?.chi(q, k))
}

pub fn floquet_mode_u1(k: i64, p: &SystemParams, cfg: &SeriesConfig) -> Result<FloquetModeCoeffs, SeriesError> {
    NonresSeries::new(p, cfg)?.mode_u1(k, cfg)
}

pub fn coeff_ck(k: i64, p: &SystemParams, cfg: &SeriesConfig) -> Result<f64, SeriesError> {
    Ok(NonresSeries::new(p, cfg)?.coeff(k))
}

pub fn concurrence_time_nonres(t: f64, p: &SystemParams, cfg: &SeriesConfig) -> Result<f64, SeriesError> {
    Ok(NonresSeries::new(p, cfg)?.concurrence_at(t))
}

pub fn averaged_concurrence_nonres(p: &SystemParams, cfg: &SeriesConfig) -> Result<f64, SeriesError> {
    Ok(NonresSeries::new(p, cfg)?.averaged())
}

/// Every resonance condition at its nearest photon number within `window`,
/// keeping those with `|detuning| < denom_guard · scale` plus the overall
/// closest one, sorted by `|detuning|`.
pub fn classify_resonances(
    p: &SystemParams,
    cfg: &SeriesConfig,
    window: std::ops::RangeInclusive<i64>,
    scale: f64,
) -> Vec<ResonanceInfo> {
    let w = p.drive.omega;
    let mut all: Vec<ResonanceInfo> = ResonanceKind::ALL
        .iter()
        .map(|&kind| {
            let offset = kind.offset(p);
            let k = nearest_integer(-offset / w).clamp(*window.start(), *window.end());
            ResonanceInfo {
                kind,
                k,
                detuning: offset + k as f64 * w,
            }
        })
        .collect();
    all.sort_by(|a, b| a.detuning.abs().total_cmp(&b.detuning.abs()));
    let limit = cfg.guard_for(p) * scale;
    let mut out: Vec<ResonanceInfo> = all
        .iter()
        .enumerate()
        .filter(|(i, r)| *i == 0 || r.detuning.abs() < limit)
        .map(|(_, r)| *r)
        .collect();
    out.dedup();
    out
}
