//! Resonant oracle near the two-qubit condition `ε₁ + ε₂ + Kω ≈ 0`.
//!
//! Second order in the tunnel splittings, a rotating-wave approximation and a
//! canonical rotation by `Θ(t) = δt + 2(A/ω) sin φ₀ − Kφ₀` reduce the master
//! equation to a time-independent one with Hamiltonian
//!
//! ```text
//! [h11 − δ/2   0    0    h14     ]
//! [0          h22   0    0       ]
//! [0           0   h33   0       ]
//! [h14         0    0    h44+δ/2 ]
//! ```
//!
//! whose unique steady state is known in closed form. This module evaluates
//! the h-elements, that steady state, its reconstruction in the lab frame,
//! the resonant concurrence and the width of the zero-concurrence window.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::Serialize;

use crate::bessel::BesselTable;
use crate::dynamics::{superoperator, unvectorize, vectorize, Superop};
use crate::error::{RwaError, SeriesError};
use crate::floquet::{nearest_integer, Branch, ResonanceInfo, ResonanceKind, SeriesConfig};
use crate::model::{
    kron2, lindblad_term, max_abs, ChannelRates, DensityMatrix, Mat4, SystemParams, C64, ONE,
    ZERO,
};

/// `K = argmin_K |ε₁ + ε₂ + Kω|` (ties toward smaller |K|) and `δ = ε₁ + ε₂ + Kω`.
#[allow(non_snake_case)]
pub fn select_K12(p: &SystemParams) -> (i64, f64) {
    let s = p.qubits[0].eps + p.qubits[1].eps;
    let w = p.drive.omega;
    let k = nearest_integer(-s / w);
    (k, s + k as f64 * w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RwaElements {
    pub h11: f64,
    pub h22: f64,
    pub h33: f64,
    pub h44: f64,
    pub h14: f64,
    pub k12: i64,
    pub delta12: f64,
}

pub fn rwa_elements(p: &SystemParams, cfg: &SeriesConfig) -> Result<RwaElements, SeriesError> {
    cfg.validate(p)?;
    let km = cfg.k_max_for(p) as i64;
    let guard = cfg.guard_for(p);
    let w = p.drive.omega;
    let (k12, delta12) = select_K12(p);
    let j = BesselTable::new(p.drive.amplitude / w, km as usize + k12.unsigned_abs() as usize + 2);
    let (d1s, d2s) = (p.qubits[0].delta.powi(2), p.qubits[1].delta.powi(2));
    let (e1, e2, g) = (p.qubits[0].eps, p.qubits[1].eps, p.g);

    let denom = |qubit: u8, branch: Branch, k: i64| -> Result<f64, SeriesError> {
        let kind = ResonanceKind::SingleQubit { qubit, branch };
        let d = kind.offset(p) + k as f64 * w;
        if d.abs() <= guard {
            Err(SeriesError::ResonantDenominator(ResonanceInfo {
                kind,
                k,
                detuning: d,
            }))
        } else {
            Ok(d)
        }
    };

    let (mut h11, mut h22, mut h33, mut h44, mut s14) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in -km..=km {
        let a1p = denom(1, Branch::Plus, k)?;
        let a1m = denom(1, Branch::Minus, k)?;
        let a2p = denom(2, Branch::Plus, k)?;
        let a2m = denom(2, Branch::Minus, k)?;
        let jk2 = j.get(k).powi(2);
        h11 -= 0.25 * jk2 * (d1s / a1p + d2s / a2p);
        h22 -= 0.25 * jk2 * (d1s / a1m - d2s / a2p);
        h33 += 0.25 * jk2 * (d1s / a1p - d2s / a2m);
        h44 += 0.25 * jk2 * (d1s / a1m + d2s / a2m);
        let kf = k as f64 * w;
        s14 += j.get(k)
            * j.get(k12 - k)
            * (1.0 / ((e1 + kf).powi(2) - g * g) + 1.0 / ((e2 + kf).powi(2) - g * g));
    }
    let h14 = p.qubits[0].delta * p.qubits[1].delta * g / 4.0 * s14;
    Ok(RwaElements {
        h11,
        h22,
        h33,
        h44,
        h14,
        k12,
        delta12,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RwaSteadyState {
    pub r11: f64,
    pub r22: f64,
    pub r33: f64,
    pub r44: f64,
    #[serde(skip)]
    pub r14: C64,
    #[serde(skip)]
    pub hg: C64,
    pub z: f64,
    pub elements: RwaElements,
}

impl RwaSteadyState {
    /// State in the rotated frame as a 4×4 matrix.
    pub fn matrix(&self) -> Mat4 {
        let mut m = Mat4::zeros();
        m[(0, 0)] = C64::new(self.r11, 0.0);
        m[(1, 1)] = C64::new(self.r22, 0.0);
        m[(2, 2)] = C64::new(self.r33, 0.0);
        m[(3, 3)] = C64::new(self.r44, 0.0);
        m[(0, 3)] = self.r14;
        m[(3, 0)] = self.r14.conj();
        m
    }

    pub fn concurrence(&self) -> f64 {
        (2.0 * (self.r14.norm() - (self.r22 * self.r33).sqrt())).max(0.0)
    }
}

/// Closed-form stationary state for given elements and rates.
pub fn steady_state_from(elements: &RwaElements, rates: &ChannelRates) -> Result<RwaSteadyState, RwaError> {
    let (g1, g2) = (rates.relax[0], rates.relax[1]);
    let (e1, e2) = (rates.excite[0], rates.excite[1]);
    let (f1, f2) = (rates.dephase[0], rates.dephase[1]);
    if !(g1 + e1 > 0.0 && g2 + e2 > 0.0) {
        return Err(RwaError::InsufficientDissipation);
    }
    let h14 = elements.h14;
    let hg = C64::new(
        2.0 * f1 + (g1 + e1) / 2.0 + 2.0 * f2 + (g2 + e2) / 2.0,
        -(elements.h11 - elements.h44 - elements.delta12),
    );
    let s = g1 + e1 + g2 + e2;
    let hg2 = hg.norm_sqr();
    let coh = 2.0 * h14 * h14 * hg.re / s;
    let z = (g1 + e1) * (g2 + e2) * hg2 + 2.0 * h14 * h14 * s * hg.re;
    Ok(RwaSteadyState {
        r11: ((e1 + g2) * (g1 + e2) * coh + g1 * g2 * hg2) / z,
        r22: ((g1 + e2).powi(2) * coh + g1 * e2 * hg2) / z,
        r33: ((e1 + g2).powi(2) * coh + e1 * g2 * hg2) / z,
        r44: ((e1 + g2) * (g1 + e2) * coh + e1 * e2 * hg2) / z,
        r14: C64::new(0.0, h14 * (g1 * g2 - e1 * e2) / z) * hg,
        hg,
        z,
        elements: *elements,
    })
}

pub fn steady_state_rwa(p: &SystemParams, cfg: &SeriesConfig) -> Result<RwaSteadyState, RwaError> {
    let elements = rwa_elements(p, cfg)?;
    steady_state_from(&elements, &p.rates())
}

/// Stationary Hamiltonian of the rotated frame.
pub fn rwa_hamiltonian(e: &RwaElements) -> Mat4 {
    let mut h = Mat4::zeros();
    h[(0, 0)] = C64::new(e.h11 - e.delta12 / 2.0, 0.0);
    h[(1, 1)] = C64::new(e.h22, 0.0);
    h[(2, 2)] = C64::new(e.h33, 0.0);
    h[(3, 3)] = C64::new(e.h44 + e.delta12 / 2.0, 0.0);
    h[(0, 3)] = C64::new(e.h14, 0.0);
    h[(3, 0)] = C64::new(e.h14, 0.0);
    h
}

/// Jump operators and rates of the RWA dissipator. The raising operator of
/// the zeroth-order frame is `σ₊ = |0⟩⟨1|` (toward the σ_z = +1 level, which
/// is the lower one for positive bias).
pub fn rwa_channels(rates: &ChannelRates) -> Vec<(f64, Mat4)> {
    let id = Matrix2::<C64>::identity();
    let sz = Matrix2::new(ONE, ZERO, ZERO, -ONE);
    let sp = Matrix2::new(ZERO, ONE, ZERO, ZERO);
    let sm = sp.transpose();
    let (g1, g2) = (rates.relax[0], rates.relax[1]);
    let (e1, e2) = (rates.excite[0], rates.excite[1]);
    let (f1, f2) = (rates.dephase[0], rates.dephase[1]);
    vec![
        (f1, kron2(&sz, &id)),
        (f2, kron2(&id, &sz)),
        (g1 / 2.0, kron2(&sp, &id)),
        (e1 / 2.0, kron2(&sm, &id)),
        (g2 / 2.0, kron2(&id, &sp)),
        (e2 / 2.0, kron2(&id, &sm)),
        (g1 / 2.0, kron2(&sp, &sz)),
        (e1 / 2.0, kron2(&sm, &sz)),
        (g2 / 2.0, kron2(&sz, &sp)),
        (e2 / 2.0, kron2(&sz, &sm)),
    ]
}

/// Explicit Liouvillian of the stationary rotated-frame master equation.
pub fn rwa_liouvillian(e: &RwaElements, rates: &ChannelRates) -> Superop {
    let h = rwa_hamiltonian(e);
    let channels = rwa_channels(rates);
    let minus_i = C64::new(0.0, -1.0);
    superoperator(|x| {
        let mut out = (h * x - x * h) * minus_i;
        for (rate, a) in &channels {
            if *rate != 0.0 {
                out += lindblad_term(a, x) * C64::new(*rate, 0.0);
            }
        }
        out
    })
}

/// `max |L ρ̄|` for the closed-form state under the explicit Liouvillian.
pub fn stationarity_residual(ss: &RwaSteadyState, e: &RwaElements, rates: &ChannelRates) -> f64 {
    let l = rwa_liouvillian(e, rates);
    max_abs(&unvectorize(&(l * vectorize(&ss.matrix()))))
}

/// Dimension of the numerical kernel of the RWA Liouvillian, counting
/// singular values below `rel_tol` times the largest.
pub fn kernel_dimension(e: &RwaElements, rates: &ChannelRates, rel_tol: f64) -> usize {
    let sv = rwa_liouvillian(e, rates).singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s <= rel_tol * top).count()
}

/// Lab-frame steady state at time `t`: the coherence acquires the phase
/// `φ = Kωt − 2(A/ω) sin(ωt − φ₀) − Kφ₀`.
pub fn reconstruct_original_frame(ss: &RwaSteadyState, p: &SystemParams, t: f64) -> DensityMatrix {
    let d = &p.drive;
    let k = ss.elements.k12 as f64;
    let phi = k * d.omega * t - 2.0 * (d.amplitude / d.omega) * (d.omega * t - d.phi0).sin() - k * d.phi0;
    let mut m = ss.matrix();
    m[(0, 3)] = ss.r14 * C64::from_polar(1.0, -phi);
    m[(3, 0)] = m[(0, 3)].conj();
    DensityMatrix::from_matrix_unchecked(m)
}

/// `max(0, 2(|r₁₄| − √(r₂₂ r₃₃)))`
pub fn concurrence_resonant(p: &SystemParams, cfg: &SeriesConfig) -> Result<f64, RwaError> {
    Ok(steady_state_rwa(p, cfg)?.concurrence())
}

/// Width in ε₁ of the zero-concurrence window around the two-qubit
/// resonance under the linkage `ε₂ = s ε₁`.
pub fn dip_width(p: &SystemParams, cfg: &SeriesConfig, s: f64) -> Result<f64, RwaError> {
    let e = rwa_elements(p, cfg)?;
    dip_width_from(e.h14, &p.rates(), s)
}

pub fn dip_width_from(h14: f64, rates: &ChannelRates, s: f64) -> Result<f64, RwaError> {
    let gamma = rates.relax[0] + rates.relax[1];
    let dephase = rates.dephase[0] + rates.dephase[1];
    if gamma == 0.0 {
        return Err(RwaError::NoEntanglementWindow);
    }
    let arg = (2.0 * h14 / gamma).powi(2) - 1.0;
    if arg < 0.0 {
        return Err(RwaError::NoDip {
            two_h14: 2.0 * h14.abs(),
            gamma_sum: gamma,
        });
    }
    Ok(2.0 / (1.0 + s) * (gamma / 2.0 + 2.0 * dephase) * arg.sqrt())
}

/// Which oracle covers a parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Applicability {
    /// No resonance within the guard: use the Bessel series.
    NonResonant,
    /// Isolated two-qubit resonance.
    Resonant { k12: i64, delta12: f64 },
    /// Single-qubit resonance, alone or overlapping the two-qubit one.
    OutOfTheory(ResonanceInfo),
}

/// The RWA oracle applies when `|δ₁₂⁺|` is below ten times the largest rate
/// or within the series guard, provided no single-qubit condition is also
/// within the guard.
pub fn applicability(p: &SystemParams, cfg: &SeriesConfig) -> Applicability {
    let guard = cfg.guard_for(p);
    let (k12, delta12) = select_K12(p);
    let near_two = delta12.abs() < 10.0 * p.rates().max_rate() || delta12.abs() <= guard;
    let single = ResonanceKind::ALL
        .iter()
        .filter(|k| **k != ResonanceKind::TwoQubit)
        .map(|&k| ResonanceInfo::nearest(k, p))
        .filter(|r| r.detuning.abs() <= guard)
        .min_by(|a, b| a.detuning.abs().total_cmp(&b.detuning.abs()));
    match (near_two, single) {
        (_, Some(r)) if near_two || !r.kind.is_extended() => Applicability::OutOfTheory(r),
        (true, None) => Applicability::Resonant { k12, delta12 },
        _ => Applicability::NonResonant,
    }
}

/// Result of the ξ/Ξ expansion cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XiReport {
    /// Fourier coefficients of ξ_q^± against `J_k e^{i(A/ω) sin φ₀ − ikφ₀}`.
    pub coefficient_deviation: f64,
    /// Quadrature of Ξ_q^±(t) against the term-wise integrated series.
    pub integral_deviation: f64,
    /// h-elements rebuilt from the numerical coefficients, relative to the
    /// largest element.
    pub element_deviation: f64,
    pub max_deviation: f64,
}

/// Numerically expands `ξ_q^±(t) = exp[i(ε_q ± g)t + i(A/ω)(sin(ωt−φ₀) + sin φ₀)]`
/// and rebuilds the secular h-elements from the numerical Fourier
/// coefficients. Diagnostic only.
pub fn validate_xi_integrals(p: &SystemParams, cfg: &SeriesConfig, t_max: f64) -> Result<XiReport, SeriesError> {
    let reference = rwa_elements(p, cfg)?;
    let km = cfg.k_max_for(p) as i64;
    let w = p.drive.omega;
    let z = p.drive.amplitude / w;
    let phi0 = p.drive.phi0;
    let period = 2.0 * PI / w;
    let (e1, e2, g) = (p.qubits[0].eps, p.qubits[1].eps, p.g);
    let offsets = [[e1 + g, e1 - g], [e2 + g, e2 - g]];
    let xi = |offset: f64, t: f64| {
        C64::from_polar(1.0, offset * t + z * ((w * t - phi0).sin() + phi0.sin()))
    };

    // Fourier coefficients of the periodic part ξ e^{−i(ε±g)t}; the
    // trapezoid rule is exact up to aliasing for these band-limited samples.
    let n = (8 * km as usize).max(256);
    let bessel = BesselTable::new(z, km as usize + reference.k12.unsigned_abs() as usize + 2);
    let mut coeffs = vec![ZERO; (2 * km + 1) as usize];
    let mut coefficient_deviation: f64 = 0.0;
    for (idx, k) in (-km..=km).enumerate() {
        for row in &offsets {
            for &off in row {
                let c: C64 = (0..n)
                    .map(|i| {
                        let t = period * i as f64 / n as f64;
                        xi(off, t) * C64::from_polar(1.0, -(off + k as f64 * w) * t)
                    })
                    .sum::<C64>()
                    / n as f64;
                let want = C64::from_polar(bessel.get(k), z * phi0.sin() - k as f64 * phi0);
                coefficient_deviation = coefficient_deviation.max((c - want).norm());
                coeffs[idx] = c;
            }
        }
    }
    let c = |k: i64| -> C64 {
        if k.abs() > km {
            ZERO
        } else {
            coeffs[(k + km) as usize]
        }
    };

    // Ξ(t) by composite Gauss–Legendre against the integrated series
    let gl_x = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    let gl_w = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    let mut integral_deviation: f64 = 0.0;
    let sub = period / 64.0;
    let pieces = (t_max / sub).ceil().max(1.0) as usize;
    for row in &offsets {
        for &off in row {
            let mut acc = ZERO;
            for piece in 0..pieces {
                let (a, b) = (piece as f64 * sub, (piece as f64 + 1.0) * sub);
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                for (x, wt) in gl_x.iter().zip(gl_w) {
                    acc += xi(off, mid + half * x) * (wt * half);
                }
                if (piece + 1) % 64 == 0 || piece + 1 == pieces {
                    let t = b;
                    let series: C64 = (-km..=km)
                        .map(|k| {
                            let a_k = off + k as f64 * w;
                            c(k) * (C64::from_polar(1.0, a_k * t) - ONE) / C64::new(0.0, a_k)
                        })
                        .sum();
                    integral_deviation = integral_deviation.max((acc - series).norm() / (1.0 + series.norm()));
                }
            }
        }
    }

    // secular parts rebuilt from the numerical coefficients
    let (d1s, d2s) = (p.qubits[0].delta.powi(2), p.qubits[1].delta.powi(2));
    let mut h = [0.0f64; 4];
    let mut s14 = ZERO;
    let k12 = reference.k12;
    for k in -km..=km {
        let ck2 = c(k).norm_sqr();
        let kf = k as f64 * w;
        let (a1p, a1m) = (offsets[0][0] + kf, offsets[0][1] + kf);
        let (a2p, a2m) = (offsets[1][0] + kf, offsets[1][1] + kf);
        h[0] -= 0.25 * ck2 * (d1s / a1p + d2s / a2p);
        h[1] -= 0.25 * ck2 * (d1s / a1m - d2s / a2p);
        h[2] += 0.25 * ck2 * (d1s / a1p - d2s / a2m);
        h[3] += 0.25 * ck2 * (d1s / a1m + d2s / a2m);
        s14 += c(k) * c(k12 - k) * (1.0 / ((e1 + kf).powi(2) - g * g) + 1.0 / ((e2 + kf).powi(2) - g * g));
    }
    let frame = C64::from_polar(1.0, -(2.0 * z * phi0.sin() - k12 as f64 * phi0));
    let h14 = s14 * frame * (p.qubits[0].delta * p.qubits[1].delta * g / 4.0);
    let want = [reference.h11, reference.h22, reference.h33, reference.h44];
    let scale = want
        .iter()
        .chain(std::iter::once(&reference.h14))
        .fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
    let mut element_deviation: f64 = (h14 - C64::new(reference.h14, 0.0)).norm() / scale;
    for (a, b) in h.iter().zip(want) {
        element_deviation = element_deviation.max((a - b).abs() / scale);
    }
    Ok(XiReport {
        coefficient_deviation,
        integral_deviation,
        element_deviation,
        max_deviation: coefficient_deviation.max(integral_deviation).max(element_deviation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriveParams, QubitParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference(gamma: f64) -> SystemParams {
        let mut q1 = QubitParams::new(0.1, 3.331);
        let mut q2 = QubitParams::new(0.15, 6.662);
        q1.gamma_relax = gamma;
        q2.gamma_relax = gamma;
        let mut p = SystemParams::new(
            q1,
            q2,
            0.15,
            DriveParams {
                amplitude: 5.0,
                omega: 1.0,
                phi0: 0.0,
            },
        );
        p.temperature_mk = 30.0;
        p
    }

    fn random_rates(rng: &mut ChaCha8Rng) -> ChannelRates {
        let mut r = || rng.gen_range(1e-5..1e-2);
        ChannelRates {
            relax: [r(), r()],
            excite: [r(), r()],
            dephase: [r(), r()],
        }
    }

    #[test]
    fn k12_selection() {
        let p = reference(1e-4);
        let (k, d) = select_K12(&p);
        assert_eq!(k, -10);
        assert!((d + 0.007).abs() < 1e-12);
        let mut q = p;
        q.qubits[0].eps = 0.2;
        q.qubits[1].eps = 0.3;
        assert_eq!(select_K12(&q), (0, 0.5));
        q.qubits[0].eps = 3.0;
        q.qubits[1].eps = 6.0;
        assert_eq!(select_K12(&q), (-9, 0.0));
    }

    #[test]
    fn elements_without_coupling_or_drive() {
        let cfg = SeriesConfig::default();
        let mut p = reference(1e-4);
        p.g = 0.0;
        assert_eq!(rwa_elements(&p, &cfg).unwrap().h14, 0.0);

        let mut p = reference(1e-4);
        p.drive.amplitude = 0.0;
        p.qubits[0].eps = 0.2;
        p.qubits[1].eps = 0.25;
        let e = rwa_elements(&p, &cfg).unwrap();
        assert_eq!(e.k12, 0);
        let (d1, d2, e1, e2, g) = (0.1, 0.15, 0.2, 0.25, 0.15);
        let h14 = d1 * d2 * g / 4.0 * (1.0 / (e1 * e1 - g * g) + 1.0 / (e2 * e2 - g * g));
        let h11 = -0.25 * (d1 * d1 / (e1 + g) + d2 * d2 / (e2 + g));
        assert!((e.h14 - h14).abs() < 1e-16);
        assert!((e.h11 - h11).abs() < 1e-16);
    }

    #[test]
    fn reference_elements_golden() {
        // 50-digit mpmath evaluation of the same truncated sums
        let e = rwa_elements(&reference(1e-4), &SeriesConfig::default()).unwrap();
        let golden = [
            (e.h11, -0.001_300_835_409_377_662_6),
            (e.h22, -0.000_456_543_483_584_138_21),
            (e.h33, -0.001_242_160_762_744_469_6),
            (e.h44, 0.002_999_539_655_706_270_3),
            (e.h14, 0.000_420_221_181_551_403_53),
        ];
        for (got, want) in golden {
            assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn populations_sum_to_one_and_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e = rwa_elements(&reference(1e-4), &SeriesConfig::default()).unwrap();
        for _ in 0..1000 {
            let ss = steady_state_from(&e, &random_rates(&mut rng)).unwrap();
            assert!((ss.r11 + ss.r22 + ss.r33 + ss.r44 - 1.0).abs() < 1e-12);
            assert!(ss.r11 >= 0.0 && ss.r22 >= 0.0 && ss.r33 >= 0.0 && ss.r44 >= 0.0);
        }
    }

    #[test]
    fn product_state_without_h14() {
        let mut e = rwa_elements(&reference(1e-4), &SeriesConfig::default()).unwrap();
        e.h14 = 0.0;
        let r = ChannelRates {
            relax: [2e-3, 1e-3],
            excite: [3e-4, 5e-4],
            dephase: [1e-4, 0.0],
        };
        let ss = steady_state_from(&e, &r).unwrap();
        let n = (2e-3 + 3e-4) * (1e-3 + 5e-4);
        assert_eq!(ss.r14, ZERO);
        assert!((ss.r11 - 2e-3 * 1e-3 / n).abs() < 1e-14);
        assert!((ss.r22 - 2e-3 * 5e-4 / n).abs() < 1e-14);
        assert!((ss.r33 - 3e-4 * 1e-3 / n).abs() < 1e-14);
        assert!((ss.r44 - 3e-4 * 5e-4 / n).abs() < 1e-14);
    }

    #[test]
    fn zero_temperature_populations() {
        let e = rwa_elements(&reference(1e-4), &SeriesConfig::default()).unwrap();
        let r = ChannelRates {
            relax: [2e-4, 1e-4],
            excite: [0.0; 2],
            dephase: [0.0; 2],
        };
        let ss = steady_state_from(&e, &r).unwrap();
        let s = 3e-4;
        let h2 = e.h14 * e.h14;
        assert!((ss.r22 - 2.0 * 4e-8 / s * h2 * ss.hg.re / ss.z).abs() < 1e-15);
        assert!((ss.r33 - 2.0 * 1e-8 / s * h2 * ss.hg.re / ss.z).abs() < 1e-15);
        assert!((ss.r44 - 2.0 * 2e-8 / s * h2 * ss.hg.re / ss.z).abs() < 1e-15);
    }

    #[test]
    fn closed_form_is_stationary_and_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let mut p = reference(1e-4);
            p.qubits[0].eps = rng.gen_range(3.22..3.38);
            p.qubits[1].eps = 2.0 * p.qubits[0].eps;
            let e = rwa_elements(&p, &SeriesConfig::default()).unwrap();
            let r = random_rates(&mut rng);
            let ss = steady_state_from(&e, &r).unwrap();
            assert!(stationarity_residual(&ss, &e, &r) < 1e-12);
            assert_eq!(kernel_dimension(&e, &r, 1e-10), 1);
        }
    }

    #[test]
    fn flipped_coupling_sign_breaks_stationarity() {
        let e = rwa_elements(&reference(1e-4), &SeriesConfig::default()).unwrap();
        let r = reference(1e-4).rates();
        let mut wrong = e;
        wrong.h14 = -e.h14;
        let ss = steady_state_from(&wrong, &r).unwrap();
        assert!(stationarity_residual(&ss, &e, &r) > 1e-9);
    }

    #[test]
    fn inequality_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = rwa_elements(&reference(1e-4), &SeriesConfig::default()).unwrap();
        for _ in 0..2000 {
            let r = random_rates(&mut rng);
            let ss = steady_state_from(&e, &r).unwrap();
            assert!(ss.r11 * ss.r44 >= ss.r14.norm_sqr() - 1e-14);
            assert!(ss.r11 * ss.r44 >= ss.r22 * ss.r33 - 1e-14);
            let s: f64 = r.relax.iter().chain(&r.excite).sum();
            assert!(ss.hg.re >= s / 2.0);
        }
    }

    #[test]
    fn reconstruction() {
        let mut p = reference(1e-4);
        p.drive.amplitude = 0.0;
        p.qubits[0].eps = 0.2;
        p.qubits[1].eps = 0.3;
        let ss = steady_state_rwa(&p, &SeriesConfig::default()).unwrap();
        let m = reconstruct_original_frame(&ss, &p, 0.0);
        assert_eq!(m.matrix()[(0, 3)], ss.r14);
        let p = reference(1e-4);
        let ss = steady_state_rwa(&p, &SeriesConfig::default()).unwrap();
        for i in 0..10 {
            let m = reconstruct_original_frame(&ss, &p, 0.7 * i as f64);
            assert!((m.matrix()[(0, 3)].norm() - ss.r14.norm()).abs() < 1e-16);
        }
    }

    #[test]
    fn resonant_concurrence_vanishes_with_coupling() {
        let cfg = SeriesConfig::default();
        let mut p = reference(1e-4);
        p.g = 0.0;
        assert_eq!(concurrence_resonant(&p, &cfg).unwrap(), 0.0);
        // weak-coupling side (h14 < Γ/2): C grows with h14 on the line centre
        let mut last = f64::INFINITY;
        for g in [0.01, 0.005, 0.002, 0.001] {
            let mut q = reference(1e-4);
            q.g = g;
            let e = rwa_elements(&q, &cfg).unwrap();
            assert!(e.h14.abs() < 0.5e-4, "g = {g}: h14 = {}", e.h14);
            let shift = e.h11 - e.h44 - e.delta12;
            q.qubits[0].eps += shift / 3.0;
            q.qubits[1].eps += 2.0 * shift / 3.0;
            let c = concurrence_resonant(&q, &cfg).unwrap();
            assert!(c < last, "g = {g}: {c} vs {last}");
            last = c;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn on_resonance_threshold() {
        // Γ′ = Γ_φ = 0, h11 − h44 − δ = 0, Γ₁ = Γ₂ = Γ: hg = Γ, Z = Γ²(Γ² + 4h²),
        // |r14| = hΓ/(Γ² + 4h²), r22 = r33 = h²/(Γ² + 4h²): C > 0 ⇔ h < Γ,
        // i.e. 2h < Γ₁ + Γ₂
        let mut e = rwa_elements(&reference(1e-4), &SeriesConfig::default()).unwrap();
        e.delta12 = e.h11 - e.h44;
        for ratio in [0.5, 1.5, 2.5, 4.0] {
            let gamma = 2.0 * e.h14 / ratio;
            let r = ChannelRates {
                relax: [gamma; 2],
                excite: [0.0; 2],
                dephase: [0.0; 2],
            };
            let ss = steady_state_from(&e, &r).unwrap();
            let h = e.h14;
            let d = gamma * gamma + 4.0 * h * h;
            assert!((ss.r14.norm() - h * gamma / d).abs() < 1e-12);
            assert!((ss.r22 - h * h / d).abs() < 1e-12);
            assert!((ss.r33 - h * h / d).abs() < 1e-12);
            assert_eq!(ss.concurrence() > 0.0, ratio < 2.0);
        }
    }

    #[test]
    fn dip_width_cases() {
        let rates = |g: f64, f: f64| ChannelRates {
            relax: [g; 2],
            excite: [0.0; 2],
            dephase: [f; 2],
        };
        assert_eq!(dip_width_from(1e-4, &rates(1e-4, 0.0), 2.0).unwrap(), 0.0);
        let a = dip_width_from(4e-4, &rates(1e-4, 0.0), 1.0).unwrap();
        let b = dip_width_from(4e-4, &rates(1e-4, 0.0), 2.0).unwrap();
        assert!((a / b - 1.5).abs() < 1e-14);
        assert!(matches!(
            dip_width_from(1e-5, &rates(1e-4, 0.0), 2.0),
            Err(RwaError::NoDip { .. })
        ));
        let only_excitation = ChannelRates {
            relax: [0.0; 2],
            excite: [1e-4; 2],
            dephase: [1e-4; 2],
        };
        assert!(matches!(
            dip_width_from(4e-4, &only_excitation, 2.0),
            Err(RwaError::NoEntanglementWindow)
        ));
        // predicted window at ε₁ = 3.331
        let w = dip_width(&reference(1e-4), &SeriesConfig::default(), 2.0).unwrap();
        let h14 = 0.000_420_221_181_551_403_53;
        let want = 2.0 / 3.0 * 1e-4 * ((2.0 * h14 / 2e-4f64).powi(2) - 1.0).sqrt();
        assert!(((w - want) / want).abs() < 1e-12, "{w}");
    }

    #[test]
    fn applicability_gate() {
        let cfg = SeriesConfig::default();
        let p = reference(1e-4);
        assert!(matches!(applicability(&p, &cfg), Applicability::Resonant { k12: -10, .. }));
        let mut q = p;
        q.qubits[0].eps = 3.1;
        q.qubits[1].eps = 6.2;
        assert_eq!(applicability(&q, &cfg), Applicability::NonResonant);
        q.qubits[0].eps = 2.85;
        q.qubits[1].eps = 5.7;
        assert!(matches!(applicability(&q, &cfg), Applicability::OutOfTheory(_)));
    }

    #[test]
    fn xi_report_without_drive() {
        let mut p = reference(1e-4);
        p.drive.amplitude = 0.0;
        p.qubits[0].eps = 0.4;
        p.qubits[1].eps = 0.55;
        let r = validate_xi_integrals(&p, &SeriesConfig::default(), 30.0).unwrap();
        assert!(r.max_deviation < 1e-12, "{r:?}");
    }

    #[test]
    fn xi_report_fig1() {
        let r = validate_xi_integrals(&reference(1e-4), &SeriesConfig::default(), 60.0).unwrap();
        assert!(r.max_deviation < 1e-8, "{r:?}");
    }
}
