//! Wootters concurrence and its average over the drive cycle.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, Propagator};
use crate::error::{ConcurrenceError, ModelError};
use crate::model::{DensityMatrix, Mat4, Physicality, SystemParams, C64, ONE, ZERO};

/// Hermiticity and trace must hold to this level before the concurrence is
/// evaluated; positivity is not re-checked (roundoff negatives are clamped).
const HERMITICITY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;

fn sigma_y_sigma_y() -> Mat4 {
    let mut m = Mat4::zeros();
    m[(0, 3)] = -ONE;
    m[(1, 2)] = ONE;
    m[(2, 1)] = ONE;
    m[(3, 0)] = -ONE;
    m
}

/// `max(0, λ₁ − λ₂ − λ₃ − λ₄)` with `λ` the decreasing square roots of the
/// eigenvalues of `ρρ̃`, `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`.
///
/// The spectrum is taken from the Hermitian `√ρ ρ̃ √ρ`, which is similar to
/// `ρρ̃` but does not need a non-symmetric eigensolver (those stall on the
/// rank-deficient products of pure states). Eigenvalues within a few ulps of
/// the spectral scale are taken as exact zeros: their square roots would
/// otherwise turn 1e-17 roundoff into 1e-9 errors.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, ConcurrenceError> {
    let phys = rho.physicality();
    if phys.hermiticity > HERMITICITY_TOL || phys.trace_error > TRACE_TOL {
        return Err(ConcurrenceError::NonPhysicalState(ModelError::NonPhysical(phys)));
    }
    Ok(concurrence_unchecked(rho.matrix()))
}

pub fn concurrence_unchecked(rho: &Mat4) -> f64 {
    let yy = sigma_y_sigma_y();
    let tilde = yy * rho.conjugate() * yy;
    let herm = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut sqrt_diag = Mat4::zeros();
    for i in 0..4 {
        sqrt_diag[(i, i)] = C64::new(resolved_sqrt(eig.eigenvalues[i], eig.eigenvalues.amax()), 0.0);
    }
    let root = eig.eigenvectors * sqrt_diag * eig.eigenvectors.adjoint();
    let r = root * tilde * root;
    let r = (r + r.adjoint()) * C64::new(0.5, 0.0);
    let mu = r.symmetric_eigenvalues();
    let mut lambda: Vec<f64> = mu.iter().map(|&x| resolved_sqrt(x, mu.amax())).collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    (lambda[0] - lambda[1] - lambda[2] - lambda[3]).max(0.0)
}

fn resolved_sqrt(x: f64, scale: f64) -> f64 {
    if x <= 16.0 * f64::EPSILON * scale {
        0.0
    } else {
        x.sqrt()
    }
}

/// How the φ₀ average is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseAveraging {
    /// A separate steady state for every φ₀ on the grid.
    Direct,
    /// One steady state: H depends on `ωt − φ₀` only, so the steady state for
    /// phase φ₀ is the φ₀ = 0 one shifted in time by φ₀/ω, and its one-period
    /// time average does not depend on φ₀.
    TimeShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AveragingConfig {
    pub n_phase: usize,
    pub n_time: usize,
    pub strategy: PhaseAveraging,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig {
            n_phase: 16,
            n_time: 64,
            strategy: PhaseAveraging::TimeShift,
        }
    }
}

impl AveragingConfig {
    pub fn validate(&self) -> Result<(), ConcurrenceError> {
        if self.n_phase < 16 {
            return Err(ConcurrenceError::InvalidConfig(format!(
                "n_phase = {} is below 16",
                self.n_phase
            )));
        }
        if self.n_time < 64 {
            return Err(ConcurrenceError::InvalidConfig(format!(
                "n_time = {} is below 64",
                self.n_time
            )));
        }
        Ok(())
    }
}

/// Steady-state concurrence over one drive period.
#[derive(Debug, Clone)]
pub struct SteadyPeriod {
    pub times: Vec<f64>,
    pub concurrence: Vec<f64>,
    pub worst: Physicality,
}

impl SteadyPeriod {
    pub fn mean(&self) -> f64 {
        self.concurrence.iter().sum::<f64>() / self.concurrence.len() as f64
    }
}

/// Steady state sampled at `n_time` uniform times over one period starting
/// at `φ₀/ω`. The step count is rounded up to a multiple of `n_time` so every
/// sample falls on the integration grid.
pub fn steady_period(
    p: &SystemParams,
    icfg: &IntegratorConfig,
    n_time: usize,
) -> Result<SteadyPeriod, ConcurrenceError> {
    let steps = icfg.steps_for(p).div_ceil(n_time) * n_time;
    let cfg = IntegratorConfig {
        steps_per_period: Some(steps),
        ..*icfg
    };
    let traj = Propagator::new(p, &cfg)?.steady_state()?;
    let stride = steps / n_time;
    let mut out = SteadyPeriod {
        times: Vec::with_capacity(n_time),
        concurrence: Vec::with_capacity(n_time),
        worst: traj.worst_physicality(),
    };
    for k in 0..n_time {
        let i = k * stride;
        out.times.push(traj.times[i]);
        out.concurrence.push(concurrence(&traj.states[i])?);
    }
    Ok(out)
}

/// Concurrence averaged over one steady-state period and over the initial
/// drive phase.
pub fn averaged_concurrence_numeric(
    p: &SystemParams,
    icfg: &IntegratorConfig,
    acfg: &AveragingConfig,
) -> Result<f64, ConcurrenceError> {
    acfg.validate()?;
    match acfg.strategy {
        PhaseAveraging::TimeShift => Ok(steady_period(p, icfg, acfg.n_time)?.mean()),
        PhaseAveraging::Direct => {
            let means: Result<Vec<f64>, _> = (0..acfg.n_phase)
                .into_par_iter()
                .map(|j| {
                    let q = p.with_phase(2.0 * PI * j as f64 / acfg.n_phase as f64);
                    steady_period(&q, icfg, acfg.n_time).map(|s| s.mean())
                })
                .collect();
            let means = means?;
            Ok(means.iter().sum::<f64>() / means.len() as f64)
        }
    }
}

/// Bell state `(|0⟩ + e^{iθ}|3⟩)/√2` in the module basis.
pub fn bell_state(theta: f64) -> DensityMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DensityMatrix::pure(&[C64::new(s, 0.0), ZERO, ZERO, C64::from_polar(s, theta)])
}

/// `p |Φ⁺⟩⟨Φ⁺| + (1 − p) I/4`
pub fn werner_state(p: f64) -> DensityMatrix {
    let bell = bell_state(0.0).into_matrix();
    let mixed = DensityMatrix::maximally_mixed().into_matrix();
    DensityMatrix::from_matrix_unchecked(bell * C64::new(p, 0.0) + mixed * C64::new(1.0 - p, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DriveParams, QubitParams};
    use nalgebra::Matrix2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unitary2(rng: &mut ChaCha8Rng) -> Matrix2<C64> {
        let (a, b, c, d) = (
            rng.gen_range(0.0..2.0 * PI),
            rng.gen_range(0.0..2.0 * PI),
            rng.gen_range(0.0..2.0 * PI),
            rng.gen_range(0.0..PI / 2.0),
        );
        let (s, co) = d.sin_cos();
        Matrix2::new(
            C64::from_polar(co, a),
            C64::from_polar(s, b),
            -C64::from_polar(s, c - b + a),
            C64::from_polar(co, c),
        ) * C64::from_polar(1.0, 0.3)
    }

    fn random_state(rng: &mut ChaCha8Rng) -> DensityMatrix {
        let mut a = Mat4::zeros();
        for v in a.iter_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        // bias toward entangled states so the invariance test is not vacuous
        let bell = bell_state(0.4).into_matrix() * C64::new(3.0, 0.0);
        DensityMatrix::normalized(&(a * a.adjoint() + bell))
    }

    #[test]
    fn reference_states() {
        assert!((concurrence(&bell_state(0.0)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(concurrence(&DensityMatrix::basis_state(1)).unwrap(), 0.0);
        assert_eq!(concurrence(&DensityMatrix::maximally_mixed()).unwrap(), 0.0);
        assert!((concurrence(&werner_state(0.5)).unwrap() - 0.25).abs() < 1e-12);
        for p in [0.2, 1.0 / 3.0, 0.6, 0.9] {
            let want = ((3.0 * p - 1.0) / 2.0f64).max(0.0);
            assert!((concurrence(&werner_state(p)).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn local_unitary_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let rho = random_state(&mut rng);
            let u1 = random_unitary2(&mut rng);
            let u2 = random_unitary2(&mut rng);
            let c = concurrence(&rho).unwrap();
            let rotated = rho.local_rotate(&u1, &u2);
            assert!((c - concurrence(&rotated).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let mut m = DensityMatrix::maximally_mixed().into_matrix();
        m[(0, 1)] = C64::new(0.01, 0.0);
        let err = concurrence(&DensityMatrix::from_matrix_unchecked(m)).unwrap_err();
        assert!(matches!(err, ConcurrenceError::NonPhysicalState(_)));
    }

    fn driven(delta1: f64) -> SystemParams {
        let mut q1 = QubitParams::new(delta1, 3.1);
        let mut q2 = QubitParams::new(0.15, 6.2);
        q1.gamma_relax = 1e-3;
        q2.gamma_relax = 1e-3;
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

    #[test]
    fn vanishes_without_tunnelling() {
        let v = averaged_concurrence_numeric(&driven(0.0), &IntegratorConfig::default(), &AveragingConfig::default())
            .unwrap();
        assert!(v < 1e-6);
    }

    #[test]
    fn time_shift_matches_direct_phase_average() {
        let p = driven(0.1);
        let icfg = IntegratorConfig::default();
        let shift = averaged_concurrence_numeric(&p, &icfg, &AveragingConfig::default()).unwrap();
        let direct = averaged_concurrence_numeric(
            &p,
            &icfg,
            &AveragingConfig {
                strategy: PhaseAveraging::Direct,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(shift > 1e-4);
        assert!((shift - direct).abs() < 1e-6, "{shift} vs {direct}");
    }

    #[test]
    fn averaging_config_bounds() {
        assert!(AveragingConfig {
            n_phase: 8,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AveragingConfig {
            n_time: 32,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
