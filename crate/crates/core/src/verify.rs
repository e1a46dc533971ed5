//! Cross-oracle verification suite behind `lzsm verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{rest_generator, IntegratorConfig, Propagator, Superop};
use crate::entanglement::{averaged_concurrence_numeric, bell_state, concurrence, werner_state, AveragingConfig};
use crate::floquet::{averaged_concurrence_nonres, SeriesConfig};
use crate::model::{ChannelRates, DensityMatrix, DriveParams, QubitParams, SystemParams};
use crate::rwa::{concurrence_resonant, rwa_elements, stationarity_residual, steady_state_from};

/// One verified quantity; passes when `value < bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            bound,
            pass: value < bound,
        }
    }

    fn error(name: impl Into<String>, message: impl std::fmt::Display) -> Self {
        log::error!("check failed to run: {message}");
        Check {
            name: name.into(),
            value: f64::NAN,
            bound: 0.0,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Deliberate faults used to show that the suite can fail.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Faults {
    /// Flip the sign of h₁₄ in the closed-form RWA state.
    pub flip_h14: bool,
    /// Subtract `leak · ρ` from the generator (trace decays at this rate).
    pub trace_leak: f64,
}

fn pinned(eps1: f64, gamma: f64) -> SystemParams {
    let mut q1 = QubitParams::new(0.1, eps1);
    let mut q2 = QubitParams::new(0.15, 2.0 * eps1);
    q1.gamma_relax = gamma;
    q2.gamma_relax = gamma;
    SystemParams::new(
        q1,
        q2,
        0.15,
        DriveParams {
            amplitude: 5.0,
            omega: 1.0,
            phi0: 0.0,
        },
    )
}

/// Off-resonant points for the Bessel-series comparison.
const NONRES_PINS: [f64; 3] = [3.2, 3.5, 3.7];

fn leaky(p: &SystemParams, leak: f64) -> Superop {
    let mut g = rest_generator(p);
    for i in 0..16 {
        g[(i, i)] -= crate::model::C64::new(leak, 0.0);
    }
    g
}

fn physicality_checks(faults: &Faults, out: &mut Vec<Check>) {
    let p = pinned(3.331, 5e-3);
    let icfg = IntegratorConfig::default();
    let prop = Propagator::with_generator(&p, &icfg, leaky(&p, faults.trace_leak));
    let periods = 50;
    let traj = prop.stroboscopic(&DensityMatrix::ground(), periods, 8);
    let trace_drift = traj
        .states
        .iter()
        .map(|m| (m.trace().re - 1.0).abs())
        .fold(0.0, f64::max)
        / periods as f64;
    let worst = traj.worst_physicality();
    out.push(Check::below("integrator.trace_drift_per_period", trace_drift, 1e-9));
    out.push(Check::below("integrator.hermiticity", worst.hermiticity, 1e-10));
    out.push(Check::below("integrator.negativity", -worst.min_eigenvalue, 1e-8));
}

fn concurrence_checks(out: &mut Vec<Check>) {
    let cases = [
        ("concurrence.bell", bell_state(0.0), 1.0),
        ("concurrence.product", DensityMatrix::basis_state(1), 0.0),
        ("concurrence.mixed", DensityMatrix::maximally_mixed(), 0.0),
        ("concurrence.werner_half", werner_state(0.5), 0.25),
    ];
    for (name, rho, want) in cases {
        match concurrence(&rho) {
            Ok(c) => out.push(Check::below(name, (c - want).abs(), 1e-12)),
            Err(e) => out.push(Check::error(name, e)),
        }
    }
}

fn rwa_checks(faults: &Faults, out: &mut Vec<Check>) {
    let cfg = SeriesConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = pinned(rng.gen_range(3.22..3.38), 1e-4);
        let e = match rwa_elements(&p, &cfg) {
            Ok(e) => e,
            Err(err) => return out.push(Check::error("rwa.stationarity", err)),
        };
        let rates = ChannelRates {
            relax: [rng.gen_range(1e-5..1e-3), rng.gen_range(1e-5..1e-3)],
            excite: [rng.gen_range(0.0..1e-5), rng.gen_range(0.0..1e-5)],
            dephase: [rng.gen_range(0.0..1e-4), rng.gen_range(0.0..1e-4)],
        };
        let mut used = e;
        if faults.flip_h14 {
            used.h14 = -used.h14;
        }
        match steady_state_from(&used, &rates) {
            Ok(ss) => worst = worst.max(stationarity_residual(&ss, &e, &rates)),
            Err(err) => return out.push(Check::error("rwa.stationarity", err)),
        }
    }
    out.push(Check::below("rwa.stationarity", worst, 1e-12));
}

fn fixed_point_checks(out: &mut Vec<Check>) {
    let p = pinned(3.25, 5e-3);
    let icfg = IntegratorConfig::default();
    let result = (|| {
        let prop = Propagator::new(&p, &icfg)?;
        let ss = prop.steady_state()?;
        let fixed = ss.first().expect("non-empty").clone();
        // the slowest coherences decay at ~Γ/2, so 20/Γ leaves a few 1e-6
        let horizon = 40.0 / 5e-3;
        let periods = crate::dynamics::periods_in(&p, horizon);
        let long = prop.stroboscopic(&DensityMatrix::ground(), periods, 1);
        Ok::<_, crate::error::DynamicsError>(fixed.trace_distance(long.last().expect("non-empty")))
    })();
    match result {
        Ok(d) => out.push(Check::below("dynamics.fixed_point_vs_long_time", d, 1e-6)),
        Err(e) => out.push(Check::error("dynamics.fixed_point_vs_long_time", e)),
    }
}

fn oracle_checks(out: &mut Vec<Check>) {
    let icfg = IntegratorConfig::default();
    let acfg = AveragingConfig::default();
    let scfg = SeriesConfig::default();
    for eps1 in NONRES_PINS {
        let p = pinned(eps1, 1e-4);
        let name = format!("oracle.nonres_vs_numeric[eps1={eps1}]");
        match (
            averaged_concurrence_numeric(&p, &icfg, &acfg),
            averaged_concurrence_nonres(&p, &scfg),
        ) {
            (Ok(n), Ok(a)) => out.push(Check::below(name, (n - a).abs(), 0.05)),
            (Err(e), _) => out.push(Check::error(name, e)),
            (_, Err(e)) => out.push(Check::error(name, e)),
        }
    }
    // centre of the two-qubit line closest to ε₁ = 3.331 (inside the zero
    // window) and a point on its shoulder
    let mut p = pinned(3.331, 1e-4);
    if let Ok(e) = rwa_elements(&p, &scfg) {
        let shift = e.h11 - e.h44 - e.delta12;
        p.qubits[0].eps += shift / 3.0;
        p.qubits[1].eps += 2.0 * shift / 3.0;
    }
    let mut shoulder = p;
    shoulder.qubits[0].eps += 0.002;
    shoulder.qubits[1].eps += 0.004;
    for (name, p) in [("oracle.rwa_vs_numeric[centre]", p), ("oracle.rwa_vs_numeric[shoulder]", shoulder)] {
        match (averaged_concurrence_numeric(&p, &icfg, &acfg), concurrence_resonant(&p, &scfg)) {
            (Ok(n), Ok(a)) => out.push(Check::below(name, (n - a).abs(), 0.05)),
            (Err(e), _) => out.push(Check::error(name, e)),
            (_, Err(e)) => out.push(Check::error(name, e)),
        }
    }
}

fn inequality_checks(out: &mut Vec<Check>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let e = match rwa_elements(&pinned(3.3, 1e-4), &SeriesConfig::default()) {
        Ok(e) => e,
        Err(err) => return out.push(Check::error("rwa.inequalities", err)),
    };
    let mut violation = 0.0f64;
    for _ in 0..1000 {
        let rates = ChannelRates {
            relax: [rng.gen_range(1e-6..1e-2), rng.gen_range(1e-6..1e-2)],
            excite: [rng.gen_range(0.0..1e-2), rng.gen_range(0.0..1e-2)],
            dephase: [rng.gen_range(0.0..1e-2), rng.gen_range(0.0..1e-2)],
        };
        let mut x = e;
        x.delta12 += rng.gen_range(-1e-2..1e-2);
        let Ok(ss) = steady_state_from(&x, &rates) else { continue };
        let bound = (rates.relax[0] + rates.excite[0] + rates.relax[1] + rates.excite[1]) / 2.0;
        violation = violation
            .max(ss.r14.norm_sqr() - ss.r11 * ss.r44)
            .max(ss.r22 * ss.r33 - ss.r11 * ss.r44)
            .max(bound - ss.hg.re);
    }
    out.push(Check::below("rwa.inequalities", violation, 1e-14));
}

/// Runs every check at the pinned parameter list.
pub fn run_verify(faults: &Faults) -> Report {
    let mut checks = Vec::new();
    concurrence_checks(&mut checks);
    physicality_checks(faults, &mut checks);
    rwa_checks(faults, &mut checks);
    inequality_checks(&mut checks);
    fixed_point_checks(&mut checks);
    oracle_checks(&mut checks);
    Report { checks }
}
