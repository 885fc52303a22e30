use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use cdpump::bloch::{pauli_contract, BlochField, RealVec3};
use cdpump::dynamics::{evolve_spinor, instantaneous_ground_state};
use cdpump::error::PumpError;
use cdpump::grid::{KGrid, TimeGrid};
use cdpump::inverse::{optimize, InverseConfig, NnCoefficients, OptimSettings};
use cdpump::protocols::{control_freak_R, control_freak_u, rm_bloch_field, ControlFreakParams, RmParams};
use cdpump::transport::{chern_number, pump_trace, pumped_charge};

fn rm_params() -> impl Strategy<Value = RmParams> {
    (0.6f64..2.0, 0.2f64..0.55, 0.3f64..1.5, 0.1f64..20.0).prop_map(|(j0, frac, d0, omega)| {
        RmParams::new(j0, frac * j0, d0, 1.0, omega, 0.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cd_field_is_periodic_in_k(p in rm_params(), s in 0.0f64..1.0) {
        let u = rm_bloch_field(&p).counterdiabatic();
        let t = s * p.period();
        prop_assert!((u.eval(-PI, t) - u.eval(PI, t)).norm() < 1e-12);
    }

    #[test]
    fn control_freak_cd_term_is_orthogonal(k in -PI..PI, s in 0.0f64..1.0, lambda in -1.0f64..1.0) {
        let p = ControlFreakParams { lambda, ..ControlFreakParams::with_period(7.0) };
        let (r, u) = (control_freak_R(&p).eval(k, 7.0 * s), control_freak_u(&p).eval(k, 7.0 * s));
        prop_assert!((u - r).dot(&r).abs() < 1e-12 * r.norm_sqr().max(1.0));
    }

    /// Transitionless driving does not degrade with the drive speed: the rotation per
    /// step is set by the CD term, whose size scales with ω while dt scales as 1/ω.
    #[test]
    fn cd_exactness_is_speed_independent(scale in 0.1f64..100.0, k in -PI..PI) {
        let p = RmParams::default().with_omega(0.5 * scale);
        let r = rm_bloch_field(&p);
        let psi0 = instantaneous_ground_state(&r.eval(k, 0.0)).unwrap();
        let ev = evolve_spinor(&r.counterdiabatic(), k, psi0, 4000, Some(&r)).unwrap();
        prop_assert!(ev.max_infidelity().unwrap() < 1e-8);
        prop_assert!((ev.final_state().norm() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    /// Smooth periodic perturbations that keep the gap open leave the Chern number unchanged.
    #[test]
    fn chern_number_is_stable_under_gapped_perturbations(
        amp in proptest::array::uniform3(-0.25f64..0.25),
        phase in proptest::array::uniform3(0.0f64..(2.0 * PI)),
    ) {
        let p = RmParams::default();
        let period = p.period();
        let base = rm_bloch_field(&p);
        let field = BlochField::new(1.0, period, move |k, t| {
            let w = 2.0 * PI * t / period;
            base.eval(k, t)
                + RealVec3::new(
                    amp[0] * (k + phase[0]).sin() * (w + phase[1]).cos(),
                    amp[1] * (2.0 * k + phase[1]).cos() * (w + phase[2]).sin(),
                    amp[2] * (k + phase[2]).cos() * (2.0 * w + phase[0]).cos(),
                )
        });
        let kg = KGrid::new(100, 1.0).unwrap();
        let tg = TimeGrid::new(100, period).unwrap();
        let gap = tg.points().iter().flat_map(|&t| kg.points().iter().map(move |&k| (k, t)))
            .map(|(k, t)| field.eval(k, t).norm())
            .fold(f64::INFINITY, f64::min);
        prop_assume!(gap > 0.1);
        let c = chern_number(&field.normalized(), &kg, &tg).unwrap();
        prop_assert_eq!(c.value, 1);
        prop_assert!((c.raw - c.plaquette).abs() < 1e-2);
    }

    /// `Q_s - Q_d` is the charge that accumulated on the site between the two bonds,
    /// and both bonds carry `Q_pump(T)` over a full cycle.
    #[test]
    fn bond_charges_obey_site_continuity(p in rm_params()) {
        let r = rm_bloch_field(&p);
        let tr = pump_trace(&r.counterdiabatic(), &r.normalized(), &KGrid::new(64, 1.0).unwrap(), &TimeGrid::new(33, p.period()).unwrap()).unwrap();
        for i in 0..tr.len() {
            let accumulated = tr.q_site_0[i] - tr.q_site_0[0];
            prop_assert!((tr.q_pump_s[i] - tr.q_pump_d[i] - accumulated).abs() < 1e-12);
        }
        let n = tr.len() - 1;
        prop_assert!((0.5 * (tr.q_pump_d[n] + tr.q_pump_s[n]) - tr.q_pump[n]).abs() < 1e-10);
        prop_assert!((tr.q_pump[n] - 1.0).abs() < 1e-3);
    }
}

#[test]
fn pumped_charge_is_grid_converged() {
    let p = RmParams::default();
    let rhat = rm_bloch_field(&p).normalized();
    let coarse = pumped_charge(&rhat, &KGrid::new(100, 1.0).unwrap(), p.period(), 99).unwrap();
    let fine = pumped_charge(&rhat, &KGrid::new(200, 1.0).unwrap(), p.period(), 198).unwrap();
    assert!((coarse - fine).abs() < 1e-4, "{coarse} vs {fine}");
}

#[test]
fn short_optimizer_run_is_monotone_and_consistent() {
    let c0 = NnCoefficients::rice_mele(&RmParams::default(), 1);
    let cfg = InverseConfig {
        objective_steps: 1000,
        verify_steps: 2000,
        trajectory_nodes: 201,
        optimizer: OptimSettings { max_iterations: 6, ..Default::default() },
        ..Default::default()
    };
    let sol = match optimize(&c0, &cfg) {
        Ok(sol) => sol,
        Err(PumpError::NotConverged { solution, .. }) | Err(PumpError::NotQuantized { solution, .. }) => *solution,
        Err(PumpError::GapViolation { solution: Some(solution), .. }) => *solution,
        Err(e) => panic!("{e}"),
    };
    assert!(sol.history.len() >= 2);
    for w in sol.history.windows(2) {
        assert!(w[1] <= w[0], "objective increased: {w:?}");
    }
    let u = sol.u_field();
    for &(k, t) in &[(0.3, 1.0), (-2.2, 6.0), (1.1, 11.9)] {
        let total = sol.h0(k, t).matrix().add(sol.h_cd(k, t).matrix());
        let direct = pauli_contract(&u.eval(k, t));
        assert_abs_diff_eq!(total.sub(direct.matrix()).max_abs(), 0.0, epsilon = 1e-12);
    }
}
