//! Rice-Mele pump driven with the exact counter-diabatic term: the pumped charge
//! by three independent routes, repeated at faster driving and without the CD term.
//!
//!     cargo run --release --example forward_pump

use cdpump::dynamics::dynamical_pumped_charge;
use cdpump::grid::{KGrid, TimeGrid};
use cdpump::protocols::{rm_bloch_field, RmParams};
use cdpump::transport::{charge_from_current, pump_trace};

fn charges(p: &RmParams, counterdiabatic: bool) -> (f64, f64, f64, f64) {
    let r = rm_bloch_field(p);
    let u = if counterdiabatic { r.counterdiabatic() } else { r.clone() };
    let kgrid = KGrid::new(100, p.lattice_constant).unwrap();
    let tgrid = TimeGrid::new(100, p.period()).unwrap();
    let trace = pump_trace(&u, &r.normalized(), &kgrid, &tgrid).unwrap();
    let current = charge_from_current(&u, &r.normalized(), &kgrid, &tgrid).unwrap();
    let dynamic = dynamical_pumped_charge(&u, &r, &kgrid, 10_000).unwrap();
    (trace.final_charge(), *current.last().unwrap(), dynamic.final_charge(), dynamic.max_infidelity)
}

fn main() {
    println!("{:>8} {:>4} {:>10} {:>10} {:>10} {:>12}", "omega", "CD", "Q_chern", "Q_current", "Q_dynamic", "infidelity");
    let base = RmParams::default();
    for (scale, cd) in [(1.0, true), (10.0, true), (100.0, true), (1.0, false), (0.1, false)] {
        let p = base.with_omega(base.omega * scale);
        let (q12, q11, qd, inf) = charges(&p, cd);
        println!("{:>8.2} {:>4} {q12:>10.6} {q11:>10.6} {qd:>10.6} {inf:>12.3e}", p.omega, if cd { "on" } else { "off" });
    }

    // the bond-resolved trace of the default cycle, every tenth sample
    let r = rm_bloch_field(&base);
    let trace = pump_trace(
        &r.counterdiabatic(),
        &r.normalized(),
        &KGrid::new(100, 1.0).unwrap(),
        &TimeGrid::new(101, base.period()).unwrap(),
    )
    .unwrap();
    println!("\n{:>8} {:>10} {:>10} {:>10}", "t/T", "Q_pump", "Q_pump,d", "Q_pump,s");
    for i in (0..trace.len()).step_by(10) {
        println!("{:>8.2} {:>10.5} {:>10.5} {:>10.5}", trace.t[i] / base.period(), trace.q_pump[i], trace.q_pump_d[i], trace.q_pump_s[i]);
    }
}
