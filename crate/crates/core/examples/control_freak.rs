//! The two-stage control-freak protocol: numeric bond charges next to the
//! closed forms, for two field magnitudes.
//!
//!     cargo run --release --example control_freak

use cdpump::grid::{KGrid, TimeGrid};
use cdpump::protocols::{control_freak_R, control_freak_bond_charges, control_freak_u, ControlFreakParams};
use cdpump::transport::{chern_number, pump_trace};

fn main() {
    let period = 10.0;
    let kgrid = KGrid::new(100, 1.0).unwrap();
    let tgrid = TimeGrid::new(101, period).unwrap();
    for lambda in [0.0, 0.3] {
        let p = ControlFreakParams { lambda, ..ControlFreakParams::with_period(period) };
        let rhat = control_freak_R(&p).normalized();
        let trace = pump_trace(&control_freak_u(&p), &rhat, &kgrid, &tgrid).unwrap();
        let chern = chern_number(&rhat, &kgrid, &tgrid).unwrap();
        println!("lambda = {lambda}: Chern {:.6} (plaquette {:.6})", chern.raw, chern.plaquette);
        println!("{:>6} {:>8} {:>10} {:>10} {:>10} {:>10}", "t/T", "theta", "Q_d", "closed", "Q_s", "closed");
        for i in (0..trace.len()).step_by(10) {
            let t = trace.t[i];
            let theta = p.profile.theta(t);
            let (qd, qs) = control_freak_bond_charges(theta, p.half(t));
            println!(
                "{:>6.2} {theta:>8.4} {:>10.5} {qd:>10.5} {:>10.5} {qs:>10.5}",
                t / period,
                trace.q_pump_d[i],
                trace.q_pump_s[i]
            );
        }
        println!();
    }
}
