//! The pump on a periodic chain: continuity of the bond current, the hopping
//! range of the counter-diabatic term, and bond charges of the filled band.
//!
//!     cargo run --release --example realspace_chain

use cdpump::bloch::BlochField;
use cdpump::grid::{KGrid, TimeGrid};
use cdpump::protocols::{rm_bloch_field, RmParams};
use cdpump::realspace::{continuity_residual, field_to_realspace, localized_state, realspace_bond_charges, Chain};
use cdpump::transport::pump_trace;

fn main() {
    let p = RmParams::default();
    let r = rm_bloch_field(&p);
    let u = r.counterdiabatic();
    let period = p.period();

    let chain = Chain::new(32, 1.0).unwrap();
    let psi0 = localized_state(&chain, 21).unwrap();
    for steps in [1_000, 2_000, 4_000] {
        let rep = continuity_residual(&u, &chain, &psi0, steps).unwrap();
        println!("dt = T/{steps:<5}: max continuity residual {:.3e}", rep.max_residual);
    }

    let cd = {
        let (u, r) = (u.clone(), r.clone());
        BlochField::new(1.0, period, move |k, t| u.eval(k, t) - r.eval(k, t))
    };
    let big = Chain::new(64, 1.0).unwrap();
    println!("\nCD hopping |H(d)| / |H_nn| on {} cells", big.cells);
    println!("{:>6} {:>10} {:>10} {:>10} {:>8}", "t/T", "d = 4", "d = 8", "d = 16", "xi");
    for frac in [0.1, 0.25, 0.35, 0.5, 0.65, 0.9] {
        let prof = field_to_realspace(&cd, frac * period, &big).unwrap().range_profile();
        println!(
            "{frac:>6.2} {:>10.2e} {:>10.2e} {:>10.2e} {:>8.3}",
            prof.relative(4),
            prof.relative(8),
            prof.relative(16),
            prof.decay_length.unwrap_or(f64::NAN)
        );
    }

    let bc = realspace_bond_charges(&u, &r, &big, 1000).unwrap();
    let trace = pump_trace(&u, &r.normalized(), &KGrid::new(100, 1.0).unwrap(), &TimeGrid::new(11, period).unwrap()).unwrap();
    println!("\n{:>6} {:>10} {:>10} {:>10} {:>10}", "t/T", "Q_s chain", "Q_s bloch", "Q_d chain", "Q_d bloch");
    for i in 0..trace.len() {
        let n = i * 100;
        println!(
            "{:>6.2} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            trace.t[i] / period,
            bc.q_s[n],
            trace.q_pump_s[i],
            bc.q_d[n],
            trace.q_pump_d[i]
        );
    }
}
