//! Single-momentum spinor dynamics: the CD drive keeps the state on the
//! instantaneous ground state, the bare drive does not; and the sphere ODE
//! `∂t R̂ = u × R̂` recovers `R̂` from the CD field alone.
//!
//!     cargo run --release --example cd_evolution [k]

use cdpump::dynamics::{evolve_spinor, instantaneous_ground_state};
use cdpump::inverse::integrate_sphere_ode;
use cdpump::protocols::{rm_bloch_field, RmParams};

fn main() {
    let k: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.1);
    let p = RmParams::default();
    let r = rm_bloch_field(&p);
    let u = r.counterdiabatic();
    let psi0 = instantaneous_ground_state(&r.eval(k, 0.0)).unwrap();

    println!("k = {k}, T = {:.4}", p.period());
    for steps in [1_000, 2_000, 4_000, 10_000] {
        let cd = evolve_spinor(&u, k, psi0, steps, Some(&r)).unwrap();
        let bare = evolve_spinor(&r, k, psi0, steps, Some(&r)).unwrap();
        println!(
            "steps {steps:>6}: max infidelity CD {:.3e}, bare {:.3e}",
            cd.max_infidelity().unwrap(),
            bare.max_infidelity().unwrap()
        );
    }

    let steps = 100_000;
    let path = integrate_sphere_ode(&u, k, r.eval(k, 0.0).unit().unwrap(), steps).unwrap();
    let worst = path
        .iter()
        .enumerate()
        .map(|(n, v)| (*v - r.eval(k, p.period() * n as f64 / steps as f64).unit().unwrap()).norm())
        .fold(0.0, f64::max);
    println!("sphere ODE round trip: max |R̂_ode - R̂| = {worst:.3e} over {steps} steps");
}
