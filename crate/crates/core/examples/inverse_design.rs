//! Reverse-engineer a gapped nearest-neighbor fast pump starting from the
//! Rice-Mele baseline, then verify it.
//!
//!     cargo run --release --example inverse_design [harmonics]

use std::time::Instant;

use cdpump::error::PumpError;
use cdpump::inverse::{objective_value, optimize, InverseConfig, InverseSolution, NnCoefficients};
use cdpump::protocols::RmParams;

fn report(sol: &InverseSolution) {
    println!("iterations        {}", sol.iterations);
    println!("evaluations       {}", sol.evaluations);
    println!("method            {:?} ({:?})", sol.method, sol.termination);
    println!("E (objective)     {:.3e}", sol.boundary_error);
    println!("E/N_k (verified)  {:.3e}", sol.per_k_error());
    println!("gap margin        {:.4}", sol.gap_margin);
    println!("Q_pump(T)         {:.5}", sol.pumped_charge);
}

fn main() {
    let harmonics = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let params = RmParams::default();
    let c0 = NnCoefficients::rice_mele(&params, harmonics);
    let cfg = InverseConfig::default();

    println!("baseline E = {:.4e}", objective_value(&c0, &cfg).unwrap());
    let clock = Instant::now();
    match optimize(&c0, &cfg) {
        Ok(sol) => {
            report(&sol);
            for (n, row) in sol.coefficients.amplitudes.iter().enumerate() {
                println!("n = {}: u0 {:.4}  u1 {:.4}  u2 {:.4}", n + 1, row[0], row[1], row[2]);
            }
        }
        Err(PumpError::NotConverged { solution, .. }) => {
            println!("not converged");
            report(&solution);
        }
        Err(PumpError::GapViolation { solution: Some(solution), .. }) => {
            println!("gap violated");
            report(&solution);
        }
        Err(e) => println!("error: {e}"),
    }
    println!("elapsed {:.1} s", clock.elapsed().as_secs_f64());
}
