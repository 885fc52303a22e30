//! Pumped charge per cycle from the triple-product integral and from the
//! plaquette Berry-flux sum, on four reference maps.
//!
//!     cargo run --release --example chern_oracle

use std::f64::consts::PI;

use cdpump::bloch::{BlochField, RealVec3};
use cdpump::grid::{KGrid, TimeGrid};
use cdpump::protocols::{control_freak_R, rm_bloch_field, ControlFreakParams, RmParams};
use cdpump::transport::chern_number;

fn main() {
    let period = 4.0 * PI;
    let hedgehog = BlochField::new(1.0, period, move |k, t| {
        let th = PI * t / period;
        RealVec3::new(th.sin() * k.cos(), th.sin() * k.sin(), th.cos())
    });
    let constant = BlochField::constant(1.0, period, RealVec3::new(0.2, -0.4, 1.0));
    let cases = [
        ("Rice-Mele", rm_bloch_field(&RmParams::default())),
        ("control freak", control_freak_R(&ControlFreakParams::with_period(period))),
        ("hedgehog", hedgehog),
        ("constant", constant),
    ];
    let kgrid = KGrid::new(100, 1.0).unwrap();
    let tgrid = TimeGrid::new(100, period).unwrap();
    println!("{:<14} {:>12} {:>12} {:>6}", "map", "triple", "plaquette", "C");
    for (name, field) in cases {
        let c = chern_number(&field.normalized(), &kgrid, &tgrid).unwrap();
        println!("{name:<14} {:>12.8} {:>12.8} {:>6}", c.raw, c.plaquette, c.value);
    }
}
