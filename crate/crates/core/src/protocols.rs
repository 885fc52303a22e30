//! Driving protocols: the Rice-Mele schedule and the analytic "control-freak" drive.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{BlochField, RealVec3, GAP_GUARD};
use crate::error::{PumpError, Result};

/// `φ(t) = π(1 - cos(ωt/2))`: runs 0 → 2π over one period with zero slope at both ends.
pub fn ramp_phase(t: f64, omega: f64) -> f64 {
    PI * (1.0 - (0.5 * omega * t).cos())
}

/// `dφ/dt`.
pub fn ramp_rate(t: f64, omega: f64) -> f64 {
    0.5 * PI * omega * (0.5 * omega * t).sin()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RmParams {
    pub j0: f64,
    pub delta0: f64,
    /// Staggered-potential amplitude Δ0.
    pub stagger0: f64,
    pub lattice_constant: f64,
    pub omega: f64,
    pub phi_shift: f64,
}

impl Default for RmParams {
    fn default() -> Self {
        Self { j0: 1.1, delta0: 0.9, stagger0: 1.0, lattice_constant: 1.0, omega: 0.5, phi_shift: 0.0 }
    }
}

impl RmParams {
    /// Validated constructor; see [`RmParams::validate`].
    pub fn new(j0: f64, delta0: f64, stagger0: f64, lattice_constant: f64, omega: f64, phi_shift: f64) -> Result<Self> {
        let p = Self { j0, delta0, stagger0, lattice_constant, omega, phi_shift };
        p.validate()?;
        Ok(p)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    /// Positive `a` and `ω`, and `|R| > 0` on a 100×100 `(k, t)` grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.lattice_constant > 0.0) || !(self.omega > 0.0) {
            return Err(PumpError::Argument("lattice constant and omega must be positive".into()));
        }
        let (norm, k, t) = self.min_gap(100, 100);
        if !(norm > GAP_GUARD) {
            return Err(PumpError::GapClosure { norm, k, t });
        }
        Ok(())
    }

    /// Smallest `|R(k, t)|` on an `nk × nt` grid and where it occurs.
    pub fn min_gap(&self, nk: usize, nt: usize) -> (f64, f64, f64) {
        let a = self.lattice_constant;
        let period = self.period();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..nt {
            let t = period * i as f64 / (nt - 1) as f64;
            let c = rm_coefficients(t, self);
            for m in 0..nk {
                let k = -PI / a + 2.0 * PI * m as f64 / (a * nk as f64);
                let n = rm_vector(&c, k * a).norm();
                if n < best.0 {
                    best = (n, k, t);
                }
            }
        }
        best
    }
}

/// Hoppings `J1`, `J2` and stagger `Δ` at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmCoefficients {
    pub j1: f64,
    pub j2: f64,
    pub stagger: f64,
}

pub fn rm_coefficients(t: f64, p: &RmParams) -> RmCoefficients {
    let arg = ramp_phase(t, p.omega) + p.phi_shift;
    let (s, c) = arg.sin_cos();
    RmCoefficients { j1: p.j0 + p.delta0 * c, j2: p.j0 - p.delta0 * c, stagger: p.stagger0 * s }
}

fn rm_coefficient_rates(t: f64, p: &RmParams) -> RmCoefficients {
    let arg = ramp_phase(t, p.omega) + p.phi_shift;
    let rate = ramp_rate(t, p.omega);
    let (s, c) = arg.sin_cos();
    RmCoefficients { j1: -p.delta0 * s * rate, j2: p.delta0 * s * rate, stagger: p.stagger0 * c * rate }
}

fn rm_vector(c: &RmCoefficients, ka: f64) -> RealVec3 {
    let (s, co) = ka.sin_cos();
    RealVec3::new(-c.j1 - c.j2 * co, -c.j2 * s, c.stagger)
}

/// `R(k, t) = (-J1 - J2 cos ka, -J2 sin ka, Δ)`, held constant outside `[0, T]`,
/// with its analytic time derivative registered.
pub fn rm_bloch_field(p: &RmParams) -> BlochField {
    let period = p.period();
    let a = p.lattice_constant;
    let pv = *p;
    let pd = *p;
    BlochField::new(a, period, move |k, t| {
        let t = t.clamp(0.0, period);
        rm_vector(&rm_coefficients(t, &pv), k * a)
    })
    .with_time_derivative(move |k, t| {
        if !(0.0..=period).contains(&t) {
            return RealVec3::ZERO;
        }
        let r = rm_coefficient_rates(t, &pd);
        let (s, c) = (k * a).sin_cos();
        RealVec3::new(-r.j1 - r.j2 * c, -r.j2 * s, r.stagger)
    })
}

/// Nearest-neighbor coefficients `(u0, u1, u2)` reproducing the bare Rice-Mele vector.
pub fn rm_nn_coefficients(t: f64, p: &RmParams) -> [Complex64; 3] {
    let c = rm_coefficients(t.clamp(0.0, p.period()), p);
    [Complex64::new(c.stagger, 0.0), Complex64::new(c.j1, 0.0), Complex64::new(c.j2, 0.0)]
}

type ProfileFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// Monotone polar-angle schedule `θ(t)` with its rate.
#[derive(Clone)]
pub struct ThetaProfile {
    name: String,
    eval: Arc<ProfileFn>,
}

impl fmt::Debug for ThetaProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ThetaProfile({})", self.name)
    }
}

impl ThetaProfile {
    /// `f` returns `(θ(t), θ̇(t))`.
    pub fn custom<F>(name: &str, f: F) -> Self
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        Self { name: name.to_string(), eval: Arc::new(f) }
    }

    /// Two half-cosine ramps, 0 → π on `[0, T/2]` and π → 2π on `[T/2, T]`.
    pub fn cosine_ramps(period: f64) -> Self {
        let half = 0.5 * period;
        Self::custom("cosine-ramps", move |t| {
            let t = t.clamp(0.0, period);
            let (base, tau) = if t <= half { (0.0, t) } else { (PI, t - half) };
            let arg = 2.0 * PI * tau / period;
            (base + 0.5 * PI * (1.0 - arg.cos()), PI * PI / period * arg.sin())
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn theta(&self, t: f64) -> f64 {
        (self.eval)(t).0
    }

    pub fn rate(&self, t: f64) -> f64 {
        (self.eval)(t).1
    }
}

#[derive(Clone, Debug)]
pub struct ControlFreakParams {
    pub period: f64,
    /// Log-magnitude λ; `|R| = e^λ`.
    pub lambda: f64,
    pub profile: ThetaProfile,
}

impl ControlFreakParams {
    pub fn new(period: f64, lambda: f64, profile: ThetaProfile) -> Result<Self> {
        let p = Self { period, lambda, profile };
        p.validate()?;
        Ok(p)
    }

    /// Default cosine-ramp profile with unit gap.
    pub fn with_period(period: f64) -> Self {
        Self { period, lambda: 0.0, profile: ThetaProfile::cosine_ramps(period) }
    }

    /// Boundary values θ = 0, π, 2π and vanishing rate at `t ∈ {0, T/2, T}`.
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0) || !self.lambda.is_finite() {
            return Err(PumpError::Argument("control-freak period must be positive, λ finite".into()));
        }
        let checks = [(0.0, 0.0), (0.5 * self.period, PI), (self.period, 2.0 * PI)];
        for (t, want) in checks {
            let (theta, rate) = (self.profile.eval)(t);
            if (theta - want).abs() > 1e-9 || rate.abs() > 1e-9 {
                return Err(PumpError::Argument(format!(
                    "θ-profile must satisfy θ({t}) = {want} with zero rate, got θ = {theta}, θ̇ = {rate}"
                )));
            }
        }
        Ok(())
    }

    pub fn half(&self, t: f64) -> Half {
        if t <= 0.5 * self.period {
            Half::First
        } else {
            Half::Second
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    First,
    Second,
}

/// `(R⊥, 0, R∥)` on the first half, `(R⊥ cos k, R⊥ sin k, R∥)` on the second,
/// with `R∥ = e^λ cos θ`, `R⊥ = e^λ sin θ`.
#[allow(non_snake_case)]
pub fn control_freak_R(p: &ControlFreakParams) -> BlochField {
    let a = 1.0;
    let pv = p.clone();
    let pd = p.clone();
    BlochField::new(a, p.period, move |k, t| {
        let t = t.clamp(0.0, pv.period);
        let theta = pv.profile.theta(t);
        let mag = pv.lambda.exp();
        let (perp, par) = (mag * theta.sin(), mag * theta.cos());
        match pv.half(t) {
            Half::First => RealVec3::new(perp, 0.0, par),
            Half::Second => RealVec3::new(perp * k.cos(), perp * k.sin(), par),
        }
    })
    .with_time_derivative(move |k, t| {
        if !(0.0..=pd.period).contains(&t) {
            return RealVec3::ZERO;
        }
        let (theta, rate) = (pd.profile.eval)(t);
        let mag = pd.lambda.exp();
        let (dperp, dpar) = (mag * theta.cos() * rate, -mag * theta.sin() * rate);
        match pd.half(t) {
            Half::First => RealVec3::new(dperp, 0.0, dpar),
            Half::Second => RealVec3::new(dperp * k.cos(), dperp * k.sin(), dpar),
        }
    })
}

/// Total nearest-neighbor field: `R + θ̇(0, 1, 0)` then `R + θ̇(-sin k, cos k, 0)`.
pub fn control_freak_u(p: &ControlFreakParams) -> BlochField {
    let r = control_freak_R(p);
    let pv = p.clone();
    BlochField::new(1.0, p.period, move |k, t| {
        let tc = t.clamp(0.0, pv.period);
        let rate = if (0.0..=pv.period).contains(&t) { pv.profile.rate(tc) } else { 0.0 };
        let cd = match pv.half(tc) {
            Half::First => RealVec3::new(0.0, rate, 0.0),
            Half::Second => RealVec3::new(-k.sin() * rate, k.cos() * rate, 0.0),
        };
        r.eval(k, t) + cd
    })
}

/// Nearest-neighbor coefficients `(u0, u1, u2)` of [`control_freak_u`].
pub fn control_freak_nn_coefficients(t: f64, p: &ControlFreakParams) -> [Complex64; 3] {
    let tc = t.clamp(0.0, p.period);
    let (theta, rate) = (p.profile.eval)(tc);
    let mag = p.lambda.exp();
    let u0 = Complex64::new(mag * theta.cos(), 0.0);
    let hop = Complex64::new(-mag * theta.sin(), rate);
    match p.half(tc) {
        Half::First => [u0, hop, Complex64::new(0.0, 0.0)],
        Half::Second => [u0, Complex64::new(0.0, 0.0), hop],
    }
}

/// Closed-form charges `(Q_d, Q_s)` pumped across the two bonds at polar angle θ.
pub fn control_freak_bond_charges(theta: f64, half: Half) -> (f64, f64) {
    match half {
        Half::First => (0.0, 0.5 * (1.0 - theta.cos())),
        Half::Second => (0.5 * (1.0 + theta.cos()), 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::cd_field;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ramp_phase_endpoints() {
        let w = 0.5;
        let period = 2.0 * PI / w;
        assert_eq!(ramp_phase(0.0, w), 0.0);
        assert_abs_diff_eq!(ramp_phase(period, w), 2.0 * PI, epsilon = 1e-14);
        assert_abs_diff_eq!(ramp_phase(0.5 * period, w), PI, epsilon = 1e-14);
        assert_eq!(ramp_rate(0.0, w), 0.0);
        assert_abs_diff_eq!(ramp_rate(period, w), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn coefficient_examples() {
        let p = RmParams::default();
        let c = rm_coefficients(0.0, &p);
        assert_abs_diff_eq!(c.j1, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.j2, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(c.stagger, 0.0, epsilon = 1e-15);
        let end = rm_coefficients(p.period(), &p);
        assert_abs_diff_eq!(end.j1, c.j1, epsilon = 1e-12);
        assert_abs_diff_eq!(end.j2, c.j2, epsilon = 1e-12);
        assert_abs_diff_eq!(end.stagger, c.stagger, epsilon = 1e-12);
        // φ + φ_shift = π/2
        let q = RmParams { phi_shift: 0.5 * PI, ..p };
        let c = rm_coefficients(0.0, &q);
        assert_abs_diff_eq!(c.j1, 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.j2, 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.stagger, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn rm_field_examples() {
        let p = RmParams::default();
        let f = rm_bloch_field(&p);
        assert_abs_diff_eq!((f.eval(0.0, 0.0) - RealVec3::new(-2.2, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((f.eval(PI, 0.0) - RealVec3::new(-1.8, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        for &(k, t) in &[(0.3, 1.0), (-2.0, 7.5), (1.1, 12.0)] {
            assert_abs_diff_eq!((f.eval(k + 2.0 * PI, t) - f.eval(k, t)).norm(), 0.0, epsilon = 1e-12);
        }
        // φ̇(0) = 0
        assert_eq!(f.dt(0.0, 0.0), RealVec3::ZERO);
        // constant outside the drive window
        assert_eq!(f.eval(0.4, -1.0), f.eval(0.4, 0.0));
        assert_eq!(f.eval(0.4, p.period() + 3.0), f.eval(0.4, p.period()));
    }

    #[test]
    fn rm_field_analytic_derivative_matches_stencil() {
        let p = RmParams::default();
        let f = rm_bloch_field(&p);
        let h = 1e-5;
        for &(k, t) in &[(0.3, 1.0), (-2.0, 7.5), (2.9, 11.0)] {
            let fd = (f.eval(k, t + h) - f.eval(k, t - h)) * (0.5 / h);
            assert_abs_diff_eq!((fd - f.dt(k, t)).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rm_drive_is_periodic_and_gapped() {
        let p = RmParams::default();
        let f = rm_bloch_field(&p);
        for m in 0..100 {
            let k = -PI + 2.0 * PI * m as f64 / 100.0;
            assert!((f.eval(k, 0.0) - f.eval(k, p.period())).norm() < 1e-12);
        }
        let (gap, _, _) = p.min_gap(100, 100);
        assert!(gap > 0.5, "gap {gap}");
        assert!(p.validate().is_ok());
    }

    #[test]
    fn gapless_params_rejected() {
        // J1 - J2 = Δ = 0 at φ = π/2 when δ0 = 0 and Δ0 = 0
        let err = RmParams::new(1.0, 0.0, 0.0, 1.0, 0.5, 0.0);
        assert!(matches!(err, Err(PumpError::GapClosure { .. })));
        assert!(RmParams::new(1.1, 0.9, 1.0, -1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn theta_profile_boundaries() {
        let p = ControlFreakParams::with_period(10.0);
        assert!(p.validate().is_ok());
        let bad = ThetaProfile::custom("linear", |t| (2.0 * PI * t / 10.0, 2.0 * PI / 10.0));
        assert!(ControlFreakParams::new(10.0, 0.0, bad).is_err());
        // monotone
        let mut last = -1.0;
        for i in 0..=1000 {
            let th = p.profile.theta(10.0 * i as f64 / 1000.0);
            assert!(th >= last);
            last = th;
        }
    }

    #[test]
    fn control_freak_r_examples() {
        let lam = 0.3;
        let p = ControlFreakParams { lambda: lam, ..ControlFreakParams::with_period(8.0) };
        let r = control_freak_R(&p);
        assert_abs_diff_eq!((r.eval(1.0, 0.0) - RealVec3::new(0.0, 0.0, lam.exp())).norm(), 0.0, epsilon = 1e-15);
        let mid = r.eval(1.3, 4.0);
        assert_abs_diff_eq!((mid - RealVec3::new(0.0, 0.0, -lam.exp())).norm(), 0.0, epsilon = 1e-14);
        let after = r.eval(1.3, 4.0 + 1e-9);
        assert!((after - mid).norm() < 1e-6);
        for &(k, t) in &[(0.2, 1.0), (2.0, 3.3), (-1.0, 5.0), (3.0, 7.9)] {
            assert_abs_diff_eq!(r.eval(k, t).norm(), lam.exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn control_freak_u_examples() {
        let p = ControlFreakParams::with_period(8.0);
        let u = control_freak_u(&p);
        let r = control_freak_R(&p);
        for &t in &[0.0, 4.0, 8.0] {
            assert_abs_diff_eq!((u.eval(0.7, t) - r.eval(0.7, t)).norm(), 0.0, epsilon = 1e-14);
        }
        // θ = π/2 at t = T/4
        let rate = p.profile.rate(2.0);
        assert_abs_diff_eq!((u.eval(0.7, 2.0) - RealVec3::new(1.0, rate, 0.0)).norm(), 0.0, epsilon = 1e-14);
        // agreement with the generic counter-diabatic construction
        for &(k, t) in &[(0.1, 0.5), (1.9, 2.9), (-2.5, 5.1), (2.2, 7.4)] {
            let cd = cd_field(&r.eval(k, t), &r.dt(k, t)).unwrap();
            assert_abs_diff_eq!((cd - u.eval(k, t)).norm(), 0.0, epsilon = 1e-13);
            assert!(((u.eval(k, t) - r.eval(k, t)).dot(&r.eval(k, t))).abs() < 1e-13);
        }
    }

    #[test]
    fn control_freak_nn_form_matches_u() {
        let p = ControlFreakParams::with_period(8.0);
        let u = control_freak_u(&p);
        for &(k, t) in &[(0.1, 0.5), (1.9, 2.9), (-2.5, 5.1), (2.2, 7.4)] {
            let c = control_freak_nn_coefficients(t, &p);
            let w = c[1] + c[2] * Complex64::from_polar(1.0, -k);
            let nn = RealVec3::new(-w.re, w.im, c[0].re);
            assert_abs_diff_eq!((nn - u.eval(k, t)).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn bond_charge_closed_forms() {
        assert_eq!(control_freak_bond_charges(0.0, Half::First), (0.0, 0.0));
        let (d, s) = control_freak_bond_charges(PI, Half::First);
        assert_eq!(d, 0.0);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
        let (d, s) = control_freak_bond_charges(2.0 * PI, Half::Second);
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
        assert_eq!(s, 1.0);
        // continuity at the half-cycle switch
        let (d1, s1) = control_freak_bond_charges(PI, Half::First);
        let (d2, s2) = control_freak_bond_charges(PI, Half::Second);
        assert_abs_diff_eq!(d1, d2, epsilon = 1e-15);
        assert_abs_diff_eq!(s1, s2, epsilon = 1e-15);
    }

    #[test]
    fn bond_charges_nondecreasing_along_profile() {
        let p = ControlFreakParams::with_period(6.0);
        let (mut ld, mut ls) = (0.0, 0.0);
        for i in 0..=600 {
            let t = 6.0 * i as f64 / 600.0;
            let (d, s) = control_freak_bond_charges(p.profile.theta(t), p.half(t));
            assert!(d >= ld - 1e-15 && s >= ls - 1e-15);
            ld = d;
            ls = s;
        }
        assert_abs_diff_eq!(ld, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ls, 1.0, epsilon = 1e-15);
    }
}
