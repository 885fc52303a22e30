//! Time evolution of Bloch spinors under `H = ½ u·σ`.
//!
//! The step is the exact midpoint exponential `exp(-i dt ½ u(k, t+dt/2)·σ)`,
//! which is unitary by construction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{su2_rotation, BlochField, RealVec3, GAP_GUARD};
use crate::error::{PumpError, Result};
use crate::grid::{cumulative_trapezoid, KGrid};
use crate::transport::N_CELL;

/// Unit-norm two-component state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spinor(pub [Complex64; 2]);

impl Spinor {
    /// Normalizes `(a, b)`; the zero vector is rejected.
    pub fn new(a: Complex64, b: Complex64) -> Result<Self> {
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(PumpError::Argument("spinor must have finite non-zero norm".into()));
        }
        Ok(Spinor([a / n, b / n]))
    }

    pub fn up() -> Self {
        Spinor([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)])
    }

    pub fn down() -> Self {
        Spinor([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])
    }

    pub fn norm(&self) -> f64 {
        (self.0[0].norm_sqr() + self.0[1].norm_sqr()).sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Spinor) -> Complex64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1]
    }

    pub fn fidelity(&self, other: &Spinor) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Bloch vector `⟨σ⟩`.
    pub fn bloch_vector(&self) -> RealVec3 {
        let [a, b] = self.0;
        let ab = a.conj() * b;
        RealVec3::new(2.0 * ab.re, 2.0 * ab.im, a.norm_sqr() - b.norm_sqr())
    }
}

/// Ground state of `R·σ` (eigenvalue `-|R|`), with its largest-magnitude
/// component made real and positive.
pub fn instantaneous_ground_state(r: &RealVec3) -> Result<Spinor> {
    let n = r.norm();
    if !(n >= GAP_GUARD) || !n.is_finite() {
        return Err(PumpError::GapClosure { norm: n, k: f64::NAN, t: f64::NAN });
    }
    let h = *r * (1.0 / n);
    // Two unnormalized candidates for the -1 eigenvector of ĥ·σ; pick the better conditioned one.
    let c1 = [Complex64::new(h.z - 1.0, 0.0), Complex64::new(h.x, h.y)];
    let c2 = [Complex64::new(h.x, -h.y), Complex64::new(-1.0 - h.z, 0.0)];
    let raw = if h.z <= 0.0 { c1 } else { c2 };
    let s = Spinor::new(raw[0], raw[1])?;
    let big = if s.0[0].norm() >= s.0[1].norm() { s.0[0] } else { s.0[1] };
    let phase = big.conj() / big.norm();
    Ok(Spinor([s.0[0] * phase, s.0[1] * phase]))
}

/// One midpoint step: `exp(-i dt ½ u·σ) ψ`.
pub fn step(psi: &Spinor, u_mid: &RealVec3, dt: f64) -> Spinor {
    Spinor(su2_rotation(&(*u_mid * dt)).apply(psi.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub t: Vec<f64>,
    pub states: Vec<Spinor>,
    /// `1 - |⟨gs(t)|ψ(t)⟩|²` against the reference field, when one was supplied.
    pub infidelity: Option<Vec<f64>>,
}

impl EvolutionResult {
    pub fn final_state(&self) -> Spinor {
        *self.states.last().expect("trajectory is never empty")
    }

    pub fn max_infidelity(&self) -> Option<f64> {
        self.infidelity.as_ref().map(|v| v.iter().copied().fold(0.0, f64::max))
    }
}

const NORM_TOLERANCE: f64 = 1e-10;

/// Propagates `ψ0` at fixed `k` over `[0, T]` (the period of `u`) in `steps` steps.
/// `reference` is an `R` field whose instantaneous ground state defines the infidelity.
pub fn evolve_spinor(u: &BlochField, k: f64, psi0: Spinor, steps: usize, reference: Option<&BlochField>) -> Result<EvolutionResult> {
    if steps == 0 {
        return Err(PumpError::Argument("steps must be at least 1".into()));
    }
    if (psi0.norm() - 1.0).abs() > NORM_TOLERANCE {
        return Err(PumpError::Argument(format!("initial spinor has norm {}", psi0.norm())));
    }
    let period = u.period();
    let dt = period / steps as f64;
    let mut t = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut infid = reference.map(|_| Vec::with_capacity(steps + 1));

    let record_infidelity = |infid: &mut Option<Vec<f64>>, psi: &Spinor, time: f64| -> Result<()> {
        if let (Some(v), Some(r)) = (infid.as_mut(), reference) {
            let gs = instantaneous_ground_state(&r.eval(k, time))
                .map_err(|_| PumpError::GapClosure { norm: r.eval(k, time).norm(), k, t: time })?;
            v.push((1.0 - gs.fidelity(psi)).clamp(0.0, 1.0));
        }
        Ok(())
    };

    let mut psi = psi0;
    t.push(0.0);
    states.push(psi);
    record_infidelity(&mut infid, &psi, 0.0)?;
    for n in 0..steps {
        let tm = (n as f64 + 0.5) * dt;
        let um = u.eval(k, tm);
        if !um.is_finite() {
            return Err(PumpError::Propagation { step: n, reason: format!("non-finite field {um} at k = {k}, t = {tm}") });
        }
        psi = step(&psi, &um, dt);
        if (psi.norm() - 1.0).abs() > NORM_TOLERANCE {
            return Err(PumpError::Propagation { step: n, reason: format!("norm drifted to {}", psi.norm()) });
        }
        let tn = if n + 1 == steps { period } else { (n + 1) as f64 * dt };
        t.push(tn);
        states.push(psi);
        record_infidelity(&mut infid, &psi, tn)?;
    }
    Ok(EvolutionResult { t, states, infidelity: infid })
}

/// Charge trace `Q_dyn(t_n)` on the uniform evolution grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeTrace {
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    /// Largest infidelity over all k and times, against the ground state of the reference field.
    pub max_infidelity: f64,
}

impl ChargeTrace {
    /// Linear interpolation at `t`, clamped to the trace's range.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.t.len();
        let last = self.t[n - 1];
        if t <= 0.0 {
            return self.q[0];
        }
        if t >= last {
            return self.q[n - 1];
        }
        let x = t / last * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let w = x - i as f64;
        self.q[i] * (1.0 - w) + self.q[i + 1] * w
    }

    pub fn final_charge(&self) -> f64 {
        *self.q.last().expect("trace is never empty")
    }
}

/// `Q_dyn(t) = (1/N_cell) ∫dτ ∫dk/2π ⟨ψ(k,τ)| ∂k(u·σ) |ψ(k,τ)⟩`, the state-resolved
/// version of the cell-current charge, with `ψ(k, 0)` the ground state of `reference(k, 0)`.
///
/// All k-modes are evolved together so that `∂k u` can be taken spectrally at each node.
pub fn dynamical_pumped_charge(u: &BlochField, reference: &BlochField, kgrid: &KGrid, steps: usize) -> Result<ChargeTrace> {
    if steps == 0 {
        return Err(PumpError::Argument("steps must be at least 1".into()));
    }
    let a = kgrid.lattice_constant();
    if (u.lattice_constant() - a).abs() > 1e-12 * a || (reference.lattice_constant() - a).abs() > 1e-12 * a {
        return Err(PumpError::Argument("field and k-grid lattice constants differ".into()));
    }
    let ks = kgrid.points();
    let period = u.period();
    let dt = period / steps as f64;

    let mut psi: Vec<Spinor> = ks
        .iter()
        .map(|&k| {
            let r = reference.eval(k, 0.0);
            instantaneous_ground_state(&r).map_err(|_| PumpError::GapClosure { norm: r.norm(), k, t: 0.0 })
        })
        .collect::<Result<_>>()?;

    let current = |psi: &[Spinor], t: f64| -> Result<f64> {
        let uv = u.sample_grid(ks, t);
        if let Some(m) = uv.iter().position(|v| !v.is_finite()) {
            return Err(PumpError::GapClosure { norm: f64::NAN, k: ks[m], t });
        }
        let comp = |f: fn(&RealVec3) -> f64| kgrid.derivative(&uv.iter().map(f).collect::<Vec<_>>());
        let (dx, dy, dz) = (comp(|v| v.x), comp(|v| v.y), comp(|v| v.z));
        let vals: Vec<f64> = psi
            .iter()
            .enumerate()
            .map(|(m, s)| RealVec3::new(dx[m], dy[m], dz[m]).dot(&s.bloch_vector()))
            .collect();
        Ok(kgrid.average(&vals) / a / N_CELL)
    };

    let infidelity = |psi: &[Spinor], t: f64| -> f64 {
        ks.iter()
            .zip(psi)
            .filter_map(|(&k, s)| instantaneous_ground_state(&reference.eval(k, t)).ok().map(|g| 1.0 - g.fidelity(s)))
            .fold(0.0, f64::max)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut rate = Vec::with_capacity(steps + 1);
    times.push(0.0);
    rate.push(current(&psi, 0.0)?);
    let mut worst = infidelity(&psi, 0.0);
    for n in 0..steps {
        let tm = (n as f64 + 0.5) * dt;
        for (m, s) in psi.iter_mut().enumerate() {
            let um = u.eval(ks[m], tm);
            if !um.is_finite() {
                return Err(PumpError::Propagation { step: n, reason: format!("non-finite field at k = {}, t = {tm}", ks[m]) });
            }
            *s = step(s, &um, dt);
        }
        let tn = if n + 1 == steps { period } else { (n + 1) as f64 * dt };
        times.push(tn);
        rate.push(current(&psi, tn)?);
        if (n + 1) % 100 == 0 || n + 1 == steps {
            worst = worst.max(infidelity(&psi, tn));
        }
    }
    let q = cumulative_trapezoid(&times, &rate);
    Ok(ChargeTrace { t: times, q, max_infidelity: worst.clamp(0.0, 1.0) })
}
