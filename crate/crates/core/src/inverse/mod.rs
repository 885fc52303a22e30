//! Inverse design of nearest-neighbor fast pumps.
//!
//! A nearest-neighbor total field `u(k, t)` is specified by three time-dependent
//! coefficients. Integrating `∂tR̂ = u × R̂` from `R̂(k, 0) = û(k, 0)` and setting
//! `R = (u·R̂) R̂` gives the bare Hamiltonian that `u` drives counter-diabatically.
//! The harmonic amplitudes of `u` are tuned until `R(k, T) = R(k, 0)`.

pub mod optim;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{pauli_contract, BlochField, Hermitian2, RealVec3};
use crate::error::{PumpError, Result};
use crate::grid::{KGrid, TimeGrid};
use crate::protocols::{control_freak_nn_coefficients, ramp_phase, rm_nn_coefficients, ControlFreakParams, RmParams};
use crate::transport::pumped_charge_trace;

pub use optim::{Method, OptimResult, OptimSettings, Termination};

pub const SOLUTION_SCHEMA_VERSION: u32 = 1;

/// Time-dependent starting point `u⁰_j(t)` of the harmonic expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Baseline {
    RiceMele(RmParams),
    /// Cosine-ramp control-freak drive with constant λ.
    ControlFreak { period: f64, lambda: f64 },
}

impl Baseline {
    pub fn period(&self) -> f64 {
        match self {
            Baseline::RiceMele(p) => p.period(),
            Baseline::ControlFreak { period, .. } => *period,
        }
    }

    pub fn lattice_constant(&self) -> f64 {
        match self {
            Baseline::RiceMele(p) => p.lattice_constant,
            Baseline::ControlFreak { .. } => 1.0,
        }
    }

    fn control_freak(&self) -> Option<ControlFreakParams> {
        match self {
            Baseline::ControlFreak { period, lambda } => {
                let mut p = ControlFreakParams::with_period(*period);
                p.lambda = *lambda;
                Some(p)
            }
            Baseline::RiceMele(_) => None,
        }
    }
}

/// Baseline plus complex harmonic amplitudes `u_{j,n}`, `n = 1..N_h`:
/// `u_j(t) = u⁰_j(t) + Σ_n u_{j,n} e^{inφ(t)}`, with `u_0` taken real.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnCoefficients {
    pub baseline: Baseline,
    /// `amplitudes[n - 1][j]`.
    pub amplitudes: Vec<[Complex64; 3]>,
}

impl NnCoefficients {
    pub fn new(baseline: Baseline, harmonics: usize) -> Self {
        Self { baseline, amplitudes: vec![[Complex64::new(0.0, 0.0); 3]; harmonics] }
    }

    pub fn rice_mele(p: &RmParams, harmonics: usize) -> Self {
        Self::new(Baseline::RiceMele(*p), harmonics)
    }

    pub fn harmonics(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn period(&self) -> f64 {
        self.baseline.period()
    }

    pub fn lattice_constant(&self) -> f64 {
        self.baseline.lattice_constant()
    }

    /// Harmonic phase `φ(t)`, running 0 → 2π over the period.
    pub fn phase(&self, t: f64) -> f64 {
        ramp_phase(t, 2.0 * PI / self.period())
    }

    /// Flattened real parameters: `(Re, Im)` for each `j` within each `n`.
    pub fn params(&self) -> Vec<f64> {
        self.amplitudes.iter().flat_map(|row| row.iter().flat_map(|z| [z.re, z.im])).collect()
    }

    pub fn with_params(&self, x: &[f64]) -> Result<Self> {
        if x.len() != 6 * self.harmonics() {
            return Err(PumpError::Argument(format!("expected {} parameters, got {}", 6 * self.harmonics(), x.len())));
        }
        let amplitudes = x
            .chunks(6)
            .map(|c| [Complex64::new(c[0], c[1]), Complex64::new(c[2], c[3]), Complex64::new(c[4], c[5])])
            .collect();
        Ok(Self { baseline: self.baseline.clone(), amplitudes })
    }

    pub fn baseline_at(&self, t: f64) -> [Complex64; 3] {
        match &self.baseline {
            Baseline::RiceMele(p) => rm_nn_coefficients(t, p),
            b @ Baseline::ControlFreak { .. } => control_freak_nn_coefficients(t, &b.control_freak().expect("control-freak baseline")),
        }
    }

    /// `(u_0, u_1, u_2)` at time `t`.
    pub fn at(&self, t: f64) -> [Complex64; 3] {
        let mut c = self.baseline_at(t);
        let phi = self.phase(t);
        for (n, row) in self.amplitudes.iter().enumerate() {
            let e = Complex64::from_polar(1.0, (n + 1) as f64 * phi);
            for j in 0..3 {
                c[j] += row[j] * e;
            }
        }
        c
    }
}

/// `u = Re[(-u1 - u2 e^{-ika}, -i u1 - i u2 e^{-ika}, u0)]`.
pub fn nn_vector(c: &[Complex64; 3], k: f64, lattice_constant: f64) -> RealVec3 {
    let w = c[1] + c[2] * Complex64::from_polar(1.0, -k * lattice_constant);
    RealVec3::new(-w.re, w.im, c[0].re)
}

/// The total field of a nearest-neighbor drive.
pub fn nn_field(c: &NnCoefficients) -> BlochField {
    let cc = c.clone();
    let a = c.lattice_constant();
    BlochField::new(a, c.period(), move |k, t| nn_vector(&cc.at(t), k, a))
}

fn check_unit(v: &RealVec3) -> Result<()> {
    if !v.is_finite() || (v.norm() - 1.0).abs() > 1e-10 {
        return Err(PumpError::Argument(format!("initial direction {v} is not a unit vector")));
    }
    Ok(())
}

/// One exact rotation step of `∂tR̂ = u × R̂`.
#[inline]
fn rotate_step(r: &RealVec3, u: &RealVec3, dt: f64) -> RealVec3 {
    let n = u.norm();
    if n == 0.0 {
        return *r;
    }
    r.rotated(&(*u * (1.0 / n)), n * dt)
}

fn integrate_with_stride(u: &BlochField, k: f64, rhat0: RealVec3, steps: usize, stride: usize) -> Result<Vec<RealVec3>> {
    check_unit(&rhat0)?;
    if steps == 0 || stride == 0 || !steps.is_multiple_of(stride) {
        return Err(PumpError::Argument(format!("steps = {steps} must be a positive multiple of stride = {stride}")));
    }
    let dt = u.period() / steps as f64;
    let mut out = Vec::with_capacity(steps / stride + 1);
    let mut r = rhat0;
    out.push(r);
    for n in 0..steps {
        let um = u.eval(k, (n as f64 + 0.5) * dt);
        if !um.is_finite() {
            return Err(PumpError::Propagation { step: n, reason: format!("non-finite field at k = {k}") });
        }
        r = rotate_step(&r, &um, dt);
        if (n + 1) % stride == 0 {
            out.push(r);
        }
    }
    Ok(out)
}

/// Integrates `∂tR̂ = u × R̂` over one period by rotating `R̂` about `û(k, t+dt/2)`
/// through `|u| dt`. Returns `steps + 1` unit vectors.
pub fn integrate_sphere_ode(u: &BlochField, k: f64, rhat0: RealVec3, steps: usize) -> Result<Vec<RealVec3>> {
    integrate_with_stride(u, k, rhat0, steps, 1)
}

/// `R̂(k, t)` sampled on a k-grid at uniformly spaced times, with interpolation.
#[derive(Clone)]
pub struct SphereTrajectory {
    ks: Vec<f64>,
    lattice_constant: f64,
    period: f64,
    /// `rhat[m][i]` at `ks[m]` and `t_i = i T / (nodes - 1)`.
    rhat: Vec<Vec<RealVec3>>,
    u: BlochField,
}

impl std::fmt::Debug for SphereTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SphereTrajectory({} k × {} t)", self.ks.len(), self.node_count())
    }
}

impl SphereTrajectory {
    /// Runs the sphere ODE from `R̂(k, 0) = û(k, 0)` at every grid point, keeping
    /// `nodes` equally spaced samples (`steps` must be a multiple of `nodes - 1`).
    pub fn trace(u: &BlochField, kgrid: &KGrid, steps: usize, nodes: usize) -> Result<Self> {
        if nodes < 2 || !steps.is_multiple_of(nodes - 1) {
            return Err(PumpError::Argument(format!("{steps} steps cannot be sampled at {nodes} nodes")));
        }
        let stride = steps / (nodes - 1);
        let rhat = kgrid
            .points()
            .iter()
            .map(|&k| {
                let u0 = u.eval(k, 0.0);
                let r0 = u0.unit().ok_or(PumpError::GapClosure { norm: u0.norm(), k, t: 0.0 })?;
                integrate_with_stride(u, k, r0, steps, stride)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            ks: kgrid.points().to_vec(),
            lattice_constant: kgrid.lattice_constant(),
            period: u.period(),
            rhat,
            u: u.clone(),
        })
    }

    pub fn ks(&self) -> &[f64] {
        &self.ks
    }

    pub fn node_count(&self) -> usize {
        self.rhat.first().map_or(0, Vec::len)
    }

    pub fn node_time(&self, i: usize) -> f64 {
        self.period * i as f64 / (self.node_count() - 1) as f64
    }

    pub fn node(&self, m: usize, i: usize) -> RealVec3 {
        self.rhat[m][i]
    }

    pub fn u(&self) -> &BlochField {
        &self.u
    }

    /// Cubic Hermite interpolation in `t` on grid column `m`, using `∂tR̂ = u × R̂`
    /// at the bracketing nodes, renormalized.
    fn on_column(&self, m: usize, t: f64) -> RealVec3 {
        let nodes = self.node_count();
        let h = self.period / (nodes - 1) as f64;
        let x = (t.clamp(0.0, self.period) / h).min((nodes - 1) as f64);
        let i = (x.floor() as usize).min(nodes - 2);
        let s = x - i as f64;
        if s == 0.0 {
            return self.rhat[m][i];
        }
        let k = self.ks[m];
        let (t0, t1) = (i as f64 * h, (i + 1) as f64 * h);
        let (p0, p1) = (self.rhat[m][i], self.rhat[m][i + 1]);
        let d0 = self.u.eval(k, t0).cross(&p0);
        let d1 = self.u.eval(k, t1).cross(&p1);
        let (s2, s3) = (s * s, s * s * s);
        let v = p0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + d0 * ((s3 - 2.0 * s2 + s) * h)
            + p1 * (-2.0 * s3 + 3.0 * s2)
            + d1 * ((s3 - s2) * h);
        v * (1.0 / v.norm())
    }

    /// `R̂(k, t)`: exact column lookup on grid momenta, periodic trigonometric
    /// interpolation between them.
    pub fn rhat(&self, k: f64, t: f64) -> RealVec3 {
        let n = self.ks.len();
        let step = 2.0 * PI / (self.lattice_constant * n as f64);
        let pos = (k - self.ks[0]) / step;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            let m = (nearest as i64).rem_euclid(n as i64) as usize;
            return self.on_column(m, t);
        }
        let mut acc = RealVec3::ZERO;
        for m in 0..n {
            let x = self.lattice_constant * (k - self.ks[m]);
            acc += self.on_column(m, t) * periodic_sinc(x, n);
        }
        acc * (1.0 / acc.norm())
    }

    /// `R̂` as a field with the exact time derivative `u × R̂` registered.
    pub fn rhat_field(&self) -> BlochField {
        let me = Arc::new(self.clone());
        let md = me.clone();
        BlochField::new(self.lattice_constant, self.period, move |k, t| me.rhat(k, t))
            .with_time_derivative(move |k, t| md.u.eval(k, t).cross(&md.rhat(k, t)))
    }
}

/// Interpolating kernel of an even-length periodic grid, `sin(Nx/2) / (N tan(x/2))`.
fn periodic_sinc(x: f64, n: usize) -> f64 {
    let half = 0.5 * x;
    let t = half.tan();
    if t.abs() < 1e-14 {
        return 1.0;
    }
    (0.5 * n as f64 * x).sin() / (n as f64 * t)
}

/// `R = (u·R̂) R̂`. Fails with a gap violation when `u·R̂ ≤ 0` at any stored node.
#[allow(non_snake_case)]
pub fn reconstruct_R(u: &BlochField, trajectory: &SphereTrajectory) -> Result<BlochField> {
    let margin = gap_margin(trajectory);
    if !(margin > 0.0) {
        return Err(PumpError::GapViolation { margin, required: 0.0, solution: None });
    }
    let rhat = trajectory.rhat_field();
    let uu = u.clone();
    Ok(BlochField::new(u.lattice_constant(), u.period(), move |k, t| {
        let r = rhat.eval(k, t);
        r * uu.eval(k, t).dot(&r)
    }))
}

/// `min_{k,t} u·R̂` over the stored nodes.
pub fn gap_margin(trajectory: &SphereTrajectory) -> f64 {
    let mut worst = f64::INFINITY;
    for (m, &k) in trajectory.ks.iter().enumerate() {
        for i in 0..trajectory.node_count() {
            let v = trajectory.u.eval(k, trajectory.node_time(i)).dot(&trajectory.rhat[m][i]);
            worst = worst.min(v);
        }
    }
    worst
}

/// `E = Σ_k |R(k, T) - R(k, 0)|²`.
pub fn boundary_error(r_start: &[RealVec3], r_end: &[RealVec3]) -> f64 {
    r_start.iter().zip(r_end).map(|(a, b)| (*b - *a).norm_sqr()).sum()
}

/// Boundary error of a reconstructed `R` field on a k-grid.
pub fn field_boundary_error(r: &BlochField, kgrid: &KGrid) -> f64 {
    let start = r.sample_grid(kgrid.points(), 0.0);
    let end = r.sample_grid(kgrid.points(), r.period());
    boundary_error(&start, &end)
}

/// Precomputed, allocation-free evaluation of the objective on a fixed grid.
struct Objective {
    base: Vec<[Complex64; 3]>,
    /// `phases[s][n] = e^{i(n+1)φ(t_s)}` at step midpoints.
    phases: Vec<Vec<Complex64>>,
    /// Baseline coefficients at `t = 0` and `t = T`, where every `e^{inφ}` equals 1.
    base_start: [Complex64; 3],
    base_end: [Complex64; 3],
    twiddle: Vec<Complex64>,
    dt: f64,
    gap_min: f64,
    penalty: f64,
    coeffs: Vec<[Complex64; 3]>,
}

impl Objective {
    fn new(c: &NnCoefficients, kgrid: &KGrid, steps: usize, gap_min: f64, penalty: f64) -> Self {
        let period = c.period();
        let dt = period / steps as f64;
        let nh = c.harmonics();
        let mids: Vec<f64> = (0..steps).map(|s| (s as f64 + 0.5) * dt).collect();
        let base = mids.iter().map(|&t| c.baseline_at(t)).collect();
        let phases = mids
            .iter()
            .map(|&t| {
                let phi = c.phase(t);
                (1..=nh).map(|n| Complex64::from_polar(1.0, n as f64 * phi)).collect()
            })
            .collect();
        let a = c.lattice_constant();
        Self {
            base,
            phases,
            base_start: c.baseline_at(0.0),
            base_end: c.baseline_at(period),
            twiddle: kgrid.points().iter().map(|&k| Complex64::from_polar(1.0, -k * a)).collect(),
            dt,
            gap_min,
            penalty,
            coeffs: vec![[Complex64::new(0.0, 0.0); 3]; steps],
        }
    }

    fn eval(&mut self, amplitudes: &[[Complex64; 3]]) -> f64 {
        for (s, out) in self.coeffs.iter_mut().enumerate() {
            let mut c = self.base[s];
            for (row, e) in amplitudes.iter().zip(&self.phases[s]) {
                c[0] += row[0] * e;
                c[1] += row[1] * e;
                c[2] += row[2] * e;
            }
            *out = c;
        }
        let (mut start, mut end) = (self.base_start, self.base_end);
        for row in amplitudes {
            for j in 0..3 {
                start[j] += row[j];
                end[j] += row[j];
            }
        }
        let vec = |c: &[Complex64; 3], tw: Complex64| {
            let w = c[1] + c[2] * tw;
            RealVec3::new(-w.re, w.im, c[0].re)
        };
        let mut err = 0.0;
        let mut pen = 0.0;
        for &tw in &self.twiddle {
            let u0 = vec(&start, tw);
            let Some(mut r) = u0.unit() else {
                return f64::INFINITY;
            };
            for c in &self.coeffs {
                let u = vec(c, tw);
                if self.penalty > 0.0 {
                    let g = self.gap_min - u.dot(&r);
                    if g > 0.0 {
                        pen += g * g * self.dt;
                    }
                }
                r = rotate_step(&r, &u, self.dt);
            }
            let r_end = r * vec(&end, tw).dot(&r);
            err += (r_end - u0).norm_sqr();
        }
        err + self.penalty * pen
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    pub k_points: usize,
    pub t_points: usize,
    pub objective_steps: usize,
    pub verify_steps: usize,
    /// Stored time samples of the verified trajectory.
    pub trajectory_nodes: usize,
    /// Convergence threshold on `E / N_k`.
    pub threshold: f64,
    pub gap_min: f64,
    /// Weight of the optional quadratic gap penalty; 0 disables it.
    pub gap_penalty: f64,
    /// Optimizer stops once `E / N_k` falls below `threshold · stop_fraction`.
    pub stop_fraction: f64,
    pub optimizer: OptimSettings,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            k_points: 100,
            t_points: 100,
            objective_steps: 10_000,
            verify_steps: 100_000,
            trajectory_nodes: 1001,
            threshold: 1e-4,
            gap_min: 0.05,
            gap_penalty: 10.0,
            stop_fraction: 0.25,
            optimizer: OptimSettings::default(),
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PumpError::Argument(m.to_string()));
        if self.k_points < 8 || self.t_points < 8 {
            return bad("grid sizes must be at least 8");
        }
        if self.objective_steps == 0 || self.verify_steps == 0 {
            return bad("step counts must be positive");
        }
        if self.trajectory_nodes < 2 || !self.verify_steps.is_multiple_of(self.trajectory_nodes - 1) {
            return bad("verify_steps must be a multiple of trajectory_nodes - 1");
        }
        if !(self.threshold > 0.0) || !(self.gap_min > 0.0) || !(self.gap_penalty >= 0.0) || !(self.stop_fraction > 0.0) {
            return bad("thresholds must be positive");
        }
        Ok(())
    }
}

/// Optimized drive together with its verified reconstruction.
#[derive(Clone, Debug)]
pub struct InverseSolution {
    pub coefficients: NnCoefficients,
    pub config: InverseConfig,
    /// `E` at objective resolution.
    pub boundary_error: f64,
    /// `E` from the verification pass.
    pub verified_boundary_error: f64,
    pub gap_margin: f64,
    /// `Q_pump(T)` of the reconstructed `R̂`.
    pub pumped_charge: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub method: Method,
    pub termination: Termination,
    pub trajectory: SphereTrajectory,
}

impl InverseSolution {
    pub fn per_k_error(&self) -> f64 {
        self.verified_boundary_error / self.config.k_points as f64
    }

    pub fn u_field(&self) -> BlochField {
        self.trajectory.u().clone()
    }

    pub fn rhat_field(&self) -> BlochField {
        self.trajectory.rhat_field()
    }

    pub fn r_field(&self) -> BlochField {
        let rhat = self.rhat_field();
        let u = self.u_field();
        BlochField::new(u.lattice_constant(), u.period(), move |k, t| {
            let r = rhat.eval(k, t);
            r * u.eval(k, t).dot(&r)
        })
    }

    /// `H0 = R·σ` at `(k, t)`.
    pub fn h0(&self, k: f64, t: f64) -> Hermitian2 {
        pauli_contract(&self.r_field().eval(k, t))
    }

    /// `H_CD = (u - R)·σ` at `(k, t)`.
    pub fn h_cd(&self, k: f64, t: f64) -> Hermitian2 {
        pauli_contract(&(self.u_field().eval(k, t) - self.r_field().eval(k, t)))
    }

    /// `min_k |R(k, t)|` on a uniform time grid (signed: `u·R̂`).
    pub fn min_gap_trace(&self, tgrid: &TimeGrid) -> Vec<f64> {
        let u = self.u_field();
        let rhat = self.rhat_field();
        tgrid
            .points()
            .iter()
            .map(|&t| {
                self.trajectory
                    .ks()
                    .iter()
                    .map(|&k| u.eval(k, t).dot(&rhat.eval(k, t)))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    pub fn to_document(&self) -> SolutionDocument {
        SolutionDocument {
            schema_version: SOLUTION_SCHEMA_VERSION,
            coefficients: self.coefficients.clone(),
            config: self.config,
            boundary_error: self.boundary_error,
            verified_boundary_error: self.verified_boundary_error,
            per_k_error: self.per_k_error(),
            gap_margin: self.gap_margin,
            pumped_charge: self.pumped_charge,
            history: self.history.clone(),
            iterations: self.iterations,
            evaluations: self.evaluations,
            method: self.method,
            termination: self.termination,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

/// Serializable summary of an [`InverseSolution`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub schema_version: u32,
    pub coefficients: NnCoefficients,
    pub config: InverseConfig,
    pub boundary_error: f64,
    pub verified_boundary_error: f64,
    pub per_k_error: f64,
    pub gap_margin: f64,
    pub pumped_charge: f64,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub method: Method,
    pub termination: Termination,
}

impl SolutionDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SolutionDocument = serde_json::from_str(text)?;
        if doc.schema_version != SOLUTION_SCHEMA_VERSION {
            return Err(PumpError::Config(format!(
                "solution schema version {} is not supported (expected {SOLUTION_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    /// Re-runs the verification pass on the stored coefficients.
    pub fn rebuild(&self) -> Result<InverseSolution> {
        let r = OptimResult {
            x: self.coefficients.params(),
            value: self.boundary_error,
            history: self.history.clone(),
            iterations: self.iterations,
            evaluations: self.evaluations,
            method: self.method,
            termination: self.termination,
        };
        verify(&self.coefficients, &self.config, r)
    }
}

/// `E` of a drive at objective resolution, without the gap penalty.
pub fn objective_value(c: &NnCoefficients, cfg: &InverseConfig) -> Result<f64> {
    let kgrid = KGrid::new(cfg.k_points, c.lattice_constant())?;
    let mut obj = Objective::new(c, &kgrid, cfg.objective_steps, cfg.gap_min, 0.0);
    Ok(obj.eval(&c.amplitudes))
}

fn verify(c: &NnCoefficients, cfg: &InverseConfig, r: OptimResult) -> Result<InverseSolution> {
    let kgrid = KGrid::new(cfg.k_points, c.lattice_constant())?;
    let u = nn_field(c);
    let trajectory = SphereTrajectory::trace(&u, &kgrid, cfg.verify_steps, cfg.trajectory_nodes)?;
    let last = trajectory.node_count() - 1;
    let period = c.period();
    let start: Vec<RealVec3> = kgrid.points().iter().map(|&k| u.eval(k, 0.0)).collect();
    let end: Vec<RealVec3> = kgrid
        .points()
        .iter()
        .enumerate()
        .map(|(m, &k)| {
            let rh = trajectory.node(m, last);
            rh * u.eval(k, period).dot(&rh)
        })
        .collect();
    let verified = boundary_error(&start, &end);
    let margin = gap_margin(&trajectory);
    let tgrid = TimeGrid::new(cfg.t_points, period)?;
    let charge = if margin > 0.0 {
        *pumped_charge_trace(&trajectory.rhat_field(), &kgrid, &tgrid)?.last().expect("non-empty")
    } else {
        f64::NAN
    };
    Ok(InverseSolution {
        coefficients: c.clone(),
        config: *cfg,
        boundary_error: r.value,
        verified_boundary_error: verified,
        gap_margin: margin,
        pumped_charge: charge,
        history: r.history,
        iterations: r.iterations,
        evaluations: r.evaluations,
        method: r.method,
        termination: r.termination,
        trajectory,
    })
}

/// Minimizes the boundary error over the harmonic amplitudes, then verifies the
/// result with a finer integration.
///
/// Fails with [`PumpError::NotConverged`] when the verified `E/N_k` stays above
/// the threshold, [`PumpError::GapViolation`] when `min u·R̂ ≤ gap_min`, and
/// [`PumpError::NotQuantized`] when `Q_pump(T)` is more than 0.1 from an integer.
/// All three carry the best solution found.
pub fn optimize(c0: &NnCoefficients, cfg: &InverseConfig) -> Result<InverseSolution> {
    cfg.validate()?;
    let kgrid = KGrid::new(cfg.k_points, c0.lattice_constant())?;
    let mut obj = Objective::new(c0, &kgrid, cfg.objective_steps, cfg.gap_min, cfg.gap_penalty);
    let settings = OptimSettings { target: cfg.threshold * cfg.stop_fraction * cfg.k_points as f64, ..cfg.optimizer };
    let template = c0.clone();
    let result = optim::minimize(
        |x| match template.with_params(x) {
            Ok(c) => obj.eval(&c.amplitudes),
            Err(_) => f64::INFINITY,
        },
        &c0.params(),
        &settings,
    );
    log::info!(
        "optimizer: {:?} after {} iterations, {} evaluations, E = {:.3e}",
        result.termination,
        result.iterations,
        result.evaluations,
        result.value
    );
    let best = c0.with_params(&result.x)?;
    let sol = verify(&best, cfg, result)?;
    if !(sol.per_k_error() < cfg.threshold) {
        return Err(PumpError::NotConverged { per_k: sol.per_k_error(), iterations: sol.iterations, solution: Box::new(sol) });
    }
    if !(sol.gap_margin > cfg.gap_min) {
        return Err(PumpError::GapViolation { margin: sol.gap_margin, required: cfg.gap_min, solution: Some(Box::new(sol)) });
    }
    if !((sol.pumped_charge - sol.pumped_charge.round()).abs() <= 0.1) {
        return Err(PumpError::NotQuantized { charge: sol.pumped_charge, solution: Box::new(sol) });
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::{control_freak_R, control_freak_u, rm_bloch_field};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn small() -> InverseConfig {
        InverseConfig { objective_steps: 2000, verify_steps: 4000, trajectory_nodes: 401, gap_penalty: 0.0, ..Default::default() }
    }

    #[test]
    fn nn_vector_reproduces_rice_mele() {
        let p = RmParams::default();
        let r = rm_bloch_field(&p);
        let c = NnCoefficients::rice_mele(&p, 2);
        for &(k, t) in &[(0.3, 1.0), (-2.0, 5.5), (3.0, 11.0)] {
            let u = nn_vector(&c.at(t), k, 1.0);
            assert_abs_diff_eq!((u - r.eval(k, t)).norm(), 0.0, epsilon = 1e-14);
        }
        let z = Complex64::new(0.0, 0.0);
        let u = nn_vector(&[Complex64::new(0.7, 3.0), z, z], 1.3, 1.0);
        assert_eq!(u, RealVec3::new(0.0, 0.0, 0.7));
    }

    #[test]
    fn nn_vector_reproduces_control_freak() {
        let p = ControlFreakParams::with_period(6.0);
        let u = control_freak_u(&p);
        let c = NnCoefficients::new(Baseline::ControlFreak { period: 6.0, lambda: 0.0 }, 0);
        for &(k, t) in &[(0.3, 1.0), (-2.0, 4.5), (3.0, 5.9)] {
            assert_abs_diff_eq!((nn_field(&c).eval(k, t) - u.eval(k, t)).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn nn_field_has_only_first_harmonics() {
        let mut c = NnCoefficients::rice_mele(&RmParams::default(), 3);
        c.amplitudes[1] = [Complex64::new(0.2, -0.1), Complex64::new(0.05, 0.3), Complex64::new(-0.4, 0.1)];
        let u = nn_field(&c);
        let n = 16;
        let kg = KGrid::new(n, 1.0).unwrap();
        let samples = u.sample_grid(kg.points(), 2.7);
        for comp in 0..3 {
            let v: Vec<f64> = samples.iter().map(|s| s.to_array()[comp]).collect();
            for h in 2..=n / 2 {
                let (mut re, mut im) = (0.0, 0.0);
                for (m, &k) in kg.points().iter().enumerate() {
                    re += v[m] * (h as f64 * k).cos();
                    im += v[m] * (h as f64 * k).sin();
                }
                assert!(re.abs() < 1e-12 && im.abs() < 1e-12, "harmonic {h} of component {comp}");
            }
        }
    }

    #[test]
    fn params_round_trip() {
        let c = NnCoefficients::rice_mele(&RmParams::default(), 3);
        let x: Vec<f64> = (0..18).map(|i| i as f64 * 0.1).collect();
        let d = c.with_params(&x).unwrap();
        assert_eq!(d.params(), x);
        assert_eq!(d.amplitudes[1][2], Complex64::new(1.0, 1.1));
        assert!(c.with_params(&x[..5]).is_err());
    }

    #[test]
    fn periodic_coefficients() {
        let mut c = NnCoefficients::rice_mele(&RmParams::default(), 2);
        c.amplitudes[0][1] = Complex64::new(0.3, 0.2);
        let (a, b) = (c.at(0.0), c.at(c.period()));
        for j in 0..3 {
            assert_abs_diff_eq!((a[j] - b[j]).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sphere_ode_examples() {
        let u = BlochField::constant(1.0, 2.0, RealVec3::new(0.0, 0.6, 0.8));
        let traj = integrate_sphere_ode(&u, 0.0, RealVec3::new(0.0, 0.6, 0.8), 100).unwrap();
        assert!(traj.iter().all(|r| (*r - RealVec3::new(0.0, 0.6, 0.8)).norm() < 1e-14));

        let u = BlochField::constant(1.0, 2.0, RealVec3::new(0.0, 0.0, 1.0));
        let traj = integrate_sphere_ode(&u, 0.0, RealVec3::new(1.0, 0.0, 0.0), 200).unwrap();
        for (i, r) in traj.iter().enumerate() {
            let t = 2.0 * i as f64 / 200.0;
            assert_abs_diff_eq!((*r - RealVec3::new(t.cos(), t.sin(), 0.0)).norm(), 0.0, epsilon = 1e-13);
        }
        assert!(integrate_sphere_ode(&u, 0.0, RealVec3::new(2.0, 0.0, 0.0), 10).is_err());
        let bad = BlochField::new(1.0, 1.0, |_, _| RealVec3::new(f64::NAN, 0.0, 0.0));
        assert!(matches!(integrate_sphere_ode(&bad, 0.0, RealVec3::new(1.0, 0.0, 0.0), 10), Err(PumpError::Propagation { step: 0, .. })));
    }

    proptest! {
        #[test]
        fn sphere_ode_preserves_norm(x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64, k in -3.0..3.0f64) {
            let u = BlochField::new(1.0, 4.0, move |k, t| RealVec3::new(x + (k + t).cos(), y * t, z - k.sin()));
            let traj = integrate_sphere_ode(&u, k, RealVec3::new(0.0, 0.0, 1.0), 1000).unwrap();
            for r in traj {
                prop_assert!((r.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rm_round_trip_recovers_direction() {
        let p = RmParams::default();
        let r = rm_bloch_field(&p);
        let u = r.counterdiabatic();
        let rhat = r.normalized();
        for &k in &[-3.0, -1.0, 0.5, 2.2] {
            let traj = integrate_sphere_ode(&u, k, rhat.eval(k, 0.0), 10_000).unwrap();
            let worst = traj
                .iter()
                .enumerate()
                .map(|(i, v)| (*v - rhat.eval(k, p.period() * i as f64 / 10_000.0)).norm())
                .fold(0.0, f64::max);
            assert!(worst < 1e-6, "k = {k}: {worst}");
        }
    }

    #[test]
    fn control_freak_round_trip() {
        let p = ControlFreakParams::with_period(6.0);
        let c = NnCoefficients::new(Baseline::ControlFreak { period: 6.0, lambda: 0.0 }, 0);
        let u = nn_field(&c);
        let kg = KGrid::new(16, 1.0).unwrap();
        let traj = SphereTrajectory::trace(&u, &kg, 6000, 601).unwrap();
        let r = reconstruct_R(&u, &traj).unwrap();
        let exact = control_freak_R(&p);
        for &k in kg.points() {
            for &t in &[0.0, 1.3, 2.99, 3.0, 4.4, 6.0] {
                assert_abs_diff_eq!((r.eval(k, t) - exact.eval(k, t)).norm(), 0.0, epsilon = 1e-6);
            }
        }
        assert!(field_boundary_error(&r, &kg) < 1e-10);
    }

    #[test]
    fn static_reconstruction_is_identity() {
        let v = RealVec3::new(0.3, -0.4, 1.2);
        let u = BlochField::new(1.0, 2.0, move |k, _| v + RealVec3::new(0.1 * k.cos(), 0.0, 0.0));
        let kg = KGrid::new(8, 1.0).unwrap();
        let traj = SphereTrajectory::trace(&u, &kg, 100, 11).unwrap();
        let r = reconstruct_R(&u, &traj).unwrap();
        for &k in kg.points() {
            assert_abs_diff_eq!((r.eval(k, 0.77) - u.eval(k, 0.77)).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn negative_projection_is_a_gap_violation() {
        // u flips sign halfway: R̂ stays put while u·R̂ turns negative.
        let u = BlochField::new(1.0, 2.0, |_, t| RealVec3::new(0.0, 0.0, if t < 1.0 { 1.0 } else { -1.0 }));
        let kg = KGrid::new(8, 1.0).unwrap();
        let traj = SphereTrajectory::trace(&u, &kg, 100, 11).unwrap();
        assert!(matches!(reconstruct_R(&u, &traj), Err(PumpError::GapViolation { .. })));
    }

    #[test]
    fn objective_matches_direct_integration() {
        let mut c = NnCoefficients::rice_mele(&RmParams::default(), 2);
        c.amplitudes[0] = [Complex64::new(0.1, -0.2), Complex64::new(0.05, 0.1), Complex64::new(-0.1, 0.0)];
        let cfg = InverseConfig { k_points: 8, objective_steps: 4000, ..Default::default() };
        let kg = KGrid::new(8, 1.0).unwrap();
        let u = nn_field(&c);
        let traj = SphereTrajectory::trace(&u, &kg, 4000, 2).unwrap();
        let start: Vec<RealVec3> = kg.points().iter().map(|&k| u.eval(k, 0.0)).collect();
        let end: Vec<RealVec3> = kg
            .points()
            .iter()
            .enumerate()
            .map(|(m, &k)| traj.node(m, 1) * u.eval(k, c.period()).dot(&traj.node(m, 1)))
            .collect();
        // the optimizer template starts from zero amplitudes
        let template = NnCoefficients::rice_mele(&RmParams::default(), 2);
        let mut obj = Objective::new(&template, &kg, 4000, 0.05, 0.0);
        assert_abs_diff_eq!(obj.eval(&c.amplitudes), boundary_error(&start, &end), epsilon = 1e-12);
        assert_abs_diff_eq!(objective_value(&c, &cfg).unwrap(), boundary_error(&start, &end), epsilon = 1e-12);
    }

    #[test]
    fn boundary_error_examples() {
        let a: Vec<RealVec3> = (0..100).map(|i| RealVec3::new(i as f64, 1.0, -2.0)).collect();
        assert_eq!(boundary_error(&a, &a), 0.0);
        let eps = 1e-3;
        let b: Vec<RealVec3> = a.iter().map(|v| *v + RealVec3::new(eps, 0.0, 0.0)).collect();
        assert_abs_diff_eq!(boundary_error(&a, &b), 100.0 * eps * eps, epsilon = 1e-15);
    }

    #[test]
    fn trigonometric_interpolation_between_grid_points() {
        let p = RmParams::default();
        let c = NnCoefficients::rice_mele(&p, 0);
        let u = nn_field(&c);
        let kg = KGrid::new(32, 1.0).unwrap();
        let traj = SphereTrajectory::trace(&u, &kg, 3200, 101).unwrap();
        let direct = integrate_sphere_ode(&u, 1.1, u.eval(1.1, 0.0).unit().unwrap(), 3200).unwrap();
        let t = 0.37 * p.period();
        let i = (0.37f64 * 3200.0).round() as usize;
        assert_abs_diff_eq!((traj.rhat(1.1, t) - direct[i]).norm(), 0.0, epsilon = 1e-4);
    }

    #[test]
    fn periodic_start_returns_immediately() {
        let c = NnCoefficients::new(Baseline::ControlFreak { period: 6.0, lambda: 0.0 }, 1);
        let sol = optimize(&c, &small()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.method, Method::None);
        assert!(sol.coefficients.params().iter().all(|v| *v == 0.0));
        assert!(sol.per_k_error() < 1e-12);
        assert_abs_diff_eq!(sol.pumped_charge.abs(), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn unoptimized_baseline_reports_nonzero_error() {
        let c = NnCoefficients::rice_mele(&RmParams::default(), 0);
        match optimize(&c, &small()) {
            Err(PumpError::NotConverged { per_k, solution, .. }) => {
                assert!(per_k > 1e-4);
                assert!(solution.verified_boundary_error > 0.0);
            }
            other => panic!("{:?}", other.map(|s| s.verified_boundary_error)),
        }
    }

    #[test]
    fn document_round_trip() {
        let c = NnCoefficients::new(Baseline::ControlFreak { period: 6.0, lambda: 0.0 }, 1);
        let sol = optimize(&c, &small()).unwrap();
        let text = sol.to_json().unwrap();
        let doc = SolutionDocument::from_json(&text).unwrap();
        assert_eq!(doc, sol.to_document());
        let again = doc.rebuild().unwrap();
        assert_eq!(again.verified_boundary_error, sol.verified_boundary_error);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(SolutionDocument::from_json(&bumped), Err(PumpError::Config(_))));
    }
}
