//! Two-band Bloch algebra: Bloch vectors, Pauli contraction, the
//! counter-diabatic field and the lower-band projector.
//!
//! Conventions: `σ_z = diag(1, -1)` and the occupied band of `R·σ` has
//! eigenvalue `-|R|`, so its projector is `½(1 - R̂·σ)`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PumpError, Result};

/// Any `|R|` below this (energy units) is treated as a closed gap.
pub const GAP_GUARD: f64 = 1e-9;

/// Stencil step for fields without an analytic time derivative, as a fraction of the period.
pub const DEFAULT_STENCIL_FRACTION: f64 = 1e-5;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RealVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl RealVec3 {
    pub const ZERO: RealVec3 = RealVec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(&self, other: &RealVec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &RealVec3) -> RealVec3 {
        RealVec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector along `self`; `None` when the norm is below [`GAP_GUARD`].
    pub fn unit(&self) -> Option<RealVec3> {
        let n = self.norm();
        (n >= GAP_GUARD && n.is_finite()).then(|| *self * (1.0 / n))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Rodrigues rotation of `self` about the unit `axis` by `angle` (right-handed).
    pub fn rotated(&self, axis: &RealVec3, angle: f64) -> RealVec3 {
        let (s, c) = angle.sin_cos();
        *self * c + axis.cross(self) * s + *axis * (axis.dot(self) * (1.0 - c))
    }
}

impl Add for RealVec3 {
    type Output = RealVec3;
    fn add(self, o: RealVec3) -> RealVec3 {
        RealVec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for RealVec3 {
    fn add_assign(&mut self, o: RealVec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for RealVec3 {
    type Output = RealVec3;
    fn sub(self, o: RealVec3) -> RealVec3 {
        RealVec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for RealVec3 {
    type Output = RealVec3;
    fn mul(self, s: f64) -> RealVec3 {
        RealVec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for RealVec3 {
    type Output = RealVec3;
    fn neg(self) -> RealVec3 {
        RealVec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for RealVec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// A 2×2 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix2(pub [[Complex64; 2]; 2]);

impl Matrix2 {
    pub fn identity() -> Self {
        Matrix2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn zero() -> Self {
        Matrix2([[ZERO; 2]; 2])
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        self.0[r][c]
    }

    pub fn mul(&self, o: &Matrix2) -> Matrix2 {
        let mut out = Matrix2::zero();
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] = self.0[r][0] * o.0[0][c] + self.0[r][1] * o.0[1][c];
            }
        }
        out
    }

    pub fn add(&self, o: &Matrix2) -> Matrix2 {
        let mut out = *self;
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] += o.0[r][c];
            }
        }
        out
    }

    pub fn sub(&self, o: &Matrix2) -> Matrix2 {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Matrix2 {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|z| *z *= s);
        out
    }

    pub fn adjoint(&self) -> Matrix2 {
        let m = &self.0;
        Matrix2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn commutator(&self, o: &Matrix2) -> Matrix2 {
        self.mul(o).sub(&o.mul(self))
    }
}

/// Hermitian 2×2 matrix; built from a Bloch vector it is traceless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hermitian2(Matrix2);

impl Hermitian2 {
    /// Accepts `m` if it equals its adjoint within 1e-14 entrywise.
    pub fn try_from_matrix(m: Matrix2) -> Result<Self> {
        if m.sub(&m.adjoint()).max_abs() > 1e-14 * (1.0 + m.max_abs()) {
            return Err(PumpError::Construction("matrix is not Hermitian".into()));
        }
        Ok(Hermitian2(m))
    }

    pub fn matrix(&self) -> &Matrix2 {
        &self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let m = &self.0 .0;
        let mean = 0.5 * (m[0][0].re + m[1][1].re);
        let half_diff = 0.5 * (m[0][0].re - m[1][1].re);
        let r = (half_diff * half_diff + m[0][1].norm_sqr()).sqrt();
        [mean - r, mean + r]
    }
}

/// Lower-band projector `½(1 - R̂·σ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projector2(Matrix2);

impl Projector2 {
    pub fn matrix(&self) -> &Matrix2 {
        &self.0
    }
}

/// `v_x σ_x + v_y σ_y + v_z σ_z`.
pub fn pauli_contract(v: &RealVec3) -> Hermitian2 {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    Hermitian2(Matrix2([
        [c(v.z, 0.0), c(v.x, -v.y)],
        [c(v.x, v.y), c(-v.z, 0.0)],
    ]))
}

/// Total field `u = R + R × ∂tR / |R|²` whose Pauli contraction is `H0 + H_CD`.
pub fn cd_field(r: &RealVec3, drdt: &RealVec3) -> Result<RealVec3> {
    let n2 = r.norm_sqr();
    if !(n2.sqrt() >= GAP_GUARD) {
        return Err(PumpError::GapClosure { norm: n2.sqrt(), k: f64::NAN, t: f64::NAN });
    }
    Ok(*r + r.cross(drdt) * (1.0 / n2))
}

pub fn ground_projector(r: &RealVec3) -> Result<Projector2> {
    let rhat = r
        .unit()
        .ok_or(PumpError::GapClosure { norm: r.norm(), k: f64::NAN, t: f64::NAN })?;
    let h = pauli_contract(&rhat);
    Ok(Projector2(Matrix2::identity().sub(h.matrix()).scale(0.5)))
}

type Evaluator = dyn Fn(f64, f64) -> RealVec3 + Send + Sync;

/// A Bloch vector field over `(k, t) ∈ [-π/a, π/a] × [0, T]`.
///
/// Cheap to clone; the evaluator is shared. An analytic time derivative may be
/// registered, in which case [`time_derivative`] returns it instead of a stencil.
#[derive(Clone)]
pub struct BlochField {
    value: Arc<Evaluator>,
    derivative: Option<Arc<Evaluator>>,
    lattice_constant: f64,
    period: f64,
}

impl fmt::Debug for BlochField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlochField")
            .field("lattice_constant", &self.lattice_constant)
            .field("period", &self.period)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl BlochField {
    pub fn new<F>(lattice_constant: f64, period: f64, value: F) -> Self
    where
        F: Fn(f64, f64) -> RealVec3 + Send + Sync + 'static,
    {
        Self { value: Arc::new(value), derivative: None, lattice_constant, period }
    }

    pub fn with_time_derivative<G>(mut self, derivative: G) -> Self
    where
        G: Fn(f64, f64) -> RealVec3 + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    /// A `(k, t)`-independent field.
    pub fn constant(lattice_constant: f64, period: f64, v: RealVec3) -> Self {
        Self::new(lattice_constant, period, move |_, _| v)
            .with_time_derivative(|_, _| RealVec3::ZERO)
    }

    pub fn lattice_constant(&self) -> f64 {
        self.lattice_constant
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn eval(&self, k: f64, t: f64) -> RealVec3 {
        (self.value)(k, t)
    }

    /// `∂t F(k, t)`: the registered derivative, or a stencil with step `T·1e-5`.
    pub fn dt(&self, k: f64, t: f64) -> RealVec3 {
        match &self.derivative {
            Some(d) => d(k, t),
            None => stencil(self, k, t, self.period * DEFAULT_STENCIL_FRACTION),
        }
    }

    /// Direction field `R̂ = R/|R|`; propagates an analytic derivative when present.
    /// Gap closures evaluate to non-finite components.
    pub fn normalized(&self) -> BlochField {
        let parent = self.clone();
        let value = {
            let p = parent.clone();
            move |k: f64, t: f64| unit_or_nan(p.eval(k, t))
        };
        let out = BlochField::new(self.lattice_constant, self.period, value);
        match &self.derivative {
            Some(_) => out.with_time_derivative(move |k, t| {
                let r = parent.eval(k, t);
                let n = r.norm();
                if n < GAP_GUARD {
                    return RealVec3::new(f64::NAN, f64::NAN, f64::NAN);
                }
                let rhat = r * (1.0 / n);
                let dr = parent.dt(k, t);
                (dr - rhat * rhat.dot(&dr)) * (1.0 / n)
            }),
            None => out,
        }
    }

    /// The total counter-diabatic field `u` built from this `R` field.
    /// Gap closures evaluate to non-finite components.
    pub fn counterdiabatic(&self) -> BlochField {
        let r = self.clone();
        BlochField::new(self.lattice_constant, self.period, move |k, t| {
            cd_field(&r.eval(k, t), &r.dt(k, t)).unwrap_or(RealVec3::new(f64::NAN, f64::NAN, f64::NAN))
        })
    }

    pub fn sample_grid(&self, ks: &[f64], t: f64) -> Vec<RealVec3> {
        ks.iter().map(|&k| self.eval(k, t)).collect()
    }
}

fn unit_or_nan(r: RealVec3) -> RealVec3 {
    r.unit().unwrap_or(RealVec3::new(f64::NAN, f64::NAN, f64::NAN))
}

fn stencil(f: &BlochField, k: f64, t: f64, h: f64) -> RealVec3 {
    let period = f.period;
    if t - h < 0.0 {
        (f.eval(k, t + h) - f.eval(k, t)) * (1.0 / h)
    } else if t + h > period {
        (f.eval(k, t) - f.eval(k, t - h)) * (1.0 / h)
    } else {
        (f.eval(k, t + h) - f.eval(k, t - h)) * (0.5 / h)
    }
}

/// `∂t F(k, t)` with explicit step `h`; registered analytic derivatives take precedence.
/// The stencil is central inside `[0, T]` and one-sided at the endpoints.
pub fn time_derivative(field: &BlochField, k: f64, t: f64, h: f64) -> Result<RealVec3> {
    if !(h > 0.0) {
        return Err(PumpError::Argument(format!("time step must be positive, got {h}")));
    }
    Ok(match &field.derivative {
        Some(d) => d(k, t),
        None => stencil(field, k, t, h),
    })
}

/// Spin-½ rotation `exp(-i θ n̂·σ / 2)` for the rotation vector `θ n̂`.
pub fn su2_rotation(rotation: &RealVec3) -> Matrix2 {
    let angle = rotation.norm();
    if angle == 0.0 {
        return Matrix2::identity();
    }
    let n = *rotation * (1.0 / angle);
    let (s, c) = (0.5 * angle).sin_cos();
    let h = pauli_contract(&n);
    let rot = Matrix2(h.matrix().0.map(|row| row.map(|z| -I * z * s)));
    Matrix2::identity().scale(c).add(&rot)
}
