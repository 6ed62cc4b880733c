//! Scalar automatic differentiation.
//!
//! Three mechanisms share one primitive set (`Real`):
//!
//! * [`Dual`] — forward-mode first directional derivatives (cheap, few inputs).
//! * [`HyperDual`] — forward-mode jets carrying two first-order seeds and one
//!   second-order component, enough to evaluate second directional
//!   derivatives along a curve in a single pass.
//! * [`Tape`]/[`Var`] — reverse mode for gradients of a scalar with respect
//!   to many leaves (network weights).
//!
//! The two modes compose: a tape variable implements `Real`, so a
//! `HyperDual<Var>` propagates input-direction jets whose components are
//! themselves tape nodes. Reverse-sweeping the resulting scalar then yields
//! exact parameter gradients of quantities built from first and second
//! input derivatives.

mod tape;

pub use tape::{Tape, Var};

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Identifies the primitive that produced a tape node or raised a fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    MulAdd,
    Div,
    Neg,
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Sqrt,
    Pow,
    Tanh,
    Abs,
    Max,
    AddConst,
    MulConst,
    ClampMin,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdError {
    /// A primitive was evaluated outside its domain (division by zero,
    /// fractional power of a negative base, tangent at an odd multiple of
    /// pi/2, square root of a negative number).
    #[error("domain violation in {op:?} at node {node}")]
    Domain { op: OpKind, node: usize },
    /// Forward-mode evaluation produced a non-finite value without a
    /// specific offending primitive being identifiable.
    #[error("non-finite value in forward-mode evaluation")]
    NonFinite,
}

/// Threshold below which |cos x| is treated as a tangent singularity.
const TAN_SINGULARITY_EPS: f64 = 1e-15;

/// The closed primitive set shared by every scalar kind.
///
/// `max`, `abs` and `clamp_min` take the zero subgradient at their kink, so
/// the hinge boundary penalty is exactly zero there along with its
/// derivative.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Primal value, used for branching decisions (max, abs, clamps).
    fn val(self) -> f64;
    fn add_const(self, c: f64) -> Self;
    fn mul_const(self, c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn atan(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, k: f64) -> Self;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn max(self, other: Self) -> Self;
    /// max(self, c) with constant c; derivative zero on the clamped branch.
    fn clamp_min(self, c: f64) -> Self;
    /// `self * b + c`; tape scalars record it as one node.
    #[inline]
    fn mul_add(self, b: Self, c: Self) -> Self {
        self * b + c
    }
}

impl Real for f64 {
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn add_const(self, c: f64) -> Self {
        self + c
    }
    #[inline]
    fn mul_const(self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tan(self) -> Self {
        if f64::cos(self).abs() < TAN_SINGULARITY_EPS {
            f64::NAN
        } else {
            f64::tan(self)
        }
    }
    #[inline]
    fn atan(self) -> Self {
        f64::atan(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        f64::powf(self, k)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    #[inline]
    fn clamp_min(self, c: f64) -> Self {
        f64::max(self, c)
    }
}

/// Forward-mode dual number: value plus one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub value: f64,
    pub deriv: f64,
}

impl Dual {
    #[inline]
    pub fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }

    /// Constant with zero derivative.
    #[inline]
    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0)
    }

    /// Input seeded with the component of the chosen direction.
    #[inline]
    pub fn seeded(value: f64, seed: f64) -> Self {
        Self::new(value, seed)
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.value + o.value, self.deriv + o.deriv)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.value - o.value, self.deriv - o.deriv)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.value * o.value,
            self.deriv * o.value + self.value * o.deriv,
        )
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let value = self.value / o.value;
        Self::new(value, (self.deriv - value * o.deriv) / o.value)
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.deriv)
    }
}

impl Real for Dual {
    #[inline]
    fn val(self) -> f64 {
        self.value
    }
    #[inline]
    fn add_const(self, c: f64) -> Self {
        Self::new(self.value + c, self.deriv)
    }
    #[inline]
    fn mul_const(self, c: f64) -> Self {
        Self::new(self.value * c, self.deriv * c)
    }
    #[inline]
    fn sin(self) -> Self {
        Self::new(self.value.sin(), self.value.cos() * self.deriv)
    }
    #[inline]
    fn cos(self) -> Self {
        Self::new(self.value.cos(), -self.value.sin() * self.deriv)
    }
    #[inline]
    fn tan(self) -> Self {
        let c = self.value.cos();
        if c.abs() < TAN_SINGULARITY_EPS {
            return Self::new(f64::NAN, f64::NAN);
        }
        Self::new(self.value.tan(), self.deriv / (c * c))
    }
    #[inline]
    fn atan(self) -> Self {
        Self::new(
            self.value.atan(),
            self.deriv / (1.0 + self.value * self.value),
        )
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        Self::new(e, e * self.deriv)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Self::new(s, self.deriv / (2.0 * s))
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        let v = self.value.powf(k);
        Self::new(v, k * self.value.powf(k - 1.0) * self.deriv)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        Self::new(t, (1.0 - t * t) * self.deriv)
    }
    #[inline]
    fn abs(self) -> Self {
        if self.value > 0.0 {
            self
        } else if self.value < 0.0 {
            -self
        } else {
            Self::new(0.0, 0.0)
        }
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        if self.value > other.value {
            self
        } else if self.value < other.value {
            other
        } else {
            Self::new(self.value, 0.0)
        }
    }
    #[inline]
    fn clamp_min(self, c: f64) -> Self {
        if self.value > c {
            self
        } else {
            Self::new(c, 0.0)
        }
    }
}

/// Forward-mode jet with two first-order seeds and a cross second-order
/// component.
///
/// For an input `x + v1·e1 + v2·e2 + s·e1e2` (with `e1² = e2² = 0`) the
/// output carries
///
/// ```text
/// d1  = ∇f·v1
/// d2  = ∇f·v2
/// d12 = v1ᵀ(D²f)v2 + ∇f·s
/// ```
///
/// Seeding `v1 = v2 = v, s = 0` gives the pure second directional
/// derivative; seeding `s` with the curvature of a trajectory gives the full
/// second time-derivative of `f` along it in one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperDual<T = f64> {
    pub value: T,
    pub d1: T,
    pub d2: T,
    pub d12: T,
}

impl<T: Real> HyperDual<T> {
    #[inline]
    pub fn new(value: T, d1: T, d2: T, d12: T) -> Self {
        Self { value, d1, d2, d12 }
    }

    #[inline]
    pub fn constant(value: T) -> Self {
        let z = value.mul_const(0.0);
        Self::new(value, z, z, z)
    }

    /// Multiply every component by the plain scalar `k`.
    ///
    /// `k` is treated as a constant of the jet structure; when `T` is a tape
    /// variable this is the cheap path for weight-times-activation products.
    #[inline]
    pub fn scale_by(self, k: T) -> Self {
        Self::new(self.value * k, self.d1 * k, self.d2 * k, self.d12 * k)
    }

    /// Chain rule through a scalar map with first and second derivative
    /// supplied at the primal point.
    #[inline]
    fn lift(self, value: T, dg: T, d2g: T) -> Self {
        Self::new(
            value,
            dg * self.d1,
            dg * self.d2,
            dg * self.d12 + d2g * self.d1 * self.d2,
        )
    }

}

impl HyperDual<f64> {
    /// Input seeded for a pure second directional derivative along `v`.
    #[inline]
    pub fn variable(value: f64, v: f64) -> Self {
        Self::new(value, v, v, 0.0)
    }
}

impl<T: Real> Add for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(
            self.value + o.value,
            self.d1 + o.d1,
            self.d2 + o.d2,
            self.d12 + o.d12,
        )
    }
}

impl<T: Real> Sub for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.value - o.value,
            self.d1 - o.d1,
            self.d2 - o.d2,
            self.d12 - o.d12,
        )
    }
}

impl<T: Real> Mul for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.value * o.value,
            self.d1 * o.value + self.value * o.d1,
            self.d2 * o.value + self.value * o.d2,
            self.d12 * o.value + self.d1 * o.d2 + self.d2 * o.d1 + self.value * o.d12,
        )
    }
}

impl<T: Real> Div for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let value = self.value / o.value;
        let d1 = (self.d1 - value * o.d1) / o.value;
        let d2 = (self.d2 - value * o.d2) / o.value;
        let d12 = (self.d12 - d1 * o.d2 - d2 * o.d1 - value * o.d12) / o.value;
        Self::new(value, d1, d2, d12)
    }
}

impl<T: Real> Neg for HyperDual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d1, -self.d2, -self.d12)
    }
}

impl<T: Real> Real for HyperDual<T> {
    #[inline]
    fn val(self) -> f64 {
        self.value.val()
    }
    #[inline]
    fn add_const(self, c: f64) -> Self {
        Self::new(self.value.add_const(c), self.d1, self.d2, self.d12)
    }
    #[inline]
    fn mul_const(self, c: f64) -> Self {
        Self::new(
            self.value.mul_const(c),
            self.d1.mul_const(c),
            self.d2.mul_const(c),
            self.d12.mul_const(c),
        )
    }
    #[inline]
    fn sin(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.lift(s, c, -s)
    }
    #[inline]
    fn cos(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.lift(c, -s, -c)
    }
    #[inline]
    fn tan(self) -> Self {
        let t = self.value.tan();
        let sec2 = t * t + t.mul_const(0.0).add_const(1.0);
        let d2g = t.mul_const(2.0) * sec2;
        self.lift(t, sec2, d2g)
    }
    #[inline]
    fn atan(self) -> Self {
        let denom = self.value * self.value + self.value.mul_const(0.0).add_const(1.0);
        let one = self.value.mul_const(0.0).add_const(1.0);
        let dg = one / denom;
        let d2g = -(self.value.mul_const(2.0)) / (denom * denom);
        self.lift(self.value.atan(), dg, d2g)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.lift(e, e, e)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        let one = self.value.mul_const(0.0).add_const(1.0);
        let dg = one / s.mul_const(2.0);
        let d2g = -(one / (s * s * s).mul_const(4.0));
        self.lift(s, dg, d2g)
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        let dg = self.value.powf(k - 1.0).mul_const(k);
        let d2g = self.value.powf(k - 2.0).mul_const(k * (k - 1.0));
        self.lift(self.value.powf(k), dg, d2g)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        let s = (t * t).mul_const(-1.0).add_const(1.0);
        let d2g = t.mul_const(-2.0) * s;
        self.lift(t, s, d2g)
    }
    #[inline]
    fn abs(self) -> Self {
        let v = self.val();
        if v > 0.0 {
            self
        } else if v < 0.0 {
            -self
        } else {
            Self::new(self.value.abs(), self.d1.mul_const(0.0), self.d2.mul_const(0.0), self.d12.mul_const(0.0))
        }
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        let a = self.val();
        let b = other.val();
        if a > b {
            self
        } else if a < b {
            other
        } else {
            Self::new(
                self.value.max(other.value),
                self.d1.mul_const(0.0),
                self.d2.mul_const(0.0),
                self.d12.mul_const(0.0),
            )
        }
    }
    #[inline]
    fn clamp_min(self, c: f64) -> Self {
        if self.val() > c {
            self
        } else {
            Self::new(
                self.value.clamp_min(c),
                self.d1.mul_const(0.0),
                self.d2.mul_const(0.0),
                self.d12.mul_const(0.0),
            )
        }
    }
}

/// Second-order Taylor jet along a curve: value, first and second time
/// derivative of a quantity transported along `w(t)`.
///
/// Equivalent to a [`HyperDual`] with equal first-order seeds and the curve
/// curvature in the cross slot, but stores one fewer component; this is the
/// workhorse of the Lie-derivative pipeline, where every quantity carries
/// `(f, L_S f, L_S^2 f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2<T = f64> {
    pub value: T,
    pub d: T,
    pub dd: T,
}

impl<T: Real> Jet2<T> {
    #[inline]
    pub fn new(value: T, d: T, dd: T) -> Self {
        Self { value, d, dd }
    }

    #[inline]
    pub fn constant(value: T) -> Self {
        let z = value.mul_const(0.0);
        Self::new(value, z, z)
    }

    /// Multiply every component by a plain scalar (cheap weight product).
    #[inline]
    pub fn scale_by(self, k: T) -> Self {
        Self::new(self.value * k, self.d * k, self.dd * k)
    }

    /// Fused `self * k + acc`, the inner step of weighted accumulations.
    #[inline]
    pub fn mul_add_scaled(self, k: T, acc: Self) -> Self {
        Self::new(
            self.value.mul_add(k, acc.value),
            self.d.mul_add(k, acc.d),
            self.dd.mul_add(k, acc.dd),
        )
    }

    /// Chain rule through a scalar map given g'(x) and g''(x).
    #[inline]
    fn lift(self, value: T, dg: T, d2g: T) -> Self {
        Self::new(
            value,
            dg * self.d,
            dg * self.dd + d2g * self.d * self.d,
        )
    }

    #[inline]
    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        let s = (t * t).mul_const(-1.0).add_const(1.0);
        let d2g = t.mul_const(-2.0) * s;
        self.lift(t, s, d2g)
    }

    #[inline]
    pub fn sin(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.lift(s, c, -s)
    }

    #[inline]
    pub fn cos(self) -> Self {
        let s = self.value.sin();
        let c = self.value.cos();
        self.lift(c, -s, -c)
    }
}

impl<T: Real> Add for Jet2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.value + o.value, self.d + o.d, self.dd + o.dd)
    }
}

impl<T: Real> Sub for Jet2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.value - o.value, self.d - o.d, self.dd - o.dd)
    }
}

impl<T: Real> Mul for Jet2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.value * o.value,
            self.d * o.value + self.value * o.d,
            self.dd * o.value + (self.d * o.d).mul_const(2.0) + self.value * o.dd,
        )
    }
}

/// Reverse-mode gradient of a scalar function of `x.len()` leaves.
pub fn reverse_gradient<F>(f: F, x: &[f64]) -> Result<Vec<f64>, AdError>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.leaves(x);
    let out = f(&vars);
    let adj = tape.gradient(out)?;
    Ok(adj[..x.len()].to_vec())
}

/// Jacobian-vector product of a scalar function via dual propagation.
///
/// Returns `(f(x), Df(x)·v)`.
pub fn directional<F>(f: F, x: &[f64], v: &[f64]) -> Result<(f64, f64), AdError>
where
    F: FnOnce(&[Dual]) -> Dual,
{
    assert_eq!(x.len(), v.len(), "direction length mismatch");
    let inputs: Vec<Dual> = x
        .iter()
        .zip(v)
        .map(|(&xi, &vi)| Dual::seeded(xi, vi))
        .collect();
    let out = f(&inputs);
    if out.value.is_finite() && out.deriv.is_finite() {
        Ok((out.value, out.deriv))
    } else {
        Err(AdError::NonFinite)
    }
}

/// Second directional derivative via hyperdual propagation with both seeds
/// equal to `v`.
///
/// Returns `(f(x), Df(x)·v, vᵀ(D²f)(x)v)`.
pub fn second_directional<F>(f: F, x: &[f64], v: &[f64]) -> Result<(f64, f64, f64), AdError>
where
    F: FnOnce(&[HyperDual]) -> HyperDual,
{
    assert_eq!(x.len(), v.len(), "direction length mismatch");
    let inputs: Vec<HyperDual> = x
        .iter()
        .zip(v)
        .map(|(&xi, &vi)| HyperDual::variable(xi, vi))
        .collect();
    let out = f(&inputs);
    if out.value.is_finite() && out.d1.is_finite() && out.d12.is_finite() {
        Ok((out.value, out.d1, out.d12))
    } else {
        Err(AdError::NonFinite)
    }
}
