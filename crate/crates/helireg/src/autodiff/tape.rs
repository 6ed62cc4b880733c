//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order with their parent indices and the
//! local partials computed during the forward pass, so the backward sweep is
//! a single reverse loop of fused multiply-adds. Tapes are single-threaded,
//! single-use objects; [`Tape::clear`] recycles the allocation between
//! gradient evaluations.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::{AdError, OpKind, Real};

const TAN_SINGULARITY_EPS: f64 = 1e-15;

/// One recorded primitive: op kind, parent indices, local partials.
/// Unused parent slots self-reference with a zero partial.
#[derive(Clone, Copy)]
struct Node {
    op: OpKind,
    parents: [u32; 3],
    partials: [f64; 3],
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    values: Vec<f64>,
    /// Node index of the first domain violation in the forward pass.
    fault: Option<u32>,
}

/// Append-only record of a scalar computation.
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            inner: RefCell::new(TapeInner::default()),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes but keep the allocations for reuse.
    pub fn clear(&self) {
        let mut t = self.inner.borrow_mut();
        t.nodes.clear();
        t.values.clear();
        t.fault = None;
    }

    /// Roll the tape back to `len` nodes, invalidating later variables.
    ///
    /// Lets a shared leaf prefix (e.g. network parameters) be reused across
    /// many small subgraphs without re-registering it.
    pub fn truncate(&self, len: usize) {
        let mut t = self.inner.borrow_mut();
        t.nodes.truncate(len);
        t.values.truncate(len);
        if let Some(idx) = t.fault {
            if idx as usize >= len {
                t.fault = None;
            }
        }
    }

    /// Register an input leaf.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        self.push(OpKind::Leaf, [0, 0, 0], [0.0, 0.0, 0.0], value)
    }

    /// Register a slice of input leaves, in order.
    pub fn leaves(&self, values: &[f64]) -> Vec<Var<'_>> {
        let start = {
            let mut t = self.inner.borrow_mut();
            let start = t.values.len() as u32;
            let new_len = start as usize + values.len();
            t.nodes.resize(
                new_len,
                Node {
                    op: OpKind::Leaf,
                    parents: [0, 0, 0],
                    partials: [0.0, 0.0, 0.0],
                },
            );
            t.values.extend_from_slice(values);
            start
        };
        values
            .iter()
            .enumerate()
            .map(|(i, &value)| Var {
                tape: self,
                idx: start + i as u32,
                value,
            })
            .collect()
    }

    pub fn fault(&self) -> Option<AdError> {
        let t = self.inner.borrow();
        t.fault.map(|node| AdError::Domain {
            op: t.nodes[node as usize].op,
            node: node as usize,
        })
    }

    fn push(&self, op: OpKind, parents: [u32; 3], partials: [f64; 3], value: f64) -> Var<'_> {
        let mut t = self.inner.borrow_mut();
        let idx = t.values.len() as u32;
        t.nodes.push(Node {
            op,
            parents,
            partials,
        });
        t.values.push(value);
        // A NaN/inf anywhere in (value, partials) makes this sum non-finite.
        if !(value + partials[0] + partials[1] + partials[2]).is_finite()
            && t.fault.is_none()
            && op != OpKind::Leaf
        {
            t.fault = Some(idx);
        }
        Var {
            tape: self,
            idx,
            value,
        }
    }

    fn fault_at(&self, idx: u32) {
        let mut t = self.inner.borrow_mut();
        if t.fault.is_none() {
            t.fault = Some(idx);
        }
    }

    /// One backward sweep from `output`; returns the adjoint of every node.
    ///
    /// Leaf adjoints occupy the indices at which the leaves were registered.
    pub fn gradient(&self, output: Var<'_>) -> Result<Vec<f64>, AdError> {
        let mut adj = Vec::new();
        self.gradient_into(output, &mut adj)?;
        Ok(adj)
    }

    /// As [`Tape::gradient`] but reusing the caller's buffer.
    pub fn gradient_into(&self, output: Var<'_>, adj: &mut Vec<f64>) -> Result<(), AdError> {
        debug_assert!(std::ptr::eq(output.tape, self));
        if let Some(err) = self.fault() {
            return Err(err);
        }
        if !output.value.is_finite() {
            return Err(AdError::NonFinite);
        }
        let t = self.inner.borrow();
        let n = t.values.len();
        adj.clear();
        adj.resize(n, 0.0);
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let a = adj[i];
            if a != 0.0 {
                let node = &t.nodes[i];
                adj[node.parents[0] as usize] += a * node.partials[0];
                adj[node.parents[1] as usize] += a * node.partials[1];
                adj[node.parents[2] as usize] += a * node.partials[2];
            }
        }
        // Leaves self-reference with zero partials, so the sweep above never
        // contaminates adjoints; nothing to fix up.
        Ok(())
    }
}

/// A value recorded on a [`Tape`]. Plain data; copyable and cheap.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    value: f64,
}

impl<'t> Var<'t> {
    pub fn index(self) -> usize {
        self.idx as usize
    }

    #[inline]
    fn unary(self, op: OpKind, value: f64, partial: f64) -> Self {
        self.tape
            .push(op, [self.idx, self.idx, self.idx], [partial, 0.0, 0.0], value)
    }

    #[inline]
    fn binary(self, op: OpKind, o: Self, value: f64, da: f64, db: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, o.tape), "variables from different tapes");
        self.tape
            .push(op, [self.idx, o.idx, self.idx], [da, db, 0.0], value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.binary(OpKind::Add, o, self.value + o.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.binary(OpKind::Sub, o, self.value - o.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary(OpKind::Mul, o, self.value * o.value, o.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let value = self.value / o.value;
        let out = self.binary(
            OpKind::Div,
            o,
            value,
            1.0 / o.value,
            -value / o.value,
        );
        if o.value == 0.0 {
            self.tape.fault_at(out.idx);
        }
        out
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -self.value, -1.0)
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn val(self) -> f64 {
        self.value
    }
    #[inline]
    fn add_const(self, c: f64) -> Self {
        self.unary(OpKind::AddConst, self.value + c, 1.0)
    }
    #[inline]
    fn mul_const(self, c: f64) -> Self {
        self.unary(OpKind::MulConst, self.value * c, c)
    }
    #[inline]
    fn sin(self) -> Self {
        self.unary(OpKind::Sin, self.value.sin(), self.value.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.unary(OpKind::Cos, self.value.cos(), -self.value.sin())
    }
    #[inline]
    fn tan(self) -> Self {
        let c = self.value.cos();
        if c.abs() < TAN_SINGULARITY_EPS {
            let out = self.unary(OpKind::Tan, f64::NAN, f64::NAN);
            self.tape.fault_at(out.idx);
            return out;
        }
        self.unary(OpKind::Tan, self.value.tan(), 1.0 / (c * c))
    }
    #[inline]
    fn atan(self) -> Self {
        self.unary(
            OpKind::Atan,
            self.value.atan(),
            1.0 / (1.0 + self.value * self.value),
        )
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(OpKind::Exp, e, e)
    }
    #[inline]
    fn sqrt(self) -> Self {
        if self.value < 0.0 {
            let out = self.unary(OpKind::Sqrt, f64::NAN, f64::NAN);
            self.tape.fault_at(out.idx);
            return out;
        }
        let s = self.value.sqrt();
        self.unary(OpKind::Sqrt, s, 0.5 / s)
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        if self.value < 0.0 && k.fract() != 0.0 {
            let out = self.unary(OpKind::Pow, f64::NAN, f64::NAN);
            self.tape.fault_at(out.idx);
            return out;
        }
        let v = self.value.powf(k);
        let d = if k == 0.0 {
            0.0
        } else {
            k * self.value.powf(k - 1.0)
        };
        self.unary(OpKind::Pow, v, d)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.unary(OpKind::Tanh, t, 1.0 - t * t)
    }
    #[inline]
    fn abs(self) -> Self {
        let d = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(OpKind::Abs, self.value.abs(), d)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        let (da, db) = if self.value > other.value {
            (1.0, 0.0)
        } else if self.value < other.value {
            (0.0, 1.0)
        } else {
            (0.0, 0.0)
        };
        self.binary(OpKind::Max, other, self.value.max(other.value), da, db)
    }
    #[inline]
    fn clamp_min(self, c: f64) -> Self {
        if self.value > c {
            self
        } else {
            self.unary(OpKind::ClampMin, c, 0.0)
        }
    }
    #[inline]
    fn mul_add(self, b: Self, c: Self) -> Self {
        debug_assert!(std::ptr::eq(self.tape, b.tape) && std::ptr::eq(self.tape, c.tape));
        self.tape.push(
            OpKind::MulAdd,
            [self.idx, b.idx, c.idx],
            [b.value, self.value, 1.0],
            self.value * b.value + c.value,
        )
    }
}
