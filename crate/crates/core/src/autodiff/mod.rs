//! Reverse-mode automatic differentiation over real scalars.
//!
//! Every complex quantity is carried as an `(re, im)` pair of tape
//! variables ([`CVar`]), so the gradients produced by [`Tape::backward`]
//! are the partials of a real loss with respect to the real and imaginary
//! parts separately. That is the pair an optimizer updates directly.
//!
//! The tape is append-only: each node stores its forward value and the
//! local partials towards its inputs. Inputs always precede the node that
//! reads them, so a single reverse sweep visits every node once.
//!
//! ```
//! use cvpoly::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let re = tape.leaf(3.0);
//! let im = tape.leaf(4.0);
//! let re2 = tape.mul(re, re);
//! let im2 = tape.mul(im, im);
//! let loss = tape.add(re2, im2);
//! assert_eq!(tape.value(loss), 25.0);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!((grads.wrt(re), grads.wrt(im)), (6.0, 8.0));
//! ```

pub mod backend;
mod gradcheck;
mod optim;
mod param;

pub use backend::{Backend, Cx, Eval, Record};
pub use gradcheck::{gradcheck, GradcheckReport, GroupError};
pub use optim::{AdamW, AdamWConfig};
pub use param::{Bound, Param, ParamId, ParamKind, ParamRole, ParamSet};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of non-positive value {0}")]
    LogNonPositive(f64),
    #[error("square root of negative value {0}")]
    SqrtNegative(f64),
    #[error("non-finite input {value} to {op}")]
    NonFinite { op: &'static str, value: f64 },
    #[error("tape was already backpropagated; call reset() first")]
    AlreadyBackpropagated,
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
    #[error("selection over an empty set")]
    EmptySelection,
}

/// Handle to a scalar node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A complex value on the tape as two real nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    values: Vec<f64>,
    /// Edges of node `i` are `edge_end[i - 1]..edge_end[i]`.
    edge_end: Vec<usize>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    backpropagated: bool,
}

/// Adjoints of every node, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> f64 {
        self.adjoints[v.index()]
    }

    pub fn wrt_complex(&self, z: CVar) -> (f64, f64) {
        (self.wrt(z.re), self.wrt(z.im))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self {
            values: Vec::with_capacity(nodes),
            edge_end: Vec::with_capacity(nodes),
            parents: Vec::with_capacity(edges),
            partials: Vec::with_capacity(edges),
            backpropagated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.len()
    }

    /// Drops every node, keeping allocations.
    pub fn reset(&mut self) {
        self.values.clear();
        self.edge_end.clear();
        self.parents.clear();
        self.partials.clear();
        self.backpropagated = false;
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.index()]
    }

    pub fn cvalue(&self, z: CVar) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.value(z.re), self.value(z.im))
    }

    /// Inputs of node `v` with their local partials.
    pub fn edges(&self, v: Var) -> impl Iterator<Item = (Var, f64)> + '_ {
        let i = v.index();
        let start = if i == 0 { 0 } else { self.edge_end[i - 1] };
        (start..self.edge_end[i]).map(|e| (Var(self.parents[e]), self.partials[e]))
    }

    fn push(&mut self, value: f64) -> Var {
        let id = self.values.len();
        self.values.push(value);
        self.edge_end.push(self.parents.len());
        Var(id as u32)
    }

    #[inline]
    fn edge(&mut self, parent: Var, partial: f64) {
        self.parents.push(parent.0);
        self.partials.push(partial);
        *self.edge_end.last_mut().expect("edge without node") = self.parents.len();
    }

    /// An input node (parameter, data sample or constant).
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value)
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value)
    }

    pub fn complex_leaf(&mut self, z: num_complex::Complex64) -> CVar {
        CVar {
            re: self.leaf(z.re),
            im: self.leaf(z.im),
        }
    }

    /// A copy of `v`'s value that gradients do not flow through.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let x = self.value(v);
        self.push(x)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.push(self.value(a) + self.value(b));
        self.edge(a, 1.0);
        self.edge(b, 1.0);
        y
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.push(self.value(a) - self.value(b));
        self.edge(a, 1.0);
        self.edge(b, -1.0);
        y
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let y = self.push(va * vb);
        self.edge(a, vb);
        self.edge(b, va);
        y
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb == 0.0 {
            return Err(AutodiffError::DivisionByZero);
        }
        let y = self.push(va / vb);
        self.edge(a, 1.0 / vb);
        self.edge(b, -va / (vb * vb));
        Ok(y)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let y = self.push(self.value(a) * c);
        self.edge(a, c);
        y
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let y = self.push(self.value(a) + c);
        self.edge(a, 1.0);
        y
    }

    pub fn square(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let y = self.push(va * va);
        self.edge(a, 2.0 * va);
        y
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        let y = self.push(e);
        self.edge(a, e);
        y
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        if va <= 0.0 || va.is_nan() {
            return Err(AutodiffError::LogNonPositive(va));
        }
        let y = self.push(va.ln());
        self.edge(a, 1.0 / va);
        Ok(y)
    }

    /// Square root; the partial at exactly 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        if va < 0.0 || va.is_nan() {
            return Err(AutodiffError::SqrtNegative(va));
        }
        let s = va.sqrt();
        let y = self.push(s);
        self.edge(a, if s > 0.0 { 0.5 / s } else { 0.0 });
        Ok(y)
    }

    /// `atan2(y, x)`; both partials are 0 at the origin.
    pub fn atan2(&mut self, y: Var, x: Var) -> Var {
        let (vy, vx) = (self.value(y), self.value(x));
        let r2 = vx * vx + vy * vy;
        let out = self.push(vy.atan2(vx));
        if r2 > 0.0 {
            self.edge(y, vx / r2);
            self.edge(x, -vy / r2);
        } else {
            self.edge(y, 0.0);
            self.edge(x, 0.0);
        }
        out
    }

    /// `sqrt(a² + b²)`; partials are 0 at the origin.
    pub fn hypot(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let r = va.hypot(vb);
        let y = self.push(r);
        if r > 0.0 {
            self.edge(a, va / r);
            self.edge(b, vb / r);
        } else {
            self.edge(a, 0.0);
            self.edge(b, 0.0);
        }
        y
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let y = self.push(va.max(0.0));
        self.edge(a, if va > 0.0 { 1.0 } else { 0.0 });
        y
    }

    /// Largest input by value (lowest index on ties); the gradient flows to
    /// the selected input only. Returns the node and the selected position.
    pub fn max_select(&mut self, xs: &[Var]) -> Result<(Var, usize), AutodiffError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, x) in xs.iter().enumerate() {
            let v = self.value(*x);
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((i, v)),
            }
        }
        let (i, v) = best.ok_or(AutodiffError::EmptySelection)?;
        let y = self.push(v);
        self.edge(xs[i], 1.0);
        Ok((y, i))
    }

    /// Order-independent sum (see [`crate::ctensor::invariant_sum`]).
    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let total =
            crate::ctensor::invariant_sum(&xs.iter().map(|x| self.value(*x)).collect::<Vec<_>>());
        let y = self.push(total);
        for x in xs {
            self.edge(*x, 1.0);
        }
        y
    }

    /// `offset + Σ c_i · x_i` with constant coefficients.
    pub fn lincomb(&mut self, terms: &[(f64, Var)], offset: f64) -> Var {
        let mut acc = offset;
        for (c, x) in terms {
            acc += c * self.value(*x);
        }
        let y = self.push(acc);
        for (c, x) in terms {
            self.edge(*x, *c);
        }
        y
    }

    /// `bias + Σ s_i · a_i · b_i` with constant signs/scales `s_i`, as one node.
    pub fn signed_dot(&mut self, terms: &[(f64, Var, Var)], bias: Option<Var>) -> Var {
        let mut acc = 0.0;
        for (s, a, b) in terms {
            acc += s * self.value(*a) * self.value(*b);
        }
        if let Some(b) = bias {
            acc += self.value(b);
        }
        let y = self.push(acc);
        for &(s, a, b) in terms {
            let (va, vb) = (self.values[a.index()], self.values[b.index()]);
            self.edge(a, s * vb);
            self.edge(b, s * va);
        }
        if let Some(b) = bias {
            self.edge(b, 1.0);
        }
        y
    }

    /// Numerically stable softmax built from primitives. The shift by the
    /// maximum is a constant, which leaves the gradient unchanged.
    pub fn softmax(&mut self, xs: &[Var]) -> Result<Vec<Var>, AutodiffError> {
        if xs.is_empty() {
            return Err(AutodiffError::EmptySelection);
        }
        let m = xs
            .iter()
            .map(|x| self.value(*x))
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Var> = xs
            .iter()
            .map(|x| {
                let shifted = self.add_const(*x, -m);
                self.exp(shifted)
            })
            .collect();
        let total = self.sum(&exps);
        exps.iter().map(|e| self.div(*e, total)).collect()
    }

    /// `-log softmax(logits)[label]`, via log-sum-exp.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: &[Var],
        label: usize,
    ) -> Result<Var, AutodiffError> {
        if label >= logits.len() {
            return Err(AutodiffError::UnknownNode(label));
        }
        let m = logits
            .iter()
            .map(|x| self.value(*x))
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Var> = logits
            .iter()
            .map(|x| {
                let shifted = self.add_const(*x, -m);
                self.exp(shifted)
            })
            .collect();
        let total = self.sum(&exps);
        let lse = self.ln(total)?;
        let lse = self.add_const(lse, m);
        Ok(self.sub(lse, logits[label]))
    }

    // complex helpers

    pub fn cconst(&mut self, z: num_complex::Complex64) -> CVar {
        self.complex_leaf(z)
    }

    pub fn cadd(&mut self, a: CVar, b: CVar) -> CVar {
        CVar {
            re: self.add(a.re, b.re),
            im: self.add(a.im, b.im),
        }
    }

    pub fn csub(&mut self, a: CVar, b: CVar) -> CVar {
        CVar {
            re: self.sub(a.re, b.re),
            im: self.sub(a.im, b.im),
        }
    }

    pub fn cmul(&mut self, a: CVar, b: CVar) -> CVar {
        let re = self.signed_dot(&[(1.0, a.re, b.re), (-1.0, a.im, b.im)], None);
        let im = self.signed_dot(&[(1.0, a.re, b.im), (1.0, a.im, b.re)], None);
        CVar { re, im }
    }

    pub fn cmodulus(&mut self, z: CVar) -> Var {
        self.hypot(z.re, z.im)
    }

    pub fn cabs2(&mut self, z: CVar) -> Var {
        self.signed_dot(&[(1.0, z.re, z.re), (1.0, z.im, z.im)], None)
    }

    /// Reverse sweep from `loss`. A tape can be swept once; call
    /// [`Tape::reset`] before recording the next pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.backpropagated {
            return Err(AutodiffError::AlreadyBackpropagated);
        }
        let root = loss.index();
        if root >= self.values.len() {
            return Err(AutodiffError::UnknownNode(root));
        }
        self.backpropagated = true;
        let mut adjoints = vec![0.0; self.values.len()];
        adjoints[root] = 1.0;
        for i in (0..=root).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { self.edge_end[i - 1] };
            for e in start..self.edge_end[i] {
                adjoints[self.parents[e] as usize] += self.partials[e] * a;
            }
        }
        Ok(Gradients { adjoints })
    }
}
