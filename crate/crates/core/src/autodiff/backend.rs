//! One forward implementation, two executions.
//!
//! Layers are written against [`Backend`]. [`Eval`] computes plain `f64`
//! values; [`Record`] appends the same computation to a [`Tape`]. Both
//! evaluate every primitive with the same floating-point expression, so an
//! evaluated forward pass and a recorded one agree bitwise.

use num_complex::Complex64;

use super::{AutodiffError, Bound, ParamId, ParamSet, Tape, Var};
use crate::ctensor::invariant_sum;

pub trait Backend {
    type R: Copy + std::fmt::Debug;

    fn lit(&mut self, v: f64) -> Self::R;
    fn val(&self, r: Self::R) -> f64;
    /// Scalar `i` of parameter `id`.
    fn param(&self, id: ParamId, i: usize) -> Self::R;
    fn recording(&self) -> bool;

    fn add(&mut self, a: Self::R, b: Self::R) -> Self::R;
    fn sub(&mut self, a: Self::R, b: Self::R) -> Self::R;
    fn mul(&mut self, a: Self::R, b: Self::R) -> Self::R;
    fn scale(&mut self, a: Self::R, c: f64) -> Self::R;
    fn add_const(&mut self, a: Self::R, c: f64) -> Self::R;
    fn div(&mut self, a: Self::R, b: Self::R) -> Result<Self::R, AutodiffError>;
    fn exp(&mut self, a: Self::R) -> Self::R;
    fn ln(&mut self, a: Self::R) -> Result<Self::R, AutodiffError>;
    fn hypot(&mut self, a: Self::R, b: Self::R) -> Self::R;
    fn relu(&mut self, a: Self::R) -> Self::R;
    fn sum(&mut self, xs: &[Self::R]) -> Self::R;
    fn lincomb(&mut self, terms: &[(f64, Self::R)], offset: f64) -> Self::R;
    fn signed_dot(&mut self, terms: &[(f64, Self::R, Self::R)], bias: Option<Self::R>) -> Self::R;
    fn stop_gradient(&mut self, a: Self::R) -> Self::R;
}

/// Plain evaluation; parameters are read from the set.
#[derive(Debug, Clone, Copy)]
pub struct Eval<'a> {
    params: &'a ParamSet,
}

impl<'a> Eval<'a> {
    pub fn new(params: &'a ParamSet) -> Self {
        Self { params }
    }
}

impl Backend for Eval<'_> {
    type R = f64;

    fn lit(&mut self, v: f64) -> f64 {
        v
    }
    fn val(&self, r: f64) -> f64 {
        r
    }
    fn param(&self, id: ParamId, i: usize) -> f64 {
        self.params.get(id).value[i]
    }
    fn recording(&self) -> bool {
        false
    }
    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }
    fn scale(&mut self, a: f64, c: f64) -> f64 {
        a * c
    }
    fn add_const(&mut self, a: f64, c: f64) -> f64 {
        a + c
    }
    fn div(&mut self, a: f64, b: f64) -> Result<f64, AutodiffError> {
        if b == 0.0 {
            return Err(AutodiffError::DivisionByZero);
        }
        Ok(a / b)
    }
    fn exp(&mut self, a: f64) -> f64 {
        a.exp()
    }
    fn ln(&mut self, a: f64) -> Result<f64, AutodiffError> {
        if a <= 0.0 || a.is_nan() {
            return Err(AutodiffError::LogNonPositive(a));
        }
        Ok(a.ln())
    }
    fn hypot(&mut self, a: f64, b: f64) -> f64 {
        a.hypot(b)
    }
    fn relu(&mut self, a: f64) -> f64 {
        a.max(0.0)
    }
    fn sum(&mut self, xs: &[f64]) -> f64 {
        invariant_sum(xs)
    }
    fn lincomb(&mut self, terms: &[(f64, f64)], offset: f64) -> f64 {
        let mut acc = offset;
        for (c, x) in terms {
            acc += c * x;
        }
        acc
    }
    fn signed_dot(&mut self, terms: &[(f64, f64, f64)], bias: Option<f64>) -> f64 {
        let mut acc = 0.0;
        for (s, a, b) in terms {
            acc += s * a * b;
        }
        if let Some(b) = bias {
            acc += b;
        }
        acc
    }
    fn stop_gradient(&mut self, a: f64) -> f64 {
        a
    }
}

/// Records onto a tape; parameters come from leaves bound beforehand.
#[derive(Debug)]
pub struct Record<'a> {
    pub tape: &'a mut Tape,
    bound: &'a Bound,
}

impl<'a> Record<'a> {
    pub fn new(tape: &'a mut Tape, bound: &'a Bound) -> Self {
        Self { tape, bound }
    }
}

impl Backend for Record<'_> {
    type R = Var;

    fn lit(&mut self, v: f64) -> Var {
        self.tape.constant(v)
    }
    fn val(&self, r: Var) -> f64 {
        self.tape.value(r)
    }
    fn param(&self, id: ParamId, i: usize) -> Var {
        self.bound.real(id, i)
    }
    fn recording(&self) -> bool {
        true
    }
    fn add(&mut self, a: Var, b: Var) -> Var {
        self.tape.add(a, b)
    }
    fn sub(&mut self, a: Var, b: Var) -> Var {
        self.tape.sub(a, b)
    }
    fn mul(&mut self, a: Var, b: Var) -> Var {
        self.tape.mul(a, b)
    }
    fn scale(&mut self, a: Var, c: f64) -> Var {
        self.tape.scale(a, c)
    }
    fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.tape.add_const(a, c)
    }
    fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.tape.div(a, b)
    }
    fn exp(&mut self, a: Var) -> Var {
        self.tape.exp(a)
    }
    fn ln(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.tape.ln(a)
    }
    fn hypot(&mut self, a: Var, b: Var) -> Var {
        self.tape.hypot(a, b)
    }
    fn relu(&mut self, a: Var) -> Var {
        self.tape.relu(a)
    }
    fn sum(&mut self, xs: &[Var]) -> Var {
        self.tape.sum(xs)
    }
    fn lincomb(&mut self, terms: &[(f64, Var)], offset: f64) -> Var {
        self.tape.lincomb(terms, offset)
    }
    fn signed_dot(&mut self, terms: &[(f64, Var, Var)], bias: Option<Var>) -> Var {
        self.tape.signed_dot(terms, bias)
    }
    fn stop_gradient(&mut self, a: Var) -> Var {
        self.tape.stop_gradient(a)
    }
}

/// A complex value as a pair of backend scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cx<R> {
    pub re: R,
    pub im: R,
}

impl<R> Cx<R> {
    pub fn new(re: R, im: R) -> Self {
        Self { re, im }
    }
}

impl From<Complex64> for Cx<f64> {
    fn from(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }
}

impl From<Cx<f64>> for Complex64 {
    fn from(z: Cx<f64>) -> Self {
        Complex64::new(z.re, z.im)
    }
}

pub fn clit<B: Backend>(b: &mut B, z: Complex64) -> Cx<B::R> {
    Cx::new(b.lit(z.re), b.lit(z.im))
}

pub fn cval<B: Backend>(b: &B, z: Cx<B::R>) -> Complex64 {
    Complex64::new(b.val(z.re), b.val(z.im))
}

pub fn cparam<B: Backend>(b: &B, id: ParamId, i: usize) -> Cx<B::R> {
    Cx::new(b.param(id, 2 * i), b.param(id, 2 * i + 1))
}

pub fn cadd<B: Backend>(b: &mut B, x: Cx<B::R>, y: Cx<B::R>) -> Cx<B::R> {
    Cx::new(b.add(x.re, y.re), b.add(x.im, y.im))
}

pub fn cmul<B: Backend>(b: &mut B, x: Cx<B::R>, y: Cx<B::R>) -> Cx<B::R> {
    cdot(b, &[(x, y)], None)
}

/// `bias + Σ w_i · x_i` over complex pairs.
pub fn cdot<B: Backend>(
    b: &mut B,
    pairs: &[(Cx<B::R>, Cx<B::R>)],
    bias: Option<Cx<B::R>>,
) -> Cx<B::R> {
    let mut re_terms = Vec::with_capacity(2 * pairs.len());
    let mut im_terms = Vec::with_capacity(2 * pairs.len());
    for (w, x) in pairs {
        re_terms.push((1.0, w.re, x.re));
        re_terms.push((-1.0, w.im, x.im));
        im_terms.push((1.0, w.re, x.im));
        im_terms.push((1.0, w.im, x.re));
    }
    Cx::new(
        b.signed_dot(&re_terms, bias.map(|c| c.re)),
        b.signed_dot(&im_terms, bias.map(|c| c.im)),
    )
}

/// `bias + Σ w_i · x_i` with real weights acting on complex inputs.
pub fn rdot<B: Backend>(b: &mut B, pairs: &[(B::R, Cx<B::R>)], bias: Option<Cx<B::R>>) -> Cx<B::R> {
    let re_terms: Vec<_> = pairs.iter().map(|(w, x)| (1.0, *w, x.re)).collect();
    let im_terms: Vec<_> = pairs.iter().map(|(w, x)| (1.0, *w, x.im)).collect();
    Cx::new(
        b.signed_dot(&re_terms, bias.map(|c| c.re)),
        b.signed_dot(&im_terms, bias.map(|c| c.im)),
    )
}

pub fn cabs<B: Backend>(b: &mut B, z: Cx<B::R>) -> B::R {
    b.hypot(z.re, z.im)
}

/// Order-independent complex mean.
pub fn cmean<B: Backend>(b: &mut B, zs: &[Cx<B::R>]) -> Cx<B::R> {
    let n = zs.len().max(1) as f64;
    let re: Vec<_> = zs.iter().map(|z| z.re).collect();
    let im: Vec<_> = zs.iter().map(|z| z.im).collect();
    let (sr, si) = (b.sum(&re), b.sum(&im));
    Cx::new(b.scale(sr, 1.0 / n), b.scale(si, 1.0 / n))
}

/// Softmax with a constant max-shift.
pub fn softmax<B: Backend>(b: &mut B, xs: &[B::R]) -> Result<Vec<B::R>, AutodiffError> {
    if xs.is_empty() {
        return Err(AutodiffError::EmptySelection);
    }
    let m = xs
        .iter()
        .map(|x| b.val(*x))
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<B::R> = xs
        .iter()
        .map(|x| {
            let s = b.add_const(*x, -m);
            b.exp(s)
        })
        .collect();
    let total = b.sum(&exps);
    exps.iter().map(|e| b.div(*e, total)).collect()
}

/// `−log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy<B: Backend>(
    b: &mut B,
    logits: &[B::R],
    label: usize,
) -> Result<B::R, AutodiffError> {
    if label >= logits.len() {
        return Err(AutodiffError::UnknownNode(label));
    }
    let m = logits
        .iter()
        .map(|x| b.val(*x))
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<B::R> = logits
        .iter()
        .map(|x| {
            let s = b.add_const(*x, -m);
            b.exp(s)
        })
        .collect();
    let total = b.sum(&exps);
    let lse = b.ln(total)?;
    let lse = b.add_const(lse, m);
    Ok(b.sub(lse, logits[label]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamKind, ParamRole};

    fn program<B: Backend>(b: &mut B, w: ParamId) -> Result<B::R, AutodiffError> {
        let x = clit(b, Complex64::new(0.3, -1.2));
        let y = clit(b, Complex64::new(-0.7, 0.4));
        let w0 = cparam(b, w, 0);
        let w1 = cparam(b, w, 1);
        let z = cdot(b, &[(w0, x), (w1, y)], None);
        let r = cabs(b, z);
        let m = cmean(b, &[z, x]);
        let logits = [r, m.re, m.im];
        cross_entropy(b, &logits, 1)
    }

    #[test]
    fn eval_and_record_agree_bitwise() {
        let mut ps = ParamSet::new();
        let w = ps.add(
            "w",
            vec![2],
            ParamKind::Complex,
            ParamRole::Weight,
            vec![0.5, -0.25, 1.5, 0.75],
        );
        let v_eval = program(&mut Eval::new(&ps), w).unwrap();
        let mut tape = Tape::new();
        let bound = ps.bind(&mut tape);
        let mut rec = Record::new(&mut tape, &bound);
        let v = program(&mut rec, w).unwrap();
        assert_eq!(tape.value(v).to_bits(), v_eval.to_bits());
    }

    #[test]
    fn complex_product() {
        let ps = ParamSet::new();
        let mut e = Eval::new(&ps);
        let a = clit(&mut e, Complex64::new(0.0, 2.0));
        let b = clit(&mut e, Complex64::new(0.0, 3.0));
        let p = cmul(&mut e, a, b);
        assert_eq!(cval(&e, p), Complex64::new(-6.0, 0.0));
    }
}
