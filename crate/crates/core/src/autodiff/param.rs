use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CVar, Gradients, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Real,
    /// Stored interleaved as `[re0, im0, re1, im1, ..]`.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    Weight,
    Bias,
    ActivationBias,
    Selector,
    Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub role: ParamRole,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn complex_at(&self, i: usize) -> Complex64 {
        debug_assert_eq!(self.kind, ParamKind::Complex);
        Complex64::new(self.value[2 * i], self.value[2 * i + 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// Tape leaves created for every parameter scalar during one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Vec<Var>>,
}

impl Bound {
    pub fn real(&self, id: ParamId, i: usize) -> Var {
        self.vars[id.0][i]
    }

    pub fn reals(&self, id: ParamId) -> &[Var] {
        &self.vars[id.0]
    }

    pub fn complex(&self, id: ParamId, i: usize) -> CVar {
        CVar {
            re: self.vars[id.0][2 * i],
            im: self.vars[id.0][2 * i + 1],
        }
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        kind: ParamKind,
        role: ParamRole,
        value: Vec<f64>,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let scalars = match kind {
            ParamKind::Real => n,
            ParamKind::Complex => 2 * n,
        };
        assert_eq!(value.len(), scalars, "parameter value length");
        self.params.push(Param {
            name: name.into(),
            shape,
            kind,
            role,
            grad: vec![0.0; scalars],
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| p.value.iter().map(|v| tape.leaf(*v)).collect())
                .collect(),
        }
    }

    /// Adds the adjoints of the bound leaves into each `grad`.
    pub fn accumulate(&mut self, bound: &Bound, grads: &Gradients) {
        for (p, vars) in self.params.iter_mut().zip(&bound.vars) {
            for (g, v) in p.grad.iter_mut().zip(vars) {
                *g += grads.wrt(*v);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale_grad(&mut self, c: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= c);
        }
    }

    /// Every scalar value, concatenated in parameter order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.scalar_count());
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.copy_from_slice(&values[off..off + n]);
            off += n;
        }
    }

    /// Adds a flat gradient vector (as from [`ParamSet::flat_grads`]).
    pub fn add_flat_grads(&mut self, grads: &[f64]) {
        assert_eq!(grads.len(), self.scalar_count());
        let mut off = 0;
        for p in &mut self.params {
            let n = p.grad.len();
            for (g, d) in p.grad.iter_mut().zip(&grads[off..off + n]) {
                *g += d;
            }
            off += n;
        }
    }

    /// Scalar ranges of each parameter within [`ParamSet::flat_values`].
    pub fn ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut off = 0;
        self.params
            .iter()
            .map(|p| {
                let r = off..off + p.value.len();
                off = r.end;
                (p.name.clone(), r)
            })
            .collect()
    }
}
