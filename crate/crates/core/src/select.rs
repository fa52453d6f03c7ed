//! Component selection: ℂ→ℝ projections, the learnable selector network
//! and Gumbel-softmax sampling with straight-through hard selection.

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::backend::{cabs, clit, softmax};
use crate::autodiff::{AutodiffError, Backend, Cx, Eval, ParamId, ParamKind, ParamRole, ParamSet};
use crate::ctensor::{ComplexTensor, C64};
use crate::cvnn::layers::{global_mean, lift, ConvLayer, Feat, ModRelu};
use crate::cvnn::CvnnError;
use crate::polyphase::{argmax, components};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("{what}: expected {expected} values, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("invalid projection: {0}")]
    InvalidProjection(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("selector network: {0}")]
    Layer(Box<CvnnError>),
}

impl From<CvnnError> for SelectError {
    fn from(e: CvnnError) -> Self {
        SelectError::Layer(Box::new(e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionKind {
    Norm,
    PolyDec { order: usize },
    /// Hidden widths; the input width is 2 (Re, Im) and the output 1.
    Mlp { hidden: Vec<usize> },
    MSoftmax,
    PSoftmax,
}

impl ProjectionKind {
    /// Explicit projections map each logit to ℝ before a single softmax;
    /// implicit ones combine softmaxes of the real and imaginary parts.
    pub fn is_explicit(&self) -> bool {
        !matches!(self, ProjectionKind::MSoftmax | ProjectionKind::PSoftmax)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProjectionKind::Norm => "norm",
            ProjectionKind::PolyDec { .. } => "polydec",
            ProjectionKind::Mlp { .. } => "mlp",
            ProjectionKind::MSoftmax => "msoftmax",
            ProjectionKind::PSoftmax => "psoftmax",
        }
    }

    /// From the `projection.kind`, `projection.M` and
    /// `projection.mlp_widths` configuration values.
    pub fn from_config(kind: &str, order: Option<usize>, widths: Option<&[usize]>) -> Result<Self, SelectError> {
        match kind {
            "norm" => Ok(Self::Norm),
            "polydec" => {
                let order = order.unwrap_or(2);
                if order == 0 {
                    return Err(SelectError::InvalidProjection("PolyDec order must be ≥ 1".into()));
                }
                Ok(Self::PolyDec { order })
            }
            "mlp" => Ok(Self::Mlp {
                hidden: widths.map(<[usize]>::to_vec).unwrap_or_else(|| vec![8]),
            }),
            "msoftmax" => Ok(Self::MSoftmax),
            "psoftmax" => Ok(Self::PSoftmax),
            other => Err(SelectError::InvalidProjection(format!("unknown kind {other:?}"))),
        }
    }
}

/// Number of θ coefficients of an order-`m` PolyDec: `Σ_{m=1..M} (m+1)`.
pub fn polydec_terms(order: usize) -> usize {
    order * (order + 3) / 2
}

// ---- numeric projections -------------------------------------------------

pub fn project_norm(z: &[C64]) -> Vec<f64> {
    z.iter().map(|v| v.norm()).collect()
}

/// `β + Σ_{m=1..M} Σ_{i=0..m} θ_{m,i} a^i b^{m−i}` per component with
/// `a = Re z`, `b = Im z`; `theta` is ordered by `m`, then `i`.
pub fn project_polydec(z: &[C64], theta: &[f64], beta: f64, order: usize) -> Result<Vec<f64>, SelectError> {
    let expected = polydec_terms(order);
    if theta.len() != expected {
        return Err(SelectError::SizeMismatch {
            what: "PolyDec coefficients",
            expected,
            got: theta.len(),
        });
    }
    let mut ps = ParamSet::new();
    let proj = Projection::with_polydec(&mut ps, "p", order, theta.to_vec(), beta);
    let mut b = Eval::new(&ps);
    let zs: Vec<_> = z.iter().map(|v| clit(&mut b, *v)).collect();
    proj.forward(&mut b, &zs)
}

/// One dense layer of the MLP projection, weights row-major `[n_out, n_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Each component's `[Re z, Im z]` through affine+ReLU layers, the last
/// layer affine only, producing one real score per component.
pub fn project_mlp(z: &[C64], layers: &[MlpLayer]) -> Result<Vec<f64>, SelectError> {
    let mut width = 2;
    for l in layers {
        if l.n_in != width || l.weight.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
            return Err(SelectError::SizeMismatch {
                what: "MLP layer width",
                expected: width,
                got: l.n_in,
            });
        }
        width = l.n_out;
    }
    if layers.is_empty() || width != 1 {
        return Err(SelectError::SizeMismatch {
            what: "MLP output width",
            expected: 1,
            got: width,
        });
    }
    let mut ps = ParamSet::new();
    let mut ids = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        let w = ps.add(format!("w{i}"), vec![l.n_out, l.n_in], ParamKind::Real, ParamRole::Projection, l.weight.clone());
        let bb = ps.add(format!("b{i}"), vec![l.n_out], ParamKind::Real, ParamRole::Projection, l.bias.clone());
        ids.push((w, bb, l.n_in, l.n_out));
    }
    let proj = Projection {
        kind: ProjectionKind::Mlp {
            hidden: layers[..layers.len() - 1].iter().map(|l| l.n_out).collect(),
        },
        theta: None,
        beta: None,
        mlp: ids,
    };
    let mut b = Eval::new(&ps);
    let zs: Vec<_> = z.iter().map(|v| clit(&mut b, *v)).collect();
    proj.forward(&mut b, &zs)
}

fn plain_softmax(xs: &[f64]) -> Vec<f64> {
    crate::polyphase::softmax(xs)
}

/// `(softmax(Re z) + softmax(Im z)) / 2`.
pub fn msoftmax(z: &[C64]) -> Vec<f64> {
    let re = plain_softmax(&z.iter().map(|v| v.re).collect::<Vec<_>>());
    let im = plain_softmax(&z.iter().map(|v| v.im).collect::<Vec<_>>());
    re.iter().zip(&im).map(|(a, b)| 0.5 * a + 0.5 * b).collect()
}

/// `softmax(Re z) ⊙ softmax(Im z)`; not renormalised.
pub fn psoftmax(z: &[C64]) -> Vec<f64> {
    let re = plain_softmax(&z.iter().map(|v| v.re).collect::<Vec<_>>());
    let im = plain_softmax(&z.iter().map(|v| v.im).collect::<Vec<_>>());
    re.iter().zip(&im).map(|(a, b)| a * b).collect()
}

// ---- learnable projection ------------------------------------------------

/// A projection with its parameters registered in a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub kind: ProjectionKind,
    pub theta: Option<ParamId>,
    pub beta: Option<ParamId>,
    /// `(weight, bias, n_in, n_out)` per dense layer.
    pub mlp: Vec<(ParamId, ParamId, usize, usize)>,
}

impl Projection {
    /// PolyDec starts at the squared-norm configuration `a² + b²` when the
    /// order allows it, otherwise at small random coefficients.
    pub fn init(params: &mut ParamSet, name: &str, kind: ProjectionKind, rng: &mut impl Rng) -> Self {
        match &kind {
            ProjectionKind::PolyDec { order } => {
                let order = *order;
                let theta = if order >= 2 {
                    let mut t = vec![0.0; polydec_terms(order)];
                    // m = 2 block starts after the two m = 1 coefficients.
                    t[2] = 1.0;
                    t[4] = 1.0;
                    t
                } else {
                    let d = Normal::new(0.0, 1.0).expect("unit normal");
                    (0..polydec_terms(order)).map(|_| d.sample(rng)).collect()
                };
                Self::with_polydec(params, name, order, theta, 0.0)
            }
            ProjectionKind::Mlp { hidden } => {
                let mut widths = vec![2];
                widths.extend_from_slice(hidden);
                widths.push(1);
                let mut mlp = Vec::new();
                for (i, w) in widths.windows(2).enumerate() {
                    let (n_in, n_out) = (w[0], w[1]);
                    let d = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("finite std");
                    let wv = (0..n_in * n_out).map(|_| d.sample(rng)).collect();
                    let wid = params.add(
                        format!("{name}.mlp{i}.weight"),
                        vec![n_out, n_in],
                        ParamKind::Real,
                        ParamRole::Projection,
                        wv,
                    );
                    let bid = params.add(
                        format!("{name}.mlp{i}.bias"),
                        vec![n_out],
                        ParamKind::Real,
                        ParamRole::Projection,
                        vec![0.0; n_out],
                    );
                    mlp.push((wid, bid, n_in, n_out));
                }
                Self {
                    kind,
                    theta: None,
                    beta: None,
                    mlp,
                }
            }
            _ => Self {
                kind,
                theta: None,
                beta: None,
                mlp: Vec::new(),
            },
        }
    }

    pub fn with_polydec(params: &mut ParamSet, name: &str, order: usize, theta: Vec<f64>, beta: f64) -> Self {
        let n = theta.len();
        let theta = params.add(format!("{name}.theta"), vec![n], ParamKind::Real, ParamRole::Projection, theta);
        let beta = params.add(format!("{name}.beta"), vec![1], ParamKind::Real, ParamRole::Projection, vec![beta]);
        Self {
            kind: ProjectionKind::PolyDec { order },
            theta: Some(theta),
            beta: Some(beta),
            mlp: Vec::new(),
        }
    }

    /// Real score per component. Implicit kinds return the noise-free
    /// MSoftmax/PSoftmax values.
    pub fn forward<B: Backend>(&self, b: &mut B, logits: &[Cx<B::R>]) -> Result<Vec<B::R>, SelectError> {
        match &self.kind {
            ProjectionKind::Norm => Ok(logits.iter().map(|z| cabs(b, *z)).collect()),
            ProjectionKind::PolyDec { order } => {
                let (theta, beta) = (self.theta.expect("theta"), self.beta.expect("beta"));
                Ok(logits.iter().map(|z| polydec_one(b, *z, theta, beta, *order)).collect())
            }
            ProjectionKind::Mlp { .. } => Ok(logits.iter().map(|z| self.mlp_one(b, *z)).collect()),
            ProjectionKind::MSoftmax | ProjectionKind::PSoftmax => {
                let re: Vec<_> = logits.iter().map(|z| z.re).collect();
                let im: Vec<_> = logits.iter().map(|z| z.im).collect();
                let sr = softmax(b, &re)?;
                let si = softmax(b, &im)?;
                Ok(self.combine(b, &sr, &si))
            }
        }
    }

    fn combine<B: Backend>(&self, b: &mut B, re: &[B::R], im: &[B::R]) -> Vec<B::R> {
        re.iter()
            .zip(im)
            .map(|(x, y)| match self.kind {
                ProjectionKind::PSoftmax => b.mul(*x, *y),
                _ => b.lincomb(&[(0.5, *x), (0.5, *y)], 0.0),
            })
            .collect()
    }

    fn mlp_one<B: Backend>(&self, b: &mut B, z: Cx<B::R>) -> B::R {
        let mut h = vec![z.re, z.im];
        let last = self.mlp.len() - 1;
        for (l, &(w, bias, n_in, n_out)) in self.mlp.iter().enumerate() {
            let next: Vec<B::R> = (0..n_out)
                .map(|o| {
                    let terms: Vec<_> = (0..n_in).map(|i| (1.0, b.param(w, o * n_in + i), h[i])).collect();
                    let bo = b.param(bias, o);
                    let y = b.signed_dot(&terms, Some(bo));
                    if l == last {
                        y
                    } else {
                        b.relu(y)
                    }
                })
                .collect();
            h = next;
        }
        h[0]
    }
}

fn polydec_one<B: Backend>(b: &mut B, z: Cx<B::R>, theta: ParamId, beta: ParamId, order: usize) -> B::R {
    let one = b.lit(1.0);
    let mut pa = vec![one];
    let mut pb = vec![one];
    for i in 1..=order {
        let a = b.mul(pa[i - 1], z.re);
        let c = b.mul(pb[i - 1], z.im);
        pa.push(a);
        pb.push(c);
    }
    let mut terms = Vec::with_capacity(polydec_terms(order));
    let mut t = 0;
    for m in 1..=order {
        for i in 0..=m {
            let mono = b.mul(pa[i], pb[m - i]);
            terms.push((1.0, b.param(theta, t), mono));
            t += 1;
        }
    }
    let beta = b.param(beta, 0);
    b.signed_dot(&terms, Some(beta))
}

// ---- Gumbel ----------------------------------------------------------------

/// `−ln(−ln U)` with `U` uniform on the open interval (0, 1).
pub fn gumbel_sample(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    gumbel_from_uniform(u)
}

pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

/// Standard Gumbel CDF `exp(−exp(−z))`.
pub fn gumbel_cdf(z: f64) -> f64 {
    (-(-z).exp()).exp()
}

/// `softmax((x + g) / λ)` on any backend; `noise` supplies `g`.
pub fn gumbel_soft<B: Backend>(
    b: &mut B,
    logits: &[B::R],
    noise: &[f64],
    temperature: f64,
) -> Result<Vec<B::R>, SelectError> {
    check_temperature(temperature)?;
    if noise.len() < logits.len() {
        return Err(SelectError::SizeMismatch {
            what: "Gumbel noise",
            expected: logits.len(),
            got: noise.len(),
        });
    }
    let scaled: Vec<B::R> = logits
        .iter()
        .zip(noise)
        .map(|(x, g)| {
            let s = b.add_const(*x, *g);
            b.scale(s, 1.0 / temperature)
        })
        .collect();
    Ok(softmax(b, &scaled)?)
}

fn check_temperature(t: f64) -> Result<(), SelectError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(SelectError::InvalidTemperature(t))
    }
}

/// Straight-through hard selection: the forward value is exactly the
/// one-hot of the winner, `(y − stop(y)) + onehot`, while gradients flow as
/// through `y`.
pub fn straight_through<B: Backend>(b: &mut B, soft: &[B::R]) -> (Vec<B::R>, usize) {
    let vals: Vec<f64> = soft.iter().map(|y| b.val(*y)).collect();
    let k = argmax(&vals);
    let st = soft
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let frozen = b.stop_gradient(*y);
            let d = b.sub(*y, frozen);
            b.add_const(d, if i == k { 1.0 } else { 0.0 })
        })
        .collect();
    (st, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelOutput {
    pub soft: Vec<f64>,
    pub hard: Vec<f64>,
    pub index: usize,
}

/// Gumbel-softmax with caller-supplied noise.
pub fn gumbel_softmax(logits: &[f64], noise: &[f64], temperature: f64) -> Result<GumbelOutput, SelectError> {
    let ps = ParamSet::new();
    let mut b = Eval::new(&ps);
    let soft = gumbel_soft(&mut b, logits, noise, temperature)?;
    let (hard, index) = straight_through(&mut b, &soft);
    Ok(GumbelOutput { soft, hard, index })
}

/// Gumbel-softmax drawing fresh noise from `rng`.
pub fn gumbel_softmax_rng(logits: &[f64], temperature: f64, rng: &mut impl Rng) -> Result<GumbelOutput, SelectError> {
    let noise: Vec<f64> = logits.iter().map(|_| gumbel_sample(rng)).collect();
    gumbel_softmax(logits, &noise, temperature)
}

/// `λ = max(minimum, initial · gamma^⌊epoch/step⌋)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub initial: f64,
    pub gamma: f64,
    pub minimum: f64,
    pub step: usize,
}

impl TemperatureSchedule {
    /// Constant `1e-5`.
    pub fn classification() -> Self {
        Self {
            initial: 1e-5,
            gamma: 1.0,
            minimum: 1e-5,
            step: 1,
        }
    }

    /// `1e-3`, decayed by 0.1 every third of training, floored at `1e-5`.
    pub fn reconstruction(total_epochs: usize) -> Self {
        Self {
            initial: 1e-3,
            gamma: 0.1,
            minimum: 1e-5,
            step: (total_epochs / 3).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        check_temperature(self.minimum)?;
        check_temperature(self.initial)?;
        if !(self.gamma > 0.0) || self.step == 0 {
            return Err(SelectError::InvalidTemperature(self.gamma));
        }
        Ok(())
    }
}

pub fn anneal(schedule: &TemperatureSchedule, epoch: usize) -> f64 {
    let decays = (epoch / schedule.step.max(1)) as i32;
    (schedule.initial * schedule.gamma.powi(decays)).max(schedule.minimum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelConfig {
    pub schedule: TemperatureSchedule,
    pub hard: bool,
    pub seed: u64,
}

impl GumbelConfig {
    pub fn temperature(&self, epoch: usize) -> f64 {
        anneal(&self.schedule, epoch)
    }
}

// ---- selector network -----------------------------------------------------

/// `f_θ`: stride-1 circular conv to one channel, modReLU, complex global
/// mean. Shared by every polyphase component.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorNet {
    pub conv: ConvLayer,
    pub act: ModRelu,
}

impl SelectorNet {
    pub fn init(
        params: &mut ParamSet,
        name: &str,
        channels: usize,
        ksize: Vec<usize>,
        real_weights: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let conv = ConvLayer::init(params, &format!("{name}.conv"), channels, 1, ksize, real_weights, true, rng);
        let act = ModRelu::init(params, name, 1, 0.0);
        Self { conv, act }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, component: &Feat<B::R>) -> Result<Cx<B::R>, SelectError> {
        let h = self.conv.forward(b, component)?;
        let h = self.act.forward(b, &h)?;
        Ok(global_mean(b, &h)[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectMode {
    /// Noise-free argmax.
    Eval,
    /// Gumbel-softmax at this temperature with straight-through selection.
    Train { temperature: f64 },
}

/// Outcome of a learnable selection.
#[derive(Debug, Clone)]
pub struct LpsDecision<R> {
    /// Projected logits (explicit) or MSoftmax/PSoftmax values (implicit),
    /// before any noise.
    pub scores: Vec<f64>,
    /// Selection distribution the argmax is taken over.
    pub probs: Vec<f64>,
    pub index: usize,
    /// Straight-through one-hot weights in training mode.
    pub weights: Option<Vec<R>>,
}

/// Learnable polyphase selection: selector network plus projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LpsSelector {
    pub net: SelectorNet,
    pub proj: Projection,
}

impl LpsSelector {
    pub fn init(
        params: &mut ParamSet,
        name: &str,
        channels: usize,
        ksize: Vec<usize>,
        kind: ProjectionKind,
        real_weights: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let net = SelectorNet::init(params, &format!("{name}.net"), channels, ksize, real_weights, rng);
        let proj = Projection::init(params, &format!("{name}.proj"), kind, rng);
        Self { net, proj }
    }

    /// Complex logit per component.
    pub fn logits<B: Backend>(&self, b: &mut B, comps: &[Feat<B::R>]) -> Result<Vec<Cx<B::R>>, SelectError> {
        comps.iter().map(|c| self.net.forward(b, c)).collect()
    }

    /// `noise` holds `2·K` Gumbel samples for `K` components: the first `K`
    /// perturb explicit scores or real parts, the rest the imaginary parts.
    pub fn decide<B: Backend>(
        &self,
        b: &mut B,
        comps: &[Feat<B::R>],
        mode: SelectMode,
        noise: Option<&[f64]>,
    ) -> Result<LpsDecision<B::R>, SelectError> {
        let k = comps.len();
        let logits = self.logits(b, comps)?;
        let explicit = self.proj.kind.is_explicit();
        let projected = if explicit {
            Some(self.proj.forward(b, &logits)?)
        } else {
            None
        };
        match mode {
            SelectMode::Eval => {
                let scores: Vec<f64> = match &projected {
                    Some(p) => p.iter().map(|v| b.val(*v)).collect(),
                    None => {
                        let v = self.proj.forward(b, &logits)?;
                        v.iter().map(|x| b.val(*x)).collect()
                    }
                };
                let probs = if explicit { plain_softmax(&scores) } else { scores.clone() };
                let index = argmax(&probs);
                Ok(LpsDecision {
                    scores,
                    probs,
                    index,
                    weights: None,
                })
            }
            SelectMode::Train { temperature } => {
                let zeros = vec![0.0; 2 * k];
                let g = noise.unwrap_or(&zeros);
                if g.len() < 2 * k {
                    return Err(SelectError::SizeMismatch {
                        what: "Gumbel noise",
                        expected: 2 * k,
                        got: g.len(),
                    });
                }
                let (scores, y) = if let Some(p) = projected {
                    let scores = p.iter().map(|v| b.val(*v)).collect();
                    (scores, gumbel_soft(b, &p, &g[..k], temperature)?)
                } else {
                    let clean = self.proj.forward(b, &logits)?;
                    let scores = clean.iter().map(|v| b.val(*v)).collect();
                    let re: Vec<_> = logits.iter().map(|z| z.re).collect();
                    let im: Vec<_> = logits.iter().map(|z| z.im).collect();
                    let yr = gumbel_soft(b, &re, &g[..k], temperature)?;
                    let yi = gumbel_soft(b, &im, &g[k..2 * k], temperature)?;
                    (scores, self.proj.combine(b, &yr, &yi))
                };
                let probs: Vec<f64> = y.iter().map(|v| b.val(*v)).collect();
                let (st, index) = straight_through(b, &y);
                Ok(LpsDecision {
                    scores,
                    probs,
                    index,
                    weights: Some(st),
                })
            }
        }
    }
}

/// Eval-mode score vector of a learnable selector over the components of `z`.
pub fn lps_scores(
    params: &ParamSet,
    selector: &LpsSelector,
    z: &ComplexTensor,
    dims: usize,
    p: usize,
) -> Result<Vec<f64>, SelectError> {
    let comps = components(z, dims, p).map_err(|e| SelectError::Layer(Box::new(e.into())))?;
    let mut b = Eval::new(params);
    let lifted: Vec<_> = comps.iter().map(|c| lift(&mut b, c)).collect();
    Ok(selector.decide(&mut b, &lifted, SelectMode::Eval, None)?.scores)
}
