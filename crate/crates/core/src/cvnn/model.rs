//! Toy assemblies: an encoder with a classification head, and a symmetric
//! encoder–decoder for reconstruction or dense segmentation.
//!
//! Encoder stage `i`: centred circular conv to `channels·2^i`, activation,
//! downsampling by `factor`. The decoder mirrors it, popping the phase each
//! downsampling layer recorded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    blur, cmax_sliding, lift, lower, mean_modulus, modulus_logits, split_relu, ConvLayer, Feat,
    Linear, ModRelu,
};
use super::CvnnError;
use crate::autodiff::backend::{cross_entropy, Cx};
use crate::autodiff::{Backend, Eval, ParamSet};
use crate::ctensor::{ComplexTensor, Tensor};
use crate::polyphase::{
    aps_score, argmax, components, downsample_p, ipoly_with, softmax, PolyphaseIndex,
    SelectionStack,
};
use crate::select::{gumbel_sample, LpsSelector, ProjectionKind, SelectMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Head {
    Classify { classes: usize },
    Segment { classes: usize },
    Reconstruct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    /// Sliding max pooling then fixed-phase subsampling.
    Strided,
    /// Sliding max pooling, `[1, 2, 1]/4` blur, fixed-phase subsampling.
    Lpf,
    Aps,
    Lps { projection: ProjectionKind },
}

impl Sampling {
    pub fn is_adaptive(&self) -> bool {
        matches!(self, Sampling::Aps | Sampling::Lps { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Complex,
    /// Real weights; real and imaginary parts stacked as input channels.
    DualReal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub in_channels: usize,
    /// Number of trailing spatial axes (1 or 2).
    pub dims: usize,
    pub depth: usize,
    pub channels: usize,
    pub kernel: usize,
    pub factor: usize,
    pub head: Head,
    pub sampling: Sampling,
    pub representation: Representation,
    /// Smooth after polyphase upsampling with gain `factor`.
    pub lowpass_after_pu: bool,
    pub selector_kernel: usize,
}

impl ModelSpec {
    pub fn classifier(in_channels: usize, classes: usize, sampling: Sampling) -> Self {
        Self {
            in_channels,
            dims: 2,
            depth: 4,
            channels: 16,
            kernel: 3,
            factor: 2,
            head: Head::Classify { classes },
            sampling,
            representation: Representation::Complex,
            lowpass_after_pu: false,
            selector_kernel: 3,
        }
    }

    pub fn autoencoder(in_channels: usize, sampling: Sampling) -> Self {
        Self {
            depth: 2,
            channels: 64,
            head: Head::Reconstruct,
            ..Self::classifier(in_channels, 2, sampling)
        }
    }

    pub fn validate(&self) -> Result<(), CvnnError> {
        let bad = |m: &str| Err(CvnnError::InvalidSpec(m.to_string()));
        if self.in_channels == 0 || self.channels == 0 {
            return bad("channel counts must be positive");
        }
        if !(1..=2).contains(&self.dims) {
            return bad("dims must be 1 or 2");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.kernel == 0 || self.kernel % 2 == 0 || self.selector_kernel == 0 || self.selector_kernel % 2 == 0 {
            return bad("kernel sizes must be odd");
        }
        if self.factor < 2 {
            return bad("factor must be at least 2");
        }
        match &self.head {
            Head::Classify { classes } | Head::Segment { classes } if *classes < 2 => bad("need at least 2 classes"),
            _ => Ok(()),
        }?;
        if let Sampling::Lps {
            projection: ProjectionKind::PolyDec { order: 0 },
        } = &self.sampling
        {
            return bad("PolyDec order must be at least 1");
        }
        if let Sampling::Lps {
            projection: ProjectionKind::Mlp { hidden },
        } = &self.sampling
        {
            if hidden.contains(&0) {
                return bad("MLP widths must be positive");
            }
        }
        Ok(())
    }

    /// Input side length must be a multiple of this on every spatial axis.
    pub fn granularity(&self) -> usize {
        self.factor.pow(self.depth as u32)
    }

    pub fn components(&self) -> usize {
        self.factor.pow(self.dims as u32)
    }

    fn stage_channels(&self, i: usize) -> usize {
        self.channels << i
    }

    fn effective_in(&self) -> usize {
        match self.representation {
            Representation::Complex => self.in_channels,
            Representation::DualReal => 2 * self.in_channels,
        }
    }

    fn real(&self) -> bool {
        self.representation == Representation::DualReal
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Act {
    ModRelu(ModRelu),
    Split,
}

impl Act {
    fn new(params: &mut ParamSet, name: &str, spec: &ModelSpec, channels: usize) -> Self {
        match spec.representation {
            Representation::Complex => Act::ModRelu(ModRelu::init(params, name, channels, 0.0)),
            Representation::DualReal => Act::Split,
        }
    }

    fn forward<B: Backend>(&self, b: &mut B, x: &Feat<B::R>) -> Result<Feat<B::R>, CvnnError> {
        match self {
            Act::ModRelu(m) => m.forward(b, x),
            Act::Split => Ok(split_relu(b, x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    conv: ConvLayer,
    act: Act,
    selector: Option<LpsSelector>,
}

#[derive(Debug, Clone, PartialEq)]
enum HeadLayer {
    Linear(Linear),
    Conv(ConvLayer),
}

/// A built model: the spec, its parameters and the layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
    encoder: Vec<Stage>,
    decoder: Vec<(ConvLayer, Act)>,
    head: HeadLayer,
}

/// Deterministic construction from `seed`.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model, CvnnError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let real = spec.real();
    let ksize = vec![spec.kernel; spec.dims];
    let mut encoder = Vec::with_capacity(spec.depth);
    let mut c_in = spec.effective_in();
    for i in 0..spec.depth {
        let c_out = spec.stage_channels(i);
        let name = format!("enc{i}");
        let conv = ConvLayer::init(&mut params, &format!("{name}.conv"), c_in, c_out, ksize.clone(), real, true, &mut rng);
        let act = Act::new(&mut params, &name, spec, c_out);
        let selector = match &spec.sampling {
            Sampling::Lps { projection } => Some(LpsSelector::init(
                &mut params,
                &format!("{name}.lps"),
                c_out,
                vec![spec.selector_kernel; spec.dims],
                projection.clone(),
                real,
                &mut rng,
            )),
            _ => None,
        };
        encoder.push(Stage { conv, act, selector });
        c_in = c_out;
    }

    let mut decoder = Vec::new();
    let head = match spec.head {
        Head::Classify { classes } => {
            HeadLayer::Linear(Linear::init(&mut params, "head", c_in, classes, real, &mut rng))
        }
        Head::Segment { .. } | Head::Reconstruct => {
            for i in (0..spec.depth).rev() {
                let c_out = if i == 0 { spec.channels } else { spec.stage_channels(i - 1) };
                let name = format!("dec{i}");
                let conv = ConvLayer::init(&mut params, &format!("{name}.conv"), c_in, c_out, ksize.clone(), real, true, &mut rng);
                let act = Act::new(&mut params, &name, spec, c_out);
                decoder.push((conv, act));
                c_in = c_out;
            }
            let out = match spec.head {
                Head::Segment { classes } => classes,
                _ => spec.effective_in(),
            };
            HeadLayer::Conv(ConvLayer::init(&mut params, "head", c_in, out, vec![1; spec.dims], real, true, &mut rng))
        }
    };
    Ok(Model {
        spec: spec.clone(),
        params,
        encoder,
        decoder,
        head,
    })
}

/// How selection layers behave during one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub mode: SelectMode,
    /// Gumbel noise per downsampling layer (`2·p^dims` values each).
    pub noise: Option<Vec<Vec<f64>>>,
}

impl Forward {
    pub fn eval() -> Self {
        Self {
            mode: SelectMode::Eval,
            noise: None,
        }
    }

    pub fn train(temperature: f64, noise: Vec<Vec<f64>>) -> Self {
        Self {
            mode: SelectMode::Train { temperature },
            noise: Some(noise),
        }
    }
}

/// Phases selected and scores seen by each downsampling layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub selections: Vec<PolyphaseIndex>,
    pub scores: Vec<Vec<f64>>,
}

/// Supervision for [`Model::loss`].
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Label(usize),
    /// One label per pixel, row-major.
    Mask(&'a [usize]),
    Signal(&'a ComplexTensor),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Class(usize),
    Mask(Vec<usize>),
    Signal(ComplexTensor),
}

impl Model {
    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Gumbel noise for one training forward pass.
    pub fn draw_noise(&self, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        let k = self.spec.components();
        (0..self.spec.depth)
            .map(|_| (0..2 * k).map(|_| gumbel_sample(rng)).collect())
            .collect()
    }

    fn check_input(&self, x: &ComplexTensor) -> Result<(), CvnnError> {
        let s = &self.spec;
        let g = s.granularity();
        if x.rank() != s.dims + 1 || x.shape()[0] != s.in_channels || x.shape()[1..].iter().any(|n| n % g != 0 || *n == 0)
        {
            return Err(CvnnError::Shape(format!(
                "expected [{}, spatial multiples of {g}] with {} spatial axes, got {:?}",
                s.in_channels,
                s.dims,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Input as backend features; dual-real stacks `[Re; Im]` as channels.
    pub fn prepare<B: Backend>(&self, b: &mut B, x: &ComplexTensor) -> Result<Feat<B::R>, CvnnError> {
        self.check_input(x)?;
        match self.spec.representation {
            Representation::Complex => Ok(lift(b, x)),
            Representation::DualReal => {
                let mut data: Vec<Cx<B::R>> = Vec::with_capacity(2 * x.len());
                let zero = b.lit(0.0);
                for z in x.data() {
                    data.push(Cx::new(b.lit(z.re), zero));
                }
                for z in x.data() {
                    data.push(Cx::new(b.lit(z.im), zero));
                }
                let mut shape = x.shape().to_vec();
                shape[0] *= 2;
                Ok(Tensor::new(shape, data)?)
            }
        }
    }

    fn downsample<B: Backend>(
        &self,
        b: &mut B,
        stage: usize,
        x: Feat<B::R>,
        fwd: &Forward,
        stack: &mut SelectionStack,
        trace: &mut Trace,
    ) -> Result<Feat<B::R>, CvnnError> {
        let s = &self.spec;
        let (p, dims) = (s.factor, s.dims);
        let spatial = x.shape()[1..].to_vec();
        let (k, scores, out) = match &s.sampling {
            Sampling::Strided | Sampling::Lpf => {
                let mut y = cmax_sliding(b, &x, &vec![p; dims])?;
                if s.sampling == Sampling::Lpf {
                    y = blur(b, &y, dims, 1.0);
                }
                (0, Vec::new(), downsample_p(&y, p, dims)?)
            }
            Sampling::Aps => {
                let mut comps = components(&x, dims, p)?;
                let scores: Vec<f64> = comps.iter().map(|c| aps_score(&lower(b, c))).collect();
                let k = argmax(&softmax(&scores));
                (k, scores, comps.swap_remove(k))
            }
            Sampling::Lps { .. } => {
                let selector = self.encoder[stage].selector.as_ref().expect("LPS stage has a selector");
                let mut comps = components(&x, dims, p)?;
                let noise = fwd.noise.as_ref().and_then(|n| n.get(stage)).map(Vec::as_slice);
                let d = selector.decide(b, &comps, fwd.mode, noise)?;
                let out = match &d.weights {
                    Some(w) => mix_components(b, &comps, w)?,
                    None => comps.swap_remove(d.index),
                };
                (d.index, d.scores, out)
            }
        };
        let idx = PolyphaseIndex::from_flat(k, dims, p);
        trace.selections.push(idx.clone());
        trace.scores.push(scores);
        stack.push(idx, spatial);
        Ok(out)
    }

    /// Encoder output (before any head).
    pub fn encode<B: Backend>(
        &self,
        b: &mut B,
        x: &ComplexTensor,
        fwd: &Forward,
        stack: &mut SelectionStack,
        trace: &mut Trace,
    ) -> Result<Feat<B::R>, CvnnError> {
        let mut h = self.prepare(b, x)?;
        for (i, st) in self.encoder.iter().enumerate() {
            h = st.conv.forward(b, &h)?;
            h = st.act.forward(b, &h)?;
            h = self.downsample(b, i, h, fwd, stack, trace)?;
        }
        Ok(h)
    }

    /// Real class logits of a classifier.
    pub fn logits<B: Backend>(
        &self,
        b: &mut B,
        x: &ComplexTensor,
        fwd: &Forward,
        trace: &mut Trace,
    ) -> Result<Vec<B::R>, CvnnError> {
        let HeadLayer::Linear(lin) = &self.head else {
            return Err(CvnnError::InvalidSpec("logits need a classification head".into()));
        };
        let mut stack = SelectionStack::new();
        let h = self.encode(b, x, fwd, &mut stack, trace)?;
        let zero = b.lit(0.0);
        let pooled: Vec<_> = mean_modulus(b, &h).into_iter().map(|m| Cx::new(m, zero)).collect();
        let z = lin.forward(b, &pooled)?;
        Ok(self.realise(b, &z))
    }

    fn realise<B: Backend>(&self, b: &mut B, z: &[Cx<B::R>]) -> Vec<B::R> {
        match self.spec.representation {
            Representation::Complex => modulus_logits(b, z),
            Representation::DualReal => z.iter().map(|c| c.re).collect(),
        }
    }

    /// Dense output: `[classes, ..]` complex logit maps for segmentation,
    /// `[in_channels, ..]` for reconstruction.
    pub fn dense<B: Backend>(
        &self,
        b: &mut B,
        x: &ComplexTensor,
        fwd: &Forward,
        trace: &mut Trace,
    ) -> Result<Feat<B::R>, CvnnError> {
        let HeadLayer::Conv(head) = &self.head else {
            return Err(CvnnError::InvalidSpec("dense output needs a decoder".into()));
        };
        let (p, dims) = (self.spec.factor, self.spec.dims);
        let mut stack = SelectionStack::new();
        let mut h = self.encode(b, x, fwd, &mut stack, trace)?;
        for (conv, act) in &self.decoder {
            let (k, target) = stack.pop()?;
            let zero = b.lit(0.0);
            h = ipoly_with(&h, &k, &target, Cx::new(zero, zero))?;
            if self.spec.lowpass_after_pu {
                h = blur(b, &h, dims, p as f64);
            }
            h = conv.forward(b, &h)?;
            h = act.forward(b, &h)?;
        }
        if !stack.is_empty() {
            return Err(CvnnError::InvalidSpec("unbalanced encoder and decoder".into()));
        }
        let out = head.forward(b, &h)?;
        if self.spec.head == Head::Reconstruct && self.spec.representation == Representation::DualReal {
            // Recombine stacked real channels into complex ones.
            let c = self.spec.in_channels;
            let per = out.len() / (2 * c);
            let d = out.data();
            let data = (0..c * per).map(|i| Cx::new(d[i].re, d[c * per + i].re)).collect();
            let mut shape = out.shape().to_vec();
            shape[0] = c;
            return Ok(Tensor::new(shape, data)?);
        }
        Ok(out)
    }

    /// Per-pixel real logits `[pixels][classes]` of a segmentation model.
    pub fn pixel_logits<B: Backend>(
        &self,
        b: &mut B,
        x: &ComplexTensor,
        fwd: &Forward,
        trace: &mut Trace,
    ) -> Result<Vec<Vec<B::R>>, CvnnError> {
        let out = self.dense(b, x, fwd, trace)?;
        let classes = out.shape()[0];
        let per = out.len() / classes;
        let d = out.data();
        Ok((0..per)
            .map(|pix| {
                let z: Vec<_> = (0..classes).map(|c| d[c * per + pix]).collect();
                self.realise(b, &z)
            })
            .collect())
    }

    /// Scalar training loss: cross-entropy for classification, mean
    /// per-pixel cross-entropy for segmentation, mean `|x̂ − x|²` for
    /// reconstruction.
    pub fn loss<B: Backend>(
        &self,
        b: &mut B,
        x: &ComplexTensor,
        target: Target<'_>,
        fwd: &Forward,
    ) -> Result<B::R, CvnnError> {
        let mut trace = Trace::default();
        match (&self.spec.head, target) {
            (Head::Classify { classes }, Target::Label(label)) => {
                let logits = self.logits(b, x, fwd, &mut trace)?;
                check_label(label, *classes)?;
                Ok(cross_entropy(b, &logits, label)?)
            }
            (Head::Segment { classes }, Target::Mask(mask)) => {
                let per = self.pixel_logits(b, x, fwd, &mut trace)?;
                if mask.len() != per.len() {
                    return Err(CvnnError::Shape(format!("mask has {} labels for {} pixels", mask.len(), per.len())));
                }
                let mut terms = Vec::with_capacity(per.len());
                for (logits, &label) in per.iter().zip(mask) {
                    check_label(label, *classes)?;
                    terms.push(cross_entropy(b, logits, label)?);
                }
                let s = b.sum(&terms);
                Ok(b.scale(s, 1.0 / terms.len() as f64))
            }
            (Head::Reconstruct, Target::Signal(t)) => {
                let out = self.dense(b, x, fwd, &mut trace)?;
                if out.shape() != t.shape() {
                    return Err(CvnnError::Shape(format!("target {:?} vs output {:?}", t.shape(), out.shape())));
                }
                let sq: Vec<B::R> = out
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(o, z)| {
                        let dr = b.add_const(o.re, -z.re);
                        let di = b.add_const(o.im, -z.im);
                        b.signed_dot(&[(1.0, dr, dr), (1.0, di, di)], None)
                    })
                    .collect();
                let s = b.sum(&sq);
                Ok(b.scale(s, 1.0 / sq.len() as f64))
            }
            _ => Err(CvnnError::InvalidSpec("target does not match the model head".into())),
        }
    }

    /// Noise-free inference.
    pub fn predict(&self, x: &ComplexTensor) -> Result<Prediction, CvnnError> {
        self.predict_traced(x, &mut Trace::default())
    }

    pub fn predict_traced(&self, x: &ComplexTensor, trace: &mut Trace) -> Result<Prediction, CvnnError> {
        let mut b = Eval::new(&self.params);
        let fwd = Forward::eval();
        match self.spec.head {
            Head::Classify { .. } => Ok(Prediction::Class(argmax(&self.logits(&mut b, x, &fwd, trace)?))),
            Head::Segment { .. } => Ok(Prediction::Mask(
                self.pixel_logits(&mut b, x, &fwd, trace)?.iter().map(|l| argmax(l)).collect(),
            )),
            Head::Reconstruct => {
                let out = self.dense(&mut b, x, &fwd, trace)?;
                Ok(Prediction::Signal(lower(&b, &out)))
            }
        }
    }

    /// Eval-mode class logits as plain numbers.
    pub fn class_logits(&self, x: &ComplexTensor) -> Result<Vec<f64>, CvnnError> {
        let mut b = Eval::new(&self.params);
        self.logits(&mut b, x, &Forward::eval(), &mut Trace::default())
    }

    /// Eval-mode dense output as a complex tensor.
    pub fn dense_output(&self, x: &ComplexTensor) -> Result<ComplexTensor, CvnnError> {
        let mut b = Eval::new(&self.params);
        let out = self.dense(&mut b, x, &Forward::eval(), &mut Trace::default())?;
        Ok(lower(&b, &out))
    }
}

fn check_label(label: usize, classes: usize) -> Result<(), CvnnError> {
    if label >= classes {
        return Err(CvnnError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// `Σ_k w_k · comp_k` per sample; with one-hot forward weights this equals
/// the winning component exactly.
fn mix_components<B: Backend>(b: &mut B, comps: &[Feat<B::R>], w: &[B::R]) -> Result<Feat<B::R>, CvnnError> {
    let n = comps[0].len();
    let mut out = Vec::with_capacity(n);
    let mut re = Vec::with_capacity(comps.len());
    let mut im = Vec::with_capacity(comps.len());
    for i in 0..n {
        re.clear();
        im.clear();
        for (c, wk) in comps.iter().zip(w) {
            let z = c.data()[i];
            re.push((1.0, *wk, z.re));
            im.push((1.0, *wk, z.im));
        }
        out.push(Cx::new(b.signed_dot(&re, None), b.signed_dot(&im, None)));
    }
    Ok(Tensor::new(comps[0].shape().to_vec(), out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{gradcheck, AdamW, AdamWConfig, Record};
    use crate::ctensor::{shift_spatial, C64};
    use rand_distr::{Distribution, Normal};

    fn random_input(shape: Vec<usize>, seed: u64) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        Tensor::from_fn(shape, |_| C64::new(d.sample(&mut rng), d.sample(&mut rng)))
    }

    fn small(head: Head, sampling: Sampling) -> ModelSpec {
        ModelSpec {
            in_channels: 2,
            dims: 2,
            depth: 2,
            channels: 3,
            kernel: 3,
            factor: 2,
            head,
            sampling,
            representation: Representation::Complex,
            lowpass_after_pu: false,
            selector_kernel: 3,
        }
    }

    fn lps(projection: ProjectionKind) -> Sampling {
        Sampling::Lps { projection }
    }

    #[test]
    fn full_scale_shapes_build() {
        let m = build_model(&ModelSpec::classifier(3, 7, lps(ProjectionKind::PolyDec { order: 2 })), 0).unwrap();
        assert_eq!(m.encoder.len(), 4);
        assert_eq!(m.encoder[3].conv.c_out, 128);
        let ae = build_model(&ModelSpec::autoencoder(3, Sampling::Aps), 0).unwrap();
        assert_eq!(ae.decoder.len(), 2);
        assert_eq!(ae.encoder[0].conv.c_out, 64);
    }

    #[test]
    fn same_seed_same_parameters() {
        let spec = small(Head::Classify { classes: 4 }, lps(ProjectionKind::Mlp { hidden: vec![4] }));
        let a = build_model(&spec, 9).unwrap();
        let b = build_model(&spec, 9).unwrap();
        let bits = |m: &Model| m.params.flat_values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&build_model(&spec, 10).unwrap()));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = small(Head::Reconstruct, Sampling::Aps);
        s.kernel = 2;
        assert!(build_model(&s, 0).is_err());
        let mut s = small(Head::Classify { classes: 1 }, Sampling::Aps);
        assert!(build_model(&s, 0).is_err());
        s.head = Head::Classify { classes: 3 };
        s.factor = 1;
        assert!(build_model(&s, 0).is_err());
    }

    #[test]
    fn input_shape_checked() {
        let m = build_model(&small(Head::Classify { classes: 3 }, Sampling::Aps), 0).unwrap();
        assert!(m.predict(&random_input(vec![2, 6, 8], 0)).is_err());
        assert!(m.predict(&random_input(vec![3, 8, 8], 0)).is_err());
        assert!(m.predict(&random_input(vec![2, 8, 8], 0)).is_ok());
    }

    #[test]
    fn adaptive_classifiers_are_invariant() {
        for sampling in [Sampling::Aps, lps(ProjectionKind::Norm), lps(ProjectionKind::PSoftmax)] {
            for repr in [Representation::Complex, Representation::DualReal] {
                let mut spec = small(Head::Classify { classes: 3 }, sampling.clone());
                spec.representation = repr;
                let m = build_model(&spec, 1).unwrap();
                let x = random_input(vec![2, 8, 8], 2);
                let base = m.class_logits(&x).unwrap();
                for s in [[1, 0], [0, 3], [5, 7]] {
                    let xs = shift_spatial(&x, &s).unwrap();
                    assert_eq!(m.class_logits(&xs).unwrap(), base, "{sampling:?} {repr:?} {s:?}");
                }
            }
        }
    }

    #[test]
    fn adaptive_autoencoder_is_equivariant_bitwise() {
        for lowpass in [false, true] {
            let mut spec = small(Head::Reconstruct, lps(ProjectionKind::PolyDec { order: 2 }));
            spec.lowpass_after_pu = lowpass;
            let m = build_model(&spec, 4).unwrap();
            let x = random_input(vec![2, 8, 8], 5);
            let y = m.dense_output(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
            for s in [[1, 1], [3, 0], [6, 5]] {
                let a = m.dense_output(&shift_spatial(&x, &s).unwrap()).unwrap();
                assert_eq!(a, shift_spatial(&y, &s).unwrap());
            }
        }
    }

    #[test]
    fn strided_autoencoder_is_not_equivariant() {
        let m = build_model(&small(Head::Reconstruct, Sampling::Strided), 4).unwrap();
        let x = random_input(vec![2, 8, 8], 5);
        let y = m.dense_output(&x).unwrap();
        let a = m.dense_output(&shift_spatial(&x, &[1, 0]).unwrap()).unwrap();
        assert_ne!(a, shift_spatial(&y, &[1, 0]).unwrap());
    }

    #[test]
    fn segmentation_masks_shift_with_input() {
        let m = build_model(&small(Head::Segment { classes: 3 }, Sampling::Aps), 6).unwrap();
        let x = random_input(vec![2, 8, 8], 7);
        let Prediction::Mask(base) = m.predict(&x).unwrap() else { panic!() };
        let mask = Tensor::new(vec![8, 8], base).unwrap();
        let Prediction::Mask(shifted) = m.predict(&shift_spatial(&x, &[3, 2]).unwrap()).unwrap() else { panic!() };
        assert_eq!(shifted, shift_spatial(&mask, &[3, 2]).unwrap().into_data());
    }

    #[test]
    fn eval_and_record_losses_agree() {
        let spec = small(Head::Classify { classes: 3 }, lps(ProjectionKind::Mlp { hidden: vec![3] }));
        let m = build_model(&spec, 8).unwrap();
        let x = random_input(vec![2, 8, 8], 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fwd = Forward::train(0.5, m.draw_noise(&mut rng));
        let e = m.loss(&mut Eval::new(&m.params), &x, Target::Label(1), &fwd).unwrap();
        let mut tape = crate::autodiff::Tape::new();
        let bound = m.params.bind(&mut tape);
        let v = {
            let mut rec = Record::new(&mut tape, &bound);
            m.loss(&mut rec, &x, Target::Label(1), &fwd).unwrap()
        };
        assert_eq!(tape.value(v).to_bits(), e.to_bits());
    }

    #[test]
    fn training_mode_selection_matches_eval_forward() {
        // Straight-through weights are exactly one-hot, so the recorded
        // training forward equals an eval forward that picks the same phases.
        let spec = small(Head::Reconstruct, lps(ProjectionKind::Norm));
        let m = build_model(&spec, 2).unwrap();
        let x = random_input(vec![2, 8, 8], 3);
        let mut b = Eval::new(&m.params);
        let fwd = Forward::train(1.0, vec![vec![0.0; 8]; 2]);
        let mut t1 = Trace::default();
        let y = m.dense(&mut b, &x, &fwd, &mut t1).unwrap();
        let train = lower(&b, &y);
        let mut t2 = Trace::default();
        let y = m.dense(&mut b, &x, &Forward::eval(), &mut t2).unwrap();
        let eval = lower(&b, &y);
        assert_eq!(t1.selections, t2.selections);
        assert_eq!(train, eval);
    }

    #[test]
    fn full_network_gradcheck() {
        for (head, target_label) in [(Head::Classify { classes: 3 }, true), (Head::Reconstruct, false)] {
            let spec = small(head, lps(ProjectionKind::PolyDec { order: 2 }));
            let m = build_model(&spec, 3).unwrap();
            let x = random_input(vec![2, 4, 4], 4);
            let report = gradcheck(
                &m.params,
                |tape, bound| {
                    let mut rec = Record::new(tape, bound);
                    let t = if target_label { Target::Label(2) } else { Target::Signal(&x) };
                    m.loss(&mut rec, &x, t, &Forward::eval())
                },
                1e-6,
                1e-4,
            );
            assert!(report.passed, "{report:#?}");
        }
    }

    #[test]
    fn a_few_steps_reduce_reconstruction_loss() {
        let m0 = build_model(&small(Head::Reconstruct, Sampling::Aps), 5).unwrap();
        let mut m = m0.clone();
        let x = random_input(vec![2, 4, 4], 6);
        let loss = |m: &Model| m.loss(&mut Eval::new(&m.params), &x, Target::Signal(&x), &Forward::eval()).unwrap();
        let before = loss(&m);
        let mut opt = AdamW::new(AdamWConfig::reconstruction());
        for _ in 0..20 {
            let (_, g) = super::super::value_and_grad(&m.params, |rec| {
                m.loss(rec, &x, Target::Signal(&x), &Forward::eval())
            })
            .unwrap();
            m.params.zero_grad();
            m.params.add_flat_grads(&g);
            opt.step(&mut m.params);
        }
        assert!(loss(&m) < before);
    }
}
