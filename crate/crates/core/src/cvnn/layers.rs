use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::CvnnError;
use crate::autodiff::backend::{cabs, cdot, clit, cparam, cval, rdot};
use crate::autodiff::{
    Backend, Cx, Eval, ParamId, ParamKind, ParamRole, ParamSet, Tape,
};
use crate::ctensor::{next_index, row_major_strides, tap_table, ComplexTensor, Tensor, C64};

/// A feature map whose samples live on some [`Backend`].
pub type Feat<R> = Tensor<Cx<R>>;

pub fn lift<B: Backend>(b: &mut B, x: &ComplexTensor) -> Feat<B::R> {
    x.map(|z| clit(b, *z))
}

pub fn lower<B: Backend>(b: &B, x: &Feat<B::R>) -> ComplexTensor {
    x.map(|z| cval(b, *z))
}

fn gaussian(rng: &mut impl Rng, std: f64, n: usize) -> Vec<f64> {
    let d = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Complex (or real-weighted) circular convolution, stride 1, kernel
/// centred on the output sample, plus a per-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
    pub ksize: Vec<usize>,
    pub real_weights: bool,
}

impl ConvLayer {
    /// Complex weights get independent real and imaginary parts with
    /// standard deviation `1/√(2·fan_in)`; real weights get `√(2/fan_in)`.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        params: &mut ParamSet,
        name: &str,
        c_in: usize,
        c_out: usize,
        ksize: Vec<usize>,
        real_weights: bool,
        with_bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let k_len: usize = ksize.iter().product();
        let fan_in = (c_in * k_len) as f64;
        let mut shape = vec![c_out, c_in];
        shape.extend_from_slice(&ksize);
        let n = c_out * c_in * k_len;
        let (kind, values) = if real_weights {
            (ParamKind::Real, gaussian(rng, (2.0 / fan_in).sqrt(), n))
        } else {
            (ParamKind::Complex, gaussian(rng, (0.5 / fan_in).sqrt(), 2 * n))
        };
        let weight = params.add(format!("{name}.weight"), shape, kind, ParamRole::Weight, values);
        let bias = with_bias.then(|| {
            let len = if real_weights { c_out } else { 2 * c_out };
            params.add(format!("{name}.bias"), vec![c_out], kind, ParamRole::Bias, vec![0.0; len])
        });
        Self {
            weight,
            bias,
            c_in,
            c_out,
            ksize,
            real_weights,
        }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &Feat<B::R>) -> Result<Feat<B::R>, CvnnError> {
        if x.rank() != self.ksize.len() + 1 || x.shape()[0] != self.c_in {
            return Err(CvnnError::Shape(format!(
                "conv expects [{}, ..{} spatial axes], got {:?}",
                self.c_in,
                self.ksize.len(),
                x.shape()
            )));
        }
        // Kernels wider than a (deep, small) map simply wrap around it.
        let spatial = &x.shape()[1..];
        let sp_len: usize = spatial.iter().product();
        let k_len: usize = self.ksize.iter().product();
        let offsets: Vec<usize> = self.ksize.iter().map(|k| k / 2).collect();
        let taps = tap_table(spatial, &self.ksize, &offsets);
        let n_w = self.c_out * self.c_in * k_len;
        let zero = b.lit(0.0);
        let bias = |b: &B, co: usize| -> Option<Cx<B::R>> {
            self.bias.map(|id| {
                if self.real_weights {
                    Cx::new(b.param(id, co), zero)
                } else {
                    cparam(b, id, co)
                }
            })
        };
        let xd = x.data();
        let mut out = Vec::with_capacity(self.c_out * sp_len);
        if self.real_weights {
            let w: Vec<B::R> = (0..n_w).map(|i| b.param(self.weight, i)).collect();
            let mut pairs = Vec::with_capacity(self.c_in * k_len);
            for co in 0..self.c_out {
                let bc = bias(b, co);
                for pos in 0..sp_len {
                    pairs.clear();
                    for ci in 0..self.c_in {
                        for t in 0..k_len {
                            let wi = (co * self.c_in + ci) * k_len + t;
                            pairs.push((w[wi], xd[ci * sp_len + taps[pos * k_len + t]]));
                        }
                    }
                    out.push(rdot(b, &pairs, bc));
                }
            }
        } else {
            let w: Vec<Cx<B::R>> = (0..n_w).map(|i| cparam(b, self.weight, i)).collect();
            let mut pairs = Vec::with_capacity(self.c_in * k_len);
            for co in 0..self.c_out {
                let bc = bias(b, co);
                for pos in 0..sp_len {
                    pairs.clear();
                    for ci in 0..self.c_in {
                        for t in 0..k_len {
                            let wi = (co * self.c_in + ci) * k_len + t;
                            pairs.push((w[wi], xd[ci * sp_len + taps[pos * k_len + t]]));
                        }
                    }
                    out.push(cdot(b, &pairs, bc));
                }
            }
        }
        let mut shape = vec![self.c_out];
        shape.extend_from_slice(spatial);
        Ok(Tensor::new(shape, out)?)
    }
}

/// Numeric convolution layer application on a plain complex tensor.
pub fn apply_conv(
    params: &ParamSet,
    layer: &ConvLayer,
    x: &ComplexTensor,
) -> Result<ComplexTensor, CvnnError> {
    let mut b = Eval::new(params);
    let xf = lift(&mut b, x);
    let y = layer.forward(&mut b, &xf)?;
    Ok(lower(&b, &y))
}

/// `ReLU(|z| + b) · z/|z|` with one real bias per channel; exactly 0 at `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModRelu {
    pub bias: ParamId,
    pub channels: usize,
}

impl ModRelu {
    pub fn init(params: &mut ParamSet, name: &str, channels: usize, value: f64) -> Self {
        let bias = params.add(
            format!("{name}.modrelu_bias"),
            vec![channels],
            ParamKind::Real,
            ParamRole::ActivationBias,
            vec![value; channels],
        );
        Self { bias, channels }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &Feat<B::R>) -> Result<Feat<B::R>, CvnnError> {
        let channels = channel_count(x);
        if channels != self.channels {
            return Err(CvnnError::Shape(format!(
                "modReLU has {} channels, input {:?}",
                self.channels,
                x.shape()
            )));
        }
        let per = x.len() / channels.max(1);
        let mut out = Vec::with_capacity(x.len());
        for (i, z) in x.data().iter().enumerate() {
            let bias = b.param(self.bias, i / per.max(1));
            out.push(modrelu_one(b, *z, bias)?);
        }
        Ok(Tensor::new(x.shape().to_vec(), out)?)
    }
}

fn modrelu_one<B: Backend>(b: &mut B, z: Cx<B::R>, bias: B::R) -> Result<Cx<B::R>, CvnnError> {
    let r = cabs(b, z);
    if b.val(r) == 0.0 {
        let zero = b.lit(0.0);
        return Ok(Cx::new(zero, zero));
    }
    let t = b.add(r, bias);
    let a = b.relu(t);
    let s = b.div(a, r)?;
    Ok(Cx::new(b.mul(s, z.re), b.mul(s, z.im)))
}

/// Channels are axis 0 unless the tensor is rank 1.
fn channel_count<T>(x: &Tensor<T>) -> usize {
    if x.rank() <= 1 {
        1
    } else {
        x.shape()[0]
    }
}

/// Numeric modReLU; `bias` holds one value per channel.
pub fn modrelu(z: &ComplexTensor, bias: &[f64]) -> Result<ComplexTensor, CvnnError> {
    let mut params = ParamSet::new();
    let layer = ModRelu::init(&mut params, "act", bias.len(), 0.0);
    params.get_mut(layer.bias).value = bias.to_vec();
    let mut b = Eval::new(&params);
    let x = lift(&mut b, z);
    let y = layer.forward(&mut b, &x)?;
    Ok(lower(&b, &y))
}

/// ReLU applied to real and imaginary parts separately.
pub fn split_relu<B: Backend>(b: &mut B, x: &Feat<B::R>) -> Feat<B::R> {
    x.map(|z| Cx::new(b.relu(z.re), b.relu(z.im)))
}

fn modulus_sq<B: Backend>(b: &B, z: &Cx<B::R>) -> f64 {
    let (re, im) = (b.val(z.re), b.val(z.im));
    re * re + im * im
}

fn argmax_by_modulus<B: Backend>(b: &B, zs: &[Cx<B::R>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, z) in zs.iter().enumerate() {
        let m = modulus_sq(b, z);
        match best {
            Some((_, bm)) if m <= bm => {}
            _ => best = Some((i, m)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// One sample per channel.
    Global,
    /// A circular window at every position; the shape is kept.
    Sliding,
}

/// Complex max pooling: the sample of largest modulus per channel. The
/// selection is locally constant, so gradients reach only that sample.
pub fn cmax_global<B: Backend>(b: &B, x: &Feat<B::R>) -> Result<Vec<Cx<B::R>>, CvnnError> {
    let channels = channel_count(x);
    let per = x.len() / channels.max(1);
    if per == 0 {
        return Err(CvnnError::Shape("empty pooling window".into()));
    }
    Ok(x.data()
        .chunks(per)
        .map(|c| c[argmax_by_modulus(b, c).expect("non-empty")])
        .collect())
}

/// Sliding complex max pooling over the trailing `window.len()` axes with
/// circular windows starting at each position.
pub fn cmax_sliding<B: Backend>(
    b: &B,
    x: &Feat<B::R>,
    window: &[usize],
) -> Result<Feat<B::R>, CvnnError> {
    if window.is_empty() || window.iter().any(|w| *w == 0) || window.len() > x.rank() {
        return Err(CvnnError::Shape(format!("invalid pooling window {window:?}")));
    }
    let first = x.rank() - window.len();
    let spatial = &x.shape()[first..];
    if window.iter().zip(spatial).any(|(w, n)| w > n) {
        return Err(CvnnError::Shape(format!(
            "window {window:?} larger than input {spatial:?}"
        )));
    }
    let sp_len: usize = spatial.iter().product();
    let w_len: usize = window.iter().product();
    let taps = tap_table(spatial, window, &vec![0; window.len()]);
    let mut out = Vec::with_capacity(x.len());
    let mut cands = Vec::with_capacity(w_len);
    for block in x.data().chunks(sp_len.max(1)) {
        for pos in 0..sp_len {
            cands.clear();
            cands.extend(taps[pos * w_len..(pos + 1) * w_len].iter().map(|i| block[*i]));
            out.push(cands[argmax_by_modulus(b, &cands).expect("non-empty")]);
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), out)?)
}

/// Numeric complex max pooling.
pub fn cmax_pool(z: &ComplexTensor, window: &[usize], mode: PoolMode) -> Result<ComplexTensor, CvnnError> {
    let params = ParamSet::new();
    let mut b = Eval::new(&params);
    let x = lift(&mut b, z);
    match mode {
        PoolMode::Global => {
            let v: Vec<C64> = cmax_global(&b, &x)?.into_iter().map(C64::from).collect();
            Ok(Tensor::new(vec![v.len()], v)?)
        }
        PoolMode::Sliding => Ok(lower(&b, &cmax_sliding(&b, &x, window)?)),
    }
}

/// Per-channel mean of the modulus; invariant to circular shifts bitwise.
pub fn mean_modulus<B: Backend>(b: &mut B, x: &Feat<B::R>) -> Vec<B::R> {
    let channels = channel_count(x);
    let per = x.len() / channels.max(1);
    x.data()
        .chunks(per.max(1))
        .map(|c| {
            let mods: Vec<B::R> = c.iter().map(|z| cabs(b, *z)).collect();
            let s = b.sum(&mods);
            b.scale(s, 1.0 / per as f64)
        })
        .collect()
}

/// Per-channel complex mean.
pub fn global_mean<B: Backend>(b: &mut B, x: &Feat<B::R>) -> Vec<Cx<B::R>> {
    let channels = channel_count(x);
    let per = x.len() / channels.max(1);
    x.data()
        .chunks(per.max(1))
        .map(|c| crate::autodiff::backend::cmean(b, c))
        .collect()
}

/// Fully connected layer `y = W x + b` on complex vectors, with complex or
/// real weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub n_in: usize,
    pub n_out: usize,
    pub real_weights: bool,
}

impl Linear {
    pub fn init(
        params: &mut ParamSet,
        name: &str,
        n_in: usize,
        n_out: usize,
        real_weights: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = n_in as f64;
        let (kind, w, bias_len) = if real_weights {
            (ParamKind::Real, gaussian(rng, (1.0 / fan_in).sqrt(), n_in * n_out), n_out)
        } else {
            (ParamKind::Complex, gaussian(rng, (0.5 / fan_in).sqrt(), 2 * n_in * n_out), 2 * n_out)
        };
        let weight = params.add(format!("{name}.weight"), vec![n_out, n_in], kind, ParamRole::Weight, w);
        let bias = params.add(format!("{name}.bias"), vec![n_out], kind, ParamRole::Bias, vec![0.0; bias_len]);
        Self {
            weight,
            bias,
            n_in,
            n_out,
            real_weights,
        }
    }

    pub fn forward<B: Backend>(&self, b: &mut B, x: &[Cx<B::R>]) -> Result<Vec<Cx<B::R>>, CvnnError> {
        if x.len() != self.n_in {
            return Err(CvnnError::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.n_in,
                x.len()
            )));
        }
        let zero = b.lit(0.0);
        (0..self.n_out)
            .map(|o| {
                if self.real_weights {
                    let pairs: Vec<_> = (0..self.n_in)
                        .map(|i| (b.param(self.weight, o * self.n_in + i), x[i]))
                        .collect();
                    let bias = Cx::new(b.param(self.bias, o), zero);
                    Ok(rdot(b, &pairs, Some(bias)))
                } else {
                    let pairs: Vec<_> = (0..self.n_in)
                        .map(|i| (cparam(b, self.weight, o * self.n_in + i), x[i]))
                        .collect();
                    let bias = cparam(b, self.bias, o);
                    Ok(cdot(b, &pairs, Some(bias)))
                }
            })
            .collect()
    }
}

/// Real class logits from complex ones: `|z|` per class.
pub fn modulus_logits<B: Backend>(b: &mut B, logits: &[Cx<B::R>]) -> Vec<B::R> {
    logits.iter().map(|z| cabs(b, *z)).collect()
}

/// Softmax cross-entropy of the modulus of complex logits.
pub fn classify_loss(logits: &[C64], label: usize) -> Result<f64, CvnnError> {
    let params = ParamSet::new();
    let mut b = Eval::new(&params);
    let zs: Vec<_> = logits.iter().map(|z| clit(&mut b, *z)).collect();
    let real = modulus_logits(&mut b, &zs);
    crate::autodiff::backend::cross_entropy(&mut b, &real, label)
        .map_err(|_| CvnnError::LabelOutOfRange { label, classes: logits.len() })
}

/// Separable circular `[1, 2, 1]·gain/4` smoothing on the trailing `dims` axes.
pub fn blur<B: Backend>(b: &mut B, x: &Feat<B::R>, dims: usize, gain: f64) -> Feat<B::R> {
    let first = x.rank() - dims;
    let shape = x.shape().to_vec();
    let strides = row_major_strides(&shape);
    let w = gain / 4.0;
    let mut cur = x.clone();
    for axis in first..x.rank() {
        let n = shape[axis];
        let st = strides[axis];
        let src = cur.data().to_vec();
        let mut idx = vec![0usize; shape.len()];
        let mut out = Vec::with_capacity(src.len());
        for flat in 0..src.len() {
            let i = idx[axis];
            let prev = flat - i * st + ((i + n - 1) % n) * st;
            let next = flat - i * st + ((i + 1) % n) * st;
            let (zp, zc, zn) = (src[prev], src[flat], src[next]);
            out.push(Cx::new(
                b.lincomb(&[(w, zp.re), (2.0 * w, zc.re), (w, zn.re)], 0.0),
                b.lincomb(&[(w, zp.im), (2.0 * w, zc.im), (w, zn.im)], 0.0),
            ));
            next_index(&mut idx, &shape);
        }
        cur = Tensor::new(shape.clone(), out).expect("same shape");
    }
    cur
}

/// Runs `f` on a fresh tape and returns `(value, gradient per parameter scalar)`.
pub fn value_and_grad<F>(params: &ParamSet, f: F) -> Result<(f64, Vec<f64>), CvnnError>
where
    F: FnOnce(&mut crate::autodiff::Record<'_>) -> Result<crate::autodiff::Var, CvnnError>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = {
        let mut rec = crate::autodiff::Record::new(&mut tape, &bound);
        f(&mut rec)?
    };
    let value = tape.value(loss);
    let grads = tape.backward(loss)?;
    let mut ps = params.clone();
    ps.zero_grad();
    ps.accumulate(&bound, &grads);
    Ok((value, ps.flat_grads()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctensor::{shift_spatial, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn vec1(xs: Vec<C64>) -> ComplexTensor {
        Tensor::new(vec![xs.len()], xs).unwrap()
    }

    #[test]
    fn modrelu_examples() {
        let out = modrelu(&vec1(vec![c(3.0, 4.0)]), &[-2.0]).unwrap();
        assert!((out.data()[0] - c(1.8, 2.4)).norm() < 1e-12);
        let out = modrelu(&vec1(vec![c(0.5, 0.0)]), &[-1.0]).unwrap();
        assert_eq!(out.data()[0], c(0.0, 0.0));
        let z = c(-0.3, 1.7);
        let out = modrelu(&vec1(vec![z]), &[0.0]).unwrap();
        assert!((out.data()[0] - z).norm() < 1e-15);
        let out = modrelu(&vec1(vec![c(0.0, 0.0)]), &[5.0]).unwrap();
        assert_eq!(out.data()[0], c(0.0, 0.0));
    }

    #[test]
    fn cmax_examples() {
        let g = cmax_pool(&vec1(vec![c(1.0, 0.0), c(0.0, 2.0)]), &[], PoolMode::Global).unwrap();
        assert_eq!(g.data(), &[c(0.0, 2.0)]);
        let g = cmax_pool(&vec1(vec![c(1.0, 0.0), c(0.0, 1.0)]), &[], PoolMode::Global).unwrap();
        assert_eq!(g.data(), &[c(1.0, 0.0)]);
        let f = vec1((0..6).map(|n| c(n as f64, 0.0)).collect());
        let s = cmax_pool(&f, &[2], PoolMode::Sliding).unwrap();
        let re: Vec<f64> = s.data().iter().map(|z| z.re).collect();
        assert_eq!(&re[..5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(cmax_pool(&f, &[0], PoolMode::Sliding).is_err());
    }

    fn single_conv(w: C64) -> (ParamSet, ConvLayer) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = ConvLayer::init(&mut ps, "c", 1, 1, vec![1], false, true, &mut rng);
        ps.get_mut(layer.weight).value = vec![w.re, w.im];
        (ps, layer)
    }

    #[test]
    fn conv_layer_examples() {
        let x = Tensor::new(vec![1, 3], vec![c(1.0, 0.0), c(2.0, -1.0), c(0.5, 0.5)]).unwrap();
        let (ps, layer) = single_conv(c(1.0, 0.0));
        assert_eq!(apply_conv(&ps, &layer, &x).unwrap(), x);
        let (ps, layer) = single_conv(c(0.0, 1.0));
        let one = Tensor::new(vec![1, 1], vec![c(1.0, 0.0)]).unwrap();
        assert_eq!(apply_conv(&ps, &layer, &one).unwrap().data(), &[c(0.0, 1.0)]);
        let bad = Tensor::new(vec![2, 3], vec![c(0.0, 0.0); 6]).unwrap();
        assert!(apply_conv(&ps, &layer, &bad).is_err());
    }

    #[test]
    fn conv_layer_matches_ctensor_centered_conv() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = ConvLayer::init(&mut ps, "c", 2, 3, vec![3, 3], false, false, &mut rng);
        let x = Tensor::from_fn(vec![2, 5, 4], |i| {
            c((i[0] * 7 + i[1] * 3 + i[2]) as f64 * 0.1, (i[1] as f64 - i[2] as f64) * 0.2)
        });
        let got = apply_conv(&ps, &layer, &x).unwrap();
        let w = ps.get(layer.weight);
        let kernel = Tensor::new(
            vec![3, 2, 3, 3],
            (0..w.elements()).map(|i| w.complex_at(i)).collect(),
        )
        .unwrap();
        let want = crate::ctensor::conv_circular_centered(&x, &kernel).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn conv_layer_is_shift_equivariant_bitwise() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = ConvLayer::init(&mut ps, "c", 2, 2, vec![3, 3], false, true, &mut rng);
        let x = Tensor::from_fn(vec![2, 6, 6], |i| c((i[1] * 6 + i[2]) as f64 * 0.37 % 1.0, i[0] as f64 * 0.5));
        let a = apply_conv(&ps, &layer, &shift_spatial(&x, &[2, 5]).unwrap()).unwrap();
        let b = shift_spatial(&apply_conv(&ps, &layer, &x).unwrap(), &[2, 5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classify_loss_examples() {
        let l = classify_loss(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 0).unwrap();
        let e = std::f64::consts::E;
        assert!((l + (e / (e + 2.0)).ln()).abs() < 1e-15);
        assert!((l - 0.551_444_713_932_051_5).abs() < 1e-12);
        let l = classify_loss(&[c(0.3, 0.4); 4], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!(matches!(
            classify_loss(&[c(1.0, 0.0)], 3),
            Err(CvnnError::LabelOutOfRange { .. })
        ));
        let params = ParamSet::new();
        let mut b = Eval::new(&params);
        let z = clit(&mut b, c(3.0, 4.0));
        assert_eq!(modulus_logits(&mut b, &[z]), vec![5.0]);
    }

    #[test]
    fn blur_matches_polyphase_lowpass() {
        let u = Tensor::from_fn(vec![2, 4, 6], |i| c(i[1] as f64 - i[2] as f64, (i[0] + i[2]) as f64));
        let params = ParamSet::new();
        let mut b = Eval::new(&params);
        let x = lift(&mut b, &u);
        let y = blur(&mut b, &x, 2, 2.0);
        let got = lower(&b, &y);
        let want = crate::polyphase::lowpass_after_pu(&u, 2, 2).unwrap();
        for (a, w) in got.data().iter().zip(want.data()) {
            assert!((a - w).norm() < 1e-12);
        }
    }
}
