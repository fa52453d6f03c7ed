//! Dense row-major tensors with circular shifts, circular
//! cross-correlation and pooling reductions.
//!
//! [`Tensor`] is generic over its element so that pure re-indexing
//! operations (shifts, polyphase components, subsampling, zero insertion)
//! are shared between numeric complex samples and autodiff handles.
//! Arithmetic lives on [`ComplexTensor`].
//!
//! Indexing is 0-based everywhere and every boundary is circular.

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type ComplexTensor = Tensor<C64>;
pub type RealTensor = Tensor<f64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} samples but {found} were given")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("kernel is empty")]
    EmptyKernel,
    #[error("stride must be at least 1")]
    InvalidStride,
    #[error("kernel extent {kernel:?} exceeds input extent {input:?}")]
    KernelTooLarge {
        kernel: Vec<usize>,
        input: Vec<usize>,
    },
    #[error("kernel expects {expected} input channels, input has {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("kernel rank {kernel} incompatible with input rank {input}")]
    RankMismatch { kernel: usize, input: usize },
    #[error("axis {axis} has length {len}, not divisible by {factor}")]
    NotDivisible {
        axis: usize,
        len: usize,
        factor: usize,
    },
    #[error("factor must be at least 1")]
    InvalidFactor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Advances a row-major multi-index; returns `false` once it wraps around.
pub fn next_index(idx: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..shape.len()).rev() {
        idx[axis] += 1;
        if idx[axis] < shape[axis] {
            return true;
        }
        idx[axis] = 0;
    }
    false
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }
    strides
}

impl<T> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::DataLength {
                shape,
                expected,
                found: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        if len > 0 {
            let mut idx = vec![0; shape.len()];
            loop {
                data.push(f(&idx));
                if !next_index(&mut idx, &shape) {
                    break;
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> &T {
        &self.data[self.offset(idx)]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Tensor::new(shape, self.data)
    }

    fn check_axis(&self, axis: usize) -> Result<(), TensorError> {
        if axis >= self.rank() {
            Err(TensorError::AxisOutOfRange {
                axis,
                rank: self.rank(),
            })
        } else {
            Ok(())
        }
    }

    /// Splits the layout around `axis` into (outer, axis length, inner).
    fn axis_blocks(&self, axis: usize) -> (usize, usize, usize) {
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        (outer, self.shape[axis], inner)
    }
}

impl<T: Clone> Tensor<T> {
    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    /// Keeps samples `phase, phase + factor, ...` along `axis`, `out_len` of them.
    pub fn subsample_axis(
        &self,
        axis: usize,
        factor: usize,
        phase: usize,
        out_len: usize,
    ) -> Result<Self, TensorError> {
        self.check_axis(axis)?;
        if factor == 0 {
            return Err(TensorError::InvalidFactor);
        }
        let (outer, len, inner) = self.axis_blocks(axis);
        debug_assert!(out_len == 0 || phase + factor * (out_len - 1) < len);
        let mut data = Vec::with_capacity(outer * out_len * inner);
        for o in 0..outer {
            for n in 0..out_len {
                let base = (o * len + phase + factor * n) * inner;
                data.extend_from_slice(&self.data[base..base + inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = out_len;
        Ok(Self { shape, data })
    }

    /// Inverse of [`Tensor::subsample_axis`] for divisible lengths: places
    /// sample `n` at `factor * n + phase`, `fill` elsewhere.
    pub fn interleave_axis(
        &self,
        axis: usize,
        factor: usize,
        phase: usize,
        fill: T,
    ) -> Result<Self, TensorError> {
        self.check_axis(axis)?;
        if factor == 0 {
            return Err(TensorError::InvalidFactor);
        }
        let (outer, len, inner) = self.axis_blocks(axis);
        let out_len = len * factor;
        let mut data = vec![fill; outer * out_len * inner];
        for o in 0..outer {
            for n in 0..len {
                let src = (o * len + n) * inner;
                let dst = (o * out_len + factor * n + phase) * inner;
                data[dst..dst + inner].clone_from_slice(&self.data[src..src + inner]);
            }
        }
        let mut shape = self.shape.clone();
        shape[axis] = out_len;
        Ok(Self { shape, data })
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor<T>]) -> Result<Self, TensorError> {
        let Some(first) = parts.first() else {
            return Ok(Self {
                shape: vec![0],
                data: Vec::new(),
            });
        };
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            if p.shape != first.shape {
                return Err(TensorError::ShapeMismatch {
                    left: first.shape.clone(),
                    right: p.shape.clone(),
                });
            }
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// Slice `i` along the leading axis.
    pub fn index_axis0(&self, i: usize) -> Self {
        let inner: usize = self.shape[1..].iter().product();
        Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }
}

/// A circular shift along one axis: `out[n] = t[(n + amount) mod N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftSpec {
    pub axis: usize,
    pub amount: i64,
}

impl ShiftSpec {
    pub fn new(axis: usize, amount: i64) -> Self {
        Self { axis, amount }
    }

    /// Amount reduced into `0..len`.
    pub fn reduced(&self, len: usize) -> usize {
        if len == 0 {
            0
        } else {
            self.amount.rem_euclid(len as i64) as usize
        }
    }
}

pub fn circular_shift<T: Clone>(t: &Tensor<T>, s: ShiftSpec) -> Result<Tensor<T>, TensorError> {
    t.check_axis(s.axis)?;
    let (outer, len, inner) = t.axis_blocks(s.axis);
    let amount = s.reduced(len);
    if amount == 0 {
        return Ok(t.clone());
    }
    let mut data = Vec::with_capacity(t.len());
    for o in 0..outer {
        for n in 0..len {
            let src = (o * len + (n + amount) % len) * inner;
            data.extend_from_slice(&t.data[src..src + inner]);
        }
    }
    Ok(Tensor {
        shape: t.shape.clone(),
        data,
    })
}

/// Applies one circular shift per listed axis.
pub fn circular_shift_nd<T: Clone>(
    t: &Tensor<T>,
    shifts: &[ShiftSpec],
) -> Result<Tensor<T>, TensorError> {
    let mut out = t.clone();
    for s in shifts {
        out = circular_shift(&out, *s)?;
    }
    Ok(out)
}

/// Shifts the trailing `amounts.len()` axes by the given amounts.
pub fn shift_spatial<T: Clone>(t: &Tensor<T>, amounts: &[i64]) -> Result<Tensor<T>, TensorError> {
    if amounts.len() > t.rank() {
        return Err(TensorError::AxisOutOfRange {
            axis: amounts.len(),
            rank: t.rank(),
        });
    }
    let first = t.rank() - amounts.len();
    let specs: Vec<ShiftSpec> = amounts
        .iter()
        .enumerate()
        .map(|(i, a)| ShiftSpec::new(first + i, *a))
        .collect();
    circular_shift_nd(t, &specs)
}

fn check_same_shape<T, U>(a: &Tensor<T>, b: &Tensor<U>) -> Result<(), TensorError> {
    if a.shape != b.shape {
        return Err(TensorError::ShapeMismatch {
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(())
}

pub fn hadamard(a: &ComplexTensor, b: &ComplexTensor) -> Result<ComplexTensor, TensorError> {
    check_same_shape(a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

pub fn add(a: &ComplexTensor, b: &ComplexTensor) -> Result<ComplexTensor, TensorError> {
    check_same_shape(a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

pub fn sub(a: &ComplexTensor, b: &ComplexTensor) -> Result<ComplexTensor, TensorError> {
    check_same_shape(a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    })
}

pub fn scale(a: &ComplexTensor, c: C64) -> ComplexTensor {
    a.map(|x| x * c)
}

/// Where each output sample of a kernel window starts relative to the
/// output position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Anchor {
    Start,
    Center,
}

/// Circular cross-correlation, `out[n] = Σ_k w[k] · x[(n + k) mod N]`, with
/// stride `s` realised as the stride-1 result followed by keeping every
/// `s`-th sample from index 0.
///
/// Shapes: either `x` and `kernel` share a rank (single channel), or
/// `x = [C_in, S..]` and `kernel = [C_out, C_in, K..]`.
pub fn conv_circular(
    x: &ComplexTensor,
    kernel: &ComplexTensor,
    stride: usize,
) -> Result<ComplexTensor, TensorError> {
    conv_impl(x, kernel, stride, Anchor::Start)
}

/// Stride-1 circular cross-correlation with the kernel centred on the
/// output sample: tap `k` reads `x[(n + k - K/2) mod N]`.
pub fn conv_circular_centered(
    x: &ComplexTensor,
    kernel: &ComplexTensor,
) -> Result<ComplexTensor, TensorError> {
    conv_impl(x, kernel, 1, Anchor::Center)
}

fn conv_impl(
    x: &ComplexTensor,
    kernel: &ComplexTensor,
    stride: usize,
    anchor: Anchor,
) -> Result<ComplexTensor, TensorError> {
    if stride == 0 {
        return Err(TensorError::InvalidStride);
    }
    if kernel.is_empty() {
        return Err(TensorError::EmptyKernel);
    }
    if x.rank() == kernel.rank() {
        let mut xs = vec![1];
        xs.extend_from_slice(x.shape());
        let mut ks = vec![1, 1];
        ks.extend_from_slice(kernel.shape());
        let x1 = x.clone().reshape(xs)?;
        let k1 = kernel.clone().reshape(ks)?;
        let out = conv_impl(&x1, &k1, stride, anchor)?;
        let shape = out.shape()[1..].to_vec();
        return out.reshape(shape);
    }
    if kernel.rank() != x.rank() + 1 || x.rank() < 2 {
        return Err(TensorError::RankMismatch {
            kernel: kernel.rank(),
            input: x.rank(),
        });
    }
    let c_in = x.shape()[0];
    let c_out = kernel.shape()[0];
    if kernel.shape()[1] != c_in {
        return Err(TensorError::ChannelMismatch {
            expected: kernel.shape()[1],
            found: c_in,
        });
    }
    let spatial = &x.shape()[1..];
    let ksize = &kernel.shape()[2..];
    if ksize.iter().zip(spatial).any(|(k, n)| k > n) {
        return Err(TensorError::KernelTooLarge {
            kernel: ksize.to_vec(),
            input: spatial.to_vec(),
        });
    }
    let offsets: Vec<usize> = ksize
        .iter()
        .map(|k| match anchor {
            Anchor::Start => 0,
            Anchor::Center => k / 2,
        })
        .collect();
    let sp_len: usize = spatial.iter().product();
    let k_len: usize = ksize.iter().product();
    let taps = tap_table(spatial, ksize, &offsets);

    let mut out = vec![C64::new(0.0, 0.0); c_out * sp_len];
    for co in 0..c_out {
        for (pos, slot) in out[co * sp_len..(co + 1) * sp_len].iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for ci in 0..c_in {
                let wbase = (co * c_in + ci) * k_len;
                let xbase = ci * sp_len;
                for t in 0..k_len {
                    acc += kernel.data[wbase + t] * x.data[xbase + taps[pos * k_len + t]];
                }
            }
            *slot = acc;
        }
    }
    let mut shape = vec![c_out];
    shape.extend_from_slice(spatial);
    let mut result = Tensor { shape, data: out };
    if stride > 1 {
        for axis in 1..result.rank() {
            let len = result.shape[axis];
            result = result.subsample_axis(axis, stride, 0, len / stride)?;
        }
    }
    Ok(result)
}

/// For every spatial position and every kernel tap, the flat spatial index
/// read by that tap under circular boundary handling.
pub fn tap_table(spatial: &[usize], ksize: &[usize], offsets: &[usize]) -> Vec<usize> {
    let sp_len: usize = spatial.iter().product();
    let k_len: usize = ksize.iter().product();
    let sp_strides = row_major_strides(spatial);
    let mut table = Vec::with_capacity(sp_len * k_len);
    let mut pos = vec![0usize; spatial.len()];
    for _ in 0..sp_len {
        let mut tap = vec![0usize; ksize.len()];
        for _ in 0..k_len {
            let mut flat = 0;
            for d in 0..spatial.len() {
                let n = spatial[d];
                let i = (pos[d] + tap[d] + n - offsets[d] % n) % n;
                flat += i * sp_strides[d];
            }
            table.push(flat);
            next_index(&mut tap, ksize);
        }
        next_index(&mut pos, spatial);
    }
    table
}

/// Sum in a fixed balanced-tree order.
pub fn pairwise_sum<T>(xs: &[T]) -> T
where
    T: Copy + std::ops::Add<Output = T> + Default,
{
    match xs.len() {
        0 => T::default(),
        1 => xs[0],
        n if n <= 8 => xs[1..].iter().fold(xs[0], |a, b| a + *b),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Sum that does not depend on the order of `xs`: the terms are sorted
/// before a pairwise reduction, so any permutation of the input (such as a
/// circular shift) gives a bitwise-identical result.
pub fn invariant_sum(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    pairwise_sum(&sorted)
}

/// [`invariant_sum`] applied to real and imaginary parts separately.
pub fn invariant_sum_complex(xs: &[C64]) -> C64 {
    let re: Vec<f64> = xs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = xs.iter().map(|z| z.im).collect();
    C64::new(invariant_sum(&re), invariant_sum(&im))
}

pub fn modulus(t: &ComplexTensor) -> RealTensor {
    t.map(|z| z.norm())
}

pub fn arg(t: &ComplexTensor) -> RealTensor {
    t.map(|z| z.im.atan2(z.re))
}

pub fn norm_l2(t: &ComplexTensor) -> f64 {
    let sq: Vec<f64> = t.data.iter().map(|z| z.norm_sqr()).collect();
    invariant_sum(&sq).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Mean,
    Sum,
}

/// Global reduction over every spatial position, one complex scalar per
/// channel. Rank-1 inputs are a single channel; otherwise axis 0 is the
/// channel axis. The result is bitwise invariant to circular shifts.
pub fn global_pool(t: &ComplexTensor, kind: PoolKind) -> Vec<C64> {
    let channels = if t.rank() <= 1 { 1 } else { t.shape[0] };
    if channels == 0 {
        return Vec::new();
    }
    let per = t.len() / channels;
    (0..channels)
        .map(|c| {
            let s = invariant_sum_complex(&t.data[c * per..(c + 1) * per]);
            match kind {
                PoolKind::Sum => s,
                PoolKind::Mean => {
                    if per == 0 {
                        s
                    } else {
                        s / per as f64
                    }
                }
            }
        })
        .collect()
}

/// Sliding maximum-modulus selection over the trailing `window.len()` axes.
/// The window starting at each position wraps around circularly, so the
/// output keeps the input shape. Ties go to the first tap in row-major
/// window order.
pub fn max_modulus_sliding(
    t: &ComplexTensor,
    window: &[usize],
) -> Result<ComplexTensor, TensorError> {
    if window.is_empty() || window.iter().any(|w| *w == 0) {
        return Err(TensorError::EmptyKernel);
    }
    if window.len() > t.rank() {
        return Err(TensorError::RankMismatch {
            kernel: window.len(),
            input: t.rank(),
        });
    }
    let first = t.rank() - window.len();
    let spatial = &t.shape[first..];
    if window.iter().zip(spatial).any(|(w, n)| w > n) {
        return Err(TensorError::KernelTooLarge {
            kernel: window.to_vec(),
            input: spatial.to_vec(),
        });
    }
    let sp_len: usize = spatial.iter().product();
    let w_len: usize = window.iter().product();
    let taps = tap_table(spatial, window, &vec![0; window.len()]);
    let mut data = Vec::with_capacity(t.len());
    for block in t.data.chunks(sp_len.max(1)) {
        for pos in 0..sp_len {
            let cands: Vec<C64> = taps[pos * w_len..(pos + 1) * w_len]
                .iter()
                .map(|i| block[*i])
                .collect();
            let best = argmax_modulus(&cands).expect("non-empty window");
            data.push(cands[best]);
        }
    }
    Tensor::new(t.shape.clone(), data)
}

/// Index of the sample with the largest modulus; the lowest index wins ties.
pub fn argmax_modulus(xs: &[C64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, z) in xs.iter().enumerate() {
        let m = z.norm_sqr();
        match best {
            Some((_, bm)) if m <= bm => {}
            _ => best = Some((i, m)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_sum_ignores_order() {
        let xs = [1e16, 1.0, -1e16, 3.5, 1e-3];
        let mut ys = xs;
        ys.reverse();
        assert_eq!(invariant_sum(&xs).to_bits(), invariant_sum(&ys).to_bits());
    }

    #[test]
    fn sliding_max_modulus() {
        let x = Tensor::new(vec![4], (0..4).map(|n| C64::new(n as f64, 0.0)).collect()).unwrap();
        let g = max_modulus_sliding(&x, &[2]).unwrap();
        let re: Vec<f64> = g.data().iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 2.0, 3.0, 3.0]);
        let tie = Tensor::new(vec![2], vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]).unwrap();
        assert_eq!(
            max_modulus_sliding(&tie, &[2]).unwrap().data()[0],
            C64::new(1.0, 0.0)
        );
        assert!(max_modulus_sliding(&x, &[5]).is_err());
        assert!(max_modulus_sliding(&x, &[]).is_err());
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn real1(xs: &[f64]) -> ComplexTensor {
        Tensor::new(vec![xs.len()], xs.iter().map(|&x| c(x, 0.0)).collect()).unwrap()
    }

    #[test]
    fn shift_by_one_rotates_left() {
        let t = real1(&[1.0, 2.0, 3.0, 4.0]);
        let s = circular_shift(&t, ShiftSpec::new(0, 1)).unwrap();
        assert_eq!(s, real1(&[2.0, 3.0, 4.0, 1.0]));
    }

    #[test]
    fn shift_by_axis_length_is_identity() {
        let t = real1(&[1.0, -2.0, 3.5]);
        assert_eq!(circular_shift(&t, ShiftSpec::new(0, 3)).unwrap(), t);
        assert_eq!(circular_shift(&t, ShiftSpec::new(0, -3)).unwrap(), t);
    }

    #[test]
    fn shift_rows_of_grid() {
        let t = Tensor::new(vec![2, 2], vec!['a', 'b', 'c', 'd']).unwrap();
        let s = circular_shift(&t, ShiftSpec::new(0, 1)).unwrap();
        assert_eq!(s.data(), &['c', 'd', 'a', 'b']);
    }

    #[test]
    fn shift_rejects_bad_axis() {
        let t = real1(&[1.0]);
        assert!(matches!(
            circular_shift(&t, ShiftSpec::new(1, 1)),
            Err(TensorError::AxisOutOfRange { axis: 1, rank: 1 })
        ));
    }

    #[test]
    fn hadamard_examples() {
        let a = Tensor::new(vec![1], vec![c(1.0, 1.0)]).unwrap();
        let b = Tensor::new(vec![1], vec![c(1.0, -1.0)]).unwrap();
        assert_eq!(hadamard(&a, &b).unwrap().data(), &[c(2.0, 0.0)]);
        let a = Tensor::new(vec![1], vec![c(0.0, 2.0)]).unwrap();
        let b = Tensor::new(vec![1], vec![c(0.0, 3.0)]).unwrap();
        assert_eq!(hadamard(&a, &b).unwrap().data(), &[c(-6.0, 0.0)]);
        let ones = Tensor::filled(vec![1], c(1.0, 0.0));
        assert_eq!(hadamard(&a, &ones).unwrap(), a);
        assert!(hadamard(&a, &real1(&[1.0, 2.0])).is_err());
    }

    /// Straight loop over the definition, independent of the tap table.
    fn brute_conv_1d(x: &[C64], k: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut s = c(0.0, 0.0);
                for (j, w) in k.iter().enumerate() {
                    s += w * x[(i + j) % n];
                }
                s
            })
            .collect()
    }

    #[test]
    fn conv_matches_wraparound_sum() {
        let x = real1(&[1.0, 2.0, 3.0, 4.0]);
        let k = real1(&[1.0, 1.0]);
        let out = conv_circular(&x, &k, 1).unwrap();
        let oracle = brute_conv_1d(x.data(), k.data());
        assert_eq!(out.data(), oracle.as_slice());
        assert_eq!(out, real1(&[3.0, 5.0, 7.0, 5.0]));
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::new(vec![3], vec![c(1.0, 2.0), c(-1.0, 0.5), c(0.0, 3.0)]).unwrap();
        let k = real1(&[1.0]);
        assert_eq!(conv_circular(&x, &k, 1).unwrap(), x);
    }

    #[test]
    fn conv_stride_is_stride_one_then_subsample() {
        let x = real1(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = real1(&[1.0, -1.0, 2.0]);
        let full = conv_circular(&x, &k, 1).unwrap();
        let strided = conv_circular(&x, &k, 2).unwrap();
        assert_eq!(
            strided.data(),
            &[full.data()[0], full.data()[2], full.data()[4]]
        );
        let s3 = conv_circular(&x, &k, 4).unwrap();
        assert_eq!(s3.shape(), &[1]);
    }

    #[test]
    fn conv_errors() {
        let x = real1(&[1.0, 2.0]);
        assert_eq!(
            conv_circular(&x, &real1(&[]), 1),
            Err(TensorError::EmptyKernel)
        );
        assert_eq!(
            conv_circular(&x, &real1(&[1.0]), 0),
            Err(TensorError::InvalidStride)
        );
        assert!(matches!(
            conv_circular(&x, &real1(&[1.0, 1.0, 1.0]), 1),
            Err(TensorError::KernelTooLarge { .. })
        ));
        let x2 = Tensor::filled(vec![2, 4], c(1.0, 0.0));
        let k2 = Tensor::filled(vec![1, 3, 2], c(1.0, 0.0));
        assert!(matches!(
            conv_circular(&x2, &k2, 1),
            Err(TensorError::ChannelMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn conv_2d_multichannel_matches_loop() {
        let x = Tensor::from_fn(vec![2, 4, 5], |i| {
            c(
                (i[0] * 20 + i[1] * 5 + i[2]) as f64 * 0.1,
                i[2] as f64 - i[1] as f64,
            )
        });
        let k = Tensor::from_fn(vec![3, 2, 3, 2], |i| {
            c(
                i[0] as f64 - 0.5 * i[1] as f64,
                (i[2] * 2 + i[3]) as f64 * 0.25,
            )
        });
        let out = conv_circular_centered(&x, &k).unwrap();
        for co in 0..3 {
            for r in 0..4 {
                for q in 0..5 {
                    let mut s = c(0.0, 0.0);
                    for ci in 0..2 {
                        for a in 0..3 {
                            for b in 0..2 {
                                let rr = (r + a + 4 - 1) % 4;
                                let qq = (q + b + 5 - 1) % 5;
                                s += k.get(&[co, ci, a, b]) * x.get(&[ci, rr, qq]);
                            }
                        }
                    }
                    let got = out.get(&[co, r, q]);
                    assert!((got - s).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn reductions() {
        assert_eq!(
            modulus(&Tensor::new(vec![1], vec![c(3.0, 4.0)]).unwrap()).data(),
            &[5.0]
        );
        assert_eq!(
            norm_l2(&Tensor::new(vec![2], vec![c(3.0, 4.0), c(0.0, 0.0)]).unwrap()),
            5.0
        );
        let a = arg(&Tensor::new(vec![1], vec![c(0.0, 1.0)]).unwrap());
        assert!((a.data()[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let t = Tensor::new(
            vec![2, 2],
            vec![c(1.0, 0.0), c(3.0, 0.0), c(0.0, 2.0), c(0.0, 4.0)],
        )
        .unwrap();
        assert_eq!(
            global_pool(&t, PoolKind::Sum),
            vec![c(4.0, 0.0), c(0.0, 6.0)]
        );
        assert_eq!(
            global_pool(&t, PoolKind::Mean),
            vec![c(2.0, 0.0), c(0.0, 3.0)]
        );
    }

    #[test]
    fn argmax_modulus_lowest_index_on_tie() {
        assert_eq!(argmax_modulus(&[c(1.0, 0.0), c(0.0, 1.0)]), Some(0));
        assert_eq!(argmax_modulus(&[c(1.0, 0.0), c(0.0, 2.0)]), Some(1));
        assert_eq!(argmax_modulus(&[]), None);
    }

    #[test]
    fn interleave_inverts_subsample() {
        let t = real1(&[1.0, 2.0]);
        let up = t.interleave_axis(0, 2, 1, c(0.0, 0.0)).unwrap();
        assert_eq!(up, real1(&[0.0, 1.0, 0.0, 2.0]));
        assert_eq!(up.subsample_axis(0, 2, 1, 2).unwrap(), t);
    }
}
