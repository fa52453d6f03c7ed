//! Polyphase decomposition, polyphase down/upsampling and the strided
//! control they are measured against.
//!
//! All operators act on the trailing `dims` axes of a tensor (1 for
//! signals, 2 for images); leading axes such as channels are carried along.
//! With factor `p` there are `p^dims` components, numbered row-major over
//! the per-axis phases: in 2D, component `c = k_h · p + k_w`.

use thiserror::Error;

use crate::ctensor::{
    invariant_sum, max_modulus_sliding, norm_l2, ComplexTensor, Tensor, TensorError, C64,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyphaseError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("axis {axis} has odd-factor length {len} (factor {p})")]
    NotDivisible { axis: usize, len: usize, p: usize },
    #[error("factor must be at least 1")]
    InvalidFactor,
    #[error("tensor of rank {rank} has fewer than {dims} spatial axes")]
    TooFewAxes { rank: usize, dims: usize },
    #[error("phase {k} out of range for factor {p}")]
    InvalidPhase { k: usize, p: usize },
    #[error("target shape {target:?} is not {p}× the input {input:?}")]
    LengthMismatch {
        input: Vec<usize>,
        target: Vec<usize>,
        p: usize,
    },
    #[error("no selection recorded for this upsampling layer")]
    MissingSelection,
    #[error("selector returned {got} scores for {expected} components")]
    ScoreCount { expected: usize, got: usize },
}

/// Per-axis polyphase phase together with the factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolyphaseIndex {
    pub k: Vec<usize>,
    pub p: usize,
}

impl PolyphaseIndex {
    pub fn new(k: Vec<usize>, p: usize) -> Result<Self, PolyphaseError> {
        if p == 0 {
            return Err(PolyphaseError::InvalidFactor);
        }
        if let Some(&bad) = k.iter().find(|&&k| k >= p) {
            return Err(PolyphaseError::InvalidPhase { k: bad, p });
        }
        Ok(Self { k, p })
    }

    /// Number of components for `dims` axes.
    pub fn count(dims: usize, p: usize) -> usize {
        p.pow(dims as u32)
    }

    pub fn from_flat(flat: usize, dims: usize, p: usize) -> Self {
        let mut k = vec![0; dims];
        let mut rest = flat;
        for d in (0..dims).rev() {
            k[d] = rest % p;
            rest /= p;
        }
        Self { k, p }
    }

    pub fn flat(&self) -> usize {
        self.k.iter().fold(0, |acc, k| acc * self.p + k)
    }

    /// `π(k) = (k + 1) mod p` applied `amount` times per axis.
    pub fn permuted(&self, amounts: &[i64]) -> Self {
        let p = self.p as i64;
        Self {
            k: self
                .k
                .iter()
                .zip(amounts)
                .map(|(k, a)| (*k as i64 + a).rem_euclid(p) as usize)
                .collect(),
            p: self.p,
        }
    }
}

/// Outcome of one polyphase downsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyphaseSelection {
    pub k_star: PolyphaseIndex,
    /// Raw selector output per component.
    pub scores: Vec<f64>,
    /// Softmax of `scores`.
    pub probs: Vec<f64>,
    pub downsampled: ComplexTensor,
}

fn spatial_first<T>(t: &Tensor<T>, dims: usize) -> Result<usize, PolyphaseError> {
    if dims > t.rank() {
        return Err(PolyphaseError::TooFewAxes {
            rank: t.rank(),
            dims,
        });
    }
    Ok(t.rank() - dims)
}

fn check_divisible<T>(t: &Tensor<T>, dims: usize, p: usize) -> Result<usize, PolyphaseError> {
    if p == 0 {
        return Err(PolyphaseError::InvalidFactor);
    }
    let first = spatial_first(t, dims)?;
    for axis in first..t.rank() {
        let len = t.shape()[axis];
        if len % p != 0 {
            return Err(PolyphaseError::NotDivisible { axis, len, p });
        }
    }
    Ok(first)
}

/// `Poly_k(z)[n] = z[p·n + k]` on each trailing axis.
pub fn poly<T: Clone>(z: &Tensor<T>, k: &PolyphaseIndex) -> Result<Tensor<T>, PolyphaseError> {
    let first = check_divisible(z, k.k.len(), k.p)?;
    let mut out = z.clone();
    for (d, &phase) in k.k.iter().enumerate() {
        let axis = first + d;
        let len = out.shape()[axis] / k.p;
        out = out.subsample_axis(axis, k.p, phase, len)?;
    }
    Ok(out)
}

/// All `p^dims` components in flat order.
pub fn components<T: Clone>(
    z: &Tensor<T>,
    dims: usize,
    p: usize,
) -> Result<Vec<Tensor<T>>, PolyphaseError> {
    check_divisible(z, dims, p)?;
    (0..PolyphaseIndex::count(dims, p))
        .map(|c| poly(z, &PolyphaseIndex::from_flat(c, dims, p)))
        .collect()
}

/// Partial inverse: `y` placed at phase `k`, zeros at every other phase.
/// `target` lists the trailing-axis lengths of the result.
pub fn ipoly(
    y: &ComplexTensor,
    k: &PolyphaseIndex,
    target: &[usize],
) -> Result<ComplexTensor, PolyphaseError> {
    ipoly_with(y, k, target, C64::new(0.0, 0.0))
}

/// [`ipoly`] for any element type, with an explicit zero.
pub fn ipoly_with<T: Clone>(
    y: &Tensor<T>,
    k: &PolyphaseIndex,
    target: &[usize],
    zero: T,
) -> Result<Tensor<T>, PolyphaseError> {
    let dims = k.k.len();
    let first = spatial_first(y, dims)?;
    let input = y.shape()[first..].to_vec();
    if target.len() != dims || input.iter().zip(target).any(|(n, t)| n * k.p != *t) {
        return Err(PolyphaseError::LengthMismatch {
            input,
            target: target.to_vec(),
            p: k.p,
        });
    }
    let mut out = y.clone();
    for (d, &phase) in k.k.iter().enumerate() {
        out = out.interleave_axis(first + d, k.p, phase, zero.clone())?;
    }
    Ok(out)
}

/// `out[n] = z[p·n]` on each trailing axis, `⌊N/p⌋` samples.
pub fn downsample_p<T: Clone>(
    z: &Tensor<T>,
    p: usize,
    dims: usize,
) -> Result<Tensor<T>, PolyphaseError> {
    if p == 0 {
        return Err(PolyphaseError::InvalidFactor);
    }
    let first = spatial_first(z, dims)?;
    let mut out = z.clone();
    for axis in first..z.rank() {
        let len = out.shape()[axis] / p;
        out = out.subsample_axis(axis, p, 0, len)?;
    }
    Ok(out)
}

/// Softmax with the maximum subtracted first. Permuting the input permutes
/// the output bitwise.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s = invariant_sum(&e);
    e.into_iter().map(|v| v / s).collect()
}

/// Position of the largest value; the lowest index wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Polyphase downsampling with a per-component scoring function.
pub fn pd(
    z: &ComplexTensor,
    dims: usize,
    p: usize,
    mut selector: impl FnMut(&ComplexTensor) -> f64,
) -> Result<PolyphaseSelection, PolyphaseError> {
    let comps = components(z, dims, p)?;
    let scores: Vec<f64> = comps.iter().map(&mut selector).collect();
    pd_from_scores(comps, scores, dims, p)
}

/// Polyphase downsampling given precomputed component scores.
pub fn pd_from_scores(
    mut comps: Vec<ComplexTensor>,
    scores: Vec<f64>,
    dims: usize,
    p: usize,
) -> Result<PolyphaseSelection, PolyphaseError> {
    if scores.len() != comps.len() {
        return Err(PolyphaseError::ScoreCount {
            expected: comps.len(),
            got: scores.len(),
        });
    }
    let probs = softmax(&scores);
    let best = argmax(&probs);
    Ok(PolyphaseSelection {
        k_star: PolyphaseIndex::from_flat(best, dims, p),
        scores,
        probs,
        downsampled: comps.swap_remove(best),
    })
}

/// Adaptive polyphase sampling score: the ℓ2 norm of the component.
pub fn aps_score(component: &ComplexTensor) -> f64 {
    norm_l2(component)
}

pub fn pd_aps(
    z: &ComplexTensor,
    dims: usize,
    p: usize,
) -> Result<PolyphaseSelection, PolyphaseError> {
    pd(z, dims, p, aps_score)
}

/// Polyphase upsampling at the recorded phase.
pub fn pu(
    y: &ComplexTensor,
    k_star: &PolyphaseIndex,
    target: &[usize],
) -> Result<ComplexTensor, PolyphaseError> {
    ipoly(y, k_star, target)
}

/// Circular `[1, 2, 1]/4 · p` smoothing on each trailing axis.
pub fn lowpass_after_pu(
    u: &ComplexTensor,
    p: usize,
    dims: usize,
) -> Result<ComplexTensor, PolyphaseError> {
    let first = spatial_first(u, dims)?;
    let scale = p as f64 / 4.0;
    let mut cur = u.clone();
    for axis in first..u.rank() {
        let n = cur.shape()[axis];
        if n == 0 {
            continue;
        }
        let minus = shift_axis(&cur, axis, -1)?;
        let plus = shift_axis(&cur, axis, 1)?;
        let data = cur
            .data()
            .iter()
            .zip(minus.data())
            .zip(plus.data())
            .map(|((c, m), p)| (m + c * 2.0 + p) * scale)
            .collect();
        cur = ComplexTensor::new(cur.shape().to_vec(), data)?;
    }
    Ok(cur)
}

fn shift_axis(t: &ComplexTensor, axis: usize, amount: i64) -> Result<ComplexTensor, TensorError> {
    crate::ctensor::circular_shift(t, crate::ctensor::ShiftSpec::new(axis, amount))
}

/// The non-equivariant control: stride-1 circular max-modulus pooling with
/// a window of `p` per axis, then fixed-phase downsampling by `p`.
pub fn strided_baseline(
    z: &ComplexTensor,
    p: usize,
    dims: usize,
) -> Result<ComplexTensor, PolyphaseError> {
    if p == 0 {
        return Err(PolyphaseError::InvalidFactor);
    }
    spatial_first(z, dims)?;
    let pooled = max_modulus_sliding(z, &vec![p; dims])?;
    downsample_p(&pooled, p, dims)
}

/// Selections made by downsampling layers during one forward pass, popped
/// by the matching upsampling layers in reverse order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectionStack {
    entries: Vec<(PolyphaseIndex, Vec<usize>)>,
}

impl SelectionStack {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the phase chosen for an input whose trailing extent was `spatial`.
    pub fn push(&mut self, k_star: PolyphaseIndex, spatial: Vec<usize>) {
        self.entries.push((k_star, spatial));
    }

    pub fn pop(&mut self) -> Result<(PolyphaseIndex, Vec<usize>), PolyphaseError> {
        self.entries.pop().ok_or(PolyphaseError::MissingSelection)
    }

    pub fn depth(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = &PolyphaseIndex> {
        self.entries.iter().map(|(k, _)| k)
    }
}

/// The shift of `pd(z)` that reproduces `pd(shift(z))`: after shifting by
/// `a` on an axis where `z` selected phase `k`, the shifted input selects
/// `(k − a) mod p` and its output is `pd(z)` shifted by `(k̂ + a − k)/p`.
pub fn expected_pd_shift(k_star: &PolyphaseIndex, amounts: &[i64]) -> Vec<i64> {
    let p = k_star.p as i64;
    k_star
        .k
        .iter()
        .zip(amounts)
        .map(|(&k, &a)| {
            let k = k as i64;
            let k_hat = (k - a).rem_euclid(p);
            (k_hat + a - k).div_euclid(p)
        })
        .collect()
}

/// Scores of `shift(z)` predicted from the scores of `z` for a
/// shift-invariant selector: component `j` of the shifted input is
/// component `π^a(j)` of the original, up to a shift.
pub fn permute_scores(scores: &[f64], dims: usize, p: usize, amounts: &[i64]) -> Vec<f64> {
    (0..scores.len())
        .map(|j| {
            let src = PolyphaseIndex::from_flat(j, dims, p).permuted(amounts);
            scores[src.flat()]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctensor::shift_spatial;

    fn real(xs: &[f64]) -> ComplexTensor {
        Tensor::new(
            vec![xs.len()],
            xs.iter().map(|x| C64::new(*x, 0.0)).collect(),
        )
        .unwrap()
    }

    fn re(t: &ComplexTensor) -> Vec<f64> {
        t.data().iter().map(|z| z.re).collect()
    }

    fn k1(k: usize) -> PolyphaseIndex {
        PolyphaseIndex::new(vec![k], 2).unwrap()
    }

    #[test]
    fn poly_components() {
        let z = real(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(re(&poly(&z, &k1(0)).unwrap()), vec![1.0, 3.0]);
        assert_eq!(re(&poly(&z, &k1(1)).unwrap()), vec![2.0, 4.0]);
        assert!(matches!(
            poly(&real(&[1.0, 2.0, 3.0]), &k1(0)),
            Err(PolyphaseError::NotDivisible { len: 3, .. })
        ));
    }

    #[test]
    fn ipoly_interleaves_zeros() {
        let y = real(&[1.0, 2.0]);
        assert_eq!(
            re(&ipoly(&y, &k1(0), &[4]).unwrap()),
            vec![1.0, 0.0, 2.0, 0.0]
        );
        assert_eq!(
            re(&ipoly(&y, &k1(1), &[4]).unwrap()),
            vec![0.0, 1.0, 0.0, 2.0]
        );
        assert!(matches!(
            ipoly(&y, &k1(0), &[5]),
            Err(PolyphaseError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn downsample_examples() {
        let z = real(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(re(&downsample_p(&z, 2, 1).unwrap()), vec![1.0, 3.0, 5.0]);
        assert_eq!(downsample_p(&z, 1, 1).unwrap(), z);
        assert_eq!(
            re(&downsample_p(&real(&[1.0, 2.0, 3.0]), 2, 1).unwrap()),
            vec![1.0]
        );
        assert_eq!(downsample_p(&z, 0, 1), Err(PolyphaseError::InvalidFactor));
    }

    #[test]
    fn aps_example() {
        let sel = pd_aps(&real(&[1.0, 5.0, 2.0, 6.0]), 1, 2).unwrap();
        assert_eq!(sel.k_star, k1(1));
        assert_eq!(re(&sel.downsampled), vec![5.0, 6.0]);
        assert!((sel.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_ties_to_zero() {
        let sel = pd_aps(&real(&[2.0; 8]), 1, 2).unwrap();
        assert_eq!(sel.k_star, k1(0));
    }

    #[test]
    fn pu_of_selection() {
        let sel = PolyphaseSelection {
            k_star: k1(0),
            scores: vec![1.0, 0.0],
            probs: softmax(&[1.0, 0.0]),
            downsampled: real(&[1.0, 2.0]),
        };
        assert_eq!(
            re(&pu(&sel.downsampled, &sel.k_star, &[4]).unwrap()),
            vec![1.0, 0.0, 2.0, 0.0]
        );
        let mut st = SelectionStack::new();
        assert_eq!(st.pop(), Err(PolyphaseError::MissingSelection));
        st.push(k1(1), vec![4]);
        assert_eq!(st.pop().unwrap(), (k1(1), vec![4]));
    }

    #[test]
    fn aps_pipeline_zeros_at_other_phase() {
        let z = real(&[1.0, 5.0, 2.0, 6.0]);
        let sel = pd_aps(&z, 1, 2).unwrap();
        let u = pu(&sel.downsampled, &sel.k_star, &[4]).unwrap();
        assert_eq!(re(&u), vec![0.0, 5.0, 0.0, 6.0]);
    }

    #[test]
    fn lowpass_oracle() {
        let (a, b) = (3.0, -1.0);
        let u = real(&[a, 0.0, b, 0.0]);
        let f = re(&lowpass_after_pu(&u, 2, 1).unwrap());
        assert_eq!(f, vec![a, 0.5 * a + 0.5 * b, b, 0.5 * b + 0.5 * a]);
        // DC gain p
        let c = re(&lowpass_after_pu(&real(&[1.0; 6]), 2, 1).unwrap());
        assert!(c.iter().all(|v| (*v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn lowpass_2d_is_separable() {
        let mut data = vec![C64::new(0.0, 0.0); 16];
        data[5] = C64::new(1.0, 0.0);
        let u = Tensor::new(vec![4, 4], data).unwrap();
        let f = lowpass_after_pu(&u, 2, 2).unwrap();
        let w = [0.5, 1.0, 0.5];
        for i in 0..4 {
            for j in 0..4 {
                let di = (i as i64 - 1).unsigned_abs() as usize;
                let dj = (j as i64 - 1).unsigned_abs() as usize;
                let want = if di <= 1 && dj <= 1 {
                    w[1 + di] * w[1 + dj]
                } else {
                    0.0
                };
                assert_eq!(f.get(&[i, j]).re, want, "({i},{j})");
            }
        }
    }

    #[test]
    fn strided_baseline_counterexample() {
        let f: Vec<f64> = (0..16).map(|n| n as f64).collect();
        let s = re(&strided_baseline(&real(&f), 2, 1).unwrap());
        let shifted = shift_spatial(&real(&f), &[1]).unwrap();
        let s2 = re(&strided_baseline(&shifted, 2, 1).unwrap());
        assert_eq!(&s[..3], &[1.0, 3.0, 5.0]);
        assert_eq!(&s2[..3], &[2.0, 4.0, 6.0]);
        assert_ne!(s2[0], s[1]);
    }

    #[test]
    fn index_roundtrip_and_permutation() {
        for c in 0..4 {
            assert_eq!(PolyphaseIndex::from_flat(c, 2, 2).flat(), c);
        }
        let k = PolyphaseIndex::new(vec![1, 0], 2).unwrap();
        assert_eq!(k.permuted(&[1, 1]).k, vec![0, 1]);
        assert!(PolyphaseIndex::new(vec![2], 2).is_err());
        assert_eq!(PolyphaseIndex::count(2, 2), 4);
    }
}
