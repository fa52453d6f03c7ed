//! Polarimetric decompositions: Pauli, Krogager and Cameron (coherent),
//! boxcar coherency estimation and entropy/α with H–α zones.
//!
//! Image fields are `[3, H, W]` complex tensors holding `(HH, HV, VV)` under
//! monostatic reciprocity, or the three Pauli components.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctensor::{ComplexTensor, Tensor, TensorError, C64};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolsarError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("coherency matrix has zero trace")]
    ZeroTrace,
    #[error("window {0} must be odd and positive")]
    InvalidWindow(usize),
    #[error("window {window} larger than image {height}×{width}")]
    WindowTooLarge {
        window: usize,
        height: usize,
        width: usize,
    },
    #[error("expected a [3, H, W] field, got {0:?}")]
    FieldShape(Vec<usize>),
}

fn j() -> C64 {
    C64::new(0.0, 1.0)
}

/// Sinclair scattering matrix of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinclairPixel {
    pub hh: C64,
    pub hv: C64,
    pub vh: C64,
    pub vv: C64,
}

impl SinclairPixel {
    pub fn new(hh: C64, hv: C64, vh: C64, vv: C64) -> Self {
        Self { hh, hv, vh, vv }
    }

    pub fn reciprocal(hh: C64, hv: C64, vv: C64) -> Self {
        Self::new(hh, hv, hv, vv)
    }

    pub fn diag(hh: C64, vv: C64) -> Self {
        Self::reciprocal(hh, C64::new(0.0, 0.0), vv)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::new(self.hh * c, self.hv * c, self.vh * c, self.vv * c)
    }

    pub fn frobenius(&self) -> f64 {
        (self.hh.norm_sqr() + self.hv.norm_sqr() + self.vh.norm_sqr() + self.vv.norm_sqr()).sqrt()
    }

    /// `R(θ) S R(θ)ᵀ`: the same target rotated about the line of sight.
    pub fn rotated(&self, theta: f64) -> Self {
        let (c, s) = (theta.cos(), theta.sin());
        let r = [[c, -s], [s, c]];
        let m = [[self.hh, self.hv], [self.vh, self.vv]];
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, o) in row.iter_mut().enumerate() {
                for (k, rk) in m.iter().enumerate() {
                    for (l, v) in rk.iter().enumerate() {
                        *o += r[a][k] * v * r[b][l];
                    }
                }
            }
        }
        Self::new(out[0][0], out[0][1], out[1][0], out[1][1])
    }
}

/// Unnormalised Pauli components `α = HH + VV`, `β = HH − VV`, `γ = 2·HV`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pauli {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
}

impl Pauli {
    /// `k = (α, β, γ)/√2`.
    pub fn vector(&self) -> [C64; 3] {
        [self.alpha / SQRT2, self.beta / SQRT2, self.gamma / SQRT2]
    }
}

/// Under non-reciprocity `γ = HV + VH` keeps the symmetric part.
pub fn pauli_decompose(s: &SinclairPixel) -> Pauli {
    Pauli {
        alpha: s.hh + s.vv,
        beta: s.hh - s.vv,
        gamma: s.hv + s.vh,
    }
}

pub fn pauli_recompose(p: &Pauli) -> SinclairPixel {
    let hv = p.gamma * 0.5;
    SinclairPixel::reciprocal((p.alpha + p.beta) * 0.5, hv, (p.alpha - p.beta) * 0.5)
}

/// Right–left circular basis coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlBasis {
    pub rr: C64,
    pub rl: C64,
    pub ll: C64,
}

pub fn to_rl_basis(s: &SinclairPixel) -> RlBasis {
    let hv = (s.hv + s.vh) * 0.5;
    RlBasis {
        rr: (s.hh - s.vv) * 0.5 + j() * hv,
        rl: j() * (s.hh + s.vv) * 0.5,
        ll: (s.vv - s.hh) * 0.5 + j() * hv,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Handedness {
    Left,
    Right,
}

/// Sphere, diplane and helix weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Krogager {
    pub ks: f64,
    pub kd: f64,
    pub kh: f64,
    pub handedness: Handedness,
}

pub fn krogager_decompose(s: &SinclairPixel) -> Krogager {
    let rl = to_rl_basis(s);
    let (rr, ll) = (rl.rr.norm(), rl.ll.norm());
    let ks = rl.rl.norm();
    if rr > ll {
        Krogager {
            ks,
            kd: ll,
            kh: rr - ll,
            handedness: Handedness::Left,
        }
    } else {
        Krogager {
            ks,
            kd: rr,
            kh: ll - rr,
            handedness: Handedness::Right,
        }
    }
}

// ---- Cameron -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CameronClass {
    NonReciprocal,
    Asymmetric,
    LeftHelix,
    RightHelix,
    /// Symmetric, but far from every symmetric prototype.
    Symmetric,
    Trihedral,
    Dihedral,
    Dipole,
    Cylinder,
    NarrowDihedral,
    QuarterWave,
    /// All-zero pixel.
    Unclassifiable,
}

impl CameronClass {
    pub const ALL: [CameronClass; 12] = [
        Self::NonReciprocal,
        Self::Asymmetric,
        Self::LeftHelix,
        Self::RightHelix,
        Self::Symmetric,
        Self::Trihedral,
        Self::Dihedral,
        Self::Dipole,
        Self::Cylinder,
        Self::NarrowDihedral,
        Self::QuarterWave,
        Self::Unclassifiable,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("listed")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameronConfig {
    /// Non-reciprocal when `|HV − VH| > threshold · ‖S‖_F`.
    pub reciprocity_threshold: f64,
    /// Largest angle (radians) between `k` and its symmetric part for a
    /// symmetric scatterer.
    pub symmetric_angle: f64,
    /// Largest angle (radians) to a helix prototype for a helix.
    pub helix_angle: f64,
    /// Largest chordal distance to the nearest symmetric prototype.
    pub prototype_radius: f64,
}

impl Default for CameronConfig {
    fn default() -> Self {
        Self {
            reciprocity_threshold: 0.05,
            symmetric_angle: std::f64::consts::FRAC_PI_8,
            helix_angle: std::f64::consts::FRAC_PI_8,
            prototype_radius: 0.3,
        }
    }
}

/// A point of the extended complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(C64),
    Infinity,
}

impl Extended {
    pub fn ratio(num: C64, den: C64, scale: f64) -> Self {
        if den.norm() <= 1e-12 * scale {
            Extended::Infinity
        } else {
            Extended::Finite(num / den)
        }
    }
}

/// `|z − w| / √((1 + |z|²)(1 + |w|²))`, extended continuously to ∞.
pub fn chordal(z: Extended, w: Extended) -> f64 {
    match (z, w) {
        (Extended::Infinity, Extended::Infinity) => 0.0,
        (Extended::Infinity, Extended::Finite(a)) | (Extended::Finite(a), Extended::Infinity) => {
            1.0 / (1.0 + a.norm_sqr()).sqrt()
        }
        (Extended::Finite(a), Extended::Finite(b)) => {
            (a - b).norm() / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr())).sqrt()
        }
    }
}

/// Canonical Sinclair matrix of each symmetric prototype.
pub fn canonical_matrix(class: CameronClass) -> Option<SinclairPixel> {
    let c = |re: f64, im: f64| C64::new(re, im);
    Some(match class {
        CameronClass::Trihedral => SinclairPixel::diag(c(1.0, 0.0), c(1.0, 0.0)),
        CameronClass::Dihedral => SinclairPixel::diag(c(1.0, 0.0), c(-1.0, 0.0)),
        CameronClass::Dipole => SinclairPixel::diag(c(1.0, 0.0), c(0.0, 0.0)),
        CameronClass::Cylinder => SinclairPixel::diag(c(1.0, 0.0), c(0.5, 0.0)),
        CameronClass::NarrowDihedral => SinclairPixel::diag(c(1.0, 0.0), c(-0.5, 0.0)),
        CameronClass::QuarterWave => SinclairPixel::diag(c(1.0, 0.0), c(0.0, 1.0)),
        CameronClass::LeftHelix => SinclairPixel::reciprocal(c(0.5, 0.0), c(0.0, -0.5), c(-0.5, 0.0)),
        CameronClass::RightHelix => SinclairPixel::reciprocal(c(0.5, 0.0), c(0.0, 0.5), c(-0.5, 0.0)),
        _ => return None,
    })
}

const SYMMETRIC_PROTOTYPES: [CameronClass; 6] = [
    CameronClass::Trihedral,
    CameronClass::Dihedral,
    CameronClass::Dipole,
    CameronClass::Cylinder,
    CameronClass::NarrowDihedral,
    CameronClass::QuarterWave,
];

/// `z = (k2 + j·k3)/k1` of a Pauli vector.
pub fn cameron_z(p: &Pauli) -> Extended {
    let scale = (p.alpha.norm_sqr() + p.beta.norm_sqr() + p.gamma.norm_sqr()).sqrt();
    Extended::ratio(p.beta + j() * p.gamma, p.alpha, scale)
}

/// Symmetric part of a Pauli vector: `(β, γ)` projected onto the complex
/// line through the real direction `(cos θ, sin θ)` that keeps the most
/// energy. Returns `(ε, θ)` with the part equal to `(α, ε cos θ, ε sin θ)`.
fn symmetric_part(p: &Pauli) -> (C64, f64) {
    let cross = (p.beta * p.gamma.conj()).re;
    let theta = 0.5 * (2.0 * cross).atan2(p.beta.norm_sqr() - p.gamma.norm_sqr());
    (p.beta * theta.cos() + p.gamma * theta.sin(), theta)
}

/// Angle between a Pauli vector and a prototype direction.
fn angle_to(p: &Pauli, q: &Pauli) -> f64 {
    let a = [p.alpha, p.beta, p.gamma];
    let b = [q.alpha, q.beta, q.gamma];
    let dot: C64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
    let na = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    (dot.norm() / (na * nb)).clamp(0.0, 1.0).acos()
}

/// Cameron classification: reciprocity test, symmetric/asymmetric split,
/// then the nearest prototype. Symmetric parts are compared after rotation
/// to their principal axes, in both orientations (`±z`), under the
/// chordal metric.
pub fn cameron_classify(s: &SinclairPixel, cfg: &CameronConfig) -> CameronClass {
    let norm = s.frobenius();
    if norm == 0.0 || !norm.is_finite() {
        return CameronClass::Unclassifiable;
    }
    if (s.hv - s.vh).norm() > cfg.reciprocity_threshold * norm {
        return CameronClass::NonReciprocal;
    }
    let p = pauli_decompose(s);
    let (eps, _) = symmetric_part(&p);
    let total = p.alpha.norm_sqr() + p.beta.norm_sqr() + p.gamma.norm_sqr();
    let sym = p.alpha.norm_sqr() + eps.norm_sqr();
    let tau = (sym / total).sqrt().clamp(0.0, 1.0).acos();
    if tau > cfg.symmetric_angle {
        let helix = |c| pauli_decompose(&canonical_matrix(c).expect("helix prototype"));
        let (dl, dr) = (
            angle_to(&p, &helix(CameronClass::LeftHelix)),
            angle_to(&p, &helix(CameronClass::RightHelix)),
        );
        return if dl.min(dr) <= cfg.helix_angle {
            if dl <= dr {
                CameronClass::LeftHelix
            } else {
                CameronClass::RightHelix
            }
        } else {
            CameronClass::Asymmetric
        };
    }
    let scale = sym.sqrt();
    let z = Extended::ratio(eps, p.alpha, scale);
    let neg = match z {
        Extended::Finite(v) => Extended::Finite(-v),
        Extended::Infinity => Extended::Infinity,
    };
    let mut best = (f64::INFINITY, CameronClass::Symmetric);
    for class in SYMMETRIC_PROTOTYPES {
        let zp = cameron_z(&pauli_decompose(&canonical_matrix(class).expect("prototype")));
        let d = chordal(z, zp).min(chordal(neg, zp));
        if d < best.0 {
            best = (d, class);
        }
    }
    if best.0 <= cfg.prototype_radius {
        best.1
    } else {
        CameronClass::Symmetric
    }
}

// ---- coherency, entropy, α ----------------------------------------------------

/// Windowed coherency matrix `T̂ = (1/N) Σ k kᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherencyMatrix {
    pub t: Matrix3<C64>,
    pub window: usize,
}

impl CoherencyMatrix {
    pub fn from_vector(k: &[C64; 3]) -> Self {
        let v = Vector3::new(k[0], k[1], k[2]);
        Self {
            t: v * v.adjoint(),
            window: 1,
        }
    }
}

fn check_field(t: &ComplexTensor) -> Result<(usize, usize), PolsarError> {
    match t.shape() {
        [3, h, w] => Ok((*h, *w)),
        other => Err(PolsarError::FieldShape(other.to_vec())),
    }
}

pub fn pixel_at(field: &ComplexTensor, y: usize, x: usize) -> SinclairPixel {
    SinclairPixel::reciprocal(*field.get(&[0, y, x]), *field.get(&[1, y, x]), *field.get(&[2, y, x]))
}

/// Pauli vectors `k` of a `(HH, HV, VV)` field.
pub fn pauli_field(field: &ComplexTensor) -> Result<ComplexTensor, PolsarError> {
    let (h, w) = check_field(field)?;
    let mut out = Tensor::filled(vec![3, h, w], C64::new(0.0, 0.0));
    for y in 0..h {
        for x in 0..w {
            let k = pauli_decompose(&pixel_at(field, y, x)).vector();
            for (c, v) in k.iter().enumerate() {
                let i = out.offset(&[c, y, x]);
                out.data_mut()[i] = *v;
            }
        }
    }
    Ok(out)
}

/// Boxcar coherency estimate at every pixel with a circular boundary;
/// row-major order.
pub fn scm_estimate(pauli: &ComplexTensor, window: usize) -> Result<Vec<CoherencyMatrix>, PolsarError> {
    let (h, w) = check_field(pauli)?;
    if window == 0 || window % 2 == 0 {
        return Err(PolsarError::InvalidWindow(window));
    }
    if window > h || window > w {
        return Err(PolsarError::WindowTooLarge { window, height: h, width: w });
    }
    let r = (window / 2) as isize;
    let n = (window * window) as f64;
    let outer: Vec<Matrix3<C64>> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let k = Vector3::new(*pauli.get(&[0, y, x]), *pauli.get(&[1, y, x]), *pauli.get(&[2, y, x]));
            k * k.adjoint()
        })
        .collect();
    let wrap = |v: isize, n: usize| v.rem_euclid(n as isize) as usize;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = Matrix3::<C64>::zeros();
            for dy in -r..=r {
                for dx in -r..=r {
                    acc += outer[wrap(y + dy, h) * w + wrap(x + dx, w)];
                }
            }
            out.push(CoherencyMatrix { t: acc / C64::new(n, 0.0), window });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HAlphaPoint {
    /// Entropy in `[0, 1]`.
    pub h: f64,
    /// Mean scattering angle in degrees.
    pub alpha: f64,
}

/// `H = −Σ pᵢ log₃ pᵢ` and `α = Σ pᵢ arccos|eᵢ₁|` from the eigenstructure.
pub fn entropy_alpha(t: &CoherencyMatrix) -> Result<HAlphaPoint, PolsarError> {
    let herm = (t.t + t.t.adjoint()) * C64::new(0.5, 0.0);
    let trace: f64 = (0..3).map(|i| herm[(i, i)].re).sum();
    if !(trace > 0.0) {
        return Err(PolsarError::ZeroTrace);
    }
    let eig = SymmetricEigen::new(herm);
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    if !(total > 0.0) {
        return Err(PolsarError::ZeroTrace);
    }
    let mut h = 0.0;
    let mut alpha = 0.0;
    for (i, l) in lambdas.iter().enumerate() {
        let p = l / total;
        if p > 0.0 {
            h -= p * p.log(3.0);
        }
        let e1 = eig.eigenvectors[(0, i)].norm().min(1.0);
        alpha += p * e1.acos();
    }
    Ok(HAlphaPoint {
        h: h.clamp(0.0, 1.0),
        alpha: alpha.to_degrees().clamp(0.0, 90.0),
    })
}

/// Entropy split points and per-entropy-band α split points (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HAlphaBoundaries {
    pub h: [f64; 2],
    pub low: [f64; 2],
    pub mid: [f64; 2],
    pub high: [f64; 2],
}

impl Default for HAlphaBoundaries {
    fn default() -> Self {
        Self {
            h: [0.5, 0.9],
            low: [42.5, 47.5],
            mid: [40.0, 50.0],
            high: [40.0, 55.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HAlphaZone {
    /// 1 (high-entropy multiple scattering) … 9 (low-entropy surface).
    pub zone: u8,
    /// The point lay outside the feasible region and was moved onto it.
    pub clamped: bool,
}

fn entropy3(ls: [f64; 3]) -> f64 {
    let s: f64 = ls.iter().sum();
    -ls.iter()
        .map(|l| l / s)
        .filter(|p| *p > 0.0)
        .map(|p| p * p.log(3.0))
        .sum::<f64>()
}

/// Solves `H(m) = target` for increasing `H` on `[lo, hi]`.
fn bisect(target: f64, mut lo: f64, mut hi: f64, h: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Feasible α range (degrees) at entropy `h`.
pub fn feasible_alpha(h: f64) -> (f64, f64) {
    let h = h.clamp(0.0, 1.0);
    // Lower curve: eigenvalues (1, m, m), 0 ≤ m ≤ 1.
    let m = bisect(h, 0.0, 1.0, |m| entropy3([1.0, m, m]));
    let lo = 90.0 * 2.0 * m / (1.0 + 2.0 * m);
    // Upper curve: (0, 1, 2m) for m ≤ 1/2 keeps α = 90°, then (2m − 1, 1, 1).
    let hi = if h <= 2f64.ln() / 3f64.ln() {
        90.0
    } else {
        let m = bisect(h, 0.5, 1.0, |m| entropy3([2.0 * m - 1.0, 1.0, 1.0]));
        90.0 * 2.0 / (2.0 * m + 1.0)
    };
    (lo, hi)
}

pub fn halpha_classify(pt: &HAlphaPoint, b: &HAlphaBoundaries) -> HAlphaZone {
    let (lo, hi) = feasible_alpha(pt.h);
    let tol = 1e-9;
    let (alpha, clamped) = if pt.alpha < lo - tol {
        (lo, true)
    } else if pt.alpha > hi + tol {
        (hi, true)
    } else {
        (pt.alpha, false)
    };
    let band = |splits: [f64; 2]| -> u8 {
        if alpha < splits[0] {
            0
        } else if alpha < splits[1] {
            1
        } else {
            2
        }
    };
    // Within a band: surface, intermediate, multiple scattering.
    let zone = if pt.h < b.h[0] {
        9 - band(b.low)
    } else if pt.h < b.h[1] {
        6 - band(b.mid)
    } else {
        3 - band(b.high)
    };
    HAlphaZone { zone, clamped }
}

// ---- maps -------------------------------------------------------------------------

/// Per-pixel RGB channels before normalisation.
pub fn pauli_rgb_channels(field: &ComplexTensor) -> Result<[Vec<f64>; 3], PolsarError> {
    let (h, w) = check_field(field)?;
    let mut ch = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..h * w {
        let p = pauli_decompose(&pixel_at(field, i / w, i % w));
        ch[0].push(p.beta.norm());
        ch[1].push(p.gamma.norm());
        ch[2].push(p.alpha.norm());
    }
    Ok(ch)
}

pub fn krogager_rgb_channels(field: &ComplexTensor) -> Result<[Vec<f64>; 3], PolsarError> {
    let (h, w) = check_field(field)?;
    let mut ch = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..h * w {
        let k = krogager_decompose(&pixel_at(field, i / w, i % w));
        ch[0].push(k.kd);
        ch[1].push(k.kh);
        ch[2].push(k.ks);
    }
    Ok(ch)
}

/// Nearest-rank percentile (`q` in `[0, 100]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// 8-bit composite, interleaved RGB. All channels share one scale, the
/// `q`-th percentile of the pooled values, so their relative power is kept.
pub fn composite_rgb(channels: &[Vec<f64>; 3], q: f64) -> Vec<u8> {
    let pooled: Vec<f64> = channels.iter().flatten().copied().collect();
    let s = percentile(&pooled, q);
    let n = channels[0].len();
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in channels {
            let v = if s > 0.0 { c[i] / s } else { 0.0 };
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sphere() -> SinclairPixel {
        SinclairPixel::diag(c(1.0, 0.0), c(1.0, 0.0))
    }

    fn dihedral() -> SinclairPixel {
        SinclairPixel::diag(c(1.0, 0.0), c(-1.0, 0.0))
    }

    #[test]
    fn pauli_examples() {
        let p = pauli_decompose(&sphere());
        assert_eq!((p.alpha, p.beta, p.gamma), (c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)));
        assert!((p.vector()[0] - c(SQRT2, 0.0)).norm() < 1e-15);
        let p = pauli_decompose(&dihedral());
        assert_eq!((p.alpha, p.beta, p.gamma), (c(0.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)));
        let s = SinclairPixel::reciprocal(c(0.3, -0.2), c(1.1, 0.4), c(-0.7, 0.9));
        let r = pauli_recompose(&pauli_decompose(&s));
        for (a, b) in [(r.hh, s.hh), (r.hv, s.hv), (r.vh, s.vh), (r.vv, s.vv)] {
            assert!((a - b).norm() <= 1e-15);
        }
    }

    #[test]
    fn rl_basis_examples() {
        let rl = to_rl_basis(&sphere());
        assert_eq!((rl.rr, rl.rl, rl.ll), (c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)));
        let rl = to_rl_basis(&dihedral());
        assert_eq!((rl.rr.norm(), rl.ll.norm(), rl.rl.norm()), (1.0, 1.0, 0.0));
        let z = to_rl_basis(&SinclairPixel::diag(c(0.0, 0.0), c(0.0, 0.0)));
        assert_eq!(z.rr.norm() + z.rl.norm() + z.ll.norm(), 0.0);
    }

    #[test]
    fn krogager_examples() {
        let k = krogager_decompose(&sphere());
        assert_eq!((k.ks, k.kd, k.kh), (1.0, 0.0, 0.0));
        let k = krogager_decompose(&dihedral());
        assert_eq!((k.ks, k.kd, k.kh), (0.0, 1.0, 0.0));
        let k = krogager_decompose(&canonical_matrix(CameronClass::RightHelix).unwrap());
        assert!(k.ks.abs() < 1e-15 && k.kd.abs() < 1e-15 && (k.kh - 1.0).abs() < 1e-15);
        assert_eq!(k.handedness, Handedness::Right);
        let k = krogager_decompose(&canonical_matrix(CameronClass::LeftHelix).unwrap());
        assert_eq!(k.handedness, Handedness::Left);
    }

    #[test]
    fn cameron_canonical_targets() {
        let cfg = CameronConfig::default();
        for class in [
            CameronClass::Trihedral,
            CameronClass::Dihedral,
            CameronClass::Dipole,
            CameronClass::Cylinder,
            CameronClass::NarrowDihedral,
            CameronClass::QuarterWave,
            CameronClass::LeftHelix,
            CameronClass::RightHelix,
        ] {
            let s = canonical_matrix(class).unwrap();
            assert_eq!(cameron_classify(&s, &cfg), class);
            // Orientation, global phase and scale do not matter.
            let t = s.rotated(0.7).scale(C64::from_polar(3.5, -1.2));
            assert_eq!(cameron_classify(&t, &cfg), class, "{class:?} rotated");
        }
        let vertical = SinclairPixel::diag(c(0.0, 0.0), c(1.0, 0.0));
        assert_eq!(cameron_classify(&vertical, &cfg), CameronClass::Dipole);
        assert_eq!(cameron_classify(&SinclairPixel::diag(c(0.0, 0.0), c(0.0, 0.0)), &cfg), CameronClass::Unclassifiable);
        let nr = SinclairPixel::new(c(1.0, 0.0), c(0.5, 0.0), c(-0.5, 0.0), c(1.0, 0.0));
        assert_eq!(cameron_classify(&nr, &cfg), CameronClass::NonReciprocal);
    }

    #[test]
    fn cameron_z_examples() {
        assert_eq!(cameron_z(&pauli_decompose(&sphere())), Extended::Finite(c(0.0, 0.0)));
        assert_eq!(cameron_z(&pauli_decompose(&dihedral())), Extended::Infinity);
        assert_eq!(cameron_z(&pauli_decompose(&SinclairPixel::diag(c(1.0, 0.0), c(0.0, 0.0)))), Extended::Finite(c(1.0, 0.0)));
        assert!((chordal(Extended::Infinity, Extended::Finite(c(0.0, 0.0))) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_alpha_examples() {
        let s = CoherencyMatrix::from_vector(&pauli_decompose(&sphere()).vector());
        let pt = entropy_alpha(&s).unwrap();
        assert!(pt.h < 1e-10 && pt.alpha < 1e-6, "{pt:?}");
        let d = CoherencyMatrix::from_vector(&pauli_decompose(&dihedral()).vector());
        let pt = entropy_alpha(&d).unwrap();
        assert!(pt.h < 1e-10 && (pt.alpha - 90.0).abs() < 1e-6, "{pt:?}");
        let eq = CoherencyMatrix {
            t: Matrix3::identity() * c(0.7, 0.0),
            window: 1,
        };
        assert!((entropy_alpha(&eq).unwrap().h - 1.0).abs() < 1e-10);
        let zero = CoherencyMatrix {
            t: Matrix3::zeros(),
            window: 1,
        };
        assert_eq!(entropy_alpha(&zero), Err(PolsarError::ZeroTrace));
    }

    #[test]
    fn zone_examples() {
        let b = HAlphaBoundaries::default();
        let z = |h, alpha| halpha_classify(&HAlphaPoint { h, alpha }, &b);
        assert_eq!(z(0.1, 10.0).zone, 9);
        assert_eq!(z(0.95, 45.0).zone, 2);
        assert_eq!(z(0.0, 90.0).zone, 7);
        assert_eq!(z(0.3, 45.0).zone, 8);
        assert_eq!(z(0.7, 60.0).zone, 4);
        let far = z(0.95, 10.0);
        assert!(far.clamped);
        assert_eq!(far.zone, 2);
        // Entropy is flat at its maximum, so the inversion is only ~√ε accurate.
        let (lo, hi) = feasible_alpha(1.0);
        assert!((lo - 60.0).abs() < 1e-6 && (hi - 60.0).abs() < 1e-6, "{lo} {hi}");
        let (lo, hi) = feasible_alpha(0.0);
        assert!(lo < 1e-12 && hi == 90.0);
    }

    #[test]
    fn scm_examples() {
        let k = [c(1.0, 0.5), c(-0.2, 0.1), c(0.0, 0.3)];
        let field = Tensor::from_fn(vec![3, 5, 5], |i| k[i[0]]);
        let t = scm_estimate(&field, 3).unwrap();
        let want = CoherencyMatrix::from_vector(&k).t;
        assert!(t.iter().all(|m| (m.t - want).norm() < 1e-14));
        assert!(scm_estimate(&field, 2).is_err());
        assert!(scm_estimate(&field, 7).is_err());
    }

    #[test]
    fn scm_matches_brute_force() {
        let field = Tensor::from_fn(vec![3, 6, 7], |i| c(((i[0] * 31 + i[1] * 7 + i[2]) as f64).sin(), ((i[1] * i[2] + i[0]) as f64).cos()));
        let est = scm_estimate(&field, 3).unwrap();
        for y in 0..6usize {
            for x in 0..7usize {
                let mut acc = [[c(0.0, 0.0); 3]; 3];
                for dy in [5, 0, 1] {
                    for dx in [6, 0, 1] {
                        let (yy, xx) = ((y + dy) % 6, (x + dx) % 7);
                        for a in 0..3 {
                            for bb in 0..3 {
                                acc[a][bb] += field.get(&[a, yy, xx]) * field.get(&[bb, yy, xx]).conj() / 9.0;
                            }
                        }
                    }
                }
                let m = &est[y * 7 + x].t;
                for a in 0..3 {
                    for bb in 0..3 {
                        assert!((m[(a, bb)] - acc[a][bb]).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn composite_scaling() {
        let ch = [vec![0.0, 1.0, 2.0, 4.0], vec![0.0; 4], vec![1.0; 4]];
        let rgb = composite_rgb(&ch, 100.0);
        assert_eq!(&rgb[9..12], &[255, 0, 64]);
        assert_eq!(&rgb[3..6], &[64, 0, 64]);
        // Pooled 75th percentile is 1: everything at or above it saturates.
        let rgb = composite_rgb(&ch, 75.0);
        assert_eq!(&rgb[3..6], &[255, 0, 255]);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), 2.0);
    }
}
