//! The CPLX tile format, a synthetic PolSAR-like scene generator, tiling
//! and dataset splits.
//!
//! CPLX layout, little-endian throughout:
//!
//! ```text
//! "CPLX" | version u8 = 1 | rank u8 | rank × u32 dims
//! | product(dims) × (f32 re, f32 im), row-major
//! | optional: u32 length | UTF-8 metadata text
//! ```

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctensor::{ComplexTensor, Tensor, TensorError, C64};
use crate::polsar::{canonical_matrix, CameronClass, SinclairPixel};

pub const MAGIC: &[u8; 4] = b"CPLX";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated: need {expected} bytes, have {got}")]
    Truncated { expected: usize, got: usize },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("split ratios must be non-negative and sum to 1")]
    InvalidRatios,
    #[error("nothing to split")]
    Empty,
}

impl DataError {
    /// Stable numeric code per error kind.
    pub fn code(&self) -> u8 {
        match self {
            DataError::Io(_) => 10,
            DataError::BadMagic(_) => 11,
            DataError::UnsupportedVersion(_) => 12,
            DataError::Truncated { .. } => 13,
            DataError::Metadata(_) => 14,
            DataError::Tensor(_) => 15,
            DataError::InvalidLayout(_) => 16,
            DataError::InvalidRatios => 17,
            DataError::Empty => 18,
        }
    }
}

/// Serialises `t` (narrowed to f32) with optional metadata text.
pub fn encode_cplx(t: &ComplexTensor, meta: Option<&str>) -> Result<Vec<u8>, DataError> {
    let rank = u8::try_from(t.rank()).map_err(|_| DataError::Metadata("rank above 255".into()))?;
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(rank);
    for d in t.shape() {
        let d = u32::try_from(*d).map_err(|_| DataError::Metadata("dimension above u32".into()))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for z in t.data() {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    if let Some(m) = meta {
        let len = u32::try_from(m.len()).map_err(|_| DataError::Metadata("metadata too long".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(m.as_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8], DataError> {
    let end = *at + n;
    if end > bytes.len() {
        return Err(DataError::Truncated {
            expected: end,
            got: bytes.len(),
        });
    }
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

fn u32_at(bytes: &[u8], at: &mut usize) -> Result<u32, DataError> {
    let b = take(bytes, at, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn f32_at(bytes: &[u8], at: &mut usize) -> Result<f32, DataError> {
    let b = take(bytes, at, 4)?;
    Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode_cplx(bytes: &[u8]) -> Result<(ComplexTensor, Option<String>), DataError> {
    let mut at = 0;
    let magic = take(bytes, &mut at, 4)?;
    if magic != MAGIC {
        return Err(DataError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let head = take(bytes, &mut at, 2)?;
    if head[0] != VERSION {
        return Err(DataError::UnsupportedVersion(head[0]));
    }
    let rank = head[1] as usize;
    let shape = (0..rank)
        .map(|_| u32_at(bytes, &mut at).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let n: usize = shape.iter().product();
    let payload = 8 * n;
    if at + payload > bytes.len() {
        return Err(DataError::Truncated {
            expected: at + payload,
            got: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let re = f32_at(bytes, &mut at)?;
        let im = f32_at(bytes, &mut at)?;
        data.push(C64::new(re as f64, im as f64));
    }
    let meta = if at == bytes.len() {
        None
    } else {
        let len = u32_at(bytes, &mut at)? as usize;
        let text = take(bytes, &mut at, len)?;
        if at != bytes.len() {
            return Err(DataError::Metadata("trailing bytes after metadata".into()));
        }
        Some(String::from_utf8(text.to_vec()).map_err(|e| DataError::Metadata(e.to_string()))?)
    };
    Ok((Tensor::new(shape, data)?, meta))
}

pub fn write_cplx(path: impl AsRef<Path>, t: &ComplexTensor, meta: Option<&str>) -> Result<(), DataError> {
    fs::write(path, encode_cplx(t, meta)?)?;
    Ok(())
}

pub fn read_cplx(path: impl AsRef<Path>) -> Result<(ComplexTensor, Option<String>), DataError> {
    decode_cplx(&fs::read(path)?)
}

/// Rounds every value through f32, as a write/read cycle does.
pub fn narrow_f32(t: &ComplexTensor) -> ComplexTensor {
    t.map(|z| C64::new(z.re as f32 as f64, z.im as f32 as f64))
}

// ---- synthetic scenes ----------------------------------------------------------

/// Canonical scattering mechanisms; the index is the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    Sphere,
    Dihedral,
    Dipole,
    Cylinder,
    NarrowDihedral,
    QuarterWave,
    Helix,
}

impl Mechanism {
    pub const ALL: [Mechanism; 7] = [
        Self::Sphere,
        Self::Dihedral,
        Self::Dipole,
        Self::Cylinder,
        Self::NarrowDihedral,
        Self::QuarterWave,
        Self::Helix,
    ];

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    pub fn canonical(self) -> SinclairPixel {
        let class = match self {
            Self::Sphere => CameronClass::Trihedral,
            Self::Dihedral => CameronClass::Dihedral,
            Self::Dipole => CameronClass::Dipole,
            Self::Cylinder => CameronClass::Cylinder,
            Self::NarrowDihedral => CameronClass::NarrowDihedral,
            Self::QuarterWave => CameronClass::QuarterWave,
            Self::Helix => CameronClass::RightHelix,
        };
        canonical_matrix(class).expect("symmetric or helix prototype")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    /// Square regions of side `block`, each a uniformly drawn mechanism.
    Blocks { block: usize },
    /// The whole scene is one mechanism.
    Single(Mechanism),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// `None`: noiseless.
    pub looks: Option<usize>,
    pub layout: Layout,
    /// Per-region orientation drawn uniformly in `±max_rotation` radians.
    pub max_rotation: f64,
    /// Standard deviation of the additive circular Gaussian clutter per
    /// Pauli channel.
    pub clutter: f64,
}

impl SceneConfig {
    pub fn new(height: usize, width: usize, looks: Option<usize>, layout: Layout) -> Self {
        Self {
            height,
            width,
            looks,
            layout,
            max_rotation: std::f64::consts::PI / 16.0,
            clutter: 0.1,
        }
    }
}

/// A `(HH, HV, VV)` field with per-pixel mechanism labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub field: ComplexTensor,
    /// The field before speckle and clutter.
    pub noiseless: ComplexTensor,
    /// Row-major labels, one per pixel.
    pub labels: Vec<usize>,
    pub looks: Option<usize>,
}

fn cn(rng: &mut impl Rng, std: f64) -> C64 {
    let d = Normal::new(0.0, std / std::f64::consts::SQRT_2).expect("finite std");
    C64::new(d.sample(rng), d.sample(rng))
}

/// Piecewise-constant regions of canonical targets, each with its own
/// orientation and absolute phase. With `L` looks every pixel's Pauli
/// vector is `τ·k₀ + n`: `|τ|²` is Gamma(L, 1/L) with uniform phase (so
/// `τ ~ CN(0, 1)` for one look) and `n ~ CN(0, clutter²·I)`.
pub fn gen_scene(seed: u64, cfg: &SceneConfig) -> Result<SyntheticScene, DataError> {
    let (h, w) = (cfg.height, cfg.width);
    if h == 0 || w == 0 {
        return Err(DataError::InvalidLayout("empty scene".into()));
    }
    if !(cfg.clutter >= 0.0) || !(cfg.max_rotation >= 0.0) || cfg.looks == Some(0) {
        return Err(DataError::InvalidLayout("clutter, rotation and looks must be non-negative and looks non-zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (block, fixed) = match cfg.layout {
        Layout::Blocks { block } => {
            if block == 0 || h % block != 0 || w % block != 0 {
                return Err(DataError::InvalidLayout(format!("block {block} does not tile {h}×{w}")));
            }
            (block, None)
        }
        Layout::Single(m) => (h.max(w), Some(m)),
    };
    let (by, bx) = (h.div_ceil(block), w.div_ceil(block));
    let regions: Vec<(Mechanism, SinclairPixel)> = (0..by * bx)
        .map(|_| {
            let m = fixed.unwrap_or_else(|| Mechanism::ALL[rng.random_range(0..Mechanism::ALL.len())]);
            let theta = if cfg.max_rotation > 0.0 {
                rng.random_range(-cfg.max_rotation..=cfg.max_rotation)
            } else {
                0.0
            };
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (m, m.canonical().rotated(theta).scale(C64::from_polar(1.0, phase)))
        })
        .collect();
    let gamma = cfg
        .looks
        .map(|l| Gamma::new(l as f64, 1.0 / l as f64).expect("positive looks"));
    let mut field = Tensor::filled(vec![3, h, w], C64::new(0.0, 0.0));
    let mut noiseless = field.clone();
    let mut labels = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (m, s0) = regions[(y / block) * bx + x / block];
            labels.push(m.label());
            let clean = [s0.hh, s0.hv, s0.vv];
            let s = match &gamma {
                None => clean,
                Some(g) => {
                    let tau = C64::from_polar(g.sample(&mut rng).sqrt(), rng.random_range(0.0..std::f64::consts::TAU));
                    let p = crate::polsar::pauli_decompose(&s0);
                    let k = [
                        p.alpha * tau + cn(&mut rng, cfg.clutter) * std::f64::consts::SQRT_2,
                        p.beta * tau + cn(&mut rng, cfg.clutter) * std::f64::consts::SQRT_2,
                        p.gamma * tau + cn(&mut rng, cfg.clutter) * std::f64::consts::SQRT_2,
                    ];
                    let back = crate::polsar::pauli_recompose(&crate::polsar::Pauli {
                        alpha: k[0],
                        beta: k[1],
                        gamma: k[2],
                    });
                    [back.hh, back.hv, back.vv]
                }
            };
            for c in 0..3 {
                let i = field.offset(&[c, y, x]);
                field.data_mut()[i] = s[c];
                noiseless.data_mut()[i] = clean[c];
            }
        }
    }
    Ok(SyntheticScene {
        field,
        noiseless,
        labels,
        looks: cfg.looks,
    })
}

/// `min_φ ‖e^{jφ}·S − C‖_F`.
pub fn phase_free_distance(s: &SinclairPixel, c: &SinclairPixel) -> f64 {
    let a = [s.hh, s.hv, s.vh, s.vv];
    let b = [c.hh, c.hv, c.vh, c.vv];
    let inner: C64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
    let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    (na + nb - 2.0 * inner.norm()).max(0.0).sqrt()
}

/// Label of the canonical mechanism nearest to `s` up to absolute phase.
pub fn nearest_mechanism(s: &SinclairPixel) -> usize {
    Mechanism::ALL
        .iter()
        .map(|m| phase_free_distance(s, &m.canonical()))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("non-empty")
}

/// A square patch of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub data: ComplexTensor,
    /// Majority label; the lowest label wins ties.
    pub label: usize,
    pub mask: Vec<usize>,
}

/// Non-overlapping `size × size` tiles in row-major order.
pub fn tiles(scene: &SyntheticScene, size: usize) -> Result<Vec<Tile>, DataError> {
    let (h, w) = (scene.field.shape()[1], scene.field.shape()[2]);
    if size == 0 || h % size != 0 || w % size != 0 {
        return Err(DataError::InvalidLayout(format!("tile {size} does not divide {h}×{w}")));
    }
    let mut out = Vec::new();
    for ty in 0..h / size {
        for tx in 0..w / size {
            let data = Tensor::from_fn(vec![3, size, size], |i| *scene.field.get(&[i[0], ty * size + i[1], tx * size + i[2]]));
            let mask: Vec<usize> = (0..size * size)
                .map(|i| scene.labels[(ty * size + i / size) * w + tx * size + i % size])
                .collect();
            let mut counts = vec![0usize; Mechanism::ALL.len()];
            for l in &mask {
                counts[*l] += 1;
            }
            let label = counts
                .iter()
                .enumerate()
                .fold(0, |best, (i, c)| if *c > counts[best] { i } else { best });
            out.push(Tile { data, label, mask });
        }
    }
    Ok(out)
}

/// Tiles of `count` independent single-block scenes of side `size`, with
/// mechanisms cycling through all classes; seeds derive from `seed`.
pub fn tile_dataset(seed: u64, count: usize, size: usize, looks: Option<usize>) -> Result<Vec<Tile>, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let m = Mechanism::ALL[i % Mechanism::ALL.len()];
            let cfg = SceneConfig::new(size, size, looks, Layout::Single(m));
            let scene = gen_scene(rng.random(), &cfg)?;
            Ok(tiles(&scene, size)?.remove(0))
        })
        .collect()
}

/// Index sets of a dataset split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random assignment of `0..n`; sizes are rounded train and
/// validation shares, test takes the rest.
pub fn split(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split, DataError> {
    if n == 0 {
        return Err(DataError::Empty);
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidRatios);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * ratios[0]).round() as usize;
    let n_val = (((n as f64) * ratios[1]).round() as usize).min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok(Split { train: idx, val, test })
}

/// Inverse class frequency per item, for class-balanced sampling.
pub fn sample_weights(labels: &[usize]) -> Vec<f64> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for l in labels {
        counts[*l] += 1;
    }
    labels.iter().map(|l| 1.0 / counts[*l] as f64).collect()
}

/// `count` indices drawn with replacement in proportion to `weights`.
pub fn weighted_sample(weights: &[f64], count: usize, rng: &mut impl Rng) -> Result<Vec<usize>, DataError> {
    let dist = WeightedIndex::new(weights).map_err(|_| DataError::Empty)?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polsar::{entropy_alpha, krogager_decompose, pauli_field, pixel_at, scm_estimate};

    fn random_tensor(shape: Vec<usize>, seed: u64) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| cn(&mut rng, 1.0))
    }

    #[test]
    fn roundtrip_is_bitwise_at_f32() {
        let t = narrow_f32(&random_tensor(vec![3, 64, 64], 1));
        let bytes = encode_cplx(&t, Some("{\"label\": 3}")).unwrap();
        let (back, meta) = decode_cplx(&bytes).unwrap();
        assert_eq!(meta.as_deref(), Some("{\"label\": 3}"));
        let bits = |t: &ComplexTensor| t.data().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&t));
        assert_eq!(back.shape(), &[3, 64, 64]);
        assert_eq!(bytes.len(), 6 + 12 + 8 * 3 * 64 * 64 + 4 + 12);
    }

    #[test]
    fn narrowing_happens_once() {
        let t = random_tensor(vec![5], 2);
        let (once, _) = decode_cplx(&encode_cplx(&t, None).unwrap()).unwrap();
        let (twice, _) = decode_cplx(&encode_cplx(&once, None).unwrap()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once, narrow_f32(&t));
    }

    #[test]
    fn empty_and_corrupt_files() {
        let empty = Tensor::new(vec![0, 4], vec![]).unwrap();
        let bytes = encode_cplx(&empty, None).unwrap();
        assert_eq!(bytes.len(), 6 + 8);
        assert_eq!(decode_cplx(&bytes).unwrap().0.shape(), &[0, 4]);

        let mut bad = encode_cplx(&random_tensor(vec![2], 3), None).unwrap();
        bad[0] = b'X';
        let e = decode_cplx(&bad).unwrap_err();
        assert!(matches!(e, DataError::BadMagic(_)));
        assert_eq!(e.code(), 11);
        let mut v2 = encode_cplx(&random_tensor(vec![2], 3), None).unwrap();
        v2[4] = 2;
        assert!(matches!(decode_cplx(&v2), Err(DataError::UnsupportedVersion(2))));
        let full = encode_cplx(&random_tensor(vec![2], 3), None).unwrap();
        assert!(matches!(decode_cplx(&full[..full.len() - 3]), Err(DataError::Truncated { .. })));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.cplx");
        let t = narrow_f32(&random_tensor(vec![2, 3], 4));
        write_cplx(&p, &t, None).unwrap();
        assert_eq!(read_cplx(&p).unwrap(), (t, None));
    }

    #[test]
    fn noiseless_sphere_is_pure_krogager_sphere() {
        let cfg = SceneConfig::new(8, 8, None, Layout::Single(Mechanism::Sphere));
        let s = gen_scene(1, &cfg).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let k = krogager_decompose(&pixel_at(&s.field, y, x));
                assert!((k.ks - 1.0).abs() < 1e-12 && k.kd < 1e-12 && k.kh < 1e-12, "{k:?}");
            }
        }
    }

    #[test]
    fn scenes_are_seed_deterministic() {
        let cfg = SceneConfig::new(16, 16, Some(4), Layout::Blocks { block: 8 });
        assert_eq!(gen_scene(5, &cfg).unwrap(), gen_scene(5, &cfg).unwrap());
        assert_ne!(gen_scene(5, &cfg).unwrap().field, gen_scene(6, &cfg).unwrap().field);
        assert!(gen_scene(5, &SceneConfig::new(16, 16, None, Layout::Blocks { block: 5 })).is_err());
    }

    #[test]
    fn labels_recoverable_from_noiseless_field() {
        let cfg = SceneConfig::new(64, 64, Some(1), Layout::Blocks { block: 8 });
        let s = gen_scene(11, &cfg).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(nearest_mechanism(&pixel_at(&s.noiseless, y, x)), s.labels[y * 64 + x]);
            }
        }
    }

    #[test]
    fn entropy_low_inside_regions_and_higher_at_boundaries() {
        let cfg = SceneConfig::new(32, 32, Some(4), Layout::Blocks { block: 16 });
        let s = gen_scene(3, &cfg).unwrap();
        let t = scm_estimate(&pauli_field(&s.field).unwrap(), 7).unwrap();
        let h = |y: usize, x: usize| entropy_alpha(&t[y * 32 + x]).unwrap().h;
        assert!(h(8, 8) < 0.3, "{}", h(8, 8));
        // Find a boundary between two different mechanisms.
        let l = |y: usize, x: usize| s.labels[y * 32 + x];
        let (y, x) = if l(8, 8) != l(8, 24) { (8, 16) } else if l(8, 8) != l(24, 8) { (16, 8) } else { (16, 16) };
        assert!(h(y, x) > h(8, 8), "{} vs {}", h(y, x), h(8, 8));
    }

    #[test]
    fn tiling_and_majority_labels() {
        let cfg = SceneConfig::new(16, 16, None, Layout::Blocks { block: 8 });
        let s = gen_scene(2, &cfg).unwrap();
        let t = tiles(&s, 8).unwrap();
        assert_eq!(t.len(), 4);
        for (i, tile) in t.iter().enumerate() {
            assert!(tile.mask.iter().all(|l| *l == tile.label));
            let (ty, tx) = (i / 2, i % 2);
            assert_eq!(tile.data.get(&[1, 3, 5]), s.field.get(&[1, ty * 8 + 3, tx * 8 + 5]));
        }
        assert!(tiles(&s, 5).is_err());
        let d = tile_dataset(1, 14, 8, Some(2)).unwrap();
        assert_eq!(d.iter().map(|t| t.label).collect::<Vec<_>>(), (0..14).map(|i| i % 7).collect::<Vec<_>>());
    }

    #[test]
    fn split_sizes_and_partition() {
        let s = split(100, [0.7, 0.15, 0.15], 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 15, 15));
        assert_eq!(s, split(100, [0.7, 0.15, 0.15], 3).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(matches!(split(0, [0.7, 0.15, 0.15], 0), Err(DataError::Empty)));
        assert!(matches!(split(5, [0.5, 0.5, 0.5], 0), Err(DataError::InvalidRatios)));
    }

    #[test]
    fn class_weights_balance_sampling() {
        let labels = [0, 0, 0, 1];
        let w = sample_weights(&labels);
        assert_eq!(w, vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = weighted_sample(&w, 20_000, &mut rng).unwrap();
        let ones = draws.iter().filter(|i| **i == 3).count() as f64 / 20_000.0;
        assert!((ones - 0.5).abs() < 0.02);
    }
}
