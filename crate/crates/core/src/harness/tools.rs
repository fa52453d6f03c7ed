//! Backends of the `gumbel-check`, `gradcheck`, `decompose` and `gen-data`
//! subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::HarnessError;
use crate::autodiff::backend::cparam;
use crate::autodiff::{gradcheck, Backend, GradcheckReport, ParamKind, ParamRole, ParamSet, Record};
use crate::ctensor::{ComplexTensor, Tensor, C64};
use crate::cvnn::{build_model, Forward, Head, ModRelu, ModelSpec, Representation, Sampling, Target};
use crate::dataio::{gen_scene, tile_dataset, write_cplx, Layout, SceneConfig};
use crate::polsar::{
    cameron_classify, composite_rgb, entropy_alpha, halpha_classify, krogager_rgb_channels, pauli_field,
    pauli_rgb_channels, pixel_at, scm_estimate, CameronConfig, HAlphaBoundaries,
};
use crate::polyphase::argmax;
use crate::select::{gumbel_cdf, gumbel_sample, Projection, ProjectionKind};

// ---- Gumbel ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GumbelCheck {
    pub probs: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub max_deviation: f64,
    /// Sup distance between the empirical CDF of raw Gumbel draws and
    /// `exp(−exp(−z))`.
    pub ks: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Argmax frequencies of `log π + g` over `samples` draws.
pub fn gumbel_frequencies(probs: &[f64], samples: usize, rng: &mut impl Rng) -> Result<Vec<f64>, HarnessError> {
    if probs.is_empty() || probs.iter().any(|p| !(*p > 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(HarnessError::Config("probabilities must be positive and sum to 1".into()));
    }
    if samples == 0 {
        return Err(HarnessError::Config("need at least one sample".into()));
    }
    let logits: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let mut counts = vec![0usize; probs.len()];
    let mut perturbed = vec![0.0; probs.len()];
    for _ in 0..samples {
        for (y, l) in perturbed.iter_mut().zip(&logits) {
            *y = l + gumbel_sample(rng);
        }
        counts[argmax(&perturbed)] += 1;
    }
    Ok(counts.iter().map(|c| *c as f64 / samples as f64).collect())
}

pub fn gumbel_ks(samples: usize, rng: &mut impl Rng) -> f64 {
    let mut xs: Vec<f64> = (0..samples).map(|_| gumbel_sample(rng)).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = gumbel_cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn gumbel_check(probs: &[f64], samples: usize, seed: u64, tolerance: f64) -> Result<GumbelCheck, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frequencies = gumbel_frequencies(probs, samples, &mut rng)?;
    let ks = gumbel_ks(samples, &mut rng);
    let max_deviation = frequencies
        .iter()
        .zip(probs)
        .map(|(f, p)| (f - p).abs())
        .fold(0.0, f64::max);
    Ok(GumbelCheck {
        probs: probs.to_vec(),
        frequencies,
        max_deviation,
        ks,
        samples,
        tolerance,
        passed: max_deviation <= tolerance && ks <= tolerance,
    })
}

// ---- gradient checks ------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    PolyDec,
    Mlp,
    ModRelu,
    Net,
}

impl GradTarget {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "polydec" => Ok(Self::PolyDec),
            "mlp" => Ok(Self::Mlp),
            "modrelu" => Ok(Self::ModRelu),
            "net" => Ok(Self::Net),
            o => Err(HarnessError::Config(format!("unknown gradcheck target {o:?}"))),
        }
    }
}

pub const GRAD_STEP: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

fn random_c64(rng: &mut impl Rng, n: usize) -> Vec<C64> {
    let d = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n).map(|_| C64::new(d.sample(rng), d.sample(rng))).collect()
}

/// `Σ w_k s_k + ½ Σ s_k²`: sensitive to every score, including shared
/// offsets that a softmax would cancel.
fn probe_loss<B: Backend>(b: &mut B, s: &[B::R], w: &[f64]) -> B::R {
    let terms: Vec<(f64, B::R)> = w.iter().copied().zip(s.iter().copied()).collect();
    let lin = b.lincomb(&terms, 0.0);
    let sq: Vec<(f64, B::R, B::R)> = s.iter().map(|v| (0.5, *v, *v)).collect();
    b.signed_dot(&sq, Some(lin))
}

fn projection_check(kind: ProjectionKind, seed: u64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let proj = match kind {
        // Random coefficients exercise every monomial.
        ProjectionKind::PolyDec { order } => {
            let d = Normal::new(0.0, 1.0).expect("unit normal");
            let theta = (0..crate::select::polydec_terms(order)).map(|_| d.sample(&mut rng)).collect();
            Projection::with_polydec(&mut params, "proj", order, theta, 0.3)
        }
        k => {
            let p = Projection::init(&mut params, "proj", k, &mut rng);
            // Zero biases put a dead unit's successor exactly on the ReLU
            // kink, where finite differences are meaningless.
            for b in params.iter_mut().filter(|b| b.name.ends_with("bias")) {
                b.value.iter_mut().for_each(|v| *v = rng.random_range(0.1..0.5));
            }
            p
        }
    };
    // The logits are parameters too, so input gradients are checked.
    let z = params.add("logits", vec![4], ParamKind::Complex, ParamRole::Selector, random_c64(&mut rng, 4).iter().flat_map(|c| [c.re, c.im]).collect());
    let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    gradcheck(
        &params,
        |tape, bound| {
            let mut b = Record::new(tape, bound);
            let logits: Vec<_> = (0..4).map(|i| cparam(&b, z, i)).collect();
            let s = proj.forward(&mut b, &logits)?;
            Ok::<_, HarnessError>(probe_loss(&mut b, &s, &w))
        },
        GRAD_STEP,
        GRAD_TOL,
    )
}

fn modrelu_check(seed: u64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let act = ModRelu::init(&mut params, "act", 2, 0.0);
    params.get_mut(act.bias).value = vec![-0.4, 0.25];
    let x = params.add("x", vec![2, 6], ParamKind::Complex, ParamRole::Weight, random_c64(&mut rng, 12).iter().flat_map(|c| [c.re, c.im]).collect());
    let w: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
    gradcheck(
        &params,
        |tape, bound| {
            let mut b = Record::new(tape, bound);
            let xs: Vec<_> = (0..12).map(|i| cparam(&b, x, i)).collect();
            let y = act.forward(&mut b, &Tensor::new(vec![2, 6], xs)?)?;
            let parts: Vec<_> = y.data().iter().flat_map(|z| [z.re, z.im]).collect();
            Ok::<_, HarnessError>(probe_loss(&mut b, &parts, &w))
        },
        GRAD_STEP,
        GRAD_TOL,
    )
}

fn net_check(head: Head, seed: u64) -> Result<GradcheckReport, HarnessError> {
    let spec = ModelSpec {
        in_channels: 2,
        dims: 2,
        depth: 2,
        channels: 3,
        kernel: 3,
        factor: 2,
        head,
        sampling: Sampling::Lps {
            projection: ProjectionKind::PolyDec { order: 2 },
        },
        representation: Representation::Complex,
        lowpass_after_pu: false,
        selector_kernel: 3,
    };
    let model = build_model(&spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x = Tensor::new(vec![2, 4, 4], random_c64(&mut rng, 32))?;
    Ok(gradcheck(
        &model.params,
        |tape, bound| {
            let mut rec = Record::new(tape, bound);
            let t = match spec.head {
                Head::Reconstruct => Target::Signal(&x),
                _ => Target::Label(1),
            };
            model.loss(&mut rec, &x, t, &Forward::eval())
        },
        GRAD_STEP,
        GRAD_TOL,
    ))
}

/// Named gradient checks for `target`; every report must pass.
pub fn gradcheck_target(target: GradTarget, seed: u64) -> Result<Vec<(String, GradcheckReport)>, HarnessError> {
    Ok(match target {
        GradTarget::PolyDec => (1..=3)
            .map(|m| (format!("polydec M={m}"), projection_check(ProjectionKind::PolyDec { order: m }, seed)))
            .collect(),
        GradTarget::Mlp => [vec![8], vec![4, 3]]
            .into_iter()
            .map(|h| (format!("mlp {h:?}"), projection_check(ProjectionKind::Mlp { hidden: h }, seed)))
            .collect(),
        GradTarget::ModRelu => vec![("modrelu".into(), modrelu_check(seed))],
        GradTarget::Net => vec![
            ("net classify".into(), net_check(Head::Classify { classes: 3 }, seed)?),
            ("net reconstruct".into(), net_check(Head::Reconstruct, seed)?),
        ],
    })
}

// ---- decompositions -------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pauli,
    Krogager,
    Cameron,
    HAlpha,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "pauli" => Ok(Self::Pauli),
            "krogager" => Ok(Self::Krogager),
            "cameron" => Ok(Self::Cameron),
            "halpha" => Ok(Self::HAlpha),
            o => Err(HarnessError::Config(format!("unknown method {o:?}"))),
        }
    }
}

/// Per-pixel result of a decomposition, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub method: Method,
    pub height: usize,
    pub width: usize,
    /// Pauli/Krogager channel powers (R, G, B).
    pub channels: Option<[Vec<f64>; 3]>,
    /// Cameron class index or H–α zone per pixel.
    pub classes: Option<Vec<u8>>,
    pub entropy: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    /// Interleaved 8-bit RGB rendering.
    #[serde(skip)]
    pub rgb: Vec<u8>,
}

impl Decomposition {
    /// Means of the RGB rendering, per channel.
    pub fn rgb_means(&self) -> [f64; 3] {
        let n = (self.rgb.len() / 3).max(1) as f64;
        let mut m = [0.0; 3];
        for px in self.rgb.chunks(3) {
            for (a, v) in m.iter_mut().zip(px) {
                *a += *v as f64 / n;
            }
        }
        m
    }

    /// Pixel count per class index.
    pub fn histogram(&self) -> Vec<usize> {
        let Some(c) = &self.classes else { return Vec::new() };
        let mut h = vec![0; c.iter().copied().max().map_or(0, |m| m as usize + 1)];
        for v in c {
            h[*v as usize] += 1;
        }
        h
    }
}

const PALETTE: [[u8; 3]; 12] = [
    [128, 128, 128],
    [255, 128, 0],
    [0, 200, 200],
    [200, 0, 200],
    [255, 255, 255],
    [0, 0, 255],
    [255, 0, 0],
    [0, 255, 0],
    [255, 255, 0],
    [128, 0, 0],
    [0, 128, 128],
    [0, 0, 0],
];

fn paint(classes: &[u8]) -> Vec<u8> {
    classes.iter().flat_map(|c| PALETTE[*c as usize % PALETTE.len()]).collect()
}

/// Decomposes a `(HH, HV, VV)` field; `window` only affects H–α.
pub fn decompose_field(field: &ComplexTensor, method: Method, window: usize) -> Result<Decomposition, HarnessError> {
    let (h, w) = match field.shape() {
        [3, h, w] => (*h, *w),
        s => return Err(HarnessError::Config(format!("expected a [3, H, W] field, got {s:?}"))),
    };
    let mut d = Decomposition {
        method,
        height: h,
        width: w,
        channels: None,
        classes: None,
        entropy: None,
        alpha: None,
        rgb: Vec::new(),
    };
    match method {
        Method::Pauli | Method::Krogager => {
            let ch = if method == Method::Pauli {
                pauli_rgb_channels(field)?
            } else {
                krogager_rgb_channels(field)?
            };
            d.rgb = composite_rgb(&ch, 98.0);
            d.channels = Some(ch);
        }
        Method::Cameron => {
            let cfg = CameronConfig::default();
            let classes: Vec<u8> = (0..h * w)
                .map(|i| cameron_classify(&pixel_at(field, i / w, i % w), &cfg).index() as u8)
                .collect();
            d.rgb = paint(&classes);
            d.classes = Some(classes);
        }
        Method::HAlpha => {
            let scm = scm_estimate(&pauli_field(field)?, window)?;
            let bounds = HAlphaBoundaries::default();
            let (mut hs, mut al, mut zs) = (Vec::new(), Vec::new(), Vec::new());
            for t in &scm {
                let pt = entropy_alpha(t)?;
                zs.push(halpha_classify(&pt, &bounds).zone);
                hs.push(pt.h);
                al.push(pt.alpha);
            }
            d.rgb = paint(&zs);
            d.classes = Some(zs);
            d.entropy = Some(hs);
            d.alpha = Some(al);
        }
    }
    Ok(d)
}

// ---- synthetic data -------------------------------------------------------

/// Writes a block scene with its label map and a classification tile set
/// into `out`; returns the written paths.
pub fn generate_dataset(seed: u64, out: impl AsRef<Path>) -> Result<Vec<PathBuf>, HarnessError> {
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::new();

    let cfg = SceneConfig::new(64, 64, Some(4), Layout::Blocks { block: 16 });
    let scene = gen_scene(rng.random(), &cfg)?;
    let meta = serde_json::json!({ "seed": seed, "kind": "scene", "config": cfg });
    let p = out.join("scene.cplx");
    write_cplx(&p, &scene.field, Some(&meta.to_string()))?;
    written.push(p);
    let p = out.join("scene_labels.json");
    fs::write(&p, serde_json::to_string(&scene.labels)?)?;
    written.push(p);

    let tiles = tile_dataset(rng.random(), 140, 16, Some(4))?;
    let parts: Vec<ComplexTensor> = tiles.iter().map(|t| t.data.clone()).collect();
    let stacked = Tensor::stack(&parts)?;
    let labels: Vec<usize> = tiles.iter().map(|t| t.label).collect();
    let meta = serde_json::json!({ "seed": seed, "kind": "tiles", "labels": labels });
    let p = out.join("tiles.cplx");
    write_cplx(&p, &stacked, Some(&meta.to_string()))?;
    written.push(p);
    Ok(written)
}
