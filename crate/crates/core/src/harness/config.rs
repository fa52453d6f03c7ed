//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. Unknown and repeated keys are errors. Defaults
//! depend on `task`, so it is resolved before every other key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::audit::Task;
use super::HarnessError;
use crate::autodiff::AdamWConfig;
use crate::cvnn::{Head, ModelSpec, Representation, Sampling};
use crate::select::{ProjectionKind, TemperatureSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Classification: number of single-mechanism tiles. Dense tasks:
    /// number of block scenes.
    pub tiles: usize,
    pub tile_size: usize,
    /// Speckle looks; `None` gives noiseless scenes.
    pub looks: Option<usize>,
    /// Side of the block scenes used by dense tasks.
    pub scene_size: usize,
    pub block: usize,
    pub ratios: [f64; 3],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub model: ModelSpec,
    pub schedule: TemperatureSchedule,
    pub data: DataConfig,
    pub paths: Paths,
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "task",
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "weight_decay",
    "model.sampling",
    "model.representation",
    "model.depth",
    "model.channels",
    "model.kernel",
    "model.factor",
    "model.classes",
    "model.selector_kernel",
    "model.lowpass_after_pu",
    "projection.kind",
    "projection.M",
    "projection.mlp_widths",
    "gumbel.initial",
    "gumbel.gamma",
    "gumbel.min",
    "gumbel.step",
    "data.tiles",
    "data.tile_size",
    "data.looks",
    "data.scene_size",
    "data.block",
    "data.ratios",
    "paths.out",
    "paths.log",
    "paths.checkpoint",
];

impl RunConfig {
    /// Defaults for `task`.
    pub fn defaults(task: Task) -> Self {
        let lps = Sampling::Lps {
            projection: ProjectionKind::PolyDec { order: 2 },
        };
        let epochs = 20;
        let (model, optimizer, schedule) = match task {
            Task::Classify => (
                ModelSpec {
                    depth: 2,
                    channels: 8,
                    ..ModelSpec::classifier(3, 7, lps)
                },
                AdamWConfig {
                    lr: 1e-2,
                    ..AdamWConfig::classification()
                },
                TemperatureSchedule::classification(),
            ),
            Task::Segment => (
                ModelSpec {
                    channels: 8,
                    head: Head::Segment { classes: 7 },
                    ..ModelSpec::autoencoder(3, lps)
                },
                AdamWConfig::segmentation(),
                TemperatureSchedule::classification(),
            ),
            Task::Reconstruct => (
                ModelSpec {
                    channels: 8,
                    ..ModelSpec::autoencoder(3, lps)
                },
                AdamWConfig::reconstruction(),
                TemperatureSchedule::reconstruction(epochs),
            ),
        };
        Self {
            task,
            seed: 0,
            epochs,
            batch_size: 16,
            optimizer,
            model,
            schedule,
            data: DataConfig {
                tiles: 140,
                tile_size: 8,
                looks: Some(4),
                scene_size: 32,
                block: 8,
                ratios: [0.7, 0.15, 0.15],
            },
            paths: Paths::default(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(HarnessError::Config(format!("line {}: unknown key {k:?}", n + 1)));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(HarnessError::Config(format!("line {}: repeated key {k:?}", n + 1)));
            }
        }
        Self::from_map(&kv)
    }

    fn from_map(kv: &BTreeMap<String, String>) -> Result<Self, HarnessError> {
        let get = |k: &str| kv.get(k).map(String::as_str);
        let task = Task::parse(get("task").unwrap_or("classify"))?;
        let mut cfg = Self::defaults(task);

        if let Some(v) = get("seed") {
            cfg.seed = num(v, "seed")?;
        }
        if let Some(v) = get("epochs") {
            cfg.epochs = num(v, "epochs")?;
            if task == Task::Reconstruct {
                cfg.schedule = TemperatureSchedule::reconstruction(cfg.epochs);
            }
        }
        if let Some(v) = get("batch_size") {
            cfg.batch_size = num(v, "batch_size")?;
        }
        if let Some(v) = get("lr") {
            cfg.optimizer.lr = num(v, "lr")?;
        }
        if let Some(v) = get("weight_decay") {
            cfg.optimizer.weight_decay = num(v, "weight_decay")?;
        }

        let m = &mut cfg.model;
        if let Some(v) = get("model.depth") {
            m.depth = num(v, "model.depth")?;
        }
        if let Some(v) = get("model.channels") {
            m.channels = num(v, "model.channels")?;
        }
        if let Some(v) = get("model.kernel") {
            m.kernel = num(v, "model.kernel")?;
        }
        if let Some(v) = get("model.factor") {
            m.factor = num(v, "model.factor")?;
        }
        if let Some(v) = get("model.selector_kernel") {
            m.selector_kernel = num(v, "model.selector_kernel")?;
        }
        if let Some(v) = get("model.lowpass_after_pu") {
            m.lowpass_after_pu = num(v, "model.lowpass_after_pu")?;
        }
        if let Some(v) = get("model.classes") {
            let c = num(v, "model.classes")?;
            m.head = match m.head {
                Head::Classify { .. } => Head::Classify { classes: c },
                Head::Segment { .. } => Head::Segment { classes: c },
                Head::Reconstruct => return Err(HarnessError::Config("model.classes is meaningless for reconstruct".into())),
            };
        }
        if let Some(v) = get("model.representation") {
            m.representation = match v {
                "complex" => Representation::Complex,
                "dual_real" => Representation::DualReal,
                o => return Err(HarnessError::Config(format!("unknown representation {o:?}"))),
            };
        }
        let projection_keys = ["projection.kind", "projection.M", "projection.mlp_widths"];
        let current_kind = match &m.sampling {
            Sampling::Lps { projection } => projection.name(),
            _ => "polydec",
        };
        let projection = if projection_keys.iter().any(|k| kv.contains_key(*k)) || matches!(m.sampling, Sampling::Lps { .. }) {
            let order = get("projection.M").map(|v| num(v, "projection.M")).transpose()?;
            let widths = get("projection.mlp_widths").map(list::<usize>).transpose()?;
            Some(ProjectionKind::from_config(
                get("projection.kind").unwrap_or(current_kind),
                order,
                widths.as_deref(),
            )?)
        } else {
            None
        };
        if let Some(v) = get("model.sampling") {
            m.sampling = match v {
                "strided" => Sampling::Strided,
                "lpf" => Sampling::Lpf,
                "aps" => Sampling::Aps,
                "lps" => Sampling::Lps {
                    projection: projection.clone().unwrap_or(ProjectionKind::PolyDec { order: 2 }),
                },
                o => return Err(HarnessError::Config(format!("unknown sampling {o:?}"))),
            };
        } else if let (Sampling::Lps { .. }, Some(p)) = (&m.sampling, projection) {
            m.sampling = Sampling::Lps { projection: p };
        }

        let s = &mut cfg.schedule;
        if let Some(v) = get("gumbel.initial") {
            s.initial = num(v, "gumbel.initial")?;
        }
        if let Some(v) = get("gumbel.gamma") {
            s.gamma = num(v, "gumbel.gamma")?;
        }
        if let Some(v) = get("gumbel.min") {
            s.minimum = num(v, "gumbel.min")?;
        }
        if let Some(v) = get("gumbel.step") {
            s.step = num(v, "gumbel.step")?;
        }

        let d = &mut cfg.data;
        if let Some(v) = get("data.tiles") {
            d.tiles = num(v, "data.tiles")?;
        }
        if let Some(v) = get("data.tile_size") {
            d.tile_size = num(v, "data.tile_size")?;
        }
        if let Some(v) = get("data.looks") {
            d.looks = match v {
                "none" => None,
                v => Some(num(v, "data.looks")?),
            };
        }
        if let Some(v) = get("data.scene_size") {
            d.scene_size = num(v, "data.scene_size")?;
        }
        if let Some(v) = get("data.block") {
            d.block = num(v, "data.block")?;
        }
        if let Some(v) = get("data.ratios") {
            let r: Vec<f64> = list(v)?;
            d.ratios = r
                .try_into()
                .map_err(|_| HarnessError::Config("data.ratios needs three values".into()))?;
        }

        // An output directory supplies default log and checkpoint paths.
        cfg.paths.out = get("paths.out").map(PathBuf::from);
        let under = |name: &str| cfg.paths.out.as_ref().map(|d| d.join(name));
        cfg.paths.log = get("paths.log").map(PathBuf::from).or_else(|| under("metrics.jsonl"));
        cfg.paths.checkpoint = get("paths.checkpoint").map(PathBuf::from).or_else(|| under("model.cplx"));

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if Task::of(&self.model.head) != self.task {
            return bad("model head does not match task");
        }
        self.model.validate()?;
        self.schedule.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.optimizer.lr > 0.0) || !(self.optimizer.weight_decay >= 0.0) {
            return bad("lr must be positive and weight_decay non-negative");
        }
        let d = &self.data;
        if d.tiles == 0 || d.looks == Some(0) {
            return bad("data.tiles and data.looks must be positive");
        }
        if d.tile_size == 0 || d.tile_size % self.model.granularity() != 0 {
            return bad("data.tile_size must be a positive multiple of factor^depth");
        }
        if self.task != Task::Classify && (d.scene_size % d.tile_size != 0 || d.block == 0) {
            return bad("data.scene_size must be a multiple of data.tile_size, data.block positive");
        }
        if self.model.dims != 2 || self.model.in_channels != 3 {
            return bad("synthetic scenes need a 2-D model with 3 input channels");
        }
        Ok(())
    }

    /// Seed of an independent stream derived from the run seed.
    pub fn stream(&self, which: Stream) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(which as u64 + 1)
    }
}

/// Random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Data,
    Split,
    Shuffle,
    Gumbel,
}

fn num<T: FromStr>(v: &str, key: &str) -> Result<T, HarnessError> {
    v.parse()
        .map_err(|_| HarnessError::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>, HarnessError> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("cannot parse list {v:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::defaults(Task::Classify));
        let cfg = RunConfig::parse(
            "task = reconstruct  # toy AE\nepochs = 9\nmodel.sampling = lps\nprojection.kind = mlp\nprojection.mlp_widths = 4, 4\ndata.looks = none\n",
        )
        .unwrap();
        assert_eq!(cfg.schedule.step, 3);
        assert_eq!(cfg.optimizer, AdamWConfig::reconstruction());
        assert_eq!(cfg.model.head, Head::Reconstruct);
        assert_eq!(
            cfg.model.sampling,
            Sampling::Lps {
                projection: ProjectionKind::Mlp { hidden: vec![4, 4] }
            }
        );
        assert_eq!(cfg.data.looks, None);
        let cfg = RunConfig::parse("projection.kind = polydec\nprojection.M = 3").unwrap();
        assert_eq!(
            cfg.model.sampling,
            Sampling::Lps {
                projection: ProjectionKind::PolyDec { order: 3 }
            }
        );
        let cfg = RunConfig::parse("model.sampling = aps\ntask = segment\nmodel.classes = 4").unwrap();
        assert_eq!(cfg.model.sampling, Sampling::Aps);
        assert_eq!(cfg.model.head, Head::Segment { classes: 4 });
        let cfg = RunConfig::parse("paths.out = runs/a\npaths.log = l.jsonl").unwrap();
        assert_eq!(cfg.paths.log, Some(PathBuf::from("l.jsonl")));
        assert_eq!(cfg.paths.checkpoint, Some(PathBuf::from("runs/a/model.cplx")));
    }

    #[test]
    fn rejects() {
        for text in [
            "colour = blue",
            "seed = 1\nseed = 2",
            "seed",
            "task = dance",
            "epochs = -1",
            "epochs = 0",
            "model.kernel = 4",
            "data.tile_size = 6",
            "model.sampling = fancy",
            "projection.kind = magic",
            "gumbel.min = 0",
            "data.ratios = 0.5, 0.5",
            "task = reconstruct\nmodel.classes = 3",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(HarnessError::Config(_) | HarnessError::Model(_) | HarnessError::Select(_))), "{text}");
        }
    }

    #[test]
    fn streams_differ() {
        let cfg = RunConfig::defaults(Task::Classify);
        let s: Vec<u64> = [Stream::Init, Stream::Data, Stream::Split, Stream::Shuffle, Stream::Gumbel]
            .iter()
            .map(|w| cfg.stream(*w))
            .collect();
        for i in 0..s.len() {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
    }
}
