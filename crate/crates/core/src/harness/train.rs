//! Seeded toy training runs on synthetic scenes.
//!
//! Per-sample gradients of a minibatch are computed on scoped threads and
//! summed in sample order, so a run is bitwise reproducible regardless of
//! the thread count. Gumbel noise is drawn sequentially before the batch
//! fans out.

use std::fs::File;
use std::io::{BufWriter, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::audit::{par_map, Task};
use super::checkpoint;
use super::config::{RunConfig, Stream};
use super::metrics::{macro_f1, overall_accuracy};
use super::HarnessError;
use crate::autodiff::AdamW;
use crate::ctensor::ComplexTensor;
use crate::cvnn::{build_model, value_and_grad, Forward, Head, Model, Prediction, Sampling, Target};
use crate::dataio::{gen_scene, split, tile_dataset, tiles, Layout, SceneConfig, Split};
use crate::select::anneal;

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    Mask(Vec<usize>),
    /// The input itself.
    Signal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<ComplexTensor>,
    pub labels: Vec<Label>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn target(&self, i: usize) -> Target<'_> {
        match &self.labels[i] {
            Label::Class(c) => Target::Label(*c),
            Label::Mask(m) => Target::Mask(m),
            Label::Signal => Target::Signal(&self.inputs[i]),
        }
    }
}

/// The synthetic dataset described by `cfg.data`.
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset, HarnessError> {
    let d = &cfg.data;
    let seed = cfg.stream(Stream::Data);
    let (mut inputs, mut labels) = (Vec::new(), Vec::new());
    match cfg.task {
        Task::Classify => {
            for t in tile_dataset(seed, d.tiles, d.tile_size, d.looks)? {
                inputs.push(t.data);
                labels.push(Label::Class(t.label));
            }
        }
        Task::Segment | Task::Reconstruct => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scene_cfg = SceneConfig::new(d.scene_size, d.scene_size, d.looks, Layout::Blocks { block: d.block });
            for _ in 0..d.tiles {
                let scene = gen_scene(rand::Rng::random(&mut rng), &scene_cfg)?;
                for t in tiles(&scene, d.tile_size)? {
                    inputs.push(t.data);
                    labels.push(match cfg.task {
                        Task::Segment => Label::Mask(t.mask),
                        _ => Label::Signal,
                    });
                }
            }
        }
    }
    Ok(Dataset { inputs, labels })
}

/// Scores on a subset; classification fields for label tasks, `mse` for
/// reconstruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub oa: Option<f64>,
    pub f1: Option<f64>,
    pub mse: Option<f64>,
}

pub fn evaluate(model: &Model, data: &Dataset, idx: &[usize]) -> Result<Evaluation, HarnessError> {
    if idx.is_empty() {
        return Ok(Evaluation::default());
    }
    let preds = par_map(idx, |&i| model.predict(&data.inputs[i]));
    let preds = preds.into_iter().collect::<Result<Vec<_>, _>>()?;
    match &model.spec.head {
        Head::Classify { classes } | Head::Segment { classes } => {
            let (mut p, mut l) = (Vec::new(), Vec::new());
            for (pred, &i) in preds.into_iter().zip(idx) {
                match (pred, &data.labels[i]) {
                    (Prediction::Class(c), Label::Class(t)) => {
                        p.push(c);
                        l.push(*t);
                    }
                    (Prediction::Mask(m), Label::Mask(t)) => {
                        p.extend(m);
                        l.extend(t);
                    }
                    _ => return Err(HarnessError::Metric("labels do not match the model head".into())),
                }
            }
            Ok(Evaluation {
                oa: Some(overall_accuracy(&p, &l)?),
                f1: Some(macro_f1(&p, &l, *classes)?),
                mse: None,
            })
        }
        Head::Reconstruct => {
            let mut total = 0.0;
            for (pred, &i) in preds.into_iter().zip(idx) {
                let Prediction::Signal(out) = pred else {
                    return Err(HarnessError::Metric("expected a signal".into()));
                };
                total += super::metrics::mse(out.data(), data.inputs[i].data())?;
            }
            Ok(Evaluation {
                oa: None,
                f1: None,
                mse: Some(total / idx.len() as f64),
            })
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub epoch: usize,
    pub loss: f64,
    pub temperature: f64,
    pub val: Evaluation,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub split: Split,
    pub test: Evaluation,
}

/// Builds the dataset, trains, and writes the log and checkpoint named in
/// `cfg.paths`.
pub fn train(cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    let data = build_dataset(cfg)?;
    for p in [&cfg.paths.log, &cfg.paths.checkpoint].into_iter().flatten() {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut log_file = match &cfg.paths.log {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let mut write_err = None;
    let summary = train_on(cfg, &data, |rec| {
        if let Some(f) = log_file.as_mut() {
            let line = serde_json::to_string(rec).expect("record serialises");
            if let Err(e) = writeln!(f, "{line}") {
                write_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(mut f) = log_file {
        f.flush()?;
    }
    if let Some(p) = &cfg.paths.checkpoint {
        checkpoint::save(&summary.model, cfg.stream(Stream::Init), p)?;
    }
    Ok(summary)
}

/// Trains on `data`, calling `on_epoch` after each epoch.
pub fn train_on(
    cfg: &RunConfig,
    data: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let mut model = build_model(&cfg.model, cfg.stream(Stream::Init))?;
    let parts = split(data.len(), cfg.data.ratios, cfg.stream(Stream::Split))?;
    if parts.train.is_empty() {
        return Err(HarnessError::Config("training split is empty".into()));
    }
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.stream(Stream::Shuffle));
    let mut gumbel = ChaCha8Rng::seed_from_u64(cfg.stream(Stream::Gumbel));
    let mut opt = AdamW::new(cfg.optimizer);
    let learned = matches!(cfg.model.sampling, Sampling::Lps { .. });
    let mut order = parts.train.clone();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let temperature = anneal(&cfg.schedule, epoch);
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let jobs: Vec<(usize, Forward)> = batch
                .iter()
                .map(|&i| {
                    let fwd = if learned {
                        Forward::train(temperature, model.draw_noise(&mut gumbel))
                    } else {
                        Forward::eval()
                    };
                    (i, fwd)
                })
                .collect();
            let m = &model;
            let results = par_map(&jobs, |(i, fwd)| {
                value_and_grad(&m.params, |rec| m.loss(rec, &data.inputs[*i], data.target(*i), fwd))
            });
            let mut grad = vec![0.0; model.params.scalar_count()];
            let mut batch_loss = 0.0;
            for r in results {
                let (v, g) = r?;
                batch_loss += v;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(HarnessError::NonFinite { epoch, batch: batch_no });
            }
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            model.params.zero_grad();
            model.params.add_flat_grads(&grad);
            opt.step(&mut model.params);
            epoch_loss += batch_loss;
        }
        let rec = EpochRecord {
            seed: cfg.seed,
            epoch,
            loss: epoch_loss / order.len() as f64,
            temperature,
            val: evaluate(&model, data, &parts.val)?,
        };
        on_epoch(&rec);
        log.push(rec);
    }
    let test = evaluate(&model, data, &parts.test)?;
    Ok(RunSummary {
        model,
        log,
        split: parts,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(task: Task) -> RunConfig {
        let mut cfg = RunConfig::defaults(task);
        cfg.epochs = 3;
        cfg.data.tiles = 28;
        cfg.model.channels = 4;
        cfg.model.depth = 1;
        cfg.data.tile_size = 4;
        cfg.data.scene_size = 8;
        cfg.data.block = 4;
        cfg.seed = 3;
        cfg
    }

    #[test]
    fn datasets() {
        let c = build_dataset(&small(Task::Classify)).unwrap();
        assert_eq!(c.len(), 28);
        let s = build_dataset(&small(Task::Segment)).unwrap();
        assert_eq!(s.len(), 28 * 4);
        assert!(matches!(&s.labels[0], Label::Mask(m) if m.len() == 16));
    }

    #[test]
    fn deterministic_runs() {
        for task in [Task::Classify, Task::Segment, Task::Reconstruct] {
            let cfg = small(task);
            let data = build_dataset(&cfg).unwrap();
            let a = train_on(&cfg, &data, |_| {}).unwrap();
            let b = train_on(&cfg, &data, |_| {}).unwrap();
            assert_eq!(a.log, b.log);
            assert_eq!(a.model.params, b.model.params);
            assert!(a.log.iter().all(|r| r.loss.is_finite() && r.seed == 3));
        }
    }

    #[test]
    fn loss_decreases() {
        let mut cfg = small(Task::Classify);
        cfg.epochs = 5;
        cfg.optimizer.lr = 1e-2;
        let data = build_dataset(&cfg).unwrap();
        let run = train_on(&cfg, &data, |_| {}).unwrap();
        assert!(run.log[4].loss < run.log[0].loss, "{:?}", run.log);
    }

    #[test]
    fn writes_log_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Task::Classify);
        cfg.paths.log = Some(dir.path().join("log.jsonl"));
        cfg.paths.checkpoint = Some(dir.path().join("model.cplx"));
        let run = train(&cfg).unwrap();
        let text = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 3);
        let first: EpochRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first, run.log[0]);
        let loaded = checkpoint::load(dir.path().join("model.cplx")).unwrap();
        assert_eq!(loaded.spec, run.model.spec);
    }
}
