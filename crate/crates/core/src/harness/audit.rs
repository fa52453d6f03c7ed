//! Circular-shift consistency audits.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::ctensor::{shift_spatial, ComplexTensor, Tensor};
use crate::cvnn::{Head, Model, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Segment,
    Reconstruct,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "classify" => Ok(Task::Classify),
            "segment" => Ok(Task::Segment),
            "reconstruct" => Ok(Task::Reconstruct),
            other => Err(HarnessError::Config(format!("unknown task {other:?}"))),
        }
    }

    pub fn of(head: &Head) -> Self {
        match head {
            Head::Classify { .. } => Task::Classify,
            Head::Segment { .. } => Task::Segment,
            Head::Reconstruct => Task::Reconstruct,
        }
    }
}

/// `"lo..hi"` (inclusive) or a single amount.
pub fn parse_shift_range(s: &str) -> Result<(i64, i64), HarnessError> {
    let bad = || HarnessError::Config(format!("bad shift range {s:?}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().trim_start_matches('=').parse().map_err(|_| bad())?),
        None => {
            let v = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Every combination of per-axis amounts in `lo..=hi`.
pub fn shift_set(dims: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (lo..=hi).map(move |a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Order-preserving parallel map over scoped threads.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<U>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftAgreement {
    pub shift: Vec<i64>,
    /// Agreement in percent, or mean ℓ2 deviation for reconstruction.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub model_id: String,
    pub task: Task,
    pub inputs: usize,
    pub per_shift: Vec<ShiftAgreement>,
    /// Circular-shift consistency in percent (classification, segmentation).
    pub crs: Option<f64>,
    /// Mean ℓ2 deviation (reconstruction).
    pub deviation: Option<f64>,
    /// Lowest per-shift agreement, or largest single ℓ2 deviation.
    pub worst: f64,
    pub passed: bool,
}

/// Largest ℓ2 deviation accepted as exact equivariance.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-9;

impl AuditReport {
    pub fn table(&self) -> String {
        let mut s = format!("audit {} ({:?}, {} inputs)\n", self.model_id, self.task, self.inputs);
        s.push_str("shift        value\n");
        for a in &self.per_shift {
            s.push_str(&format!("{:<12} {:.6e}\n", format!("{:?}", a.shift), a.value));
        }
        if let Some(c) = self.crs {
            s.push_str(&format!("Cr.S = {c:.4}%  worst shift = {:.4}%\n", self.worst));
        }
        if let Some(d) = self.deviation {
            s.push_str(&format!("mean l2 = {d:.3e}  worst = {:.3e}\n", self.worst));
        }
        s.push_str(if self.passed { "PASS\n" } else { "FAIL\n" });
        s
    }

    pub fn machine(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}---\n{}", self.table(), self.machine())
    }
}

fn shifted(x: &ComplexTensor, s: &[i64]) -> Result<ComplexTensor, HarnessError> {
    Ok(shift_spatial(x, s)?)
}

/// Fraction (%) of `(input, shift)` pairs whose predicted class matches the
/// unshifted prediction.
pub fn crs_classify_with<F>(predict: F, inputs: &[ComplexTensor], shifts: &[Vec<i64>], model_id: &str) -> Result<AuditReport, HarnessError>
where
    F: Fn(&ComplexTensor) -> Result<usize, HarnessError> + Sync,
{
    let rows = par_map(inputs, |x| -> Result<Vec<bool>, HarnessError> {
        let base = predict(x)?;
        shifts.iter().map(|s| Ok(predict(&shifted(x, s)?)? == base)).collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let per_shift: Vec<ShiftAgreement> = shifts
        .iter()
        .enumerate()
        .map(|(j, s)| ShiftAgreement {
            shift: s.clone(),
            value: 100.0 * rows.iter().filter(|r| r[j]).count() as f64 / rows.len().max(1) as f64,
        })
        .collect();
    let hits: usize = rows.iter().map(|r| r.iter().filter(|b| **b).count()).sum();
    let total = rows.len() * shifts.len();
    let crs = 100.0 * hits as f64 / total.max(1) as f64;
    Ok(AuditReport {
        model_id: model_id.to_string(),
        task: Task::Classify,
        inputs: inputs.len(),
        worst: per_shift.iter().map(|a| a.value).fold(100.0, f64::min),
        per_shift,
        crs: Some(crs),
        deviation: None,
        passed: hits == total,
    })
}

/// Mean per-pixel agreement (%) between `mask(shift(x))` and `shift(mask(x))`.
pub fn crs_segment_with<F>(predict: F, inputs: &[ComplexTensor], shifts: &[Vec<i64>], model_id: &str) -> Result<AuditReport, HarnessError>
where
    F: Fn(&ComplexTensor) -> Result<Vec<usize>, HarnessError> + Sync,
{
    let rows = par_map(inputs, |x| -> Result<Vec<f64>, HarnessError> {
        let spatial = x.shape()[1..].to_vec();
        let base = Tensor::new(spatial, predict(x)?)?;
        shifts
            .iter()
            .map(|s| {
                let want = shift_spatial(&base, s)?;
                let got = predict(&shifted(x, s)?)?;
                let same = got.iter().zip(want.data()).filter(|(a, b)| a == b).count();
                Ok(100.0 * same as f64 / got.len() as f64)
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let per_shift: Vec<ShiftAgreement> = shifts
        .iter()
        .enumerate()
        .map(|(j, s)| ShiftAgreement {
            shift: s.clone(),
            value: rows.iter().map(|r| r[j]).sum::<f64>() / rows.len().max(1) as f64,
        })
        .collect();
    let crs = per_shift.iter().map(|a| a.value).sum::<f64>() / per_shift.len().max(1) as f64;
    let exact = rows.iter().flatten().all(|v| *v == 100.0);
    Ok(AuditReport {
        model_id: model_id.to_string(),
        task: Task::Segment,
        inputs: inputs.len(),
        worst: per_shift.iter().map(|a| a.value).fold(100.0, f64::min),
        per_shift,
        crs: Some(crs),
        deviation: None,
        passed: exact,
    })
}

/// Mean `‖f(shift(x)) − shift(f(x))‖₂` over inputs and shifts.
pub fn crs_reconstruct_with<F>(f: F, inputs: &[ComplexTensor], shifts: &[Vec<i64>], model_id: &str) -> Result<AuditReport, HarnessError>
where
    F: Fn(&ComplexTensor) -> Result<ComplexTensor, HarnessError> + Sync,
{
    let rows = par_map(inputs, |x| -> Result<Vec<f64>, HarnessError> {
        let base = f(x)?;
        shifts
            .iter()
            .map(|s| {
                let got = f(&shifted(x, s)?)?;
                let want = shifted(&base, s)?;
                if got.shape() != want.shape() {
                    return Err(HarnessError::Metric(format!("output shape {:?} vs {:?}", got.shape(), want.shape())));
                }
                Ok(got.data().iter().zip(want.data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let n = rows.len().max(1) as f64;
    let per_shift: Vec<ShiftAgreement> = shifts
        .iter()
        .enumerate()
        .map(|(j, s)| ShiftAgreement {
            shift: s.clone(),
            value: rows.iter().map(|r| r[j]).sum::<f64>() / n,
        })
        .collect();
    let all: Vec<f64> = rows.into_iter().flatten().collect();
    let mean = all.iter().sum::<f64>() / all.len().max(1) as f64;
    let worst = all.iter().copied().fold(0.0, f64::max);
    Ok(AuditReport {
        model_id: model_id.to_string(),
        task: Task::Reconstruct,
        inputs: inputs.len(),
        per_shift,
        crs: None,
        deviation: Some(mean),
        worst,
        passed: worst <= RECONSTRUCTION_TOLERANCE,
    })
}

pub fn crs_classify(model: &Model, inputs: &[ComplexTensor], shifts: &[Vec<i64>], model_id: &str) -> Result<AuditReport, HarnessError> {
    crs_classify_with(
        |x| match model.predict(x)? {
            Prediction::Class(c) => Ok(c),
            _ => Err(HarnessError::Config("not a classifier".into())),
        },
        inputs,
        shifts,
        model_id,
    )
}

pub fn crs_segment(model: &Model, inputs: &[ComplexTensor], shifts: &[Vec<i64>], model_id: &str) -> Result<AuditReport, HarnessError> {
    crs_segment_with(
        |x| match model.predict(x)? {
            Prediction::Mask(m) => Ok(m),
            _ => Err(HarnessError::Config("not a segmentation model".into())),
        },
        inputs,
        shifts,
        model_id,
    )
}

pub fn crs_reconstruct(model: &Model, inputs: &[ComplexTensor], shifts: &[Vec<i64>], model_id: &str) -> Result<AuditReport, HarnessError> {
    crs_reconstruct_with(|x| Ok(model.dense_output(x)?), inputs, shifts, model_id)
}

/// The audit matching the model's head.
pub fn audit(model: &Model, inputs: &[ComplexTensor], shifts: &[Vec<i64>], model_id: &str) -> Result<AuditReport, HarnessError> {
    match Task::of(&model.spec.head) {
        Task::Classify => crs_classify(model, inputs, shifts, model_id),
        Task::Segment => crs_segment(model, inputs, shifts, model_id),
        Task::Reconstruct => crs_reconstruct(model, inputs, shifts, model_id),
    }
}
