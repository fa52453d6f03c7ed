//! Model checkpoints: every parameter scalar packed into one CPLX vector,
//! with a JSON manifest (spec, init seed, parameter layout) as metadata.
//!
//! Complex parameters occupy one element per entry; real parameters are
//! stored as `(v, 0)`. CPLX narrows to f32, so a loaded model carries the
//! f32-rounded weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::autodiff::ParamKind;
use crate::ctensor::{Tensor, C64};
use crate::cvnn::{build_model, Model, ModelSpec};
use crate::dataio::{read_cplx, write_cplx};

const FORMAT: &str = "cvpoly-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub spec: ModelSpec,
    pub seed: u64,
    pub params: Vec<Entry>,
}

pub fn save(model: &Model, seed: u64, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let mut data = Vec::new();
    let mut params = Vec::new();
    for p in model.params.iter() {
        params.push(Entry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            kind: p.kind,
            offset: data.len(),
        });
        match p.kind {
            ParamKind::Complex => data.extend(p.value.chunks(2).map(|c| C64::new(c[0], c[1]))),
            ParamKind::Real => data.extend(p.value.iter().map(|v| C64::new(*v, 0.0))),
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        spec: model.spec.clone(),
        seed,
        params,
    };
    let t = Tensor::new(vec![data.len()], data).map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
    write_cplx(path, &t, Some(&serde_json::to_string(&manifest)?))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model, HarnessError> {
    let (t, meta) = read_cplx(path)?;
    let meta = meta.ok_or_else(|| HarnessError::Checkpoint("missing manifest".into()))?;
    let manifest: Manifest = serde_json::from_str(&meta)?;
    if manifest.format != FORMAT {
        return Err(HarnessError::Checkpoint(format!("unknown format {:?}", manifest.format)));
    }
    let mut model = build_model(&manifest.spec, manifest.seed)?;
    if model.params.len() != manifest.params.len() {
        return Err(HarnessError::Checkpoint("parameter count mismatch".into()));
    }
    let data = t.data();
    for (p, e) in model.params.iter_mut().zip(&manifest.params) {
        if p.name != e.name || p.shape != e.shape || p.kind != e.kind {
            return Err(HarnessError::Checkpoint(format!("layout mismatch at {}", e.name)));
        }
        let n = p.elements();
        let slice = data
            .get(e.offset..e.offset + n)
            .ok_or_else(|| HarnessError::Checkpoint(format!("{} out of range", e.name)))?;
        p.value = match p.kind {
            ParamKind::Complex => slice.iter().flat_map(|z| [z.re, z.im]).collect(),
            ParamKind::Real => slice.iter().map(|z| z.re).collect(),
        };
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvnn::Sampling;

    #[test]
    fn round_trip_is_f32_exact() {
        let spec = ModelSpec {
            depth: 2,
            channels: 4,
            ..ModelSpec::classifier(3, 7, Sampling::Aps)
        };
        let model = build_model(&spec, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cplx");
        save(&model, 5, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.spec, spec);
        for (a, b) in model.params.iter().zip(back.params.iter()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.value.iter().zip(&b.value) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        // Saving the loaded model reproduces the file byte for byte.
        let again = dir.path().join("again.cplx");
        save(&back, 5, &again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.cplx");
        write_cplx(&path, &Tensor::new(vec![1], vec![C64::new(1.0, 0.0)]).unwrap(), None).unwrap();
        assert!(matches!(load(&path), Err(HarnessError::Checkpoint(_))));
    }
}
