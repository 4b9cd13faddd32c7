//! Model files: `XMSM`, a u64 LE header length, a JSON header, then one
//! binary matrix block per entry of the header's `blocks` list.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{MethodKind, Preprocessing, SubspaceModel};
use crate::dataset_io::{read_matrix_binary, write_matrix_binary};
use crate::error::{Result, XmsError};
use crate::preprocess::{ModalityPreprocess, PcaModel};

const MODEL_MAGIC: &[u8; 4] = b"XMSM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PreprocessHeader {
    Center { input_dim: usize },
    Pca { input_dim: usize, k: usize, energy: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    method: MethodKind,
    d: usize,
    hyperparams: BTreeMap<String, f64>,
    diagnostics: BTreeMap<String, Vec<f64>>,
    fit_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective_trace: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preprocessing: Option<[PreprocessHeader; 2]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    l2_normalize: bool,
    blocks: Vec<String>,
}

fn malformed(msg: impl Into<String>) -> XmsError {
    XmsError::Malformed {
        path: "<model>".into(),
        line: 0,
        msg: msg.into(),
    }
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn describe(p: &ModalityPreprocess, tag: &str, blocks: &mut Vec<(String, DMatrix<f64>)>) -> PreprocessHeader {
    match p {
        ModalityPreprocess::Center { mean } => {
            blocks.push((format!("{tag}.mean"), column(mean)));
            PreprocessHeader::Center { input_dim: mean.len() }
        }
        ModalityPreprocess::Pca(m) => {
            blocks.push((format!("{tag}.mean"), column(&m.mean)));
            blocks.push((format!("{tag}.basis"), m.basis.clone()));
            blocks.push((format!("{tag}.eigenvalues"), column(&m.eigenvalues)));
            PreprocessHeader::Pca {
                input_dim: m.input_dim(),
                k: m.k(),
                energy: m.energy,
            }
        }
    }
}

/// Writes `model` to any byte sink.
pub fn write_model<W: Write>(w: &mut W, model: &SubspaceModel) -> Result<()> {
    let mut blocks = vec![
        ("wa".to_string(), model.wa.clone()),
        ("wb".to_string(), model.wb.clone()),
    ];
    let preprocessing = model
        .preprocessing
        .as_ref()
        .map(|p| [describe(&p.a, "a", &mut blocks), describe(&p.b, "b", &mut blocks)]);
    let header = Header {
        format_version: FORMAT_VERSION,
        method: model.method,
        d: model.dim(),
        hyperparams: model.hyperparams.clone(),
        diagnostics: model.diagnostics.clone(),
        fit_seconds: model.fit_seconds,
        objective_trace: model.objective_trace().map(<[f64]>::to_vec),
        preprocessing,
        l2_normalize: model.preprocessing.as_ref().is_some_and(|p| p.l2_normalize),
        blocks: blocks.iter().map(|(n, _)| n.clone()).collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| XmsError::Numerical(format!("model header: {e}")))?;
    let io = |e| XmsError::io("<model>", e);
    w.write_all(MODEL_MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for (_, m) in &blocks {
        write_matrix_binary(w, m).map_err(io)?;
    }
    Ok(())
}

type Blocks = BTreeMap<String, DMatrix<f64>>;

fn take(blocks: &mut Blocks, name: &str) -> Result<DMatrix<f64>> {
    blocks
        .remove(name)
        .ok_or_else(|| malformed(format!("missing block {name}")))
}

fn take_vector(blocks: &mut Blocks, name: &str) -> Result<DVector<f64>> {
    let m = take(blocks, name)?;
    if m.ncols() != 1 {
        return Err(malformed(format!("block {name} must be a column")));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

fn restore(blocks: &mut Blocks, h: &PreprocessHeader, tag: &str) -> Result<ModalityPreprocess> {
    let mean = take_vector(blocks, &format!("{tag}.mean"))?;
    Ok(match *h {
        PreprocessHeader::Center { .. } => ModalityPreprocess::Center { mean },
        PreprocessHeader::Pca { energy, .. } => ModalityPreprocess::Pca(PcaModel {
            mean,
            basis: take(blocks, &format!("{tag}.basis"))?,
            eigenvalues: take_vector(blocks, &format!("{tag}.eigenvalues"))?,
            energy,
        }),
    })
}

/// Reads a model written by [`write_model`].
pub fn read_model<R: Read>(r: &mut R) -> Result<SubspaceModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| malformed("truncated model file"))?;
    if &magic != MODEL_MAGIC {
        return Err(malformed("not a model file (bad magic bytes)"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)
        .map_err(|_| malformed("truncated header length"))?;
    let len = u64::from_le_bytes(word) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| malformed("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| malformed(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(malformed(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }

    let mut blocks = BTreeMap::new();
    for name in &header.blocks {
        let m = read_matrix_binary(r).map_err(|e| malformed(format!("block {name}: {e}")))?;
        blocks.insert(name.clone(), m);
    }
    let wa = take(&mut blocks, "wa")?;
    let wb = take(&mut blocks, "wb")?;
    if wa.ncols() != header.d || wb.ncols() != header.d {
        return Err(malformed("projection widths disagree with d"));
    }
    let preprocessing = match &header.preprocessing {
        Some([a, b]) => Some(Preprocessing {
            l2_normalize: header.l2_normalize,
            a: restore(&mut blocks, a, "a")?,
            b: restore(&mut blocks, b, "b")?,
        }),
        None => None,
    };
    if let Some(p) = &preprocessing {
        if p.a.output_dim() != wa.nrows() || p.b.output_dim() != wb.nrows() {
            return Err(malformed("preprocessing output does not match projection rows"));
        }
    }
    Ok(SubspaceModel {
        wa,
        wb,
        method: header.method,
        preprocessing,
        hyperparams: header.hyperparams,
        diagnostics: header.diagnostics,
        fit_seconds: header.fit_seconds,
    })
}

pub fn save_model(model: &SubspaceModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| XmsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(&mut w, model)?;
    w.flush().map_err(|e| XmsError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SubspaceModel> {
    let file = File::open(path).map_err(|e| XmsError::io(path, e))?;
    read_model(&mut BufReader::new(file)).map_err(|e| match e {
        XmsError::Malformed { line, msg, .. } => XmsError::Malformed {
            path: path.to_path_buf(),
            line,
            msg,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_io::{FeatureMatrix, PairedMultimodalDataset};
    use crate::methods::{fit_method, FitOptions, MethodParams, Modality};
    use crate::preprocess::PcaSetting;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data() -> PairedMultimodalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|i| i % 2 + 1).collect();
        let xa = DMatrix::from_fn(6, n, |_, _| rng.random::<f64>());
        let xb = DMatrix::from_fn(5, n, |_, _| rng.random::<f64>());
        PairedMultimodalDataset::new(
            FeatureMatrix::new(xa).unwrap(),
            FeatureMatrix::new(xb).unwrap(),
            labels,
            2,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = data();
        for (method, pca) in [
            (MethodKind::Cca, PcaSetting::Dim(4)),
            (MethodKind::Lcfs, PcaSetting::Off),
            (MethodKind::Cca3v, PcaSetting::Default),
        ] {
            let opts = FitOptions {
                pca,
                ..Default::default()
            };
            let model = fit_method(method, &ds, &MethodParams::default(), opts).unwrap();
            let mut bytes = Vec::new();
            write_model(&mut bytes, &model).unwrap();
            let back = read_model(&mut bytes.as_slice()).unwrap();
            assert_eq!(back, model);
            assert_eq!(
                back.project(&ds.xa, Modality::A).unwrap(),
                model.project(&ds.xa, Modality::A).unwrap()
            );
        }
    }

    #[test]
    fn l2_normalize_survives_round_trip_and_ignores_sample_scale() {
        let ds = data();
        let opts = FitOptions {
            pca: PcaSetting::Dim(3),
            l2_normalize: true,
            ..Default::default()
        };
        let model = fit_method(MethodKind::Cca, &ds, &MethodParams::default(), opts).unwrap();
        let mut bytes = Vec::new();
        write_model(&mut bytes, &model).unwrap();
        let back = read_model(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        assert!(back.preprocessing.as_ref().unwrap().l2_normalize);

        let mut scaled = ds.xa.values().clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= 0.5 + j as f64;
        }
        let scaled = FeatureMatrix::new(scaled).unwrap();
        let p = back.project(&ds.xa, Modality::A).unwrap();
        let q = back.project(&scaled, Modality::A).unwrap();
        assert!((p.values() - q.values()).amax() < 1e-12);
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let ds = data();
        let model = fit_method(MethodKind::Pls, &ds, &MethodParams::default(), FitOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.xms");
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert_eq!(load_model(&path).unwrap_err().code(), "malformed_file");
        std::fs::write(&path, b"nope").unwrap();
        assert_eq!(load_model(&path).unwrap_err().exit_code(), 3);
    }
}
