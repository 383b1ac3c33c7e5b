//! Dense matrix files and predictor descriptors.
//!
//! Matrices travel either as CSV with a leading `n,m` header row followed by
//! row-major data rows, or as a binary file with two little-endian u64
//! dimensions followed by row-major little-endian f64 values. Predictors
//! serialize to a JSON descriptor that references matrix files for their
//! data.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FeatureMapDescriptor, IdentityFeatures, KernelSpec};
use crate::regression::Predictor;

/// CSV matrix: header `n,m`, then n rows of m comma-separated values.
pub fn write_matrix_csv(path: impl AsRef<Path>, a: ArrayView2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{},{}\n", a.nrows(), a.ncols());
    for row in a.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let body =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let p = path.display().to_string();
    let mut lines = body.lines();
    let header = lines.next().ok_or_else(|| Error::parse(&p, "empty file"))?;
    let dims: Vec<&str> = header.split(',').collect();
    if dims.len() != 2 {
        return Err(Error::parse(&p, format!("bad header `{header}`")));
    }
    let n: usize = dims[0]
        .trim()
        .parse()
        .map_err(|_| Error::parse(&p, "bad row count"))?;
    let m: usize = dims[1]
        .trim()
        .parse()
        .map_err(|_| Error::parse(&p, "bad column count"))?;
    let mut data = Vec::with_capacity(n * m);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        for cell in line.split(',') {
            data.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(&p, format!("bad float `{cell}`")))?,
            );
        }
    }
    Array2::from_shape_vec((n, m), data)
        .map_err(|_| Error::parse(&p, format!("expected {n}x{m} values")))
}

/// Binary matrix: u64 LE rows, u64 LE cols, then row-major f64 LE values.
pub fn write_matrix_bin(path: impl AsRef<Path>, a: ArrayView2<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut buf = Vec::with_capacity(16 + 8 * a.len());
    buf.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
    for v in a.rows().into_iter().flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_matrix_bin(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(p.clone(), e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(p.clone(), e))?;
    if buf.len() < 16 {
        return Err(Error::parse(&p, "truncated header"));
    }
    let n = u64::from_le_bytes(buf[0..8].try_into().unwrap()) as usize;
    let m = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if buf.len() != 16 + 8 * n * m {
        return Err(Error::parse(&p, format!("expected {n}x{m} payload")));
    }
    let data: Vec<f64> = buf[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((n, m), data).map_err(|_| Error::parse(&p, "shape mismatch"))
}

/// Serializable kernel description with matrix-file references.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum KernelFileDescriptor {
    Rbf { bandwidth: f64 },
    RandomFeatureTanh { projection_file: String, scale: f64 },
    Linear { dim: usize },
    Precomputed { gram_file: String },
}

/// JSON descriptor of a predictor: form tag, hyperparameters, and file
/// references for the data it closes over.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorDescriptor {
    pub form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    pub kernel: KernelFileDescriptor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<String>,
}

fn save_kernel(kernel: &KernelSpec, dir: &Path, stem: &str) -> Result<KernelFileDescriptor> {
    match kernel {
        KernelSpec::Rbf { bandwidth } => Ok(KernelFileDescriptor::Rbf {
            bandwidth: *bandwidth,
        }),
        KernelSpec::RandomFeatureTanh(t) => {
            let file = format!("{stem}_projection.csv");
            write_matrix_csv(dir.join(&file), t.projection())?;
            Ok(KernelFileDescriptor::RandomFeatureTanh {
                projection_file: file,
                scale: t.scale(),
            })
        }
        KernelSpec::ExplicitFeature(m) => match m.descriptor() {
            Some(FeatureMapDescriptor::Identity { dim }) => {
                Ok(KernelFileDescriptor::Linear { dim })
            }
            None => Err(Error::Unsupported {
                reason: "explicit feature maps without a descriptor cannot be serialized"
                    .to_string(),
            }),
        },
        KernelSpec::Precomputed { gram } => {
            let file = format!("{stem}_gram.bin");
            write_matrix_bin(dir.join(&file), gram.view())?;
            Ok(KernelFileDescriptor::Precomputed { gram_file: file })
        }
    }
}

fn load_kernel(desc: &KernelFileDescriptor, dir: &Path) -> Result<KernelSpec> {
    match desc {
        KernelFileDescriptor::Rbf { bandwidth } => KernelSpec::rbf(*bandwidth),
        KernelFileDescriptor::RandomFeatureTanh {
            projection_file,
            scale,
        } => {
            let j = read_matrix_csv(dir.join(projection_file))?;
            Ok(KernelSpec::random_feature_tanh(j, *scale))
        }
        KernelFileDescriptor::Linear { dim } => Ok(KernelSpec::linear(*dim)),
        KernelFileDescriptor::Precomputed { gram_file } => {
            KernelSpec::precomputed(read_matrix_bin(dir.join(gram_file))?)
        }
    }
}

/// Write a predictor as `<stem>.json` plus its matrix files, all under `dir`.
pub fn save_predictor(predictor: &Predictor, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let write_xy = |x: &Array2<f64>, y: &Array2<f64>| -> Result<(String, String)> {
        let xf = format!("{stem}_x.csv");
        let yf = format!("{stem}_y.csv");
        write_matrix_csv(dir.join(&xf), x.view())?;
        write_matrix_csv(dir.join(&yf), y.view())?;
        Ok((xf, yf))
    };
    let desc = match predictor {
        Predictor::Offline { kernel, x, y, gamma } => {
            let (xf, yf) = write_xy(x, y)?;
            PredictorDescriptor {
                form: "offline".to_string(),
                eta: None,
                gamma: Some(*gamma),
                block: None,
                kernel: save_kernel(kernel, dir, stem)?,
                x_file: Some(xf),
                y_file: Some(yf),
                weights_file: None,
            }
        }
        Predictor::OnlineClosedForm {
            kernel,
            x,
            y,
            eta,
            gamma,
        } => {
            let (xf, yf) = write_xy(x, y)?;
            PredictorDescriptor {
                form: "online_closed_form".to_string(),
                eta: Some(*eta),
                gamma: Some(*gamma),
                block: None,
                kernel: save_kernel(kernel, dir, stem)?,
                x_file: Some(xf),
                y_file: Some(yf),
                weights_file: None,
            }
        }
        Predictor::MinibatchClosedForm {
            kernel,
            x,
            y,
            eta,
            block,
        } => {
            let (xf, yf) = write_xy(x, y)?;
            PredictorDescriptor {
                form: "minibatch_closed_form".to_string(),
                eta: Some(*eta),
                gamma: None,
                block: Some(*block),
                kernel: save_kernel(kernel, dir, stem)?,
                x_file: Some(xf),
                y_file: Some(yf),
                weights_file: None,
            }
        }
        Predictor::ExplicitWeights { w, map } => {
            let wf = format!("{stem}_weights.csv");
            write_matrix_csv(dir.join(&wf), w.view())?;
            let kernel = match map.descriptor() {
                Some(FeatureMapDescriptor::Identity { dim }) => {
                    KernelFileDescriptor::Linear { dim }
                }
                None => {
                    return Err(Error::Unsupported {
                        reason: "explicit feature maps without a descriptor cannot be serialized"
                            .to_string(),
                    })
                }
            };
            PredictorDescriptor {
                form: "explicit_weights".to_string(),
                eta: None,
                gamma: None,
                block: None,
                kernel,
                x_file: None,
                y_file: None,
                weights_file: Some(wf),
            }
        }
    };
    let json_path = dir.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(&desc)
        .map_err(|e| Error::parse(json_path.display().to_string(), e.to_string()))?;
    std::fs::write(&json_path, body)
        .map_err(|e| Error::io(json_path.display().to_string(), e))?;
    Ok(json_path)
}

/// Rebuild a predictor from its JSON descriptor.
pub fn load_predictor(json_path: impl AsRef<Path>) -> Result<Predictor> {
    let json_path = json_path.as_ref();
    let p = json_path.display().to_string();
    let body = std::fs::read_to_string(json_path).map_err(|e| Error::io(p.clone(), e))?;
    let desc: PredictorDescriptor =
        serde_json::from_str(&body).map_err(|e| Error::parse(&p, e.to_string()))?;
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let kernel = load_kernel(&desc.kernel, dir)?;
    let read_xy = |desc: &PredictorDescriptor| -> Result<(Array2<f64>, Array2<f64>)> {
        let xf = desc
            .x_file
            .as_ref()
            .ok_or_else(|| Error::parse(&p, "missing x_file"))?;
        let yf = desc
            .y_file
            .as_ref()
            .ok_or_else(|| Error::parse(&p, "missing y_file"))?;
        Ok((read_matrix_csv(dir.join(xf))?, read_matrix_csv(dir.join(yf))?))
    };
    match desc.form.as_str() {
        "offline" => {
            let (x, y) = read_xy(&desc)?;
            Ok(Predictor::Offline {
                kernel,
                x,
                y,
                gamma: desc.gamma.unwrap_or_default(),
            })
        }
        "online_closed_form" => {
            let (x, y) = read_xy(&desc)?;
            Ok(Predictor::OnlineClosedForm {
                kernel,
                x,
                y,
                eta: desc.eta.ok_or_else(|| Error::parse(&p, "missing eta"))?,
                gamma: desc.gamma.unwrap_or_default(),
            })
        }
        "minibatch_closed_form" => {
            let (x, y) = read_xy(&desc)?;
            Ok(Predictor::MinibatchClosedForm {
                kernel,
                x,
                y,
                eta: desc.eta.ok_or_else(|| Error::parse(&p, "missing eta"))?,
                block: desc.block.unwrap_or(1),
            })
        }
        "explicit_weights" => {
            let wf = desc
                .weights_file
                .as_ref()
                .ok_or_else(|| Error::parse(&p, "missing weights_file"))?;
            let w = read_matrix_csv(dir.join(wf))?;
            let map = match desc.kernel {
                KernelFileDescriptor::Linear { dim } => Arc::new(IdentityFeatures::new(dim)),
                _ => {
                    return Err(Error::Unsupported {
                        reason: "explicit weights need a linear kernel descriptor".to_string(),
                    })
                }
            };
            Ok(Predictor::ExplicitWeights { w, map })
        }
        other => Err(Error::parse(&p, format!("unknown form `{other}`"))),
    }
}
