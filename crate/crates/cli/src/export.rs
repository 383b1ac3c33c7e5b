//! Curve exports. CSV columns are exactly
//! `seed,step,learner,train_mse,test_mse,test_accuracy` (accuracy empty for
//! regression runs); JSON is an array of the same records with null
//! accuracy. Bytes are stable for identical records.

use std::path::Path;

use okreg::error::{Error, Result};

use crate::runner::CurveRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }
}

pub fn export_curves(
    records: &[CurveRecord],
    path: impl AsRef<Path>,
    format: ExportFormat,
) -> Result<()> {
    let path = path.as_ref();
    if records.is_empty() {
        return Err(Error::InvalidParameter {
            name: "records",
            reason: "nothing to export".to_string(),
        });
    }
    let body = match format {
        ExportFormat::Csv => {
            let mut out = String::from("seed,step,learner,train_mse,test_mse,test_accuracy\n");
            for r in records {
                let acc = r.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.seed, r.step, r.learner, r.train_mse, r.test_mse, acc
                ));
            }
            out
        }
        ExportFormat::Json => serde_json::to_string_pretty(records)
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?,
    };
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn import_curves(path: impl AsRef<Path>, format: ExportFormat) -> Result<Vec<CurveRecord>> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let body = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: p.clone(),
        source: e,
    })?;
    match format {
        ExportFormat::Json => {
            serde_json::from_str(&body).map_err(|e| Error::Parse {
                path: p,
                message: e.to_string(),
            })
        }
        ExportFormat::Csv => {
            let mut lines = body.lines();
            let header = lines.next().ok_or_else(|| Error::Parse {
                path: p.clone(),
                message: "empty file".to_string(),
            })?;
            if header != "seed,step,learner,train_mse,test_mse,test_accuracy" {
                return Err(Error::Parse {
                    path: p,
                    message: format!("unexpected header `{header}`"),
                });
            }
            let mut records = Vec::new();
            for (i, line) in lines.enumerate() {
                if line.is_empty() {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(Error::Parse {
                        path: p,
                        message: format!("row {} malformed", i + 2),
                    });
                }
                let parse_err = |what: &str| Error::Parse {
                    path: p.clone(),
                    message: format!("row {}: bad {what}", i + 2),
                };
                records.push(CurveRecord {
                    seed: f[0].parse().map_err(|_| parse_err("seed"))?,
                    step: f[1].parse().map_err(|_| parse_err("step"))?,
                    learner: f[2].to_string(),
                    train_mse: f[3].parse().map_err(|_| parse_err("train_mse"))?,
                    test_mse: f[4].parse().map_err(|_| parse_err("test_mse"))?,
                    test_accuracy: if f[5].is_empty() {
                        None
                    } else {
                        Some(f[5].parse().map_err(|_| parse_err("test_accuracy"))?)
                    },
                });
            }
            Ok(records)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<CurveRecord> {
        let mut out = Vec::new();
        for seed in [0u64, 1] {
            for learner in ["offline", "online_true"] {
                for (i, step) in [16usize, 32, 40].iter().enumerate() {
                    out.push(CurveRecord {
                        seed,
                        step: *step,
                        learner: learner.to_string(),
                        train_mse: 0.5 / (i + 1) as f64,
                        test_mse: 0.75 / (i + 1) as f64,
                        test_accuracy: None,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn cardinality_and_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        let records = sample_records();
        export_curves(&records, &path, ExportFormat::Csv).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines[0], "seed,step,learner,train_mse,test_mse,test_accuracy");
        assert_eq!(lines.len(), 1 + 12); // 2 seeds × 2 learners × 3 eval points
        assert!(lines[1].ends_with(',') , "empty accuracy serialized as empty string");
    }

    #[test]
    fn roundtrip_csv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = sample_records();
        records[0].test_accuracy = Some(0.875);
        for format in [ExportFormat::Csv, ExportFormat::Json] {
            let path = dir.path().join(format!("curves.{}", format.extension()));
            export_curves(&records, &path, format).unwrap();
            let back = import_curves(&path, format).unwrap();
            assert_eq!(records, back);
        }
    }

    #[test]
    fn json_null_accuracy() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.json");
        export_curves(&sample_records(), &path, ExportFormat::Json).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.contains("\"test_accuracy\": null"));
    }

    #[test]
    fn export_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.csv");
        assert!(export_curves(&[], &path, ExportFormat::Csv).is_err());
    }

    #[test]
    fn byte_stable_given_identical_records() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let records = sample_records();
        export_curves(&records, &a, ExportFormat::Csv).unwrap();
        export_curves(&records, &b, ExportFormat::Csv).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
