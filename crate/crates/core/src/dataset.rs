//! Quality-annotated samples and the feature-table file format.
//!
//! A feature table is a UTF-8 CSV file with the header
//! `id,mos,std,f0,...,f{d-1}` and one sample per row. The feature
//! dimension is inferred from the header.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One rated stimulus: a feature vector with its opinion-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySample {
    pub id: String,
    pub features: Vec<f64>,
    /// Mean opinion score.
    pub mos: f64,
    /// Opinion standard deviation, same scale as `mos`.
    pub std: f64,
}

impl QualitySample {
    pub fn new(id: impl Into<String>, features: Vec<f64>, mos: f64, std: f64) -> Result<Self> {
        let sample = QualitySample {
            id: id.into(),
            features,
            mos,
            std,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.std >= 0.0) || !self.std.is_finite() {
            return Err(Error::invalid(format!(
                "sample {}: std must be finite and non-negative, got {}",
                self.id, self.std
            )));
        }
        if !self.mos.is_finite() {
            return Err(Error::invalid(format!(
                "sample {}: mos is not finite",
                self.id
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "sample {}: non-finite feature component",
                self.id
            )));
        }
        Ok(())
    }
}

/// A single task: named train/test splits sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub name: String,
    pub dim: usize,
    pub train: Vec<QualitySample>,
    pub test: Vec<QualitySample>,
}

impl TaskDataset {
    /// Builds a dataset, checking dimensions and train/test disjointness.
    pub fn new(
        name: impl Into<String>,
        train: Vec<QualitySample>,
        test: Vec<QualitySample>,
    ) -> Result<Self> {
        let dim = train
            .first()
            .or(test.first())
            .map(QualitySample::dim)
            .ok_or_else(|| Error::invalid("dataset has no samples"))?;
        let ds = TaskDataset {
            name: name.into(),
            dim,
            train,
            test,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dataset dimension must be positive"));
        }
        for s in self.train.iter().chain(&self.test) {
            if s.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: s.dim(),
                });
            }
            s.validate()?;
        }
        let train_ids: HashSet<&str> = self.train.iter().map(|s| s.id.as_str()).collect();
        if let Some(dup) = self.test.iter().find(|s| train_ids.contains(s.id.as_str())) {
            return Err(Error::invalid(format!(
                "dataset {}: sample {} appears in both train and test",
                self.name, dup.id
            )));
        }
        Ok(())
    }
}

/// Writes samples as a feature table.
pub fn write_feature_table<W: Write>(writer: W, samples: &[QualitySample]) -> Result<()> {
    let dim = samples.first().map(QualitySample::dim).unwrap_or(0);
    let mut out = csv::WriterBuilder::new().from_writer(writer);
    let mut header = vec!["id".to_string(), "mos".to_string(), "std".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    out.write_record(&header).map_err(csv_to_io)?;
    for s in samples {
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: s.dim(),
            });
        }
        let mut row = Vec::with_capacity(dim + 3);
        row.push(s.id.clone());
        row.push(s.mos.to_string());
        row.push(s.std.to_string());
        row.extend(s.features.iter().map(f64::to_string));
        out.write_record(&row).map_err(csv_to_io)?;
    }
    out.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Parses a feature table. Errors carry the 1-based line number.
pub fn read_feature_table<R: Read>(reader: R) -> Result<Vec<QualitySample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_parse_error(&e, 1))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let dim = parse_header(&header)?;

    let mut samples = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_parse_error(&e, 0))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec.get(0).map(str::is_empty).unwrap_or(false) {
            continue;
        }
        if rec.len() != dim + 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", dim + 3, rec.len()),
            });
        }
        let num = |col: usize| -> Result<f64> {
            let raw = rec[col].trim();
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column {}: cannot parse {raw:?} as a number", col + 1),
            })
        };
        let mos = num(1)?;
        let std = num(2)?;
        let features = (0..dim).map(|i| num(i + 3)).collect::<Result<Vec<_>>>()?;
        let sample = QualitySample::new(rec[0].to_string(), features, mos, std).map_err(|e| {
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_feature_file(path: &Path) -> Result<Vec<QualitySample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(std::io::BufReader::new(file))
}

pub fn write_feature_file(path: &Path, samples: &[QualitySample]) -> Result<()> {
    let mut buf = Vec::new();
    write_feature_table(&mut buf, samples)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn parse_header(header: &csv::StringRecord) -> Result<usize> {
    let bad = |message: String| Error::Parse { line: 1, message };
    let fixed = ["id", "mos", "std"];
    if header.len() < 4 {
        return Err(bad(
            "header needs id,mos,std and at least one feature column".into(),
        ));
    }
    for (i, name) in fixed.iter().enumerate() {
        if header[i].trim() != *name {
            return Err(bad(format!(
                "column {} must be {name:?}, found {:?}",
                i + 1,
                &header[i]
            )));
        }
    }
    for (i, col) in header.iter().skip(3).enumerate() {
        if col.trim() != format!("f{i}") {
            return Err(bad(format!("expected feature column f{i}, found {col:?}")));
        }
    }
    Ok(header.len() - 3)
}

fn csv_parse_error(e: &csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn csv_to_io(e: csv::Error) -> Error {
    Error::io("<writer>", std::io::Error::other(e))
}
