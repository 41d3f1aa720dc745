use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::FeatureVector;

/// Half-width of the box class means are drawn from.
const MEAN_RANGE: f64 = 4.0;
const BLOB_STD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<FeatureVector>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Generator seed; `None` for imported data.
    pub seed: Option<u64>,
}

/// Gaussian class blobs. Class means are drawn uniformly from
/// `[-4, 4]^n_features`; samples are assigned round-robin to classes and
/// perturbed with unit-variance noise.
pub fn gen_synthetic(seed: u64, n_samples: usize, n_features: usize, n_classes: usize) -> Result<Dataset> {
    if n_samples == 0 || n_features == 0 {
        return Err(Error::Precondition("sample and feature counts must be positive".into()));
    }
    if n_classes < 2 {
        return Err(Error::Precondition(format!(
            "need at least two classes, got {n_classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            (0..n_features)
                .map(|_| rng.random_range(-MEAN_RANGE..=MEAN_RANGE))
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, BLOB_STD).expect("valid normal");
    let mut inputs = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % n_classes;
        let values = means[class]
            .iter()
            .map(|m| m + noise.sample(&mut rng))
            .collect();
        inputs.push(FeatureVector::new(values)?);
        labels.push(class);
    }
    Ok(Dataset {
        inputs,
        labels,
        n_classes,
        seed: Some(seed),
    })
}

impl Dataset {
    pub fn new(inputs: Vec<FeatureVector>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let ds = Dataset {
            inputs,
            labels,
            n_classes,
            seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.inputs.first().map_or(0, FeatureVector::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.labels.len() {
            return Err(Error::InvalidSpec(format!(
                "{} inputs but {} labels",
                self.inputs.len(),
                self.labels.len()
            )));
        }
        let n = self.n_features();
        if let Some(bad) = self.inputs.iter().find(|x| x.len() != n) {
            return Err(Error::InputShape {
                expected: n,
                found: bad.len(),
            });
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(Error::InvalidSpec(format!(
                "label {l} outside {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Writes `f0,...,f{n-1},label` followed by one row per sample.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.n_features()).map(|i| format!("f{i}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(csv_err)?;
        for (x, label) in self.inputs.iter().zip(&self.labels) {
            let mut row: Vec<String> = x.values().iter().map(|v| v.to_string()).collect();
            row.push(label.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`Dataset::write_csv`]. The class count
    /// is taken as one more than the largest label.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        if header.len() < 2 || &header[header.len() - 1] != "label" {
            return Err(Error::Parse {
                line: 1,
                field: "header".into(),
                message: "expected feature columns followed by `label`".into(),
            });
        }
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (row_idx, record) in r.records().enumerate() {
            let line = row_idx + 2;
            let record = record.map_err(csv_err)?;
            if record.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    field: "row".into(),
                    message: format!("expected {} columns, found {}", header.len(), record.len()),
                });
            }
            let mut values = Vec::with_capacity(record.len() - 1);
            for (col, cell) in record.iter().take(record.len() - 1).enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line,
                    field: header[col].to_string(),
                    message: format!("`{cell}` is not a number"),
                })?;
                values.push(v);
            }
            let cell = &record[record.len() - 1];
            let label: usize = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                field: "label".into(),
                message: format!("`{cell}` is not a class index"),
            })?;
            inputs.push(FeatureVector::new(values).map_err(|e| Error::Parse {
                line,
                field: "row".into(),
                message: e.to_string(),
            })?);
            labels.push(label);
        }
        if inputs.is_empty() {
            return Err(Error::Precondition("dataset has no rows".into()));
        }
        let n_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        Dataset::new(inputs, labels, n_classes)
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse {
            line: pos.line() as usize,
            field: "csv".into(),
            message: e.to_string(),
        },
        None => Error::Io(e.to_string()),
    }
}
