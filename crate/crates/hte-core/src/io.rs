//! Dataset file format and atomic file writing.
//!
//! Datasets are CSVs with a header. Reserved columns are `t` (treatment),
//! `y` (outcome) and the optional ground-truth columns `y0`, `y1`, `e_true`;
//! every other column is a feature, in file order. Generated files name
//! features `x0..x{d-1}`; readers accept arbitrary feature names. A JSON
//! sidecar carries provenance (generator name, seed, parameters).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruth, ObservationalDataset};
use crate::error::{Error, Result};

/// Provenance metadata written alongside generated datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub seed: u64,
    pub params: serde_json::Value,
}

/// Write `bytes` to `path` atomically: a temp file in the same directory is
/// written, flushed, then renamed over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = PathBuf::from(path);
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    tmp.set_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialize a dataset in the CSV format described in the module docs.
pub fn dataset_to_csv_bytes(ds: &ObservationalDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["t".into(), "y".into()];
    let with_truth = ds.truth.is_some();
    let with_prop = ds
        .truth
        .as_ref()
        .is_some_and(|t| t.true_propensity.is_some());
    if with_truth {
        header.push("y0".into());
        header.push("y1".into());
        if with_prop {
            header.push("e_true".into());
        }
    }
    header.extend(ds.feature_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut rec: Vec<String> = vec![fmt_f64(ds.treatment[i]), fmt_f64(ds.outcome[i])];
        if let Some(truth) = &ds.truth {
            rec.push(fmt_f64(truth.y0[i]));
            rec.push(fmt_f64(truth.y1[i]));
            if let Some(e) = &truth.true_propensity {
                rec.push(fmt_f64(e[i]));
            }
        }
        for j in 0..ds.dim() {
            rec.push(fmt_f64(ds.covariates[[i, j]]));
        }
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::Structural(format!("csv flush: {e}")))
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip representation; "." decimal point by construction.
    format!("{v}")
}

/// Write a dataset CSV (atomically) and, when provenance is given, a
/// `<stem>.meta.json` sidecar next to it.
pub fn write_dataset_csv(
    ds: &ObservationalDataset,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    atomic_write(path, &dataset_to_csv_bytes(ds)?)?;
    if let Some(p) = provenance {
        let sidecar = sidecar_path(path);
        atomic_write(&sidecar, &serde_json::to_vec_pretty(p)?)?;
    }
    Ok(())
}

/// Sidecar path for a dataset file: `data.csv` -> `data.meta.json`.
pub fn sidecar_path(dataset_path: &Path) -> PathBuf {
    let mut p = PathBuf::from(dataset_path);
    let stem = p
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    p.set_file_name(format!("{stem}.meta.json"));
    p
}

/// Read a dataset from the CSV format. `y0`/`y1` columns, when present,
/// populate ground truth (plus `e_true` if available).
pub fn read_dataset_csv(path: &Path) -> Result<ObservationalDataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    let mut col_t = None;
    let mut col_y = None;
    let mut col_y0 = None;
    let mut col_y1 = None;
    let mut col_e = None;
    let mut feature_cols: Vec<(usize, String)> = Vec::new();
    for (j, name) in header.iter().enumerate() {
        match name {
            "t" => col_t = Some(j),
            "y" => col_y = Some(j),
            "y0" => col_y0 = Some(j),
            "y1" => col_y1 = Some(j),
            "e_true" => col_e = Some(j),
            other => feature_cols.push((j, other.to_string())),
        }
    }
    let col_t = col_t.ok_or_else(|| Error::Structural("missing required column `t`".into()))?;
    let col_y = col_y.ok_or_else(|| Error::Structural("missing required column `y`".into()))?;

    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut y0 = Vec::new();
    let mut y1 = Vec::new();
    let mut e_true = Vec::new();
    let mut x: Vec<f64> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let get = |j: usize| -> Result<f64> {
            record
                .get(j)
                .ok_or_else(|| Error::Structural(format!("short record at row {row}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Structural(format!("bad number in row {row}: {e}")))
        };
        t.push(get(col_t)?);
        y.push(get(col_y)?);
        if let Some(j) = col_y0 {
            y0.push(get(j)?);
        }
        if let Some(j) = col_y1 {
            y1.push(get(j)?);
        }
        if let Some(j) = col_e {
            e_true.push(get(j)?);
        }
        for (j, _) in &feature_cols {
            x.push(get(*j)?);
        }
    }
    let n = t.len();
    let d = feature_cols.len();
    let covariates = Array2::from_shape_vec((n, d), x)
        .map_err(|e| Error::Structural(format!("covariate shape: {e}")))?;
    let truth = match (col_y0, col_y1) {
        (Some(_), Some(_)) => Some(GroundTruth::new(
            Array1::from(y0),
            Array1::from(y1),
            col_e.map(|_| Array1::from(e_true)),
        )),
        (None, None) => None,
        _ => return Err(Error::Structural("y0/y1 must be present together".into())),
    };
    ObservationalDataset::new(
        covariates,
        Array1::from(t),
        Array1::from(y),
        feature_cols.into_iter().map(|(_, name)| name).collect(),
        truth,
    )
}

/// Serialize rows as CSV (header + string records) for report-style outputs.
pub fn rows_to_csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Structural(format!("csv flush: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_with_truth() {
        let truth = GroundTruth::new(array![0.25, 0.5], array![0.75, 0.5], Some(array![0.4, 0.6]));
        let ds = ObservationalDataset::unnamed(
            array![[1.5, -2.0], [0.0, 3.25]],
            array![1.0, 0.0],
            array![0.75, 0.5],
            Some(truth),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset_csv(&ds, &path, None).unwrap();
        let back = read_dataset_csv(&path).unwrap();
        assert_eq!(back.covariates, ds.covariates);
        assert_eq!(back.treatment, ds.treatment);
        let bt = back.truth.unwrap();
        assert_eq!(bt.tau, array![0.5, 0.0]);
        assert_eq!(bt.true_propensity.unwrap(), array![0.4, 0.6]);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        // No temp file left behind.
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn sidecar_written_with_provenance() {
        let ds = ObservationalDataset::unnamed(
            array![[0.0], [1.0]],
            array![1.0, 0.0],
            array![1.0, 0.0],
            None,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.csv");
        let prov = Provenance {
            generator: "linear".into(),
            seed: 7,
            params: serde_json::json!({"n": 2}),
        };
        write_dataset_csv(&ds, &path, Some(&prov)).unwrap();
        let meta: Provenance =
            serde_json::from_slice(&fs::read(dir.path().join("gen.meta.json")).unwrap()).unwrap();
        assert_eq!(meta.generator, "linear");
        assert_eq!(meta.seed, 7);
    }
}
