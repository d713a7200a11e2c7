//! Two-file dataset format.
//!
//! A written dataset consists of (1) the observed table `<base>.data.csv`
//! with columns `C_1..C_p, S, W, Y`, and (2) a JSON manifest `<base>.manifest.json`
//! holding the generating spec, seed, substream ids, selected column names,
//! the true average effect, and the path of the hidden ground-truth file
//! `<base>.truth.csv` (columns `Y1, Y0, U_1..U_q`) used only by evaluators.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::dataset::{CivDataset, GroundTruth};
use crate::data::semi::SemiSynSpec;
use crate::data::synthetic::SynSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;

/// How a stored dataset was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    Synthetic(SynSpec),
    SemiSynthetic(SemiSynSpec),
}

/// Manifest sitting next to the observed table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub substreams: Vec<(String, u64)>,
    /// Selected source columns for semi-synthetic data (observed, hidden).
    pub observed_columns: Option<Vec<String>>,
    pub hidden_columns: Option<Vec<String>>,
    pub source_rows: Option<usize>,
    pub rows: usize,
    pub num_confounders: usize,
    pub true_ace: Option<f64>,
    pub data_file: PathBuf,
    pub truth_file: Option<PathBuf>,
}

fn fmt_value(v: f64) -> String {
    // Round-trip precision so read(write(d)) == d.
    let mut s = format!("{v:?}");
    if s == "-0.0" {
        s = "0.0".into();
    }
    s
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() && !dir.exists() {
            return Err(Error::Io {
                path: dir.display().to_string(),
                source: std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "directory does not exist",
                ),
            });
        }
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Write the dataset under `<base>.data.csv` / `<base>.manifest.json`
/// (plus `<base>.truth.csv` when ground truth is present). Returns the
/// manifest path.
pub fn write_dataset(
    data: &CivDataset,
    manifest: &mut DatasetManifest,
    base: &Path,
) -> Result<PathBuf> {
    data.validate()?;
    let base_str = base.display().to_string();
    let data_path = PathBuf::from(format!("{base_str}.data.csv"));
    let truth_path = PathBuf::from(format!("{base_str}.truth.csv"));
    let manifest_path = PathBuf::from(format!("{base_str}.manifest.json"));

    let p = data.num_confounders();
    let mut table = String::new();
    for j in 0..p {
        let _ = write!(table, "C_{},", j + 1);
    }
    table.push_str("S,W,Y\n");
    for i in 0..data.len() {
        for v in data.c.row(i) {
            let _ = write!(table, "{},", fmt_value(*v));
        }
        let _ = writeln!(table, "{},{},{}", data.s[i], data.w[i], fmt_value(data.y[i]));
    }
    write_file(&data_path, &table)?;

    manifest.rows = data.len();
    manifest.num_confounders = p;
    manifest.true_ace = data.true_ace();
    manifest.data_file = data_path;
    manifest.truth_file = None;

    if let Some(t) = &data.truth {
        let q = t.u.cols();
        let mut truth = String::from("Y1,Y0");
        for j in 0..q {
            let _ = write!(truth, ",U_{}", j + 1);
        }
        truth.push('\n');
        for i in 0..data.len() {
            let _ = write!(truth, "{},{}", fmt_value(t.y1[i]), fmt_value(t.y0[i]));
            for v in t.u.row(i) {
                let _ = write!(truth, ",{}", fmt_value(*v));
            }
            truth.push('\n');
        }
        write_file(&truth_path, &truth)?;
        manifest.truth_file = Some(truth_path);
    }

    let json = serde_json::to_string_pretty(manifest)?;
    write_file(&manifest_path, &json)?;
    Ok(manifest_path)
}

/// Standard substream listing recorded in manifests.
pub fn manifest_substreams(seed: u64) -> Vec<(String, u64)> {
    [
        ("confounders", Stream::Confounders),
        ("instrument", Stream::Instrument),
        ("treatment", Stream::Treatment),
        ("noise", Stream::Noise),
        ("selection", Stream::Selection),
    ]
    .into_iter()
    .map(|(name, s)| (name.to_string(), crate::rng::stream_key(seed, s)))
    .collect()
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    cell.trim().parse().map_err(|_| Error::Ingestion {
        row,
        column: column.to_string(),
        message: format!("cannot parse {cell:?}"),
    })
}

/// Load a dataset previously written by [`write_dataset`], given its
/// manifest path. Ground truth is attached when the truth file exists.
pub fn read_dataset(manifest_path: &Path) -> Result<(CivDataset, DatasetManifest)> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;

    let data_text =
        std::fs::read_to_string(&manifest.data_file).map_err(|e| Error::io(&manifest.data_file, e))?;
    let mut lines = data_text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Ingestion {
            row: 0,
            column: "-".into(),
            message: "empty data file".into(),
        })?;
    let names: Vec<&str> = header.split(',').collect();
    let p = names.iter().filter(|n| n.starts_with("C_")).count();

    let mut c_rows: Vec<Vec<f64>> = Vec::new();
    let (mut s, mut w, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != p + 3 {
            return Err(Error::Ingestion {
                row: i + 2,
                column: "-".into(),
                message: format!("expected {} cells, found {}", p + 3, cells.len()),
            });
        }
        let mut row = Vec::with_capacity(p);
        for (j, cell) in cells[..p].iter().enumerate() {
            row.push(parse_cell(cell, i + 2, names[j])?);
        }
        c_rows.push(row);
        s.push(parse_cell(cells[p], i + 2, "S")? as u8);
        w.push(parse_cell(cells[p + 1], i + 2, "W")? as u8);
        y.push(parse_cell(cells[p + 2], i + 2, "Y")?);
    }

    let truth = match &manifest.truth_file {
        Some(path) if path.exists() => {
            let t = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut tl = t.lines();
            let theader = tl.next().unwrap_or("");
            let q = theader.split(',').filter(|n| n.starts_with("U_")).count();
            let (mut y1, mut y0) = (Vec::new(), Vec::new());
            let mut u_rows: Vec<Vec<f64>> = Vec::new();
            for (i, line) in tl.enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != q + 2 {
                    return Err(Error::Ingestion {
                        row: i + 2,
                        column: "-".into(),
                        message: format!("expected {} cells, found {}", q + 2, cells.len()),
                    });
                }
                y1.push(parse_cell(cells[0], i + 2, "Y1")?);
                y0.push(parse_cell(cells[1], i + 2, "Y0")?);
                u_rows.push(
                    cells[2..]
                        .iter()
                        .enumerate()
                        .map(|(j, cell)| parse_cell(cell, i + 2, &format!("U_{}", j + 1)))
                        .collect::<Result<Vec<f64>>>()?,
                );
            }
            let u = if u_rows.is_empty() {
                Matrix::zeros(y1.len(), 0)
            } else {
                Matrix::from_rows(&u_rows)?
            };
            let diffs: Vec<f64> = y1.iter().zip(y0.iter()).map(|(a, b)| a - b).collect();
            let true_ace = crate::matrix::mean(&diffs);
            Some(GroundTruth { y1, y0, u, true_ace })
        }
        _ => None,
    };

    let data = CivDataset {
        c: Matrix::from_rows(&c_rows)?,
        s,
        w,
        y,
        truth,
    };
    data.validate()?;
    Ok((data, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::generate_synthetic;

    #[test]
    fn write_read_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynSpec::new(3, 2, 40, 17);
        let data = generate_synthetic(&spec).unwrap();
        let mut manifest = DatasetManifest {
            spec: DatasetSpec::Synthetic(spec),
            seed: 17,
            substreams: manifest_substreams(17),
            observed_columns: None,
            hidden_columns: None,
            source_rows: None,
            rows: 0,
            num_confounders: 0,
            true_ace: None,
            data_file: PathBuf::new(),
            truth_file: None,
        };
        let path = write_dataset(&data, &mut manifest, &dir.path().join("syn")).unwrap();
        let (back, m2) = read_dataset(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(m2.rows, 40);
        assert!(m2.true_ace.is_some());
    }

    #[test]
    fn missing_directory_names_it() {
        let data = generate_synthetic(&SynSpec::new(2, 1, 10, 3)).unwrap();
        let mut manifest = DatasetManifest {
            spec: DatasetSpec::Synthetic(SynSpec::new(2, 1, 10, 3)),
            seed: 3,
            substreams: vec![],
            observed_columns: None,
            hidden_columns: None,
            source_rows: None,
            rows: 0,
            num_confounders: 0,
            true_ace: None,
            data_file: PathBuf::new(),
            truth_file: None,
        };
        let err = write_dataset(
            &data,
            &mut manifest,
            Path::new("/nonexistent-dir-xyz/out"),
        )
        .unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.contains("nonexistent-dir-xyz")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
