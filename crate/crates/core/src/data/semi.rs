//! Semi-synthetic construction: graft instrument/treatment assignment and a
//! known outcome surface onto real covariate tables.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{CivDataset, GroundTruth};
use crate::data::synthetic::{gen_instrument, gen_outcome, gen_treatment};
use crate::error::{Error, Result};
use crate::matrix::{mean, Matrix};
use crate::rng::{substream, Stream};

/// Semi-synthetic setting over an ingested covariate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiSynSpec {
    pub covariate_table_path: PathBuf,
    /// Observed confounder count.
    pub p: usize,
    /// Hidden confounder count.
    pub q: usize,
    pub seed: u64,
    /// Column names excluded before numeric parsing.
    pub drop_columns: Vec<String>,
}

/// A parsed covariate table: named numeric columns of equal length.
#[derive(Clone, Debug)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub columns: Matrix,
}

impl CovariateTable {
    pub fn num_rows(&self) -> usize {
        self.columns.rows()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.cols()
    }
}

fn detect_delimiter(header: &str) -> char {
    if header.contains('\t') {
        '\t'
    } else if header.contains(';') && !header.contains(',') {
        ';'
    } else {
        ','
    }
}

/// Read a delimiter-separated text table. First row holds column names;
/// columns listed in `drop` are discarded; every remaining cell must parse as
/// a number, otherwise ingestion fails at the offending row and column.
pub fn read_covariate_table(path: &Path, drop: &[String]) -> Result<CovariateTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Ingestion {
            row: 0,
            column: "-".into(),
            message: "empty table".into(),
        })?;
    let delim = detect_delimiter(header);
    let raw_names: Vec<String> = header.split(delim).map(|s| s.trim().to_string()).collect();
    let keep: Vec<usize> = raw_names
        .iter()
        .enumerate()
        .filter(|(_, name)| !drop.contains(name))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::Config("drop list removes every column".into()));
    }
    let names: Vec<String> = keep.iter().map(|&i| raw_names[i].clone()).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split(delim).map(str::trim).collect();
        if cells.len() != raw_names.len() {
            return Err(Error::Ingestion {
                row: line_no + 1,
                column: "-".into(),
                message: format!("expected {} cells, found {}", raw_names.len(), cells.len()),
            });
        }
        let mut row = Vec::with_capacity(keep.len());
        for &i in &keep {
            let cell = cells[i];
            let value: f64 = cell.parse().map_err(|_| Error::Ingestion {
                row: line_no + 1,
                column: raw_names[i].clone(),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::Config("covariate table needs at least two rows".into()));
    }
    Ok(CovariateTable {
        names,
        columns: Matrix::from_rows(&rows)?,
    })
}

/// Standardize columns to zero mean, unit variance. Constant columns are
/// left centered.
fn standardize(m: &Matrix) -> Matrix {
    let means = m.col_means();
    let stds = m.col_stds(&means);
    let mut out = m.clone();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let sd = if stds[j] > 1e-12 { stds[j] } else { 1.0 };
            out.set(i, j, (m.get(i, j) - means[j]) / sd);
        }
    }
    out
}

/// Outcome of semi-synthetic grafting: the dataset plus the selected column
/// names (observed first, then hidden), for the manifest.
pub struct SemiSynOutput {
    pub dataset: CivDataset,
    pub observed_columns: Vec<String>,
    pub hidden_columns: Vec<String>,
    pub source_rows: usize,
}

/// Pick `p + q` covariate columns by a seeded random choice, standardize,
/// treat the first `p` as observed confounders and the remaining `q` as
/// hidden ones, then generate instrument, treatment, and outcomes with the
/// synthetic formulas over those columns.
pub fn build_semi_synthetic(spec: &SemiSynSpec) -> Result<SemiSynOutput> {
    let table = read_covariate_table(&spec.covariate_table_path, &spec.drop_columns)?;
    build_semi_synthetic_from_table(spec, &table)
}

/// Same as [`build_semi_synthetic`] but over an already-parsed table.
pub fn build_semi_synthetic_from_table(
    spec: &SemiSynSpec,
    table: &CovariateTable,
) -> Result<SemiSynOutput> {
    if spec.p < 1 {
        return Err(Error::Config("need at least one observed confounder".into()));
    }
    let want = spec.p + spec.q;
    if want > table.num_columns() {
        return Err(Error::Config(format!(
            "requested p+q = {want} columns but the table has {}",
            table.num_columns()
        )));
    }

    let mut rng = substream(spec.seed, Stream::Selection);
    let mut indices: Vec<usize> = (0..table.num_columns()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(want);

    let selected = standardize(&table.columns.select_columns(&indices));
    let c = selected.select_columns_range(0, spec.p);
    let u = selected.select_columns_range(spec.p, want);

    let mut rng_s = substream(spec.seed, Stream::Instrument);
    let s = gen_instrument(&c, &u, &mut rng_s)?;
    let mut rng_w = substream(spec.seed, Stream::Treatment);
    let w = gen_treatment(&s, &c, &u, &mut rng_w)?;
    let mut rng_n = substream(spec.seed, Stream::Noise);
    let (y, y1, y0) = gen_outcome(&w, &c, &u, 0.0, &mut rng_n)?;
    let diffs: Vec<f64> = y1.iter().zip(y0.iter()).map(|(a, b)| a - b).collect();
    let true_ace = mean(&diffs);

    let dataset = CivDataset {
        c,
        s,
        w,
        y,
        truth: Some(GroundTruth { y1, y0, u, true_ace }),
    };
    dataset.validate()?;
    Ok(SemiSynOutput {
        dataset,
        observed_columns: indices[..spec.p]
            .iter()
            .map(|&i| table.names[i].clone())
            .collect(),
        hidden_columns: indices[spec.p..]
            .iter()
            .map(|&i| table.names[i].clone())
            .collect(),
        source_rows: table.num_rows(),
    })
}

impl Matrix {
    /// Columns by index, in the given order.
    pub(crate) fn select_columns(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows(), idx.len());
        for i in 0..self.rows() {
            for (k, &j) in idx.iter().enumerate() {
                out.set(i, k, self.get(i, j));
            }
        }
        out
    }

    /// Contiguous column range `[from, to)`.
    pub(crate) fn select_columns_range(&self, from: usize, to: usize) -> Matrix {
        let idx: Vec<usize> = (from..to).collect();
        self.select_columns(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_table(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn sample_table(dir: &Path) -> PathBuf {
        let mut content = String::from("id,a,b,c,d\n");
        for i in 0..50 {
            let x = i as f64;
            content.push_str(&format!(
                "{i},{},{},{},{}\n",
                x * 0.1,
                (x * 0.37).sin() * 3.0,
                100.0 - x,
                (x * x) * 0.01
            ));
        }
        write_table(dir, "cov.csv", &content)
    }

    #[test]
    fn ingestion_reports_bad_cell_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_table(dir.path(), "bad.csv", "a,b\n1,2\n3,oops\n");
        match read_covariate_table(&path, &[]) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn drop_list_removes_nonnumeric_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_table(dir.path(), "mix.csv", "name,x\nfoo,1\nbar,2\nbaz,3\n");
        let t = read_covariate_table(&path, &["name".into()]).unwrap();
        assert_eq!(t.names, vec!["x"]);
        assert_eq!(t.num_rows(), 3);
    }

    #[test]
    fn schema_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let path = sample_table(dir.path());
        let spec = SemiSynSpec {
            covariate_table_path: path,
            p: 2,
            q: 2,
            seed: 9,
            drop_columns: vec!["id".into()],
        };
        let a = build_semi_synthetic(&spec).unwrap();
        let b = build_semi_synthetic(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.dataset.num_confounders(), 2);
        assert_eq!(a.observed_columns.len(), 2);
        assert_eq!(a.hidden_columns.len(), 2);
        // standardized columns keep the sigmoids off the rails
        let t = a.dataset.truth.as_ref().unwrap();
        assert_eq!(t.u.cols(), 2);
    }

    #[test]
    fn insufficient_columns_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = sample_table(dir.path());
        let spec = SemiSynSpec {
            covariate_table_path: path,
            p: 4,
            q: 4,
            seed: 9,
            drop_columns: vec!["id".into()],
        };
        assert!(matches!(build_semi_synthetic(&spec), Err(Error::Config(_))));
    }
}
