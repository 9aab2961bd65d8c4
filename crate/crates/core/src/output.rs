//! Embedding results and the CSV files they are persisted to.

use crate::dataset::{load_csv_with, CsvOptions};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::Real;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Low-dimensional coordinates `f(x)` for every input row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingResult<T> {
    pub coords: DenseMatrix<T>,
    pub labels: Option<Vec<usize>>,
    pub source_dataset: String,
    pub model_id: String,
}

impl<T: Real> EmbeddingResult<T> {
    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.cols()
    }
}

/// Writes through a sibling temp file and renames it into place, so readers
/// never observe a partial file.
pub fn atomic_write(path: impl AsRef<Path>, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let path = path.as_ref();
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

/// CSV with header `dim0,dim1,...[,label]`, one row per point.
pub fn write_embedding<T: Real>(result: &EmbeddingResult<T>, path: impl AsRef<Path>) -> Result<()> {
    if !result.coords.is_finite() {
        return Err(Error::NonFinite("write_embedding"));
    }
    if let Some(l) = &result.labels {
        if l.len() != result.len() {
            return Err(Error::shape(
                "write_embedding",
                format!("{} labels for {} rows", l.len(), result.len()),
            ));
        }
    }
    let h = result.dim();
    atomic_write(path, |w| {
        let mut header: Vec<String> = (0..h).map(|d| format!("dim{d}")).collect();
        if result.labels.is_some() {
            header.push("label".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, row) in result.coords.row_iter().enumerate() {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b",")?;
                }
                first = false;
                write!(w, "{v}")?;
            }
            if let Some(l) = &result.labels {
                write!(w, ",{}", l[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Reads a file produced by [`write_embedding`] without rescaling.
pub fn read_embedding<T: Real>(path: impl AsRef<Path>) -> Result<EmbeddingResult<T>> {
    let path = path.as_ref();
    let header = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path, e))?
        .lines()
        .next()
        .unwrap_or_default()
        .to_owned();
    let has_label = header.split(',').any(|c| c.trim() == "label");
    let ds = load_csv_with::<T>(
        path,
        &CsvOptions {
            label_column: has_label.then(|| "label".to_owned()),
            normalize: false,
        },
    )?;
    let coords = if ds.features.is_empty() && !header.is_empty() {
        let h = header.split(',').filter(|c| c.trim().starts_with("dim")).count();
        DenseMatrix::zeros(0, h)
    } else {
        ds.features
    };
    Ok(EmbeddingResult {
        coords,
        labels: ds.labels,
        source_dataset: ds.name,
        model_id: String::new(),
    })
}

/// Plain numeric CSV (header `x0,x1,...`), used for exemplar sets.
pub fn write_matrix_csv<T: Real>(m: &DenseMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path, |w| {
        let header: Vec<String> = (0..m.cols()).map(|d| format!("x{d}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in m.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })
}

pub fn read_matrix_csv<T: Real>(path: impl AsRef<Path>) -> Result<DenseMatrix<T>> {
    Ok(load_csv_with::<T>(
        path,
        &CsvOptions {
            label_column: None,
            normalize: false,
        },
    )?
    .features)
}
