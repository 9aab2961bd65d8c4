//! Datasets and their loaders: IDX (MNIST layout, optionally gzipped) and
//! rectangular numeric CSV.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::scalar::{lit, Real};
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::Path;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Feature matrix (`n x H`) with optional integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub features: DenseMatrix<T>,
    pub labels: Option<Vec<usize>>,
    pub name: String,
}

impl<T: Real> Dataset<T> {
    pub fn new(
        name: impl Into<String>,
        features: DenseMatrix<T>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::shape(
                    "Dataset::new",
                    format!("{} labels for {} rows", l.len(), features.rows()),
                ));
            }
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
        })
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    /// Input dimensionality `H`.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m + 1)
    }

    /// Rows `idx` as a new dataset (labels follow).
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
        }
    }

    /// The first `k` rows (all rows when `k >= n`).
    pub fn head(&self, k: usize) -> Self {
        let idx: Vec<usize> = (0..k.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Per-feature min-max scaling into `[0, 1]`; constant columns map to 0.
    pub fn normalize_min_max(&mut self) {
        min_max_normalize(&mut self.features);
    }
}

/// In-place per-column min-max scaling; constant columns become 0.
pub fn min_max_normalize<T: Real>(m: &mut DenseMatrix<T>) {
    let cols = m.cols();
    if m.rows() == 0 {
        return;
    }
    let mut lo = vec![T::infinity(); cols];
    let mut hi = vec![T::neg_infinity(); cols];
    for r in m.row_iter() {
        for c in 0..cols {
            lo[c] = lo[c].min(r[c]);
            hi[c] = hi[c].max(r[c]);
        }
    }
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        for c in 0..cols {
            let span = hi[c] - lo[c];
            row[c] = if span > T::zero() {
                (row[c] - lo[c]) / span
            } else {
                T::zero()
            };
        }
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(path, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(buf: &[u8], at: usize, path: &Path) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

/// Parsed IDX image file: row count and pixel bytes per row.
fn parse_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let buf = read_maybe_gz(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            path,
            format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(&buf, 4, path)? as usize;
    let rows = be_u32(&buf, 8, path)? as usize;
    let cols = be_u32(&buf, 12, path)? as usize;
    let dim = rows * cols;
    let body = &buf[16..];
    if body.len() < n * dim {
        return Err(Error::format(
            path,
            format!("truncated: {} pixel bytes for {n} images of {dim}", body.len()),
        ));
    }
    Ok((n, dim, body[..n * dim].to_vec()))
}

fn parse_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let buf = read_maybe_gz(path)?;
    let magic = be_u32(&buf, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            path,
            format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(&buf, 4, path)? as usize;
    let body = &buf[8..];
    if body.len() < n {
        return Err(Error::format(
            path,
            format!("truncated: {} labels, header says {n}", body.len()),
        ));
    }
    Ok(body[..n].iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label pair. Pixels are scaled by `1/255`.
///
/// Gzipped files are detected by their magic bytes and inflated on the fly.
pub fn load_idx<T: Real>(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Dataset<T>> {
    let images_path = images_path.as_ref();
    let (n, dim, pixels) = parse_idx_images(images_path)?;
    let labels = parse_idx_labels(labels_path.as_ref())?;
    if labels.len() != n {
        return Err(Error::format(
            labels_path.as_ref(),
            format!("{} labels for {n} images", labels.len()),
        ));
    }
    let scale: T = lit(1.0 / 255.0);
    let data = pixels.iter().map(|&p| T::from_u8(p).unwrap() * scale).collect();
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, DenseMatrix::new(n, dim, data)?, Some(labels))
}

/// Options for [`load_csv_with`].
#[derive(Clone, Debug)]
pub struct CsvOptions {
    /// Header name of the integer label column, if any.
    pub label_column: Option<String>,
    /// Apply per-feature min-max scaling.
    pub normalize: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: None,
            normalize: true,
        }
    }
}

/// Loads a numeric CSV and min-max normalizes every feature column.
pub fn load_csv<T: Real>(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset<T>> {
    load_csv_with(
        path,
        &CsvOptions {
            label_column: label_column.map(str::to_owned),
            normalize: true,
        },
    )
}

fn parse_label(cell: &str) -> Option<usize> {
    if let Ok(v) = cell.parse::<usize>() {
        return Some(v);
    }
    let f: f64 = cell.parse().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f < usize::MAX as f64).then_some(f as usize)
}

pub fn load_csv_with<T: Real>(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut records = reader.records();

    let first = match records.next() {
        None => {
            if opts.label_column.is_some() {
                return Err(Error::format(path, "empty file has no label column"));
            }
            return Dataset::new(stem(path), DenseMatrix::zeros(0, 0), None);
        }
        Some(r) => r.map_err(|e| Error::format(path, e.to_string()))?,
    };
    let is_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let width = first.len();

    let label_idx = match &opts.label_column {
        None => None,
        Some(name) => {
            if !is_header {
                return Err(Error::format(
                    path,
                    format!("label column {name:?} requested but the file has no header"),
                ));
            }
            Some(first.iter().position(|c| c == name).ok_or_else(|| {
                Error::format(path, format!("no column named {name:?}"))
            })?)
        }
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    let mut push_row = |rec: &csv::StringRecord, line: usize| -> Result<()> {
        if rec.len() != width {
            return Err(Error::format(
                path,
                format!("line {line}: {} fields, expected {width}", rec.len()),
            ));
        }
        for (c, cell) in rec.iter().enumerate() {
            if Some(c) == label_idx {
                labels.push(parse_label(cell).ok_or_else(|| {
                    Error::format(path, format!("line {line}: label {cell:?} is not a class index"))
                })?);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::format(path, format!("line {line}: non-numeric cell {cell:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::format(path, format!("line {line}: non-finite cell")));
            }
            data.push(T::from_f64(v).unwrap());
        }
        n += 1;
        Ok(())
    };

    if !is_header {
        push_row(&first, 1)?;
    }
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        push_row(&rec, i + 2)?;
    }

    let cols = width - usize::from(label_idx.is_some());
    let mut features = DenseMatrix::new(n, cols, data)?;
    if opts.normalize {
        min_max_normalize(&mut features);
    }
    Dataset::new(stem(path), features, label_idx.map(|_| labels))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    fn idx_images(n: u32, r: u32, c: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, r, c] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn idx_two_tiny_images() {
        let dir = tempfile::tempdir().unwrap();
        let px = [0u8, 51, 102, 255, 255, 0, 1, 2];
        let im = write(dir.path(), "im", &idx_images(2, 2, 2, &px));
        let lb = write(dir.path(), "lb", &idx_labels(&[7, 3]));
        let ds: Dataset<f64> = load_idx(&im, &lb).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 4));
        for (v, &p) in ds.features.as_slice().iter().zip(&px) {
            assert_eq!(*v, p as f64 * (1.0 / 255.0));
        }
        assert_eq!(ds.labels.as_deref(), Some(&[7usize, 3][..]));
    }

    #[test]
    fn idx_gzipped_is_transparent() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let px = [10u8, 20, 30, 40];
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&idx_images(1, 2, 2, &px)).unwrap();
        let im = write(dir.path(), "im.gz", &enc.finish().unwrap());
        let lb = write(dir.path(), "lb", &idx_labels(&[1]));
        let ds: Dataset<f32> = load_idx(&im, &lb).unwrap();
        assert_eq!(ds.dim(), 4);
        assert!((ds.features.get(0, 3) - 40.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let im = write(dir.path(), "im", &idx_images(2, 1, 1, &[1, 2]));
        let lb3 = write(dir.path(), "lb3", &idx_labels(&[0, 1, 2]));
        assert!(matches!(load_idx::<f64>(&im, &lb3), Err(Error::Format { .. })));

        let mut bad = idx_images(2, 1, 1, &[1, 2]);
        bad[3] = 0x04;
        let bad = write(dir.path(), "bad", &bad);
        let lb2 = write(dir.path(), "lb2", &idx_labels(&[0, 1]));
        assert!(matches!(load_idx::<f64>(&bad, &lb2), Err(Error::Format { .. })));

        let short = write(dir.path(), "short", &idx_images(3, 1, 1, &[1, 2]));
        assert!(matches!(load_idx::<f64>(&short, &lb2), Err(Error::Format { .. })));

        // labels file passed where images are expected
        assert!(load_idx::<f64>(&lb2, &lb2).is_err());
    }

    #[test]
    fn csv_min_max() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", b"0,10\n5,5\n10,0\n");
        let ds: Dataset<f64> = load_csv(&p, None).unwrap();
        assert_eq!(ds.features.as_slice(), &[0.0, 1.0, 0.5, 0.5, 1.0, 0.0]);
        assert!(ds.labels.is_none());
    }

    #[test]
    fn csv_label_column_and_constant_feature() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "b.csv", b"f,y,g\n1,0,3\n2,1,3\n3,2,3\n");
        let ds: Dataset<f64> = load_csv(&p, Some("y")).unwrap();
        assert_eq!(ds.labels.as_deref(), Some(&[0usize, 1, 2][..]));
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.features.as_slice(), &[0.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
        assert_eq!(ds.num_classes(), 3);
    }

    #[test]
    fn csv_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = write(dir.path(), "r.csv", b"1,2\n3\n");
        assert!(matches!(load_csv::<f64>(&ragged, None), Err(Error::Format { .. })));
        let text = write(dir.path(), "t.csv", b"a,b\n1,x\n");
        assert!(matches!(load_csv::<f64>(&text, None), Err(Error::Format { .. })));
        let nolabel = write(dir.path(), "n.csv", b"a,b\n1,2\n");
        assert!(load_csv::<f64>(&nolabel, Some("y")).is_err());
        let badlabel = write(dir.path(), "l.csv", b"a,y\n1,-1\n");
        assert!(load_csv::<f64>(&badlabel, Some("y")).is_err());
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut m = DenseMatrix::from_fn(20, 3, |r, c| ((r * 7 + c * 13) % 11) as f64 * 0.37 - 1.0);
        min_max_normalize(&mut m);
        let once = m.clone();
        min_max_normalize(&mut m);
        for (a, b) in once.as_slice().iter().zip(m.as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(m.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
