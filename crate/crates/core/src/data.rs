//! Datasets: the two-class spiral, IDX and CSV ingestion, splitting and
//! seeded minibatching.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::numerics::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                op: "dataset",
                left: inputs.shape(),
                right: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.inputs.row(i));
        }
        Batch {
            inputs: Matrix::from_vec(indices.len(), d, data).expect("row lengths agree"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn subset(&self, indices: &[usize]) -> Dataset {
        let b = self.select(indices);
        Dataset {
            inputs: b.inputs,
            labels: b.labels,
            class_count: self.class_count,
        }
    }

    pub fn as_batch(&self) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralSpec {
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_train() -> usize {
    500
}

fn default_n_test() -> usize {
    1000
}

fn default_sigma() -> f64 {
    0.02
}

impl Default for SpiralSpec {
    fn default() -> Self {
        Self {
            n_train: default_n_train(),
            n_test: default_n_test(),
            noise_sigma: default_sigma(),
            seed: 0,
        }
    }
}

impl SpiralSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("spiral n_train and n_test must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "spiral noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Noise-free spiral point for parameter `t ∈ [0, 1]`; class 1 is class 0
/// rotated by half a turn.
pub fn spiral_point(t: f64, class: usize) -> (f64, f64) {
    let rad = 2.0 * t.sqrt();
    let arg = 8.0 * t.sqrt() * PI + class as f64 * PI;
    (rad * arg.cos(), rad * arg.sin())
}

fn spiral_set(n: usize, sigma: f64, rng: &mut Rng) -> Dataset {
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let t = rng.uniform();
        let (x, y) = spiral_point(t, class);
        let (nx, ny) = if sigma > 0.0 {
            (rng.normal(), rng.normal())
        } else {
            (0.0, 0.0)
        };
        data.push(x + sigma * nx);
        data.push(y + sigma * ny);
        labels.push(class);
    }
    Dataset {
        inputs: Matrix::from_vec(n, 2, data).expect("2 columns"),
        labels,
        class_count: 2,
    }
}

/// Train and test spirals. Classes alternate, so each set is balanced to
/// within one point. The two sets use independent random streams.
pub fn spiral_generate(spec: &SpiralSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let train = spiral_set(spec.n_train, spec.noise_sigma, &mut Rng::derive(spec.seed, 0));
    let test = spiral_set(spec.n_test, spec.noise_sigma, &mut Rng::derive(spec.seed, 1));
    Ok((train, test))
}

/// Minibatch size given either as a fraction of the dataset or a count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchSize {
    Fraction(f64),
    Count(usize),
}

impl BatchSize {
    /// Concrete size for a dataset of `n` items (fractions are rounded to the
    /// nearest integer).
    pub fn resolve(self, n: usize) -> Result<usize> {
        let size = match self {
            BatchSize::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "batch fraction must lie in (0, 1], got {f}"
                    )));
                }
                (f * n as f64).round() as usize
            }
            BatchSize::Count(c) => c,
        };
        if size == 0 {
            return Err(Error::InvalidArgument("batch size resolves to 0".into()));
        }
        if size > n {
            return Err(Error::TooLarge {
                requested: size,
                available: n,
            });
        }
        Ok(size)
    }
}

/// `size` distinct indices of `0..n`, uniformly at random (partial
/// Fisher–Yates).
pub fn sample_indices(n: usize, size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if size > n {
        return Err(Error::TooLarge {
            requested: size,
            available: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(size);
    Ok(idx)
}

pub fn minibatch_sample(ds: &Dataset, size: BatchSize, rng: &mut Rng) -> Result<Batch> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let size = size.resolve(ds.len())?;
    Ok(ds.select(&sample_indices(ds.len(), size, rng)?))
}

/// One pass over the data: a random permutation cut into consecutive
/// batches of `size` (the last one possibly shorter).
pub fn epoch_batches(n: usize, size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    perm.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Disjoint random split into `n_train` and `n − n_train` items.
pub fn train_test_split(ds: &Dataset, n_train: usize, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if n_train > ds.len() {
        return Err(Error::TooLarge {
            requested: n_train,
            available: ds.len(),
        });
    }
    let mut perm: Vec<usize> = (0..ds.len()).collect();
    rng.shuffle(&mut perm);
    let (a, b) = perm.split_at(n_train);
    Ok((ds.subset(a), ds.subset(b)))
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

const IDX_UBYTE: u8 = 0x08;

/// An unsigned-byte IDX array: `dims` (outermost first) and row-major data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX byte stream: two zero bytes, type code `0x08`, number of
/// dimensions, one big-endian `u32` per dimension, then the payload.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 {
        return Err(malformed("file shorter than the 4-byte magic number".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(malformed(format!(
            "bad magic number {:02x}{:02x}{:02x}{:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(malformed(format!("unsupported element type 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(malformed("zero dimensions".into()));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(malformed("truncated dimension header".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims.iter().product::<usize>();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(malformed(format!(
            "dimensions {dims:?} need {expected} bytes, found {}",
            payload.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, path)
}

pub fn encode_idx(arr: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, IDX_UBYTE, arr.dims.len() as u8];
    for &d in &arr.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    out
}

pub fn write_idx(path: impl AsRef<Path>, arr: &IdxArray) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_idx(arr)).map_err(|e| Error::io(path, e))
}

/// Images file (`n × d₁ × … `, unsigned bytes) plus labels file (`n`).
/// Pixels are scaled by `1/255`; each image is flattened into one row.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let img = read_idx(images.as_ref())?;
    let lab = read_idx(labels.as_ref())?;
    if lab.dims.len() != 1 {
        return Err(Error::Malformed {
            path: labels.as_ref().to_path_buf(),
            reason: format!("labels must be one-dimensional, got dims {:?}", lab.dims),
        });
    }
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(Error::Malformed {
            path: labels.as_ref().to_path_buf(),
            reason: format!("{} labels for {n} images", lab.dims[0]),
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = img.dims[1..].iter().product::<usize>();
    let pixels = img.data.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = lab.data.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Matrix::from_vec(n, d, pixels)?, labels, class_count)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Column roles of a CSV file. Every column except the label column is a
/// real-valued feature, in file order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    /// Defaults to one more than the largest label present.
    #[serde(default)]
    pub class_count: Option<usize>,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == schema.label_column)
        .ok_or_else(|| malformed(format!("no column named {:?}", schema.label_column)))?;
    let d = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if j == label_idx {
                let l = field
                    .parse::<usize>()
                    .map_err(|_| malformed(format!("row {}: label {field:?} is not a class index", row + 1)))?;
                labels.push(l);
            } else {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| malformed(format!("row {}: {field:?} is not a number", row + 1)))?;
                data.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class_count = schema
        .class_count
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(Matrix::from_vec(labels.len(), d, data)?, labels, class_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn spiral_reference_points() {
        let (x, y) = spiral_point(0.25, 0);
        assert!((x - 1.0).abs() < 1e-15 && y.abs() < 1e-14);
        let (x, y) = spiral_point(1.0, 0);
        assert!((x - 2.0).abs() < 1e-15 && y.abs() < 1e-14);
        let (x, y) = spiral_point(1.0, 1);
        assert!((x + 2.0).abs() < 1e-15 && y.abs() < 1e-14);
    }

    #[test]
    fn spiral_defaults_and_determinism() {
        let spec = SpiralSpec::default();
        let (tr, te) = spiral_generate(&spec).unwrap();
        assert_eq!((tr.len(), te.len()), (500, 1000));
        assert_eq!(spiral_generate(&spec).unwrap(), (tr.clone(), te));
        let ones = tr.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 250);
    }

    #[test]
    fn noise_free_radius_law() {
        // x² + y² = 4t, and the angle is consistent with that t
        let spec = SpiralSpec {
            n_train: 101,
            n_test: 1,
            noise_sigma: 0.0,
            seed: 9,
        };
        let (tr, _) = spiral_generate(&spec).unwrap();
        for i in 0..tr.len() {
            let (x, y) = (tr.inputs[(i, 0)], tr.inputs[(i, 1)]);
            let t = (x * x + y * y) / 4.0;
            let (px, py) = spiral_point(t, tr.labels[i]);
            assert!((px - x).abs() < 1e-12 && (py - y).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_sizes() {
        let (tr, _) = spiral_generate(&SpiralSpec::default()).unwrap();
        let mut rng = Rng::new(0);
        assert_eq!(minibatch_sample(&tr, BatchSize::Fraction(0.05), &mut rng).unwrap().len(), 25);
        let full = minibatch_sample(&tr, BatchSize::Fraction(1.0), &mut rng).unwrap();
        assert_eq!(full.len(), 500);
        let mut sorted = full.inputs.as_slice().to_vec();
        let mut orig = tr.inputs.as_slice().to_vec();
        sorted.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(sorted, orig);
        assert!(minibatch_sample(&tr, BatchSize::Count(501), &mut rng).is_err());
    }

    #[test]
    fn sample_indices_distinct_and_seeded() {
        let a = sample_indices(50, 30, &mut Rng::new(3)).unwrap();
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 30);
        assert_eq!(a, sample_indices(50, 30, &mut Rng::new(3)).unwrap());
    }

    #[test]
    fn epoch_covers_everything_once() {
        let batches = epoch_batches(53, 10, &mut Rng::new(1));
        assert_eq!(batches.len(), 6);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
    }

    #[test]
    fn split_properties() {
        let (tr, _) = spiral_generate(&SpiralSpec::default()).unwrap();
        let (a, b) = train_test_split(&tr, 500, &mut Rng::new(0)).unwrap();
        assert_eq!((a.len(), b.len()), (500, 0));
        let (a, b) = train_test_split(&tr, 123, &mut Rng::new(0)).unwrap();
        assert_eq!(a.len() + b.len(), 500);
        assert_eq!(train_test_split(&tr, 123, &mut Rng::new(0)).unwrap(), (a, b));
        assert!(train_test_split(&tr, 501, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn idx_hand_written_fixture() {
        // 4 images of 2×3 pixels
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 3];
        bytes.extend((0..24).map(|i| if i == 5 { 255 } else { i as u8 }));
        let img = parse_idx(&bytes, Path::new("img")).unwrap();
        assert_eq!(img.dims, vec![4, 2, 3]);
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 4, 3, 1, 4, 1];
        let lab = parse_idx(&labels, Path::new("lab")).unwrap();
        assert_eq!(lab.data, vec![3, 1, 4, 1]);

        let dir = tempfile::tempdir().unwrap();
        let (pi, pl) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
        fs::write(&pi, &bytes).unwrap();
        fs::write(&pl, &labels).unwrap();
        let ds = load_idx(&pi, &pl).unwrap();
        assert_eq!(ds.inputs.shape(), (4, 6));
        assert_eq!(ds.labels, vec![3, 1, 4, 1]);
        assert_eq!(ds.class_count, 5);
        assert_eq!(ds.inputs[(0, 5)], 1.0);
        assert_eq!(ds.inputs[(1, 0)], 6.0 / 255.0);
        assert_eq!(encode_idx(&img), bytes);
    }

    #[test]
    fn idx_rejects_bad_input() {
        let p = Path::new("x");
        assert!(parse_idx(&[1, 0, 8, 1, 0, 0, 0, 0], p).is_err());
        assert!(parse_idx(&[0, 0, 0x0d, 1, 0, 0, 0, 0], p).is_err());
        assert!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2], p).is_err());
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "a,label,b\n0.5,1,2\n-1,0,3.25\n").unwrap();
        let schema = CsvSchema {
            label_column: "label".into(),
            class_count: None,
        };
        let ds = load_csv(&path, &schema).unwrap();
        assert_eq!(ds.inputs, Matrix::from_rows(&[[0.5, 2.0], [-1.0, 3.25]]));
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.class_count, 2);

        fs::write(&path, "a,label,b\n").unwrap();
        assert!(matches!(load_csv(&path, &schema), Err(Error::EmptyDataset)));
    }
}
