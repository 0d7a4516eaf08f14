//! LIBSVM sparse text I/O, row normalization and dataset hashing.
//!
//! On disk, feature indices are 1-based; in memory they are 0-based. The
//! canonical written form is `label idx:val ...` with ascending indices,
//! shortest round-trip decimals, single spaces and LF line endings.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcws_hash::{self, GcwsConfig};
use crate::kernels::KernelMatrix;
use crate::rff_hash::{self, RffConfig};
use crate::vectors::{l2_normalize, transform, CenterVector, SparseVector, VectorView};

/// Labelled sparse rows sharing one ambient dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    rows: Vec<(f64, SparseVector)>,
    dim: usize,
}

impl Dataset {
    /// Dimension is the largest row dimension.
    pub fn new(rows: Vec<(f64, SparseVector)>) -> Result<Self> {
        let dim = rows.iter().map(|(_, x)| x.dim()).max().unwrap_or(0);
        Self::with_dim(rows, dim)
    }

    pub fn with_dim(rows: Vec<(f64, SparseVector)>, dim: usize) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(r, (label, x))| {
                if !label.is_finite() {
                    return Err(Error::Row {
                        row: r,
                        source: Box::new(Error::NonFinite { index: 0 }),
                    });
                }
                let x = x.with_dim(dim).map_err(|e| Error::Row {
                    row: r,
                    source: Box::new(e),
                })?;
                Ok((label, x))
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { rows, dim })
    }

    pub fn rows(&self) -> &[(f64, SparseVector)] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|(y, _)| *y)
    }

    /// Rows at the given positions, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            dim: self.dim,
        }
    }
}

/// Label and `(index, value)` pairs of one data line.
type ParsedLine = (f64, Vec<(usize, f64)>);

fn parse_line(line: &str, line_no: usize) -> Result<Option<ParsedLine>> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    if trimmed.starts_with('#') {
        return Err(err("comment lines are not part of the format".into()));
    }
    let mut tokens = trimmed.split_ascii_whitespace();
    let label_tok = tokens.next().expect("line is not blank");
    let label: f64 = label_tok
        .parse()
        .ok()
        .filter(|y: &f64| y.is_finite())
        .ok_or_else(|| err(format!("invalid label '{label_tok}'")))?;
    let mut pairs = Vec::new();
    let mut last = 0usize;
    for tok in tokens {
        let (i, v) = tok
            .split_once(':')
            .ok_or_else(|| err(format!("malformed token '{tok}'")))?;
        let i: usize = i
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| err(format!("invalid index in '{tok}'")))?;
        let v: f64 = v
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("invalid value in '{tok}'")))?;
        if i <= last {
            return Err(err(format!("index {i} does not increase (previous {last})")));
        }
        last = i;
        pairs.push((i - 1, v));
    }
    Ok(Some((label, pairs)))
}

/// Parses LIBSVM text one line at a time. Blank lines are skipped; zero
/// values are dropped.
pub fn parse_libsvm<R: BufRead>(mut reader: R) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        if let Some((label, pairs)) = parse_line(&line, line_no)? {
            let bound = pairs.last().map_or(0, |&(i, _)| i + 1);
            let x = SparseVector::new(bound, pairs).expect("indices checked while parsing");
            let dim = x.indices().last().map_or(0, |&i| i + 1);
            rows.push((label, x.with_dim(dim).expect("shrinks to last nonzero")));
        }
    }
    Dataset::new(rows)
}

pub fn parse_libsvm_str(text: &str) -> Result<Dataset> {
    parse_libsvm(text.as_bytes())
}

/// Opens a file for reading, decompressing when the name ends in `.gz`.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    let f = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::new(f)))
    }
}

pub fn read_libsvm_file(path: &Path) -> Result<Dataset> {
    parse_libsvm(open_input(path)?)
}

pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let mut line = String::new();
    for (label, x) in &ds.rows {
        line.clear();
        line.push_str(&label.to_string());
        for (i, v) in x.nonzeros() {
            line.push_str(&format!(" {}:{}", i + 1, v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn libsvm_string(ds: &Dataset) -> String {
    let mut buf = Vec::new();
    write_libsvm(ds, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Scales every nonzero row to unit l2 norm. Returns the dataset and the
/// indices of all-zero rows, which pass through unchanged.
pub fn normalize_dataset(ds: &Dataset) -> (Dataset, Vec<usize>) {
    let mut zero_rows = Vec::new();
    let rows = ds
        .rows
        .iter()
        .enumerate()
        .map(|(r, (y, x))| match l2_normalize(x) {
            Ok(n) => (*y, n),
            Err(_) => {
                zero_rows.push(r);
                (*y, x.clone())
            }
        })
        .collect();
    if !zero_rows.is_empty() {
        log::warn!("{} all-zero rows left unnormalized", zero_rows.len());
    }
    (Dataset { rows, dim: ds.dim }, zero_rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Gcws(GcwsConfig),
    Rff(RffConfig),
}

/// Replaces every row by its hashed features; labels and order are kept.
///
/// GCWS rows become `k` one-hot blocks (dimension `k 2^b`); all-zero rows are
/// rejected together in one error. RFF rows become `k` dense values and must
/// already be unit-normalized.
pub fn hash_dataset(ds: &Dataset, scheme: &Scheme) -> Result<Dataset> {
    match scheme {
        Scheme::Gcws(cfg) => {
            cfg.validate()?;
            let mu = CenterVector::zeros(ds.dim);
            let hashed: Vec<Option<SparseVector>> = ds
                .rows
                .par_iter()
                .map(|(_, x)| {
                    let tv = transform(x, &mu).expect("row dimension equals dataset dimension");
                    if tv.is_empty() {
                        return None;
                    }
                    let sk = gcws_hash::sketch(&tv, cfg).expect("nonempty row");
                    Some(gcws_hash::encode(&sk, cfg).to_sparse())
                })
                .collect();
            let zero: Vec<usize> = hashed
                .iter()
                .enumerate()
                .filter_map(|(r, h)| h.is_none().then_some(r))
                .collect();
            if !zero.is_empty() {
                return Err(Error::ZeroRows { rows: zero });
            }
            let rows = ds.labels().zip(hashed.into_iter().flatten()).collect();
            Ok(Dataset {
                rows,
                dim: cfg.encoded_dim(),
            })
        }
        Scheme::Rff(cfg) => {
            cfg.validate()?;
            let rows = ds
                .rows
                .par_iter()
                .enumerate()
                .map(|(r, (y, x))| {
                    let f = rff_hash::rff_features(x, cfg).map_err(|e| Error::Row {
                        row: r,
                        source: Box::new(e),
                    })?;
                    let x = f.to_sparse().with_dim(cfg.k).expect("k features");
                    Ok((*y, x))
                })
                .collect::<Result<_>>()?;
            Ok(Dataset { rows, dim: cfg.k })
        }
    }
}

/// LIBSVM precomputed-kernel form: `label 0:<row id> 1:K(i,1) ... n:K(i,n)`,
/// row ids 1-based, every entry written.
pub fn write_precomputed_kernel<W: Write>(labels: &[f64], km: &KernelMatrix, mut out: W) -> Result<()> {
    if labels.len() != km.n() {
        return Err(Error::DimensionMismatch {
            expected: km.n(),
            found: labels.len(),
        });
    }
    let mut line = String::new();
    for (i, y) in labels.iter().enumerate() {
        line.clear();
        line.push_str(&format!("{y} 0:{}", i + 1));
        for (j, v) in km.row(i).iter().enumerate() {
            line.push_str(&format!(" {}:{v}", j + 1));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `rows` as CSV with a header taken from the field names.
pub fn csv_table<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(text: &str) -> Dataset {
        parse_libsvm_str(text).unwrap()
    }

    /// Parses the written form back at the original dimension.
    fn reparse(d: &Dataset) -> Dataset {
        Dataset::with_dim(ds(&libsvm_string(d)).rows().to_vec(), d.dim()).unwrap()
    }

    #[test]
    fn parses_one_row() {
        let d = ds("1 1:0.5 3:-2\n");
        assert_eq!(d.len(), 1);
        assert!(d.dim() >= 3);
        let (y, x) = &d.rows()[0];
        assert_eq!(*y, 1.0);
        assert_eq!(x.indices(), &[0, 2]);
        assert_eq!(x.values(), &[0.5, -2.0]);
    }

    #[test]
    fn empty_and_blank_inputs() {
        assert!(ds("").is_empty());
        let d = ds("\n  \n+1 2:1\r\n\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d.dim(), 2);
    }

    #[test]
    fn zero_values_dropped() {
        let d = ds("0 1:0 2:3 4:0.0\n");
        assert_eq!(d.rows()[0].1.indices(), &[1]);
        assert_eq!(d.dim(), 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        for (text, line) in [
            ("1 1:1\n1 2:1 2:3\n", 2),
            ("1 1:1\n\n1 3:1 2:1\n", 3),
            ("1 0:1\n", 1),
            ("1 a:1\n", 1),
            ("1 1:x\n", 1),
            ("1 1\n", 1),
            ("one 1:1\n", 1),
            ("1 1:1\n# comment\n", 2),
            ("1 1:nan\n", 1),
        ] {
            match parse_libsvm_str(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn canonical_write() {
        let x = SparseVector::new(6, [(5, 1.0)]).unwrap();
        let d = Dataset::new(vec![(-1.0, x)]).unwrap();
        assert_eq!(libsvm_string(&d), "-1 6:1\n");
        assert_eq!(libsvm_string(&Dataset::default()), "");
        assert_eq!(libsvm_string(&ds("+1.0 1:0.50 3:-2e0\n")), "1 1:0.5 3:-2\n");
    }

    #[test]
    fn gzip_input() {
        use flate2::write::GzEncoder;
        let dir = std::env::temp_dir().join(format!("kernlin-gz-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.svm.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        enc.write_all(b"1 1:1 2:2\n-1 3:4\n").unwrap();
        enc.finish().unwrap();
        let d = read_libsvm_file(&path).unwrap();
        assert_eq!(libsvm_string(&d), "1 1:1 2:2\n-1 3:4\n");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn random_row() -> impl Strategy<Value = (i8, Vec<(u8, f64)>)> {
        (
            -3i8..4,
            prop::collection::vec((0u8..60, prop_oneof![-1e6..1e6f64, Just(0.0), -1e-8..1e-8f64]), 0..12),
        )
    }

    fn render(rows: &[(i8, Vec<(u8, f64)>)]) -> String {
        rows.iter()
            .map(|(y, pairs)| {
                let mut idx: Vec<(u8, f64)> = pairs.clone();
                idx.sort_by_key(|p| p.0);
                idx.dedup_by_key(|p| p.0);
                let toks: Vec<String> = idx
                    .iter()
                    .map(|(i, v)| format!("{}:{:e}", *i as usize + 1, v))
                    .collect();
                format!("{y}  {}\n", toks.join("\t"))
            })
            .collect()
    }

    proptest! {
        #[test]
        fn parse_write_parse_is_stable(rows in prop::collection::vec(random_row(), 100)) {
            let text = render(&rows);
            let a = ds(&text);
            let written = libsvm_string(&a);
            let b = ds(&written);
            prop_assert_eq!(a.rows(), b.rows());
            prop_assert_eq!(libsvm_string(&b), written);
        }

        #[test]
        fn normalized_rows_have_unit_norm(rows in prop::collection::vec(random_row(), 1..40)) {
            let (n, zeros) = normalize_dataset(&ds(&render(&rows)));
            for (r, (_, x)) in n.rows().iter().enumerate() {
                if zeros.contains(&r) {
                    prop_assert_eq!(x.nnz(), 0);
                } else {
                    prop_assert!((x.norm() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let (n, zeros) = normalize_dataset(&ds("1 1:3 2:4\n0\n"));
        assert_eq!(n.rows()[0].1.values(), &[0.6, 0.8]);
        assert_eq!(n.rows()[1].1.nnz(), 0);
        assert_eq!(zeros, vec![1]);
    }

    #[test]
    fn gcws_hashing_shape_and_determinism() {
        let d = ds("1 1:1 2:-3\n2 3:0.5\n-1 1:-1 3:2 5:7\n");
        let cfg = GcwsConfig::new(4, 2, 99).unwrap();
        let h = hash_dataset(&d, &Scheme::Gcws(cfg)).unwrap();
        assert_eq!(h.dim(), 16);
        assert_eq!(h.labels().collect::<Vec<_>>(), vec![1.0, 2.0, -1.0]);
        for (_, x) in h.rows() {
            assert_eq!(x.nnz(), 4);
        }
        let again = hash_dataset(&d, &Scheme::Gcws(cfg)).unwrap();
        assert_eq!(libsvm_string(&h), libsvm_string(&again));
        assert_eq!(reparse(&h), h);
    }

    #[test]
    fn gcws_hashing_reports_zero_rows() {
        let d = ds("1 1:1\n2\n3 2:1\n4\n");
        let cfg = GcwsConfig::new(4, 2, 0).unwrap();
        match hash_dataset(&d, &Scheme::Gcws(cfg)) {
            Err(Error::ZeroRows { rows }) => assert_eq!(rows, vec![1, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rff_hashing_shape() {
        let (d, _) = normalize_dataset(&ds("1 1:1 2:-3\n2 3:0.5\n-1 1:-1 3:2 5:7\n"));
        let cfg = RffConfig::new(8, 1.0, 3).unwrap();
        let h = hash_dataset(&d, &Scheme::Rff(cfg)).unwrap();
        assert_eq!(h.dim(), 8);
        for (_, x) in h.rows() {
            assert_eq!(x.nnz(), 8);
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
        let raw = ds("1 1:1 2:-3\n");
        assert!(matches!(
            hash_dataset(&raw, &Scheme::Rff(cfg)),
            Err(Error::Row { row: 0, .. })
        ));
    }

    #[test]
    fn precomputed_kernel_rows() {
        use crate::kernels::{kernel_matrix, KernelKind};
        let d = ds("1 1:1\n-1 1:1 2:1\n");
        let xs: Vec<SparseVector> = d.rows().iter().map(|(_, x)| x.clone()).collect();
        let km = kernel_matrix(&xs, KernelKind::Gmm).unwrap();
        let labels: Vec<f64> = d.labels().collect();
        let mut buf = Vec::new();
        write_precomputed_kernel(&labels, &km, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1 0:1 1:1 2:0.5\n-1 0:2 1:0.5 2:1\n");
        assert!(write_precomputed_kernel(&labels[..1], &km, Vec::new()).is_err());
    }

    #[test]
    fn hashed_thousand_rows_round_trip() {
        let text: String = (0..1000)
            .map(|r| format!("{} {}:{} {}:-1\n", r % 3, r % 7 + 1, r + 1, r % 7 + 9))
            .collect();
        let d = ds(&text);
        let h = hash_dataset(&d, &Scheme::Gcws(GcwsConfig::new(16, 4, 5).unwrap())).unwrap();
        assert_eq!(reparse(&h), h);
        let (n, _) = normalize_dataset(&d);
        let h = hash_dataset(&n, &Scheme::Rff(RffConfig::new(16, 2.0, 5).unwrap())).unwrap();
        assert_eq!(reparse(&h), h);
    }
}
