//! Matrix files, cube sidecars and raster output.
//!
//! Three matrix formats are supported: Matrix Market (array on write, array
//! or coordinate on read), a versioned little-endian binary and plain CSV.
//! Every writer goes through [`write_atomic`].

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// First eight bytes of the binary format.
pub const BIN_MAGIC: &[u8; 8] = b"SEPNMF\0M";
pub const BIN_VERSION: u32 = 1;
const BIN_HEADER: usize = 8 + 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Mtx,
    Bin,
    Csv,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Mtx => "mtx",
            MatrixFormat::Bin => "bin",
            MatrixFormat::Csv => "csv",
        }
    }

    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "mtx" | "mm" => Some(MatrixFormat::Mtx),
            "bin" => Some(MatrixFormat::Bin),
            "csv" => Some(MatrixFormat::Csv),
            _ => None,
        }
    }
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Serializes `value` as pretty JSON with a trailing newline, atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn encode_matrix(a: &DenseMatrix, format: MatrixFormat) -> Vec<u8> {
    match format {
        MatrixFormat::Mtx => encode_mtx(a).into_bytes(),
        MatrixFormat::Bin => encode_bin(a),
        MatrixFormat::Csv => encode_csv(a).into_bytes(),
    }
}

pub fn write_matrix(path: &Path, a: &DenseMatrix, format: MatrixFormat) -> Result<()> {
    write_atomic(path, &encode_matrix(a, format))
}

/// Reads a matrix, choosing the format by binary magic first and then by
/// extension. Unknown extensions are tried as Matrix Market.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BIN_MAGIC) {
        return decode_bin(&bytes).map_err(|msg| Error::parse(path, msg));
    }
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::parse(path, "not UTF-8 text"))?;
    let res = match MatrixFormat::from_path(path) {
        Some(MatrixFormat::Csv) => decode_csv(text),
        Some(MatrixFormat::Bin) => Err("missing binary header".to_string()),
        _ => decode_mtx(text),
    };
    res.map_err(|msg| Error::parse(path, msg))
}

fn encode_mtx(a: &DenseMatrix) -> String {
    let (r, c) = a.shape();
    let mut s = String::with_capacity(24 * r * c + 64);
    s.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{r} {c}");
    for &x in a.as_slice() {
        let _ = writeln!(s, "{x:e}");
    }
    s
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    Skew,
}

fn decode_mtx(text: &str) -> std::result::Result<DenseMatrix, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(format!("bad Matrix Market banner {header:?}"));
    }
    let coordinate = match words[2].as_str() {
        "array" => false,
        "coordinate" => true,
        other => return Err(format!("unsupported layout {other:?}")),
    };
    let pattern = match words[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(format!("unsupported field {other:?}")),
    };
    let sym = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::Skew,
        other => return Err(format!("unsupported symmetry {other:?}")),
    };
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size: Vec<usize> = body
        .next()
        .ok_or("missing size line")?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| format!("size line: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("value {t:?}: {e}"));
    if coordinate {
        let [rows, cols, nnz] = size[..] else {
            return Err("coordinate size line needs rows cols nnz".into());
        };
        if sym != Symmetry::General && rows != cols {
            return Err("symmetric matrix must be square".into());
        }
        let mut a = DenseMatrix::zeros(rows, cols);
        let mut seen = 0;
        for line in body {
            let t: Vec<&str> = line.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if t.len() != want {
                return Err(format!("entry line {line:?}"));
            }
            let i: usize = t[0].parse().map_err(|e| format!("row index: {e}"))?;
            let j: usize = t[1].parse().map_err(|e| format!("column index: {e}"))?;
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(format!("entry ({i}, {j}) out of range"));
            }
            let v = if pattern { 1.0 } else { num(t[2])? };
            a[(i - 1, j - 1)] += v;
            if i != j {
                match sym {
                    Symmetry::General => {}
                    Symmetry::Symmetric => a[(j - 1, i - 1)] += v,
                    Symmetry::Skew => a[(j - 1, i - 1)] -= v,
                }
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(format!("expected {nnz} entries, found {seen}"));
        }
        check_finite(a)
    } else {
        let [rows, cols] = size[..] else {
            return Err("array size line needs rows cols".into());
        };
        let values: Vec<f64> = body.map(num).collect::<std::result::Result<_, _>>()?;
        let mut a = DenseMatrix::zeros(rows, cols);
        if sym == Symmetry::General {
            if values.len() != rows * cols {
                return Err(format!("expected {} values, found {}", rows * cols, values.len()));
            }
            a.as_mut_slice().copy_from_slice(&values);
        } else {
            if rows != cols {
                return Err("symmetric matrix must be square".into());
            }
            // Lower triangle by columns; skew omits the diagonal.
            let skip = usize::from(sym == Symmetry::Skew);
            let mut it = values.iter();
            for j in 0..cols {
                for i in j + skip..rows {
                    let v = *it.next().ok_or("too few values for symmetric storage")?;
                    a[(i, j)] = v;
                    a[(j, i)] = if sym == Symmetry::Skew { -v } else { v };
                }
            }
            if it.next().is_some() {
                return Err("too many values for symmetric storage".into());
            }
        }
        check_finite(a)
    }
}

fn check_finite(a: DenseMatrix) -> std::result::Result<DenseMatrix, String> {
    if a.is_finite() {
        Ok(a)
    } else {
        Err("non-finite value".into())
    }
}

fn encode_bin(a: &DenseMatrix) -> Vec<u8> {
    let (r, c) = a.shape();
    let mut out = Vec::with_capacity(BIN_HEADER + 8 * r * c);
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    out.extend_from_slice(&(r as u64).to_le_bytes());
    out.extend_from_slice(&(c as u64).to_le_bytes());
    for x in a.to_row_major() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn decode_bin(bytes: &[u8]) -> std::result::Result<DenseMatrix, String> {
    if bytes.len() < BIN_HEADER {
        return Err("truncated header".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != BIN_VERSION {
        return Err(format!("unsupported binary version {version}"));
    }
    let r = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let c = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let n = r.checked_mul(c).ok_or("dimensions overflow")?;
    let payload = &bytes[BIN_HEADER..];
    if payload.len() != 8 * n {
        return Err(format!("expected {} payload bytes, found {}", 8 * n, payload.len()));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    DenseMatrix::from_row_major(r, c, &data).map_err(|e| e.to_string())
}

fn encode_csv(a: &DenseMatrix) -> String {
    let mut s = String::new();
    for i in 0..a.rows() {
        let row: Vec<String> = a.row(i).iter().map(|x| format!("{x:e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn decode_csv(text: &str) -> std::result::Result<DenseMatrix, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row: Vec<f64> = rec
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| format!("value {t:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no rows".into());
    }
    DenseMatrix::from_rows(&rows).map_err(|e| e.to_string())
}

/// Shape metadata stored next to a bands × pixels cube matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CubeMeta {
    pub bands: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
}

impl CubeMeta {
    /// Checks the metadata against a bands × pixels matrix.
    pub fn validate(&self, a: &DenseMatrix) -> Result<()> {
        if self.bands != a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "sidecar says {} bands, matrix has {} rows",
                self.bands,
                a.rows()
            )));
        }
        if let (Some(h), Some(w)) = (self.height, self.width) {
            if h * w != a.cols() {
                return Err(Error::DimensionMismatch(format!(
                    "sidecar grid {h}x{w} does not match {} pixels",
                    a.cols()
                )));
            }
        }
        if let Some(wl) = &self.wavelengths {
            if wl.len() != self.bands {
                return Err(Error::DimensionMismatch(format!(
                    "{} wavelengths for {} bands",
                    wl.len(),
                    self.bands
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        Some((self.height?, self.width?))
    }
}

/// Sidecar path for a cube matrix: `cube.mtx` → `cube.json`.
pub fn sidecar_path(matrix: &Path) -> PathBuf {
    matrix.with_extension("json")
}

/// Parses a 1-based band list such as `1-4,76,101-111` into sorted 0-based
/// indices.
pub fn parse_band_list(list: &str) -> Result<Vec<usize>> {
    let bad = || Error::Invalid(format!("bad band list {list:?}"));
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse::<usize>(), b.trim().parse::<usize>()),
            None => (part.parse::<usize>(), part.parse::<usize>()),
        };
        let (lo, hi) = (lo.map_err(|_| bad())?, hi.map_err(|_| bad())?);
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        out.extend(lo - 1..hi);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Removes the listed rows (bands) and the matching wavelengths.
pub fn drop_bands(a: &DenseMatrix, meta: &mut CubeMeta, drop: &[usize]) -> Result<DenseMatrix> {
    if let Some(&b) = drop.iter().find(|&&b| b >= a.rows()) {
        return Err(Error::Invalid(format!("band {} out of range 1..={}", b + 1, a.rows())));
    }
    let keep: Vec<usize> = (0..a.rows()).filter(|i| drop.binary_search(i).is_err()).collect();
    if keep.is_empty() {
        return Err(Error::Invalid("every band dropped".into()));
    }
    let out = DenseMatrix::from_fn(keep.len(), a.cols(), |i, j| a[(keep[i], j)]);
    meta.bands = keep.len();
    if let Some(wl) = &meta.wavelengths {
        meta.wavelengths = Some(keep.iter().map(|&i| wl[i]).collect());
    }
    Ok(out)
}

/// 8-bit binary PGM of `values` on a `height × width` grid. Pixel `p` sits at
/// row `p % height`, column `p / height` (column-major, as cubes are stored).
/// Values are clamped to [0, 1]; 1 is white.
pub fn encode_pgm(values: &[f64], height: usize, width: usize) -> Result<Vec<u8>> {
    if values.len() != height * width {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a {height}x{width} raster",
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(values.len());
    for r in 0..height {
        for c in 0..width {
            let v = values[c * height + r];
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, values: &[f64], height: usize, width: usize) -> Result<()> {
    write_atomic(path, &encode_pgm(values, height, width)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn awkward(seed: u64) -> DenseMatrix {
        let mut s = Stream::new(seed);
        let mut a = s.gaussian_matrix(5, 4);
        a[(0, 0)] = 1e-300;
        a[(1, 1)] = -1.7976931348623157e308;
        a[(2, 2)] = 0.1 + 0.2;
        a[(3, 3)] = -0.0;
        a[(4, 0)] = 5e-324;
        a
    }

    #[test]
    fn bin_round_trip_is_bitwise() {
        let a = awkward(1);
        let b = decode_bin(&encode_bin(&a)).unwrap();
        let bits = |m: &DenseMatrix| m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn text_round_trips_are_exact() {
        let a = awkward(2);
        assert_eq!(decode_mtx(&encode_mtx(&a)).unwrap(), a);
        assert_eq!(decode_csv(&encode_csv(&a)).unwrap(), a);
    }

    #[test]
    fn bin_layout() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = encode_bin(&a);
        assert_eq!(&b[..8], BIN_MAGIC);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(b[20..28].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[36..44].try_into().unwrap()), 2.0);
        assert!(decode_bin(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn reads_coordinate_and_symmetric() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n3 3 3\n1 1 2.0\n3 1 -1\n2 2 4\n";
        let a = decode_mtx(text).unwrap();
        assert_eq!(a[(0, 2)], -1.0);
        assert_eq!(a[(2, 0)], -1.0);
        assert_eq!(a[(1, 1)], 4.0);
        let text = "%%MatrixMarket matrix coordinate pattern general\n2 3 2\n1 3\n2 1\n";
        let a = decode_mtx(text).unwrap();
        assert_eq!((a[(0, 2)], a[(1, 0)], a[(1, 1)]), (1.0, 1.0, 0.0));
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n";
        let a = decode_mtx(text).unwrap();
        assert_eq!(a.to_row_major(), vec![1.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_malformed_text() {
        assert!(decode_mtx("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n").is_err());
        assert!(decode_mtx("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").is_err());
        assert!(decode_mtx("hello\n").is_err());
        assert!(decode_mtx("%%MatrixMarket matrix array real general\n1 1\nnan\n").is_err());
        assert!(decode_csv("1,2\n3\n").is_err());
    }

    #[test]
    fn file_dispatch_and_atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let a = awkward(3);
        for fmt in [MatrixFormat::Mtx, MatrixFormat::Bin, MatrixFormat::Csv] {
            let p = dir.path().join(format!("a.{}", fmt.extension()));
            write_matrix(&p, &a, fmt).unwrap();
            assert_eq!(read_matrix(&p).unwrap(), a);
        }
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 3, "no temp files left behind: {names:?}");
        assert!(matches!(read_matrix(&dir.path().join("missing.mtx")), Err(Error::Io { .. })));
    }

    #[test]
    fn band_lists() {
        assert_eq!(parse_band_list("1-3, 5,3").unwrap(), vec![0, 1, 2, 4]);
        assert!(parse_band_list("0").is_err());
        assert!(parse_band_list("4-2").is_err());
        let a = DenseMatrix::from_fn(5, 2, |i, j| (10 * i + j) as f64);
        let mut meta = CubeMeta {
            bands: 5,
            wavelengths: Some(vec![400.0, 410.0, 420.0, 430.0, 440.0]),
            ..Default::default()
        };
        let b = drop_bands(&a, &mut meta, &[0, 3]).unwrap();
        assert_eq!(b.col(0), &[10.0, 20.0, 40.0]);
        assert_eq!(meta.bands, 3);
        assert_eq!(meta.wavelengths.as_deref(), Some(&[410.0, 420.0, 440.0][..]));
        assert!(drop_bands(&a, &mut meta.clone(), &[7]).is_err());
    }

    #[test]
    fn pgm_layout() {
        let p = encode_pgm(&[0.0, 1.0, 0.5, 2.0, -1.0, 1.0], 2, 3).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&p[..header.len()], header);
        assert_eq!(&p[header.len()..], &[0, 128, 0, 255, 255, 255]);
        assert!(encode_pgm(&[0.0; 5], 2, 3).is_err());
    }

    #[test]
    fn cube_meta_validation() {
        let a = DenseMatrix::zeros(3, 6);
        let mut m = CubeMeta { bands: 3, height: Some(2), width: Some(3), wavelengths: None };
        m.validate(&a).unwrap();
        m.width = Some(4);
        assert!(m.validate(&a).is_err());
    }

    proptest! {
        #[test]
        fn any_finite_matrix_round_trips(
            r in 1usize..6, c in 1usize..6,
            vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 36),
        ) {
            let a = DenseMatrix::from_col_major(r, c, vals[..r * c].to_vec()).unwrap();
            prop_assert_eq!(decode_bin(&encode_bin(&a)).unwrap(), a.clone());
            prop_assert_eq!(decode_mtx(&encode_mtx(&a)).unwrap(), a.clone());
            prop_assert_eq!(decode_csv(&encode_csv(&a)).unwrap(), a);
        }
    }
}
