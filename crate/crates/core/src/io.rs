//! On-disk formats: the FMX matrix container, scalar CSV matrices, and
//! dataset manifests.
//!
//! FMX layout (little-endian):
//!
//! ```text
//! offset 0   magic  b"FMX1"
//! offset 4   u32    rows (H)
//! offset 8   u32    cols (W)
//! offset 12  u32    channels (C)
//! offset 16  f64 * H*W*C, row-major, channels innermost
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::{Dataset, Entry, FeatureMatrix};

pub const FMX_MAGIC: &[u8; 4] = b"FMX1";
const FMX_HEADER: usize = 16;

pub fn encode_fmx(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(FMX_HEADER + m.as_slice().len() * 8);
    out.extend_from_slice(FMX_MAGIC);
    for d in [m.rows(), m.cols(), m.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_fmx(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    if bytes.len() < 4 {
        return Err(Error::bytes(path, bytes.len() as u64, "truncated magic"));
    }
    if &bytes[..4] != FMX_MAGIC {
        return Err(Error::bytes(path, 0, "bad magic, expected FMX1"));
    }
    if bytes.len() < FMX_HEADER {
        return Err(Error::bytes(path, bytes.len() as u64, "truncated header"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (u32_at(4), u32_at(8), u32_at(12));
    for (off, name, v) in [(4, "rows", h), (8, "cols", w), (12, "channels", c)] {
        if v == 0 {
            return Err(Error::bytes(path, off, format!("{name} must be positive")));
        }
    }
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| Error::bytes(path, 4, "dims overflow"))?;
    let need = count
        .checked_mul(8)
        .and_then(|n| n.checked_add(FMX_HEADER))
        .ok_or_else(|| Error::bytes(path, 4, "dims overflow"))?;
    if bytes.len() < need {
        return Err(Error::bytes(
            path,
            bytes.len() as u64,
            format!("truncated payload: expected {count} values ({need} bytes)"),
        ));
    }
    if bytes.len() > need {
        return Err(Error::bytes(path, need as u64, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in bytes[FMX_HEADER..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::bytes(path, (FMX_HEADER + i * 8) as u64, "non-finite value"));
        }
        data.push(v);
    }
    FeatureMatrix::new(h, w, c, data).map_err(|e| Error::bytes(path, 0, e.to_string()))
}

pub fn save_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_fmx(m)).map_err(|e| Error::io(path, e))
}

/// Load a matrix. Files with a `.csv` extension go through the scalar CSV
/// reader, everything else is read as FMX.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return load_csv_matrix(path);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_fmx(&bytes, path)
}

/// Parse a 2D scalar matrix (`C = 1`): one row per line, values separated by
/// commas or whitespace. Blank lines and `#` comments are skipped.
pub fn parse_csv_matrix(text: &str, path: &Path) -> Result<FeatureMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno as u64 + 1;
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::line(path, lineno, format!("not a number: {t:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::line(path, lineno, "non-finite value"))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::line(
                    path,
                    lineno,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::line(path, 1, "empty matrix"));
    }
    FeatureMatrix::from_scalar_rows(&rows).map_err(|e| Error::line(path, 1, e.to_string()))
}

pub fn load_csv_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_matrix(&text, path)
}

/// Write a scalar matrix as CSV; only `C = 1` matrices are accepted.
pub fn save_csv_matrix(m: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if m.channels() != 1 {
        return Err(Error::Dimension(format!(
            "CSV holds scalar matrices only, got C={}",
            m.channels()
        )));
    }
    let mut s = String::new();
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// One `<class_id>,<relative_path>` line of a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestLine {
    pub class_id: u64,
    pub path: PathBuf,
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestLine>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = lineno as u64 + 1;
        let (id, rel) = line
            .split_once(',')
            .ok_or_else(|| Error::line(path, lineno, "expected <class_id>,<relative_path>"))?;
        let class_id = id
            .trim()
            .parse()
            .map_err(|_| Error::line(path, lineno, format!("bad class id {id:?}")))?;
        let rel = rel.trim();
        if rel.is_empty() {
            return Err(Error::line(path, lineno, "empty path"));
        }
        out.push(ManifestLine {
            class_id,
            path: PathBuf::from(rel),
        });
    }
    Ok(out)
}

/// Load every matrix named by a manifest. Relative paths resolve against the
/// manifest's directory; the modality name is the manifest's file stem.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let lines = parse_manifest(&text, manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut entries = Vec::with_capacity(lines.len());
    for l in lines {
        let matrix = load_matrix(base.join(&l.path))?;
        entries.push(Entry {
            class_id: l.class_id,
            matrix,
        });
    }
    let modality = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(modality, entries)
}

/// Write each entry as `<dir>/<stem>_<class_id>.fmx` plus a manifest at
/// `manifest_path` referencing them relative to the manifest's directory.
pub fn save_dataset(ds: &Dataset, manifest_path: impl AsRef<Path>, subdir: &str) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let dir = base.join(subdir);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut manifest = format!("# {} modality, {} entries\n", ds.modality, ds.len());
    for e in ds.entries() {
        let rel = format!("{subdir}/{}_{}.fmx", ds.modality, e.class_id);
        save_matrix(&e.matrix, base.join(&rel))?;
        manifest.push_str(&format!("{},{rel}\n", e.class_id));
    }
    let mut f = fs::File::create(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    f.write_all(manifest.as_bytes())
        .map_err(|e| Error::io(manifest_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_rows_is_a_format_error() {
        let mut b = FMX_MAGIC.to_vec();
        for d in [0u32, 2, 1] {
            b.extend_from_slice(&d.to_le_bytes());
        }
        match decode_fmx(&b, Path::new("x.fmx")) {
            Err(Error::Format { offset: 4, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload() {
        let m = FeatureMatrix::new(2, 2, 2, vec![1.0; 8]).unwrap();
        let mut b = encode_fmx(&m);
        b.truncate(b.len() - 3);
        let err = decode_fmx(&b, Path::new("x.fmx")).unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");
    }

    #[test]
    fn bad_magic_and_nan() {
        assert!(decode_fmx(b"FMX2\0\0\0\0", Path::new("x")).is_err());
        let m = FeatureMatrix::new(1, 2, 1, vec![1.0, 2.0]).unwrap();
        let mut b = encode_fmx(&m);
        b[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        match decode_fmx(&b, Path::new("x")) {
            Err(Error::Format { offset: 24, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_parsing() {
        let m = parse_csv_matrix("# toy\n1,2,3\n4 5 6\n", Path::new("t.csv")).unwrap();
        assert_eq!(m.dims(), (2, 3, 1));
        assert_eq!(m.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let err = parse_csv_matrix("1,2\n3\n", Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 2, .. }));
    }

    #[test]
    fn manifest_parsing() {
        let lines = parse_manifest("# c\n3,a.fmx\n\n1, b/c.fmx\n", Path::new("m")).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].class_id, 1);
        assert_eq!(lines[1].path, PathBuf::from("b/c.fmx"));
        assert!(parse_manifest("x,a.fmx\n", Path::new("m")).is_err());
    }

    proptest! {
        #[test]
        fn fmx_round_trip_is_bit_exact(
            h in 1usize..4, w in 1usize..4, c in 1usize..4,
            seed in prop::collection::vec(-1e300f64..1e300, 64),
        ) {
            let data: Vec<f64> = seed.iter().cycle().take(h * w * c).copied().collect();
            let m = FeatureMatrix::new(h, w, c, data).unwrap();
            let back = decode_fmx(&encode_fmx(&m), Path::new("x")).unwrap();
            prop_assert_eq!(
                back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back.dims(), m.dims());
        }
    }
}
