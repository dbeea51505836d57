//! `LORE-DATA v1`: a text header line followed by binary records.
//!
//! ```text
//! LORE-DATA v1 dim=<D> records=<N>[ <key>=<value>]...\n
//! repeated N times:
//!   u32 LE   user id length in bytes
//!   [u8]     user id, UTF-8
//!   D x f32 LE   chosen item
//!   D x f32 LE   rejected item
//! ```
//!
//! Coordinates are widened to `f64` on load. Saving refuses coordinates that
//! an `f32` cannot hold exactly, so a save/load round trip is lossless.

use std::collections::BTreeMap;
use std::path::Path;

use super::{atomic_write, read_file};
use crate::error::{Error, Result};
use crate::types::{ComparisonRecord, FeatureVector, PreferenceDataset};

pub const MAGIC: &str = "LORE-DATA v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHeader {
    pub dim: usize,
    pub records: usize,
    /// Free-form provenance such as `fingerprint` and `seed`.
    pub meta: BTreeMap<String, String>,
}

fn encode(data: &PreferenceDataset, meta: &BTreeMap<String, String>) -> Result<Vec<u8>> {
    let dim = data.dim();
    let mut header = format!("{MAGIC} dim={dim} records={}", data.len());
    for (k, v) in meta {
        if k.is_empty() || k.contains(['=', ' ', '\n']) || v.contains([' ', '\n']) {
            return Err(Error::InvalidArgument(format!("bad header entry {k:?}={v:?}")));
        }
        header.push_str(&format!(" {k}={v}"));
    }
    header.push('\n');
    let mut out = header.into_bytes();
    out.reserve(data.len() * (8 * dim + 16));
    for (i, rec) in data.records().iter().enumerate() {
        let id = rec.user_id.as_bytes();
        let len = u32::try_from(id.len()).map_err(|_| Error::InvalidArgument("user id too long".into()))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id);
        for item in [&rec.chosen, &rec.rejected] {
            Error::check_dim(dim, item.len())?;
            for &v in item.as_slice() {
                let narrow = v as f32;
                if f64::from(narrow) != v || !v.is_finite() {
                    return Err(Error::InvalidDataset(format!(
                        "record {i}: coordinate {v} is not exactly representable as f32"
                    )));
                }
                out.extend_from_slice(&narrow.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn save_dataset(data: &PreferenceDataset, path: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
    atomic_write(path, &encode(data, meta)?)
}

pub fn load_dataset(path: &Path) -> Result<PreferenceDataset> {
    load_dataset_with_header(path).map(|(_, d)| d)
}

fn parse_header(path: &Path, line: &str) -> Result<DatasetHeader> {
    let rest = line
        .strip_prefix(MAGIC)
        .filter(|r| r.is_empty() || r.starts_with(' '))
        .ok_or_else(|| Error::format(path, format!("bad magic, expected {MAGIC:?}")))?;
    let (mut dim, mut records) = (None, None);
    let mut meta = BTreeMap::new();
    for tok in rest.split_ascii_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("bad header token {tok:?}")))?;
        let num = || v.parse::<usize>().map_err(|_| Error::format(path, format!("bad {k} {v:?}")));
        match k {
            "dim" => dim = Some(num()?),
            "records" => records = Some(num()?),
            _ => {
                meta.insert(k.to_owned(), v.to_owned());
            }
        }
    }
    Ok(DatasetHeader {
        dim: dim.ok_or_else(|| Error::format(path, "header lacks dim"))?,
        records: records.ok_or_else(|| Error::format(path, "header lacks records"))?,
        meta,
    })
}

pub fn load_dataset_with_header(path: &Path) -> Result<(DatasetHeader, PreferenceDataset)> {
    let bytes = read_file(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let line = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(path, "header is not UTF-8"))?;
    let header = parse_header(path, line)?;
    let dim = header.dim;

    let mut off = nl + 1;
    let mut records = Vec::with_capacity(header.records.min(1 << 20));
    for i in 0..header.records {
        let truncated = |off: usize| Error::format(path, format!("truncated record {i} at byte offset {off}"));
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            let end = off.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| truncated(*off))?;
            let s = &bytes[*off..end];
            *off = end;
            Ok(s)
        };
        let start = off;
        let len = u32::from_le_bytes(take(&mut off, 4)?.try_into().expect("4 bytes")) as usize;
        let id = std::str::from_utf8(take(&mut off, len)?)
            .map_err(|_| Error::format(path, format!("record {i} at byte offset {start}: user id is not UTF-8")))?
            .to_owned();
        let coords = take(&mut off, 8 * dim)?;
        let values: Vec<f64> = coords
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(
                path,
                format!("record {i} at byte offset {start}: non-finite coordinate"),
            ));
        }
        let (c, r) = values.split_at(dim);
        records.push(ComparisonRecord::new(id, FeatureVector(c.to_vec()), FeatureVector(r.to_vec())));
    }
    if off != bytes.len() {
        return Err(Error::format(
            path,
            format!("{} trailing bytes after record {}", bytes.len() - off, header.records),
        ));
    }
    Ok((header, PreferenceDataset::from_records(dim, records)))
}
