//! Embedding file formats.
//!
//! GBEM is a little-endian binary layout:
//!
//! ```text
//! "GBEM" | version u32 = 1 | N u32 | D_in u32 | stage u8 | K u32
//! N x ( label i32 | D_in x f32 )
//! ```
//!
//! The TSV form is meant for small hand-written fixtures: a header line
//! `label\tv1\t...\tvD` followed by one row per sample. It carries no stage
//! or class-count metadata; K is taken to be the largest label present.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Dataset, Label, LabeledVector, Stage};
use crate::error::{Error, FormatErrorKind, Result};

pub const GBEM_MAGIC: &[u8; 4] = b"GBEM";
pub const GBEM_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 1 + 4;

pub fn encode_gbem(ds: &Dataset) -> Result<Vec<u8>> {
    let n = u32::try_from(ds.len()).map_err(|_| Error::config("too many samples for GBEM"))?;
    let d = u32::try_from(ds.dim()).map_err(|_| Error::config("dimension too large for GBEM"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * (4 + 4 * ds.dim()));
    out.extend_from_slice(GBEM_MAGIC);
    out.extend_from_slice(&GBEM_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.push(ds.stage().to_byte());
    out.extend_from_slice(&ds.num_known().to_le_bytes());
    for s in ds.samples() {
        let label =
            i32::try_from(s.label).map_err(|_| Error::config("label does not fit in i32"))?;
        out.extend_from_slice(&label.to_le_bytes());
        for &x in &s.features {
            let v = x as f32;
            if !v.is_finite() {
                return Err(Error::NonFinite("GBEM payload"));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(Error::format(
                self.pos,
                FormatErrorKind::Truncated {
                    needed: n,
                    available,
                },
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_gbem(buf: &[u8]) -> Result<Dataset> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(4)? != GBEM_MAGIC {
        return Err(Error::format(0, FormatErrorKind::BadMagic));
    }
    let version = cur.u32()?;
    if version != GBEM_VERSION {
        return Err(Error::format(
            4,
            FormatErrorKind::UnsupportedVersion(version),
        ));
    }
    let n = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    if d == 0 {
        return Err(Error::format(
            12,
            FormatErrorKind::Header("zero dimension".into()),
        ));
    }
    let stage_byte = cur.take(1)?[0];
    let stage = Stage::from_byte(stage_byte)
        .ok_or_else(|| Error::format(16, FormatErrorKind::BadStage(stage_byte)))?;
    let k = cur.u32()?;
    if k == 0 {
        return Err(Error::format(
            17,
            FormatErrorKind::Header("K must be positive".into()),
        ));
    }

    // Check the whole payload length up front so the error names the real shortfall.
    let record = 4 + 4 * d;
    let needed = n.checked_mul(record).ok_or_else(|| {
        Error::format(8, FormatErrorKind::Header("payload size overflows".into()))
    })?;
    let available = buf.len() - HEADER_LEN;
    if available < needed {
        return Err(Error::format(
            HEADER_LEN,
            FormatErrorKind::Truncated { needed, available },
        ));
    }
    if available > needed {
        return Err(Error::format(
            HEADER_LEN + needed,
            FormatErrorKind::TrailingBytes(available - needed),
        ));
    }

    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let at = cur.pos;
        let raw_label = cur.i32()?;
        if raw_label < 1 || raw_label as i64 > k as i64 + 1 {
            return Err(Error::format(
                at,
                FormatErrorKind::InvalidLabel(raw_label.into()),
            ));
        }
        let mut features = Vec::with_capacity(d);
        for _ in 0..d {
            let at = cur.pos;
            let v = cur.f32()?;
            if !v.is_finite() {
                return Err(Error::format(at, FormatErrorKind::NonFinite));
            }
            features.push(f64::from(v));
        }
        samples.push(LabeledVector::new(features, raw_label as Label));
    }
    Dataset::new(samples, d, k, stage)
}

pub fn encode_tsv(ds: &Dataset) -> String {
    let mut out = String::from("label");
    for j in 1..=ds.dim() {
        out.push_str(&format!("\tv{j}"));
    }
    out.push('\n');
    for s in ds.samples() {
        out.push_str(&s.label.to_string());
        for x in &s.features {
            out.push('\t');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn decode_tsv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(0, FormatErrorKind::Header("empty file".into())))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.first() != Some(&"label") || cols.len() < 2 {
        return Err(Error::format(
            0,
            FormatErrorKind::Header(header.to_string()),
        ));
    }
    let dim = cols.len() - 1;
    let mut offset = header.len() + 1;
    let mut samples = Vec::new();
    for line in lines {
        let at = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != dim + 1 {
            return Err(Error::format(
                at,
                FormatErrorKind::Row(format!(
                    "expected {} fields, found {}",
                    dim + 1,
                    fields.len()
                )),
            ));
        }
        let label: i64 = fields[0].trim().parse().map_err(|_| {
            Error::format(
                at,
                FormatErrorKind::Row(format!("bad label '{}'", fields[0])),
            )
        })?;
        if label < 1 || label > i64::from(i32::MAX) {
            return Err(Error::format(at, FormatErrorKind::InvalidLabel(label)));
        }
        let features = fields[1..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::format(at, FormatErrorKind::Row(format!("bad value '{f}'")))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(LabeledVector::new(features, label as Label));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = samples.iter().map(|s| s.label).max().unwrap_or(1);
    Dataset::new(samples, dim, k, Stage::Raw)
}

fn is_tsv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("tsv"))
}

/// Reads a dataset; `.tsv` files use the text form, anything else GBEM.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if is_tsv(path) {
        decode_tsv(&fs::read_to_string(path)?)
    } else {
        decode_gbem(&fs::read(path)?)
    }
}

pub fn save_embeddings(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_tsv(path) {
        encode_tsv(ds).into_bytes()
    } else {
        encode_gbem(ds)?
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}
