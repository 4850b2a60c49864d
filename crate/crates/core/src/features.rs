//! Descriptor ingestion and tensor construction.
//!
//! Two on-disk layouts are accepted:
//!
//! * CSV, one record per line: `identity,view,f0,f1,...` with `view` in `{A, B}`,
//!   no header.
//! * Raw binary: magic `TXF1`, little-endian `u32` record count, `u32` dim, then per
//!   record a `u32` identity, a `u8` view (0 = A, 1 = B) and `dim` little-endian `f64`s.
//!
//! Each descriptor vector is cut into equal parts (zero padded at the tail) so that a
//! view becomes a `parts x part_len x persons` tensor. Descriptor tensors sharing a
//! part length are fused by stacking their parts.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

const FEATURE_MAGIC: &[u8; 4] = b"TXF1";
const TENSOR_MAGIC: &[u8; 4] = b"TXT1";
const TENSOR_VERSION: u32 = 1;

/// Camera view tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    A,
    B,
}

impl View {
    fn code(self) -> u8 {
        match self {
            View::A => 0,
            View::B => 1,
        }
    }

    fn from_code(code: u8) -> Option<View> {
        match code {
            0 => Some(View::A),
            1 => Some(View::B),
            _ => None,
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::A => "A",
            View::B => "B",
        })
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<View> {
        match s.trim() {
            "A" => Ok(View::A),
            "B" => Ok(View::B),
            other => Err(Error::format(format!("unknown view tag {other:?}, expected A or B"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureFormat {
    Csv,
    RawBinary,
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "raw-binary" => Ok(FeatureFormat::RawBinary),
            other => Err(Error::usage(format!(
                "unknown feature format {other:?}, expected csv or raw-binary"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub identity: u32,
    pub view: View,
    pub vector: Vec<f64>,
}

/// Labelled descriptor vectors of a common length.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub descriptor_name: String,
    records: Vec<FeatureRecord>,
    dim: usize,
}

impl FeatureSet {
    pub fn new(descriptor_name: impl Into<String>, records: Vec<FeatureRecord>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::data("no records"))?;
        let dim = first.vector.len();
        for (idx, rec) in records.iter().enumerate() {
            if rec.vector.is_empty() {
                return Err(Error::format(format!("record {} has an empty vector", idx + 1)));
            }
            if rec.vector.len() != dim {
                return Err(Error::format(format!(
                    "record {} has length {}, expected {dim}",
                    idx + 1,
                    rec.vector.len()
                )));
            }
            if rec.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("record {} has a non-finite value", idx + 1)));
            }
        }
        Ok(FeatureSet {
            descriptor_name: descriptor_name.into(),
            records,
            dim,
        })
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct identities carrying at least one record in `view`.
    pub fn identities(&self, view: View) -> BTreeSet<u32> {
        self.records
            .iter()
            .filter(|r| r.view == view)
            .map(|r| r.identity)
            .collect()
    }

    /// Records passing `keep`, in their original order. Errors when nothing survives.
    pub fn filter(&self, keep: impl Fn(&FeatureRecord) -> bool) -> Result<FeatureSet> {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        if records.is_empty() {
            return Err(Error::data(format!(
                "descriptor {}: no records left after filtering",
                self.descriptor_name
            )));
        }
        Ok(FeatureSet {
            descriptor_name: self.descriptor_name.clone(),
            records,
            dim: self.dim,
        })
    }

    /// Stable sort by identity; records of one identity keep their relative order.
    pub fn sorted_by_identity(&self) -> FeatureSet {
        let mut records = self.records.clone();
        records.sort_by_key(|r| r.identity);
        FeatureSet {
            descriptor_name: self.descriptor_name.clone(),
            records,
            dim: self.dim,
        }
    }

    /// Concatenate two sets of the same dimension.
    pub fn merged(&self, other: &FeatureSet) -> Result<FeatureSet> {
        if self.dim != other.dim {
            return Err(Error::data(format!(
                "cannot merge descriptor sets of dims {} and {}",
                self.dim, other.dim
            )));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Ok(FeatureSet {
            descriptor_name: self.descriptor_name.clone(),
            records,
            dim: self.dim,
        })
    }
}

/// Read a feature file. The descriptor name is the file stem.
pub fn load_features(path: &Path, format: FeatureFormat) -> Result<FeatureSet> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let parsed = match format {
        FeatureFormat::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::format("feature CSV is not valid UTF-8"))?;
            parse_csv(&text, &name)
        }
        FeatureFormat::RawBinary => decode_binary(&bytes, &name),
    };
    parsed.map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_csv(text: &str, descriptor_name: &str) -> Result<FeatureSet> {
    let mut records = Vec::new();
    let mut dim = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let identity = fields
            .next()
            .map(str::trim)
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::format(format!("line {lineno}: identity is not a non-negative integer")))?;
        let view = fields
            .next()
            .ok_or_else(|| Error::format(format!("line {lineno}: missing view tag")))?
            .parse::<View>()
            .map_err(|e| Error::format(format!("line {lineno}: {e}")))?;
        let vector = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(format!("line {lineno}: cannot parse {f:?} as a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(Error::format(format!("line {lineno}: record has no feature values")));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("line {lineno}: non-finite feature value")));
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(Error::format(format!(
                    "line {lineno}: ragged record of length {}, expected {d}",
                    vector.len()
                )))
            }
            _ => {}
        }
        records.push(FeatureRecord {
            identity,
            view,
            vector,
        });
    }
    if records.is_empty() {
        return Err(Error::format("no records"));
    }
    FeatureSet::new(descriptor_name, records)
}

/// CSV rendering using the shortest round-tripping decimal form of each value.
pub fn write_csv(fs: &FeatureSet, out: &mut impl Write) -> std::io::Result<()> {
    for rec in &fs.records {
        write!(out, "{},{}", rec.identity, rec.view)?;
        for v in &rec.vector {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn encode_binary(fs: &FeatureSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + fs.records.len() * (5 + 8 * fs.dim));
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(fs.records.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(fs.dim as u32).to_le_bytes());
    for rec in &fs.records {
        buf.extend_from_slice(&rec.identity.to_le_bytes());
        buf.push(rec.view.code());
        for v in &rec.vector {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_binary(bytes: &[u8], descriptor_name: &str) -> Result<FeatureSet> {
    let mut rd = ByteReader::new(bytes);
    if rd.take(4)? != FEATURE_MAGIC {
        return Err(Error::format("missing TXF1 magic"));
    }
    let count = rd.u32()? as usize;
    let dim = rd.u32()? as usize;
    if count == 0 {
        return Err(Error::format("no records"));
    }
    if dim == 0 {
        return Err(Error::format("declared vector dimension is zero"));
    }
    let mut records = Vec::with_capacity(count);
    for idx in 0..count {
        let identity = rd.u32()?;
        let code = rd.u8()?;
        let view = View::from_code(code)
            .ok_or_else(|| Error::format(format!("record {}: unknown view code {code}", idx + 1)))?;
        let vector = (0..dim).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
        records.push(FeatureRecord {
            identity,
            view,
            vector,
        });
    }
    if !rd.is_empty() {
        return Err(Error::format("trailing bytes after the last record"));
    }
    FeatureSet::new(descriptor_name, records)
}

/// Little-endian cursor over a byte buffer; truncation is a format error.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(format!("truncated input at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// One camera view as a `parts x part_len x persons` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewTensor {
    pub tensor: Tensor3,
    pub labels: Vec<u32>,
    pub view: View,
}

impl ViewTensor {
    pub fn new(tensor: Tensor3, labels: Vec<u32>, view: View) -> Result<Self> {
        if labels.len() != tensor.dims()[2] {
            return Err(Error::usage(format!(
                "{} labels for a tensor with {} persons",
                labels.len(),
                tensor.dims()[2]
            )));
        }
        Ok(ViewTensor { tensor, labels, view })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.tensor.dims()
    }

    /// Person `p`'s slice flattened part by part (row-major over `parts x part_len`).
    pub fn person_row_major(&self, p: usize) -> Vec<f64> {
        let [n1, n2, _] = self.dims();
        let slice = self.tensor.slice(p);
        (0..n1)
            .flat_map(|i| (0..n2).map(move |j| slice[i + j * n1]))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let [n1, n2, n3] = self.dims();
        let mut buf = Vec::with_capacity(21 + 4 * n3 + 8 * self.tensor.data().len());
        buf.extend_from_slice(TENSOR_MAGIC);
        buf.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        for n in [n1, n2, n3] {
            buf.extend_from_slice(&(n as u32).to_le_bytes());
        }
        buf.push(self.view.code());
        for l in &self.labels {
            buf.extend_from_slice(&l.to_le_bytes());
        }
        for v in self.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = ByteReader::new(bytes);
        if rd.take(4)? != TENSOR_MAGIC {
            return Err(Error::format("missing TXT1 magic"));
        }
        let version = rd.u32()?;
        if version != TENSOR_VERSION {
            return Err(Error::format(format!("unsupported tensor container version {version}")));
        }
        let dims = [rd.u32()? as usize, rd.u32()? as usize, rd.u32()? as usize];
        let view = View::from_code(rd.u8()?).ok_or_else(|| Error::format("bad view code"))?;
        let labels = (0..dims[2]).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
        let len = dims.iter().product::<usize>();
        let data = (0..len).map(|_| rd.f64()).collect::<Result<Vec<_>>>()?;
        if !rd.is_empty() {
            return Err(Error::format("trailing bytes in tensor container"));
        }
        ViewTensor::new(Tensor3::new(dims, data)?, labels, view)
    }
}

/// Cut every `view` record of `fs` into `ceil(dim / part_len)` parts of length
/// `part_len`, zero padding the last part, and stack persons in record order.
pub fn split_to_tensor(fs: &FeatureSet, view: View, part_len: usize) -> Result<ViewTensor> {
    if part_len == 0 {
        return Err(Error::usage("part_len must be at least 1"));
    }
    let records: Vec<&FeatureRecord> = fs.records.iter().filter(|r| r.view == view).collect();
    if records.is_empty() {
        return Err(Error::data(format!(
            "descriptor {}: no records for view {view}",
            fs.descriptor_name
        )));
    }
    let parts = fs.dim.div_ceil(part_len);
    let persons = records.len();
    let mut data = vec![0.0; parts * part_len * persons];
    for (k, rec) in records.iter().enumerate() {
        let base = k * parts * part_len;
        for (idx, &v) in rec.vector.iter().enumerate() {
            let (p, j) = (idx / part_len, idx % part_len);
            data[base + p + j * parts] = v;
        }
    }
    let labels = records.iter().map(|r| r.identity).collect();
    ViewTensor::new(Tensor3::new([parts, part_len, persons], data)?, labels, view)
}

/// Stack `b`'s parts after `a`'s along mode 1.
pub fn fuse_tensors(a: &ViewTensor, b: &ViewTensor) -> Result<ViewTensor> {
    if a.view != b.view {
        return Err(Error::data(format!(
            "cannot fuse tensors of views {} and {}",
            a.view, b.view
        )));
    }
    let [pa, la, na] = a.dims();
    let [pb, lb, nb] = b.dims();
    if la != lb {
        return Err(Error::usage(format!(
            "shape error: part lengths differ ({la} vs {lb})"
        )));
    }
    if na != nb || a.labels != b.labels {
        return Err(Error::data("label sequences of fused tensors differ"));
    }
    let parts = pa + pb;
    let mut data = Vec::with_capacity(parts * la * na);
    for k in 0..na {
        let (sa, sb) = (a.tensor.slice(k), b.tensor.slice(k));
        for j in 0..la {
            data.extend_from_slice(&sa[j * pa..(j + 1) * pa]);
            data.extend_from_slice(&sb[j * pb..(j + 1) * pb]);
        }
    }
    ViewTensor::new(Tensor3::new([parts, la, na], data)?, a.labels.clone(), a.view)
}

/// Per-dimension z-scoring. Dimensions with zero spread are only centred.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(fs: &FeatureSet) -> Standardizer {
        let n = fs.records.len() as f64;
        let mut mean = vec![0.0; fs.dim];
        for rec in &fs.records {
            for (m, v) in mean.iter_mut().zip(&rec.vector) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; fs.dim];
        for rec in &fs.records {
            for ((s, v), m) in var.iter_mut().zip(&rec.vector).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, fs: &FeatureSet) -> Result<FeatureSet> {
        if fs.dim != self.mean.len() {
            return Err(Error::usage(format!(
                "standardizer fitted on dim {}, applied to dim {}",
                self.mean.len(),
                fs.dim
            )));
        }
        let records = fs
            .records
            .iter()
            .map(|r| FeatureRecord {
                identity: r.identity,
                view: r.view,
                vector: r
                    .vector
                    .iter()
                    .zip(&self.mean)
                    .zip(&self.scale)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect(),
            })
            .collect();
        FeatureSet::new(fs.descriptor_name.clone(), records)
    }
}
