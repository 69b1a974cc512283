//! Binary index file.
//!
//! ```text
//! "SPLKIDX1"            8 bytes magic
//! version               u32 LE (currently 1)
//! header length         u64 LE
//! header                UTF-8 JSON
//! sections              concatenated, offsets relative to the first byte after the header
//! ```
//!
//! Sections, in order: `numerics` (f64 LE per record per numeric field,
//! row-major), `booleans` (one byte per record per boolean field),
//! `missing` (one bit per record per field, row-major, LSB first, padded to a
//! byte), `embeddings` (f32 LE, `embed_dim` per record per categorical
//! field), `texts` (per record: u64 id, then per field a u32 length, or
//! `u32::MAX` when absent, followed by UTF-8 bytes) and `tree` (pre-order;
//! per node u32 pivot id, f64 radius, u8 flags with bit 0 set for leaves,
//! then a u32 count followed by that many u32 member ids for a leaf, or a
//! u32 child count followed by the children for an internal node).

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dataset::{FieldValue, ProcessedDataset, ProcessedRecord, TextValue};
use crate::preprocess::ScalerStats;
use crate::scalar::Scalar;
use crate::schema::{DatasetSchema, FieldKind, RawRecord};

use super::tree::{BallNode, BallTree};

pub const MAGIC: &[u8; 8] = b"SPLKIDX1";
pub const FORMAT_VERSION: u32 = 1;

const SECTIONS: [&str; 6] = ["numerics", "booleans", "missing", "embeddings", "texts", "tree"];
const ABSENT: u32 = u32::MAX;
const LEAF: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum PersistError {
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index format version {0}")]
    VersionMismatch(u32),
    #[error("checksum mismatch in section `{0}`")]
    ChecksumMismatch(String),
    #[error("index file is truncated")]
    Truncated,
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("record id {0} does not fit the index format")]
    IdOutOfRange(u64),
    #[error("I/O error: {0}")]
    Io(String),
}

/// Free-form facts stored alongside the index, e.g. which embedder built it.
pub type IndexMetadata = Map<String, Value>;

#[derive(Debug, Serialize, Deserialize)]
struct ScalerEntry {
    field: String,
    mean: f64,
    std: f64,
    constant: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SectionEntry {
    name: String,
    offset: u64,
    length: u64,
    crc32: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: DatasetSchema,
    scalers: Vec<ScalerEntry>,
    embed_dim: usize,
    leaf_size: usize,
    record_count: usize,
    node_count: usize,
    #[serde(default)]
    metadata: IndexMetadata,
    sections: Vec<SectionEntry>,
}

fn narrow_id(id: u64) -> Result<u32, PersistError> {
    u32::try_from(id).ok().filter(|&v| v != ABSENT).ok_or(PersistError::IdOutOfRange(id))
}

pub fn save_index<T: Scalar>(
    tree: &BallTree<T>,
    metadata: &IndexMetadata,
    path: impl AsRef<Path>,
) -> Result<(), PersistError> {
    let bytes = index_to_bytes(tree, metadata)?;
    std::fs::write(path, bytes).map_err(|e| PersistError::Io(e.to_string()))
}

pub fn load_index<T: Scalar>(path: impl AsRef<Path>) -> Result<(BallTree<T>, IndexMetadata), PersistError> {
    let bytes = std::fs::read(path).map_err(|e| PersistError::Io(e.to_string()))?;
    index_from_bytes(&bytes)
}

pub fn index_to_bytes<T: Scalar>(tree: &BallTree<T>, metadata: &IndexMetadata) -> Result<Vec<u8>, PersistError> {
    let ds = tree.dataset();
    let schema = ds.schema();
    let kinds: Vec<FieldKind> = schema.fields.iter().map(|f| f.kind).collect();
    let nfields = kinds.len();

    let mut numerics = Vec::new();
    let mut booleans = Vec::new();
    let mut missing = vec![0u8; (ds.len() * nfields).div_ceil(8)];
    let mut embeddings = Vec::new();
    let mut texts = Vec::new();
    let zeros = vec![0.0f32; ds.embed_dim()];

    for (r, (record, original)) in ds.records().iter().zip(ds.originals()).enumerate() {
        for (f, value) in record.values.iter().enumerate() {
            if value.is_missing() {
                let bit = r * nfields + f;
                missing[bit / 8] |= 1 << (bit % 8);
            }
            match (kinds[f], value) {
                (FieldKind::Numeric, FieldValue::Number(x)) => numerics.extend_from_slice(&x.to_f64_lossy().to_le_bytes()),
                (FieldKind::Numeric, _) => numerics.extend_from_slice(&0.0f64.to_le_bytes()),
                (FieldKind::Boolean, FieldValue::Flag(b)) => booleans.push(*b as u8),
                (FieldKind::Boolean, _) => booleans.push(0),
                (FieldKind::Categorical, FieldValue::Text(t)) => {
                    for v in t.vector.iter() {
                        embeddings.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
                    }
                }
                (FieldKind::Categorical, _) => {
                    for v in &zeros {
                        embeddings.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        texts.extend_from_slice(&record.id.to_le_bytes());
        for (f, field) in schema.fields.iter().enumerate() {
            // processed text first (it may be trimmed/truncated), raw cell second
            let processed = match &record.values[f] {
                FieldValue::Text(t) => Some(&*t.text),
                _ => None,
            };
            for cell in [processed, original.get(&field.name)] {
                match cell {
                    Some(s) => {
                        let len = u32::try_from(s.len())
                            .ok()
                            .filter(|&l| l != ABSENT)
                            .ok_or_else(|| PersistError::Corrupt("text too long".into()))?;
                        texts.extend_from_slice(&len.to_le_bytes());
                        texts.extend_from_slice(s.as_bytes());
                    }
                    None => texts.extend_from_slice(&ABSENT.to_le_bytes()),
                }
            }
        }
    }

    let mut tree_bytes = Vec::new();
    let nodes = tree.nodes();
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        let node = &nodes[i];
        tree_bytes.extend_from_slice(&narrow_id(ds.record(node.pivot).id)?.to_le_bytes());
        tree_bytes.extend_from_slice(&node.radius.to_f64_lossy().to_le_bytes());
        match node.children {
            None => {
                tree_bytes.push(LEAF);
                tree_bytes.extend_from_slice(&(node.members.len() as u32).to_le_bytes());
                for &m in &node.members {
                    tree_bytes.extend_from_slice(&narrow_id(ds.record(m).id)?.to_le_bytes());
                }
            }
            Some((l, r)) => {
                tree_bytes.push(0);
                tree_bytes.extend_from_slice(&2u32.to_le_bytes());
                stack.push(r);
                stack.push(l);
            }
        }
    }

    let bodies = [numerics, booleans, missing, embeddings, texts, tree_bytes];
    let mut sections = Vec::with_capacity(bodies.len());
    let mut offset = 0u64;
    for (name, body) in SECTIONS.iter().zip(&bodies) {
        sections.push(SectionEntry {
            name: name.to_string(),
            offset,
            length: body.len() as u64,
            crc32: crc32fast::hash(body),
        });
        offset += body.len() as u64;
    }
    let scalers = schema
        .fields
        .iter()
        .zip(ds.scalers())
        .filter_map(|(f, s)| {
            s.as_ref().map(|s| ScalerEntry {
                field: f.name.clone(),
                mean: s.mean.to_f64_lossy(),
                std: s.std.to_f64_lossy(),
                constant: s.constant,
            })
        })
        .collect();
    let header = Header {
        schema: schema.clone(),
        scalers,
        embed_dim: ds.embed_dim(),
        leaf_size: tree.leaf_size(),
        record_count: ds.len(),
        node_count: nodes.len(),
        metadata: metadata.clone(),
        sections,
    };
    let header = serde_json::to_vec(&header).map_err(|e| PersistError::Corrupt(e.to_string()))?;

    let mut out = Vec::with_capacity(20 + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for body in &bodies {
        out.extend_from_slice(body);
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self.pos.checked_add(n).ok_or(PersistError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(PersistError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, PersistError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<Option<&'a str>, PersistError> {
        let len = self.u32()?;
        if len == ABSENT {
            return Ok(None);
        }
        let raw = self.take(len as usize)?;
        std::str::from_utf8(raw)
            .map(Some)
            .map_err(|_| PersistError::Corrupt("invalid UTF-8 in texts".into()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn corrupt(msg: impl Into<String>) -> PersistError {
    PersistError::Corrupt(msg.into())
}

pub fn index_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(BallTree<T>, IndexMetadata), PersistError> {
    let prefix = &bytes[..bytes.len().min(MAGIC.len())];
    if prefix != &MAGIC[..prefix.len()] {
        return Err(PersistError::BadMagic);
    }
    let mut cur = Cursor::new(bytes);
    cur.take(MAGIC.len())?;
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(PersistError::VersionMismatch(version));
    }
    let header_len = usize::try_from(cur.u64()?).map_err(|_| PersistError::Truncated)?;
    let header: Header = serde_json::from_slice(cur.take(header_len)?).map_err(|e| corrupt(e.to_string()))?;
    let data = &bytes[cur.pos..];

    if header.sections.len() != SECTIONS.len()
        || header.sections.iter().zip(SECTIONS).any(|(s, n)| s.name != n)
    {
        return Err(corrupt("unexpected section table"));
    }
    let mut bodies: Vec<&[u8]> = Vec::with_capacity(SECTIONS.len());
    for s in &header.sections {
        let start = usize::try_from(s.offset).map_err(|_| PersistError::Truncated)?;
        let end = start
            .checked_add(usize::try_from(s.length).map_err(|_| PersistError::Truncated)?)
            .ok_or(PersistError::Truncated)?;
        let body = data.get(start..end).ok_or(PersistError::Truncated)?;
        if crc32fast::hash(body) != s.crc32 {
            return Err(PersistError::ChecksumMismatch(s.name.clone()));
        }
        bodies.push(body);
    }

    let schema = crate::schema::validate_schema(header.schema).map_err(|e| corrupt(e.to_string()))?;
    let kinds: Vec<FieldKind> = schema.fields.iter().map(|f| f.kind).collect();
    let nfields = kinds.len();
    let n = header.record_count;
    let dim = header.embed_dim;

    let mut scalers: Vec<Option<ScalerStats<T>>> = vec![None; nfields];
    for entry in &header.scalers {
        let i = schema
            .field_index(&entry.field)
            .ok_or_else(|| corrupt(format!("scaler for unknown field `{}`", entry.field)))?;
        scalers[i] = Some(ScalerStats {
            mean: T::of(entry.mean),
            std: T::of(entry.std),
            constant: entry.constant,
        });
    }

    let [numerics, booleans, missing, embeddings, texts, tree_bytes] = bodies[..] else {
        unreachable!()
    };
    let (mut num, mut boo, mut emb, mut txt) =
        (Cursor::new(numerics), Cursor::new(booleans), Cursor::new(embeddings), Cursor::new(texts));
    if missing.len() != (n * nfields).div_ceil(8) {
        return Err(corrupt("missing bitmap has the wrong size"));
    }

    let mut shared: HashMap<String, Arc<[T]>> = HashMap::new();
    let mut records = Vec::with_capacity(n);
    let mut originals = Vec::with_capacity(n);
    for r in 0..n {
        let mut raw_values: Vec<Option<Vec<T>>> = Vec::with_capacity(nfields);
        let mut flags = Vec::with_capacity(nfields);
        for kind in &kinds {
            match kind {
                FieldKind::Numeric => {
                    raw_values.push(Some(vec![T::of(num.f64()?)]));
                    flags.push(false);
                }
                FieldKind::Boolean => {
                    raw_values.push(None);
                    flags.push(boo.u8()? != 0);
                }
                FieldKind::Categorical => {
                    let mut v = Vec::with_capacity(dim);
                    for _ in 0..dim {
                        v.push(T::of(emb.f32()? as f64));
                    }
                    raw_values.push(Some(v));
                    flags.push(false);
                }
            }
        }
        let id = txt.u64()?;
        let mut original = RawRecord::new(id);
        let mut values = Vec::with_capacity(nfields);
        for (f, field) in schema.fields.iter().enumerate() {
            let processed = txt.text()?;
            if let Some(cell) = txt.text()? {
                original.values.insert(field.name.clone(), cell.to_string());
            }
            let bit = r * nfields + f;
            if missing[bit / 8] & (1 << (bit % 8)) != 0 {
                values.push(FieldValue::Missing);
                continue;
            }
            let value = match kinds[f] {
                FieldKind::Numeric => FieldValue::Number(raw_values[f].as_ref().unwrap()[0]),
                FieldKind::Boolean => FieldValue::Flag(flags[f]),
                FieldKind::Categorical => {
                    let text = processed.ok_or_else(|| corrupt("embedded value without text"))?;
                    let vector = shared
                        .entry(text.to_string())
                        .or_insert_with(|| raw_values[f].take().unwrap().into())
                        .clone();
                    FieldValue::Text(TextValue {
                        vector,
                        text: text.into(),
                    })
                }
            };
            values.push(value);
        }
        records.push(ProcessedRecord { id, values });
        originals.push(original);
    }
    if !(num.done() && boo.done() && emb.done() && txt.done()) {
        return Err(corrupt("section length does not match record count"));
    }

    let dataset = ProcessedDataset::from_parts(schema, records, scalers, dim, originals)
        .map_err(|e| corrupt(e.to_string()))?;

    let mut nodes: Vec<BallNode<T>> = Vec::with_capacity(header.node_count);
    let mut cur = Cursor::new(tree_bytes);
    // (parent, is_right) for each node still to be read, pre-order
    let mut pending: Vec<Option<(usize, bool)>> = vec![None];
    let position = |id: u32| {
        dataset
            .position(id as u64)
            .ok_or_else(|| corrupt(format!("tree references unknown id {id}")))
    };
    while let Some(parent) = pending.pop() {
        let index = nodes.len();
        if index >= header.node_count {
            return Err(corrupt("more tree nodes than declared"));
        }
        if let Some((p, right)) = parent {
            let children = nodes[p].children.get_or_insert((0, 0));
            if right {
                children.1 = index;
            } else {
                children.0 = index;
            }
        }
        let pivot = position(cur.u32()?)?;
        let radius = T::of(cur.f64()?);
        let flags = cur.u8()?;
        let count = cur.u32()? as usize;
        if flags & LEAF != 0 {
            let mut members = Vec::with_capacity(count);
            for _ in 0..count {
                members.push(position(cur.u32()?)?);
            }
            nodes.push(BallNode {
                pivot,
                radius,
                children: None,
                members,
            });
        } else {
            if count != 2 {
                return Err(corrupt("internal node without two children"));
            }
            nodes.push(BallNode {
                pivot,
                radius,
                children: Some((0, 0)),
                members: Vec::new(),
            });
            pending.push(Some((index, true)));
            pending.push(Some((index, false)));
        }
    }
    if !cur.done() || nodes.len() != header.node_count {
        return Err(corrupt("tree section does not match node count"));
    }
    let mut covered = vec![false; dataset.len()];
    for m in nodes.iter().flat_map(|n| n.members.iter()) {
        if std::mem::replace(&mut covered[*m], true) {
            return Err(corrupt("record appears in two leaves"));
        }
    }
    if covered.iter().any(|c| !c) {
        return Err(corrupt("record missing from tree"));
    }
    if header.leaf_size == 0 {
        return Err(corrupt("leaf size 0"));
    }
    Ok((BallTree::from_raw_parts(dataset, nodes, header.leaf_size), header.metadata))
}
