//! Parameter checkpoints: a text manifest (`name<TAB>shape<TAB>offset`)
//! followed by the raw values as little-endian `f64`.

use std::io::{BufRead, Read, Write};

use super::params::ParamStore;
use super::{Tensor, TensorError};

const MAGIC: &str = "protorec-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the value section, in values.
    pub offset: usize,
}

pub fn write_checkpoint(mut out: impl Write, params: &ParamStore) -> Result<(), TensorError> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "entries\t{}", params.len())?;
    let mut offset = 0;
    for (_, name, t) in params.iter() {
        let shape = t.shape().iter().map(usize::to_string).collect::<Vec<_>>().join("x");
        writeln!(out, "{name}\t{shape}\t{offset}")?;
        offset += t.len();
    }
    writeln!(out, "data\t{offset}")?;
    for (_, _, t) in params.iter() {
        for v in t.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

pub fn read_checkpoint(input: impl Read) -> Result<(Vec<CheckpointEntry>, ParamStore), TensorError> {
    let mut reader = std::io::BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |reader: &mut std::io::BufReader<_>| -> Result<String, TensorError> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(bad("unexpected end of manifest"));
        }
        Ok(line.trim_end_matches('\n').to_string())
    };
    if next_line(&mut reader)? != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let header = next_line(&mut reader)?;
    let count: usize = header
        .strip_prefix("entries\t")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad(format!("bad entry count line {header:?}")))?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let l = next_line(&mut reader)?;
        let fields: Vec<&str> = l.split('\t').collect();
        let [name, shape, offset] = fields[..] else { return Err(bad(format!("bad manifest line {l:?}"))) };
        let shape = shape.split('x').map(str::parse).collect::<Result<Vec<usize>, _>>().map_err(|_| bad(format!("bad shape in {l:?}")))?;
        let offset = offset.parse().map_err(|_| bad(format!("bad offset in {l:?}")))?;
        entries.push(CheckpointEntry { name: name.to_string(), shape, offset });
    }
    let data_line = next_line(&mut reader)?;
    let total: usize = data_line
        .strip_prefix("data\t")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad(format!("bad data line {data_line:?}")))?;
    let mut bytes = Vec::with_capacity(total * 8);
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(bad(format!("expected {} value bytes, found {}", total * 8, bytes.len())));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut store = ParamStore::new();
    for e in &entries {
        let len: usize = e.shape.iter().product();
        let slice = values.get(e.offset..e.offset + len).ok_or_else(|| bad(format!("entry {} out of range", e.name)))?;
        store.add(e.name.clone(), Tensor::new(e.shape.clone(), slice.to_vec())?);
    }
    Ok((entries, store))
}
