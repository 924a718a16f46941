//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "FSOI" | version u32 | block_side u32 | ratio f64 | channels u32 | phases u32
//!        | mode u32 | tensor count u32
//! per tensor: name len u32 | name bytes | rank u32 | extents u32 * rank | f32 * numel
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{FsoiNet, ModelConfig, ParamSet, VariantMode};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const MAGIC: &[u8; 4] = b"FSOI";
pub const FORMAT_VERSION: u32 = 1;

const MAX_NAME: usize = 1 << 12;
const MAX_RANK: usize = 8;

fn put_u32(out: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} exceeds u32")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("checkpoint is truncated".into())
    } else {
        Error::Io(e)
    }
}

/// Serializes `model`; values are stored as f32 whatever the model precision.
pub fn write_checkpoint<T: Element>(model: &FsoiNet<T>, out: &mut impl Write) -> Result<()> {
    let cfg = model.config();
    out.write_all(MAGIC)?;
    put_u32(out, FORMAT_VERSION as usize)?;
    put_u32(out, cfg.block_side)?;
    out.write_all(&cfg.ratio.to_le_bytes())?;
    put_u32(out, cfg.channels)?;
    put_u32(out, cfg.phases)?;
    put_u32(out, cfg.mode.code() as usize)?;
    put_u32(out, model.params().len())?;
    for (name, t) in model.params().iter() {
        put_u32(out, name.len())?;
        out.write_all(name.as_bytes())?;
        put_u32(out, t.rank())?;
        for &d in t.shape() {
            put_u32(out, d)?;
        }
        let mut payload = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            payload.extend_from_slice(&v.to_f32().expect("finite float").to_le_bytes());
        }
        out.write_all(&payload)?;
    }
    Ok(())
}

pub fn read_checkpoint<T: Element>(input: &mut impl Read) -> Result<FsoiNet<T>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = get_u32(input)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let block_side = get_u32(input)? as usize;
    let mut rb = [0u8; 8];
    input.read_exact(&mut rb).map_err(truncated)?;
    let ratio = f64::from_le_bytes(rb);
    let channels = get_u32(input)? as usize;
    let phases = get_u32(input)? as usize;
    let mode = VariantMode::from_code(get_u32(input)?)?;
    let config = ModelConfig {
        block_side,
        ratio,
        channels,
        phases,
        mode,
    };
    config.validate()?;
    let count = get_u32(input)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = get_u32(input)? as usize;
        if len > MAX_NAME {
            return Err(Error::Format(format!("tensor name length {len} is implausible")));
        }
        let mut name = vec![0u8; len];
        input.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = get_u32(input)? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::Format(format!("tensor {name}: implausible rank {rank}")));
        }
        let shape = (0..rank)
            .map(|_| get_u32(input).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut bytes = vec![0u8; numel * 4];
        input.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::from_f64_lossy(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        let t = Tensor::from_vec(&shape, data).map_err(|e| Error::Format(format!("tensor {name}: {e}")))?;
        params.insert(name, t)?;
    }
    FsoiNet::from_params(config, params)
}

pub fn save_checkpoint<T: Element>(model: &FsoiNet<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint<T: Element>(path: &Path) -> Result<FsoiNet<T>> {
    let bytes = fs::read(path)?;
    let mut cursor = bytes.as_slice();
    let model = read_checkpoint(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", cursor.len())));
    }
    Ok(model)
}
