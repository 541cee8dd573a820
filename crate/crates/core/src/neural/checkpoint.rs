//! Flat binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DCLM" | version: u32 | count: u32 |
//!   count x ( name_len: u16 | name: utf-8 | rank: u8 | dims: rank x u32 | values: f64 LE )
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::neural::{ParameterSet, Tensor};

pub const MAGIC: &[u8; 4] = b"DCLM";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_params<W: Write>(params: &ParameterSet, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let count = u32::try_from(params.len())
        .map_err(|_| Error::Checkpoint("too many parameters".into()))?;
    out.write_all(&count.to_le_bytes())?;
    for (name, tensor) in params.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Checkpoint(format!("parameter name too long: {name}")))?;
        out.write_all(&name_len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        let rank = u8::try_from(tensor.rank())
            .map_err(|_| Error::Checkpoint(format!("rank too large for {name}")))?;
        out.write_all(&[rank])?;
        for &d in tensor.shape() {
            let d = u32::try_from(d)
                .map_err(|_| Error::Checkpoint(format!("dimension too large for {name}")))?;
            out.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(tensor.len() * 8);
        for v in tensor.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_params<R: Read>(mut input: R) -> Result<ParameterSet> {
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic bytes {magic:?}")));
    }
    let version = read_u32(&mut input, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = read_u32(&mut input, "parameter count")?;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let mut len = [0u8; 2];
        read_exact(&mut input, &mut len, "name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact(&mut input, &mut name, "name")?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let mut rank = [0u8; 1];
        read_exact(&mut input, &mut rank, "rank")?;
        let shape = (0..rank[0])
            .map(|_| read_u32(&mut input, "dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        read_exact(&mut input, &mut raw, "values")?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, values)
            .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        params
            .insert(name, tensor)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last parameter".into()));
    }
    Ok(params)
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint(format!("truncated while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
