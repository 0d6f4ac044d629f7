//! Bit-exact binary checkpoints.
//!
//! Layout (all integers little-endian):
//!   magic "CEXP" | version u32 = 1 | param count u32
//!   then per model parameter, sorted by name:
//!     name length u16 | UTF-8 name | rank u8 | dims u32 each | f64 payload
//!   then the Adam state in the same entry layout: all "adam.m.<name>"
//!   entries sorted, then all "adam.v.<name>" entries sorted,
//!   then the step counter u64.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::optim::AdamState;
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CEXP";
const VERSION: u32 = 1;

fn write_entry(out: &mut Vec<u8>, name: &str, tensor: &Tensor) {
    let name_bytes = name.as_bytes();
    out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(name_bytes);
    out.push(tensor.rank() as u8);
    for &dim in tensor.shape() {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(store: &ParamStore, adam: &AdamState, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, tensor) in store.iter() {
        write_entry(&mut out, name, tensor);
    }
    for (name, tensor) in &adam.m {
        write_entry(&mut out, &format!("adam.m.{name}"), tensor);
    }
    for (name, tensor) in &adam.v {
        write_entry(&mut out, &format!("adam.v.{name}"), tensor);
    }
    out.extend_from_slice(&adam.step.to_le_bytes());

    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::BadCheckpoint("unexpected end of file".into()));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn entry(&mut self) -> Result<(String, Tensor)> {
        let name_len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| Error::BadCheckpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = self.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_le_bytes(self.take(8)?.try_into().unwrap()));
        }
        Ok((name, Tensor::new(shape, data)))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, AdamState)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut reader = Reader {
        data: &bytes,
        pos: 0,
    };

    if reader.take(4)? != MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let version = reader.u32()?;
    if version != VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {version}")));
    }
    let count = reader.u32()? as usize;

    let mut store = ParamStore::new();
    for _ in 0..count {
        let (name, tensor) = reader.entry()?;
        store.insert(&name, tensor);
    }

    let mut adam = AdamState::new(&store);
    for kind in ["adam.m.", "adam.v."] {
        for _ in 0..count {
            let (name, tensor) = reader.entry()?;
            let bare = name.strip_prefix(kind).ok_or_else(|| {
                Error::BadCheckpoint(format!("expected `{kind}` entry, found `{name}`"))
            })?;
            if !store.contains(bare) {
                return Err(Error::BadCheckpoint(format!(
                    "Adam entry `{name}` has no matching parameter"
                )));
            }
            if tensor.shape() != store.get(bare).shape() {
                return Err(Error::BadCheckpoint(format!(
                    "Adam entry `{name}` shape {:?} does not match parameter {:?}",
                    tensor.shape(),
                    store.get(bare).shape()
                )));
            }
            let slot = if kind == "adam.m." {
                adam.m.get_mut(bare)
            } else {
                adam.v.get_mut(bare)
            };
            *slot.unwrap() = tensor;
        }
    }
    adam.step = reader.u64()?;
    if reader.pos != bytes.len() {
        return Err(Error::BadCheckpoint("trailing bytes".into()));
    }
    Ok((store, adam))
}
