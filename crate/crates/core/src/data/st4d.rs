//! ST4D: a minimal named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "ST4D"
//! version      u16      1
//! entry count  u32
//! per entry:
//!   name length  u16, then that many UTF-8 bytes (non-empty, unique)
//!   dtype        u8     0 = f32, 1 = f64
//!   rank         u8     1..=5
//!   dims         rank × u32, each >= 1
//!   data         product(dims) scalars, little-endian, row-major
//! ```
//!
//! Nothing may follow the last entry.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: &[u8; 4] = b"ST4D";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        match T::DTYPE {
            DType::F32 => StoredTensor::F32(t.cast()),
            DType::F64 => StoredTensor::F64(t.cast()),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            StoredTensor::F32(_) => DType::F32,
            StoredTensor::F64(_) => DType::F64,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) => t.dims(),
            StoredTensor::F64(t) => t.dims(),
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        match self {
            StoredTensor::F32(t) => t.cast(),
            StoredTensor::F64(t) => t.cast(),
        }
    }

    fn write_data(&self, out: &mut Vec<u8>) {
        match self {
            StoredTensor::F32(t) => t.data().iter().for_each(|x| x.write_le(out)),
            StoredTensor::F64(t) => t.data().iter().for_each(|x| x.write_le(out)),
        }
    }
}

/// Header information for one entry, without its data.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryInfo {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<usize>,
}

fn validate_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if n.is_empty() {
            return Err(Error::invalid("tensor names must be non-empty"));
        }
        if n.len() > u16::MAX as usize {
            return Err(Error::invalid(format!("tensor name of {} bytes is too long", n.len())));
        }
        if !seen.insert(n) {
            return Err(Error::invalid(format!("duplicate tensor name {n:?}")));
        }
    }
    Ok(())
}

pub fn encode(entries: &[(String, StoredTensor)]) -> Result<Vec<u8>> {
    validate_names(entries.iter().map(|(n, _)| n.as_str()))?;
    let count = u32::try_from(entries.len()).map_err(|_| Error::invalid("too many entries"))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.dtype().code());
        out.push(t.dims().len() as u8);
        for &d in t.dims() {
            let d = u32::try_from(d).map_err(|_| Error::invalid(format!("extent {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        t.write_data(&mut out);
    }
    Ok(out)
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        let mut filled = 0;
        while filled < n {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(Error::Format {
                        offset: self.offset + filled as u64,
                        message: format!("truncated while reading {what}"),
                    })
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => {
                    return Err(Error::Format {
                        offset: self.offset + filled as u64,
                        message: format!("read failed while reading {what}: {e}"),
                    })
                }
            }
        }
        self.offset += n as u64;
        Ok(buf)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.bytes(N, what)?.try_into().expect("exact length"))
    }

    fn fail<T>(&self, at: u64, message: String) -> Result<T> {
        Err(Error::Format { offset: at, message })
    }

    fn at_end(&mut self) -> Result<bool> {
        let mut b = [0u8; 1];
        loop {
            match self.inner.read(&mut b) {
                Ok(0) => return Ok(true),
                Ok(_) => return Ok(false),
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return self.fail(self.offset, format!("read failed: {e}")),
            }
        }
    }
}

fn read_header<R: Read>(cur: &mut Cursor<R>) -> Result<u32> {
    let magic = cur.array::<4>("magic")?;
    if &magic != MAGIC {
        return cur.fail(0, format!("bad magic {magic:?}, expected \"ST4D\""));
    }
    let version = u16::from_le_bytes(cur.array("format version")?);
    if version != FORMAT_VERSION {
        return cur.fail(4, format!("unsupported format version {version}"));
    }
    Ok(u32::from_le_bytes(cur.array("entry count")?))
}

fn read_entry_info<R: Read>(cur: &mut Cursor<R>, seen: &mut HashSet<String>) -> Result<EntryInfo> {
    let name_at = cur.offset;
    let name_len = u16::from_le_bytes(cur.array("name length")?) as usize;
    if name_len == 0 {
        return cur.fail(name_at, "empty tensor name".into());
    }
    let name = String::from_utf8(cur.bytes(name_len, "name")?)
        .or_else(|_| cur.fail(name_at + 2, "tensor name is not valid UTF-8".into()))?;
    if !seen.insert(name.clone()) {
        return cur.fail(name_at, format!("duplicate tensor name {name:?}"));
    }
    let dtype_at = cur.offset;
    let [code] = cur.array::<1>("dtype")?;
    let dtype = match DType::from_code(code) {
        Some(d) => d,
        None => return cur.fail(dtype_at, format!("unknown dtype code {code}")),
    };
    let rank_at = cur.offset;
    let [rank] = cur.array::<1>("rank")?;
    if rank == 0 || rank as usize > MAX_RANK {
        return cur.fail(rank_at, format!("rank {rank} outside 1..={MAX_RANK}"));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    let mut count: usize = 1;
    for _ in 0..rank {
        let at = cur.offset;
        let d = u32::from_le_bytes(cur.array("dims")?) as usize;
        if d == 0 {
            return cur.fail(at, format!("zero extent in entry {name:?}"));
        }
        count = match count.checked_mul(d) {
            Some(c) if c.checked_mul(dtype.size()).is_some() => c,
            _ => return cur.fail(at, format!("entry {name:?} is too large")),
        };
        dims.push(d);
    }
    Ok(EntryInfo { name, dtype, dims })
}

fn read_data<R: Read, T: Scalar>(cur: &mut Cursor<R>, info: &EntryInfo) -> Result<Tensor<T>> {
    let n: usize = info.dims.iter().product();
    let size = T::DTYPE.size();
    let what = format!("data of entry {:?}", info.name);
    // Large entries are read in chunks so a corrupt header cannot force a huge allocation.
    let mut data = Vec::with_capacity(n.min(1 << 20));
    let mut left = n;
    while left > 0 {
        let take = left.min(1 << 16);
        let bytes = cur.bytes(take * size, &what)?;
        data.extend(bytes.chunks_exact(size).map(T::read_le));
        left -= take;
    }
    Tensor::new(&info.dims, data)
}

fn decode_from<R: Read>(reader: R) -> Result<Vec<(String, StoredTensor)>> {
    let mut cur = Cursor { inner: reader, offset: 0 };
    let count = read_header(&mut cur)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity((count as usize).min(1024));
    for _ in 0..count {
        let info = read_entry_info(&mut cur, &mut seen)?;
        let t = match info.dtype {
            DType::F32 => StoredTensor::F32(read_data(&mut cur, &info)?),
            DType::F64 => StoredTensor::F64(read_data(&mut cur, &info)?),
        };
        out.push((info.name, t));
    }
    if !cur.at_end()? {
        return cur.fail(cur.offset, "trailing bytes after the last entry".into());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, StoredTensor)>> {
    decode_from(bytes)
}

pub fn write_tensor_file(path: impl AsRef<Path>, entries: &[(String, StoredTensor)]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(entries)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Vec<(String, StoredTensor)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_from(BufReader::new(file))
}

/// Reads entry headers only, skipping over tensor data.
pub fn scan_tensor_file(path: impl AsRef<Path>) -> Result<Vec<EntryInfo>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        inner: BufReader::new(file),
        offset: 0,
    };
    let count = read_header(&mut cur)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for _ in 0..count {
        let info = read_entry_info(&mut cur, &mut seen)?;
        let n = info.dims.iter().product::<usize>() * info.dtype.size();
        let skipped = std::io::copy(&mut (&mut cur.inner).take(n as u64), &mut std::io::sink())
            .map_err(|e| Error::io(path, e))?;
        if skipped != n as u64 {
            return cur.fail(
                cur.offset + skipped,
                format!("truncated while reading data of entry {:?}", info.name),
            );
        }
        cur.offset += n as u64;
        out.push(info);
    }
    Ok(out)
}
