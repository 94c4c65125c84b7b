//! Versioned binary container of named `f64` arrays plus a JSON header.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "LATOCKPT" | u32 format_version | u64 header_len | header JSON
//! u32 array_count | per array: u32 name_len, name, u32 ndim, u64 dims[ndim], f64 data[..]
//! ```

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::nn::Parameters;

pub const MAGIC: &[u8; 8] = b"LATOCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    header: Map<String, Value>,
    arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        let mut header = Map::new();
        header.insert("format_version".into(), Value::from(FORMAT_VERSION));
        header.insert("kind".into(), Value::from(kind));
        Self {
            header,
            arrays: Vec::new(),
        }
    }

    pub fn kind(&self) -> Option<&str> {
        self.header.get("kind").and_then(Value::as_str)
    }

    pub fn header(&self) -> &Map<String, Value> {
        &self.header
    }

    pub fn arrays(&self) -> &[NamedArray] {
        &self.arrays
    }

    pub fn set<T: Serialize>(&mut self, key: &str, value: T) -> Result<()> {
        self.header.insert(key.to_owned(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .header
            .get(key)
            .ok_or_else(|| Error::config(format!("checkpoint header lacks `{key}`")))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        match self.kind() {
            Some(k) if k == kind => Ok(()),
            other => Err(Error::config(format!(
                "expected a `{kind}` checkpoint, found {other:?}"
            ))),
        }
    }

    pub fn add_params<P: Parameters + ?Sized>(&mut self, prefix: &str, params: &P) {
        for p in params.params() {
            self.arrays.push(NamedArray {
                name: format!("{prefix}/{}", p.name),
                shape: p.shape.to_vec(),
                data: p.data.to_vec(),
            });
        }
    }

    /// Fills `params` from arrays stored under `prefix`; names and shapes must match.
    pub fn load_params<P: Parameters + ?Sized>(&self, prefix: &str, params: &mut P) -> Result<()> {
        let wanted: Vec<(String, Vec<usize>)> = params
            .params()
            .iter()
            .map(|p| (format!("{prefix}/{}", p.name), p.shape.to_vec()))
            .collect();
        let mut sources = Vec::with_capacity(wanted.len());
        for (name, shape) in &wanted {
            let arr = self
                .arrays
                .iter()
                .find(|a| &a.name == name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks array `{name}`")))?;
            if &arr.shape != shape {
                return Err(Error::config(format!(
                    "array `{name}` has shape {:?}, expected {shape:?}",
                    arr.shape
                )));
            }
            sources.push(&arr.data);
        }
        for (slot, src) in params.params_mut().into_iter().zip(sources) {
            slot.copy_from_slice(src);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            out.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
            out.extend_from_slice(a.name.as_bytes());
            out.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
            for d in &a.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::config("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::config(format!("unsupported checkpoint version {version}")));
        }
        let hlen = r.u64()? as usize;
        let header: Map<String, Value> = serde_json::from_slice(r.take(hlen)?)?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| Error::config("array name is not utf-8"))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            arrays.push(NamedArray { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::config("trailing bytes after checkpoint arrays"));
        }
        Ok(Self { header, arrays })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::Checkpoint {
            path: path.to_owned(),
            reason: e.to_string(),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::config("checkpoint truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
