//! Versioned binary container of named, shape-tagged little-endian arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "IBWC" | format u32 | kind str | metadata str (JSON) | count u32
//! count x { name str | dtype u8 (0 = f32, 1 = u32) | ndim u32 | dims u64 x ndim | data }
//! str = len u32 | utf-8 bytes
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IBWC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl ArrayData {
    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::U32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub metadata: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn new(kind: &str, metadata: serde_json::Value) -> Self {
        Container {
            kind: kind.to_string(),
            metadata,
            arrays: Vec::new(),
        }
    }

    pub fn push_f32(&mut self, name: &str, shape: &[usize], data: Vec<f32>) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape of `{name}`");
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: ArrayData::F32(data),
        });
    }

    pub fn push_f64(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        self.push_f32(name, shape, data.iter().map(|&v| v as f32).collect());
    }

    pub fn push_u32(&mut self, name: &str, shape: &[usize], data: Vec<u32>) {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape of `{name}`");
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: ArrayData::U32(data),
        });
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("missing array `{name}`")))
    }

    /// f32 array widened to f64, checked against an expected shape.
    pub fn f64s(&self, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let a = self.get(name)?;
        if a.shape != shape {
            return Err(Error::Format(format!(
                "`{name}` has shape {:?}, expected {shape:?}",
                a.shape
            )));
        }
        match &a.data {
            ArrayData::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            ArrayData::U32(_) => Err(Error::Format(format!("`{name}` is not f32"))),
        }
    }

    pub fn u32s(&self, name: &str) -> Result<(&[usize], &[u32])> {
        let a = self.get(name)?;
        match &a.data {
            ArrayData::U32(v) => Ok((&a.shape, v)),
            ArrayData::F32(_) => Err(Error::Format(format!("`{name}` is not u32"))),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_str(w, &self.kind)?;
        write_str(w, &serde_json::to_string(&self.metadata)?)?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for a in &self.arrays {
            write_str(w, &a.name)?;
            let tag: u8 = match a.data {
                ArrayData::F32(_) => 0,
                ArrayData::U32(_) => 1,
            };
            w.write_all(&[tag])?;
            w.write_all(&(a.shape.len() as u32).to_le_bytes())?;
            for &d in &a.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(a.data.len() * 4);
            match &a.data {
                ArrayData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                ArrayData::U32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Container> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported container version {version}")));
        }
        let kind = read_str(r)?;
        let metadata = serde_json::from_str(&read_str(r)?)?;
        let count = read_u32(r)? as usize;
        let mut arrays = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = read_str(r)?;
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            let ndim = read_u32(r)? as usize;
            if ndim > 8 {
                return Err(Error::Format(format!("`{name}` has {ndim} dims")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let n: usize = shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)?;
            let words = bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
            let data = match tag[0] {
                0 => ArrayData::F32(words.map(f32::from_le_bytes).collect()),
                1 => ArrayData::U32(words.map(u32::from_le_bytes).collect()),
                t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
            };
            arrays.push(NamedArray { name, shape, data });
        }
        Ok(Container {
            kind,
            metadata,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Container> {
        let bytes = std::fs::read(path)?;
        Container::read_from(&mut bytes.as_slice())
    }

    pub fn expect_kind(self, kind: &str) -> Result<Container> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "expected a `{kind}` file, found `{}`",
                self.kind
            )));
        }
        Ok(self)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_garbage() {
        assert!(Container::read_from(&mut &b"nope"[..]).is_err());
        let mut c = Container::new("x", serde_json::json!({}));
        c.push_u32("a", &[2], vec![1, 2]);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(Container::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn typed_accessors_check_shape() {
        let mut c = Container::new("x", serde_json::json!({"k": 1}));
        c.push_f64("w", &[2, 2], &[1.0, 2.0, 3.0, 4.5]);
        assert_eq!(c.f64s("w", &[2, 2]).unwrap(), vec![1.0, 2.0, 3.0, 4.5]);
        assert!(c.f64s("w", &[4]).is_err());
        assert!(c.u32s("w").is_err());
        assert!(c.get("missing").is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(
            floats in proptest::collection::vec(-1e6f32..1e6, 0..64),
            ints in proptest::collection::vec(any::<u32>(), 0..64),
            kind in "[a-z-]{1,12}",
        ) {
            let mut c = Container::new(&kind, serde_json::json!({"n": floats.len()}));
            c.push_f32("f", &[floats.len()], floats.clone());
            c.push_u32("i", &[1, ints.len()], ints.clone());
            let mut buf = Vec::new();
            c.write_to(&mut buf).unwrap();
            let back = Container::read_from(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
