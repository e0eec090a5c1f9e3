//! Binary container for checkpoints and featurized datasets.
//!
//! Layout (all integers little-endian u32):
//!
//! ```text
//! magic "CMI1" | version | meta_len | meta (UTF-8 JSON) | tensor_count
//! per tensor: name_len | name (UTF-8) | ndim | dims... | f32 LE row-major data
//! ```
//!
//! The same container carries model checkpoints and featurized datasets;
//! the JSON metadata's `kind` field tells them apart.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::autograd::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CMI1";
pub const VERSION: u32 = 1;

/// A named-tensor container plus one JSON metadata blob.
#[derive(Debug, Clone, Default)]
pub struct Container {
    pub meta_json: String,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Container {
    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f32])> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| Error::Data(format!("container is missing tensor '{name}'")))
    }

    pub fn push_tensor(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) {
        self.tensors.push((name.to_string(), shape, data));
    }

    /// All parameters of a store, in store order.
    pub fn push_params(&mut self, params: &ParamStore) {
        for (name, t) in params.iter() {
            self.push_tensor(name, t.shape().to_vec(), t.data().to_vec());
        }
    }

    /// Rebuild a parameter store whose entries match `skeleton` in name,
    /// order, and shape.
    pub fn params_matching(&self, skeleton: &ParamStore) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for (name, t) in skeleton.iter() {
            let (shape, data) = self.tensor(name)?;
            if shape != t.shape() {
                return Err(Error::Data(format!(
                    "tensor '{name}' has shape {shape:?}, expected {:?}",
                    t.shape()
                )));
            }
            out.insert(name, Tensor::new(shape.to_vec(), data.to_vec())?)?;
        }
        Ok(out)
    }
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta = c.meta_json.as_bytes();
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta);
    buf.extend_from_slice(&(c.tensors.len() as u32).to_le_bytes());
    for (name, shape, data) in &c.tensors {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let numel: usize = shape.iter().product();
        debug_assert_eq!(numel, data.len());
        for &v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated(format!(
                "needed {n} bytes for {what}, {} left",
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_container(path: &Path) -> Result<Container> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };

    let magic = cur.take(4, "magic").map_err(|_| Error::Truncated("file shorter than magic".into()))?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version, expected: VERSION });
    }
    let meta_len = cur.u32("meta length")? as usize;
    let meta = cur.take(meta_len, "metadata")?;
    let meta_json = String::from_utf8(meta.to_vec())
        .map_err(|_| Error::Data("container metadata is not valid UTF-8".into()))?;

    let count = cur.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for i in 0..count {
        let name_len = cur.u32("tensor name length")? as usize;
        let name = String::from_utf8(cur.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| Error::Data(format!("tensor {i} name is not valid UTF-8")))?;
        let ndim = cur.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32("tensor dim")? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = cur.take(numel * 4, &format!("tensor '{name}' data"))?;
        let mut data = Vec::with_capacity(numel);
        for ch in raw.chunks_exact(4) {
            data.push(f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]]));
        }
        tensors.push((name, shape, data));
    }
    if cur.pos != buf.len() {
        return Err(Error::Data(format!(
            "container has {} trailing bytes",
            buf.len() - cur.pos
        )));
    }
    Ok(Container { meta_json, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_container() -> Container {
        let mut c = Container { meta_json: r#"{"kind":"test"}"#.into(), tensors: vec![] };
        c.push_tensor("a.w", vec![2, 3], vec![1.0, -2.5, 3.25, 0.0, 5.5, -0.125]);
        c.push_tensor("a.b", vec![3], vec![0.5, 1.5, 2.5]);
        c
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let c = sample_container();
        write_container(&path, &c).unwrap();
        let r = read_container(&path).unwrap();
        assert_eq!(r.meta_json, c.meta_json);
        assert_eq!(r.tensors.len(), 2);
        for ((na, sa, da), (nb, sb, db)) in c.tensors.iter().zip(&r.tensors) {
            assert_eq!(na, nb);
            assert_eq!(sa, sb);
            assert!(da.iter().zip(db).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // and the bytes themselves are stable across rewrites
        let bytes1 = std::fs::read(&path).unwrap();
        write_container(&path, &r).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn corrupt_magic_is_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        write_container(&path, &sample_container()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_container(&path), Err(Error::BadMagic)));
    }

    #[test]
    fn bumped_version_is_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        write_container(&path, &sample_container()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_container(&path),
            Err(Error::VersionMismatch { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn truncation_is_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        write_container(&path, &sample_container()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(read_container(&path), Err(Error::Truncated(_))));
        // also when the file ends inside the header
        std::fs::write(&path, &bytes[..6]).unwrap();
        assert!(matches!(read_container(&path), Err(Error::Truncated(_))));
    }

    #[test]
    fn trailing_garbage_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        write_container(&path, &sample_container()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"junk");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_container(&path), Err(Error::Data(_))));
    }
}
