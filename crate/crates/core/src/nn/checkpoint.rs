//! Named-tensor checkpoint container.
//!
//! ```text
//! RADCKPT 1
//! key=value            (model metadata, any number of lines)
//! --
//! name<TAB>d0,d1,...   (one line per tensor)
//! --
//! <RADF blob per tensor, kind Param, dims 1 × 1 × numel>
//! ```
//!
//! Values are stored as `f32`.

use std::collections::BTreeMap;
use std::path::Path;

use super::{Parameters, Tensor};
use crate::encoder::radf::{RadfKind, RadfTensor};
use crate::error::{Error, Result};
use crate::kv;

const MAGIC_LINE: &str = "RADCKPT 1";
const SEPARATOR: &str = "--";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_params<P: Parameters>(meta: BTreeMap<String, String>, params: &P) -> Self {
        let tensors = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        Self { meta, tensors }
    }

    /// Copy stored tensors into `params`; names and shapes must match exactly.
    pub fn load_into<P: Parameters>(&self, params: &mut P) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if names.len() != self.tensors.len() {
            return Err(Error::Incompatible(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((name, shape), (cname, ct)) in names.iter().zip(&self.tensors) {
            if name != cname || shape.as_slice() != ct.shape() {
                return Err(Error::Incompatible(format!(
                    "checkpoint tensor {cname} {:?} does not match model tensor {name} {shape:?}",
                    ct.shape()
                )));
            }
        }
        for (dst, (_, src)) in params.tensors_mut().into_iter().zip(&self.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn meta_get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        kv::get(&self.meta, key, "checkpoint")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut text = format!("{MAGIC_LINE}\n");
        text.push_str(&kv::render(self.meta.iter().map(|(k, v)| (k.as_str(), v.clone()))));
        text.push_str(SEPARATOR);
        text.push('\n');
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            text.push_str(&format!("{name}\t{}\n", dims.join(",")));
        }
        text.push_str(SEPARATOR);
        text.push('\n');
        let mut out = text.into_bytes();
        for (_, t) in &self.tensors {
            let data: Vec<f32> = t.data().iter().map(|&v| v as f32).collect();
            let blob = RadfTensor {
                kind: RadfKind::Param,
                dims: [1, 1, data.len()],
                data,
            };
            out.extend(blob.encode());
        }
        out
    }

    pub fn decode(bytes: &[u8], origin: &str) -> Result<Self> {
        let fail = |msg: String| Error::Format {
            path: origin.to_string(),
            msg,
        };
        let mut pos = 0;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| fail("truncated header".into()))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| fail("header is not UTF-8".into()))
        };
        if next_line()? != MAGIC_LINE {
            return Err(fail("not a checkpoint".into()));
        }
        let mut meta_text = String::new();
        loop {
            let line = next_line()?;
            if line == SEPARATOR {
                break;
            }
            meta_text.push_str(line);
            meta_text.push('\n');
        }
        let mut shapes = Vec::new();
        loop {
            let line = next_line()?;
            if line == SEPARATOR {
                break;
            }
            let (name, dims) = line
                .split_once('\t')
                .ok_or_else(|| fail(format!("bad tensor line `{line}`")))?;
            let dims = dims
                .split(',')
                .map(|d| d.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| fail(format!("bad shape in `{line}`")))?;
            shapes.push((name.to_string(), dims));
        }
        let meta = kv::parse(&meta_text, origin)?;
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let len = 19 + 4 * n + 4;
            if bytes.len() < pos + len {
                return Err(fail(format!("payload of {name} is truncated")));
            }
            let blob = RadfTensor::decode(&bytes[pos..pos + len], origin)?;
            pos += len;
            if blob.kind != RadfKind::Param || blob.dims != [1, 1, n] {
                return Err(fail(format!("payload of {name} does not match its shape")));
            }
            let data = blob.data.into_iter().map(f64::from).collect();
            tensors.push((name, Tensor::from_vec(&shape, data)?));
        }
        if pos != bytes.len() {
            return Err(fail("trailing bytes".into()));
        }
        Ok(Self { meta, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::decode(&bytes, &path.display().to_string())
    }
}
