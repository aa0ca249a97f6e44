//! `VQAT` tensor container and the named-tensor archive built on it.
//!
//! Tensor record, all integers little-endian:
//!
//! ```text
//! b"VQAT" | version u32 | rank u32 | dims u64 x rank | dtype u32 | payload
//! ```
//!
//! dtype tags: `0` = f32, `1` = f64, `2` = u16 (token matrices).
//!
//! Archive (checkpoints): `b"VQAK" | version u32 | header_len u64 |
//! header JSON | one VQAT record per tensor`, in the order listed under the
//! header's `"tensors"` key.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{NnError, Result};
use crate::layers::Module;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"VQAT";
pub const ARCHIVE_MAGIC: &[u8; 4] = b"VQAK";
pub const VERSION: u32 = 1;
const MAX_RANK: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    F32,
    F64,
    U16,
}

impl DType {
    pub fn tag(self) -> u32 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
            DType::U16 => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            2 => Ok(DType::U16),
            other => Err(NnError::Format(format!("unknown dtype tag {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U16(Vec<u16>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U16(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U16(_) => DType::U16,
        }
    }
}

/// A tensor as it lives on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl StoredTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::Format(format!(
                "shape {shape:?} does not match {} stored values",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        let data = match T::DTYPE {
            DType::F32 => TensorData::F32(t.data().iter().map(|v| v.as_f64() as f32).collect()),
            _ => TensorData::F64(t.data().iter().map(|v| v.as_f64()).collect()),
        };
        Self {
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub fn from_vec<T: Scalar>(shape: Vec<usize>, values: &[T]) -> Result<Self> {
        Ok(Self::from_tensor(&Tensor::new(shape, values.to_vec())?))
    }

    pub fn tokens(shape: Vec<usize>, values: Vec<u16>) -> Result<Self> {
        Self::new(shape, TensorData::U16(values))
    }

    /// Converts floating payloads to `T`.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let data: Vec<T> = match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
            TensorData::U16(_) => {
                return Err(NnError::Format(
                    "expected a floating tensor, found u16".into(),
                ))
            }
        };
        Tensor::new(self.shape.clone(), data)
    }

    pub fn as_u16(&self) -> Result<&[u16]> {
        match &self.data {
            TensorData::U16(v) => Ok(v),
            other => Err(NnError::Format(format!(
                "expected a u16 tensor, found {:?}",
                other.dtype()
            ))),
        }
    }
}

pub fn write_tensor<W: Write>(w: &mut W, t: &StoredTensor) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
    for &d in &t.shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&t.data.dtype().tag().to_le_bytes())?;
    match &t.data {
        TensorData::F32(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
        TensorData::F64(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
        TensorData::U16(v) => v.iter().try_for_each(|x| w.write_all(&x.to_le_bytes()))?,
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            NnError::Format("truncated tensor container".into())
        } else {
            NnError::Io(e)
        }
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<StoredTensor> {
    let magic: [u8; 4] = read_array(r)?;
    if &magic != TENSOR_MAGIC {
        return Err(NnError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(NnError::Format(format!("unsupported version {version}")));
    }
    let rank = read_u32(r)?;
    if rank > MAX_RANK {
        return Err(NnError::Format(format!("implausible rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        shape.push(read_u64(r)? as usize);
    }
    let dtype = DType::from_tag(read_u32(r)?)?;
    let n: usize = shape.iter().product();
    let data = match dtype {
        DType::F32 => TensorData::F32(
            (0..n)
                .map(|_| read_array::<4, _>(r).map(f32::from_le_bytes))
                .collect::<Result<_>>()?,
        ),
        DType::F64 => TensorData::F64(
            (0..n)
                .map(|_| read_array::<8, _>(r).map(f64::from_le_bytes))
                .collect::<Result<_>>()?,
        ),
        DType::U16 => TensorData::U16(
            (0..n)
                .map(|_| read_array::<2, _>(r).map(u16::from_le_bytes))
                .collect::<Result<_>>()?,
        ),
    };
    StoredTensor::new(shape, data)
}

pub fn save_tensor(path: &Path, t: &StoredTensor) -> Result<()> {
    let mut bytes = Vec::new();
    write_tensor(&mut bytes, t)?;
    write_atomic(path, &bytes)
}

pub fn load_tensor(path: &Path) -> Result<StoredTensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor(&mut r)
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = tmp_path(path);
    {
        let mut f = BufWriter::new(File::create(&tmp)?);
        f.write_all(bytes)?;
        f.into_inner()
            .map_err(|e| NnError::Io(e.into_error()))?
            .sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Named tensors plus a free-form JSON header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub header: Value,
    tensors: Vec<(String, StoredTensor)>,
}

impl Archive {
    pub fn new(header: Value) -> Self {
        Self {
            header,
            tensors: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: StoredTensor) {
        let name = name.into();
        if let Some(slot) = self.tensors.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = t;
        } else {
            self.tensors.push((name, t));
        }
    }

    pub fn get(&self, name: &str) -> Result<&StoredTensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NnError::Format(format!("archive has no tensor `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let names: Vec<&str> = self.names().collect();
        let header = json!({ "meta": self.header, "tensors": names });
        let header = serde_json::to_vec(&header).map_err(|e| NnError::Format(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            write_tensor(&mut out, t)?;
        }
        Ok(out)
    }

    pub fn from_reader<R: Read>(r: &mut R) -> Result<Self> {
        let magic: [u8; 4] = read_array(r)?;
        if &magic != ARCHIVE_MAGIC {
            return Err(NnError::Format(format!("bad archive magic {magic:?}")));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(NnError::Format(format!(
                "unsupported archive version {version}"
            )));
        }
        let len = read_u64(r)? as usize;
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)
            .map_err(|_| NnError::Format("truncated archive header".into()))?;
        let header: Value =
            serde_json::from_slice(&header).map_err(|e| NnError::Format(e.to_string()))?;
        let names: Vec<String> = serde_json::from_value(header["tensors"].clone())
            .map_err(|e| NnError::Format(e.to_string()))?;
        let mut tensors = Vec::with_capacity(names.len());
        for name in names {
            tensors.push((name, read_tensor(r)?));
        }
        Ok(Self {
            header: header["meta"].clone(),
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(&mut BufReader::new(File::open(path)?))
    }

    /// Stores every parameter of `module` under `prefix/<name>`, optionally
    /// with its Adam moments and step counter.
    pub fn store_module<T: Scalar, M: Module<T> + ?Sized>(
        &mut self,
        prefix: &str,
        module: &M,
        with_optimizer: bool,
    ) {
        module.visit(&mut |p| {
            let key = format!("{prefix}/{}", p.name);
            self.insert(key.clone(), StoredTensor::from_tensor(&p.value));
            if with_optimizer {
                let shape = p.value.shape().to_vec();
                let (m, v) = p.moments();
                self.insert(
                    format!("{key}#m"),
                    StoredTensor::from_vec(shape.clone(), m).unwrap(),
                );
                self.insert(
                    format!("{key}#v"),
                    StoredTensor::from_vec(shape, v).unwrap(),
                );
                self.insert(
                    format!("{key}#step"),
                    StoredTensor::new(vec![1], TensorData::F64(vec![p.step() as f64])).unwrap(),
                );
            }
        });
    }

    /// Inverse of [`Archive::store_module`]; shapes must match exactly.
    /// Optimizer state is restored when present.
    pub fn load_module<T: Scalar, M: Module<T> + ?Sized>(
        &self,
        prefix: &str,
        module: &mut M,
    ) -> Result<()> {
        let mut result = Ok(());
        module.visit_mut(&mut |p| {
            if result.is_err() {
                return;
            }
            result = (|| {
                let key = format!("{prefix}/{}", p.name);
                let t: Tensor<T> = self.get(&key)?.to_tensor()?;
                if t.shape() != p.value.shape() {
                    return Err(NnError::Format(format!(
                        "`{key}` has shape {:?}, model expects {:?}",
                        t.shape(),
                        p.value.shape()
                    )));
                }
                p.value = t;
                if let (Ok(m), Ok(v), Ok(step)) = (
                    self.get(&format!("{key}#m")),
                    self.get(&format!("{key}#v")),
                    self.get(&format!("{key}#step")),
                ) {
                    let step = step.to_tensor::<f64>()?.data()[0] as u64;
                    p.set_state(
                        m.to_tensor::<T>()?.into_data(),
                        v.to_tensor::<T>()?.into_data(),
                        step,
                    )?;
                }
                Ok(())
            })();
        });
        result
    }
}
