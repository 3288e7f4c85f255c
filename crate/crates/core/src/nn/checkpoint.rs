//! Binary parameter checkpoints: a metadata string followed by named 2-D
//! arrays stored as little-endian `f64`. Both precisions round-trip exactly.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::network::Network;
use super::param::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LHQCKPT1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: String,
    pub arrays: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn push_network<T: Real>(&mut self, prefix: &str, net: &Network<T>) {
        for (name, p) in net.named_params() {
            self.arrays
                .push((format!("{prefix}.{name}"), p.value.mapv(|v| v.to_f64_lossy())));
        }
    }

    /// Loads every array whose name starts with `prefix.` into `net`, in order.
    pub fn restore_network<T: Real>(&self, prefix: &str, net: &mut Network<T>) -> Result<()> {
        let lead = format!("{prefix}.");
        let values: Vec<Array2<T>> = self
            .arrays
            .iter()
            .filter(|(n, _)| n.starts_with(&lead))
            .map(|(_, a)| a.mapv(T::lit))
            .collect();
        net.load_values(values)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.metadata.len() as u64).to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, a) in &self.arrays {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            let (rows, cols) = a.dim();
            w.write_all(&(rows as u64).to_le_bytes())?;
            w.write_all(&(cols as u64).to_le_bytes())?;
            for v in a.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::Input {
            path: "<checkpoint>".into(),
            msg: m.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let meta_len = read_u64(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let metadata = String::from_utf8(meta).map_err(|_| bad("metadata is not UTF-8"))?;
        let count = read_u32(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| bad("array name is not UTF-8"))?;
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let mut data = Vec::with_capacity(rows * cols);
            let mut buf = [0u8; 8];
            for _ in 0..rows * cols {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            let a = Array2::from_shape_vec((rows, cols), data).map_err(|_| bad("array shape"))?;
            arrays.push((name, a));
        }
        Ok(Self { metadata, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice()).map_err(|e| match e {
            Error::Input { msg, .. } => Error::Input {
                path: path.display().to_string(),
                msg,
            },
            other => other,
        })
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
