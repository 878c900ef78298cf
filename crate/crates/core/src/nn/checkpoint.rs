//! Little-endian binary checkpoint.
//!
//! ```text
//! magic      8 bytes  "CWNNCKPT"
//! version    u32      1
//! spec_hash  u64
//! epoch      u64
//! seed       u64
//! counts     3 x u32  parameters, buffers, velocities
//! tensors    rank u32, dims u64 x rank, values f64 x product(dims)
//! ```

use std::fs;
use std::path::Path;

use super::{Network, NetworkSpec, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CWNNCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec_hash: u64,
    pub epoch: u64,
    pub seed: u64,
    pub params: Vec<Tensor>,
    /// Batch-norm running mean and variance, per layer.
    pub buffers: Vec<Tensor>,
    pub velocities: Vec<Tensor>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Truncated {
                expected: self.pos + n,
                found: self.data.len(),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format {
                offset: self.pos - 4,
                message: format!("implausible tensor rank {rank}"),
            });
        }
        let dims = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::invalid("tensor too large"))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(&dims, data)
    }
}

impl Checkpoint {
    pub fn capture(network: &Network, velocities: &[Tensor], epoch: u64, seed: u64) -> Self {
        Self {
            spec_hash: network.spec().hash(),
            epoch,
            seed,
            params: network.params().into_iter().cloned().collect(),
            buffers: network.buffers().into_iter().cloned().collect(),
            velocities: velocities.to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec_hash.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for n in [self.params.len(), self.buffers.len(), self.velocities.len()] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for t in self.params.iter().chain(&self.buffers).chain(&self.velocities) {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "not a checkpoint file".into(),
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 8,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let spec_hash = r.u64()?;
        let epoch = r.u64()?;
        let seed = r.u64()?;
        let counts = [r.u32()?, r.u32()?, r.u32()?];
        let mut groups = counts.map(|_| Vec::new());
        for (group, n) in groups.iter_mut().zip(counts) {
            for _ in 0..n {
                group.push(r.tensor()?);
            }
        }
        if r.pos != data.len() {
            return Err(Error::Format {
                offset: r.pos,
                message: "trailing bytes after last tensor".into(),
            });
        }
        let [params, buffers, velocities] = groups;
        Ok(Self {
            spec_hash,
            epoch,
            seed,
            params,
            buffers,
            velocities,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_bytes(&data).map_err(|e| e.at_path(path))
    }

    /// Rebuilds the network, checking the spec hash and every tensor shape.
    pub fn restore(&self, spec: &NetworkSpec) -> Result<Network> {
        if spec.hash() != self.spec_hash {
            return Err(Error::invalid(format!(
                "checkpoint was written for spec {:016x}, not {:016x}",
                self.spec_hash,
                spec.hash()
            )));
        }
        let mut net = Network::new(spec.clone())?;
        copy_into(net.params_mut(), &self.params, "parameter")?;
        copy_into(net.buffers_mut(), &self.buffers, "buffer")?;
        if !self.velocities.is_empty() {
            let shapes: Vec<_> = net.params().iter().map(|t| t.shape().to_vec()).collect();
            if self.velocities.len() != shapes.len()
                || self.velocities.iter().zip(&shapes).any(|(v, s)| v.shape() != s.as_slice())
            {
                return Err(Error::invalid("velocity tensors do not match the parameters"));
            }
        }
        net.mark_initialized();
        Ok(net)
    }
}

fn copy_into(dst: Vec<&mut Tensor>, src: &[Tensor], what: &str) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::invalid(format!(
            "checkpoint holds {} {what} tensors, network needs {}",
            src.len(),
            dst.len()
        )));
    }
    for (i, (d, s)) in dst.into_iter().zip(src).enumerate() {
        if d.shape() != s.shape() {
            return Err(Error::invalid(format!(
                "{what} {i}: checkpoint shape {:?}, network shape {:?}",
                s.shape(),
                d.shape()
            )));
        }
        d.data_mut().copy_from_slice(s.data());
    }
    Ok(())
}
