//! Binary replay files, used to store warm-up experience.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "EVADERP1"
//! count        u64      number of samples
//! feature_len  u32
//! agents       u32
//! then per sample:
//!   reward     f64
//!   terminal   u8       0 or 1
//!   actions    u8 × agents
//!   state      sparse feature vector
//!   next       sparse feature vector
//! sparse vector: nnz u32, then nnz × (index u32, value f32)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use evade_core::mmdp::ExperienceSample;

use crate::HarnessError;

const MAGIC: &[u8; 8] = b"EVADERP1";

fn broken(message: impl Into<String>) -> HarnessError {
    HarnessError::format("replay file", message)
}

fn put_sparse(buf: &mut Vec<u8>, features: &[f32]) {
    let nnz = features.iter().filter(|&&v| v != 0.0).count() as u32;
    buf.extend_from_slice(&nnz.to_le_bytes());
    for (i, &v) in features.iter().enumerate().filter(|(_, &v)| v != 0.0) {
        buf.extend_from_slice(&(i as u32).to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_replay<'a, W: Write>(
    mut out: W,
    samples: impl IntoIterator<Item = &'a ExperienceSample>,
) -> Result<(), HarnessError> {
    let mut samples = samples.into_iter().peekable();
    let (feature_len, agents) = samples
        .peek()
        .map_or((0, 0), |s| (s.state_features.len(), s.joint_action.len()));
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    // count is patched in once the samples are written
    buf.extend_from_slice(&0u64.to_le_bytes());
    buf.extend_from_slice(&(feature_len as u32).to_le_bytes());
    buf.extend_from_slice(&(agents as u32).to_le_bytes());
    let mut count = 0u64;
    for s in samples {
        count += 1;
        if s.state_features.len() != feature_len
            || s.next_state_features.len() != feature_len
            || s.joint_action.len() != agents
        {
            return Err(broken("samples of differing shapes"));
        }
        buf.extend_from_slice(&s.reward.to_le_bytes());
        buf.push(u8::from(s.terminal));
        buf.extend_from_slice(&s.joint_action);
        put_sparse(&mut buf, &s.state_features);
        put_sparse(&mut buf, &s.next_state_features);
    }
    buf[8..16].copy_from_slice(&count.to_le_bytes());
    out.write_all(&buf).map_err(|e| broken(e.to_string()))
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], HarnessError> {
        if self.0.len() < n {
            return Err(broken("truncated file"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, HarnessError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn sparse(&mut self, len: usize) -> Result<Vec<f32>, HarnessError> {
        let mut out = vec![0.0; len];
        let nnz = self.u32()?;
        for _ in 0..nnz {
            let index = self.u32()? as usize;
            let value = f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
            *out.get_mut(index).ok_or_else(|| broken(format!("feature index {index} out of range")))? = value;
        }
        Ok(out)
    }
}

pub fn read_replay<R: Read>(mut input: R) -> Result<Vec<ExperienceSample>, HarnessError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| broken(e.to_string()))?;
    let mut c = Cursor(&bytes);
    if c.take(8)? != MAGIC {
        return Err(broken("bad magic"));
    }
    let count = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let feature_len = c.u32()? as usize;
    let agents = c.u32()? as usize;
    let mut samples = Vec::new();
    for _ in 0..count {
        let reward = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
        let terminal = match c.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(broken(format!("terminal flag {other}"))),
        };
        let joint_action = c.take(agents)?.to_vec();
        samples.push(ExperienceSample {
            state_features: c.sparse(feature_len)?,
            joint_action,
            next_state_features: c.sparse(feature_len)?,
            reward,
            terminal,
        });
    }
    if !c.0.is_empty() {
        return Err(broken("trailing bytes"));
    }
    Ok(samples)
}

pub fn save_replay<'a>(
    path: &Path,
    samples: impl IntoIterator<Item = &'a ExperienceSample>,
) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(HarnessError::io(path))?;
    write_replay(std::io::BufWriter::new(file), samples)
}

pub fn load_replay(path: &Path) -> Result<Vec<ExperienceSample>, HarnessError> {
    let file = std::fs::File::open(path).map_err(HarnessError::io(path))?;
    read_replay(std::io::BufReader::new(file))
}
