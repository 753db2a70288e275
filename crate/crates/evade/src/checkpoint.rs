//! Binary learner checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "EVADECK1"
//! desc_len     u32      length of the architecture descriptor JSON
//! descriptor   desc_len bytes of JSON
//! trainer      f64 × 5  learning_rate gamma beta1 beta2 epsilon
//!              u64 × 5  minibatch_size replay_capacity target_sync_period
//!                       warmup_samples gradient_steps_per_env_step
//! grad_steps   u64
//! adam_step    u64
//! count        u64      parameter count n
//! params       f64 × n  online parameters θ
//! target       f64 × n  target parameters θ⁻
//! adam_m       f64 × n
//! adam_v       f64 × n
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so loading reproduces the learner
//! exactly.

use std::io::{Read, Write};
use std::path::Path;

use evade_core::learner::{AdamState, ArchitectureDescriptor, Learner, TrainerConfig, ValueNet};

use crate::HarnessError;

const MAGIC: &[u8; 8] = b"EVADECK1";

fn broken(message: impl Into<String>) -> HarnessError {
    HarnessError::format("checkpoint", message)
}

pub fn write_checkpoint<W: Write>(mut out: W, learner: &Learner) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let desc = serde_json::to_vec(learner.net().descriptor()).expect("descriptor serializes");
    buf.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    buf.extend_from_slice(&desc);
    let t = learner.config();
    for f in [t.learning_rate, t.gamma, t.beta1, t.beta2, t.epsilon] {
        buf.extend_from_slice(&f.to_le_bytes());
    }
    for u in [
        t.minibatch_size as u64,
        t.replay_capacity as u64,
        t.target_sync_period,
        t.warmup_samples as u64,
        t.gradient_steps_per_env_step as u64,
        learner.gradient_steps(),
        learner.adam_state().step,
        learner.net().parameter_count() as u64,
    ] {
        buf.extend_from_slice(&u.to_le_bytes());
    }
    let adam = learner.adam_state();
    for block in [learner.net().params(), learner.net().target_params(), &adam.m, &adam.v] {
        for f in block {
            buf.extend_from_slice(&f.to_le_bytes());
        }
    }
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

    fn u64(&mut self) -> Result<u64, HarnessError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, HarnessError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, HarnessError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Learner, HarnessError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| broken(e.to_string()))?;
    let mut c = Cursor(&bytes);
    if c.take(8)? != MAGIC {
        return Err(broken("bad magic"));
    }
    let desc_len = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes")) as usize;
    let descriptor: ArchitectureDescriptor =
        serde_json::from_slice(c.take(desc_len)?).map_err(|e| broken(e.to_string()))?;
    let mut trainer = TrainerConfig {
        learning_rate: c.f64()?,
        gamma: c.f64()?,
        beta1: c.f64()?,
        beta2: c.f64()?,
        epsilon: c.f64()?,
        ..TrainerConfig::default()
    };
    trainer.minibatch_size = c.u64()? as usize;
    trainer.replay_capacity = c.u64()? as usize;
    trainer.target_sync_period = c.u64()?;
    trainer.warmup_samples = c.u64()? as usize;
    trainer.gradient_steps_per_env_step = c.u64()? as usize;
    let gradient_steps = c.u64()?;
    let adam_step = c.u64()?;
    let count = c.u64()? as usize;
    if count.checked_mul(32).is_none_or(|need| need != c.0.len()) {
        return Err(broken(format!("{} payload bytes for {count} parameters", c.0.len())));
    }
    let params = c.f64s(count)?;
    let target = c.f64s(count)?;
    let adam = AdamState {
        m: c.f64s(count)?,
        v: c.f64s(count)?,
        step: adam_step,
    };
    let net = ValueNet::from_parts(descriptor, params, target)?;
    Ok(Learner::from_parts(net, adam, trainer, gradient_steps)?)
}

pub fn save_checkpoint(path: &Path, learner: &Learner) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(HarnessError::io(path))?;
    write_checkpoint(std::io::BufWriter::new(file), learner)
}

pub fn load_checkpoint(path: &Path) -> Result<Learner, HarnessError> {
    let file = std::fs::File::open(path).map_err(HarnessError::io(path))?;
    read_checkpoint(std::io::BufReader::new(file))
}
