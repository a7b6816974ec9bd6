//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "GDIFFCKP" | version u32 | config hash: 64 hex bytes
//! config text: u64 length + UTF-8 | schedule: steps u64, offset f64
//! rng: seed [u8; 32], stream u64, word position u128
//! counters: u64 count, each (name, u64)
//! arrays: u64 count, each (name, rows u64, cols u64, rows*cols f64)
//! ```
//!
//! Names are a u32 length plus UTF-8 bytes. Entries keep insertion order,
//! so decoding and re-encoding reproduces the input byte for byte.

use std::path::Path;

use crate::autodiff::ParamSet;
use crate::diffusion::ScheduleSpec;
use crate::rng::RngState;
use crate::{Error, Result, Tensor};

const MAGIC: &[u8; 8] = b"GDIFFCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub config_text: String,
    pub schedule: ScheduleSpec,
    pub rng: RngState,
    pub counters: Vec<(String, u64)>,
    pub arrays: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(config_hash: String, config_text: String, schedule: ScheduleSpec, rng: RngState) -> Self {
        Self { config_hash, config_text, schedule, rng, counters: Vec::new(), arrays: Vec::new() }
    }

    pub fn put_counter(&mut self, name: &str, value: u64) {
        self.counters.push((name.to_string(), value));
    }

    pub fn counter(&self, name: &str) -> Result<u64> {
        self.counters
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Checkpoint(format!("missing counter `{name}`")))
    }

    pub fn put_array(&mut self, name: &str, value: Tensor) {
        self.arrays.push((name.to_string(), value));
    }

    pub fn array(&self, name: &str) -> Result<&Tensor> {
        self.arrays
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Checkpoint(format!("missing array `{name}`")))
    }

    /// Values, moments and step counts of every parameter under `prefix`.
    pub fn put_params(&mut self, prefix: &str, params: &ParamSet) {
        for (i, p) in params.iter().enumerate() {
            let key = format!("{prefix}/{i}:{}", p.name);
            self.put_array(&format!("{key}/value"), p.value.clone());
            self.put_array(&format!("{key}/m"), p.first_moment.clone());
            self.put_array(&format!("{key}/v"), p.second_moment.clone());
            self.put_counter(&format!("{key}/steps"), p.step_count);
        }
    }

    /// Restores parameters written by [`Self::put_params`] into a set of the
    /// same architecture.
    pub fn take_params(&self, prefix: &str, params: &mut ParamSet) -> Result<()> {
        for (i, p) in params.iter_mut().enumerate() {
            let key = format!("{prefix}/{i}:{}", p.name);
            let fetch = |suffix: &str| -> Result<Tensor> {
                let t = self.array(&format!("{key}/{suffix}"))?;
                if t.shape() != p.value.shape() {
                    return Err(Error::Checkpoint(format!(
                        "`{key}` has shape {:?}, model expects {:?}",
                        t.shape(),
                        p.value.shape()
                    )));
                }
                Ok(t.clone())
            };
            let (value, m, v) = (fetch("value")?, fetch("m")?, fetch("v")?);
            p.step_count = self.counter(&format!("{key}/steps"))?;
            p.value = value;
            p.first_moment = m;
            p.second_moment = v;
        }
        let stored =
            self.arrays.iter().filter(|(n, _)| n.starts_with(&format!("{prefix}/")) && n.ends_with("/value")).count();
        if stored != params.len() {
            return Err(Error::Checkpoint(format!(
                "`{prefix}` stores {stored} parameters, model has {}",
                params.len()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let mut hash = [b'0'; 64];
        let h = self.config_hash.as_bytes();
        hash[..h.len().min(64)].copy_from_slice(&h[..h.len().min(64)]);
        out.extend_from_slice(&hash);
        out.extend_from_slice(&(self.config_text.len() as u64).to_le_bytes());
        out.extend_from_slice(self.config_text.as_bytes());
        out.extend_from_slice(&(self.schedule.steps as u64).to_le_bytes());
        out.extend_from_slice(&self.schedule.offset.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&(self.counters.len() as u64).to_le_bytes());
        for (name, v) in &self.counters {
            put_name(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.arrays.len() as u64).to_le_bytes());
        for (name, t) in &self.arrays {
            put_name(&mut out, name);
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let config_hash = r.utf8(64)?;
        let len = r.len()?;
        let config_text = r.utf8(len)?;
        let steps = r.len()?;
        let offset = r.f64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let mut ck = Checkpoint::new(
            config_hash,
            config_text,
            ScheduleSpec { steps, offset },
            RngState { seed, stream, word_pos },
        );
        for _ in 0..r.len()? {
            let name = r.name()?;
            let v = r.u64()?;
            ck.counters.push((name, v));
        }
        for _ in 0..r.len()? {
            let name = r.name()?;
            let rows = r.len()?;
            let cols = r.len()?;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::Checkpoint(format!("array `{name}` is truncated")))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            ck.arrays.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint; with `expected_hash` the stored configuration hash
    /// must match it.
    pub fn load(path: impl AsRef<Path>, expected_hash: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ck = Self::from_bytes(&bytes)?;
        if let Some(h) = expected_hash {
            if ck.config_hash != h {
                return Err(Error::Checkpoint(format!(
                    "{} was written by configuration {}, expected {h}",
                    path.display(),
                    ck.config_hash
                )));
            }
        }
        Ok(ck)
    }
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Checkpoint("unexpected end of checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflows".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn utf8(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 in checkpoint".into()))
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        self.utf8(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn sample() -> Checkpoint {
        let mut rng = SeededRng::new(4);
        rng.normal();
        let mut ck =
            Checkpoint::new("ab".repeat(32), "task = \"inductive\"\n".into(), ScheduleSpec::default(), rng.state());
        ck.put_counter("round", 3);
        ck.put_array("w", Tensor::from_vec(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap());
        ck.put_array("empty", Tensor::zeros(0, 3));
        ck
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.array("w").unwrap().data()[1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).unwrap_err().to_string().contains("version"));
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn hash_checked_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        sample().save(&path).unwrap();
        assert!(Checkpoint::load(&path, Some(&"ab".repeat(32))).is_ok());
        assert!(matches!(Checkpoint::load(&path, Some("ff")), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn params_round_trip() {
        let mut rng = SeededRng::new(0);
        let mut p = ParamSet::new();
        p.add("a", rng.normal_tensor(2, 3));
        p.add("b", rng.normal_tensor(1, 3));
        p.get_mut(crate::autodiff::ParamId(1)).step_count = 5;
        let mut ck = sample();
        ck.put_params("net", &p);
        let mut q = p.clone();
        for x in q.iter_mut() {
            x.value = x.value.scale(0.0);
            x.step_count = 0;
        }
        ck.take_params("net", &mut q).unwrap();
        assert_eq!(p, q);
        let mut small = ParamSet::new();
        small.add("a", Tensor::zeros(2, 2));
        assert!(ck.take_params("net", &mut small).is_err());
    }
}
