//! Binary checkpoints of a trained baseline.
//!
//! Layout: the 8-byte magic, one format version byte, the payload length as
//! `u64` LE, the SHA-256 of the payload, then the payload. All payload
//! integers are `u64` LE and reals are `f64` LE bit patterns, so a round
//! trip is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use bimaml_core::baseline::{BaselineState, EpochRecord};
use bimaml_core::numkernel::{Matrix, NetworkSpec, ParamVector};
use bimaml_core::rehearsal::MemorySet;
use bimaml_core::taskstream::TaskMeta;
use sha2::{Digest, Sha256};

use crate::error::{io_at, HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"BIMAML\0\0";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 8 + 1 + 8 + 32;

/// A baseline state and the hash of the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub state: BaselineState,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.usize(x));
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

fn corrupt(what: impl Into<String>) -> HarnessError {
    HarnessError::Corrupt(what.into())
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("payload ends early"))?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("length overflows usize"))
    }
    /// A length that still fits in the remaining payload at `unit` bytes per element.
    fn len(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.buf.len() - self.at {
            return Err(corrupt("length exceeds payload"));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.usize()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("config hash is not UTF-8"))
    }
}

fn encode_payload(ck: &Checkpoint) -> Vec<u8> {
    let s = &ck.state;
    let mut w = Writer::default();
    w.str(&ck.config_hash);
    w.usize(s.spec.input_dim());
    w.usizes(s.spec.hidden_widths());
    w.usize(s.spec.output_dim());
    w.usize(s.spec.classifier_boundary());
    w.f64s(s.params.values());
    w.f64s(s.prev_params.values());
    w.usize(s.memory.capacity());
    w.usize(s.memory.store().len());
    for (&class, rows) in s.memory.store() {
        w.usize(class);
        w.usize(s.memory.task_of_class()[&class]);
        w.usize(rows.rows());
        w.usize(rows.cols());
        w.f64s(rows.as_slice());
    }
    w.usize(s.learned_tasks.len());
    for t in &s.learned_tasks {
        w.usize(t.index);
        w.usizes(&t.classes);
    }
    w.usize(s.epoch_log.len());
    for log in &s.epoch_log {
        w.usize(log.len());
        for r in log {
            w.usize(r.epoch);
            w.f64(r.train_loss);
            match r.eval_accuracy {
                Some(a) => {
                    w.u64(1);
                    w.f64(a);
                }
                None => w.u64(0),
            }
        }
    }
    w.u64(s.revision);
    w.0
}

fn decode_payload(buf: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf, at: 0 };
    let config_hash = r.str()?;
    let input = r.usize()?;
    let hidden = r.usizes()?;
    let output = r.usize()?;
    let boundary = r.usize()?;
    let spec =
        NetworkSpec::new(input, hidden, output, boundary).map_err(|e| corrupt(e.to_string()))?;
    let params = ParamVector::from_values(&spec, r.f64s()?).map_err(|e| corrupt(e.to_string()))?;
    let prev_params = params
        .with_values(r.f64s()?)
        .map_err(|e| corrupt(e.to_string()))?;

    let capacity = r.usize()?;
    let classes = r.len(8)?;
    let mut store = BTreeMap::new();
    let mut task_of_class = BTreeMap::new();
    for _ in 0..classes {
        let class = r.usize()?;
        task_of_class.insert(class, r.usize()?);
        let rows = r.usize()?;
        let cols = r.usize()?;
        let m = Matrix::from_vec(rows, cols, r.f64s()?).map_err(|e| corrupt(e.to_string()))?;
        store.insert(class, m);
    }
    let memory = MemorySet::from_parts(capacity, store, task_of_class)
        .map_err(|e| corrupt(e.to_string()))?;

    let n_tasks = r.len(8)?;
    let mut learned_tasks = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let index = r.usize()?;
        learned_tasks.push(TaskMeta {
            index,
            classes: r.usizes()?,
        });
    }
    let n_logs = r.len(8)?;
    let mut epoch_log = Vec::with_capacity(n_logs);
    for _ in 0..n_logs {
        let n = r.len(8)?;
        let mut log = Vec::with_capacity(n);
        for _ in 0..n {
            let epoch = r.usize()?;
            let train_loss = r.f64()?;
            let eval_accuracy = match r.u64()? {
                0 => None,
                1 => Some(r.f64()?),
                _ => return Err(corrupt("bad option tag")),
            };
            log.push(EpochRecord {
                epoch,
                train_loss,
                eval_accuracy,
            });
        }
        epoch_log.push(log);
    }
    let revision = r.u64()?;
    if r.at != buf.len() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok(Checkpoint {
        config_hash,
        state: BaselineState {
            spec,
            params,
            prev_params,
            memory,
            learned_tasks,
            epoch_log,
            revision,
        },
    })
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let payload = encode_payload(ck);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&payload));
    out.extend_from_slice(&payload);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("file shorter than header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    if bytes[8] != FORMAT_VERSION {
        return Err(HarnessError::VersionMismatch {
            found: bytes[8],
            expected: FORMAT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != len {
        return Err(corrupt(format!(
            "payload is {} bytes, header says {len}",
            payload.len()
        )));
    }
    if Sha256::digest(payload).as_slice() != &bytes[17..HEADER_LEN] {
        return Err(corrupt("checksum mismatch"));
    }
    decode_payload(payload)
}

/// Writes to a sibling temporary file first so an interrupted save never
/// replaces a good checkpoint.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(ck)).map_err(io_at(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_at(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_at(path))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bimaml_core::baseline::{learn_task, MetaConfig};
    use bimaml_core::taskstream::{make_synthetic, SyntheticConfig};

    fn trained() -> Checkpoint {
        let tasks = make_synthetic(&SyntheticConfig {
            n_per_class: 10,
            dim: 4,
            ..Default::default()
        })
        .unwrap();
        let spec = NetworkSpec::mlp(4, vec![5], 6).unwrap();
        let mut state = BaselineState::new(spec, 12, 3).unwrap();
        let cfg = MetaConfig {
            epochs: 1,
            inner_steps: 1,
            ..Default::default()
        };
        for t in &tasks[..2] {
            state = learn_task(&state, t, &cfg, Some(&t.test)).unwrap();
        }
        Checkpoint {
            config_hash: "abc123".into(),
            state,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = trained();
        let back = decode(&encode(&ck)).unwrap();
        assert!(back.state.params.bit_eq(&ck.state.params));
        assert!(back.state.prev_params.bit_eq(&ck.state.prev_params));
        assert_eq!(back, ck);
    }

    #[test]
    fn truncation_and_version_errors_differ() {
        let bytes = encode(&trained());
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(HarnessError::Corrupt(_))
        ));
        assert!(matches!(
            decode(&bytes[..10]),
            Err(HarnessError::Corrupt(_))
        ));
        let mut flipped = bytes.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(decode(&flipped), Err(HarnessError::Corrupt(_))));
        let mut bumped = bytes;
        bumped[8] += 1;
        assert!(matches!(
            decode(&bumped),
            Err(HarnessError::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ck = trained();
        save_checkpoint(&ck, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing")),
            Err(HarnessError::Io { .. })
        ));
    }
}
