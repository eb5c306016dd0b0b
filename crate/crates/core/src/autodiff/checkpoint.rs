//! Checkpoint container: `CRRECON1` magic, a little-endian u32 header length,
//! a JSON header describing parameters in sorted-name order, then raw f64
//! little-endian payloads (parameters, then optional optimizer moments).

use super::optim::AdamW;
use super::params::ParamStore;
use crate::case::corpus::atomic_write;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

const MAGIC: &[u8; 8] = b"CRRECON1";
const FORMAT: u32 = 1;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: u32,
    pub epoch: u32,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamDesc {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptDesc {
    step: u64,
    names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: u32,
    seed: u64,
    meta: CheckpointMeta,
    params: Vec<ParamDesc>,
    opt: Option<OptDesc>,
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub store: ParamStore,
    opt_state: Option<(u64, Vec<(String, Vec<f64>, Vec<f64>)>)>,
}

impl Checkpoint {
    /// Restores optimizer moments when the file carried them.
    pub fn restore_optimizer(self, opt: &mut AdamW) -> ParamStore {
        if let Some((step, moments)) = self.opt_state {
            opt.import_state(step, moments);
        }
        self.store
    }

    pub fn has_optimizer_state(&self) -> bool {
        self.opt_state.is_some()
    }
}

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    buf.reserve(vals.len() * 8);
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn take_f64s(bytes: &[u8], at: &mut usize, n: usize) -> Result<Vec<f64>> {
    let need = n * 8;
    let end = *at + need;
    if end > bytes.len() {
        return Err(Error::Checkpoint("payload truncated".into()));
    }
    let out = bytes[*at..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *at = end;
    Ok(out)
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, opt: Option<&AdamW>, meta: &CheckpointMeta) -> Result<()> {
    // BTreeMap iteration keeps the payload order stable across runs
    let params: Vec<ParamDesc> = store
        .params
        .iter()
        .map(|(name, p)| ParamDesc { name: name.clone(), shape: p.shape.clone() })
        .collect();
    let opt_desc = opt.map(|o| {
        let (step, it) = o.export_state();
        OptDesc { step, names: it.map(|(n, _, _)| n.to_string()).collect() }
    });
    let header = Header { format: FORMAT, seed: store.seed(), meta: meta.clone(), params, opt: opt_desc };
    let header_json = serde_json::to_vec(&header).expect("header serialization is infallible");

    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for p in store.params.values() {
        put_f64s(&mut buf, &p.data);
    }
    if let Some(o) = opt {
        let (_, it) = o.export_state();
        for (_, m, v) in it {
            put_f64s(&mut buf, m);
            put_f64s(&mut buf, v);
        }
    }
    atomic_write(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint (bad magic)", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if 12 + hlen > bytes.len() {
        return Err(Error::Checkpoint("header length exceeds file".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + hlen])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format {}", header.format)));
    }

    let mut at = 12 + hlen;
    let mut store = ParamStore::new(header.seed);
    let mut lens: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &header.params {
        let n: usize = d.shape.iter().product();
        lens.insert(d.name.as_str(), n);
        let data = take_f64s(&bytes, &mut at, n)?;
        store.insert_raw(d.name.clone(), d.shape.clone(), data)?;
    }
    let opt_state = match &header.opt {
        None => None,
        Some(o) => {
            let mut moments = Vec::with_capacity(o.names.len());
            for name in &o.names {
                let n = *lens
                    .get(name.as_str())
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer state for unknown param {name}")))?;
                let m = take_f64s(&bytes, &mut at, n)?;
                let v = take_f64s(&bytes, &mut at, n)?;
                moments.push((name.clone(), m, v));
            }
            Some((o.step, moments))
        }
    };
    if at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - at)));
    }
    Ok(Checkpoint { meta: header.meta, store, opt_state })
}

#[cfg(test)]
mod tests {
    use super::super::{AdamW, AdamWConfig, Init};
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("ckpt-{}-{name}", std::process::id()))
    }

    #[test]
    fn round_trip_preserves_params_and_optimizer() {
        let mut store = ParamStore::new(42);
        store.get_or_init("encoder.w", &[2, 3], Init::Normal(0.1)).unwrap();
        store.get_or_init("decoder.b", &[4], Init::Zeros).unwrap();

        let mut opt = AdamW::new(AdamWConfig::default());
        let mut grads = BTreeMap::new();
        grads.insert("encoder.w".to_string(), vec![0.1; 6]);
        opt.step(&mut store, &grads).unwrap();

        let mut meta = CheckpointMeta { stage: 2, epoch: 7, extra: BTreeMap::new() };
        meta.extra.insert("note".into(), serde_json::json!("x"));
        let path = tmp("roundtrip.bin");
        save_checkpoint(&path, &store, Some(&opt), &meta).unwrap();

        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.meta.stage, 2);
        assert_eq!(loaded.meta.epoch, 7);
        assert!(loaded.has_optimizer_state());
        assert_eq!(loaded.store.seed(), 42);
        assert_eq!(loaded.store.values("encoder.w").unwrap(), store.values("encoder.w").unwrap());
        assert_eq!(loaded.store.shape("decoder.b").unwrap(), &[4]);

        let mut opt2 = AdamW::new(AdamWConfig::default());
        let store2 = loaded.restore_optimizer(&mut opt2);
        assert_eq!(opt2.steps_taken(), 1);
        // a further identical step must act identically on both copies
        let mut s1 = store;
        let mut s2 = store2;
        opt.step(&mut s1, &grads).unwrap();
        opt2.step(&mut s2, &grads).unwrap();
        assert_eq!(s1.values("encoder.w").unwrap(), s2.values("encoder.w").unwrap());

        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn save_is_byte_identical_across_runs() {
        let mut store = ParamStore::new(1);
        store.get_or_init("b.w", &[3], Init::Normal(1.0)).unwrap();
        store.get_or_init("a.w", &[2], Init::Normal(1.0)).unwrap();
        let meta = CheckpointMeta::default();
        let (p1, p2) = (tmp("bytes-1.bin"), tmp("bytes-2.bin"));
        save_checkpoint(&p1, &store, None, &meta).unwrap();
        save_checkpoint(&p2, &store, None, &meta).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(&p1).unwrap();
        std::fs::remove_file(&p2).unwrap();
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let path = tmp("bad.bin");
        std::fs::write(&path, b"NOTMAGIC....").unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::remove_file(&path).unwrap();
    }
}
