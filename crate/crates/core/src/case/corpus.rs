//! On-disk corpus layout:
//!
//! ```text
//! corpus/
//!   manifest.json          seed + case ids with train/eval split
//!   cases/<id>.json        model-input case files
//!   cases/<id>.sup.csv     dense supervision sidecars (preprocess output)
//!   truth/<id>.csv         sealed simulator states, eval tooling only
//! ```
//!
//! Case files never contain ground truth; the truth sidecar lives in a
//! separate subtree so the input schema cannot smuggle it in.

use super::ingest::{ingest_case, Ingested};
use super::serialize::serialize_case;
use super::AccidentCase;
use crate::error::{Error, Result};
use crate::supervision::{sidecar, DenseSupervision};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub cases: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.cases.iter().filter(move |e| e.split == split).map(|e| e.id.as_str())
    }
}

pub fn case_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("cases").join(format!("{id}.json"))
}

pub fn sidecar_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("cases").join(format!("{id}.sup.csv"))
}

pub fn truth_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("truth").join(format!("{id}.csv"))
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write-then-rename so interrupted runs never leave half a file behind.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |e| Error::io(path.display().to_string(), e);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = manifest_path(dir);
    let text = read(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn save_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialization is infallible");
    text.push('\n');
    atomic_write(&manifest_path(dir), text.as_bytes())
}

pub fn save_case(dir: &Path, case: &AccidentCase) -> Result<()> {
    let text = serialize_case(case)?;
    atomic_write(&case_path(dir, &case.case_id), text.as_bytes())
}

/// Loads one case, attaching the supervision sidecar when present and wanted.
pub fn load_case(dir: &Path, id: &str, with_supervision: bool) -> Result<Ingested> {
    let text = read(&case_path(dir, id))?;
    let mut got = ingest_case(&text)?;
    if got.case.case_id != id {
        return Err(Error::schema("case_id", format!("file {id}.json declares case_id `{}`", got.case.case_id)));
    }
    if with_supervision {
        let sc = sidecar_path(dir, id);
        if sc.exists() {
            got.case.supervision = Some(sidecar::from_csv(&read(&sc)?)?);
        }
    }
    Ok(got)
}

pub fn save_sidecar(dir: &Path, id: &str, sup: &DenseSupervision) -> Result<()> {
    atomic_write(&sidecar_path(dir, id), sidecar::to_csv(sup).as_bytes())
}

/// Sealed simulator states. Only evaluation tooling should call this.
pub fn load_truth(dir: &Path, id: &str) -> Result<DenseSupervision> {
    sidecar::from_csv(&read(&truth_path(dir, id))?)
}

pub fn save_truth(dir: &Path, id: &str, truth: &DenseSupervision) -> Result<()> {
    atomic_write(&truth_path(dir, id), sidecar::to_csv(truth).as_bytes())
}

/// Loads every case of a split in manifest order.
pub fn load_split(dir: &Path, manifest: &Manifest, split: Split, with_supervision: bool) -> Result<Vec<AccidentCase>> {
    let mut out = Vec::new();
    for id in manifest.ids(split) {
        out.push(load_case(dir, id, with_supervision)?.case);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_and_case_round_trip_through_disk() {
        let dir = std::env::temp_dir().join(format!("corpus-test-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);

        let manifest = Manifest {
            seed: 7,
            cases: vec![
                ManifestEntry { id: "c-000".into(), split: Split::Train },
                ManifestEntry { id: "c-001".into(), split: Split::Eval },
            ],
        };
        save_manifest(&dir, &manifest).unwrap();

        for id in ["c-000", "c-001"] {
            let case = ingest_case(&format!(
                r#"{{"case_id": "{id}", "vehicles": [{{"slot": 0, "category": "suv"}}]}}"#
            ))
            .unwrap()
            .case;
            save_case(&dir, &case).unwrap();
        }

        let back = load_manifest(&dir).unwrap();
        assert_eq!(back.seed, 7);
        assert_eq!(back.ids(Split::Train).collect::<Vec<_>>(), ["c-000"]);
        let cases = load_split(&dir, &back, Split::Eval, false).unwrap();
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].case_id, "c-001");

        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn id_mismatch_is_rejected() {
        let dir = std::env::temp_dir().join(format!("corpus-test-mismatch-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let case = ingest_case(r#"{"case_id": "other", "vehicles": []}"#).unwrap().case;
        atomic_write(&case_path(&dir, "c-9"), super::super::serialize_case(&case).unwrap().as_bytes()).unwrap();
        assert!(load_case(&dir, "c-9", false).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
