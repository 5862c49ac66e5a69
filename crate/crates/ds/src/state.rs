//! The data-space state as a directory of JSON documents.
//!
//! ```text
//! space.json            seed, clocks, fingerprint, latency and fault settings
//! keys.json             orchestrator, participant and node encryption keys
//! registry.json         trust anchors and members
//! catalog.json          offers and their use counters
//! committee.json        key-holding committee (or null)
//! inputs.json           values held by simulated input parties
//! audit.jsonl           the audit chain, one entry per line
//! contracts/<id>.json   signed contracts, canonical JSON
//! custodian/custodian.json
//! custodian/handles/<handle_id>/{manifest.json,handle.json}
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use ds_core::orchestrator::{audit_to_jsonl, AuditEntry, DataSpace, SignedContract};
use ds_core::provisioning::DataHandle;

use crate::files::{read_json, read_jsonl, write_canonical, write_json};

const SPACE_KEYS: [&str; 8] = ["seed", "clock", "ops", "fingerprint", "latency", "party_latency_ms", "time_budget_ms", "faults"];
const KEY_KEYS: [&str; 3] = ["orchestrator", "keyring", "encryption_keys"];

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error("no data space at {0} (run `ds init` first)")]
    Missing(PathBuf),
    #[error("a data space already exists at {0}")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("inconsistent state: {0}")]
    Corrupt(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StateError + '_ {
    move |source| StateError::Io { path: path.to_path_buf(), source }
}

pub struct StateDir {
    root: PathBuf,
}

impl StateDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StateDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self) -> bool {
        self.path("space.json").is_file()
    }

    pub fn create(&self, ds: &DataSpace) -> Result<(), StateError> {
        if self.exists() {
            return Err(StateError::Exists(self.root.clone()));
        }
        self.save(ds)
    }

    pub fn save(&self, ds: &DataSpace) -> Result<(), StateError> {
        let Value::Object(mut all) = serde_json::to_value(ds).map_err(|e| StateError::Corrupt(e.to_string()))? else {
            return Err(StateError::Corrupt("data space is not an object".into()));
        };
        let mut take = |keys: &[&str]| -> Map<String, Value> { keys.iter().filter_map(|k| all.remove(*k).map(|v| (k.to_string(), v))).collect() };
        let space = take(&SPACE_KEYS);
        let keys = take(&KEY_KEYS);
        let write = |name: &str, v: &Value| {
            let p = self.path(name);
            write_json(&p, v).map_err(io_at(&p))
        };
        write("space.json", &Value::Object(space))?;
        write("keys.json", &Value::Object(keys))?;
        write("registry.json", &all["registry"])?;
        write("catalog.json", &all["catalog"])?;
        write("committee.json", &all["committee"])?;
        write("inputs.json", &all["private_inputs"])?;

        let audit = self.path("audit.jsonl");
        fs::write(&audit, audit_to_jsonl(&ds.audit)).map_err(io_at(&audit))?;
        for (id, contract) in &ds.contracts {
            let p = self.path("contracts").join(format!("{id}.json"));
            write_canonical(&p, contract).map_err(io_at(&p))?;
        }

        let custodian_dir = self.path("custodian");
        match all.remove("custodian") {
            Some(Value::Object(mut custodian)) => {
                let handles = custodian.remove("handles").unwrap_or_default();
                let p = custodian_dir.join("custodian.json");
                write_json(&p, &custodian).map_err(io_at(&p))?;
                if let Value::Object(handles) = handles {
                    for (id, h) in handles {
                        let handle: DataHandle = serde_json::from_value(h).map_err(|e| StateError::Corrupt(e.to_string()))?;
                        let dir = custodian_dir.join("handles").join(&id);
                        write_json(&dir.join("manifest.json"), &handle.manifest()).map_err(io_at(&dir))?;
                        write_json(&dir.join("handle.json"), &handle).map_err(io_at(&dir))?;
                    }
                }
            }
            _ => {
                if custodian_dir.exists() {
                    fs::remove_dir_all(&custodian_dir).map_err(io_at(&custodian_dir))?;
                }
            }
        }
        Ok(())
    }

    pub fn load(&self) -> Result<DataSpace, StateError> {
        if !self.exists() {
            return Err(StateError::Missing(self.root.clone()));
        }
        let read = |name: &str| -> Result<Value, StateError> {
            let p = self.path(name);
            read_json(&p).map_err(io_at(&p))
        };
        let mut all = Map::new();
        for name in ["space.json", "keys.json"] {
            if let Value::Object(m) = read(name)? {
                all.extend(m);
            }
        }
        all.insert("registry".into(), read("registry.json")?);
        all.insert("catalog".into(), read("catalog.json")?);
        all.insert("committee".into(), read("committee.json")?);
        all.insert("private_inputs".into(), read("inputs.json")?);

        let audit_path = self.path("audit.jsonl");
        let audit: Vec<AuditEntry> = read_jsonl(&audit_path).map_err(io_at(&audit_path))?;
        all.insert("audit".into(), serde_json::to_value(audit).map_err(|e| StateError::Corrupt(e.to_string()))?);

        let mut contracts = Map::new();
        let dir = self.path("contracts");
        if dir.is_dir() {
            for entry in fs::read_dir(&dir).map_err(io_at(&dir))? {
                let path = entry.map_err(io_at(&dir))?.path();
                let c: SignedContract = read_json(&path).map_err(io_at(&path))?;
                contracts.insert(c.contract_id.clone(), serde_json::to_value(c).map_err(|e| StateError::Corrupt(e.to_string()))?);
            }
        }
        all.insert("contracts".into(), Value::Object(contracts));

        let custodian_dir = self.path("custodian");
        let custodian = if custodian_dir.join("custodian.json").is_file() {
            let p = custodian_dir.join("custodian.json");
            let mut c: Map<String, Value> = read_json(&p).map_err(io_at(&p))?;
            let mut handles = Map::new();
            let hdir = custodian_dir.join("handles");
            if hdir.is_dir() {
                for entry in fs::read_dir(&hdir).map_err(io_at(&hdir))? {
                    let path = entry.map_err(io_at(&hdir))?.path().join("handle.json");
                    let h: DataHandle = read_json(&path).map_err(io_at(&path))?;
                    handles.insert(h.handle_id.clone(), serde_json::to_value(h).map_err(|e| StateError::Corrupt(e.to_string()))?);
                }
            }
            c.insert("handles".into(), Value::Object(handles));
            Value::Object(c)
        } else {
            Value::Null
        };
        all.insert("custodian".into(), custodian);
        serde_json::from_value(Value::Object(all)).map_err(|e| StateError::Corrupt(e.to_string()))
    }
}
