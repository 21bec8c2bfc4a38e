use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nets::EpochRecord;

use super::MetricsReport;

/// Keys holding wall-clock measurements; dropped from canonical output.
pub const TIMING_KEYS: [&str; 2] = ["seconds", "rte"];

/// Proxy metrics of the analytic unlearning target, before distillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBlock {
    pub eta_max: f64,
    pub admissible: bool,
    /// `"interval"`, `"capped-at-1"`, `"none"` or `"fixed"` for Dirac kinds.
    pub zero_bracket: String,
    /// `E[KL(p_θ‖P_r)] − E[KL(p_θ‖P)]` when defined.
    pub admissibility_gap: Option<f64>,
    /// `None` when the target rules out a class the reference allows.
    pub kl_t: Option<f64>,
    pub kl_f: Option<f64>,
    pub acc_t: f64,
    pub acc_f: f64,
    /// `E_D[KL(target‖p_θ)]`.
    pub kl_net_to_proxy_before: f64,
    /// `E_D[KL(target‖distilled)]`.
    pub kl_net_to_proxy_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub seed: u64,
    pub best_epoch: usize,
    pub best: MetricsReport,
    pub epochs: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub origin: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        Self {
            origin: e.origin().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorEntry {
    pub seed: u64,
    pub error: ErrorInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodOutcome {
    Done(Box<MethodEntry>),
    Failed(ErrorEntry),
}

/// Everything measured for one seed: the two reference rows and one entry
/// per method, keyed by method name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub initial: MetricsReport,
    pub retrained: MetricsReport,
    #[serde(flatten)]
    pub methods: BTreeMap<String, MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedOutcome {
    Done(Box<SeedEntry>),
    Failed(ErrorEntry),
}

impl SeedOutcome {
    pub fn seed(&self) -> u64 {
        match self {
            SeedOutcome::Done(e) => e.seed,
            SeedOutcome::Failed(e) => e.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileMeta {
    pub dataset: String,
    pub scenario: String,
    pub arch: String,
    pub n_per_subclass: usize,
    pub test_per_subclass: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
}

/// Content under one architecture key: flat for class and random
/// scenarios, wrapped with metadata for subclass scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchResults {
    Wrapped {
        meta: FileMeta,
        results: BTreeMap<String, Vec<SeedOutcome>>,
    },
    Flat(BTreeMap<String, Vec<SeedOutcome>>),
}

impl ArchResults {
    pub fn results(&self) -> &BTreeMap<String, Vec<SeedOutcome>> {
        match self {
            ArchResults::Wrapped { results, .. } | ArchResults::Flat(results) => results,
        }
    }

    pub fn results_mut(&mut self) -> &mut BTreeMap<String, Vec<SeedOutcome>> {
        match self {
            ArchResults::Wrapped { results, .. } | ArchResults::Flat(results) => results,
        }
    }
}

/// One `{scenario}_{arch}_raw.json` file, keyed by architecture name.
pub type ResultFile = BTreeMap<String, ArchResults>;

/// `dataset → arch_kind → "{scenario}_{arch}" → file`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResultsTree {
    pub datasets: BTreeMap<String, BTreeMap<String, BTreeMap<String, ResultFile>>>,
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !TIMING_KEYS.contains(&k.as_str()));
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

impl ResultsTree {
    pub fn file_mut(&mut self, dataset: &str, arch_kind: &str, stem: &str) -> &mut ResultFile {
        self.datasets
            .entry(dataset.to_string())
            .or_default()
            .entry(arch_kind.to_string())
            .or_default()
            .entry(stem.to_string())
            .or_default()
    }

    /// `(relative path, file)` for every file of the tree, in key order.
    pub fn files(&self) -> Vec<(PathBuf, &ResultFile)> {
        let mut out = Vec::new();
        for (dataset, kinds) in &self.datasets {
            for (kind, files) in kinds {
                for (stem, file) in files {
                    out.push((
                        Path::new(dataset)
                            .join(kind)
                            .join(format!("{stem}_raw.json")),
                        file,
                    ));
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.files().is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Sorted-key JSON without wall-clock fields; equal for equal runs.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("results serialize");
        strip_timing(&mut v);
        serde_json::to_string_pretty(&v).expect("value serializes")
    }

    pub fn canonical_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `root/{dataset}/{arch_kind}/{scenario}_{arch}_raw.json`.
    pub fn write(&self, root: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (rel, file) in self.files() {
            let path = root.join(rel);
            write_atomic(&path, serde_json::to_string_pretty(file)?.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }

    /// Reads every `*_raw.json` three levels below `root`.
    pub fn read(root: &Path) -> Result<Self> {
        let list = |p: &Path| -> Result<Vec<PathBuf>> {
            let mut v: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            v.sort();
            Ok(v)
        };
        let name = |p: &Path| {
            p.file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string()
        };
        let mut tree = ResultsTree::default();
        for ds in list(root)?.into_iter().filter(|p| p.is_dir()) {
            for kind in list(&ds)?.into_iter().filter(|p| p.is_dir()) {
                for file in list(&kind)? {
                    let fname = name(&file);
                    let Some(stem) = fname.strip_suffix("_raw.json") else {
                        continue;
                    };
                    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
                    let parsed: ResultFile = serde_json::from_str(&text)
                        .map_err(|e| Error::parse(file.display().to_string(), e.to_string()))?;
                    *tree.file_mut(&name(&ds), &name(&kind), stem) = parsed;
                }
            }
        }
        if tree.is_empty() {
            return Err(Error::Empty("results tree"));
        }
        Ok(tree)
    }
}
