//! Kernel corpora on disk.

use std::path::Path;

use dppcond::kernel::io;
use dppcond::verification::corpus::{random_corpus, CorpusClass, CorpusEntry};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Sizes, classes and seed of a random corpus. Classes are used in rotation;
/// all classes when the list is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub count: usize,
    pub n_min: usize,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
}

impl CorpusSpec {
    pub fn classes(&self) -> CliResult<Vec<CorpusClass>> {
        match &self.classes {
            None => Ok(CorpusClass::ALL.to_vec()),
            Some(names) => names.iter().map(|n| CorpusClass::parse(n).map_err(CliError::from)).collect(),
        }
    }

    pub fn generate(&self) -> CliResult<Vec<CorpusEntry>> {
        Ok(random_corpus(self.seed, self.count, self.n_min, self.n_max, &self.classes()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub file: String,
    pub class: CorpusClass,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: CorpusSpec,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("cannot parse manifest {}: {e}", path.display())))
    }
}

/// Writes one kernel file per corpus entry and `manifest.json` into `dir`.
pub fn gen_corpus(spec: &CorpusSpec, dir: &Path) -> CliResult<Manifest> {
    let entries = spec.generate()?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut manifest = Manifest { seed: spec.seed, spec: spec.clone(), entries: Vec::with_capacity(entries.len()) };
    for e in &entries {
        let label = e.label();
        let file = format!("{label}.json");
        let path = dir.join(&file);
        std::fs::write(&path, io::to_json(&e.kernel, None, Some(&label))).map_err(|err| CliError::io(&path, err))?;
        manifest.entries.push(ManifestEntry { index: e.index, file, class: e.class, n: e.kernel.n() });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}
