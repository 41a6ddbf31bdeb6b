//! Run directories: manifest, metrics CSV, and checkpoint for one training
//! run, plus re-execution from a saved manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, MetricsRow};
use crate::qai::{self, QARecord};
use crate::rng;
use crate::trainer::{TrainConfig, Trainer};
use crate::vocab::Vocab;

pub const MANIFEST_VERSION: &str = "twgrpo-manifest v1";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Everything needed to reproduce a run: the fully resolved config plus
/// the corpus location and a content hash guarding against drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub corpus: String,
    pub corpus_hash: String,
    pub preset: Option<String>,
    pub config: TrainConfig,
}

pub fn corpus_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:016x}", rng::fnv64(&bytes)))
}

impl RunManifest {
    pub fn new(corpus: &Path, preset: Option<String>, config: TrainConfig) -> Result<Self> {
        Ok(Self {
            version: MANIFEST_VERSION.into(),
            corpus: corpus.to_string_lossy().into_owned(),
            corpus_hash: corpus_hash(corpus)?,
            preset,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: RunManifest = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("malformed manifest {path:?}: {e}")))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest version {:?}",
                manifest.version
            )));
        }
        Ok(manifest)
    }

    /// Load the corpus the manifest points at, verifying the content hash.
    pub fn load_corpus(&self) -> Result<Vec<QARecord>> {
        let path = Path::new(&self.corpus);
        let hash = corpus_hash(path)?;
        if hash != self.corpus_hash {
            return Err(Error::Config(format!(
                "corpus {} hash {hash} does not match manifest hash {}",
                self.corpus, self.corpus_hash
            )));
        }
        qai::load_corpus(path)
    }
}

/// Train per the manifest and write manifest + metrics + final checkpoint
/// into `dir`. Returns the metrics table.
pub fn execute_run(dir: &Path, manifest: &RunManifest) -> Result<Vec<MetricsRow>> {
    let records = manifest.load_corpus()?;
    std::fs::create_dir_all(dir)?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    let mut trainer = Trainer::new(manifest.config.clone(), &records, Vocab::standard())?;
    trainer.train()?;
    metrics::save_metrics(&dir.join(METRICS_FILE), &trainer.metrics)?;
    trainer.save_checkpoint(&dir.join(CHECKPOINT_DIR))?;
    let mut stats = String::from("step,mean_total_reward,group_reward_std\n");
    for s in &trainer.step_stats {
        stats.push_str(&format!(
            "{},{:?},{:?}\n",
            s.step, s.mean_total_reward, s.group_reward_std
        ));
    }
    std::fs::write(dir.join("reward_std_by_step.csv"), stats)?;
    Ok(trainer.metrics)
}

/// Re-execute the run recorded in `dir`'s manifest, writing to `out`.
pub fn rerun(dir: &Path, out: &Path) -> Result<Vec<MetricsRow>> {
    let manifest = RunManifest::load(&dir.join(MANIFEST_FILE))?;
    execute_run(out, &manifest)
}
