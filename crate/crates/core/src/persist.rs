//! Versioned container files with integrity digests.
//!
//! Layout: 8-byte magic, u32 LE format version, u64 LE body length, JSON
//! body, then a SHA-256 digest over magic + version + body. Same envelope
//! for models and preprocessed datasets; the magic distinguishes them.
//!
//! Models store the registry order, every network (weights, biases, Adam
//! state), epsilon schedules, normalization parameters and the effective
//! configuration. Replay memories are not persisted: a loaded model starts
//! with empty buffers and fresh rng streams from the stored seeds, which
//! leaves greedy prediction bit-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{DqnAgent, EpsilonSchedule};
use crate::config::RunConfig;
use crate::data::{Dataset, ZScoreParams};
use crate::ensemble::MarlEnsemble;
use crate::error::{Error, Result};
use crate::labels::LabelRegistry;
use crate::nn::{AdamConfig, DenseNetwork};

pub const MODEL_MAGIC: [u8; 8] = *b"MAIDSMDL";
pub const DATASET_MAGIC: [u8; 8] = *b"MAIDSDAT";
pub const FORMAT_VERSION: u32 = 1;

fn digest(magic: &[u8; 8], version: u32, body: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(magic);
    hasher.update(version.to_le_bytes());
    hasher.update(body);
    hasher.finalize().into()
}

fn write_container(path: &Path, magic: &[u8; 8], body: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(body.len() + 52);
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(body);
    out.extend_from_slice(&digest(magic, FORMAT_VERSION, body));
    fs::write(path, out)?;
    Ok(())
}

fn read_container(path: &Path, magic: &[u8; 8]) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.len() < 52 {
        return Err(Error::Corrupt(format!(
            "{} is too short to be a container",
            path.display()
        )));
    }
    if raw[0..8] != magic[..] {
        return Err(Error::Corrupt(format!(
            "{}: bad magic bytes",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(raw[8..12].try_into().expect("sized"));
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let body_len = u64::from_le_bytes(raw[12..20].try_into().expect("sized")) as usize;
    if raw.len() != 20 + body_len + 32 {
        return Err(Error::Corrupt(format!(
            "{}: length field disagrees with file size",
            path.display()
        )));
    }
    let body = &raw[20..20 + body_len];
    let stored: [u8; 32] = raw[20 + body_len..].try_into().expect("sized");
    if digest(magic, version, body) != stored {
        return Err(Error::Corrupt(format!(
            "{}: integrity digest mismatch",
            path.display()
        )));
    }
    Ok(body.to_vec())
}

#[derive(Serialize, Deserialize)]
struct AgentState {
    network: DenseNetwork<f32>,
    gamma: f64,
    schedule: EpsilonSchedule,
    adam: AdamConfig,
    buffer_capacity: usize,
    seed: u64,
}

impl AgentState {
    fn from_agent(agent: &DqnAgent) -> Self {
        AgentState {
            network: agent.network().clone(),
            gamma: agent.gamma(),
            schedule: *agent.schedule(),
            adam: *agent.adam_config(),
            buffer_capacity: agent.buffer().capacity(),
            seed: agent.seed(),
        }
    }

    fn into_agent(self) -> Result<DqnAgent> {
        self.network.validate_shapes().map_err(|e| {
            Error::Corrupt(format!("stored network failed shape checks: {e}"))
        })?;
        DqnAgent::restore(
            self.network,
            self.gamma,
            self.schedule,
            self.adam,
            self.buffer_capacity,
            self.seed,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    registry: LabelRegistry,
    feature_dim: usize,
    l1_agents: Vec<AgentState>,
    decider: AgentState,
    normalization: ZScoreParams,
    config: RunConfig,
}

/// Writes a trained ensemble to a model container file.
pub fn save_model(ensemble: &MarlEnsemble, path: &Path) -> Result<()> {
    let body = ModelBody {
        registry: ensemble.registry().clone(),
        feature_dim: ensemble.feature_dim(),
        l1_agents: ensemble
            .l1_agents()
            .iter()
            .map(AgentState::from_agent)
            .collect(),
        decider: AgentState::from_agent(ensemble.decider()),
        normalization: ensemble.normalization().clone(),
        config: ensemble.config().clone(),
    };
    let json = serde_json::to_vec(&body)
        .map_err(|e| Error::Validation(format!("model serialization failed: {e}")))?;
    write_container(path, &MODEL_MAGIC, &json)
}

/// Reads a model container, checking magic, version, digest and shapes.
pub fn load_model(path: &Path) -> Result<MarlEnsemble> {
    let body = read_container(path, &MODEL_MAGIC)?;
    let model: ModelBody = serde_json::from_slice(&body)
        .map_err(|e| Error::Corrupt(format!("model body does not parse: {e}")))?;
    let l1_agents = model
        .l1_agents
        .into_iter()
        .map(AgentState::into_agent)
        .collect::<Result<Vec<_>>>()?;
    let decider = model.decider.into_agent()?;
    MarlEnsemble::from_parts(
        model.registry,
        l1_agents,
        decider,
        model.feature_dim,
        model.normalization,
        model.config,
    )
}

/// A preprocessed dataset with the normalization fitted on its training
/// split and the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetContainer {
    pub dataset: Dataset,
    /// Fitted on the training split; present in preprocessed containers.
    pub normalization: Option<ZScoreParams>,
    /// Whether `dataset` features are already normalized.
    pub normalized: bool,
    pub config: RunConfig,
}

pub fn save_dataset(container: &DatasetContainer, path: &Path) -> Result<()> {
    let json = serde_json::to_vec(container)
        .map_err(|e| Error::Validation(format!("dataset serialization failed: {e}")))?;
    write_container(path, &DATASET_MAGIC, &json)
}

pub fn load_dataset(path: &Path) -> Result<DatasetContainer> {
    let body = read_container(path, &DATASET_MAGIC)?;
    serde_json::from_slice(&body)
        .map_err(|e| Error::Corrupt(format!("dataset body does not parse: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FlowRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_ensemble() -> MarlEnsemble {
        let registry = LabelRegistry::new(
            vec!["DoS".to_string(), "Scan".to_string()],
            "BENIGN",
        )
        .unwrap();
        let config = RunConfig {
            hidden_neurons: vec![6],
            replay_buffer_size: 32,
            minibatch_size: 4,
            episodes: 1,
            ..RunConfig::default()
        };
        let norm = ZScoreParams {
            means: vec![0.5, -1.0, 2.0],
            stds: vec![1.0, 2.0, 0.0],
        };
        MarlEnsemble::new(registry, 3, norm, config).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.model");
        let p2 = dir.path().join("b.model");
        let ens = small_ensemble();
        save_model(&ens, &p1).unwrap();
        let loaded = load_model(&p1).unwrap();
        save_model(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        let ens = small_ensemble();
        save_model(&ens, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let s: Vec<f32> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = ens.predict(&s).unwrap();
            let b = loaded.predict(&s).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(loaded.registry(), ens.registry());
        assert_eq!(loaded.normalization(), ens.normalization());
        assert_eq!(loaded.config(), ens.config());
    }

    #[test]
    fn flipped_magic_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&small_ensemble(), &path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        raw[0] ^= 0xff;
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn flipped_body_byte_fails_the_digest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&small_ensemble(), &path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        let mid = raw.len() / 2;
        raw[mid] ^= 0x01;
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn unsupported_version_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        save_model(&small_ensemble(), &path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        raw[8] = 9;
        // Recompute the digest so only the version is wrong.
        let body_len = u64::from_le_bytes(raw[12..20].try_into().unwrap()) as usize;
        let d = digest(&MODEL_MAGIC, 9, &raw[20..20 + body_len]);
        let tail = raw.len() - 32;
        raw[tail..].copy_from_slice(&d);
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn dataset_container_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ds");
        let dataset = Dataset::new(
            vec!["a".to_string(), "b".to_string()],
            vec![FlowRecord {
                features: vec![1.0, 2.0],
                label: "BENIGN".to_string(),
            }],
        )
        .unwrap();
        let container = DatasetContainer {
            dataset,
            normalization: Some(ZScoreParams {
                means: vec![0.0, 0.0],
                stds: vec![1.0, 1.0],
            }),
            normalized: true,
            config: RunConfig::default(),
        };
        save_dataset(&container, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, container);
        // A model magic on a dataset file is rejected.
        assert!(matches!(load_model(&path), Err(Error::Corrupt(_))));
    }
}
