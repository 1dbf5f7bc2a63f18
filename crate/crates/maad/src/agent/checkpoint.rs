//! Checkpoints: flat parameter arrays with a shape manifest and the hash of
//! the resolved configuration that produced them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{ActorCritic, GaussianPolicy};
use super::trainer::Trainer;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::idm::MdnIdm;
use crate::numkit::Mlp;

/// One named flat parameter array; `shape` is the layer-size manifest for
/// networks and the logical dimensions for free parameter vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub algorithm: String,
    pub env: EnvSpec,
    pub config_hash: String,
    pub entries: Vec<CheckpointEntry>,
}

fn net_entry(name: &str, net: &Mlp) -> CheckpointEntry {
    let mut data = Vec::with_capacity(net.param_count());
    net.flatten_into(&mut data);
    CheckpointEntry {
        name: name.to_string(),
        shape: net.sizes().to_vec(),
        data,
    }
}

fn rebuild_net(entry: &CheckpointEntry) -> Result<Mlp> {
    let mut net = Mlp::zeros(&entry.shape)?;
    if entry.data.len() != net.param_count() {
        return Err(Error::contract(format!(
            "checkpoint entry '{}' has {} values, expected {}",
            entry.name,
            entry.data.len(),
            net.param_count()
        )));
    }
    net.assign_from(&entry.data);
    Ok(net)
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, config_hash: &str) -> Self {
        let ac = trainer.actor_critic();
        let mut entries = vec![
            net_entry("policy.mean_net", &ac.policy.mean_net),
            CheckpointEntry {
                name: "policy.log_std".into(),
                shape: vec![ac.policy.log_std.len()],
                data: ac.policy.log_std.clone(),
            },
            net_entry("value", &ac.value),
        ];
        if let Some(idm) = trainer.idm() {
            entries.push(net_entry("idm.weight_net", idm.weight_net()));
            entries.push(net_entry("idm.mean_net", idm.mean_net()));
            entries.push(CheckpointEntry {
                name: "idm.log_std".into(),
                shape: vec![idm.n_components(), idm.action_dim()],
                data: idm.log_stds().to_vec(),
            });
        }
        if let Some(disc) = trainer.discriminator() {
            entries.push(net_entry("disc", disc.net()));
        }
        Checkpoint {
            algorithm: trainer.config().algorithm.name().to_string(),
            env: trainer.env().clone(),
            config_hash: config_hash.to_string(),
            entries,
        }
    }

    fn find(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Rebuilds the policy.
    pub fn policy(&self) -> Result<GaussianPolicy> {
        let mean = self
            .find("policy.mean_net")
            .ok_or_else(|| Error::contract("checkpoint lacks policy.mean_net"))?;
        let log_std = self
            .find("policy.log_std")
            .ok_or_else(|| Error::contract("checkpoint lacks policy.log_std"))?;
        GaussianPolicy::from_parts(rebuild_net(mean)?, log_std.data.clone())
    }

    /// Rebuilds the actor-critic pair.
    pub fn actor_critic(&self) -> Result<ActorCritic> {
        let value = self
            .find("value")
            .ok_or_else(|| Error::contract("checkpoint lacks value"))?;
        Ok(ActorCritic {
            policy: self.policy()?,
            value: rebuild_net(value)?,
        })
    }

    /// Rebuilds the inverse model when present.
    pub fn idm(&self) -> Result<Option<MdnIdm>> {
        let (Some(w), Some(m), Some(ls)) = (
            self.find("idm.weight_net"),
            self.find("idm.mean_net"),
            self.find("idm.log_std"),
        ) else {
            return Ok(None);
        };
        if ls.shape.len() != 2 {
            return Err(Error::contract(
                "idm.log_std shape must be [components, action_dim]",
            ));
        }
        let idm = MdnIdm::from_parts(
            self.env.state_dim,
            ls.shape[1],
            ls.shape[0],
            rebuild_net(w)?,
            rebuild_net(m)?,
            ls.data.clone(),
        )?;
        Ok(Some(idm))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let s = serde_json::to_string(self)
            .map_err(|e| Error::numeric(format!("checkpoint serialization failed: {e}")))?;
        w.write_all(s.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = File::open(path)?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })
    }
}
