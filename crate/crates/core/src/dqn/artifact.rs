use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainingConfig;
use crate::env::{Decision, EnvParams, EnvState};
use crate::error::{Error, Result};
use crate::neuralnet::QNetwork;
use crate::policy::Policy;
use crate::qtable::greedy_index;
use crate::rng::Rng;

pub const CHECKPOINT_FORMAT: &str = "capex-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Network input encoding `[t/T, p/p1, d/d1, installed/K]`.
///
/// Demand is encoded as 0 when the environment has no demand process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub horizon: usize,
    pub max_capacity: usize,
    pub price_scale: f64,
    pub demand_scale: Option<f64>,
}

impl Encoder {
    pub const INPUT_DIM: usize = 4;

    pub fn for_params(params: &EnvParams) -> Self {
        Encoder {
            horizon: params.horizon,
            max_capacity: params.max_capacity,
            price_scale: params.initial_price,
            demand_scale: params.demand.as_ref().map(|d| d.initial),
        }
    }

    pub fn encode(&self, s: &EnvState) -> [f64; 4] {
        let demand = match (s.demand, self.demand_scale) {
            (Some(d), Some(scale)) => d / scale,
            _ => 0.0,
        };
        [
            s.t as f64 / self.horizon as f64,
            s.price / self.price_scale,
            demand,
            s.installed as f64 / self.max_capacity as f64,
        ]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub episodes: usize,
    pub transitions: u64,
    pub gradient_steps: u64,
    pub final_epsilon: f64,
    pub final_moving_avg: f64,
    pub budget_violations: u64,
}

/// A trained Q-network together with everything needed to query it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub network: QNetwork,
    pub encoder: Encoder,
    pub env: EnvParams,
    pub config: TrainingConfig,
    pub config_digest: String,
    pub metrics: TrainingMetrics,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dims: Vec<usize>,
    activation: String,
    #[serde(flatten)]
    artifact: PolicyArtifact,
}

impl PolicyArtifact {
    /// Q-values of every head at `state` (infeasible heads included).
    pub fn q_values(&self, state: &EnvState) -> Result<Vec<f64>> {
        self.network.forward(&self.encoder.encode(state))
    }

    /// Masked argmax over feasible heads, ties to the smallest decision.
    pub fn greedy_decision(&self, state: &EnvState) -> Decision {
        let n = state.residual(&self.env) + 1;
        match self.q_values(state) {
            Ok(q) => Decision(greedy_index(&q[..n.min(q.len())])),
            Err(_) => Decision(0),
        }
    }

    pub fn to_checkpoint_string(&self) -> String {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: self.network.dims(),
            activation: self.network.activation().tag().into(),
            artifact: self.clone(),
        };
        serde_json::to_string_pretty(&ckpt).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        let artifact = ckpt.artifact;
        let net = QNetwork::from_layers(artifact.network.layers().to_vec(), artifact.network.activation())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if net.dims() != ckpt.dims || net.activation().tag() != ckpt.activation {
            return Err(Error::Checkpoint("header does not match stored parameters".into()));
        }
        if net.input_dim() != Encoder::INPUT_DIM || net.output_dim() != artifact.env.max_capacity + 1 {
            return Err(Error::Checkpoint("network shape does not match environment".into()));
        }
        artifact.env.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_checkpoint_str(&text)
    }
}

impl Policy for PolicyArtifact {
    fn decide(&self, state: &EnvState, _params: &EnvParams, _rng: &mut Rng) -> Decision {
        self.greedy_decision(state)
    }

    fn name(&self) -> String {
        "dqn".into()
    }
}
