//! The modular agent: program-driven navigators, SELECT controller, feature
//! storage and the compositional VQA head, plus the shared episode engine.

mod baselines;
mod episode;
mod nets;

pub use baselines::{question_only_baselines, BaselineScores, BowModel, MostFrequent, NearestNeighbor};
pub use episode::{
    run_episode, run_episode_with, Driver, EpisodeEnv, EpisodeTrace, LegRollout, LegTrace, Move, Selection, StepObservation, StoredFeature, TraceStep,
    DEFAULT_BUDGET,
};
pub use nets::{
    prev_one_hot, AgentConfig, AttrKind, ControlStep, Controller, Cvqa, CvqaCache, NavStep, Navigator, SeqCache,
    SeqVqa, TargetEncoder, KIND_LEN, PANORAMA_LEN, POSITION_SCALE, PREV_LEN,
};

use crate::nn::{load_checkpoint, save_checkpoint, CheckpointError, Params};
use crate::qa::Comparator;
use crate::vocab::TokenVocab;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{comparator:?} takes {expected} inputs, got {got}")]
    Arity { comparator: Comparator, expected: usize, got: usize },
    #[error("{kind:?} feature has length {got}, expected {expected}")]
    FeatureLen { kind: AttrKind, expected: usize, got: usize },
    #[error("invalid program: {0}")]
    Program(String),
    #[error("episode is over")]
    Finished,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("bad checkpoint config: {0}")]
    Config(String),
}

/// Every learnable component of the full model.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub config: AgentConfig,
    pub vocab: TokenVocab,
    pub encoder: TargetEncoder,
    pub nav_room: Navigator,
    pub nav_object: Navigator,
    pub controller: Controller,
    pub cvqa: Cvqa,
}

pub const COMPONENTS: [&str; 5] = ["embed", "nav_room", "nav_object", "controller", "cvqa"];

impl Agent {
    pub fn new(config: AgentConfig) -> Self {
        let vocab = TokenVocab::default();
        Agent {
            encoder: TargetEncoder::new(&config, &vocab),
            nav_room: Navigator::new(&config, "nav_room"),
            nav_object: Navigator::new(&config, "nav_object"),
            controller: Controller::new(&config),
            cvqa: Cvqa::new(&config),
            vocab,
            config,
        }
    }

    pub fn navigator(&self, is_room: bool) -> &Navigator {
        if is_room {
            &self.nav_room
        } else {
            &self.nav_object
        }
    }

    /// Phrase embedding of a navigation target.
    pub fn embed_phrase(&self, phrase: &str) -> Vec<f64> {
        self.encoder.encode(&self.vocab.encode(phrase))
    }

    pub fn components(&self) -> [(&'static str, &Params); 5] {
        [
            (COMPONENTS[0], &self.encoder.params),
            (COMPONENTS[1], &self.nav_room.params),
            (COMPONENTS[2], &self.nav_object.params),
            (COMPONENTS[3], &self.controller.params),
            (COMPONENTS[4], &self.cvqa.params),
        ]
    }

    pub fn components_mut(&mut self) -> [&mut Params; 5] {
        [
            &mut self.encoder.params,
            &mut self.nav_room.params,
            &mut self.nav_object.params,
            &mut self.controller.params,
            &mut self.cvqa.params,
        ]
    }

    /// Rounds every parameter to checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for p in self.components_mut() {
            p.round_to_f32();
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let config = serde_json::to_value(self.config).expect("config serializes");
        Ok(save_checkpoint(path, config, &self.components())?)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let ck = load_checkpoint(path)?;
        let config: AgentConfig =
            serde_json::from_value(ck.config.clone()).map_err(|e| AgentError::Config(e.to_string()))?;
        let mut agent = Agent::new(config);
        for (name, p) in COMPONENTS.iter().zip(agent.components_mut()) {
            ck.restore(name, p)?;
        }
        Ok(agent)
    }
}
