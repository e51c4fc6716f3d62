//! Symbolic multi-target embodied question answering.
//!
//! Procedural grid houses, a question/program language with ground-truth
//! oracles, a dataset pipeline with feasibility and entropy filtering, a
//! modular agent (navigators, controller, compositional VQA) trained by
//! imitation and policy gradients, and the evaluation metrics.

pub mod agent;
pub mod dataset;
pub mod metrics;
pub mod nn;
pub mod pathfind;
pub mod procgen;
pub mod qa;
pub mod raycast;
pub mod seeds;
pub mod service;
pub mod training;
pub mod vocab;
pub mod world;
