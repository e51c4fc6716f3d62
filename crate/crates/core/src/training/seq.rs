//! Training for the sequence-encoder answering baseline.

use super::{finish_grads, PreparedRecord, TrainError};
use crate::agent::SeqVqa;
use crate::nn::{bce, Momentum};
use crate::seeds;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub clip: f64,
    pub seed: u64,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig { lr: 1e-2, momentum: 0.9, epochs: 30, batch: 8, clip: 5.0, seed: 0 }
    }
}

/// Every frame along the shortest path, in order, without the duplicated
/// pose where one leg ends and the next begins.
pub fn seq_frames(rec: &PreparedRecord) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for (i, leg) in rec.legs.iter().enumerate() {
        let skip = (i > 0) as usize;
        out.extend(leg.frames.iter().skip(skip).map(|f| f.features.clone()));
    }
    out
}

pub fn train_seq_vqa(model: &SeqVqa, data: &[PreparedRecord], cfg: &SeqConfig) -> Result<(SeqVqa, Vec<f64>), TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut model = model.clone();
    let samples: Vec<(Vec<Vec<f64>>, &[usize], f64)> =
        data.iter().map(|r| (seq_frames(r), r.question.as_slice(), r.answer as u8 as f64)).collect();
    let mut opt = Momentum::new(model.params.len(), cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(&[cfg.seed, 0x5e9, epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch.max(1)) {
            let mut g = vec![model.params.zeros()];
            for &i in batch {
                let (frames, tokens, y) = &samples[i];
                let (p, cache) = model.forward(frames, tokens);
                total += bce(p, *y);
                model.backward(&mut g[0], &cache, p - y);
            }
            finish_grads(&mut g, 1.0 / batch.len() as f64, cfg.clip);
            opt.step(&mut model.params, &g[0]);
        }
        losses.push(total / samples.len() as f64);
    }
    model.params.round_to_f32();
    Ok((model, losses))
}

pub fn seq_vqa_accuracy(model: &SeqVqa, data: &[PreparedRecord]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let right = data.iter().filter(|r| (model.forward(&seq_frames(r), &r.question).0 > 0.5) == r.answer).count();
    right as f64 / data.len() as f64
}
