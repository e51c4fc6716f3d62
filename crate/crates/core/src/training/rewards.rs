//! Dense and sparse navigation rewards.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    /// Dense rewards are clipped to `[-clip, clip]`.
    pub clip: f64,
    /// Object legs earn `+object_reward` when the IOU ratio exceeds this.
    pub ratio_threshold: f64,
    pub object_reward: f64,
    pub room_reward: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { clip: 1.0, ratio_threshold: 0.5, object_reward: 1.0, room_reward: 0.2, gamma: 0.99 }
    }
}

impl RewardSpec {
    /// Clipped decrease in bird-view distance (meters).
    pub fn step_reward(&self, d_prev: f64, d_now: f64) -> f64 {
        let delta = d_prev - d_now;
        if delta.is_nan() {
            return 0.0;
        }
        delta.clamp(-self.clip, self.clip)
    }

    /// Object leg: `+1` when `ratio > threshold`, else `-1`.
    pub fn object_terminal(&self, ratio: f64) -> f64 {
        if ratio > self.ratio_threshold {
            self.object_reward
        } else {
            -self.object_reward
        }
    }

    /// Room leg: `+0.2` inside the target room, else `-0.2`.
    pub fn room_terminal(&self, inside: bool) -> f64 {
        if inside {
            self.room_reward
        } else {
            -self.room_reward
        }
    }
}

/// Per-step reward with the default spec.
pub fn step_reward(d_prev: f64, d_now: f64) -> f64 {
    RewardSpec::default().step_reward(d_prev, d_now)
}

/// Terminal reward with the default spec: objects from the IOU ratio, rooms
/// from whether the agent stands inside.
pub fn terminal_reward(target_is_room: bool, ratio: f64, inside: bool) -> f64 {
    let spec = RewardSpec::default();
    if target_is_room {
        spec.room_terminal(inside)
    } else {
        spec.object_terminal(ratio)
    }
}

/// Discounted reward-to-go for every step.
pub fn returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}
