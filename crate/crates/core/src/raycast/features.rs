//! Compact feature vector computed from an [`Observation`].
//!
//! Layout (offsets in [`FeatureLayout`]):
//!
//! | block | len |
//! |---|---|
//! | class coverage, 5 classes x 3 vertical x 3 horizontal bands | 45 |
//! | depth mean / min per horizontal third | 6 |
//! | centered-rectangle coverage per object type | 24 |
//! | left-third / right-third coverage per object type | 48 |
//! | centered-rectangle coverage per color | 12 |
//! | dominant centered object: height, width, distance estimates | 3 |
//! | room type underfoot, one-hot | 8 |
//! | full-frame coverage per room type (floor and walls) | 8 |
//!
//! Size estimates assume the default 90 degree field of view (focal = W / 2).

use super::{ids, Label, Observation};
use crate::vocab::{COLORS, OBJECT_TYPES, ROOM_TYPES};
use crate::world::CELL_SIZE;

const N_CLASSES: usize = 5;
const N_TYPES: usize = OBJECT_TYPES.len();
const N_COLORS: usize = COLORS.len();
const N_ROOMS: usize = ROOM_TYPES.len();

/// Depths are divided by this many meters.
const DEPTH_SCALE: f64 = 4.0;
/// Size estimates are divided by this many cells.
const SIZE_SCALE: f64 = 3.0;

pub struct FeatureLayout;

impl FeatureLayout {
    pub const CLASS_BANDS: usize = 0;
    pub const DEPTH: usize = Self::CLASS_BANDS + N_CLASSES * 9;
    pub const CENTER_TYPE: usize = Self::DEPTH + 6;
    pub const LEFT_TYPE: usize = Self::CENTER_TYPE + N_TYPES;
    pub const RIGHT_TYPE: usize = Self::LEFT_TYPE + N_TYPES;
    pub const CENTER_COLOR: usize = Self::RIGHT_TYPE + N_TYPES;
    pub const DOMINANT_SIZE: usize = Self::CENTER_COLOR + N_COLORS;
    pub const ROOM_UNDERFOOT: usize = Self::DOMINANT_SIZE + 3;
    pub const ROOM_COVERAGE: usize = Self::ROOM_UNDERFOOT + N_ROOMS;
    pub const LEN: usize = Self::ROOM_COVERAGE + N_ROOMS;
}

pub const FEATURE_LEN: usize = FeatureLayout::LEN;

/// Length of the target cue vector.
pub const CUE_LEN: usize = 5;

fn class_index(c: ids::Class) -> usize {
    match c {
        ids::Class::Ceiling => 0,
        ids::Class::Floor => 1,
        ids::Class::Wall => 2,
        ids::Class::Door => 3,
        ids::Class::Object => 4,
    }
}

fn centered_bounds(obs: &Observation) -> (usize, usize, usize, usize) {
    let (cw, ch) = (obs.width / 2, obs.height / 2);
    let (c0, r0) = ((obs.width - cw) / 2, (obs.height - ch) / 2);
    (r0, r0 + ch, c0, c0 + cw)
}

/// Band index (0..3) of a coordinate in `0..n`.
fn band(i: usize, n: usize) -> usize {
    (i * 3 / n).min(2)
}

pub fn extract_features(obs: &Observation) -> Vec<f64> {
    let (w, h) = (obs.width, obs.height);
    let mut out = vec![0.0; FEATURE_LEN];
    let (r0, r1, c0, c1) = centered_bounds(obs);
    let center_px = ((r1 - r0) * (c1 - c0)) as f64;
    let mut band_px = [0.0f64; 9];
    let mut side_px = [0.0f64; 3];
    let mut dominant: Vec<(u32, usize)> = Vec::new();

    for row in 0..h {
        for col in 0..w {
            let id = obs.at(row, col);
            let (vb, hb) = (band(row, h), band(col, w));
            band_px[vb * 3 + hb] += 1.0;
            side_px[hb] += 1.0;
            let cls = class_index(ids::class_of(id));
            out[FeatureLayout::CLASS_BANDS + cls * 9 + vb * 3 + hb] += 1.0;
            let centered = row >= r0 && row < r1 && col >= c0 && col < c1;
            match obs.labels.get(&id) {
                Some(Label::Object { object_type, color }) => {
                    if centered {
                        out[FeatureLayout::CENTER_TYPE + object_type] += 1.0 / center_px;
                        out[FeatureLayout::CENTER_COLOR + color] += 1.0 / center_px;
                        match dominant.iter_mut().find(|(d, _)| *d == id) {
                            Some(entry) => entry.1 += 1,
                            None => dominant.push((id, 1)),
                        }
                    }
                    match hb {
                        0 => out[FeatureLayout::LEFT_TYPE + object_type] += 1.0,
                        2 => out[FeatureLayout::RIGHT_TYPE + object_type] += 1.0,
                        _ => {}
                    }
                }
                Some(Label::Room { room_type }) => {
                    out[FeatureLayout::ROOM_COVERAGE + room_type] += 1.0 / (w * h) as f64;
                }
                None => {}
            }
        }
    }
    for cls in 0..N_CLASSES {
        for b in 0..9 {
            out[FeatureLayout::CLASS_BANDS + cls * 9 + b] /= band_px[b].max(1.0);
        }
    }
    for t in 0..N_TYPES {
        out[FeatureLayout::LEFT_TYPE + t] /= side_px[0].max(1.0);
        out[FeatureLayout::RIGHT_TYPE + t] /= side_px[2].max(1.0);
    }

    for third in 0..3 {
        let cols: Vec<f64> = (0..w).filter(|&c| band(c, w) == third).map(|c| obs.depth[c]).collect();
        if !cols.is_empty() {
            let mean = cols.iter().sum::<f64>() / cols.len() as f64;
            let min = cols.iter().cloned().fold(f64::INFINITY, f64::min);
            out[FeatureLayout::DEPTH + third * 2] = mean / DEPTH_SCALE;
            out[FeatureLayout::DEPTH + third * 2 + 1] = min / DEPTH_SCALE;
        }
    }

    // ties resolve to the smaller id so the choice is order independent
    if let Some(&(id, _)) = dominant.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))) {
        let [height, width, dist] = size_estimate(obs, id);
        out[FeatureLayout::DOMINANT_SIZE] = height / SIZE_SCALE;
        out[FeatureLayout::DOMINANT_SIZE + 1] = width / SIZE_SCALE;
        out[FeatureLayout::DOMINANT_SIZE + 2] = dist * CELL_SIZE / DEPTH_SCALE;
    }

    if let Some(r) = obs.room_underfoot {
        out[FeatureLayout::ROOM_UNDERFOOT + r] = 1.0;
    }
    out
}

/// Height, width and distance (all in cells) of the entity `id`, recovered
/// from its pixel extent and the per-column depth.
fn size_estimate(obs: &Observation, id: u32) -> [f64; 3] {
    let f = obs.width as f64 / 2.0;
    let mut cols = 0usize;
    let mut depth_sum = 0.0;
    let mut height = 0.0f64;
    for col in 0..obs.width {
        let rows = (0..obs.height).filter(|&r| obs.at(r, col) == id).count();
        if rows == 0 {
            continue;
        }
        let d = obs.depth[col] / CELL_SIZE;
        cols += 1;
        depth_sum += d;
        height = height.max(rows as f64 * d / f);
    }
    if cols == 0 {
        return [0.0; 3];
    }
    let dist = depth_sum / cols as f64;
    [height, cols as f64 * dist / f, dist]
}

/// What the agent is currently looking for, as seen by the cue extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueTarget {
    /// Index into `OBJECT_TYPES`.
    Object(usize),
    /// Index into `ROOM_TYPES`.
    Room(usize),
}

/// `[center, left, right, underfoot, anywhere]` evidence of the target in view.
///
/// Objects: coverage of the target type in the centered rectangle and the
/// side thirds. Rooms: the same for the room type's floor and walls. The last
/// two entries flag standing inside a room of the target type and the
/// full-frame coverage of the target.
pub fn target_cues(obs: &Observation, target: CueTarget) -> [f64; CUE_LEN] {
    let (w, h) = (obs.width, obs.height);
    let (r0, r1, c0, c1) = centered_bounds(obs);
    let matches = |id: u32| match (obs.labels.get(&id), target) {
        (Some(Label::Object { object_type, .. }), CueTarget::Object(t)) => *object_type == t,
        (Some(Label::Room { room_type }), CueTarget::Room(t)) => *room_type == t,
        _ => false,
    };
    let mut center = 0usize;
    let mut side = [0usize; 3];
    let mut total = 0usize;
    for row in 0..h {
        for col in 0..w {
            if !matches(obs.at(row, col)) {
                continue;
            }
            total += 1;
            side[band(col, w)] += 1;
            if row >= r0 && row < r1 && col >= c0 && col < c1 {
                center += 1;
            }
        }
    }
    let third = |b: usize| (0..w).filter(|&c| band(c, w) == b).count() * h;
    let underfoot = match target {
        CueTarget::Room(t) => (obs.room_underfoot == Some(t)) as u8 as f64,
        CueTarget::Object(_) => 0.0,
    };
    [
        center as f64 / ((r1 - r0) * (c1 - c0)) as f64,
        side[0] as f64 / third(0) as f64,
        side[2] as f64 / third(2) as f64,
        underfoot,
        total as f64 / (w * h) as f64,
    ]
}
