//! Egocentric rendering (semantic ids + depth) and the IOU machinery built on it.

mod features;
mod render;
mod view;

pub use features::{extract_features, target_cues, CueTarget, FeatureLayout, CUE_LEN, FEATURE_LEN};
pub use render::{render, RenderConfig, Renderer};
pub use view::{best_view, iou_centered, iou_for_target, target_mask_ids, BestView, IouReport, ViewError};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Semantic ids written into [`Observation::semantic`].
///
/// Reserved ids sit below 100; rooms and objects get their own id ranges so
/// a room's floor and the walls seen from inside it can be masked together.
pub mod ids {
    pub const CEILING: u32 = 0;
    pub const DOOR: u32 = 1;
    pub const WALL: u32 = 2;
    const ROOM_FLOOR_BASE: u32 = 100;
    const ROOM_WALL_BASE: u32 = 400;
    const OBJECT_BASE: u32 = 1000;

    pub fn room_floor(room: usize) -> u32 {
        ROOM_FLOOR_BASE + room as u32
    }

    pub fn room_wall(room: usize) -> u32 {
        ROOM_WALL_BASE + room as u32
    }

    pub fn object(obj: usize) -> u32 {
        OBJECT_BASE + obj as u32
    }

    /// Coarse class used by the feature extractor.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Class {
        Ceiling,
        Floor,
        Wall,
        Door,
        Object,
    }

    pub fn class_of(id: u32) -> Class {
        match id {
            CEILING => Class::Ceiling,
            DOOR => Class::Door,
            WALL => Class::Wall,
            i if (ROOM_FLOOR_BASE..ROOM_WALL_BASE).contains(&i) => Class::Floor,
            i if (ROOM_WALL_BASE..OBJECT_BASE).contains(&i) => Class::Wall,
            _ => Class::Object,
        }
    }

    /// Room index for a room floor or room wall id.
    pub fn room_of(id: u32) -> Option<usize> {
        match id {
            i if (ROOM_FLOOR_BASE..ROOM_WALL_BASE).contains(&i) => Some((i - ROOM_FLOOR_BASE) as usize),
            i if (ROOM_WALL_BASE..OBJECT_BASE).contains(&i) => Some((i - ROOM_WALL_BASE) as usize),
            _ => None,
        }
    }

    pub fn object_of(id: u32) -> Option<usize> {
        (id >= OBJECT_BASE).then(|| (id - OBJECT_BASE) as usize)
    }
}

/// Annotation attached to a visible entity, standing in for ground-truth
/// segmentation labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Object { object_type: usize, color: usize },
    Room { room_type: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    /// Row-major `height x width` semantic ids.
    pub semantic: Vec<u32>,
    /// Per-column depth of the first hit (object or wall), in meters.
    pub depth: Vec<f64>,
    /// Labels for every room / object id present in `semantic`.
    pub labels: BTreeMap<u32, Label>,
    /// Room type index of the room the agent stands in, if any.
    pub room_underfoot: Option<usize>,
}

impl Observation {
    pub fn at(&self, row: usize, col: usize) -> u32 {
        self.semantic[row * self.width + col]
    }

    /// Binary PPM (P6) image with a fixed color per semantic id.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for &id in &self.semantic {
            out.extend_from_slice(&id_color(id));
        }
        out
    }
}

fn id_color(id: u32) -> [u8; 3] {
    match ids::class_of(id) {
        ids::Class::Ceiling => [20, 20, 30],
        ids::Class::Door => [200, 160, 60],
        ids::Class::Wall if id == ids::WALL => [128, 128, 128],
        _ => {
            // spread ids over the color cube deterministically
            let h = id.wrapping_mul(2_654_435_761);
            let base = match ids::class_of(id) {
                ids::Class::Floor => 40,
                ids::Class::Wall => 110,
                _ => 160,
            };
            [base + (h >> 24) as u8 % 90, base + (h >> 16) as u8 % 90, base + (h >> 8) as u8 % 90]
        }
    }
}
