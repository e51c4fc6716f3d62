use super::{ids, render::Renderer, Observation};
use crate::world::{AgentPose, GridPos, Heading, HouseLayout, Rect, TargetRef};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Candidate cells for an object's best view lie within this many cells of its footprint.
pub const VIEW_RADIUS: f64 = 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum ViewError {
    #[error("no view: no free cell near target {0:?}")]
    NoFreeCell(TargetRef),
    #[error("no view: target {0:?} is not visible from any sampled pose")]
    NotVisible(TargetRef),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    pub iou_t: f64,
    pub iou_best: f64,
    pub ratio: f64,
}

impl IouReport {
    pub fn new(iou_t: f64, iou_best: f64) -> Self {
        let ratio = if iou_best > 0.0 { iou_t / iou_best } else { 0.0 };
        IouReport { iou_t, iou_best, ratio }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestView {
    pub pose: AgentPose,
    pub iou: f64,
}

/// The centered rectangle is `(W/2) x (H/2)`.
fn centered(width: usize, height: usize) -> (usize, usize, usize, usize) {
    let (cw, ch) = (width / 2, height / 2);
    let (c0, r0) = ((width - cw) / 2, (height - ch) / 2);
    (r0, r0 + ch, c0, c0 + cw)
}

fn iou_mask(semantic: &[u32], width: usize, height: usize, in_mask: impl Fn(u32) -> bool) -> f64 {
    let (r0, r1, c0, c1) = centered(width, height);
    let mut mask = 0usize;
    let mut inter = 0usize;
    for (i, &id) in semantic.iter().enumerate() {
        if in_mask(id) {
            mask += 1;
            let (row, col) = (i / width, i % width);
            if row >= r0 && row < r1 && col >= c0 && col < c1 {
                inter += 1;
            }
        }
    }
    if mask == 0 {
        return 0.0;
    }
    let rect = (r1 - r0) * (c1 - c0);
    inter as f64 / (mask + rect - inter) as f64
}

/// IOU between the pixels carrying `entity_id` and the centered rectangle.
pub fn iou_centered(obs: &Observation, entity_id: u32) -> f64 {
    iou_mask(&obs.semantic, obs.width, obs.height, |id| id == entity_id)
}

/// Semantic ids that make up a target's mask: an object's id, or a room's
/// floor together with the walls seen from inside it.
pub fn target_mask_ids(target: TargetRef) -> Vec<u32> {
    match target {
        TargetRef::Object(o) => vec![ids::object(o)],
        TargetRef::Room(r) => vec![ids::room_floor(r), ids::room_wall(r)],
    }
}

pub fn iou_for_target(obs: &Observation, target: TargetRef) -> f64 {
    let mask = target_mask_ids(target);
    iou_mask(&obs.semantic, obs.width, obs.height, |id| mask.contains(&id))
}

fn candidate_cells(world: &HouseLayout, target: TargetRef) -> Vec<GridPos> {
    match target {
        TargetRef::Room(r) => world.rooms[r].rect.cells().filter(|p| world.is_free(*p)).collect(),
        TargetRef::Object(o) => {
            let fp = world.objects[o].footprint;
            world
                .free_cells()
                .filter(|p| {
                    let dx = (p.x - p.x.clamp(fp.x, fp.x + fp.w - 1)) as f64;
                    let dy = (p.y - p.y.clamp(fp.y, fp.y + fp.h - 1)) as f64;
                    (dx * dx + dy * dy).sqrt() <= VIEW_RADIUS
                })
                .collect()
        }
    }
}

fn wrap_deg(a: f64) -> f64 {
    (a + 540.0).rem_euclid(360.0) - 180.0
}

/// Whether any ray within the field of view can reach the footprint.
/// A one-degree margin keeps the test conservative.
fn may_see(cell: GridPos, fp: Rect, heading: Heading, half_fov: f64) -> bool {
    let (px, py) = (cell.x as f64 + 0.5, cell.y as f64 + 0.5);
    let (cx, cy) = (fp.x as f64 + fp.w as f64 / 2.0, fp.y as f64 + fp.h as f64 / 2.0);
    let center = (cy - py).atan2(cx - px).to_degrees();
    let corners = [
        (fp.x as f64, fp.y as f64),
        ((fp.x + fp.w) as f64, fp.y as f64),
        (fp.x as f64, (fp.y + fp.h) as f64),
        ((fp.x + fp.w) as f64, (fp.y + fp.h) as f64),
    ];
    let spread = corners
        .iter()
        .map(|(x, y)| wrap_deg((y - py).atan2(x - px).to_degrees() - center).abs())
        .fold(0.0, f64::max);
    wrap_deg(heading.degrees() as f64 - center).abs() <= half_fov + spread + 1.0
}

/// Samples up to `n_samples` free cells near the target, tries all twelve
/// headings at each and keeps the pose with the highest target IOU.
pub fn best_view(
    world: &HouseLayout,
    renderer: &Renderer,
    target: TargetRef,
    n_samples: usize,
    seed: u64,
) -> Result<BestView, ViewError> {
    let mut cells = candidate_cells(world, target);
    if cells.is_empty() {
        return Err(ViewError::NoFreeCell(target));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cells.shuffle(&mut rng);
    cells.truncate(n_samples);
    cells.sort();
    let mask = target_mask_ids(target);
    let (w, h) = (renderer.config.width, renderer.config.height);
    let (mut semantic, mut depth) = (Vec::new(), Vec::new());
    let mut best: Option<BestView> = None;
    let half_fov = renderer.config.fov_deg / 2.0;
    for cell in cells {
        for heading in Heading::all() {
            if let TargetRef::Object(o) = target {
                if !may_see(cell, world.objects[o].footprint, heading, half_fov) {
                    continue;
                }
            }
            let pose = AgentPose { cell, heading };
            renderer.render_into(world, &pose, &mut semantic, &mut depth);
            let iou = iou_mask(&semantic, w, h, |id| mask.contains(&id));
            if best.map_or(true, |b| iou > b.iou) {
                best = Some(BestView { pose, iou });
            }
        }
    }
    match best {
        Some(b) if b.iou > 0.0 => Ok(b),
        _ => Err(ViewError::NotVisible(target)),
    }
}
