//! Column-wise DDA raycaster.
//!
//! Distances along a column ray are perpendicular (the ray's component along
//! the view direction is 1), which is also the depth used for projection.
//! All lengths are in cells except the returned depth, which is in meters.

use super::{ids, Label, Observation};
use crate::vocab;
use crate::world::{AgentPose, CellKind, GridPos, HouseLayout, CELL_SIZE};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    /// Camera height above the floor, in cells.
    pub eye_height: f64,
    /// Wall height, in cells.
    pub wall_height: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { width: 64, height: 48, fov_deg: 90.0, eye_height: 1.2, wall_height: 3.0 }
    }
}

impl RenderConfig {
    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan()
    }

    /// Vertical offset of a pixel-row center from the horizon (positive downwards).
    pub fn row_offset(&self, row: usize) -> f64 {
        row as f64 + 0.5 - self.height as f64 / 2.0
    }

    /// Ray for column `col` as `(rx, ry)`; its projection on the view direction is 1.
    pub fn column_ray(&self, pose: &AgentPose, col: usize) -> (f64, f64) {
        let (dx, dy) = pose.heading.direction();
        let half = (self.fov_deg.to_radians() / 2.0).tan();
        let cam = 2.0 * (col as f64 + 0.5) / self.width as f64 - 1.0;
        (dx - dy * half * cam, dy + dx * half * cam)
    }
}

#[derive(Debug, Clone, Copy)]
struct ObjectSpan {
    object: usize,
    enter: f64,
    exit: f64,
}

#[derive(Debug, Default, Clone)]
pub struct Renderer {
    pub config: RenderConfig,
}

impl Renderer {
    pub fn new(config: RenderConfig) -> Self {
        Renderer { config }
    }

    pub fn render(&self, world: &HouseLayout, pose: &AgentPose) -> Observation {
        let mut semantic = Vec::new();
        let mut depth = Vec::new();
        self.render_into(world, pose, &mut semantic, &mut depth);
        let mut labels = BTreeMap::new();
        let mut last = None;
        for &id in &semantic {
            if last == Some(id) || labels.contains_key(&id) {
                continue;
            }
            last = Some(id);
            if let Some(label) = label_for(world, id) {
                labels.insert(id, label);
            }
        }
        let room_underfoot = world
            .room_at(pose.cell)
            .and_then(|r| vocab::room_type_index(&world.rooms[r].room_type));
        Observation { width: self.config.width, height: self.config.height, semantic, depth, labels, room_underfoot }
    }

    /// Semantic ids and depths only, into reusable buffers.
    pub fn render_into(&self, world: &HouseLayout, pose: &AgentPose, semantic: &mut Vec<u32>, depth: &mut Vec<f64>) {
        let cfg = &self.config;
        let (w, h) = (cfg.width, cfg.height);
        let f = cfg.focal();
        let eye = cfg.eye_height;
        let (px, py) = (pose.cell.x as f64 + 0.5, pose.cell.y as f64 + 0.5);
        semantic.clear();
        semantic.resize(w * h, ids::CEILING);
        depth.clear();
        depth.resize(w, 0.0);
        let mut spans: Vec<ObjectSpan> = Vec::new();

        for col in 0..w {
            let (rx, ry) = cfg.column_ray(pose, col);
            spans.clear();
            let (wall_t, wall_id) = cast(world, pose.cell, px, py, rx, ry, &mut spans);
            let first = spans.first().map_or(wall_t, |s| s.enter.min(wall_t));
            depth[col] = first * CELL_SIZE;

            let wall_bottom = f * eye / wall_t;
            // rows below the wall's foot see floor nearer than the wall
            let first_floor = row_span(cfg, f64::NEG_INFINITY, wall_bottom).end;
            for row in first_floor..h {
                let yr = cfg.row_offset(row);
                if yr > wall_bottom {
                    let t = f * eye / yr;
                    let cell = GridPos::new((px + rx * t).floor() as i32, (py + ry * t).floor() as i32);
                    semantic[row * w + col] = floor_id(world, cell);
                }
            }
            paint(semantic, cfg, col, -f * (cfg.wall_height - eye) / wall_t, wall_bottom, wall_id);
            for span in spans.iter().rev() {
                let height = world.objects[span.object].height as f64;
                let top = if height >= eye { -f * (height - eye) / span.enter } else { f * (eye - height) / span.exit };
                paint(semantic, cfg, col, top, f * eye / span.enter, ids::object(span.object));
            }
        }
    }
}

/// Renders with the default camera.
pub fn render(world: &HouseLayout, pose: &AgentPose) -> Observation {
    Renderer::default().render(world, pose)
}

/// Rows whose centers satisfy `top <= offset <= bottom`.
fn row_span(cfg: &RenderConfig, top: f64, bottom: f64) -> std::ops::Range<usize> {
    let half = cfg.height as f64 / 2.0 - 0.5;
    // widen the estimate by one row each side, then test exactly
    let lo = ((top + half).floor() - 1.0).clamp(0.0, cfg.height as f64) as usize;
    let hi = ((bottom + half).ceil() + 2.0).clamp(0.0, cfg.height as f64) as usize;
    let inside = |row: usize| {
        let yr = cfg.row_offset(row);
        yr >= top && yr <= bottom
    };
    let start = (lo..hi).find(|&r| inside(r)).unwrap_or(hi);
    let end = (start..hi).find(|&r| !inside(r)).unwrap_or(hi);
    start..end
}

fn paint(semantic: &mut [u32], cfg: &RenderConfig, col: usize, top: f64, bottom: f64, id: u32) {
    for row in row_span(cfg, top, bottom) {
        semantic[row * cfg.width + col] = id;
    }
}

fn floor_id(world: &HouseLayout, cell: GridPos) -> u32 {
    match world.cell(cell) {
        CellKind::Door => ids::DOOR,
        CellKind::Floor => world.room_at(cell).map_or(ids::WALL, ids::room_floor),
        CellKind::Wall => ids::WALL,
    }
}

fn label_for(world: &HouseLayout, id: u32) -> Option<Label> {
    if let Some(o) = ids::object_of(id) {
        let obj = world.objects.get(o)?;
        return Some(Label::Object {
            object_type: vocab::object_type_index(&obj.object_type)?,
            color: vocab::color_index(&obj.color)?,
        });
    }
    let r = ids::room_of(id)?;
    Some(Label::Room { room_type: vocab::room_type_index(&world.rooms.get(r)?.room_type)? })
}

/// Walks the grid along one ray. Returns the wall entry distance and wall id,
/// and appends traversed object spans in near-to-far order.
fn cast(
    world: &HouseLayout,
    start: GridPos,
    px: f64,
    py: f64,
    rx: f64,
    ry: f64,
    spans: &mut Vec<ObjectSpan>,
) -> (f64, u32) {
    let delta_x = if rx == 0.0 { f64::INFINITY } else { (1.0 / rx).abs() };
    let delta_y = if ry == 0.0 { f64::INFINITY } else { (1.0 / ry).abs() };
    let (step_x, mut side_x) =
        if rx < 0.0 { (-1, (px - start.x as f64) * delta_x) } else { (1, (start.x as f64 + 1.0 - px) * delta_x) };
    let (step_y, mut side_y) =
        if ry < 0.0 { (-1, (py - start.y as f64) * delta_y) } else { (1, (start.y as f64 + 1.0 - py) * delta_y) };
    let mut cell = start;
    let mut prev = start;
    let mut open: Option<ObjectSpan> = None;
    loop {
        let t;
        if side_x < side_y {
            t = side_x;
            side_x += delta_x;
            cell.x += step_x;
        } else {
            t = side_y;
            side_y += delta_y;
            cell.y += step_y;
        }
        let here = world.object_at(cell);
        if let Some(mut span) = open {
            if here != Some(span.object) {
                span.exit = t;
                spans.push(span);
                open = None;
            }
        }
        if world.cell(cell) == CellKind::Wall {
            let id = match (world.cell(prev), world.room_at(prev)) {
                (CellKind::Floor, Some(r)) => ids::room_wall(r),
                _ => ids::WALL,
            };
            return (t, id);
        }
        if let (None, Some(o)) = (open, here) {
            open = Some(ObjectSpan { object: o, enter: t, exit: f64::INFINITY });
        }
        prev = cell;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raycast::ids;
    use crate::world::fixtures::open_room;
    use crate::world::{Heading, ObjectInstance, Rect, Room};

    #[test]
    fn facing_wall_in_empty_room() {
        let world = open_room(5, 5);
        // agent at x = 3 facing +x; wall cell at x = 6 starts 2.5 cells ahead
        let pose = AgentPose::new(3, 3, Heading::new(0));
        let obs = render(&world, &pose);
        for col in 0..obs.width {
            assert!((obs.depth[col] - 2.5 * CELL_SIZE).abs() < 1e-9, "col {col}: {}", obs.depth[col]);
        }
        for &id in &obs.semantic {
            assert!(matches!(id, ids::CEILING) || id == ids::room_floor(0) || id == ids::room_wall(0), "{id}");
        }
        assert!(obs.semantic.iter().any(|&id| id == ids::room_wall(0)));
    }

    #[test]
    fn object_dead_ahead_is_centered() {
        let mut world = open_room(7, 7);
        world = HouseLayout::new(
            "probe",
            world.width,
            world.height,
            world.cells().to_vec(),
            world.rooms.clone(),
            vec![ObjectInstance {
                id: 0,
                object_type: "bed".into(),
                color: "white".into(),
                room: 0,
                footprint: Rect::new(6, 4, 1, 1),
                height: 2,
            }],
        );
        let pose = AgentPose::new(2, 4, Heading::new(0));
        let obs = render(&world, &pose);
        let cols: Vec<usize> =
            (0..obs.width).filter(|&c| (0..obs.height).any(|r| obs.at(r, c) == ids::object(0))).collect();
        assert!(!cols.is_empty());
        let (lo, hi) = (cols[0], *cols.last().unwrap());
        assert_eq!(lo + hi, obs.width - 1, "band not symmetric: {lo}..{hi}");
        assert_eq!(cols.len(), hi - lo + 1);
        assert!(obs.labels.contains_key(&ids::object(0)));
    }

    #[test]
    fn turning_around_changes_the_view() {
        let world = HouseLayout::from_ascii(
            "asym",
            &["#########", "#.......#", "#.......#", "#########"],
            vec![Room { id: 0, room_type: "gym".into(), rect: Rect::new(1, 1, 7, 2) }],
            vec![],
        );
        let a = render(&world, &AgentPose::new(2, 1, Heading::new(0)));
        let b = render(&world, &AgentPose::new(2, 1, Heading::new(6)));
        assert_ne!(a.semantic, b.semantic);
        assert!(a.depth.iter().all(|d| *d > 0.0));
    }
}
