//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use mteqa::raycast::{ids, iou_centered, render, Observation};
use mteqa::world::{
    step, Action, AgentPose, CellKind, GridPos, Heading, HouseLayout, ObjectInstance, Rect, Room, CELL_SIZE,
};
use std::collections::HashMap;

/// Minimum action counts to `goal` by exhaustive relaxation to a fixpoint.
pub fn relaxation_oracle(world: &HouseLayout, goal: AgentPose) -> HashMap<AgentPose, u32> {
    let poses: Vec<AgentPose> = world
        .free_cells()
        .flat_map(|c| Heading::all().map(move |h| AgentPose { cell: c, heading: h }))
        .collect();
    let mut dist: HashMap<AgentPose, u32> = HashMap::from([(goal, 0)]);
    loop {
        let mut changed = false;
        for p in &poses {
            for a in Action::ALL {
                let out = step(world, *p, a);
                if out.collided {
                    continue;
                }
                if let Some(d) = dist.get(&out.pose).copied() {
                    let cur = dist.get(p).copied().unwrap_or(u32::MAX);
                    if d + 1 < cur {
                        dist.insert(*p, d + 1);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

pub fn grid(width: usize, height: usize, walls: &[bool]) -> HouseLayout {
    let rows: Vec<String> = (0..height)
        .map(|y| {
            (0..width)
                .map(|x| {
                    let border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
                    if border || walls[y * width + x] {
                        '#'
                    } else {
                        '.'
                    }
                })
                .collect()
        })
        .collect();
    let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    HouseLayout::from_ascii("oracle", &refs, vec![], vec![])
}

pub const W: usize = 64;
pub const H: usize = 48;
pub const EYE: f64 = 1.2;
pub const WALL_H: f64 = 3.0;

pub struct Hit {
    pub t: f64,
    pub id: u32,
}

/// Entry distance of the ray into an axis-aligned box, by the slab method.
pub fn slab(origin: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<f64> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if dir[k].abs() < 1e-15 {
            if origin[k] < lo[k] || origin[k] > hi[k] {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo[k] - origin[k]) / dir[k], (hi[k] - origin[k]) / dir[k]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 > 1e-12).then_some(t0)
}

pub struct Oracle<'a> {
    pub world: &'a HouseLayout,
    pub pose: AgentPose,
}

impl Oracle<'_> {
    pub fn focal(&self) -> f64 {
        W as f64 / 2.0
    }

    pub fn horizontal(&self, col: usize) -> (f64, f64) {
        let th = (self.pose.heading.degrees() as f64).to_radians();
        let (fx, fy) = (th.cos(), th.sin());
        // right-hand side of the heading in a y-down grid
        let (sx, sy) = (-fy, fx);
        let u = (col as f64 + 0.5 - W as f64 / 2.0) / self.focal();
        (fx + u * sx, fy + u * sy)
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.pose.cell.x as f64 + 0.5, self.pose.cell.y as f64 + 0.5)
    }

    /// Candidate hits sorted by distance; a `slope` of `None` means a 2D query.
    pub fn hits(&self, col: usize, slope: Option<f64>) -> Vec<Hit> {
        let (rx, ry) = self.horizontal(col);
        let (px, py) = self.origin();
        let (oz, dz) = match slope {
            Some(s) => (EYE, -s),
            None => (0.5, 0.0),
        };
        let origin = [px, py, oz];
        let dir = [rx, ry, dz];
        let mut out = Vec::new();
        for y in 0..self.world.height {
            for x in 0..self.world.width {
                if self.world.cell(GridPos::new(x, y)) != CellKind::Wall {
                    continue;
                }
                let (lo, hi) = ([x as f64, y as f64, 0.0], [x as f64 + 1.0, y as f64 + 1.0, WALL_H]);
                if let Some(t) = slab(origin, dir, lo, hi) {
                    let before = (px + rx * (t - 1e-7), py + ry * (t - 1e-7));
                    let prev = GridPos::new(before.0.floor() as i32, before.1.floor() as i32);
                    let id = match (self.world.cell(prev), self.world.room_at(prev)) {
                        (CellKind::Floor, Some(r)) => ids::room_wall(r),
                        _ => ids::WALL,
                    };
                    out.push(Hit { t, id });
                }
            }
        }
        for (i, o) in self.world.objects.iter().enumerate() {
            let f = o.footprint;
            let lo = [f.x as f64, f.y as f64, 0.0];
            let hi = [(f.x + f.w) as f64, (f.y + f.h) as f64, o.height as f64];
            if let Some(t) = slab(origin, dir, lo, hi) {
                out.push(Hit { t, id: ids::object(i) });
            }
        }
        if let Some(s) = slope {
            if s > 0.0 {
                let t = EYE / s;
                let cell = GridPos::new((px + rx * t).floor() as i32, (py + ry * t).floor() as i32);
                let id = match self.world.cell(cell) {
                    CellKind::Door => ids::DOOR,
                    CellKind::Floor => self.world.room_at(cell).map_or(ids::WALL, ids::room_floor),
                    CellKind::Wall => ids::WALL,
                };
                out.push(Hit { t, id });
            }
        }
        out.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        out
    }

    /// Semantic id per pixel, plus whether the pixel is a near tie between two entities.
    pub fn pixel(&self, row: usize, col: usize) -> (u32, bool) {
        let v = (row as f64 + 0.5 - H as f64 / 2.0) / self.focal();
        let hits = self.hits(col, Some(v));
        match hits.first() {
            None => (ids::CEILING, false),
            Some(first) => {
                let tie = hits.iter().skip(1).any(|h| h.id != first.id && (h.t - first.t).abs() < 1e-7);
                (first.id, tie)
            }
        }
    }

    pub fn depth(&self, col: usize) -> f64 {
        self.hits(col, None)[0].t * CELL_SIZE
    }
}

pub fn scene_a() -> HouseLayout {
    // two rooms joined by a door, three objects of different heights
    HouseLayout::from_ascii(
        "oracle-a",
        &["########", "#...#..#", "#...D..#", "#...#..#", "#...#..#", "########"],
        vec![
            Room { id: 0, room_type: "kitchen".into(), rect: Rect::new(1, 1, 3, 4) },
            Room { id: 1, room_type: "bedroom".into(), rect: Rect::new(5, 1, 2, 4) },
        ],
        vec![
            obj(0, "refrigerator", Rect::new(1, 1, 1, 1), 3, 0),
            obj(1, "microwave", Rect::new(3, 4, 1, 1), 1, 0),
            obj(2, "bed", Rect::new(5, 3, 2, 2), 1, 1),
        ],
    )
}

pub fn scene_b() -> HouseLayout {
    HouseLayout::from_ascii(
        "oracle-b",
        &["#######", "#.....#", "#.....#", "#.....#", "#.....#", "#######"],
        vec![Room { id: 0, room_type: "living room".into(), rect: Rect::new(1, 1, 5, 4) }],
        vec![
            obj(0, "sofa", Rect::new(2, 1, 2, 1), 1, 0),
            obj(1, "lamp", Rect::new(5, 4, 1, 1), 2, 0),
            obj(2, "plant", Rect::new(1, 4, 1, 1), 1, 0),
        ],
    )
}

pub fn obj(id: usize, t: &str, footprint: Rect, height: u32, room: usize) -> ObjectInstance {
    ObjectInstance { id, object_type: t.into(), color: "red".into(), room, footprint, height }
}

pub fn entity_ids(world: &HouseLayout) -> Vec<u32> {
    let mut out = vec![ids::WALL, ids::DOOR];
    for r in 0..world.rooms.len() {
        out.push(ids::room_floor(r));
        out.push(ids::room_wall(r));
    }
    out.extend((0..world.objects.len()).map(ids::object));
    out
}

pub fn oracle_iou(sem: &[u32], id: u32) -> f64 {
    let mut mask = 0;
    let mut inter = 0;
    for (i, &s) in sem.iter().enumerate() {
        let (row, col) = (i / W, i % W);
        if s == id {
            mask += 1;
            if (H / 4..H / 4 + H / 2).contains(&row) && (W / 4..W / 4 + W / 2).contains(&col) {
                inter += 1;
            }
        }
    }
    if mask == 0 {
        0.0
    } else {
        inter as f64 / (mask + (W / 2) * (H / 2) - inter) as f64
    }
}

/// Compares every pose of `world` against the oracle; returns the number of
/// IOU comparisons made.
pub fn check_scene(world: &HouseLayout) -> Result<usize, String> {
    let mut pixels = 0usize;
    let mut ties = 0usize;
    let mut iou_checks = 0usize;
    for cell in world.free_cells().collect::<Vec<_>>() {
        for heading in Heading::all() {
            let pose = AgentPose { cell, heading };
            let obs: Observation = render(world, &pose);
            let oracle = Oracle { world, pose };
            let mut sem = vec![0u32; W * H];
            let mut tie_free = true;
            for row in 0..H {
                for col in 0..W {
                    let (id, tie) = oracle.pixel(row, col);
                    sem[row * W + col] = id;
                    pixels += 1;
                    if tie {
                        ties += 1;
                        tie_free = false;
                        continue;
                    }
                    if obs.at(row, col) != id {
                        return Err(format!("pixel ({row},{col}) at {pose}: {} vs {id}", obs.at(row, col)));
                    }
                }
            }
            for col in 0..W {
                let d = oracle.depth(col);
                if (obs.depth[col] - d).abs() >= 1e-9 || obs.depth[col] <= 0.0 {
                    return Err(format!("depth col {col} at {pose}: {} vs {d}", obs.depth[col]));
                }
            }
            if tie_free {
                for id in entity_ids(world) {
                    let (got, want) = (iou_centered(&obs, id), oracle_iou(&sem, id));
                    if got != want {
                        return Err(format!("iou of {id} at {pose}: {got} vs {want}"));
                    }
                    iou_checks += 1;
                }
            }
        }
    }
    if ties * 1000 >= pixels || iou_checks == 0 {
        return Err(format!("too many tie pixels: {ties} of {pixels}"));
    }
    Ok(iou_checks)
}

