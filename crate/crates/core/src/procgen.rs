//! Procedural houses: recursive rectangle partitioning with one-cell walls,
//! one door per shared wall segment, and typed, colored objects per room.

use crate::vocab::{self, SizeClass, COLORS, OBJECT_TYPES, ROOM_SIZE_PRIOR, ROOM_TYPES};
use crate::world::{move_allowed, CellKind, GridPos, HouseLayout, ObjectInstance, Rect, Room};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    /// Inclusive grid width range, in cells (walls included).
    pub width: (i32, i32),
    pub height: (i32, i32),
    pub rooms: (usize, usize),
    pub objects_per_room: (usize, usize),
    pub min_room_side: i32,
    pub room_types: Vec<String>,
    pub object_types: Vec<String>,
    pub colors: Vec<String>,
    /// Probability of drawing a color from the object type's preferred list.
    pub preferred_color_prob: f64,
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            width: (20, 28),
            height: (18, 26),
            rooms: (3, 7),
            objects_per_room: (2, 5),
            min_room_side: 4,
            room_types: ROOM_TYPES.iter().map(|s| s.to_string()).collect(),
            object_types: OBJECT_TYPES.iter().map(|o| o.name.to_string()).collect(),
            colors: COLORS.iter().map(|s| s.to_string()).collect(),
            preferred_color_prob: 0.75,
            max_attempts: 200,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempts; could not satisfy: {constraint}")]
    Exhausted { attempts: usize, constraint: String },
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        if self.width.0 > self.width.1 || self.height.0 > self.height.1 {
            return bad("grid size range is empty");
        }
        if self.rooms.0 == 0 || self.rooms.0 > self.rooms.1 {
            return bad("rooms range is empty");
        }
        if self.objects_per_room.0 > self.objects_per_room.1 {
            return bad("objects per room range is empty");
        }
        if self.min_room_side < 2 {
            return bad("min_room_side must be at least 2");
        }
        if self.room_types.is_empty() || self.object_types.is_empty() || self.colors.is_empty() {
            return bad("vocabularies must be non-empty");
        }
        if let Some(r) = self.room_types.iter().find(|r| vocab::room_type_index(r).is_none()) {
            return Err(GenError::Config(format!("unknown room type {r:?}")));
        }
        if let Some(o) = self.object_types.iter().find(|o| vocab::object_type_index(o).is_none()) {
            return Err(GenError::Config(format!("unknown object type {o:?}")));
        }
        if let Some(c) = self.colors.iter().find(|c| vocab::color_index(c).is_none()) {
            return Err(GenError::Config(format!("unknown color {c:?}")));
        }
        Ok(())
    }
}

/// Stable per-house seed derived from the config seed and the house index.
fn house_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn house_id(seed: u64, index: u64) -> String {
    format!("house-{seed}-{index:04}")
}

/// Deterministic in `(cfg.seed, index)`.
pub fn generate_house(cfg: &GenConfig, index: u64) -> Result<HouseLayout, GenError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(house_seed(cfg.seed, index));
    let mut last = String::from("no attempt made");
    for _ in 0..cfg.max_attempts.max(1) {
        match try_generate(cfg, index, &mut rng) {
            Ok(house) => {
                let violations = validate_house(&house);
                match violations.first() {
                    None => return Ok(house),
                    Some(v) => last = v.to_string(),
                }
            }
            Err(reason) => last = reason,
        }
    }
    Err(GenError::Exhausted { attempts: cfg.max_attempts.max(1), constraint: last })
}

fn partition(cfg: &GenConfig, w: i32, h: i32, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Rect>, String> {
    let min = cfg.min_room_side;
    let mut rects = vec![Rect::new(1, 1, w - 2, h - 2)];
    if rects[0].w < min || rects[0].h < min {
        return Err("grid too small for one room".into());
    }
    while rects.len() < n {
        let splittable: Vec<usize> = (0..rects.len())
            .filter(|&i| rects[i].w >= 2 * min + 1 || rects[i].h >= 2 * min + 1)
            .collect();
        let Some(&pick) = splittable.iter().max_by_key(|&&i| (rects[i].area(), usize::MAX - i)) else {
            return Err(format!("rooms per house: cannot partition into {n} rooms"));
        };
        let r = rects[pick];
        let can_v = r.w >= 2 * min + 1;
        let can_h = r.h >= 2 * min + 1;
        let vertical = match (can_v, can_h) {
            (true, true) => {
                if r.w == r.h {
                    rng.gen_bool(0.5)
                } else {
                    r.w > r.h
                }
            }
            (v, _) => v,
        };
        let (a, b) = if vertical {
            let s = rng.gen_range(r.x + min..=r.x + r.w - 1 - min);
            (Rect::new(r.x, r.y, s - r.x, r.h), Rect::new(s + 1, r.y, r.x + r.w - 1 - s, r.h))
        } else {
            let s = rng.gen_range(r.y + min..=r.y + r.h - 1 - min);
            (Rect::new(r.x, r.y, r.w, s - r.y), Rect::new(r.x, s + 1, r.w, r.y + r.h - 1 - s))
        };
        rects[pick] = a;
        rects.insert(pick + 1, b);
    }
    Ok(rects)
}

/// Assigns room types so that larger rectangles tend to get types with a larger
/// size prior. Duplicate types are allowed.
fn assign_room_types(cfg: &GenConfig, rects: &[Rect], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut pool: Vec<usize> = cfg.room_types.iter().filter_map(|r| vocab::room_type_index(r)).collect();
    pool.shuffle(rng);
    let mut types = Vec::with_capacity(rects.len());
    for i in 0..rects.len() {
        if i < pool.len() && !rng.gen_bool(0.2) {
            types.push(pool[i]);
        } else {
            types.push(*pool.choose(rng).expect("non-empty room vocabulary"));
        }
    }
    let mut scored: Vec<(f64, usize)> =
        types.iter().map(|&t| (ROOM_SIZE_PRIOR[t] + rng.gen_range(-0.25..0.25), t)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut order: Vec<usize> = (0..rects.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(rects[i].area()));
    let mut out = vec![String::new(); rects.len()];
    for (slot, (_, t)) in order.into_iter().zip(scored) {
        out[slot] = ROOM_TYPES[t].to_string();
    }
    out
}

fn footprint_for(size: SizeClass, rng: &mut ChaCha8Rng) -> (i32, i32, u32) {
    match size {
        SizeClass::Small => (1, 1, rng.gen_range(1..=2)),
        SizeClass::Medium => {
            if rng.gen_bool(0.25) {
                (2, 2, 1)
            } else if rng.gen_bool(0.5) {
                (1, 2, rng.gen_range(1..=3))
            } else {
                (2, 1, rng.gen_range(1..=3))
            }
        }
        SizeClass::Large => {
            let (w, d) = *[(2, 2), (2, 3), (3, 2), (3, 3)].choose(rng).unwrap();
            (w, d, rng.gen_range(2..=3))
        }
    }
}

fn try_generate(cfg: &GenConfig, index: u64, rng: &mut ChaCha8Rng) -> Result<HouseLayout, String> {
    let w = rng.gen_range(cfg.width.0..=cfg.width.1);
    let h = rng.gen_range(cfg.height.0..=cfg.height.1);
    let n_rooms = rng.gen_range(cfg.rooms.0..=cfg.rooms.1);
    let rects = partition(cfg, w, h, n_rooms, rng)?;

    let mut cells = vec![CellKind::Wall; (w * h) as usize];
    for r in &rects {
        for p in r.cells() {
            cells[(p.y * w + p.x) as usize] = CellKind::Floor;
        }
    }
    // One door per pair of rooms sharing a wall segment.
    let room_at = |p: GridPos| rects.iter().position(|r| r.contains(p));
    let mut shared: BTreeMap<(usize, usize), Vec<GridPos>> = BTreeMap::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let p = GridPos::new(x, y);
            if cells[(y * w + x) as usize] != CellKind::Wall {
                continue;
            }
            for (a, b) in [(p.offset(-1, 0), p.offset(1, 0)), (p.offset(0, -1), p.offset(0, 1))] {
                if let (Some(ra), Some(rb)) = (room_at(a), room_at(b)) {
                    if ra != rb {
                        shared.entry((ra.min(rb), ra.max(rb))).or_default().push(p);
                    }
                }
            }
        }
    }
    let mut doors = Vec::new();
    for segment in shared.values() {
        let d = *segment.choose(rng).expect("segments are non-empty");
        cells[(d.y * w + d.x) as usize] = CellKind::Door;
        doors.push(d);
    }

    let room_types = assign_room_types(cfg, &rects, rng);
    let rooms: Vec<Room> = rects
        .iter()
        .zip(room_types)
        .enumerate()
        .map(|(id, (rect, room_type))| Room { id, room_type, rect: *rect })
        .collect();

    // Floor cells next to a door stay clear so doors are never blocked.
    let mut reserved: HashSet<GridPos> = HashSet::new();
    for d in &doors {
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            reserved.insert(d.offset(dx, dy));
        }
    }

    let allowed_types: HashSet<usize> = cfg.object_types.iter().filter_map(|o| vocab::object_type_index(o)).collect();
    let colors: Vec<usize> = cfg.colors.iter().filter_map(|c| vocab::color_index(c)).collect();
    let mut objects: Vec<ObjectInstance> = Vec::new();
    let mut occupied: HashSet<GridPos> = HashSet::new();
    for room in &rooms {
        let rt = vocab::room_type_index(&room.room_type).expect("known room type");
        let mut candidates: Vec<usize> =
            vocab::allowed_objects(rt).iter().copied().filter(|t| allowed_types.contains(t)).collect();
        candidates.shuffle(rng);
        let want = rng.gen_range(cfg.objects_per_room.0..=cfg.objects_per_room.1).min(candidates.len());
        let mut chosen: Vec<usize> = candidates[..want].to_vec();
        // Big furniture first: it is the hardest to fit.
        chosen.sort_by_key(|&t| OBJECT_TYPES[t].size.rank());
        let mut placed = 0;
        for t in chosen {
            let prior = &OBJECT_TYPES[t];
            let mut done = false;
            for _ in 0..40 {
                let (fw, fd, height) = footprint_for(prior.size, rng);
                if fw > room.rect.w || fd > room.rect.h {
                    continue;
                }
                let fx = rng.gen_range(room.rect.x..=room.rect.x + room.rect.w - fw);
                let fy = rng.gen_range(room.rect.y..=room.rect.y + room.rect.h - fd);
                let fp = Rect::new(fx, fy, fw, fd);
                if fp.cells().any(|p| occupied.contains(&p) || reserved.contains(&p)) {
                    continue;
                }
                for p in fp.cells() {
                    occupied.insert(p);
                }
                if !free_cells_connected(&cells, w, h, &occupied) {
                    for p in fp.cells() {
                        occupied.remove(&p);
                    }
                    continue;
                }
                let color = if rng.gen_bool(cfg.preferred_color_prob) {
                    let preferred: Vec<usize> = prior.colors.iter().copied().filter(|c| colors.contains(c)).collect();
                    preferred.choose(rng).copied().unwrap_or_else(|| *colors.choose(rng).unwrap())
                } else {
                    *colors.choose(rng).unwrap()
                };
                objects.push(ObjectInstance {
                    id: objects.len(),
                    object_type: prior.name.to_string(),
                    color: COLORS[color].to_string(),
                    room: room.id,
                    footprint: fp,
                    height,
                });
                done = true;
                break;
            }
            if done {
                placed += 1;
            }
        }
        if placed < cfg.objects_per_room.0.min(want) {
            return Err(format!("objects per room: placed {placed} in room {}", room.id));
        }
    }
    Ok(HouseLayout::new(crate::procgen::house_id(cfg.seed, index), w, h, cells, rooms, objects))
}

/// 4-connectivity of non-wall, non-occupied cells.
fn free_cells_connected(cells: &[CellKind], w: i32, h: i32, occupied: &HashSet<GridPos>) -> bool {
    let free = |p: GridPos| {
        p.x >= 0 && p.y >= 0 && p.x < w && p.y < h && cells[(p.y * w + p.x) as usize] != CellKind::Wall && !occupied.contains(&p)
    };
    let all: Vec<GridPos> = (0..h).flat_map(|y| (0..w).map(move |x| GridPos::new(x, y))).filter(|p| free(*p)).collect();
    let Some(&start) = all.first() else { return true };
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let q = p.offset(dx, dy);
            if free(q) && seen.insert(q) {
                queue.push_back(q);
            }
        }
    }
    seen.len() == all.len()
}

/// A broken house invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    FloorWithoutRoom(GridPos),
    FloorInSeveralRooms(GridPos),
    RoomCellNotFloor { room: usize, cell: GridPos },
    EmptyRoom(usize),
    UnknownRoomType(usize),
    DoorRooms { cell: GridPos, rooms: usize },
    BadObjectShape(usize),
    UnknownObjectType(usize),
    UnknownColor(usize),
    ObjectOutsideRoom(usize),
    ObjectOverlap(usize, usize),
    DuplicateObjectType { room: usize, object_type: String },
    ObjectInaccessible(usize),
    DisconnectedRoom(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FloorWithoutRoom(p) => write!(f, "floor cell {p:?} belongs to no room"),
            Violation::FloorInSeveralRooms(p) => write!(f, "floor cell {p:?} belongs to several rooms"),
            Violation::RoomCellNotFloor { room, cell } => write!(f, "room {room} covers non-floor cell {cell:?}"),
            Violation::EmptyRoom(r) => write!(f, "room {r} has no floor"),
            Violation::UnknownRoomType(r) => write!(f, "room {r} has an unknown type"),
            Violation::DoorRooms { cell, rooms } => write!(f, "door {cell:?} adjoins {rooms} rooms, expected 2"),
            Violation::BadObjectShape(o) => write!(f, "object {o} has an empty footprint or bad height"),
            Violation::UnknownObjectType(o) => write!(f, "object {o} has an unknown type"),
            Violation::UnknownColor(o) => write!(f, "object {o} has a color outside the palette"),
            Violation::ObjectOutsideRoom(o) => write!(f, "object {o} is not on floor of its room"),
            Violation::ObjectOverlap(a, b) => write!(f, "objects {a} and {b} overlap"),
            Violation::DuplicateObjectType { room, object_type } => {
                write!(f, "room {room} holds more than one {object_type}")
            }
            Violation::ObjectInaccessible(o) => write!(f, "object {o} has no adjacent free cell"),
            Violation::DisconnectedRoom(r) => write!(f, "disconnected room {r}"),
        }
    }
}

/// Every broken invariant; empty iff the house is valid.
pub fn validate_house(world: &HouseLayout) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut cover = vec![0usize; (world.width * world.height) as usize];
    for room in &world.rooms {
        if room.floor_area() == 0 {
            out.push(Violation::EmptyRoom(room.id));
        }
        if room.room_type.is_empty() || vocab::room_type_index(&room.room_type).is_none() {
            out.push(Violation::UnknownRoomType(room.id));
        }
        for p in room.rect.cells() {
            if world.cell(p) != CellKind::Floor {
                out.push(Violation::RoomCellNotFloor { room: room.id, cell: p });
            } else {
                cover[(p.y * world.width + p.x) as usize] += 1;
            }
        }
    }
    for y in 0..world.height {
        for x in 0..world.width {
            let p = GridPos::new(x, y);
            match world.cell(p) {
                CellKind::Floor => match cover[(y * world.width + x) as usize] {
                    0 => out.push(Violation::FloorWithoutRoom(p)),
                    1 => {}
                    _ => out.push(Violation::FloorInSeveralRooms(p)),
                },
                CellKind::Door => {
                    let mut adj: Vec<usize> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .filter_map(|&(dx, dy)| world.room_at(p.offset(dx, dy)))
                        .collect();
                    adj.sort();
                    adj.dedup();
                    if adj.len() != 2 {
                        out.push(Violation::DoorRooms { cell: p, rooms: adj.len() });
                    }
                }
                CellKind::Wall => {}
            }
        }
    }

    let mut seen_types: HashSet<(usize, &str)> = HashSet::new();
    for (i, obj) in world.objects.iter().enumerate() {
        if obj.footprint.area() == 0 || !(1..=3).contains(&obj.height) {
            out.push(Violation::BadObjectShape(i));
        }
        if vocab::object_type_index(&obj.object_type).is_none() {
            out.push(Violation::UnknownObjectType(i));
        }
        if vocab::color_index(&obj.color).is_none() {
            out.push(Violation::UnknownColor(i));
        }
        let inside = obj.room < world.rooms.len()
            && obj.footprint.cells().all(|p| world.cell(p) == CellKind::Floor && world.rooms[obj.room].rect.contains(p));
        if !inside {
            out.push(Violation::ObjectOutsideRoom(i));
        }
        for (j, other) in world.objects.iter().enumerate().skip(i + 1) {
            if obj.footprint.intersects(&other.footprint) {
                out.push(Violation::ObjectOverlap(i, j));
            }
        }
        if !seen_types.insert((obj.room, obj.object_type.as_str())) {
            out.push(Violation::DuplicateObjectType { room: obj.room, object_type: obj.object_type.clone() });
        }
        let accessible = obj
            .footprint
            .inflate(1)
            .cells()
            .filter(|p| !obj.footprint.contains(*p))
            .any(|p| world.is_free(p));
        if !accessible {
            out.push(Violation::ObjectInaccessible(i));
        }
    }

    // Reachability of every room from the first free cell, under agent moves.
    let free: Vec<GridPos> = world.free_cells().collect();
    if let Some(&start) = free.first() {
        let mut seen = HashSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                if move_allowed(world, p, dx, dy) {
                    let q = p.offset(dx, dy);
                    if seen.insert(q) {
                        queue.push_back(q);
                    }
                }
            }
        }
        for room in &world.rooms {
            if !room.rect.cells().any(|p| seen.contains(&p)) {
                out.push(Violation::DisconnectedRoom(room.id));
            }
        }
    }
    out
}
