use super::{AgentPose, GridPos, HouseLayout, TargetRef, CELL_SIZE};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const NEIGHBOURS: [(i32, i32); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Geodesic bird-view distance (meters) from every cell to one target.
///
/// Paths move between 8-neighbours under the same corner rule as the agent;
/// diagonal steps cost `sqrt(2)` cells. Target cells are sources at distance 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: i32,
    height: i32,
    dist: Vec<f64>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DistanceField {
    pub fn new(world: &HouseLayout, target: TargetRef) -> Self {
        let sources = world.target_cells(target);
        let (w, h) = (world.width, world.height);
        let mut dist = vec![f64::INFINITY; (w * h) as usize];
        let mut is_source = vec![false; dist.len()];
        let mut heap = BinaryHeap::new();
        for p in &sources {
            if world.in_bounds(*p) {
                let i = (p.y * w + p.x) as usize;
                dist[i] = 0.0;
                is_source[i] = true;
                heap.push(Entry(0.0, i));
            }
        }
        // Sources may be blocked (object footprints); they still emit paths.
        let passable = |p: GridPos| {
            world.in_bounds(p) && (world.is_free(p) || is_source[(p.y * w + p.x) as usize])
        };
        while let Some(Entry(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            let p = GridPos::new(i as i32 % w, i as i32 / w);
            for (dx, dy) in NEIGHBOURS {
                let q = p.offset(dx, dy);
                if !world.in_bounds(q) || !world.is_free(q) {
                    continue;
                }
                if dx != 0 && dy != 0 && !(passable(p.offset(dx, 0)) && passable(p.offset(0, dy))) {
                    continue;
                }
                let step = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                let nd = d + step * CELL_SIZE;
                let j = (q.y * w + q.x) as usize;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry(nd, j));
                }
            }
        }
        DistanceField { width: w, height: h, dist }
    }

    /// Distance in meters; `f64::INFINITY` when unreachable or out of bounds.
    pub fn at(&self, p: GridPos) -> f64 {
        if p.x < 0 || p.y < 0 || p.x >= self.width || p.y >= self.height {
            return f64::INFINITY;
        }
        self.dist[(p.y * self.width + p.x) as usize]
    }
}

/// Bird-view distance from the pose's cell to the nearest cell of `target`.
pub fn bird_view_distance(world: &HouseLayout, pose: &AgentPose, target: TargetRef) -> f64 {
    DistanceField::new(world, target).at(pose.cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::fixtures::open_room;
    use crate::world::{Heading, ObjectInstance, Rect, Room};

    fn corridor_with_object() -> HouseLayout {
        // 1 x 7 corridor, object at the far end (x = 7)
        HouseLayout::from_ascii(
            "corridor",
            &["#########", "#.......#", "#########"],
            vec![Room { id: 0, room_type: "office".into(), rect: Rect::new(1, 1, 7, 1) }],
            vec![ObjectInstance {
                id: 0,
                object_type: "desk".into(),
                color: "brown".into(),
                room: 0,
                footprint: Rect::new(7, 1, 1, 1),
                height: 1,
            }],
        )
    }

    /// Plain breadth-first count of orthogonal steps along the corridor.
    fn bfs_cells(world: &HouseLayout, from: GridPos, to: GridPos) -> Option<usize> {
        let mut seen = std::collections::HashSet::new();
        let mut frontier = vec![from];
        seen.insert(from);
        let mut d = 0;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for p in frontier {
                if p == to {
                    return Some(d);
                }
                for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let q = p.offset(dx, dy);
                    if (world.is_free(q) || q == to) && seen.insert(q) {
                        next.push(q);
                    }
                }
            }
            frontier = next;
            d += 1;
        }
        None
    }

    #[test]
    fn inside_room_is_zero() {
        let w = open_room(4, 4);
        let pose = AgentPose::new(2, 3, Heading::new(0));
        assert_eq!(bird_view_distance(&w, &pose, TargetRef::Room(0)), 0.0);
    }

    #[test]
    fn straight_corridor_five_cells() {
        let w = corridor_with_object();
        let pose = AgentPose::new(2, 1, Heading::new(0));
        let cells = bfs_cells(&w, pose.cell, GridPos::new(7, 1)).unwrap();
        assert_eq!(cells, 5);
        let d = bird_view_distance(&w, &pose, TargetRef::Object(0));
        assert!((d - cells as f64 * CELL_SIZE).abs() < 1e-12);
        assert!((d - 0.95).abs() < 1e-12);
    }

    #[test]
    fn walled_off_target_is_infinite() {
        let w = HouseLayout::from_ascii(
            "split",
            &["#######", "#..#..#", "#..#..#", "#######"],
            vec![
                Room { id: 0, room_type: "office".into(), rect: Rect::new(1, 1, 2, 2) },
                Room { id: 1, room_type: "garage".into(), rect: Rect::new(4, 1, 2, 2) },
            ],
            vec![],
        );
        let pose = AgentPose::new(1, 1, Heading::new(0));
        assert!(bird_view_distance(&w, &pose, TargetRef::Room(1)).is_infinite());
    }

    #[test]
    fn triangle_inequality_over_cells() {
        let w = open_room(6, 5);
        let cells: Vec<GridPos> = w.free_cells().collect();
        let fields: Vec<DistanceField> = cells
            .iter()
            .map(|c| {
                let world = HouseLayout::new(
                    "probe",
                    w.width,
                    w.height,
                    w.cells().to_vec(),
                    vec![Room { id: 0, room_type: "gym".into(), rect: Rect::new(c.x, c.y, 1, 1) }],
                    vec![],
                );
                DistanceField::new(&world, TargetRef::Room(0))
            })
            .collect();
        for (i, a) in cells.iter().enumerate() {
            assert_eq!(fields[i].at(*a), 0.0);
            for (j, b) in cells.iter().enumerate() {
                for c in &cells {
                    let ab = fields[j].at(*a);
                    let bc = fields[j].at(*c);
                    let ac = fields[i].at(*c);
                    assert!(ac <= ab + bc + 1e-9, "{a:?} {b:?} {c:?}");
                }
            }
        }
    }
}
