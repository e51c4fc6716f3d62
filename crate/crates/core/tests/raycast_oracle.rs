//! The column raycaster checked against a brute-force per-pixel 3D ray/box
//! intersection on small scenes.

mod oracles;

use mteqa::raycast::{ids, iou_centered, iou_for_target, render};
use mteqa::world::{AgentPose, CellKind, GridPos, Heading, HouseLayout, ObjectInstance, Rect, Room, TargetRef};
use oracles::{obj, oracle_iou, scene_a, scene_b};

#[test]
fn render_matches_per_pixel_oracle_two_rooms() {
    oracles::check_scene(&scene_a()).unwrap();
}

#[test]
fn render_matches_per_pixel_oracle_open_room() {
    oracles::check_scene(&scene_b()).unwrap();
}

#[test]
fn room_iou_uses_floor_and_walls() {
    let world = scene_b();
    let obs = render(&world, &AgentPose::new(3, 3, Heading::new(9)));
    let mut sem = obs.semantic.clone();
    for s in sem.iter_mut() {
        if *s == ids::room_floor(0) || *s == ids::room_wall(0) {
            *s = u32::MAX;
        }
    }
    assert_eq!(iou_for_target(&obs, TargetRef::Room(0)), oracle_iou(&sem, u32::MAX));
}

#[test]
fn nearer_centered_views_score_higher() {
    // a lamp against the far wall of a corridor, viewed from decreasing distances
    // and finally from an oblique angle
    let world = HouseLayout::from_ascii(
        "corridor",
        &["##########", "#........#", "#........#", "#........#", "##########"],
        vec![Room { id: 0, room_type: "office".into(), rect: Rect::new(1, 1, 8, 3) }],
        vec![obj(0, "lamp", Rect::new(8, 2, 1, 1), 3, 0)],
    );
    let target = TargetRef::Object(0);
    let poses = [
        AgentPose::new(1, 1, Heading::new(1)),
        AgentPose::new(2, 2, Heading::new(0)),
        AgentPose::new(4, 2, Heading::new(0)),
        AgentPose::new(6, 2, Heading::new(0)),
    ];
    let scores: Vec<f64> = poses
        .iter()
        .map(|p| {
            let obs = render(&world, p);
            let s = iou_for_target(&obs, target);
            assert_eq!(s, oracle_iou(&obs.semantic, ids::object(0)));
            s
        })
        .collect();
    for pair in scores.windows(2) {
        assert!(pair[0] < pair[1], "{scores:?}");
    }
}

#[test]
fn iou_is_mirror_symmetric() {
    // mirror the scene left-right and the heading accordingly
    let world = scene_b();
    let rows: Vec<String> = (0..world.height)
        .map(|y| {
            (0..world.width)
                .rev()
                .map(|x| match world.cell(GridPos::new(x, y)) {
                    CellKind::Wall => '#',
                    CellKind::Door => 'D',
                    CellKind::Floor => '.',
                })
                .collect()
        })
        .collect();
    let row_refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
    let flip = |r: Rect| Rect::new(world.width - r.x - r.w, r.y, r.w, r.h);
    let mirrored = HouseLayout::from_ascii(
        "mirror",
        &row_refs,
        world.rooms.iter().map(|r| Room { rect: flip(r.rect), ..r.clone() }).collect(),
        world.objects.iter().map(|o| ObjectInstance { footprint: flip(o.footprint), ..o.clone() }).collect(),
    );
    for cell in world.free_cells().collect::<Vec<_>>() {
        for heading in Heading::all() {
            let a = render(&world, &AgentPose { cell, heading });
            let mcell = GridPos::new(world.width - 1 - cell.x, cell.y);
            let mheading = Heading::new((6 + 12 - heading.index()) % 12);
            let b = render(&mirrored, &AgentPose { cell: mcell, heading: mheading });
            for id in 0..world.objects.len() {
                let (x, y) = (iou_centered(&a, ids::object(id)), iou_centered(&b, ids::object(id)));
                assert!((x - y).abs() < 0.02, "{id} at {cell:?} {}: {x} vs {y}", heading.degrees());
            }
        }
    }
}
