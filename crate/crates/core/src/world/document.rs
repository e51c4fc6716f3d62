//! JSON world documents (`"schema": 1`), one file per house.

use super::{CellKind, HouseLayout, ObjectInstance, Rect, Room, WorldError};
use serde::{Deserialize, Serialize};

pub const WORLD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldDocument {
    pub schema: u32,
    pub id: String,
    pub width: i32,
    pub height: i32,
    /// One string per grid row: `#` wall, `.` floor, `D` door.
    pub rows: Vec<String>,
    pub rooms: Vec<RoomDoc>,
    pub objects: Vec<ObjectDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomDoc {
    pub id: usize,
    #[serde(rename = "type")]
    pub room_type: String,
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDoc {
    pub id: usize,
    #[serde(rename = "type")]
    pub object_type: String,
    pub color: String,
    pub room: usize,
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub d: i32,
    pub height: u32,
}

impl From<&HouseLayout> for WorldDocument {
    fn from(world: &HouseLayout) -> Self {
        let rows = (0..world.height)
            .map(|y| {
                (0..world.width)
                    .map(|x| match world.cells()[(y * world.width + x) as usize] {
                        CellKind::Wall => '#',
                        CellKind::Floor => '.',
                        CellKind::Door => 'D',
                    })
                    .collect()
            })
            .collect();
        WorldDocument {
            schema: WORLD_SCHEMA,
            id: world.id.clone(),
            width: world.width,
            height: world.height,
            rows,
            rooms: world
                .rooms
                .iter()
                .map(|r| RoomDoc {
                    id: r.id,
                    room_type: r.room_type.clone(),
                    x: r.rect.x,
                    y: r.rect.y,
                    w: r.rect.w,
                    h: r.rect.h,
                })
                .collect(),
            objects: world
                .objects
                .iter()
                .map(|o| ObjectDoc {
                    id: o.id,
                    object_type: o.object_type.clone(),
                    color: o.color.clone(),
                    room: o.room,
                    x: o.footprint.x,
                    y: o.footprint.y,
                    w: o.footprint.w,
                    d: o.footprint.h,
                    height: o.height,
                })
                .collect(),
        }
    }
}

fn parse_error(field: &str, message: impl Into<String>) -> WorldError {
    WorldError::Parse { field: field.to_string(), message: message.into() }
}

impl TryFrom<WorldDocument> for HouseLayout {
    type Error = WorldError;

    fn try_from(doc: WorldDocument) -> Result<Self, WorldError> {
        if doc.schema != WORLD_SCHEMA {
            return Err(parse_error("schema", format!("unsupported schema {}", doc.schema)));
        }
        if doc.width <= 0 || doc.height <= 0 {
            return Err(parse_error("width", "grid must be non-empty"));
        }
        if doc.rows.len() != doc.height as usize {
            return Err(parse_error("rows", format!("expected {} rows, found {}", doc.height, doc.rows.len())));
        }
        let mut cells = Vec::with_capacity((doc.width * doc.height) as usize);
        for (y, row) in doc.rows.iter().enumerate() {
            if row.chars().count() != doc.width as usize {
                return Err(parse_error("rows", format!("row {y} has {} cells, expected {}", row.len(), doc.width)));
            }
            for c in row.chars() {
                cells.push(match c {
                    '#' => CellKind::Wall,
                    '.' => CellKind::Floor,
                    'D' => CellKind::Door,
                    other => return Err(parse_error("rows", format!("unknown cell character {other:?} in row {y}"))),
                });
            }
        }
        let rooms = doc
            .rooms
            .into_iter()
            .map(|r| Room { id: r.id, room_type: r.room_type, rect: Rect::new(r.x, r.y, r.w, r.h) })
            .collect();
        let objects = doc
            .objects
            .into_iter()
            .map(|o| ObjectInstance {
                id: o.id,
                object_type: o.object_type,
                color: o.color,
                room: o.room,
                footprint: Rect::new(o.x, o.y, o.w, o.d),
                height: o.height,
            })
            .collect();
        Ok(HouseLayout::new(doc.id, doc.width, doc.height, cells, rooms, objects))
    }
}

/// Pretty-printed JSON with a fixed field order.
pub fn serialize_world(world: &HouseLayout) -> String {
    serde_json::to_string_pretty(&WorldDocument::from(world)).expect("world document serializes")
}

pub fn deserialize_world(text: &str) -> Result<HouseLayout, WorldError> {
    let doc: WorldDocument = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // serde reports the offending field inside backticks
        let field = msg.split('`').nth(1).unwrap_or("document").to_string();
        WorldError::Parse { field, message: msg }
    })?;
    HouseLayout::try_from(doc)
}
