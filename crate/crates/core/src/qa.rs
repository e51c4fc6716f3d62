//! The seven-operation program language, question templates, text/program
//! conversion, question instantiation and ground-truth answers.

use crate::world::{HouseLayout, TargetRef};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QaError {
    #[error("unrecognized template: {0:?}")]
    UnrecognizedTemplate(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("unknown sub-program {op:?}")]
    UnknownOp { op: String },
    #[error("cannot resolve {phrase:?}: {reason}")]
    Unresolved { phrase: String, reason: String },
    #[error("degenerate comparison: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Color,
    Size,
    RoomSize,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::Color => "color",
            Attribute::Size => "size",
            Attribute::RoomSize => "room_size",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeCmp {
    Bigger,
    Smaller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistCmp {
    Closer,
    Farther,
}

impl SizeCmp {
    fn word(self) -> &'static str {
        match self {
            SizeCmp::Bigger => "bigger",
            SizeCmp::Smaller => "smaller",
        }
    }
}

impl DistCmp {
    fn words(self) -> &'static str {
        match self {
            DistCmp::Closer => "closer to",
            DistCmp::Farther => "farther from",
        }
    }
}

/// One executable sub-program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SubProgram {
    NavObject(String),
    NavRoom(String),
    Query(Attribute),
    EqualColor,
    ObjectSizeCompare(SizeCmp),
    ObjectDistCompare(DistCmp),
    RoomSizeCompare(SizeCmp),
}

impl SubProgram {
    pub fn is_nav(&self) -> bool {
        matches!(self, SubProgram::NavObject(_) | SubProgram::NavRoom(_))
    }

    pub fn is_comparison(&self) -> bool {
        matches!(
            self,
            SubProgram::EqualColor
                | SubProgram::ObjectSizeCompare(_)
                | SubProgram::ObjectDistCompare(_)
                | SubProgram::RoomSizeCompare(_)
        )
    }

    /// `(op, arg)` as stored in dataset records.
    pub fn op_arg(&self) -> (&'static str, Option<String>) {
        match self {
            SubProgram::NavObject(p) => ("nav_object", Some(p.clone())),
            SubProgram::NavRoom(p) => ("nav_room", Some(p.clone())),
            SubProgram::Query(a) => ("query", Some(a.name().to_string())),
            SubProgram::EqualColor => ("equal_color", None),
            SubProgram::ObjectSizeCompare(c) => ("object_size_compare", Some(c.word().to_string())),
            SubProgram::ObjectDistCompare(c) => (
                "object_dist_compare",
                Some(match c {
                    DistCmp::Closer => "closer",
                    DistCmp::Farther => "farther",
                }
                .to_string()),
            ),
            SubProgram::RoomSizeCompare(c) => ("room_size_compare", Some(c.word().to_string())),
        }
    }

    pub fn from_op_arg(op: &str, arg: Option<&str>) -> Result<Self, QaError> {
        let need = |what: &str| QaError::InvalidProgram(format!("{op} needs a {what} argument"));
        let size = |a: Option<&str>| match a {
            Some("bigger") => Ok(SizeCmp::Bigger),
            Some("smaller") => Ok(SizeCmp::Smaller),
            _ => Err(need("bigger/smaller")),
        };
        Ok(match op {
            "nav_object" => SubProgram::NavObject(arg.ok_or_else(|| need("phrase"))?.to_string()),
            "nav_room" => SubProgram::NavRoom(arg.ok_or_else(|| need("phrase"))?.to_string()),
            "query" => SubProgram::Query(match arg {
                Some("color") => Attribute::Color,
                Some("size") => Attribute::Size,
                Some("room_size") => Attribute::RoomSize,
                _ => return Err(need("color/size/room_size")),
            }),
            "equal_color" => SubProgram::EqualColor,
            "object_size_compare" => SubProgram::ObjectSizeCompare(size(arg)?),
            "object_dist_compare" => SubProgram::ObjectDistCompare(match arg {
                Some("closer") => DistCmp::Closer,
                Some("farther") => DistCmp::Farther,
                _ => return Err(need("closer/farther")),
            }),
            "room_size_compare" => SubProgram::RoomSizeCompare(size(arg)?),
            other => return Err(QaError::UnknownOp { op: other.to_string() }),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct OpRecord {
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arg: Option<String>,
}

impl Serialize for SubProgram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (op, arg) = self.op_arg();
        OpRecord { op: op.to_string(), arg }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SubProgram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = OpRecord::deserialize(d)?;
        SubProgram::from_op_arg(&rec.op, rec.arg.as_deref()).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for SubProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (op, arg) = self.op_arg();
        match (self, arg) {
            (SubProgram::Query(_), Some(a)) => write!(f, "query_{a}()"),
            (_, Some(a)) => write!(f, "{op}({a})"),
            (_, None) => write!(f, "{op}()"),
        }
    }
}

/// Ordered plan of sub-programs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Program(pub Vec<SubProgram>);

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join(" -> "))
    }
}

impl Program {
    /// Navigation sub-programs in order, as `(is_room, phrase)`.
    pub fn nav_steps(&self) -> Vec<(bool, &str)> {
        self.0
            .iter()
            .filter_map(|s| match s {
                SubProgram::NavRoom(p) => Some((true, p.as_str())),
                SubProgram::NavObject(p) => Some((false, p.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn comparison(&self) -> Option<&SubProgram> {
        self.0.last().filter(|s| s.is_comparison())
    }

    /// Attribute tagged onto each navigation step (`None` when no query follows).
    pub fn nav_queries(&self) -> Vec<Option<Attribute>> {
        let mut out = Vec::new();
        for (i, s) in self.0.iter().enumerate() {
            if s.is_nav() {
                out.push(match self.0.get(i + 1) {
                    Some(SubProgram::Query(a)) => Some(*a),
                    _ => None,
                });
            }
        }
        out
    }

    /// Indices (into the navigation steps) of the entities the comparison consumes.
    pub fn compared_navs(&self) -> Vec<usize> {
        let queries = self.nav_queries();
        match self.comparison() {
            Some(SubProgram::ObjectDistCompare(_)) => {
                self.nav_steps().iter().enumerate().filter(|(_, (room, _))| !room).map(|(i, _)| i).collect()
            }
            _ => queries.iter().enumerate().filter(|(_, q)| q.is_some()).map(|(i, _)| i).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), QaError> {
        let bad = |m: String| Err(QaError::InvalidProgram(m));
        let ops = &self.0;
        if ops.is_empty() {
            return bad("empty program".into());
        }
        for (i, s) in ops.iter().enumerate() {
            match s {
                SubProgram::Query(a) => {
                    let ok = match (i.checked_sub(1).map(|j| &ops[j]), a) {
                        (Some(SubProgram::NavRoom(_)), Attribute::RoomSize) => true,
                        (Some(SubProgram::NavObject(_)), Attribute::Color | Attribute::Size) => true,
                        _ => false,
                    };
                    if !ok {
                        return bad(format!("query_{}() at {i} does not follow a matching nav", a.name()));
                    }
                }
                SubProgram::NavObject(p) | SubProgram::NavRoom(p) => {
                    if p.is_empty() || p.split(' ').any(|w| w.is_empty() || !w.chars().all(|c| c.is_ascii_lowercase())) {
                        return bad(format!("phrase {p:?} is not lowercase space-joined tokens"));
                    }
                }
                c if c.is_comparison() && i + 1 != ops.len() => {
                    return bad(format!("comparison {c} at {i} is not terminal"));
                }
                _ => {}
            }
        }
        let Some(cmp) = self.comparison() else {
            return bad("missing terminal comparison".into());
        };
        let queries: Vec<Attribute> =
            ops.iter().filter_map(|s| if let SubProgram::Query(a) = s { Some(*a) } else { None }).collect();
        let n_obj = ops.iter().filter(|s| matches!(s, SubProgram::NavObject(_))).count();
        let arity = |attr: Attribute, n: usize| {
            if queries.len() == n && queries.iter().all(|q| *q == attr) {
                Ok(())
            } else {
                bad(format!("{cmp} needs {n} query_{}() inputs, found {queries:?}", attr.name()))
            }
        };
        match cmp {
            SubProgram::EqualColor => arity(Attribute::Color, 2),
            SubProgram::ObjectSizeCompare(_) => arity(Attribute::Size, 2),
            SubProgram::RoomSizeCompare(_) => arity(Attribute::RoomSize, 2),
            SubProgram::ObjectDistCompare(_) => {
                if !queries.is_empty() || n_obj != 3 {
                    bad(format!("{cmp} needs three nav_object steps and no queries"))
                } else {
                    Ok(())
                }
            }
            _ => unreachable!(),
        }
    }
}

/// The six question types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    ObjectColorCompareInroom,
    ObjectColorCompareXroom,
    ObjectSizeCompareInroom,
    ObjectSizeCompareXroom,
    ObjectDistCompare,
    RoomSizeCompare,
}

impl QuestionType {
    /// Report column order.
    pub const ALL: [QuestionType; 6] = [
        QuestionType::ObjectColorCompareInroom,
        QuestionType::ObjectColorCompareXroom,
        QuestionType::ObjectSizeCompareInroom,
        QuestionType::ObjectSizeCompareXroom,
        QuestionType::ObjectDistCompare,
        QuestionType::RoomSizeCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::ObjectColorCompareInroom => "object_color_compare_inroom",
            QuestionType::ObjectColorCompareXroom => "object_color_compare_xroom",
            QuestionType::ObjectSizeCompareInroom => "object_size_compare_inroom",
            QuestionType::ObjectSizeCompareXroom => "object_size_compare_xroom",
            QuestionType::ObjectDistCompare => "object_dist_compare",
            QuestionType::RoomSizeCompare => "room_size_compare",
        }
    }

    pub fn index(self) -> usize {
        QuestionType::ALL.iter().position(|q| *q == self).unwrap()
    }
}

/// Comparator of the terminal sub-program; also selects the cVQA head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    EqualColor,
    Bigger,
    Smaller,
    Closer,
    Farther,
    RoomBigger,
    RoomSmaller,
}

impl Comparator {
    pub const ALL: [Comparator; 7] = [
        Comparator::EqualColor,
        Comparator::Bigger,
        Comparator::Smaller,
        Comparator::Closer,
        Comparator::Farther,
        Comparator::RoomBigger,
        Comparator::RoomSmaller,
    ];

    pub fn index(self) -> usize {
        Comparator::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn arity(self) -> usize {
        match self {
            Comparator::Closer | Comparator::Farther => 3,
            _ => 2,
        }
    }

    /// Comparator that gives the same answer with the outer inputs swapped.
    pub fn flipped(self) -> Self {
        match self {
            Comparator::EqualColor => Comparator::EqualColor,
            Comparator::Bigger => Comparator::Smaller,
            Comparator::Smaller => Comparator::Bigger,
            Comparator::Closer => Comparator::Farther,
            Comparator::Farther => Comparator::Closer,
            Comparator::RoomBigger => Comparator::RoomSmaller,
            Comparator::RoomSmaller => Comparator::RoomBigger,
        }
    }

    pub fn of(sub: &SubProgram) -> Option<Comparator> {
        Some(match sub {
            SubProgram::EqualColor => Comparator::EqualColor,
            SubProgram::ObjectSizeCompare(SizeCmp::Bigger) => Comparator::Bigger,
            SubProgram::ObjectSizeCompare(SizeCmp::Smaller) => Comparator::Smaller,
            SubProgram::ObjectDistCompare(DistCmp::Closer) => Comparator::Closer,
            SubProgram::ObjectDistCompare(DistCmp::Farther) => Comparator::Farther,
            SubProgram::RoomSizeCompare(SizeCmp::Bigger) => Comparator::RoomBigger,
            SubProgram::RoomSizeCompare(SizeCmp::Smaller) => Comparator::RoomSmaller,
            _ => return None,
        })
    }

    fn size_cmp(self) -> SizeCmp {
        match self {
            Comparator::Smaller | Comparator::RoomSmaller => SizeCmp::Smaller,
            _ => SizeCmp::Bigger,
        }
    }

    fn dist_cmp(self) -> DistCmp {
        match self {
            Comparator::Farther => DistCmp::Farther,
            _ => DistCmp::Closer,
        }
    }
}

/// A question in terms of phrases: everything needed to render its text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuestionSpec {
    pub qtype: QuestionType,
    pub comparator: Comparator,
    /// Object phrases in mention order.
    pub objects: Vec<String>,
    /// Room phrases in mention order.
    pub rooms: Vec<String>,
}

pub fn render_text(spec: &QuestionSpec) -> String {
    let (o, r) = (&spec.objects, &spec.rooms);
    match spec.qtype {
        QuestionType::ObjectColorCompareInroom => {
            format!("does the {} share same color as the {} in the {}?", o[0], o[1], r[0])
        }
        QuestionType::ObjectColorCompareXroom => {
            format!("does the {} in the {} share same color as the {} in the {}?", o[0], r[0], o[1], r[1])
        }
        QuestionType::ObjectSizeCompareInroom => {
            format!("is the {} {} than the {} in the {}?", o[0], spec.comparator.size_cmp().word(), o[1], r[0])
        }
        QuestionType::ObjectSizeCompareXroom => format!(
            "is the {} in the {} {} than the {} in the {}?",
            o[0],
            r[0],
            spec.comparator.size_cmp().word(),
            o[1],
            r[1]
        ),
        QuestionType::ObjectDistCompare => format!(
            "is the {} {} the {} than the {} in the {}?",
            o[0],
            spec.comparator.dist_cmp().words(),
            o[1],
            o[2],
            r[0]
        ),
        QuestionType::RoomSizeCompare => {
            format!("is the {} {} than the {} in the house?", r[0], spec.comparator.size_cmp().word(), r[1])
        }
    }
}

struct Templates {
    color_x: Regex,
    color_in: Regex,
    size_x: Regex,
    size_in: Regex,
    dist: Regex,
    room: Regex,
}

fn templates() -> &'static Templates {
    static T: OnceLock<Templates> = OnceLock::new();
    T.get_or_init(|| {
        let p = "([a-z]+(?: [a-z]+)*?)";
        let re = |s: String| Regex::new(&format!("^{s}$")).expect("template regex");
        Templates {
            color_x: re(format!(r"does the {p} in the {p} share same color as the {p} in the {p}\?")),
            color_in: re(format!(r"does the {p} share same color as the {p} in the {p}\?")),
            size_x: re(format!(r"is the {p} in the {p} (bigger|smaller) than the {p} in the {p}\?")),
            size_in: re(format!(r"is the {p} (bigger|smaller) than the {p} in the {p}\?")),
            dist: re(format!(r"is the {p} (closer to|farther from) the {p} than the {p} in the {p}\?")),
            room: re(format!(r"is the {p} (bigger|smaller) than the {p} in the house\?")),
        }
    })
}

/// Matches question text against the six templates.
pub fn parse_question(text: &str) -> Result<QuestionSpec, QaError> {
    let t = templates();
    let norm = text.trim().to_lowercase();
    let unrecognized = || QaError::UnrecognizedTemplate(text.to_string());
    let size_of = |w: &str, room: bool| match (w, room) {
        ("bigger", false) => Comparator::Bigger,
        ("smaller", false) => Comparator::Smaller,
        ("bigger", true) => Comparator::RoomBigger,
        _ => Comparator::RoomSmaller,
    };
    let spec = |qtype, comparator, objects: Vec<&str>, rooms: Vec<&str>| QuestionSpec {
        qtype,
        comparator,
        objects: objects.into_iter().map(String::from).collect(),
        rooms: rooms.into_iter().map(String::from).collect(),
    };
    if let Some(c) = t.room.captures(&norm) {
        return Ok(spec(QuestionType::RoomSizeCompare, size_of(&c[2], true), vec![], vec![&c[1], &c[3]]));
    }
    if let Some(c) = t.color_x.captures(&norm) {
        return Ok(spec(QuestionType::ObjectColorCompareXroom, Comparator::EqualColor, vec![&c[1], &c[3]], vec![&c[2], &c[4]]));
    }
    if let Some(c) = t.color_in.captures(&norm) {
        return Ok(spec(QuestionType::ObjectColorCompareInroom, Comparator::EqualColor, vec![&c[1], &c[2]], vec![&c[3]]));
    }
    if let Some(c) = t.size_x.captures(&norm) {
        return Ok(spec(QuestionType::ObjectSizeCompareXroom, size_of(&c[3], false), vec![&c[1], &c[4]], vec![&c[2], &c[5]]));
    }
    if let Some(c) = t.size_in.captures(&norm) {
        return Ok(spec(QuestionType::ObjectSizeCompareInroom, size_of(&c[2], false), vec![&c[1], &c[3]], vec![&c[4]]));
    }
    if let Some(c) = t.dist.captures(&norm) {
        let cmp = if &c[2] == "closer to" { Comparator::Closer } else { Comparator::Farther };
        return Ok(spec(QuestionType::ObjectDistCompare, cmp, vec![&c[1], &c[3], &c[4]], vec![&c[5]]));
    }
    Err(unrecognized())
}

/// Program of a question spec.
pub fn program_of(spec: &QuestionSpec) -> Program {
    use SubProgram::*;
    let (o, r) = (&spec.objects, &spec.rooms);
    let obj = |i: usize| NavObject(o[i].clone());
    let room = |i: usize| NavRoom(r[i].clone());
    let cmp = match spec.comparator {
        Comparator::EqualColor => EqualColor,
        Comparator::Bigger | Comparator::Smaller => ObjectSizeCompare(spec.comparator.size_cmp()),
        Comparator::Closer | Comparator::Farther => ObjectDistCompare(spec.comparator.dist_cmp()),
        Comparator::RoomBigger | Comparator::RoomSmaller => RoomSizeCompare(spec.comparator.size_cmp()),
    };
    let ops = match spec.qtype {
        QuestionType::ObjectColorCompareInroom => {
            vec![room(0), obj(0), Query(Attribute::Color), obj(1), Query(Attribute::Color), cmp]
        }
        QuestionType::ObjectColorCompareXroom => {
            vec![room(0), obj(0), Query(Attribute::Color), room(1), obj(1), Query(Attribute::Color), cmp]
        }
        QuestionType::ObjectSizeCompareInroom => {
            vec![room(0), obj(0), Query(Attribute::Size), obj(1), Query(Attribute::Size), cmp]
        }
        QuestionType::ObjectSizeCompareXroom => {
            vec![room(0), obj(0), Query(Attribute::Size), room(1), obj(1), Query(Attribute::Size), cmp]
        }
        QuestionType::ObjectDistCompare => vec![room(0), obj(0), obj(1), obj(2), cmp],
        QuestionType::RoomSizeCompare => {
            vec![room(0), Query(Attribute::RoomSize), room(1), Query(Attribute::RoomSize), cmp]
        }
    };
    Program(ops)
}

/// Text to program by template match.
pub fn decompose(text: &str) -> Result<Program, QaError> {
    Ok(program_of(&parse_question(text)?))
}

/// Inverse of [`program_of`] for valid programs.
pub fn spec_of_program(program: &Program) -> Result<QuestionSpec, QaError> {
    program.validate()?;
    let cmp = program.comparison().and_then(Comparator::of).expect("validated");
    let navs = program.nav_steps();
    let rooms: Vec<String> = navs.iter().filter(|(r, _)| *r).map(|(_, p)| p.to_string()).collect();
    let objects: Vec<String> = navs.iter().filter(|(r, _)| !*r).map(|(_, p)| p.to_string()).collect();
    let qtype = match (cmp, rooms.len()) {
        (Comparator::EqualColor, 1) => QuestionType::ObjectColorCompareInroom,
        (Comparator::EqualColor, 2) => QuestionType::ObjectColorCompareXroom,
        (Comparator::Bigger | Comparator::Smaller, 1) => QuestionType::ObjectSizeCompareInroom,
        (Comparator::Bigger | Comparator::Smaller, 2) => QuestionType::ObjectSizeCompareXroom,
        (Comparator::Closer | Comparator::Farther, 1) => QuestionType::ObjectDistCompare,
        (Comparator::RoomBigger | Comparator::RoomSmaller, 2) => QuestionType::RoomSizeCompare,
        _ => return Err(QaError::InvalidProgram(format!("no template for {program}"))),
    };
    let spec = QuestionSpec { qtype, comparator: cmp, objects, rooms };
    if program_of(&spec) != *program {
        return Err(QaError::InvalidProgram(format!("no template for {program}")));
    }
    Ok(spec)
}

/// Resolves each navigation step to a target. Rooms must be unique in the
/// house; objects must be unique within the most recently named room.
pub fn resolve_targets(world: &HouseLayout, program: &Program) -> Result<Vec<TargetRef>, QaError> {
    let mut out = Vec::new();
    let mut room: Option<usize> = None;
    for (is_room, phrase) in program.nav_steps() {
        let unresolved = |reason: &str| QaError::Unresolved { phrase: phrase.to_string(), reason: reason.to_string() };
        if is_room {
            let hits: Vec<usize> = world.rooms.iter().filter(|r| r.room_type == phrase).map(|r| r.id).collect();
            match hits.as_slice() {
                [r] => {
                    room = Some(*r);
                    out.push(TargetRef::Room(*r));
                }
                [] => return Err(unresolved("no such room")),
                _ => return Err(unresolved("room type is not unique in the house")),
            }
        } else {
            let r = room.ok_or_else(|| unresolved("object named before any room"))?;
            let hits: Vec<usize> =
                world.objects.iter().filter(|o| o.room == r && o.object_type == phrase).map(|o| o.id).collect();
            match hits.as_slice() {
                [o] => out.push(TargetRef::Object(*o)),
                [] => return Err(unresolved("no such object in the room")),
                _ => return Err(unresolved("object type is not unique in the room")),
            }
        }
    }
    Ok(out)
}

/// Ground-truth answer for `comparator` over `compared` entities in mention order.
///
/// Exact ties are rejected as degenerate.
pub fn answer_oracle(world: &HouseLayout, comparator: Comparator, compared: &[TargetRef]) -> Result<bool, QaError> {
    if compared.len() != comparator.arity() {
        return Err(QaError::InvalidProgram(format!(
            "{comparator:?} takes {} inputs, got {}",
            comparator.arity(),
            compared.len()
        )));
    }
    let object = |t: TargetRef| match t {
        TargetRef::Object(o) => Ok(&world.objects[o]),
        _ => Err(QaError::InvalidProgram(format!("{comparator:?} compares objects"))),
    };
    let room = |t: TargetRef| match t {
        TargetRef::Room(r) => Ok(&world.rooms[r]),
        _ => Err(QaError::InvalidProgram(format!("{comparator:?} compares rooms"))),
    };
    let strict = |a: f64, b: f64, what: &str| {
        if a == b {
            Err(QaError::Degenerate(format!("equal {what}")))
        } else {
            Ok(a > b)
        }
    };
    match comparator {
        Comparator::EqualColor => Ok(object(compared[0])?.color == object(compared[1])?.color),
        Comparator::Bigger | Comparator::Smaller => {
            let (a, b) = (object(compared[0])?.size_volume() as f64, object(compared[1])?.size_volume() as f64);
            let bigger = strict(a, b, "size")?;
            Ok(if comparator == Comparator::Bigger { bigger } else { !bigger })
        }
        Comparator::RoomBigger | Comparator::RoomSmaller => {
            let (a, b) = (room(compared[0])?.floor_area() as f64, room(compared[1])?.floor_area() as f64);
            let bigger = strict(a, b, "floor area")?;
            Ok(if comparator == Comparator::RoomBigger { bigger } else { !bigger })
        }
        Comparator::Closer | Comparator::Farther => {
            let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            let (o1, o2, o3) = (object(compared[0])?, object(compared[1])?, object(compared[2])?);
            let (d1, d3) = (dist(o1.center(), o2.center()), dist(o3.center(), o2.center()));
            let farther = strict(d1, d3, "distance")?;
            Ok(if comparator == Comparator::Farther { farther } else { !farther })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QaConfig {
    /// At most this many cross-room object pairs per room pair and question type.
    pub xroom_per_room_pair: usize,
    pub enabled: Vec<QuestionType>,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig { xroom_per_room_pair: 3, enabled: QuestionType::ALL.to_vec() }
    }
}

/// An instantiated question before path annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub spec: QuestionSpec,
    pub text: String,
    pub program: Program,
    /// One target per navigation step.
    pub targets: Vec<TargetRef>,
    pub answer: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Instantiated {
    pub candidates: Vec<Candidate>,
    /// Candidates dropped because the comparison was an exact tie.
    pub ties: usize,
}

fn combinations<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        while i > 0 && idx[i - 1] == items.len() - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Executes the functional forms on a house: select and unique rooms, select
/// and unique objects, pair or triplet them, then query the comparison.
pub fn instantiate_questions(world: &HouseLayout, cfg: &QaConfig, seed: u64) -> Instantiated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Instantiated::default();
    let enabled = |q: QuestionType| cfg.enabled.contains(&q);

    let mut type_count: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &world.rooms {
        *type_count.entry(r.room_type.as_str()).or_default() += 1;
    }
    let unique_rooms: Vec<usize> =
        world.rooms.iter().filter(|r| type_count[r.room_type.as_str()] == 1).map(|r| r.id).collect();
    let unique_objects = |room: usize| -> Vec<usize> {
        let in_room: Vec<&crate::world::ObjectInstance> = world.objects.iter().filter(|o| o.room == room).collect();
        in_room
            .iter()
            .filter(|o| in_room.iter().filter(|p| p.object_type == o.object_type).count() == 1)
            .map(|o| o.id)
            .collect()
    };

    let push = |spec: QuestionSpec, compared: Vec<TargetRef>, out: &mut Instantiated| {
        let program = program_of(&spec);
        let targets = resolve_targets(world, &program).expect("instantiated phrases resolve");
        match answer_oracle(world, spec.comparator, &compared) {
            Ok(answer) => out.candidates.push(Candidate { text: render_text(&spec), spec, program, targets, answer }),
            Err(QaError::Degenerate(_)) => out.ties += 1,
            Err(e) => panic!("oracle rejected an instantiated question: {e}"),
        }
    };
    let name = |o: usize| world.objects[o].object_type.clone();
    let room_name = |r: usize| world.rooms[r].room_type.clone();
    let pick_size = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { Comparator::Bigger } else { Comparator::Smaller };

    for &room in &unique_rooms {
        let objs = unique_objects(room);
        for pair in combinations(&objs, 2) {
            let (a, b) = (pair[0], pair[1]);
            if enabled(QuestionType::ObjectColorCompareInroom) {
                let spec = QuestionSpec {
                    qtype: QuestionType::ObjectColorCompareInroom,
                    comparator: Comparator::EqualColor,
                    objects: vec![name(a), name(b)],
                    rooms: vec![room_name(room)],
                };
                push(spec, vec![TargetRef::Object(a), TargetRef::Object(b)], &mut out);
            }
            if enabled(QuestionType::ObjectSizeCompareInroom) {
                let spec = QuestionSpec {
                    qtype: QuestionType::ObjectSizeCompareInroom,
                    comparator: pick_size(&mut rng),
                    objects: vec![name(a), name(b)],
                    rooms: vec![room_name(room)],
                };
                push(spec, vec![TargetRef::Object(a), TargetRef::Object(b)], &mut out);
            }
        }
        if enabled(QuestionType::ObjectDistCompare) {
            for triple in combinations(&objs, 3) {
                // the middle mention is the reference object
                let mid = rng.gen_range(0..3);
                let rest: Vec<usize> = (0..3).filter(|&i| i != mid).map(|i| triple[i]).collect();
                let order = [rest[0], triple[mid], rest[1]];
                let cmp = if rng.gen_bool(0.5) { Comparator::Closer } else { Comparator::Farther };
                let spec = QuestionSpec {
                    qtype: QuestionType::ObjectDistCompare,
                    comparator: cmp,
                    objects: order.iter().map(|&o| name(o)).collect(),
                    rooms: vec![room_name(room)],
                };
                push(spec, order.iter().map(|&o| TargetRef::Object(o)).collect(), &mut out);
            }
        }
    }

    for rooms in combinations(&unique_rooms, 2) {
        let (ra, rb) = (rooms[0], rooms[1]);
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for a in unique_objects(ra) {
            for b in unique_objects(rb) {
                pairs.push((a, b));
            }
        }
        for qtype in [QuestionType::ObjectColorCompareXroom, QuestionType::ObjectSizeCompareXroom] {
            if !enabled(qtype) {
                continue;
            }
            let chosen: Vec<(usize, usize)> =
                pairs.choose_multiple(&mut rng, cfg.xroom_per_room_pair).copied().collect();
            let mut chosen = chosen;
            chosen.sort();
            for (a, b) in chosen {
                let comparator = if qtype == QuestionType::ObjectColorCompareXroom {
                    Comparator::EqualColor
                } else {
                    pick_size(&mut rng)
                };
                let spec = QuestionSpec {
                    qtype,
                    comparator,
                    objects: vec![name(a), name(b)],
                    rooms: vec![room_name(ra), room_name(rb)],
                };
                push(spec, vec![TargetRef::Object(a), TargetRef::Object(b)], &mut out);
            }
        }
        if enabled(QuestionType::RoomSizeCompare) {
            let cmp = if rng.gen_bool(0.5) { Comparator::RoomBigger } else { Comparator::RoomSmaller };
            let spec = QuestionSpec {
                qtype: QuestionType::RoomSizeCompare,
                comparator: cmp,
                objects: vec![],
                rooms: vec![room_name(ra), room_name(rb)],
            };
            push(spec, vec![TargetRef::Room(ra), TargetRef::Room(rb)], &mut out);
        }
    }
    out
}

/// Targets consumed by the comparison, in mention order.
pub fn compared_targets(program: &Program, targets: &[TargetRef]) -> Vec<TargetRef> {
    program.compared_navs().into_iter().map(|i| targets[i]).collect()
}
