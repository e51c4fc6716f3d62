//! Fixed naming tables shared by the generator, the renderer and the learned models.
//!
//! Feature layouts index into these tables, so their order is part of the
//! checkpoint format and must not be reshuffled.

/// Color palette. Colors are annotations, never inferred from pixels.
pub const COLORS: [&str; 12] = [
    "white", "black", "gray", "silver", "brown", "beige", "red", "orange", "yellow", "green",
    "blue", "purple",
];

/// Room type names, in feature order.
pub const ROOM_TYPES: [&str; 8] = [
    "bathroom",
    "bedroom",
    "dining room",
    "garage",
    "gym",
    "kitchen",
    "living room",
    "office",
];

/// Coarse size class used to draw footprints and heights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    /// Ordering key: larger classes are placed first.
    pub fn rank(self) -> u8 {
        match self {
            SizeClass::Large => 0,
            SizeClass::Medium => 1,
            SizeClass::Small => 2,
        }
    }
}

/// Per-type generation priors.
#[derive(Debug, Clone, Copy)]
pub struct ObjectPrior {
    pub name: &'static str,
    pub size: SizeClass,
    /// Indices into [`COLORS`] drawn with high probability.
    pub colors: &'static [usize],
}

const fn prior(name: &'static str, size: SizeClass, colors: &'static [usize]) -> ObjectPrior {
    ObjectPrior { name, size, colors }
}

use SizeClass::{Large, Medium, Small};

/// Object types, in feature order.
pub const OBJECT_TYPES: [ObjectPrior; 24] = [
    prior("bathtub", Large, &[0, 5]),
    prior("sink", Small, &[0, 3]),
    prior("toilet", Medium, &[0]),
    prior("shower", Medium, &[0, 2]),
    prior("mirror", Small, &[3, 4]),
    prior("refrigerator", Large, &[0, 3]),
    prior("microwave", Small, &[1, 3]),
    prior("coffee machine", Small, &[1, 6]),
    prior("oven", Medium, &[1, 3]),
    prior("bed", Large, &[0, 5, 10]),
    prior("dresser", Medium, &[4, 0]),
    prior("dressing table", Medium, &[4, 0]),
    prior("wardrobe", Large, &[4, 5]),
    prior("lamp", Small, &[8, 0, 1]),
    prior("desk", Medium, &[4, 1]),
    prior("sofa", Large, &[2, 10, 4]),
    prior("television", Medium, &[1]),
    prior("coffee table", Medium, &[4, 1]),
    prior("bookshelf", Large, &[4, 0]),
    prior("plant", Small, &[9]),
    prior("dining table", Large, &[4, 0]),
    prior("chair", Small, &[4, 1, 6]),
    prior("car", Large, &[6, 1, 3, 10]),
    prior("treadmill", Large, &[1, 2]),
];

/// Relative size score per room type (larger rooms tend to get larger scores).
pub const ROOM_SIZE_PRIOR: [f64; 8] = [0.2, 0.55, 0.6, 0.9, 0.7, 0.5, 0.95, 0.3];

/// Object types each room type may contain (indices into [`OBJECT_TYPES`]).
pub fn allowed_objects(room_type: usize) -> &'static [usize] {
    const BATHROOM: &[usize] = &[0, 1, 2, 3, 4, 19];
    const BEDROOM: &[usize] = &[9, 10, 11, 12, 13, 14, 4];
    const DINING: &[usize] = &[20, 21, 19, 13, 16, 18];
    const GARAGE: &[usize] = &[22, 18, 23, 13, 21];
    const GYM: &[usize] = &[23, 4, 16, 19, 21];
    const KITCHEN: &[usize] = &[5, 6, 7, 8, 1, 20, 21];
    const LIVING: &[usize] = &[15, 16, 17, 18, 13, 19, 21];
    const OFFICE: &[usize] = &[14, 21, 18, 13, 19, 16];
    match room_type {
        0 => BATHROOM,
        1 => BEDROOM,
        2 => DINING,
        3 => GARAGE,
        4 => GYM,
        5 => KITCHEN,
        6 => LIVING,
        _ => OFFICE,
    }
}

pub fn room_type_index(name: &str) -> Option<usize> {
    ROOM_TYPES.iter().position(|r| *r == name)
}

pub fn object_type_index(name: &str) -> Option<usize> {
    OBJECT_TYPES.iter().position(|o| o.name == name)
}

pub fn color_index(name: &str) -> Option<usize> {
    COLORS.iter().position(|c| *c == name)
}

/// Words that appear in question templates.
const TEMPLATE_WORDS: [&str; 19] = [
    "does", "the", "share", "same", "color", "as", "in", "is", "bigger", "smaller", "than",
    "closer", "to", "farther", "from", "house", "?", "<unk>", "<pad>",
];

/// Token table for target phrases and question text.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVocab {
    words: Vec<String>,
}

impl Default for TokenVocab {
    fn default() -> Self {
        let mut words: Vec<String> = TEMPLATE_WORDS.iter().map(|w| w.to_string()).collect();
        let phrases = ROOM_TYPES.iter().copied().chain(OBJECT_TYPES.iter().map(|o| o.name));
        for phrase in phrases {
            for w in phrase.split(' ') {
                if !words.iter().any(|x| x == w) {
                    words.push(w.to_string());
                }
            }
        }
        TokenVocab { words }
    }
}

impl TokenVocab {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk(&self) -> usize {
        17
    }

    pub fn index(&self, word: &str) -> usize {
        self.words.iter().position(|w| w == word).unwrap_or(self.unk())
    }

    /// Splits on whitespace and detaches a trailing question mark.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut out = Vec::new();
        for raw in text.split_whitespace() {
            if let Some(stem) = raw.strip_suffix('?') {
                if !stem.is_empty() {
                    out.push(self.index(stem));
                }
                out.push(self.index("?"));
            } else {
                out.push(self.index(raw));
            }
        }
        out
    }
}
