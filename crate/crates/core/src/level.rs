//! The five decision levels of a scenario and the canonical action space.
//!
//! Every level shares one 5-slot action space: slots `0..n_classes` pick a
//! class for the current level and slot [`GATHER_SLOT`] requests additional
//! data. The per-level action ids shown to people (where gather is id 2 on
//! binary levels and id 4 on level 2) are a presentation mapping only.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_LEVELS: usize = 5;
/// Longest confidence vector any level produces.
pub const MAX_CLASSES: usize = 4;
pub const N_SLOTS: usize = 5;
pub const GATHER_SLOT: usize = 4;

/// A level id in `1..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Level(u8);

impl Level {
    pub const FIRST: Level = Level(1);
    pub const LAST: Level = Level(5);

    pub fn new(id: u8) -> Result<Self> {
        if (1..=N_LEVELS as u8).contains(&id) {
            Ok(Level(id))
        } else {
            Err(Error::InvalidLevel(id))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Zero-based position, `0..5`.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Level::new(u8::try_from(index + 1).map_err(|_| Error::InvalidLevel(u8::MAX))?)
    }

    pub fn next(self) -> Option<Level> {
        (self.0 < N_LEVELS as u8).then(|| Level(self.0 + 1))
    }

    pub fn all() -> impl Iterator<Item = Level> + Clone {
        (1..=N_LEVELS as u8).map(Level)
    }

    pub fn spec(self) -> &'static LevelSpec {
        &LEVEL_SPECS[self.index()]
    }

    pub fn n_classes(self) -> usize {
        self.spec().n_classes()
    }
}

impl TryFrom<u8> for Level {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        Level::new(id)
    }
}

impl From<Level> for u8 {
    fn from(level: Level) -> u8 {
        level.0
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Static description of one level.
#[derive(Debug)]
pub struct LevelSpec {
    pub level_id: u8,
    pub name: &'static str,
    pub class_labels: &'static [&'static str],
    /// Whether people are shown the text of a record at this level (levels
    /// 1-3 are image-text pairs, 4-5 are satellite and drone imagery).
    pub shows_text: bool,
}

impl LevelSpec {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    /// Size of this level's own discrete action space (classes + gather).
    pub fn action_space_size(&self) -> usize {
        self.n_classes() + 1
    }

    pub fn gather_slot(&self) -> usize {
        GATHER_SLOT
    }

    /// Maps a canonical slot to the level's presentation action id.
    pub fn env_action_id(&self, slot: usize) -> Option<usize> {
        match slot {
            GATHER_SLOT => Some(self.n_classes()),
            s if s < self.n_classes() => Some(s),
            _ => None,
        }
    }

    /// Inverse of [`LevelSpec::env_action_id`].
    pub fn slot_for_env_action(&self, action_id: usize) -> Option<usize> {
        match action_id {
            a if a < self.n_classes() => Some(a),
            a if a == self.n_classes() => Some(GATHER_SLOT),
            _ => None,
        }
    }

    pub fn slot_label(&self, slot: usize) -> Option<&'static str> {
        match slot {
            GATHER_SLOT => Some(GATHER_LABEL),
            s => self.class_labels.get(s).copied(),
        }
    }
}

pub const GATHER_LABEL: &str = "Gather Additional Data";

pub static LEVEL_SPECS: [LevelSpec; N_LEVELS] = [
    LevelSpec {
        level_id: 1,
        name: "informativeness",
        class_labels: &["informative", "not informative"],
        shows_text: true,
    },
    LevelSpec {
        level_id: 2,
        name: "humanitarian category",
        class_labels: &[
            "affected individuals",
            "infrastructure and utility damage",
            "other relevant information",
            "rescue and volunteering efforts",
        ],
        shows_text: true,
    },
    LevelSpec {
        level_id: 3,
        name: "ground damage severity",
        class_labels: &["little or no damage", "severe damage"],
        shows_text: true,
    },
    LevelSpec {
        level_id: 4,
        name: "satellite damage assessment",
        class_labels: &["no damage", "major damage"],
        shows_text: false,
    },
    LevelSpec {
        level_id: 5,
        name: "drone damage assessment",
        class_labels: &["building no damage", "building destroyed"],
        shows_text: false,
    },
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_space_sizes() {
        let sizes: Vec<usize> = Level::all().map(|l| l.spec().action_space_size()).collect();
        assert_eq!(sizes, vec![3, 5, 3, 3, 3]);
    }

    #[test]
    fn presentation_mapping_round_trips() {
        for level in Level::all() {
            let spec = level.spec();
            assert_eq!(spec.env_action_id(GATHER_SLOT), Some(spec.n_classes()));
            for id in 0..spec.action_space_size() {
                let slot = spec.slot_for_env_action(id).unwrap();
                assert_eq!(spec.env_action_id(slot), Some(id));
            }
            assert_eq!(spec.slot_for_env_action(spec.action_space_size()), None);
        }
        assert_eq!(Level::new(1).unwrap().spec().env_action_id(2), None);
    }

    #[test]
    fn level_bounds() {
        assert!(Level::new(0).is_err());
        assert!(Level::new(6).is_err());
        assert_eq!(Level::LAST.next(), None);
        assert_eq!(Level::FIRST.next(), Some(Level::new(2).unwrap()));
        let parsed: Level = serde_json::from_str("3").unwrap();
        assert_eq!(parsed.id(), 3);
        assert!(serde_json::from_str::<Level>("9").is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Level::FIRST.spec().class_labels, &["informative", "not informative"]);
        assert_eq!(Level::new(3).unwrap().spec().slot_label(1), Some("severe damage"));
        assert_eq!(Level::new(3).unwrap().spec().slot_label(4), Some(GATHER_LABEL));
        assert_eq!(Level::new(3).unwrap().spec().slot_label(2), None);
    }
}
