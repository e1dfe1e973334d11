use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of distress (detection) classes.
pub const NUM_CLASSES: usize = 5;
/// Number of mask labels: background plus the distress classes.
pub const NUM_MASK_CLASSES: usize = NUM_CLASSES + 1;
/// Mask index of intact pavement.
pub const BACKGROUND: u8 = 0;

/// The fixed pavement-distress taxonomy. Discriminants are the on-disk class ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum DistressClass {
    AlligatorCrack = 1,
    BowlDepression = 2,
    Delamination = 3,
    Crack = 4,
    Scaling = 5,
}

impl DistressClass {
    pub const ALL: [DistressClass; NUM_CLASSES] = [
        DistressClass::AlligatorCrack,
        DistressClass::BowlDepression,
        DistressClass::Delamination,
        DistressClass::Crack,
        DistressClass::Scaling,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    /// Zero-based position used for network channels and per-class arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1..=5 => Ok(Self::ALL[id as usize - 1]),
            _ => Err(Error::invalid(format!("class id {id} outside 1..5"))),
        }
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    pub fn name(self) -> &'static str {
        match self {
            DistressClass::AlligatorCrack => "AlligatorCrack",
            DistressClass::BowlDepression => "BowlDepression",
            DistressClass::Delamination => "Delamination",
            DistressClass::Crack => "Crack",
            DistressClass::Scaling => "Scaling",
        }
    }

    /// Spaced name for report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            DistressClass::AlligatorCrack => "Alligator Crack",
            DistressClass::BowlDepression => "Bowl Depression",
            DistressClass::Delamination => "Delamination",
            DistressClass::Crack => "Crack",
            DistressClass::Scaling => "Scaling",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::invalid(format!("unknown class name `{name}`")))
    }
}

impl fmt::Display for DistressClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Class id/name table, serialized next to checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub background: String,
    pub classes: Vec<ClassEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u8,
    pub name: String,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self {
            background: "Background".into(),
            classes: DistressClass::ALL
                .iter()
                .map(|c| ClassEntry {
                    id: c.id(),
                    name: c.name().into(),
                })
                .collect(),
        }
    }
}

impl ClassTable {
    /// Name for a mask label, including background.
    pub fn mask_label_name(&self, label: u8) -> &str {
        if label == BACKGROUND {
            return &self.background;
        }
        self.classes
            .iter()
            .find(|c| c.id == label)
            .map(|c| c.name.as_str())
            .unwrap_or("?")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_listing_order() {
        let ids: Vec<u8> = DistressClass::ALL.iter().map(|c| c.id()).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
        assert_eq!(
            DistressClass::from_id(3).unwrap(),
            DistressClass::Delamination
        );
        assert!(DistressClass::from_id(0).is_err());
        assert!(DistressClass::from_id(6).is_err());
    }

    #[test]
    fn name_round_trip() {
        for c in DistressClass::ALL {
            assert_eq!(DistressClass::from_name(c.name()).unwrap(), c);
        }
        assert_eq!(ClassTable::default().mask_label_name(0), "Background");
        assert_eq!(ClassTable::default().mask_label_name(4), "Crack");
    }
}
