use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The element classes a building model is split into; one sub-database each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementClass {
    Floor,
    Space,
    Window,
    Door,
    Beam,
    Column,
    Stair,
    Furniture,
}

impl ElementClass {
    pub const ALL: [ElementClass; 8] = [
        ElementClass::Floor,
        ElementClass::Space,
        ElementClass::Window,
        ElementClass::Door,
        ElementClass::Beam,
        ElementClass::Column,
        ElementClass::Stair,
        ElementClass::Furniture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementClass::Floor => "floor",
            ElementClass::Space => "space",
            ElementClass::Window => "window",
            ElementClass::Door => "door",
            ElementClass::Beam => "beam",
            ElementClass::Column => "column",
            ElementClass::Stair => "stair",
            ElementClass::Furniture => "furniture",
        }
    }

    /// Position in [`ElementClass::ALL`]; used as the confusion-matrix index.
    pub fn index(self) -> usize {
        self as usize
    }

    /// IFC entity type names (uppercase) that belong to this class.
    pub fn ifc_types(self) -> &'static [&'static str] {
        match self {
            ElementClass::Floor => &["IFCBUILDINGSTOREY"],
            ElementClass::Space => &["IFCSPACE"],
            ElementClass::Window => &["IFCWINDOW", "IFCWINDOWSTANDARDCASE"],
            ElementClass::Door => &["IFCDOOR", "IFCDOORSTANDARDCASE"],
            ElementClass::Beam => &["IFCBEAM", "IFCBEAMSTANDARDCASE"],
            ElementClass::Column => &["IFCCOLUMN", "IFCCOLUMNSTANDARDCASE"],
            ElementClass::Stair => &["IFCSTAIR"],
            ElementClass::Furniture => &["IFCFURNISHINGELEMENT", "IFCFURNITURE"],
        }
    }
}

impl fmt::Display for ElementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown element class `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for ElementClass {
    type Err = UnknownClass;

    /// Case-insensitive; surrounding whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        ElementClass::ALL
            .into_iter()
            .find(|c| c.as_str() == t)
            .ok_or_else(|| UnknownClass(s.to_string()))
    }
}
