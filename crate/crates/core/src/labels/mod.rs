//! Edit-operation labels over the linearized dialogue.
//!
//! | label | meaning                                          |
//! |-------|--------------------------------------------------|
//! | `NA`  | token takes no part in an edit                   |
//! | `RP`  | incomplete-utterance token that gets replaced    |
//! | `NW`  | history token that replaces an `RP` token        |
//! | `IN`  | history token that gets inserted                 |

mod align;
mod augment;
mod derive;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use align::{align, apply_script, lcs_pairs, EditOp, EditScript};
pub use augment::{augment_coref_to_ellipsis, augment_ellipsis_to_coref, PronounLexicon};
pub use derive::{check_consistency, derive_labels, ConsistencyReport, Derivation, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EditLabel {
    #[serde(rename = "NA")]
    Na = 0,
    #[serde(rename = "RP")]
    Rp = 1,
    #[serde(rename = "NW")]
    Nw = 2,
    #[serde(rename = "IN")]
    In = 3,
}

impl EditLabel {
    pub const ALL: [EditLabel; 4] = [EditLabel::Na, EditLabel::Rp, EditLabel::Nw, EditLabel::In];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<EditLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EditLabel::Na => "NA",
            EditLabel::Rp => "RP",
            EditLabel::Nw => "NW",
            EditLabel::In => "IN",
        }
    }

    pub fn is_edit(self) -> bool {
        self != EditLabel::Na
    }
}

impl fmt::Display for EditLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EditLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NA" => Ok(EditLabel::Na),
            "RP" => Ok(EditLabel::Rp),
            "NW" => Ok(EditLabel::Nw),
            "IN" => Ok(EditLabel::In),
            other => Err(format!("unknown edit label `{other}`")),
        }
    }
}
