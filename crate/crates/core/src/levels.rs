//! Indexing of the 21-level electron-orbital ⊗ nuclear space.
//!
//! Layout: ground triplet ⊗ nuclear triplet (0..9), excited triplet ⊗ nuclear
//! triplet (9..18), metastable singlet ⊗ nuclear triplet (18..21). Inside a
//! triplet manifold the index is `3·pos(m_S) + pos(m_I)` with positions in the
//! `{+1, 0, −1}` order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::spinops::{spin1_index, spin1_projection};

pub const DIM: usize = 21;
pub const GS_OFFSET: usize = 0;
pub const ES_OFFSET: usize = 9;
pub const SINGLET_OFFSET: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Ground,
    Excited,
    Singlet,
}

impl Manifold {
    pub fn offset(self) -> usize {
        match self {
            Manifold::Ground => GS_OFFSET,
            Manifold::Excited => ES_OFFSET,
            Manifold::Singlet => SINGLET_OFFSET,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Manifold::Singlet => 3,
            _ => 9,
        }
    }

    pub fn of(idx: usize) -> Manifold {
        match idx {
            0..=8 => Manifold::Ground,
            9..=17 => Manifold::Excited,
            _ => Manifold::Singlet,
        }
    }
}

/// Index of `|m_S, m_I⟩` in a triplet manifold.
pub fn triplet_level(manifold: Manifold, ms: i8, mi: i8) -> usize {
    debug_assert!(manifold != Manifold::Singlet);
    manifold.offset() + 3 * spin1_index(ms) + spin1_index(mi)
}

pub fn singlet_level(mi: i8) -> usize {
    SINGLET_OFFSET + spin1_index(mi)
}

/// `(m_S, m_I)` of a triplet level, `m_S = None` for singlet levels.
pub fn quantum_numbers(idx: usize) -> (Manifold, Option<i8>, i8) {
    let m = Manifold::of(idx);
    let local = idx - m.offset();
    match m {
        Manifold::Singlet => (m, None, spin1_projection(local)),
        _ => (m, Some(spin1_projection(local / 3)), spin1_projection(local % 3)),
    }
}

/// Ground-state electron-nuclear basis label `|m_S, m_I⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisState {
    pub ms: i8,
    pub mi: i8,
}

impl BasisState {
    pub const fn new(ms: i8, mi: i8) -> Self {
        Self { ms, mi }
    }

    /// The optical reference state `|0, +1⟩`.
    pub const REFERENCE: BasisState = BasisState::new(0, 1);

    /// All nine ground basis states in storage order.
    pub fn all() -> [BasisState; 9] {
        std::array::from_fn(|k| BasisState::new(spin1_projection(k / 3), spin1_projection(k % 3)))
    }

    pub fn ground_index(self) -> usize {
        triplet_level(Manifold::Ground, self.ms, self.mi)
    }
}

fn fmt_m(m: i8) -> String {
    match m {
        1 => "+1".into(),
        0 => "0".into(),
        _ => format!("{m}"),
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{}>", fmt_m(self.ms), fmt_m(self.mi))
    }
}

impl FromStr for BasisState {
    type Err = Error;

    /// Accepts `|0,+1>`, `0,+1`, `(-1, 0)` and similar spellings.
    fn from_str(s: &str) -> Result<Self, Error> {
        let cleaned: String = s
            .chars()
            .filter(|c| !matches!(c, '|' | '>' | '<' | '(' | ')' | ' ' | '⟩'))
            .collect();
        let mut parts = cleaned.split(',');
        let parse = |p: Option<&str>| -> Result<i8, Error> {
            let p = p.ok_or_else(|| Error::InvalidArgument(format!("bad basis label {s}")))?;
            let v: i8 = p
                .trim_start_matches('+')
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad basis label {s}")))?;
            if (-1..=1).contains(&v) {
                Ok(v)
            } else {
                Err(Error::InvalidArgument(format!("projection out of range in {s}")))
            }
        };
        let ms = parse(parts.next())?;
        let mi = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::InvalidArgument(format!("bad basis label {s}")));
        }
        Ok(BasisState::new(ms, mi))
    }
}
