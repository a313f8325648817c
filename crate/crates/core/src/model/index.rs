use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A model: a set of active covariate indices.
///
/// Members are stored zero-based and strictly increasing; the textual form
/// (`Display`, `FromStr`) is one-based, e.g. `1,3,7`, with `{}` for the
/// empty model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ModelIndex {
    members: Vec<usize>,
}

impl ModelIndex {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build from zero-based indices in any order; duplicates are rejected.
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate member in model {members:?}")));
        }
        Ok(Self { members })
    }

    /// Build from sorted, duplicate-free zero-based indices.
    pub(crate) fn from_sorted_unchecked(members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Self { members }
    }

    pub fn from_one_based(members: &[usize]) -> Result<Self> {
        if members.contains(&0) {
            return Err(Error::InvalidArgument("one-based model indices must be >= 1".into()));
        }
        Self::new(members.iter().map(|&j| j - 1).collect())
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.binary_search(&j).is_ok()
    }

    /// Largest member + 1, or 0 for the empty model.
    pub fn bound(&self) -> usize {
        self.members.last().map_or(0, |&j| j + 1)
    }

    pub fn check_within(&self, p: usize) -> Result<()> {
        if self.bound() > p {
            return Err(Error::InvalidArgument(format!("model {self} has members outside 1..={p}")));
        }
        Ok(())
    }

    pub fn union(&self, other: &Self) -> Self {
        let set: BTreeSet<usize> = self.members.iter().chain(&other.members).copied().collect();
        Self { members: set.into_iter().collect() }
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self { members: self.members.iter().copied().filter(|&j| !other.contains(j)).collect() }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self { members: self.members.iter().copied().filter(|&j| other.contains(j)).collect() }
    }

    pub fn is_superset_of(&self, other: &Self) -> bool {
        other.members.iter().all(|&j| self.contains(j))
    }

    pub fn with(&self, j: usize) -> Self {
        let mut members = self.members.clone();
        if let Err(pos) = members.binary_search(&j) {
            members.insert(pos, j);
        }
        Self { members }
    }

    pub fn without(&self, j: usize) -> Self {
        Self { members: self.members.iter().copied().filter(|&k| k != j).collect() }
    }

    /// Complement within `0..p`.
    pub fn complement(&self, p: usize) -> Vec<usize> {
        (0..p).filter(|&j| !self.contains(j)).collect()
    }

    /// Bitmask encoding for p <= 128.
    pub fn to_bits(&self) -> Option<u128> {
        if self.bound() > 128 {
            return None;
        }
        Some(self.members.iter().fold(0u128, |acc, &j| acc | (1u128 << j)))
    }

    pub fn from_bits(bits: u128) -> Self {
        Self { members: (0..128).filter(|&j| bits >> j & 1 == 1).collect() }
    }

    /// One-based members joined with `sep`; empty string for the empty model.
    pub fn one_based_joined(&self, sep: &str) -> String {
        self.members.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(sep)
    }
}

impl fmt::Display for ModelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.members.is_empty() {
            f.write_str("{}")
        } else {
            f.write_str(&self.one_based_joined(","))
        }
    }
}

impl FromStr for ModelIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('{').trim_end_matches('}').trim();
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let parsed = s
            .split([',', ';', ' '])
            .filter(|t| !t.is_empty())
            .map(|t| t.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_based(&parsed)
    }
}

impl TryFrom<Vec<usize>> for ModelIndex {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ModelIndex> for Vec<usize> {
    fn from(m: ModelIndex) -> Self {
        m.members
    }
}
