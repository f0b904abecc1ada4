use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A guest or host action in a search journey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Milestone {
    Imp,
    C,
    Lc,
    Pp,
    Req,
    Book,
    Unc,
    Rej,
    Cbh,
    Cbg,
}

impl Milestone {
    pub const ALL: [Milestone; 10] = [
        Milestone::Imp,
        Milestone::C,
        Milestone::Lc,
        Milestone::Pp,
        Milestone::Req,
        Milestone::Book,
        Milestone::Unc,
        Milestone::Rej,
        Milestone::Cbh,
        Milestone::Cbg,
    ];

    /// The positive funnel, in order.
    pub const CHAIN: [Milestone; 6] = [
        Milestone::C,
        Milestone::Lc,
        Milestone::Pp,
        Milestone::Req,
        Milestone::Book,
        Milestone::Unc,
    ];

    pub const NEGATIVE: [Milestone; 3] = [Milestone::Rej, Milestone::Cbh, Milestone::Cbg];

    pub fn name(self) -> &'static str {
        match self {
            Milestone::Imp => "imp",
            Milestone::C => "c",
            Milestone::Lc => "lc",
            Milestone::Pp => "pp",
            Milestone::Req => "req",
            Milestone::Book => "book",
            Milestone::Unc => "unc",
            Milestone::Rej => "rej",
            Milestone::Cbh => "cbh",
            Milestone::Cbg => "cbg",
        }
    }

    pub fn is_negative(self) -> bool {
        matches!(self, Milestone::Rej | Milestone::Cbh | Milestone::Cbg)
    }

    /// Position in the positive funnel, `None` for `imp` and negatives.
    pub fn chain_index(self) -> Option<usize> {
        Self::CHAIN.iter().position(|&m| m == self)
    }

    /// Chain milestones a negative outcome implies (rejections need a
    /// request; cancellations need a booking).
    pub fn implied_chain(self) -> &'static [Milestone] {
        match self {
            Milestone::Rej => &Self::CHAIN[..4],
            Milestone::Cbh | Milestone::Cbg => &Self::CHAIN[..5],
            _ => &[],
        }
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for Milestone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Milestone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Milestone::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown milestone `{s}`"))
    }
}

impl Serialize for Milestone {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Milestone {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which label invariant a vector breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Every impression carries `imp`.
    ImpressionFlag,
    /// A chain milestone implies all earlier ones.
    FunnelConsistency,
    /// `rej` implies `req` and excludes `book`.
    RejectionNeedsOpenRequest,
    /// `cbh`/`cbg` imply `book`.
    CancellationNeedsBooking,
    /// `unc` excludes `rej`, `cbh` and `cbg`.
    UncExcludesNegatives,
}

impl LabelRule {
    pub fn describe(self) -> &'static str {
        match self {
            LabelRule::ImpressionFlag => "imp must be set on every impression",
            LabelRule::FunnelConsistency => {
                "funnel consistency: unc => book => req => pp => lc => c"
            }
            LabelRule::RejectionNeedsOpenRequest => "rej => req and not book",
            LabelRule::CancellationNeedsBooking => "cbh => book and cbg => book",
            LabelRule::UncExcludesNegatives => "unc excludes cancellations and rejections",
        }
    }
}

/// Multi-label outcome of one impression, one bit per milestone.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LabelVector(u16);

impl LabelVector {
    /// A bare impression.
    pub fn impression() -> Self {
        Self(Milestone::Imp.bit())
    }

    pub fn empty() -> Self {
        Self(0)
    }

    pub fn from_milestones(ms: &[Milestone]) -> Self {
        let mut v = Self::impression();
        for &m in ms {
            v.set(m, true);
        }
        v
    }

    /// Impression that reached `last` along the funnel, with every earlier
    /// chain milestone set.
    pub fn through(last: Milestone) -> Self {
        let mut v = Self::impression();
        if let Some(k) = last.chain_index() {
            for &m in &Milestone::CHAIN[..=k] {
                v.set(m, true);
            }
        }
        v
    }

    pub fn get(self, m: Milestone) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn set(&mut self, m: Milestone, on: bool) {
        if on {
            self.0 |= m.bit();
        } else {
            self.0 &= !m.bit();
        }
    }

    pub fn with(mut self, m: Milestone) -> Self {
        self.set(m, true);
        self
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn has_negative(self) -> bool {
        Milestone::NEGATIVE.iter().any(|&m| self.get(m))
    }

    pub fn milestones(self) -> impl Iterator<Item = Milestone> {
        Milestone::ALL.into_iter().filter(move |&m| self.get(m))
    }

    /// Every invariant this vector breaks, in a fixed order.
    pub fn violations(self) -> Vec<LabelRule> {
        let mut out = Vec::new();
        if !self.get(Milestone::Imp) {
            out.push(LabelRule::ImpressionFlag);
        }
        let chain: Vec<bool> = Milestone::CHAIN.iter().map(|&m| self.get(m)).collect();
        if chain.windows(2).any(|w| w[1] && !w[0]) {
            out.push(LabelRule::FunnelConsistency);
        }
        if self.get(Milestone::Rej) && (!self.get(Milestone::Req) || self.get(Milestone::Book)) {
            out.push(LabelRule::RejectionNeedsOpenRequest);
        }
        if (self.get(Milestone::Cbh) || self.get(Milestone::Cbg)) && !self.get(Milestone::Book) {
            out.push(LabelRule::CancellationNeedsBooking);
        }
        if self.get(Milestone::Unc) && self.has_negative() {
            out.push(LabelRule::UncExcludesNegatives);
        }
        out
    }

    pub fn is_valid(self) -> bool {
        self.violations().is_empty()
    }

    /// Relevance grade for the graded pairwise loss: 3 for an uncancelled
    /// booking, 0 for any negative outcome, 2 for a click, 1 otherwise.
    pub fn grade(self) -> u8 {
        if self.get(Milestone::Unc) {
            3
        } else if self.has_negative() {
            0
        } else if self.get(Milestone::C) {
            2
        } else {
            1
        }
    }
}

impl fmt::Debug for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.milestones().map(Milestone::name)).finish()
    }
}

// Serialized as an object of the milestones that are set, e.g.
// `{"imp":true,"c":true}`. Keys set to false or missing are unset.
impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.milestones().count()))?;
        for ms in self.milestones() {
            m.serialize_entry(ms.name(), &true)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, bool>::deserialize(d)?;
        let mut v = LabelVector::empty();
        for (k, on) in map {
            let m: Milestone = k.parse().map_err(serde::de::Error::custom)?;
            v.set(m, on);
        }
        Ok(v)
    }
}
