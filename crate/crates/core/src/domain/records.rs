use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::milestone::{LabelVector, Milestone};
use crate::error::{Error, Result};

pub const DAYS_AHEAD: &str = "days_ahead_of_checkin";
pub const NUM_PREVIOUS_SEARCHES: &str = "num_previous_searches";

/// Feature widths and naming shared by every record of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub listing_features: Vec<String>,
    pub context_features: Vec<String>,
    pub milestones: Vec<String>,
    /// Maximum span of one journey, in days.
    pub window_days: f64,
}

impl Schema {
    pub fn new(listing_dim: usize, context_names: Vec<String>, window_days: f64) -> Self {
        Self {
            listing_features: (0..listing_dim).map(|i| format!("f{i}")).collect(),
            context_features: context_names,
            milestones: Milestone::ALL.iter().map(|m| m.name().to_string()).collect(),
            window_days,
        }
    }

    /// Context names: days-ahead, previous-search count, then `ctx<i>`.
    pub fn default_context_names(context_dim: usize) -> Vec<String> {
        let mut names = vec![DAYS_AHEAD.to_string(), NUM_PREVIOUS_SEARCHES.to_string()];
        names.extend((2..context_dim).map(|i| format!("ctx{i}")));
        names.truncate(context_dim);
        names
    }

    pub fn listing_dim(&self) -> usize {
        self.listing_features.len()
    }

    pub fn context_dim(&self) -> usize {
        self.context_features.len()
    }

    pub fn context_index(&self, name: &str) -> Option<usize> {
        self.context_features.iter().position(|n| n == name)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("schema serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpressionRecord {
    pub listing_id: u32,
    /// 1-based rank at which the listing was shown.
    pub position: u32,
    pub features: Vec<f64>,
    pub labels: LabelVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub search_id: u64,
    /// Days since epoch.
    pub t_days: f64,
    pub context: Vec<f64>,
    pub impressions: Vec<ImpressionRecord>,
}

impl SearchRecord {
    pub fn has_label(&self, m: Milestone) -> bool {
        self.impressions.iter().any(|i| i.labels.get(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Unc,
    CancelledOrRejected,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyRecord {
    pub guest_id: u64,
    pub searches: Vec<SearchRecord>,
    pub outcome: Outcome,
}

impl JourneyRecord {
    pub fn has_label(&self, m: Milestone) -> bool {
        self.searches.iter().any(|s| s.has_label(m))
    }

    /// Outcome implied by the labels present.
    pub fn derived_outcome(&self) -> Outcome {
        if self.has_label(Milestone::Unc) {
            Outcome::Unc
        } else if Milestone::NEGATIVE.iter().any(|&m| self.has_label(m)) {
            Outcome::CancelledOrRejected
        } else {
            Outcome::Abandoned
        }
    }

    pub fn impressions(&self) -> impl Iterator<Item = &ImpressionRecord> {
        self.searches.iter().flat_map(|s| s.impressions.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: Schema,
}

/// A schema plus its journeys.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub journeys: Vec<JourneyRecord>,
}

impl Dataset {
    pub fn new(schema: Schema, journeys: Vec<JourneyRecord>) -> Self {
        Self { schema, journeys }
    }

    pub fn empty_like(&self) -> Self {
        Self::new(self.schema.clone(), Vec::new())
    }

    pub fn n_searches(&self) -> usize {
        self.journeys.iter().map(|j| j.searches.len()).sum()
    }

    pub fn n_impressions(&self) -> usize {
        self.searches().map(|s| s.impressions.len()).sum()
    }

    pub fn searches(&self) -> impl Iterator<Item = &SearchRecord> {
        self.journeys.iter().flat_map(|j| j.searches.iter())
    }

    pub fn impressions(&self) -> impl Iterator<Item = &ImpressionRecord> {
        self.searches().flat_map(|s| s.impressions.iter())
    }

    pub fn count_label(&self, m: Milestone) -> usize {
        self.impressions().filter(|i| i.labels.get(m)).count()
    }

    /// One header line holding the schema, then one journey per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(
            &mut w,
            &Header {
                schema: self.schema.clone(),
            },
        )?;
        w.write_all(b"\n")?;
        for j in &self.journeys {
            serde_json::to_writer(&mut w, j)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing schema header".into(),
        })?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| Error::Parse {
            line: 1,
            message: format!("schema header: {e}"),
        })?;
        let mut journeys = Vec::new();
        for (i, line) in lines {
            let j: JourneyRecord = serde_json::from_str(&line?).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            journeys.push(j);
        }
        Ok(Self::new(header.schema, journeys))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }
}
