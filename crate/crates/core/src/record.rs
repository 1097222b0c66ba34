//! Per-sample attribution record files (JSON).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Segmentation;
use crate::shapley::{AttributionResult, Method};

pub const RECORD_SCHEMA: &str = "wordshap-attribution/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRecord {
    pub index: usize,
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    pub shapley: f64,
}

/// Everything needed to reproduce and audit one attribution run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub schema: String,
    pub sample_id: String,
    /// Free-text experiment tag.
    pub mode: String,
    pub method: Method,
    pub n: usize,
    pub players: Vec<PlayerRecord>,
    pub budget_multiplier: f64,
    pub budget_total: u64,
    pub phase1_calls: u64,
    pub phase2_calls: u64,
    pub phase1_steps: u64,
    pub phase2_steps: u64,
    pub distinct_calls: u64,
    pub seed: u64,
    pub value_empty: f64,
    pub value_full: f64,
    pub efficiency_gap: f64,
    pub wallclock_s: f64,
}

impl AttributionRecord {
    pub fn new(
        sample_id: &str,
        mode: &str,
        segmentation: &Segmentation,
        result: &AttributionResult,
        budget_multiplier: f64,
        wallclock_s: f64,
    ) -> Result<Self> {
        if segmentation.len() != result.n {
            return Err(Error::Internal(format!(
                "{} segments but {} attributions",
                segmentation.len(),
                result.n
            )));
        }
        let players = segmentation
            .words()
            .iter()
            .zip(&result.shapley)
            .enumerate()
            .map(|(index, (w, &shapley))| PlayerRecord {
                index,
                word: w.text.clone(),
                start_s: w.span.start_s(),
                end_s: w.span.end_s(),
                shapley,
            })
            .collect();
        Ok(Self {
            schema: RECORD_SCHEMA.to_string(),
            sample_id: sample_id.to_string(),
            mode: mode.to_string(),
            method: result.method,
            n: result.n,
            players,
            budget_multiplier,
            budget_total: result.budget_total,
            phase1_calls: result.phase1_calls,
            phase2_calls: result.phase2_calls,
            phase1_steps: result.phase1_steps,
            phase2_steps: result.phase2_steps,
            distinct_calls: result.distinct_calls,
            seed: result.seed,
            value_empty: result.value_empty,
            value_full: result.value_full,
            efficiency_gap: result.efficiency_gap(),
            wallclock_s,
        })
    }

    pub fn shapley(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.shapley).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("attribution record: {e}")))?;
        if rec.schema != RECORD_SCHEMA {
            return Err(Error::Format(format!("unknown record schema {:?}", rec.schema)));
        }
        if rec.players.len() != rec.n {
            return Err(Error::Format(format!("record lists {} players, n = {}", rec.players.len(), rec.n)));
        }
        Ok(rec)
    }

    /// Writes through a temporary sibling and renames, so a killed run never
    /// leaves a partial record behind.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_json()?.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AttributionRecord {
        let seg = Segmentation::uniform(3, 1.5).unwrap();
        let result = AttributionResult {
            shapley: vec![1.0, 2.0, 3.0],
            n: 3,
            method: Method::Exact,
            budget_total: 8,
            phase1_calls: 8,
            phase2_calls: 0,
            phase1_steps: 0,
            phase2_steps: 0,
            distinct_calls: 8,
            seed: 0,
            value_empty: 0.0,
            value_full: 6.0,
        };
        AttributionRecord::new("s1", "word", &seg, &result, 3.0, 0.25).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let rec = sample();
        let back = AttributionRecord::from_json(&rec.to_json().unwrap()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.shapley(), vec![1.0, 2.0, 3.0]);
        assert_eq!(back.players[1].word, "seg1");
        assert_eq!(back.efficiency_gap, 0.0);
    }

    #[test]
    fn save_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.json");
        sample().save(&path).unwrap();
        assert_eq!(AttributionRecord::load(&path).unwrap(), sample());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn rejects_foreign_schema() {
        let text = sample().to_json().unwrap().replace(RECORD_SCHEMA, "other/9");
        assert!(matches!(AttributionRecord::from_json(&text), Err(Error::Format(_))));
    }

    #[test]
    fn length_mismatch_is_internal_error() {
        let seg = Segmentation::uniform(2, 1.0).unwrap();
        let r = AttributionResult {
            shapley: vec![0.0; 3],
            n: 3,
            method: Method::Exact,
            budget_total: 8,
            phase1_calls: 8,
            phase2_calls: 0,
            phase1_steps: 0,
            phase2_steps: 0,
            distinct_calls: 8,
            seed: 0,
            value_empty: 0.0,
            value_full: 0.0,
        };
        assert!(matches!(AttributionRecord::new("x", "m", &seg, &r, 3.0, 0.0), Err(Error::Internal(_))));
    }
}
