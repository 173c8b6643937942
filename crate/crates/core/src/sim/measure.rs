//! Measurement: exact distributions, seeded sampling, histogram export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bitstring, StateVector};
use crate::error::{Error, Result};

/// Shot count above which a warning is attached (device run limit).
pub const SHOT_WARNING: usize = 500;
const PROBABILITY_FLOOR: f64 = 1e-12;

/// Bitstring probabilities, entries below 1e-12 omitted.
pub fn exact_distribution(psi: &StateVector) -> BTreeMap<String, f64> {
    psi.probabilities()
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p >= PROBABILITY_FLOOR)
        .map(|(k, p)| (bitstring(k, psi.qubits()), p))
        .collect()
}

/// Draws `shots` measurements in the computational basis. The same seed
/// always yields the same histogram.
pub fn sample(psi: &StateVector, shots: usize, seed: u64) -> Result<OutcomeHistogram> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be positive".into()));
    }
    let probs = psi.probabilities();
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::InvalidArgument(format!("bad state: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        *counts.entry(dist.sample(&mut rng)).or_insert(0u64) += 1;
    }
    let counts = counts
        .into_iter()
        .map(|(k, c)| (bitstring(k, psi.qubits()), c))
        .collect();
    let mut hist = OutcomeHistogram::from_counts(psi.qubits(), counts)?;
    hist.probabilities = Some(exact_distribution(psi));
    if shots > SHOT_WARNING {
        hist.warnings.push(format!(
            "{shots} shots exceeds the device limit of {SHOT_WARNING} runs per job"
        ));
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeHistogram {
    pub atoms: usize,
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl OutcomeHistogram {
    pub fn from_counts(atoms: usize, counts: BTreeMap<String, u64>) -> Result<Self> {
        if let Some(bad) = counts
            .keys()
            .find(|b| b.len() != atoms || b.chars().any(|c| c != '0' && c != '1'))
        {
            return Err(Error::InvalidArgument(format!(
                "bitstring {bad:?} does not describe {atoms} atoms"
            )));
        }
        Ok(Self {
            atoms,
            shots: counts.values().sum(),
            counts,
            probabilities: None,
            warnings: Vec::new(),
        })
    }

    /// Outcomes by descending count, ties by bitstring.
    pub fn sorted(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(b, c)| (b.as_str(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn frequency(&self, bits: &str) -> f64 {
        self.counts.get(bits).copied().unwrap_or(0) as f64 / self.shots.max(1) as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bitstring", "count", "probability"])?;
        for (b, c) in self.sorted() {
            let p = self.probabilities.as_ref().and_then(|p| p.get(b)).copied().unwrap_or(0.0);
            out.write_record([b.to_string(), c.to_string(), format!("{p:.12e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn save_distribution_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let dist = self.probabilities.clone().unwrap_or_default();
        std::fs::write(path, serde_json::to_string_pretty(&dist)?)?;
        Ok(())
    }
}
