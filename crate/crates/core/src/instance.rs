//! JSON problem instances.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{derive_graph, DeviceSpec, ProblemGraph, Register};

fn default_omega() -> f64 {
    12.0
}

fn default_duration() -> f64 {
    6000.0
}

/// On-disk description of one problem.
///
/// When `adjacency` is absent the graph is derived from geometry at `omega`.
/// `c6` overrides the device interaction coefficient for this instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub positions: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_duration")]
    pub duration_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c6: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl Instance {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn register(&self) -> Result<Register> {
        match &self.labels {
            Some(l) => Register::with_labels(self.positions.clone(), l.clone()),
            None => Register::new(self.positions.clone()),
        }
    }

    /// `base` with this instance's C6 override applied.
    pub fn device(&self, base: &DeviceSpec) -> Result<DeviceSpec> {
        match self.c6 {
            Some(c6) => base.with_c6(c6),
            None => Ok(*base),
        }
    }

    /// The problem graph: explicit adjacency when given, else the unit-disk
    /// graph of the register at `omega`. Weights are attached when present.
    pub fn graph(&self, device: &DeviceSpec) -> Result<ProblemGraph> {
        let graph = match &self.adjacency {
            Some(a) => ProblemGraph::from_adjacency(a)?,
            None => derive_graph(&self.register()?, self.omega, device)?,
        };
        if graph.vertex_count() != self.positions.len() {
            return Err(crate::Error::DimensionMismatch {
                expected: self.positions.len(),
                actual: graph.vertex_count(),
            });
        }
        match &self.weights {
            Some(w) => graph.with_weights(w.clone()),
            None => Ok(graph),
        }
    }

    /// The bundled six-atom example: positions, adjacency and the mock device
    /// whose geometry reproduces that adjacency.
    pub fn six_atom_example() -> Self {
        serde_json::from_str(include_str!("../data/six_atom_example.json"))
            .expect("bundled instance parses")
    }
}
