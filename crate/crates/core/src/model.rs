//! Atom registers, problem graphs and device limits.
//!
//! Units are fixed crate-wide: lengths in µm, angular frequencies (Ω, Δ, V)
//! in rad/µs with ħ = 1, and durations in ns at API boundaries.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar arrangement of atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Register {
    positions: Vec<[f64; 2]>,
    labels: Vec<String>,
}

impl Register {
    /// Builds a register with default labels `q0..qN-1`.
    pub fn new(positions: Vec<[f64; 2]>) -> Result<Self> {
        let labels = (0..positions.len()).map(|i| format!("q{i}")).collect();
        Self::with_labels(positions, labels)
    }

    pub fn with_labels(positions: Vec<[f64; 2]>, labels: Vec<String>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument("register needs at least one atom".into()));
        }
        if labels.len() != positions.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                actual: labels.len(),
            });
        }
        if let Some(p) = positions.iter().find(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite position {p:?}")));
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                if positions[i] == positions[j] {
                    return Err(Error::DegenerateGeometry(i, j));
                }
            }
        }
        Ok(Self { positions, labels })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Returns a copy with every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let positions = self
            .positions
            .iter()
            .map(|p| [p[0] * factor, p[1] * factor])
            .collect();
        Self::with_labels(positions, self.labels.clone())
    }

    /// Reorders atoms so that new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: perm.len(),
            });
        }
        let positions = perm.iter().map(|&k| self.positions[k]).collect();
        let labels = perm.iter().map(|&k| self.labels[k].clone()).collect();
        Self::with_labels(positions, labels)
    }
}

/// An undirected simple graph with optional vertex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemGraph {
    vertex_count: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<bool>,
    weights: Option<Vec<f64>>,
}

impl ProblemGraph {
    pub fn new(vertex_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        let mut adjacency = vec![false; vertex_count * vertex_count];
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop on vertex {a}")));
            }
            for v in [a, b] {
                if v >= vertex_count {
                    return Err(Error::IndexOutOfRange {
                        index: v,
                        len: vertex_count,
                    });
                }
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            set.insert((i, j));
            adjacency[i * vertex_count + j] = true;
            adjacency[j * vertex_count + i] = true;
        }
        Ok(Self {
            vertex_count,
            edges: set,
            adjacency,
            weights: None,
        })
    }

    /// Reads a symmetric 0/1 matrix with a zero diagonal.
    pub fn from_adjacency(matrix: &[Vec<f64>]) -> Result<Self> {
        let n = matrix.len();
        let mut edges = Vec::new();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if x != 0.0 && x != 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency entry ({i},{j}) = {x} is not 0 or 1"
                    )));
                }
                if x != matrix[j][i] {
                    return Err(Error::InvalidArgument(format!(
                        "adjacency is not symmetric at ({i},{j})"
                    )));
                }
                if x == 1.0 && i < j {
                    edges.push((i, j));
                }
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidArgument(format!("self-loop on vertex {i}")));
            }
        }
        Self::new(n, edges)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.vertex_count {
            return Err(Error::DimensionMismatch {
                expected: self.vertex_count,
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite weight {w}")));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn without_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.vertex_count + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.vertex_count).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertex_count).filter(move |&j| self.has_edge(i, j))
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    /// `(w_min, w_max)` when weights are present.
    pub fn weight_range(&self) -> Option<(f64, f64)> {
        let w = self.weights.as_ref()?;
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }

    /// Weight of vertex `i`; 1 for unweighted graphs.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.vertex_count)
            .map(|i| {
                (0..self.vertex_count)
                    .map(|j| if self.has_edge(i, j) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Relabels vertices so that new vertex `k` is old vertex `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.vertex_count;
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: perm.len(),
            });
        }
        let mut inverse = vec![0; n];
        for (k, &old) in perm.iter().enumerate() {
            inverse[old] = k;
        }
        let g = Self::new(n, self.edges().map(|(a, b)| (inverse[a], inverse[b])))?;
        match &self.weights {
            Some(w) => g.with_weights(perm.iter().map(|&k| w[k]).collect()),
            None => Ok(g),
        }
    }
}

/// Hardware limits of the target processor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub max_atoms: usize,
    /// µm from the origin.
    pub confinement_radius: f64,
    /// µm between any two atoms.
    pub min_distance: f64,
    /// rad/µs · µm⁶
    pub c6: f64,
    /// ns
    pub max_duration: f64,
    pub max_runs: usize,
    /// rad/µs
    pub max_abs_detuning: f64,
    /// rad/µs
    pub max_rabi: f64,
}

/// Interaction coefficient of the Rydberg level used by the emulator's mock
/// device (n = 70). The bundled six-atom example uses it.
pub const MOCK_DEVICE_C6: f64 = 5_420_158.53;

impl Default for DeviceSpec {
    fn default() -> Self {
        Self {
            max_atoms: 80,
            confinement_radius: 38.0,
            min_distance: 5.0,
            c6: 865_723.02,
            max_duration: 6000.0,
            max_runs: 500,
            max_abs_detuning: 48.6947,
            max_rabi: 12.5664,
        }
    }
}

impl DeviceSpec {
    pub fn with_c6(self, c6: f64) -> Result<Self> {
        Self { c6, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let positive = [
            ("max_atoms", self.max_atoms as f64),
            ("confinement_radius", self.confinement_radius),
            ("min_distance", self.min_distance),
            ("c6", self.c6),
            ("max_duration", self.max_duration),
            ("max_runs", self.max_runs as f64),
            ("max_abs_detuning", self.max_abs_detuning),
            ("max_rabi", self.max_rabi),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "device bound {name} must be positive, got {v}"
                )));
            }
        }
        Ok(self)
    }
}

/// Pairwise van der Waals couplings `V_ij = C6 / d_ij⁶`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl InteractionMatrix {
    /// Builds a matrix from raw entries. Used by tests and for externally
    /// supplied couplings; enforces symmetry, zero diagonal and positivity.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                let ok = if i == j { v == 0.0 } else { v > 0.0 && v.is_finite() && v == rows[j][i] };
                if !ok {
                    return Err(Error::InvalidArgument(format!(
                        "invalid interaction entry ({i},{j}) = {v}"
                    )));
                }
                data.push(v);
            }
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Blockade radius `(C6/Ω)^(1/6)` in µm.
pub fn blockade_radius(omega: f64, device: &DeviceSpec) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Rabi frequency must be positive, got {omega}"
        )));
    }
    Ok((device.c6 / omega).powf(1.0 / 6.0))
}

pub fn interaction_matrix(register: &Register, device: &DeviceSpec) -> Result<InteractionMatrix> {
    let n = register.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = register.distance(i, j);
            if d == 0.0 {
                return Err(Error::DegenerateGeometry(i, j));
            }
            let v = device.c6 / d.powi(6);
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(InteractionMatrix { n, data })
}

/// Unit-disk graph at Rabi frequency `omega`: an edge joins atoms strictly
/// closer than the blockade radius.
pub fn derive_graph(register: &Register, omega: f64, device: &DeviceSpec) -> Result<ProblemGraph> {
    if omega > device.max_rabi {
        return Err(Error::ConstraintViolation(vec![Violation {
            rule: Rule::MaxRabi,
            atoms: vec![],
            value: omega,
            limit: device.max_rabi,
        }]));
    }
    let rb = blockade_radius(omega, device)?;
    let n = register.len();
    let edges = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| register.distance(i, j) < rb);
    ProblemGraph::new(n, edges)
}

/// Which device rule a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MaxAtoms,
    ConfinementRadius,
    MinDistance,
    MaxDuration,
    MaxAbsDetuning,
    MaxRabi,
    /// The DMM modulator must never be positive.
    DmmSign,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::MaxAtoms => "max_atoms",
            Rule::ConfinementRadius => "confinement_radius",
            Rule::MinDistance => "min_distance",
            Rule::MaxDuration => "max_duration",
            Rule::MaxAbsDetuning => "max_abs_detuning",
            Rule::MaxRabi => "max_rabi",
            Rule::DmmSign => "dmm_sign",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    /// Offending atom indices; empty for sequence-wide rules.
    pub atoms: Vec<usize>,
    pub value: f64,
    pub limit: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: value {} vs limit {}", self.rule, self.value, self.limit)?;
        if !self.atoms.is_empty() {
            write!(f, " (atoms {:?})", self.atoms)?;
        }
        Ok(())
    }
}

/// Checks atom count, confinement and spacing. Boundary values pass.
pub fn validate_register(register: &Register, device: &DeviceSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if register.len() > device.max_atoms {
        out.push(Violation {
            rule: Rule::MaxAtoms,
            atoms: vec![],
            value: register.len() as f64,
            limit: device.max_atoms as f64,
        });
    }
    for (i, p) in register.positions().iter().enumerate() {
        let r = p[0].hypot(p[1]);
        if r > device.confinement_radius {
            out.push(Violation {
                rule: Rule::ConfinementRadius,
                atoms: vec![i],
                value: r,
                limit: device.confinement_radius,
            });
        }
    }
    for i in 0..register.len() {
        for j in (i + 1)..register.len() {
            let d = register.distance(i, j);
            if d < device.min_distance {
                out.push(Violation {
                    rule: Rule::MinDistance,
                    atoms: vec![i, j],
                    value: d,
                    limit: device.min_distance,
                });
            }
        }
    }
    out
}
