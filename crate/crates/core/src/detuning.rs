//! Per-atom detuning targets.
//!
//! Four ways to pick the final detuning `Δ_i` of every atom:
//!
//! * **baseline**: `(1 + margin)` times the strongest coupling to an
//!   unconnected atom, the usual lower bound from the literature;
//! * **local**: the sum of all couplings to unconnected atoms plus a
//!   fraction `τ` of the weakest coupling to a neighbor. The fraction can be
//!   interpolated from vertex weights for MWIS;
//! * **dmm**: the local targets re-expressed as modulation factors `ε_i` of a
//!   shared negative modulator on top of a global sweep;
//! * **global**: a single detuning (mean of the local targets), admissible
//!   only when the targets are close to one another.
//!
//! Atoms with no neighbor get a zero connected term and atoms with no
//! unconnected partner a zero unconnected sum.

use std::fmt;

use serde::ser::{Serialize, SerializeStruct, Serializer};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{DeviceSpec, InteractionMatrix, ProblemGraph};

pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_MARGIN: f64 = 0.05;
pub const DEFAULT_RHO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Local,
    Dmm,
    Global,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Local, Method::Dmm, Method::Global, Method::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Local => "local",
            Method::Dmm => "dmm",
            Method::Global => "global",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "local" => Ok(Method::Local),
            "dmm" => Ok(Method::Dmm),
            "global" => Ok(Method::Global),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// How local targets are turned into DMM factors.
///
/// `Literal` is `ε_i = Δ_i/Δ_max`. Under the sweep `Δ: −Δ_max → Δ_max`,
/// `Δ_DMM: 0 → −Δ_max` that lands atom `i` on `Δ_max − Δ_i`. `Intent` uses
/// `ε_i = 1 − Δ_i/Δ_max` so the final effective detuning is `Δ_i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmmPolicy {
    Literal,
    #[default]
    Intent,
}

impl std::str::FromStr for DmmPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(DmmPolicy::Literal),
            "intent" => Ok(DmmPolicy::Intent),
            other => Err(Error::InvalidArgument(format!("unknown DMM policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Force {
    Activate,
    Deactivate,
}

impl Force {
    fn tau(self) -> f64 {
        match self {
            Force::Activate => 1.0,
            Force::Deactivate => 0.0,
        }
    }
}

/// Target interval of the weight-to-τ map.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, Deserialize)]
pub struct InterpolationSpec {
    pub lo: f64,
    pub hi: f64,
}

impl Default for InterpolationSpec {
    fn default() -> Self {
        Self { lo: 0.1, hi: 0.9 }
    }
}

impl InterpolationSpec {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        Self { lo, hi }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(0.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "interpolation interval [{}, {}] must satisfy 0 <= lo < hi <= 1",
                self.lo, self.hi
            )));
        }
        Ok(self)
    }
}

/// Maps `w ∈ [w_min, w_max]` linearly onto `[spec.lo, spec.hi]`; the
/// midpoint of the interval when all weights coincide.
pub fn linear_interpolate(w: f64, spec: InterpolationSpec, w_max: f64, w_min: f64) -> Result<f64> {
    if !(w_min <= w && w <= w_max) {
        return Err(Error::InvalidArgument(format!(
            "weight {w} outside [{w_min}, {w_max}]"
        )));
    }
    if w_max == w_min {
        return Ok(0.5 * (spec.lo + spec.hi));
    }
    // Convex form so both endpoints come out exact.
    let t = (w - w_min) / (w_max - w_min);
    Ok(spec.lo * (1.0 - t) + spec.hi * t)
}

/// Per-atom aggregates of the interaction matrix split along the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSplit {
    /// `Σ_{j ∉ N(i), j ≠ i} V_ij`
    pub unconnected_sum: Vec<f64>,
    /// `max_{j ∉ N(i), j ≠ i} V_ij`, 0 when there is none.
    pub max_unconnected: Vec<f64>,
    /// `min_{j ∈ N(i)} V_ij`, 0 for isolated vertices.
    pub min_connected: Vec<f64>,
    /// Number of ordered pairs inspected.
    pub pair_visits: usize,
}

pub fn split_interactions(v: &InteractionMatrix, graph: &ProblemGraph) -> Result<InteractionSplit> {
    let n = graph.vertex_count();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: v.len(),
        });
    }
    let mut split = InteractionSplit {
        unconnected_sum: vec![0.0; n],
        max_unconnected: vec![0.0; n],
        min_connected: vec![0.0; n],
        pair_visits: 0,
    };
    for i in 0..n {
        let mut min_conn = f64::INFINITY;
        for (j, &vij) in v.row(i).iter().enumerate() {
            if j == i {
                continue;
            }
            split.pair_visits += 1;
            if graph.has_edge(i, j) {
                min_conn = min_conn.min(vij);
            } else {
                split.unconnected_sum[i] += vij;
                split.max_unconnected[i] = split.max_unconnected[i].max(vij);
            }
        }
        if min_conn.is_finite() {
            split.min_connected[i] = min_conn;
        }
    }
    Ok(split)
}

/// Final detuning targets for one method, with the parameters that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningPlan {
    method: Method,
    detunings: Vec<f64>,
    split: Option<InteractionSplit>,
    base_tau: Option<Vec<f64>>,
    tau_is_scalar: bool,
    forced: Vec<Option<Force>>,
    epsilon: Option<Vec<f64>>,
    dmm_policy: Option<DmmPolicy>,
    global_delta: Option<f64>,
    rho: Option<f64>,
    warnings: Vec<String>,
}

impl DetuningPlan {
    /// A plan from explicit targets, for hand-built schedules.
    pub fn from_detunings(method: Method, detunings: Vec<f64>) -> Result<Self> {
        if let Some(d) = detunings.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "detuning targets must be finite and non-negative, got {d}"
            )));
        }
        let n = detunings.len();
        Ok(Self {
            method,
            detunings,
            split: None,
            base_tau: None,
            tau_is_scalar: false,
            forced: vec![None; n],
            epsilon: None,
            dmm_policy: None,
            global_delta: None,
            rho: None,
            warnings: Vec::new(),
        })
    }

    fn from_split(split: InteractionSplit, tau: Vec<f64>, tau_is_scalar: bool) -> Self {
        let n = tau.len();
        let mut plan = Self {
            method: Method::Local,
            detunings: vec![0.0; n],
            split: Some(split),
            base_tau: Some(tau),
            tau_is_scalar,
            forced: vec![None; n],
            epsilon: None,
            dmm_policy: None,
            global_delta: None,
            rho: None,
            warnings: Vec::new(),
        };
        for i in 0..n {
            plan.detunings[i] = plan.local_target(i);
        }
        plan
    }

    fn local_target(&self, i: usize) -> f64 {
        let split = self.split.as_ref().expect("local plan keeps its split");
        split.unconnected_sum[i] + split.min_connected[i] * self.effective_tau(i)
    }

    fn effective_tau(&self, i: usize) -> f64 {
        match self.forced[i] {
            Some(f) => f.tau(),
            None => self.base_tau.as_ref().map_or(0.0, |t| t[i]),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    /// `max_i Δ_i` (0 for an empty plan).
    pub fn delta_max(&self) -> f64 {
        self.detunings.iter().copied().fold(0.0, f64::max)
    }

    /// Effective `τ_i` per atom, after forcing.
    pub fn tau(&self) -> Option<Vec<f64>> {
        self.base_tau
            .as_ref()
            .map(|_| (0..self.len()).map(|i| self.effective_tau(i)).collect())
    }

    pub fn forced(&self) -> &[Option<Force>] {
        &self.forced
    }

    pub fn epsilon(&self) -> Option<&[f64]> {
        self.epsilon.as_deref()
    }

    pub fn dmm_policy(&self) -> Option<DmmPolicy> {
        self.dmm_policy
    }

    pub fn global_delta(&self) -> Option<f64> {
        self.global_delta
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn split(&self) -> Option<&InteractionSplit> {
        self.split.as_ref()
    }

    /// Marks the plan as a global-detuning plan with the given shared value.
    pub fn with_global(mut self, delta: f64, rho: f64) -> Self {
        self.method = Method::Global;
        self.global_delta = Some(delta);
        self.rho = Some(rho);
        self
    }

    pub fn push_warning(&mut self, warning: String) {
        self.warnings.push(warning);
    }
}

impl Serialize for DetuningPlan {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(serde::Serialize)]
        #[serde(untagged)]
        enum TauJson {
            Scalar(f64),
            PerAtom(Vec<f64>),
        }
        let tau = self.tau().map(|t| {
            if self.tau_is_scalar && self.forced.iter().all(Option::is_none) {
                TauJson::Scalar(t.first().copied().unwrap_or(0.0))
            } else {
                TauJson::PerAtom(t)
            }
        });
        let mut s = serializer.serialize_struct("DetuningPlan", 9)?;
        s.serialize_field("method", &self.method)?;
        s.serialize_field("tau", &tau)?;
        s.serialize_field("detunings", &self.detunings)?;
        s.serialize_field("epsilon", &self.epsilon)?;
        s.serialize_field("dmm_policy", &self.dmm_policy)?;
        s.serialize_field("delta_max", &self.delta_max())?;
        s.serialize_field("global_delta", &self.global_delta)?;
        s.serialize_field("rho", &self.rho)?;
        s.serialize_field("warnings", &self.warnings)?;
        s.end()
    }
}

/// Prior-art rule: `Δ_i = (1 + margin) · max_{j ∉ N(i)} V_ij`.
pub fn baseline_detunings(v: &InteractionMatrix, graph: &ProblemGraph, margin: f64) -> Result<DetuningPlan> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("margin must be positive, got {margin}")));
    }
    let split = split_interactions(v, graph)?;
    let detunings = split.max_unconnected.iter().map(|m| (1.0 + margin) * m).collect();
    let mut plan = DetuningPlan::from_detunings(Method::Baseline, detunings)?;
    plan.split = Some(split);
    Ok(plan)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    Ok(())
}

/// `Δ_i = Σ_{j ∉ N(i)} V_ij + τ · min_{j ∈ N(i)} V_ij`.
pub fn local_detunings_mis(v: &InteractionMatrix, graph: &ProblemGraph, tau: f64) -> Result<DetuningPlan> {
    check_tau(tau)?;
    let split = split_interactions(v, graph)?;
    let n = graph.vertex_count();
    Ok(DetuningPlan::from_split(split, vec![tau; n], true))
}

/// Local rule with `τ_i` interpolated from the vertex weights.
pub fn local_detunings_mwis(
    v: &InteractionMatrix,
    graph: &ProblemGraph,
    spec: InterpolationSpec,
) -> Result<DetuningPlan> {
    let spec = spec.validated()?;
    let tau = weight_factors(graph, spec)?;
    let split = split_interactions(v, graph)?;
    Ok(DetuningPlan::from_split(split, tau, false))
}

fn weight_factors(graph: &ProblemGraph, spec: InterpolationSpec) -> Result<Vec<f64>> {
    let weights = graph
        .weights()
        .ok_or_else(|| Error::InvalidArgument("graph has no vertex weights".into()))?;
    let (w_min, w_max) = graph.weight_range().expect("weights present");
    weights
        .iter()
        .map(|&w| linear_interpolate(w, spec, w_max, w_min))
        .collect()
}

/// Pins atom `atom` to `τ = 1` (activate) or `τ = 0` (deactivate), or
/// releases a previous pin when `mode` is `None`.
pub fn force_node(plan: &DetuningPlan, atom: usize, mode: Option<Force>) -> Result<DetuningPlan> {
    if atom >= plan.len() {
        return Err(Error::IndexOutOfRange {
            index: atom,
            len: plan.len(),
        });
    }
    if plan.method != Method::Local || plan.base_tau.is_none() {
        return Err(Error::Unsupported(format!(
            "forcing needs a local plan, got {}",
            plan.method
        )));
    }
    let mut out = plan.clone();
    out.forced[atom] = mode;
    out.detunings[atom] = out.local_target(atom);
    Ok(out)
}

fn dmm_factor(ratio: f64, policy: DmmPolicy) -> f64 {
    let e = match policy {
        DmmPolicy::Literal => ratio,
        DmmPolicy::Intent => 1.0 - ratio,
    };
    e.clamp(0.0, 1.0)
}

fn dmm_with_bias(plan: &DetuningPlan, bias: Option<&[f64]>, policy: DmmPolicy) -> Result<DetuningPlan> {
    let delta_max = plan.delta_max();
    if !(delta_max > 0.0) {
        return Err(Error::DegeneratePlan("all detuning targets are zero".into()));
    }
    let epsilon = plan
        .detunings
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let ratio = d / delta_max * bias.map_or(1.0, |b| b[i]);
            dmm_factor(ratio, policy)
        })
        .collect();
    let mut out = plan.clone();
    out.method = Method::Dmm;
    out.epsilon = Some(epsilon);
    out.dmm_policy = Some(policy);
    Ok(out)
}

/// Modulation factors for the shared DMM waveform.
pub fn dmm_parameters(plan: &DetuningPlan, policy: DmmPolicy) -> Result<DetuningPlan> {
    dmm_with_bias(plan, None, policy)
}

/// DMM factors with the weight-dependent bias `L(w_i)` multiplied in before
/// the policy is applied.
pub fn dmm_parameters_mwis(
    plan: &DetuningPlan,
    weights: &[f64],
    spec: InterpolationSpec,
    policy: DmmPolicy,
) -> Result<DetuningPlan> {
    let spec = spec.validated()?;
    if weights.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            actual: weights.len(),
        });
    }
    let w_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let w_max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bias = weights
        .iter()
        .map(|&w| linear_interpolate(w, spec, w_max, w_min))
        .collect::<Result<Vec<_>>>()?;
    dmm_with_bias(plan, Some(&bias), policy)
}

/// Result of the global-detuning admissibility check.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GlobalDetuning {
    Feasible {
        delta: f64,
        spread: f64,
    },
    Infeasible {
        /// The pair with the largest normalized difference.
        atoms: (usize, usize),
        spread: f64,
        rho: f64,
    },
}

impl GlobalDetuning {
    pub fn is_feasible(&self) -> bool {
        matches!(self, GlobalDetuning::Feasible { .. })
    }

    pub fn spread(&self) -> f64 {
        match self {
            GlobalDetuning::Feasible { spread, .. } | GlobalDetuning::Infeasible { spread, .. } => *spread,
        }
    }
}

/// Mean of the targets when `|Δ_i − Δ_j| / Δ_max < ρ` for every pair.
pub fn global_detuning(plan: &DetuningPlan, rho: f64) -> Result<GlobalDetuning> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    if plan.is_empty() {
        return Err(Error::DegeneratePlan("empty plan".into()));
    }
    let d = &plan.detunings;
    let (mut lo, mut hi) = (0, 0);
    for (i, &x) in d.iter().enumerate() {
        if x < d[lo] {
            lo = i;
        }
        if x > d[hi] {
            hi = i;
        }
    }
    let delta_max = plan.delta_max();
    let spread = if delta_max > 0.0 { (d[hi] - d[lo]) / delta_max } else { 0.0 };
    if spread < rho {
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        Ok(GlobalDetuning::Feasible { delta: mean, spread })
    } else {
        Ok(GlobalDetuning::Infeasible {
            atoms: (lo.min(hi), lo.max(hi)),
            spread,
            rho,
        })
    }
}

/// Caps every target at the device detuning bound, one warning per clamp.
pub fn clamp_to_device(plan: &DetuningPlan, device: &DeviceSpec) -> (DetuningPlan, Vec<String>) {
    let mut out = plan.clone();
    let mut warnings = Vec::new();
    let limit = device.max_abs_detuning;
    for (i, d) in out.detunings.iter_mut().enumerate() {
        if *d > limit {
            warnings.push(format!("atom {i}: detuning {d} clamped to {limit}"));
            *d = limit;
        }
    }
    if let Some(g) = out.global_delta.as_mut() {
        if *g > limit {
            warnings.push(format!("global detuning {g} clamped to {limit}"));
            *g = limit;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    out.warnings.extend(warnings.iter().cloned());
    (out, warnings)
}
