//! End-to-end experiments: configuration, the solve pipeline, success
//! metrics, method comparison and random instance generation.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detuning::{
    baseline_detunings, clamp_to_device, dmm_parameters, dmm_parameters_mwis, force_node, global_detuning,
    local_detunings_mis, local_detunings_mwis, DetuningPlan, DmmPolicy, Force, GlobalDetuning, InterpolationSpec,
    Method, DEFAULT_MARGIN, DEFAULT_RHO, DEFAULT_TAU,
};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{blockade_radius, interaction_matrix, validate_register, DeviceSpec, ProblemGraph, Register, Violation};
use crate::oracle::{is_independent_set, mis_exact, mwis_exact, set_weight, weights_equal, SolveResult};
use crate::schedule::{build_dmm_sequence, build_global_sequence, build_local_sequence, PulseSequence};
use crate::sim::{active_atoms, evolve, sample, Integrator, OutcomeHistogram, StateVector, StepPolicy, DEFAULT_MAX_QUBITS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: Option<PathBuf>,
    pub method: Method,
    pub dmm_policy: DmmPolicy,
    pub tau: f64,
    pub rho: f64,
    /// Baseline safety margin over the largest unconnected coupling.
    pub margin: f64,
    /// Peak Rabi frequency (rad/µs); the instance's `omega` when unset.
    pub omega_max: Option<f64>,
    /// Sequence length; the instance's `duration_ns` when unset.
    pub duration_ns: Option<f64>,
    pub shots: usize,
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    /// Pinned atoms (local method only).
    pub force: BTreeMap<usize, Force>,
    /// Run even if the register breaks device bounds.
    pub allow_invalid_register: bool,
    /// Enforce the device's per-job run cap on `shots`.
    pub hardware_fidelity: bool,
    pub max_dt_ns: f64,
    pub max_qubits: usize,
    pub top_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let interp = InterpolationSpec::default();
        Self {
            instance: None,
            method: Method::Local,
            dmm_policy: DmmPolicy::Intent,
            tau: DEFAULT_TAU,
            rho: DEFAULT_RHO,
            margin: DEFAULT_MARGIN,
            omega_max: None,
            duration_ns: None,
            shots: 1000,
            seed: 0,
            lo: interp.lo,
            hi: interp.hi,
            force: BTreeMap::new(),
            allow_invalid_register: false,
            hardware_fidelity: false,
            max_dt_ns: StepPolicy::default().max_dt_ns,
            max_qubits: DEFAULT_MAX_QUBITS,
            top_k: 8,
        }
    }
}

impl ExperimentConfig {
    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }

    fn check(&self, device: &DeviceSpec) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.rho > 0.0) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if !(self.margin >= 0.0) {
            return bad(format!("margin must be non-negative, got {}", self.margin));
        }
        if self.shots == 0 {
            return bad("shots must be positive".into());
        }
        if self.hardware_fidelity && self.shots > device.max_runs {
            return bad(format!(
                "{} shots exceeds the device limit of {} runs",
                self.shots, device.max_runs
            ));
        }
        if !(self.max_dt_ns > 0.0) {
            return bad(format!("max_dt_ns must be positive, got {}", self.max_dt_ns));
        }
        if !self.force.is_empty() && self.method != Method::Local {
            return Err(Error::Unsupported(format!("forced atoms with the {} method", self.method)));
        }
        InterpolationSpec::new(self.lo, self.hi)?;
        Ok(())
    }
}

/// Fraction of shots that are independent sets of maximum size.
pub fn success_probability_mis(hist: &OutcomeHistogram, graph: &ProblemGraph, oracle: &SolveResult) -> f64 {
    shot_mass(hist, |bits| {
        let set = active_atoms(bits);
        set.len() as f64 == oracle.optimum_value && independent(graph, &set)
    })
}

/// Fraction of shots that are independent sets of optimal weight.
pub fn success_probability_mwis(hist: &OutcomeHistogram, graph: &ProblemGraph, oracle: &SolveResult) -> f64 {
    shot_mass(hist, |bits| {
        let set = active_atoms(bits);
        independent(graph, &set) && weights_equal(set_weight(graph, &set), oracle.optimum_value)
    })
}

/// Shot-weighted mean of `w(S)/w*` over valid independent sets; absent when
/// no shot is valid.
pub fn optimality_ratio(hist: &OutcomeHistogram, graph: &ProblemGraph, oracle: &SolveResult) -> Option<f64> {
    ratio_mean(hist, graph, oracle, |c| c as f64)
}

/// As [`optimality_ratio`] but each distinct valid bitstring counts once.
pub fn optimality_ratio_distinct(hist: &OutcomeHistogram, graph: &ProblemGraph, oracle: &SolveResult) -> Option<f64> {
    ratio_mean(hist, graph, oracle, |_| 1.0)
}

/// Exact probability of landing on an optimal solution.
pub fn exact_success_probability(dist: &BTreeMap<String, f64>, graph: &ProblemGraph, oracle: &SolveResult) -> f64 {
    dist.iter()
        .filter(|(bits, _)| {
            let set = active_atoms(bits);
            independent(graph, &set) && weights_equal(set_weight(graph, &set), oracle.optimum_value)
        })
        .map(|(_, p)| p)
        .sum()
}

fn independent(graph: &ProblemGraph, set: &[usize]) -> bool {
    is_independent_set(graph, set).unwrap_or(false)
}

fn shot_mass(hist: &OutcomeHistogram, hit: impl Fn(&str) -> bool) -> f64 {
    if hist.shots == 0 {
        return 0.0;
    }
    let hits: u64 = hist.counts.iter().filter(|(b, _)| hit(b)).map(|(_, c)| c).sum();
    hits as f64 / hist.shots as f64
}

fn ratio_mean(
    hist: &OutcomeHistogram,
    graph: &ProblemGraph,
    oracle: &SolveResult,
    weight_of: impl Fn(u64) -> f64,
) -> Option<f64> {
    if !(oracle.optimum_value > 0.0) {
        return None;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (bits, &count) in &hist.counts {
        let set = active_atoms(bits);
        if count > 0 && independent(graph, &set) {
            let w = weight_of(count);
            num += w * set_weight(graph, &set) / oracle.optimum_value;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub optimum: f64,
    pub sets: Vec<Vec<usize>>,
    pub complete: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub success_probability: Option<f64>,
    pub exact_success_probability: Option<f64>,
    pub optimality_ratio: Option<f64>,
    pub optimality_ratio_distinct: Option<f64>,
    /// Fraction of shots that are independent sets at all.
    pub valid_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub bitstring: String,
    pub count: u64,
    pub frequency: f64,
    pub probability: Option<f64>,
    pub independent: bool,
    pub weight: f64,
    pub optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub atoms: usize,
    pub edges: usize,
    pub weighted: bool,
    pub blockade_radius_um: f64,
    pub hilbert_dim: usize,
    pub integrator: Integrator,
    pub max_dt_ns: f64,
    pub final_norm: Option<f64>,
    pub oracle_nodes_explored: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WallClock {
    pub simulation_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub plan: DetuningPlan,
    pub validation: Vec<Violation>,
    pub histogram_file: Option<String>,
    pub oracle: OracleSummary,
    pub metrics: Metrics,
    pub top_outcomes: Vec<Outcome>,
    pub infeasibility: Option<GlobalDetuning>,
    pub warnings: Vec<String>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<WallClock>,
    #[serde(skip)]
    pub histogram: Option<OutcomeHistogram>,
    #[serde(skip)]
    pub sequence: Option<PulseSequence>,
    #[serde(skip)]
    pub graph: Option<ProblemGraph>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the wall-clock block removed; identical across reruns.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_clock = None;
        copy.to_json()
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let path = config
        .instance
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("no instance path given".into()).at("load"))?;
    let inst = Instance::load(path).map_err(|e| e.at("load"))?;
    run_instance(&inst, config)
}

/// Runs the full pipeline on an in-memory instance.
pub fn run_instance(inst: &Instance, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = Instant::now();
    let device = inst.device(&DeviceSpec::default()).map_err(|e| e.at("device"))?;
    config.check(&device).map_err(|e| e.at("config"))?;
    let mut config = config.clone();
    let omega_max = *config.omega_max.get_or_insert(inst.omega);
    let duration_ns = *config.duration_ns.get_or_insert(inst.duration_ns);
    let mut warnings = Vec::new();
    if omega_max != inst.omega {
        warnings.push(format!(
            "graph derived at Ω = {} but driven at Ω = {omega_max}",
            inst.omega
        ));
    }

    let register = inst.register().map_err(|e| e.at("register"))?;
    let validation = validate_register(&register, &device);
    if !validation.is_empty() {
        if !config.allow_invalid_register {
            return Err(Error::ConstraintViolation(validation).at("register"));
        }
        warnings.push(format!("register breaks {} device bound(s); continuing", validation.len()));
    }
    let graph = inst.graph(&device).map_err(|e| e.at("graph"))?;
    let v = interaction_matrix(&register, &device).map_err(|e| e.at("interactions"))?;

    let oracle = if graph.is_weighted() { mwis_exact(&graph) } else { mis_exact(&graph) }.map_err(|e| e.at("oracle"))?;
    let mut diagnostics = Diagnostics {
        atoms: register.len(),
        edges: graph.edge_count(),
        weighted: graph.is_weighted(),
        blockade_radius_um: blockade_radius(inst.omega, &device).map_err(|e| e.at("graph"))?,
        hilbert_dim: 1 << register.len(),
        integrator: Integrator::Magnus4,
        max_dt_ns: config.max_dt_ns,
        final_norm: None,
        oracle_nodes_explored: oracle.node_count_explored,
    };

    let (plan, infeasibility) = detuning_plan(&config, &v, &graph, &device).map_err(|e| e.at("detuning"))?;
    warnings.extend(plan.warnings().iter().cloned());
    let mut report = ExperimentReport {
        config: config.clone(),
        plan,
        validation,
        histogram_file: None,
        oracle: OracleSummary {
            optimum: oracle.optimum_value,
            sets: oracle.optimal_sets.clone(),
            complete: oracle.complete,
        },
        metrics: Metrics::default(),
        top_outcomes: Vec::new(),
        infeasibility,
        warnings,
        diagnostics: diagnostics.clone(),
        wall_clock: None,
        histogram: None,
        sequence: None,
        graph: Some(graph.clone()),
    };
    if report.infeasibility.is_some() {
        report.warnings.push("global detuning infeasible; nothing simulated".into());
        report.wall_clock = Some(WallClock {
            simulation_ms: 0.0,
            total_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        return Ok(report);
    }

    let seq = build_sequence(&register, &report.plan, omega_max, duration_ns, &device).map_err(|e| e.at("schedule"))?;

    let policy = StepPolicy {
        max_dt_ns: config.max_dt_ns,
        max_qubits: config.max_qubits,
        ..StepPolicy::default()
    };
    let sim_start = Instant::now();
    let initial = StateVector::ground(register.len()).map_err(|e| e.at("simulation"))?;
    let psi = evolve(&seq, &v, &initial, &policy).map_err(|e| e.at("simulation"))?;
    let simulation_ms = sim_start.elapsed().as_secs_f64() * 1e3;
    let final_norm = psi.norm();
    if (final_norm - 1.0).abs() > 1e-6 {
        report.warnings.push(format!("final state norm drifted to {final_norm}"));
    }
    diagnostics.final_norm = Some(final_norm);

    let hist = sample(&psi, config.shots, config.seed).map_err(|e| e.at("sampling"))?;
    report.warnings.extend(hist.warnings.iter().cloned());

    let dist = hist.probabilities.clone().unwrap_or_default();
    report.metrics = if graph.is_weighted() {
        Metrics {
            success_probability: Some(success_probability_mwis(&hist, &graph, &oracle)),
            exact_success_probability: Some(exact_success_probability(&dist, &graph, &oracle)),
            optimality_ratio: optimality_ratio(&hist, &graph, &oracle),
            optimality_ratio_distinct: optimality_ratio_distinct(&hist, &graph, &oracle),
            valid_fraction: Some(shot_mass(&hist, |b| independent(&graph, &active_atoms(b)))),
        }
    } else {
        Metrics {
            success_probability: Some(success_probability_mis(&hist, &graph, &oracle)),
            exact_success_probability: Some(exact_success_probability(&dist, &graph, &oracle)),
            optimality_ratio: None,
            optimality_ratio_distinct: None,
            valid_fraction: Some(shot_mass(&hist, |b| independent(&graph, &active_atoms(b)))),
        }
    };
    report.top_outcomes = hist
        .sorted()
        .into_iter()
        .take(config.top_k)
        .map(|(bits, count)| {
            let set = active_atoms(bits);
            let ok = independent(&graph, &set);
            let weight = set_weight(&graph, &set);
            Outcome {
                bitstring: bits.to_string(),
                count,
                frequency: hist.frequency(bits),
                probability: dist.get(bits).copied(),
                independent: ok,
                weight,
                optimal: ok && weights_equal(weight, oracle.optimum_value),
            }
        })
        .collect();
    report.diagnostics = diagnostics;
    report.histogram = Some(hist);
    report.sequence = Some(seq);
    report.wall_clock = Some(WallClock {
        simulation_ms,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    });
    Ok(report)
}

fn detuning_plan(
    config: &ExperimentConfig,
    v: &crate::model::InteractionMatrix,
    graph: &ProblemGraph,
    device: &DeviceSpec,
) -> Result<(DetuningPlan, Option<GlobalDetuning>)> {
    let weighted = graph.is_weighted();
    let spec = InterpolationSpec::new(config.lo, config.hi)?;
    if weighted && matches!(config.method, Method::Baseline | Method::Global) {
        return Err(Error::Unsupported(format!(
            "the {} method on a weighted instance",
            config.method
        )));
    }
    let plan = match config.method {
        Method::Baseline => baseline_detunings(v, graph, config.margin)?,
        Method::Local if weighted => local_detunings_mwis(v, graph, spec)?,
        _ => local_detunings_mis(v, graph, config.tau)?,
    };
    let plan = config
        .force
        .iter()
        .try_fold(plan, |p, (&atom, &f)| force_node(&p, atom, Some(f)))?;
    let (plan, _) = clamp_to_device(&plan, device);
    match config.method {
        Method::Dmm => {
            let plan = match graph.weights() {
                Some(w) => dmm_parameters_mwis(&plan, w, spec, config.dmm_policy)?,
                None => dmm_parameters(&plan, config.dmm_policy)?,
            };
            Ok((plan, None))
        }
        Method::Global => match global_detuning(&plan, config.rho)? {
            GlobalDetuning::Feasible { delta, .. } => Ok((plan.with_global(delta, config.rho), None)),
            infeasible => Ok((plan, Some(infeasible))),
        },
        _ => Ok((plan, None)),
    }
}

fn build_sequence(
    register: &Register,
    plan: &DetuningPlan,
    omega_max: f64,
    duration_ns: f64,
    device: &DeviceSpec,
) -> Result<PulseSequence> {
    match plan.method() {
        Method::Baseline | Method::Local => build_local_sequence(register, plan, omega_max, duration_ns, device),
        Method::Dmm => build_dmm_sequence(register, plan, omega_max, duration_ns, device),
        Method::Global => {
            let delta = plan
                .global_delta()
                .ok_or_else(|| Error::DegeneratePlan("global plan without a detuning".into()))?;
            build_global_sequence(register, delta, omega_max, duration_ns, device)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    Infeasible,
    Unsupported,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub status: RowStatus,
    pub success_probability: Option<f64>,
    pub exact_success_probability: Option<f64>,
    pub optimality_ratio: Option<f64>,
    pub message: Option<String>,
    #[serde(skip)]
    pub report: Option<ExperimentReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub seed: u64,
    pub shots: usize,
    pub rows: Vec<ComparisonRow>,
}

/// Runs every method with the same seed. Rows come back in the order of
/// `methods`; a failing method fills its own row and nothing else.
pub fn compare_methods(inst: &Instance, config: &ExperimentConfig, methods: &[Method]) -> Comparison {
    let rows = methods
        .par_iter()
        .map(|&m| {
            let mut cfg = config.with_method(m);
            if m != Method::Local {
                cfg.force.clear();
            }
            match run_instance(inst, &cfg) {
                Ok(report) => ComparisonRow {
                    method: m,
                    status: if report.infeasibility.is_some() { RowStatus::Infeasible } else { RowStatus::Ok },
                    success_probability: report.metrics.success_probability,
                    exact_success_probability: report.metrics.exact_success_probability,
                    optimality_ratio: report.metrics.optimality_ratio,
                    message: report
                        .infeasibility
                        .as_ref()
                        .map(|g| format!("detuning spread {:.4} ≥ ρ = {}", g.spread(), cfg.rho)),
                    report: Some(report),
                },
                Err(e) => {
                    let unsupported = matches!(&e, Error::Stage { source, .. } if matches!(**source, Error::Unsupported(_)));
                    ComparisonRow {
                        method: m,
                        status: if unsupported { RowStatus::Unsupported } else { RowStatus::Failed },
                        success_probability: None,
                        exact_success_probability: None,
                        optimality_ratio: None,
                        message: Some(e.to_string()),
                        report: None,
                    }
                }
            }
        })
        .collect();
    Comparison {
        seed: config.seed,
        shots: config.shots,
        rows,
    }
}

const PLACEMENT_ATTEMPTS: usize = 10_000;
const PLACEMENT_RESTARTS: usize = 50;

/// Random register inside the confinement disk.
///
/// `density` in (0, 1] is roughly the edge probability: atoms are drawn in a
/// disk of radius `R_b / √density`, widened if `n` atoms would not fit at the
/// minimum spacing and capped by the confinement radius.
pub fn generate_instance(
    n: usize,
    density: f64,
    weighted: bool,
    seed: u64,
    device: &DeviceSpec,
    omega: f64,
) -> Result<Instance> {
    if n == 0 || n > device.max_atoms {
        return Err(Error::Capacity {
            what: "atoms",
            requested: n,
            limit: device.max_atoms,
        });
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density must lie in (0, 1], got {density}")));
    }
    let rb = blockade_radius(omega, device)?;
    // Centres of n hard disks of diameter `min_distance` jam around 40 % area
    // coverage; stay below that so rejection sampling terminates quickly.
    let packing = 0.5 * device.min_distance * (n as f64 / 0.4).sqrt();
    let radius = (rb / density.sqrt()).max(packing).min(device.confinement_radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'restart: for _ in 0..PLACEMENT_RESTARTS {
        let mut pos: Vec<[f64; 2]> = Vec::with_capacity(n);
        while pos.len() < n {
            let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
                let r = radius * rng.gen::<f64>().sqrt();
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let p = [r * phi.cos(), r * phi.sin()];
                let clear = pos.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= device.min_distance);
                clear.then_some(p)
            });
            match placed {
                Some(p) => pos.push(p),
                None => continue 'restart,
            }
        }
        let weights = weighted.then(|| (0..n).map(|_| rng.gen_range(0.1..=1.0)).collect());
        let inst = Instance {
            positions: pos,
            adjacency: None,
            weights,
            omega,
            duration_ns: device.max_duration,
            c6: (device.c6 != DeviceSpec::default().c6).then_some(device.c6),
            labels: None,
        };
        if validate_register(&inst.register()?, device).is_empty() {
            return Ok(inst);
        }
    }
    Err(Error::Capacity {
        what: "atom placement attempts",
        requested: PLACEMENT_RESTARTS * PLACEMENT_ATTEMPTS,
        limit: PLACEMENT_RESTARTS * PLACEMENT_ATTEMPTS,
    })
}
