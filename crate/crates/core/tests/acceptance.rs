//! End-to-end acceptance checks. Every criterion prints one PASS/FAIL line.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rydberg_mis::analysis::{generate_instance, run_instance, ExperimentConfig, ExperimentReport};
use rydberg_mis::detuning::{
    baseline_detunings, clamp_to_device, dmm_parameters, dmm_parameters_mwis, global_detuning, local_detunings_mis,
    local_detunings_mwis, DetuningPlan, DmmPolicy, GlobalDetuning, InterpolationSpec, Method,
};
use rydberg_mis::instance::Instance;
use rydberg_mis::model::{
    blockade_radius, derive_graph, interaction_matrix, validate_register, DeviceSpec, ProblemGraph, Register, Rule,
};
use rydberg_mis::oracle::{mis_exact, mis_exhaustive, mwis_exact, qubo_cost};
use rydberg_mis::schedule::{build_local_sequence, validate_sequence, DetuningControl, PulseSequence, Waveform};
use rydberg_mis::sim::{evolve, StateVector, StepPolicy};

fn verdict(id: &str, ok: bool, detail: String) {
    println!("{id} {}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} failed: {detail}");
}

fn star(scale: f64) -> Instance {
    let rb = blockade_radius(12.0, &DeviceSpec::default()).unwrap();
    let r = scale * rb;
    let mut positions = vec![[0.0, 0.0]];
    for k in 0..3 {
        let a = k as f64 * 2.0 * std::f64::consts::PI / 3.0;
        positions.push([r * a.cos(), r * a.sin()]);
    }
    Instance {
        positions,
        adjacency: None,
        weights: None,
        omega: 12.0,
        duration_ns: 6000.0,
        c6: None,
        labels: None,
    }
}

fn top(report: &ExperimentReport) -> &str {
    &report.top_outcomes[0].bitstring
}

#[test]
fn a1_baseline_failure_and_local_fix() {
    let inst = star(1.05);
    let t = Instant::now();
    let base = run_instance(&inst, &ExperimentConfig::default().with_method(Method::Baseline)).unwrap();
    let local = run_instance(&inst, &ExperimentConfig::default().with_method(Method::Local)).unwrap();
    let elapsed = t.elapsed();
    let freq = |r: &ExperimentReport, b: &str| r.histogram.as_ref().unwrap().frequency(b);
    verdict(
        "A1",
        top(&base) == "0111" && top(&local) == "1111" && elapsed < Duration::from_secs(30),
        format!(
            "baseline top {} ({:.3}); local top {} ({:.3}), P(1111) = {:.3}; {:.1?}",
            top(&base),
            freq(&base, top(&base)),
            top(&local),
            freq(&local, top(&local)),
            freq(&local, "1111"),
            elapsed
        ),
    );
}

fn six_atom(method: Method) -> (ExperimentReport, Duration) {
    let t = Instant::now();
    let cfg = ExperimentConfig {
        tau: 0.9,
        shots: 1000,
        ..ExperimentConfig::default().with_method(method)
    };
    let r = run_instance(&Instance::six_atom_example(), &cfg).unwrap();
    (r, t.elapsed())
}

#[test]
fn a2_six_atom_instance() {
    let (r, elapsed) = six_atom(Method::Local);
    let p = r.metrics.success_probability.unwrap();
    let top8_valid = r.top_outcomes.len() == 8 && r.top_outcomes.iter().all(|o| o.independent);
    verdict(
        "A2",
        p >= 0.8 && top8_valid && elapsed < Duration::from_secs(120),
        format!(
            "MIS mass {p:.3} over {} optima (exact {:.4}); top-8 independent: {top8_valid}; {elapsed:.1?}",
            r.oracle.sets.len(),
            r.metrics.exact_success_probability.unwrap()
        ),
    );
}

#[test]
fn a3_dmm_matches_local() {
    let (local, _) = six_atom(Method::Local);
    let (dmm, _) = six_atom(Method::Dmm);
    assert_eq!(dmm.plan.dmm_policy(), Some(DmmPolicy::Intent));
    let (a, b) = (
        local.metrics.success_probability.unwrap(),
        dmm.metrics.success_probability.unwrap(),
    );
    verdict("A3", (a - b).abs() <= 0.1, format!("local {a:.3}, dmm {b:.3}, |Δ| = {:.3}", (a - b).abs()));
}

#[test]
fn a4_global_detuning() {
    let (r, _) = six_atom(Method::Global);
    let p = r.metrics.success_probability.unwrap_or(0.0);
    let spread = r.plan.detunings().iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - r.plan.detunings().iter().copied().fold(f64::INFINITY, f64::min);
    let spread = spread / r.plan.delta_max();

    let far = run_instance(&star(1.05), &ExperimentConfig::default().with_method(Method::Global)).unwrap();
    let infeasible = matches!(far.infeasibility, Some(GlobalDetuning::Infeasible { spread, .. }) if spread > 0.2);
    verdict(
        "A4",
        spread <= 0.2 && r.infeasibility.is_none() && p >= 0.3 && infeasible && far.histogram.is_none(),
        format!(
            "six-atom spread {spread:.4}, global success {p:.3}; star spread {:.3} reported infeasible: {infeasible}",
            far.infeasibility.as_ref().map_or(0.0, |g| g.spread())
        ),
    );
}

#[test]
fn a5_integrator() {
    let v1 = interaction_matrix(&Register::new(vec![[0.0, 0.0]]).unwrap(), &DeviceSpec::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dur = rng.gen_range(20.0..6000.0);
        let seq = PulseSequence::new(
            vec!["q0".into()],
            Waveform::constant(dur, 12.0).unwrap(),
            DetuningControl::Global {
                detuning: Waveform::constant(dur, 0.0).unwrap(),
            },
        )
        .unwrap();
        let psi = evolve(&seq, &v1, &StateVector::ground(1).unwrap(), &StepPolicy::default()).unwrap();
        let want = (12.0 * dur * 1e-3 / 2.0).sin().powi(2);
        worst = worst.max((psi.probabilities()[1] - want).abs());
    }

    let inst = Instance::six_atom_example();
    let dev = inst.device(&DeviceSpec::default()).unwrap();
    let reg = inst.register().unwrap();
    let graph = inst.graph(&dev).unwrap();
    let v = interaction_matrix(&reg, &dev).unwrap();
    let plan = clamp_to_device(&local_detunings_mis(&v, &graph, 0.9).unwrap(), &dev).0;
    let seq = build_local_sequence(&reg, &plan, 12.0, 6000.0, &dev).unwrap();
    let g = StateVector::ground(6).unwrap();
    let coarse = evolve(&seq, &v, &g, &StepPolicy::default()).unwrap();
    let fine = evolve(&seq, &v, &g, &StepPolicy::default().with_dt(StepPolicy::default().max_dt_ns / 2.0)).unwrap();
    let drift = (coarse.norm() - 1.0).abs().max((fine.norm() - 1.0).abs());
    let halving = coarse
        .probabilities()
        .iter()
        .zip(fine.probabilities())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    verdict(
        "A5",
        worst <= 1e-4 && drift <= 1e-6 && halving <= 1e-3,
        format!("Rabi error {worst:.2e}; norm drift {drift:.2e}; dt-halving change {halving:.2e}"),
    );
}

fn pair_final(distance: f64, plan: Option<DetuningPlan>) -> Vec<f64> {
    let dev = DeviceSpec::default();
    let reg = Register::new(vec![[0.0, 0.0], [distance, 0.0]]).unwrap();
    let v = interaction_matrix(&reg, &dev).unwrap();
    let graph = derive_graph(&reg, 12.0, &dev).unwrap();
    let plan = plan.unwrap_or_else(|| local_detunings_mis(&v, &graph, 0.9).unwrap());
    let plan = clamp_to_device(&plan, &dev).0;
    let seq = build_local_sequence(&reg, &plan, 12.0, 6000.0, &dev).unwrap();
    evolve(&seq, &v, &StateVector::ground(2).unwrap(), &StepPolicy::default())
        .unwrap()
        .probabilities()
}

#[test]
fn a6_blockade() {
    let rb = blockade_radius(12.0, &DeviceSpec::default()).unwrap();
    let close = pair_final(0.5 * rb, None);
    // Basis index 3 is |11⟩; atom 0 is bit 0.
    let p11 = close[3];
    let far = pair_final(3.0 * rb, Some(DetuningPlan::from_detunings(Method::Local, vec![20.0, 20.0]).unwrap()));
    let p0 = far[1] + far[3];
    let p1 = far[2] + far[3];
    verdict(
        "A6",
        p11 < 0.05 && p0 > 0.9 && p1 > 0.9,
        format!("0.5·R_b: P(11) = {p11:.2e}; 3·R_b: P(atom 0) = {p0:.4}, P(atom 1) = {p1:.4}"),
    );
}

fn random_graph(rng: &mut ChaCha8Rng) -> ProblemGraph {
    let n = rng.gen_range(1..=12);
    let p = [0.1, 0.3, 0.5, 0.7, 0.9][rng.gen_range(0..5)];
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    ProblemGraph::new(n, edges).unwrap()
}

#[test]
fn a7_oracle_cross_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = Vec::new();
    for k in 0..100 {
        let g = random_graph(&mut rng);
        let n = g.vertex_count();
        let bb = mis_exact(&g).unwrap();
        let ex = mis_exhaustive(&g).unwrap();
        let unit = mwis_exact(&g.clone().with_weights(vec![1.0; n]).unwrap()).unwrap();
        let mut best = f64::INFINITY;
        let mut minimizers = Vec::new();
        for m in 0usize..1 << n {
            let x: Vec<bool> = (0..n).map(|i| m >> i & 1 == 1).collect();
            let c = qubo_cost(&g, &x, 2.0).unwrap();
            if c < best {
                best = c;
                minimizers.clear();
            }
            if c == best {
                minimizers.push((0..n).filter(|&i| x[i]).collect::<Vec<_>>());
            }
        }
        minimizers.sort();
        let ok = bb.optimum_value == ex.optimum_value
            && bb.optimal_sets == ex.optimal_sets
            && unit.optimum_value == bb.optimum_value
            && minimizers == bb.optimal_sets;
        if !ok {
            bad.push(k);
        }
    }
    verdict("A7", bad.is_empty(), format!("100 graphs, disagreements at {bad:?}"));
}

/// Straight-from-formula recomputation of every detuning quantity.
struct Formula {
    v: Vec<Vec<f64>>,
    edge: Vec<Vec<bool>>,
}

impl Formula {
    fn new(positions: &[[f64; 2]], c6: f64, omega: f64) -> Self {
        let rb = (c6 / omega).powf(1.0 / 6.0);
        let n = positions.len();
        let d = |i: usize, j: usize| {
            let (a, b) = (positions[i], positions[j]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        Self {
            v: (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { c6 / d(i, j).powi(6) }).collect()).collect(),
            edge: (0..n).map(|i| (0..n).map(|j| i != j && d(i, j) < rb).collect()).collect(),
        }
    }

    fn unconnected(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.v.len()).filter(move |&j| j != i && !self.edge[i][j]).map(move |j| self.v[i][j])
    }

    fn connected(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.v.len()).filter(move |&j| self.edge[i][j]).map(move |j| self.v[i][j])
    }

    fn baseline(&self, margin: f64) -> Vec<f64> {
        (0..self.v.len())
            .map(|i| (1.0 + margin) * self.unconnected(i).fold(0.0, f64::max))
            .collect()
    }

    fn local(&self, tau: &[f64]) -> Vec<f64> {
        (0..self.v.len())
            .map(|i| {
                let min = self.connected(i).fold(f64::INFINITY, f64::min);
                let min = if min.is_finite() { min } else { 0.0 };
                self.unconnected(i).sum::<f64>() + tau[i] * min
            })
            .collect()
    }
}

fn interp(w: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    w.iter()
        .map(|&x| if max == min { (lo + hi) / 2.0 } else { lo + (hi - lo) * (x - min) / (max - min) })
        .collect()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300))
}

fn formula_cases() -> Vec<(Instance, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut out = Vec::new();
    for k in 0..46u64 {
        let c6 = if k % 2 == 0 { DeviceSpec::default().c6 } else { rydberg_mis::model::MOCK_DEVICE_C6 };
        let dev = DeviceSpec::default().with_c6(c6).unwrap();
        let n = rng.gen_range(2..=10);
        let density = rng.gen_range(0.2..1.0);
        out.push((generate_instance(n, density, true, 1000 + k, &dev, 12.0).unwrap(), c6));
    }
    let base = |positions: Vec<[f64; 2]>, weights: Vec<f64>| Instance {
        positions,
        adjacency: None,
        weights: Some(weights),
        omega: 12.0,
        duration_ns: 6000.0,
        c6: None,
        labels: None,
    };
    let c6 = DeviceSpec::default().c6;
    // Isolated vertex next to an edge.
    out.push((base(vec![[0.0, 0.0], [5.5, 0.0], [30.0, 0.0]], vec![0.2, 0.7, 1.0]), c6));
    // Edgeless register.
    out.push((base(vec![[0.0, 0.0], [12.0, 0.0], [0.0, 12.0], [12.0, 12.0]], vec![0.5; 4]), c6));
    // Complete graph: equilateral triangle inside the blockade radius.
    out.push((base(vec![[0.0, 0.0], [5.5, 0.0], [2.75, 4.763]], vec![0.3, 0.6, 0.9]), c6));
    // Complete graph of four on the mock device.
    let mock = rydberg_mis::model::MOCK_DEVICE_C6;
    let mut k4 = base(vec![[0.0, 0.0], [6.0, 0.0], [0.0, 6.0], [6.0, 6.0]], vec![1.0, 0.1, 0.4, 0.4]);
    k4.c6 = Some(mock);
    out.push((k4, mock));
    out
}

#[test]
fn a8_detuning_formula_exactness() {
    let spec = InterpolationSpec::default();
    let mut failures = Vec::new();
    let cases = formula_cases();
    for (k, (inst, c6)) in cases.iter().enumerate() {
        let dev = inst.device(&DeviceSpec::default()).unwrap();
        let reg = inst.register().unwrap();
        let graph = derive_graph(&reg, 12.0, &dev).unwrap().with_weights(inst.weights.clone().unwrap()).unwrap();
        let v = interaction_matrix(&reg, &dev).unwrap();
        let f = Formula::new(&inst.positions, *c6, 12.0);
        let n = inst.positions.len();
        let w = inst.weights.clone().unwrap();
        let tau_w = interp(&w, 0.1, 0.9);

        let mut check = |name: &str, ok: bool| {
            if !ok {
                failures.push(format!("case {k}: {name}"));
            }
        };
        let edges_ok = (0..n).all(|i| (0..n).all(|j| f.edge[i][j] == graph.has_edge(i, j)));
        check("graph", edges_ok);
        check("baseline", close(baseline_detunings(&v, &graph, 0.05).unwrap().detunings(), &f.baseline(0.05)));

        let local = local_detunings_mis(&v, &graph, 0.9).unwrap();
        let want_local = f.local(&vec![0.9; n]);
        check("local", close(local.detunings(), &want_local));
        let mwis = local_detunings_mwis(&v, &graph, spec).unwrap();
        let want_mwis = f.local(&tau_w);
        check("local mwis", close(mwis.detunings(), &want_mwis));

        let dmax = want_local.iter().copied().fold(0.0, f64::max);
        if dmax > 0.0 {
            let lit: Vec<f64> = want_local.iter().map(|d| (d / dmax).clamp(0.0, 1.0)).collect();
            let int: Vec<f64> = want_local.iter().map(|d| (1.0 - d / dmax).clamp(0.0, 1.0)).collect();
            check("dmm literal", close(dmm_parameters(&local, DmmPolicy::Literal).unwrap().epsilon().unwrap(), &lit));
            check("dmm intent", close(dmm_parameters(&local, DmmPolicy::Intent).unwrap().epsilon().unwrap(), &int));
            let lit_w: Vec<f64> = (0..n).map(|i| (want_local[i] / dmax * tau_w[i]).clamp(0.0, 1.0)).collect();
            let int_w: Vec<f64> = (0..n).map(|i| (1.0 - want_local[i] / dmax * tau_w[i]).clamp(0.0, 1.0)).collect();
            let got = dmm_parameters_mwis(&local, &w, spec, DmmPolicy::Literal).unwrap();
            check("dmm mwis literal", close(got.epsilon().unwrap(), &lit_w));
            let got = dmm_parameters_mwis(&local, &w, spec, DmmPolicy::Intent).unwrap();
            check("dmm mwis intent", close(got.epsilon().unwrap(), &int_w));

            let hi = want_local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = want_local.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = (hi - lo) / dmax;
            let mean = want_local.iter().sum::<f64>() / n as f64;
            match global_detuning(&local, 0.2).unwrap() {
                GlobalDetuning::Feasible { delta, spread: s } => {
                    check("global feasible", spread < 0.2 && close(&[delta, s], &[mean, spread]))
                }
                GlobalDetuning::Infeasible { spread: s, .. } => {
                    check("global infeasible", spread >= 0.2 && close(&[s], &[spread]))
                }
            }
        }
    }
    verdict(
        "A8",
        cases.len() == 50 && failures.is_empty(),
        format!("{} instances, mismatches: {failures:?}", cases.len()),
    );
}

#[test]
fn a9_device_boundaries() {
    let dev = DeviceSpec::default();
    let mut results = Vec::new();
    let mut record = |name: &str, pass_at: bool, fail_past: bool| results.push((name.to_string(), pass_at && fail_past));
    let rules = |reg: &Register| validate_register(reg, &dev).into_iter().map(|v| v.rule).collect::<Vec<_>>();

    let grid = |count: usize| -> Register {
        let pts: Vec<[f64; 2]> = (-7..=7)
            .flat_map(|i| (-7..=7).map(move |j| [5.0 * i as f64, 5.0 * j as f64]))
            .filter(|p| p[0].hypot(p[1]) <= 38.0)
            .take(count)
            .collect();
        assert_eq!(pts.len(), count);
        Register::new(pts).unwrap()
    };
    record("max_atoms 80", rules(&grid(80)).is_empty(), rules(&grid(81)) == vec![Rule::MaxAtoms]);

    let edge = |r: f64| Register::new(vec![[0.0, 0.0], [r, 0.0]]).unwrap();
    record(
        "confinement 38 µm",
        rules(&edge(38.0)).is_empty(),
        rules(&edge(38.0 + 1e-9)) == vec![Rule::ConfinementRadius],
    );
    record("min distance 5 µm", rules(&edge(5.0)).is_empty(), rules(&edge(5.0 - 1e-9)) == vec![Rule::MinDistance]);

    let seq_rules = |dur: f64, omega: f64, delta: f64| {
        let seq = PulseSequence::new(
            vec!["a".into()],
            Waveform::ramp(dur, &[0.0, omega, 0.0]).unwrap(),
            DetuningControl::Global {
                detuning: Waveform::ramp(dur, &[-delta, delta]).unwrap(),
            },
        )
        .unwrap();
        validate_sequence(&seq, &dev).into_iter().map(|v| v.rule).collect::<Vec<_>>()
    };
    record(
        "duration 6000 ns",
        seq_rules(6000.0, 12.0, 10.0).is_empty(),
        seq_rules(6000.0 + 1e-6, 12.0, 10.0) == vec![Rule::MaxDuration],
    );
    record(
        "|Δ| 48.6947",
        seq_rules(1000.0, 12.0, 48.6947).is_empty(),
        seq_rules(1000.0, 12.0, 48.6947 + 1e-9).contains(&Rule::MaxAbsDetuning),
    );
    record(
        "Ω 12.5664",
        seq_rules(1000.0, 12.5664, 10.0).is_empty(),
        seq_rules(1000.0, 12.5664 + 1e-9, 10.0) == vec![Rule::MaxRabi],
    );

    // C6 fixes the blockade radius: an edge exists strictly inside it.
    let rb = (865_723.02f64 / 12.0).powf(1.0 / 6.0);
    let edges_at = |d: f64| derive_graph(&edge(d), 12.0, &dev).unwrap().edge_count();
    record(
        "C6 865723.02",
        dev.c6 == 865_723.02 && edges_at(rb * (1.0 - 1e-9)) == 1,
        edges_at(rb * (1.0 + 1e-9)) == 0,
    );

    let failed: Vec<_> = results.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.clone()).collect();
    verdict("A9", failed.is_empty(), format!("{} constants checked, failing: {failed:?}", results.len()));
}

#[test]
fn a10_mwis_statistics() {
    let dev = DeviceSpec::default();
    let t = Instant::now();
    let (mut ratio, mut success) = (0.0, 0.0);
    let mut rows = Vec::new();
    for k in 0..10u64 {
        let n = 6 + (k as usize % 5);
        let inst = generate_instance(n, 0.5, true, 100 + k, &dev, 12.0).unwrap();
        let cfg = ExperimentConfig {
            seed: k,
            ..ExperimentConfig::default()
        };
        let r = run_instance(&inst, &cfg).unwrap();
        let (q, p) = (r.metrics.optimality_ratio.unwrap_or(0.0), r.metrics.success_probability.unwrap());
        rows.push(format!("{q:.3}/{p:.3}"));
        ratio += q / 10.0;
        success += p / 10.0;
    }
    let elapsed = t.elapsed();
    verdict(
        "A10",
        ratio >= 0.85 && success > 0.0 && elapsed < Duration::from_secs(600),
        format!("mean ratio {ratio:.3}, mean success {success:.3} (per instance ratio/success {rows:?}); {elapsed:.1?}"),
    );
}
