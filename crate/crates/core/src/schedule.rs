//! Piecewise-linear waveforms and per-method pulse sequences.
//!
//! Every sequence shares one Ω ramp `[0, Ω_max, 0]` peaking at mid-time and
//! sweeps detunings linearly from negative to positive. Local mode drives each
//! atom with `−Δ_i → Δ_i`; DMM mode combines a global `−Δ_max → Δ_max` sweep
//! with a modulator `0 → −Δ_max` scaled by `ε_i`; global mode uses one shared
//! `−Δ → Δ` sweep.

use serde::{Deserialize, Serialize};

use crate::detuning::{DetuningPlan, Method};
use crate::error::{Error, Result};
use crate::model::{DeviceSpec, Register, Rule, Violation};

/// Control points stored as fractions of the duration so one shape can be
/// reused across durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWaveform")]
pub struct Waveform {
    duration_ns: f64,
    points: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct RawWaveform {
    duration_ns: f64,
    points: Vec<(f64, f64)>,
}

impl TryFrom<RawWaveform> for Waveform {
    type Error = Error;

    fn try_from(raw: RawWaveform) -> Result<Self> {
        Waveform::new(raw.duration_ns, raw.points)
    }
}

impl Waveform {
    pub fn new(duration_ns: f64, points: Vec<(f64, f64)>) -> Result<Self> {
        if !(duration_ns > 0.0 && duration_ns.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "duration must be positive, got {duration_ns}"
            )));
        }
        if points.len() < 2 {
            return Err(Error::InvalidArgument("a waveform needs at least two points".into()));
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return Err(Error::InvalidArgument("control points must span [0, 1]".into()));
        }
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidArgument("control times must strictly increase".into()));
        }
        if points.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::InvalidArgument("non-finite waveform value".into()));
        }
        Ok(Self { duration_ns, points })
    }

    /// Evenly spaced control values, like an interpolated waveform.
    pub fn ramp(duration_ns: f64, values: &[f64]) -> Result<Self> {
        let last = values.len().saturating_sub(1).max(1) as f64;
        let points = values
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 / last, v))
            .collect();
        Self::new(duration_ns, points)
    }

    pub fn constant(duration_ns: f64, value: f64) -> Result<Self> {
        Self::ramp(duration_ns, &[value, value])
    }

    pub fn duration_ns(&self) -> f64 {
        self.duration_ns
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Value at `t_ns ∈ [0, duration]`.
    pub fn sample(&self, t_ns: f64) -> Result<f64> {
        if !(0.0..=self.duration_ns).contains(&t_ns) {
            return Err(Error::InvalidArgument(format!(
                "time {t_ns} ns outside [0, {}]",
                self.duration_ns
            )));
        }
        Ok(self.at_fraction(t_ns / self.duration_ns))
    }

    /// Value at a duration fraction, clamped to `[0, 1]`.
    pub fn at_fraction(&self, frac: f64) -> f64 {
        let p = &self.points;
        let frac = frac.clamp(0.0, 1.0);
        let k = p.partition_point(|q| q.0 <= frac);
        if k == 0 {
            return p[0].1;
        }
        if k == p.len() {
            return p[p.len() - 1].1;
        }
        let (t0, v0) = p[k - 1];
        let (t1, v1) = p[k];
        v0 + (v1 - v0) * (frac - t0) / (t1 - t0)
    }

    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.1.abs()).fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// How detunings are delivered to the atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DetuningControl {
    /// One waveform per atom.
    Local { detuning: Vec<Waveform> },
    /// Global sweep plus a negative modulator scaled per atom.
    Dmm {
        detuning: Waveform,
        dmm: Waveform,
        epsilon: Vec<f64>,
    },
    /// One waveform for all atoms.
    Global { detuning: Waveform },
}

impl DetuningControl {
    pub fn mode_name(&self) -> &'static str {
        match self {
            DetuningControl::Local { .. } => "local",
            DetuningControl::Dmm { .. } => "dmm",
            DetuningControl::Global { .. } => "global",
        }
    }
}

/// A complete drive program for one register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence")]
pub struct PulseSequence {
    duration_ns: f64,
    labels: Vec<String>,
    omega: Waveform,
    #[serde(flatten)]
    control: DetuningControl,
}

#[derive(Deserialize)]
struct RawSequence {
    duration_ns: f64,
    labels: Vec<String>,
    omega: Waveform,
    #[serde(flatten)]
    control: DetuningControl,
}

impl TryFrom<RawSequence> for PulseSequence {
    type Error = Error;

    fn try_from(raw: RawSequence) -> Result<Self> {
        let seq = PulseSequence::new(raw.labels, raw.omega, raw.control)?;
        if seq.duration_ns != raw.duration_ns {
            return Err(Error::InvalidArgument("duration_ns disagrees with waveforms".into()));
        }
        Ok(seq)
    }
}

impl PulseSequence {
    pub fn new(labels: Vec<String>, omega: Waveform, control: DetuningControl) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidArgument("sequence needs at least one atom".into()));
        }
        let duration = omega.duration_ns;
        let mut shapes: Vec<&Waveform> = Vec::new();
        match &control {
            DetuningControl::Local { detuning } => {
                if detuning.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: detuning.len(),
                    });
                }
                shapes.extend(detuning);
            }
            DetuningControl::Dmm { detuning, dmm, epsilon } => {
                if epsilon.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: epsilon.len(),
                    });
                }
                if let Some(e) = epsilon.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                    return Err(Error::InvalidArgument(format!("epsilon {e} outside [0, 1]")));
                }
                shapes.push(detuning);
                shapes.push(dmm);
            }
            DetuningControl::Global { detuning } => shapes.push(detuning),
        }
        if shapes.iter().any(|w| w.duration_ns != duration) {
            return Err(Error::InvalidArgument("all waveforms must share one duration".into()));
        }
        Ok(Self {
            duration_ns: duration,
            labels,
            omega,
            control,
        })
    }

    pub fn duration_ns(&self) -> f64 {
        self.duration_ns
    }

    pub fn atom_count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn omega(&self) -> &Waveform {
        &self.omega
    }

    pub fn control(&self) -> &DetuningControl {
        &self.control
    }

    pub fn mode_name(&self) -> &'static str {
        self.control.mode_name()
    }

    /// Ω at a duration fraction.
    pub fn omega_at_fraction(&self, frac: f64) -> f64 {
        self.omega.at_fraction(frac)
    }

    /// Effective detuning of every atom at a duration fraction.
    pub fn detunings_at_fraction(&self, frac: f64, out: &mut [f64]) {
        match &self.control {
            DetuningControl::Local { detuning } => {
                for (o, w) in out.iter_mut().zip(detuning) {
                    *o = w.at_fraction(frac);
                }
            }
            DetuningControl::Dmm { detuning, dmm, epsilon } => {
                let (g, m) = (detuning.at_fraction(frac), dmm.at_fraction(frac));
                for (o, e) in out.iter_mut().zip(epsilon) {
                    *o = g + e * m;
                }
            }
            DetuningControl::Global { detuning } => out.fill(detuning.at_fraction(frac)),
        }
    }

    /// Effective detuning of `atom` at `t_ns`.
    pub fn effective_detuning(&self, atom: usize, t_ns: f64) -> Result<f64> {
        if atom >= self.atom_count() {
            return Err(Error::IndexOutOfRange {
                index: atom,
                len: self.atom_count(),
            });
        }
        self.omega.sample(t_ns)?;
        let mut buf = vec![0.0; self.atom_count()];
        self.detunings_at_fraction(t_ns / self.duration_ns, &mut buf);
        Ok(buf[atom])
    }

    /// Sorted union of all control-point fractions. Every waveform is linear
    /// between consecutive entries.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.omega.points.iter().map(|p| p.0).collect();
        let mut push = |w: &Waveform| out.extend(w.points.iter().map(|p| p.0));
        match &self.control {
            DetuningControl::Local { detuning } => detuning.iter().for_each(&mut push),
            DetuningControl::Dmm { detuning, dmm, .. } => {
                push(detuning);
                push(dmm);
            }
            DetuningControl::Global { detuning } => push(detuning),
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn omega_ramp(omega_max: f64, duration_ns: f64) -> Result<Waveform> {
    Waveform::ramp(duration_ns, &[0.0, omega_max, 0.0])
}

fn checked(seq: PulseSequence, device: &DeviceSpec) -> Result<PulseSequence> {
    let violations = validate_sequence(&seq, device);
    if violations.is_empty() {
        Ok(seq)
    } else {
        Err(Error::ConstraintViolation(violations))
    }
}

fn check_len(register: &Register, plan: &DetuningPlan) -> Result<()> {
    if register.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: register.len(),
            actual: plan.len(),
        });
    }
    Ok(())
}

/// One `−Δ_i → Δ_i` sweep per atom under the shared Ω ramp.
pub fn build_local_sequence(
    register: &Register,
    plan: &DetuningPlan,
    omega_max: f64,
    duration_ns: f64,
    device: &DeviceSpec,
) -> Result<PulseSequence> {
    if !matches!(plan.method(), Method::Baseline | Method::Local) {
        return Err(Error::Unsupported(format!(
            "local sequence from a {} plan",
            plan.method()
        )));
    }
    check_len(register, plan)?;
    let detuning = plan
        .detunings()
        .iter()
        .map(|&d| Waveform::ramp(duration_ns, &[-d, d]))
        .collect::<Result<Vec<_>>>()?;
    let seq = PulseSequence::new(
        register.labels().to_vec(),
        omega_ramp(omega_max, duration_ns)?,
        DetuningControl::Local { detuning },
    )?;
    checked(seq, device)
}

/// Global `−Δ_max → Δ_max` sweep plus modulator `0 → −Δ_max` weighted by `ε_i`.
pub fn build_dmm_sequence(
    register: &Register,
    plan: &DetuningPlan,
    omega_max: f64,
    duration_ns: f64,
    device: &DeviceSpec,
) -> Result<PulseSequence> {
    check_len(register, plan)?;
    let epsilon = plan
        .epsilon()
        .ok_or_else(|| Error::InvalidArgument("plan carries no DMM factors".into()))?
        .to_vec();
    let dmax = plan.delta_max();
    if !(dmax > 0.0) {
        return Err(Error::DegeneratePlan("Δ_max must be positive".into()));
    }
    let seq = PulseSequence::new(
        register.labels().to_vec(),
        omega_ramp(omega_max, duration_ns)?,
        DetuningControl::Dmm {
            detuning: Waveform::ramp(duration_ns, &[-dmax, dmax])?,
            dmm: Waveform::ramp(duration_ns, &[0.0, -dmax])?,
            epsilon,
        },
    )?;
    checked(seq, device)
}

/// One shared `−Δ → Δ` sweep.
pub fn build_global_sequence(
    register: &Register,
    global_delta: f64,
    omega_max: f64,
    duration_ns: f64,
    device: &DeviceSpec,
) -> Result<PulseSequence> {
    if !(global_delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "global detuning must be positive, got {global_delta}"
        )));
    }
    let seq = PulseSequence::new(
        register.labels().to_vec(),
        omega_ramp(omega_max, duration_ns)?,
        DetuningControl::Global {
            detuning: Waveform::ramp(duration_ns, &[-global_delta, global_delta])?,
        },
    )?;
    checked(seq, device)
}

/// Duration, Rabi amplitude and detuning checks. For DMM the effective
/// per-atom detuning is checked, not just the two waveforms.
pub fn validate_sequence(seq: &PulseSequence, device: &DeviceSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if seq.duration_ns > device.max_duration {
        out.push(Violation {
            rule: Rule::MaxDuration,
            atoms: vec![],
            value: seq.duration_ns,
            limit: device.max_duration,
        });
    }
    let omega_peak = seq.omega.max_abs();
    if omega_peak > device.max_rabi {
        out.push(Violation {
            rule: Rule::MaxRabi,
            atoms: vec![],
            value: omega_peak,
            limit: device.max_rabi,
        });
    }

    let limit = device.max_abs_detuning;
    let mut per_atom = vec![0.0f64; seq.atom_count()];
    match &seq.control {
        DetuningControl::Local { detuning } => {
            for (p, w) in per_atom.iter_mut().zip(detuning) {
                *p = w.max_abs();
            }
        }
        DetuningControl::Dmm { detuning, dmm, .. } => {
            if dmm.max_value() > 0.0 {
                out.push(Violation {
                    rule: Rule::DmmSign,
                    atoms: vec![],
                    value: dmm.max_value(),
                    limit: 0.0,
                });
            }
            let shared = detuning.max_abs().max(dmm.max_abs());
            if shared > limit {
                out.push(Violation {
                    rule: Rule::MaxAbsDetuning,
                    atoms: vec![],
                    value: shared,
                    limit,
                });
            }
            let mut buf = vec![0.0; seq.atom_count()];
            for f in seq.breakpoints() {
                seq.detunings_at_fraction(f, &mut buf);
                for (p, b) in per_atom.iter_mut().zip(&buf) {
                    *p = p.max(b.abs());
                }
            }
        }
        DetuningControl::Global { detuning } => per_atom.fill(detuning.max_abs()),
    }
    for (i, &m) in per_atom.iter().enumerate() {
        if m > limit {
            out.push(Violation {
                rule: Rule::MaxAbsDetuning,
                atoms: vec![i],
                value: m,
                limit,
            });
        }
    }
    out
}
