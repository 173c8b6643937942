//! Dense state-vector emulation of the driven Rydberg Hamiltonian
//!
//! ```text
//! H(t) = Σ_i [ Ω(t)/2 σˣ_i − Δ_i(t) n_i ] + Σ_{i<j} V_ij n_i n_j
//! ```
//!
//! Basis index bit `i` set means atom `i` is in the Rydberg state. Bitstrings
//! are written with atom 0 as the leftmost character.

mod krylov;
mod measure;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::InteractionMatrix;
use crate::schedule::PulseSequence;

pub use measure::{exact_distribution, sample, OutcomeHistogram};

pub const DEFAULT_MAX_QUBITS: usize = 16;
/// Hard ceiling on the configurable capacity (2²⁴ amplitudes, 256 MiB).
pub const HARD_MAX_QUBITS: usize = 24;

const PAR_THRESHOLD: usize = 1 << 12;
const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Renders basis index `index` as a bitstring, atom 0 first.
pub fn bitstring(index: usize, n: usize) -> String {
    (0..n).map(|i| if index >> i & 1 == 1 { '1' } else { '0' }).collect()
}

/// Basis index of a bitstring (atom 0 first).
pub fn parse_bitstring(bits: &str) -> Result<usize> {
    bits.chars().enumerate().try_fold(0usize, |acc, (i, c)| match c {
        '0' => Ok(acc),
        '1' => Ok(acc | 1 << i),
        _ => Err(Error::InvalidArgument(format!("invalid bitstring {bits:?}"))),
    })
}

/// Indices of the excited atoms in a bitstring.
pub fn active_atoms(bits: &str) -> Vec<usize> {
    bits.char_indices().filter(|(_, c)| *c == '1').map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|00…0⟩`
    pub fn ground(n: usize) -> Result<Self> {
        check_capacity(n, HARD_MAX_QUBITS)?;
        let mut amps = vec![C_ZERO; 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn basis(n: usize, index: usize) -> Result<Self> {
        let mut s = Self::ground(n)?;
        if index >= s.amps.len() {
            return Err(Error::IndexOutOfRange {
                index,
                len: s.amps.len(),
            });
        }
        s.amps[0] = C_ZERO;
        s.amps[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Wraps raw amplitudes; the length must be `2^n` and the norm 1 within 1e-6.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("dimension {dim} is not a power of two")));
        }
        let s = Self {
            n: dim.trailing_zeros() as usize,
            amps,
        };
        if (s.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("state norm {} is not 1", s.norm())));
        }
        Ok(s)
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

fn check_capacity(n: usize, limit: usize) -> Result<()> {
    if n > limit.min(HARD_MAX_QUBITS) {
        return Err(Error::Capacity {
            what: "qubits",
            requested: n,
            limit: limit.min(HARD_MAX_QUBITS),
        });
    }
    Ok(())
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Instantaneous drive parameters. `scale` multiplies the interaction term so
/// that linear combinations of `H(t₁)` and `H(t₂)` stay in this form.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub omega: f64,
    pub detunings: Vec<f64>,
    pub scale: f64,
}

impl Coefficients {
    pub fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        Self {
            omega: a * x.omega + b * y.omega,
            detunings: x
                .detunings
                .iter()
                .zip(&y.detunings)
                .map(|(p, q)| a * p + b * q)
                .collect(),
            scale: a * x.scale + b * y.scale,
        }
    }
}

/// Matrix-free Hamiltonian: the interaction diagonal is precomputed once,
/// the drive terms are applied on the fly.
pub struct Hamiltonian<'a> {
    n: usize,
    interaction: Vec<f64>,
    seq: &'a PulseSequence,
}

impl<'a> Hamiltonian<'a> {
    pub fn new(seq: &'a PulseSequence, v: &InteractionMatrix) -> Result<Self> {
        let n = seq.atom_count();
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: v.len(),
            });
        }
        check_capacity(n, HARD_MAX_QUBITS)?;
        let interaction = (0..1usize << n)
            .map(|k| {
                let mut e = 0.0;
                for i in 0..n {
                    if k >> i & 1 == 1 {
                        for j in (i + 1)..n {
                            if k >> j & 1 == 1 {
                                e += v.get(i, j);
                            }
                        }
                    }
                }
                e
            })
            .collect();
        Ok(Self { n, interaction, seq })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.interaction.len()
    }

    /// Drive parameters at a fraction of the sequence duration.
    pub fn coefficients(&self, frac: f64) -> Coefficients {
        let mut detunings = vec![0.0; self.n];
        self.seq.detunings_at_fraction(frac, &mut detunings);
        Coefficients {
            omega: self.seq.omega_at_fraction(frac),
            detunings,
            scale: 1.0,
        }
    }

    /// Diagonal entry of basis state `k`.
    pub fn diagonal(&self, c: &Coefficients, k: usize) -> f64 {
        let mut d = c.scale * self.interaction[k];
        for (i, delta) in c.detunings.iter().enumerate() {
            if k >> i & 1 == 1 {
                d -= delta;
            }
        }
        d
    }

    /// `out = H psi`.
    pub fn apply(&self, c: &Coefficients, psi: &[Complex64], out: &mut [Complex64]) {
        let half = 0.5 * c.omega;
        let n = self.n;
        let row = |(k, o): (usize, &mut Complex64)| {
            let mut acc = psi[k] * self.diagonal(c, k);
            if half != 0.0 {
                let mut flip = C_ZERO;
                for i in 0..n {
                    flip += psi[k ^ (1 << i)];
                }
                acc += flip * half;
            }
            *o = acc;
        };
        if out.len() >= PAR_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(row);
        } else {
            out.iter_mut().enumerate().for_each(row);
        }
    }

    /// Upper bound on `‖H‖` over the whole sequence.
    pub fn norm_bound(&self) -> f64 {
        let diag_max = self.interaction.iter().copied().fold(0.0, f64::max);
        self.seq
            .breakpoints()
            .iter()
            .map(|&f| {
                let c = self.coefficients(f);
                diag_max + c.detunings.iter().map(|d| d.abs()).sum::<f64>() + self.n as f64 * c.omega.abs() / 2.0
            })
            .fold(0.0, f64::max)
    }
}

/// `H(t) psi` for a sequence at `t_ns`.
pub fn hamiltonian_action(
    seq: &PulseSequence,
    v: &InteractionMatrix,
    t_ns: f64,
    psi: &StateVector,
) -> Result<Vec<Complex64>> {
    if !(0.0..=seq.duration_ns()).contains(&t_ns) {
        return Err(Error::InvalidArgument(format!(
            "time {t_ns} ns outside the sequence"
        )));
    }
    let h = Hamiltonian::new(seq, v)?;
    if psi.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            actual: psi.dim(),
        });
    }
    let mut out = vec![C_ZERO; h.dim()];
    h.apply(&h.coefficients(t_ns / seq.duration_ns()), &psi.amps, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Fourth-order commutator-free Magnus with Krylov exponentials.
    #[default]
    Magnus4,
    /// Classic fourth-order Runge–Kutta, step limited by `‖H‖`.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub integrator: Integrator,
    /// Largest step in ns.
    pub max_dt_ns: f64,
    /// Absolute error target of each Krylov exponential.
    pub krylov_tol: f64,
    /// RK4 only: `dt · ‖H‖` cap.
    pub rk4_phase: f64,
    pub max_qubits: usize,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            integrator: Integrator::Magnus4,
            max_dt_ns: 5.0,
            krylov_tol: 1e-12,
            rk4_phase: 0.1,
            max_qubits: DEFAULT_MAX_QUBITS,
        }
    }
}

impl StepPolicy {
    pub fn rk4() -> Self {
        Self {
            integrator: Integrator::Rk4,
            ..Self::default()
        }
    }

    pub fn with_dt(self, max_dt_ns: f64) -> Self {
        Self { max_dt_ns, ..self }
    }
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3/6

/// Integrates `i dψ/dt = H(t) ψ` over the whole sequence.
///
/// Steps never straddle a waveform breakpoint, so the Ω kink at mid-time
/// does not spoil the order of the scheme.
pub fn evolve(
    seq: &PulseSequence,
    v: &InteractionMatrix,
    initial: &StateVector,
    policy: &StepPolicy,
) -> Result<StateVector> {
    check_capacity(seq.atom_count(), policy.max_qubits)?;
    if !(policy.max_dt_ns > 0.0) {
        return Err(Error::InvalidArgument("max_dt_ns must be positive".into()));
    }
    let h = Hamiltonian::new(seq, v)?;
    if initial.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            actual: initial.dim(),
        });
    }
    if (initial.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "initial state norm {} is not 1",
            initial.norm()
        )));
    }

    let total_us = seq.duration_ns() * 1e-3;
    let mut dt_ns = policy.max_dt_ns;
    if policy.integrator == Integrator::Rk4 {
        let bound = h.norm_bound();
        if bound > 0.0 {
            dt_ns = dt_ns.min(policy.rk4_phase / bound * 1e3);
        }
    }

    let mut psi = initial.amps.clone();
    let mut work = Rk4Work::new(h.dim());
    let mut lanczos = krylov::Lanczos::new(h.dim());
    let bp = seq.breakpoints();
    for seg in bp.windows(2) {
        let len_ns = (seg[1] - seg[0]) * seq.duration_ns();
        let steps = (len_ns / dt_ns).ceil().max(1.0) as usize;
        let df = (seg[1] - seg[0]) / steps as f64;
        let h_us = df * total_us;
        for s in 0..steps {
            let f0 = seg[0] + s as f64 * df;
            match policy.integrator {
                Integrator::Magnus4 => {
                    let c1 = h.coefficients(f0 + (0.5 - GAUSS_OFFSET) * df);
                    let c2 = h.coefficients(f0 + (0.5 + GAUSS_OFFSET) * df);
                    let (a1, a2) = (0.25 + GAUSS_OFFSET, 0.25 - GAUSS_OFFSET);
                    let first = Coefficients::combine(a1, &c1, a2, &c2);
                    let second = Coefficients::combine(a2, &c1, a1, &c2);
                    lanczos.expm_apply(&h, &first, &mut psi, h_us, policy.krylov_tol);
                    lanczos.expm_apply(&h, &second, &mut psi, h_us, policy.krylov_tol);
                }
                Integrator::Rk4 => work.step(&h, &mut psi, f0, df, h_us),
            }
        }
    }
    Ok(StateVector { n: h.qubits(), amps: psi })
}

struct Rk4Work {
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl Rk4Work {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![C_ZERO; dim]),
            tmp: vec![C_ZERO; dim],
        }
    }

    fn step(&mut self, h: &Hamiltonian, psi: &mut [Complex64], f0: f64, df: f64, dt: f64) {
        let mi = Complex64::new(0.0, -1.0);
        let nodes = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
        for (s, &(cf, ck)) in nodes.iter().enumerate() {
            let c = h.coefficients(f0 + cf * df);
            if s == 0 {
                self.tmp.copy_from_slice(psi);
            } else {
                let prev = &self.k[s - 1];
                for ((t, p), k) in self.tmp.iter_mut().zip(psi.iter()).zip(prev) {
                    *t = p + k * (ck * dt);
                }
            }
            let ks = &mut self.k[s];
            h.apply(&c, &self.tmp, ks);
            for x in ks.iter_mut() {
                *x *= mi;
            }
        }
        for (i, p) in psi.iter_mut().enumerate() {
            *p += (self.k[0][i] + self.k[1][i] * 2.0 + self.k[2][i] * 2.0 + self.k[3][i]) * (dt / 6.0);
        }
    }
}
