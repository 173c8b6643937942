use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rydberg_mis::analysis::{compare_methods, generate_instance, run_instance, ExperimentConfig};
use rydberg_mis::detuning::{DmmPolicy, Force, Method};
use rydberg_mis::instance::Instance;
use rydberg_mis::model::{derive_graph, validate_register, DeviceSpec};

/// Rydberg-array MIS/MWIS emulator and detuning compiler.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method end to end and write a JSON report plus CSV histogram.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Histogram CSV path; defaults to the report path with a .csv extension.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Also write the compiled pulse sequence as JSON.
        #[arg(long)]
        sequence: Option<PathBuf>,
    },
    /// Run several methods with a shared seed and tabulate them.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = Method::ALL.to_vec())]
        methods: Vec<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random instance inside the device's confinement disk.
    Gen {
        #[arg(long)]
        atoms: usize,
        /// Rough edge probability in (0, 1].
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12.0)]
        omega: f64,
        /// Interaction coefficient override (rad/µs · µm⁶).
        #[arg(long)]
        c6: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an instance against the device bounds.
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    dmm_policy: Option<DmmPolicy>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    duration_ns: Option<f64>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Pin an atom, e.g. `--force 0=activate` (repeatable).
    #[arg(long, value_parser = parse_force)]
    force: Vec<(usize, Force)>,
    #[arg(long)]
    allow_invalid_register: bool,
    #[arg(long)]
    hardware_fidelity: bool,
    #[arg(long)]
    max_dt_ns: Option<f64>,
    #[arg(long)]
    max_qubits: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
}

fn parse_force(s: &str) -> Result<(usize, Force), String> {
    let (atom, mode) = s.split_once('=').ok_or("expected ATOM=activate|deactivate")?;
    let atom = atom.parse().map_err(|e| format!("bad atom index: {e}"))?;
    let mode = match mode {
        "activate" => Force::Activate,
        "deactivate" => Force::Deactivate,
        other => return Err(format!("unknown force mode {other:?}")),
    };
    Ok((atom, mode))
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(method, dmm_policy, tau, rho, margin, shots, seed, lo, hi, max_dt_ns, max_qubits, top_k);
        if self.instance.is_some() {
            c.instance = self.instance.clone();
        }
        if self.omega_max.is_some() {
            c.omega_max = self.omega_max;
        }
        if self.duration_ns.is_some() {
            c.duration_ns = self.duration_ns;
        }
        c.force.extend(self.force.iter().copied());
        c.allow_invalid_register |= self.allow_invalid_register;
        c.hardware_fidelity |= self.hardware_fidelity;
        Ok(c)
    }
}

fn load_instance(config: &ExperimentConfig) -> Result<Instance> {
    let Some(path) = &config.instance else {
        bail!("no instance given (use --instance or the config's \"instance\" field)");
    };
    Instance::load(path).with_context(|| format!("loading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve {
            run,
            out,
            histogram,
            sequence,
        } => {
            let config = run.config()?;
            let inst = load_instance(&config)?;
            let mut report = run_instance(&inst, &config)?;
            let csv = histogram.or_else(|| out.as_ref().map(|p| p.with_extension("csv")));
            if let (Some(path), Some(hist)) = (&csv, &report.histogram) {
                hist.save_csv(path)?;
                report.histogram_file = Some(path.display().to_string());
            }
            if let (Some(path), Some(seq)) = (&sequence, &report.sequence) {
                fs::write(path, seq.to_json()?)?;
            }
            for w in &report.warnings {
                log::warn!("{w}");
            }
            emit(out.as_deref(), &report.to_json()?)
        }
        Command::Compare { run, methods, out } => {
            let config = run.config()?;
            let inst = load_instance(&config)?;
            let table = compare_methods(&inst, &config, &methods);
            emit(out.as_deref(), &serde_json::to_string_pretty(&table)?)
        }
        Command::Gen {
            atoms,
            density,
            weighted,
            seed,
            omega,
            c6,
            out,
        } => {
            let mut device = DeviceSpec::default();
            if let Some(c6) = c6 {
                device = device.with_c6(c6)?;
            }
            let inst = generate_instance(atoms, density, weighted, seed, &device, omega)?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&inst)?)
        }
        Command::Validate { instance, out } => {
            let inst = Instance::load(&instance).with_context(|| format!("loading {}", instance.display()))?;
            let device = inst.device(&DeviceSpec::default())?;
            let register = inst.register()?;
            let violations = validate_register(&register, &device);
            let derived = derive_graph(&register, inst.omega, &device);
            let summary = json!({
                "valid": violations.is_empty() && derived.is_ok(),
                "atoms": register.len(),
                "violations": violations,
                "derived_edges": derived.as_ref().map(|g| g.edge_count()).ok(),
                "graph_error": derived.err().map(|e| e.to_string()),
            });
            emit(out.as_deref(), &serde_json::to_string_pretty(&summary)?)
        }
    }
}
