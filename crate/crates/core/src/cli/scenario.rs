//! Scenario resolution: defaults, then command-line flags, then config file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::calib::CrosstalkMatrix;
use crate::error::{Error, Result};
use crate::model::DeviceSpec;
use crate::observables::trajectory::ObservableSet;

/// Environment variable naming the default device file.
pub const DEVICE_ENV: &str = "DPTSIM_DEVICE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Full 2^N register.
    Full,
    /// Symmetric (Dicke) sector, uniform coupling only.
    Dicke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    Moments,
    PerQubit,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Quench,
    Sweep,
    Loschmidt,
    Squeeze,
    Qfunc,
    Sample,
    Scaling,
    CalibCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Quench => "quench",
            Command::Sweep => "sweep",
            Command::Loschmidt => "loschmidt",
            Command::Squeeze => "squeeze",
            Command::Qfunc => "qfunc",
            Command::Sample => "sample",
            Command::Scaling => "scaling",
            Command::CalibCheck => "calib-check",
        }
    }
}

/// Partial scenario: every field optional. Used both for command-line
/// flags and for the TOML config file, which uses the same key names.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioArgs {
    /// Device file (TOML). Defaults to $DPTSIM_DEVICE, then the built-in 16-qubit device.
    #[arg(long, env = DEVICE_ENV)]
    pub device: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub engine: Option<Engine>,
    /// Replace the device couplings by a uniform coupling.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub uniform: Option<bool>,
    /// Uniform coupling [MHz]; defaults to the device mean.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_mhz: Option<f64>,
    /// Qubit count of a uniform model; defaults to the device size.
    #[arg(long)]
    pub n_qubits: Option<usize>,
    /// Transverse fields [MHz], comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub hx_mhz: Option<Vec<f64>>,
    /// Detunings [MHz]; defaults to the device detuning.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub delta_mhz: Option<Vec<f64>>,
    /// End of the run [ns]
    #[arg(long)]
    pub t_end_ns: Option<f64>,
    /// Output grid step [ns]
    #[arg(long)]
    pub t_step_ns: Option<f64>,
    /// End of the time-averaging window [ns]; defaults to the run end.
    #[arg(long)]
    pub t_avg_ns: Option<f64>,
    /// Observables besides the echo: moments, per-qubit or none.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub observables: Option<Vec<Observable>>,
    /// Krylov error tolerance per step.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Shots per measurement setting; 0 means exact expectation values.
    #[arg(long)]
    pub shots: Option<usize>,
    /// Base seed of partitions and shots; repetition r uses seed + r
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed repetitions of the sampling estimate.
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Random bipartitions per estimate.
    #[arg(long)]
    pub partitions: Option<usize>,
    /// Apply the device readout error to sampled bits
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub readout_error: Option<bool>,
    /// Invert the readout error in the estimated moments
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub correct_readout: Option<bool>,
    /// Times at which the sampling experiment measures [ns].
    #[arg(long, value_delimiter = ',')]
    pub sample_times_ns: Option<Vec<f64>>,
    /// Times at which Q-functions are taken [ns].
    #[arg(long, value_delimiter = ',')]
    pub q_times_ns: Option<Vec<f64>>,
    /// Polar grid points of the Q-function mesh
    #[arg(long)]
    pub q_theta: Option<usize>,
    /// Azimuthal grid points of the Q-function mesh
    #[arg(long)]
    pub q_phi: Option<usize>,
    /// Sizes of the perimeter-law scan.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Field-to-coupling ratios of the perimeter-law scan.
    #[arg(long, value_delimiter = ',')]
    pub g_over_j: Option<Vec<f64>>,
    /// Sizes of the squeezing-exponent scan.
    #[arg(long, value_delimiter = ',')]
    pub squeeze_sizes: Option<Vec<usize>>,
    /// Field range of the squeezing-exponent scan as `min,max,points` in units of the critical field.
    #[arg(long, value_delimiter = ',')]
    pub mu_ratio_range: Option<Vec<f64>>,
    /// End and step of collective-model runs, in units of 1/J.
    #[arg(long)]
    pub lmg_t_end: Option<f64>,
    #[arg(long)]
    pub lmg_t_step: Option<f64>,
    /// Crosstalk matrix file (TOML); synthetic when absent.
    #[arg(long)]
    pub crosstalk: Option<PathBuf>,
    /// Largest off-diagonal amplitude of a synthetic crosstalk matrix.
    #[arg(long)]
    pub synthetic_amax: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Fully resolved scenario, stored verbatim in the result manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub device: Option<PathBuf>,
    pub engine: Engine,
    pub uniform: bool,
    pub lambda_mhz: Option<f64>,
    pub n_qubits: Option<usize>,
    pub hx_mhz: Vec<f64>,
    pub delta_mhz: Vec<f64>,
    pub t_end_ns: f64,
    pub t_step_ns: f64,
    pub t_avg_ns: Option<f64>,
    pub observables: Vec<Observable>,
    pub tolerance: f64,
    pub shots: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub partitions: usize,
    pub readout_error: bool,
    pub correct_readout: bool,
    pub sample_times_ns: Vec<f64>,
    pub q_times_ns: Vec<f64>,
    pub q_theta: usize,
    pub q_phi: usize,
    pub sizes: Vec<usize>,
    pub g_over_j: Vec<f64>,
    pub squeeze_sizes: Vec<usize>,
    pub mu_ratio_range: Vec<f64>,
    pub lmg_t_end: f64,
    pub lmg_t_step: f64,
    pub crosstalk: Option<PathBuf>,
    pub synthetic_amax: f64,
    pub output: PathBuf,
}

impl ScenarioSpec {
    pub fn defaults(cmd: Command) -> Self {
        let hx_mhz = match cmd {
            Command::Sweep => (0..19).map(|k| 1.0 + 0.5 * k as f64).collect(),
            Command::Sample => vec![3.0, 6.0],
            Command::CalibCheck => vec![6.0],
            _ => vec![2.0, 8.0],
        };
        Self {
            device: None,
            engine: Engine::Full,
            uniform: false,
            lambda_mhz: None,
            n_qubits: None,
            hx_mhz,
            delta_mhz: Vec::new(),
            t_end_ns: 600.0,
            t_step_ns: 4.0,
            t_avg_ns: None,
            observables: vec![Observable::Moments, Observable::PerQubit],
            tolerance: crate::engine::DEFAULT_TOLERANCE,
            shots: 3000,
            seed: 1,
            repetitions: 5,
            partitions: crate::measure::PartitionPlan::DEFAULT_COUNT,
            readout_error: false,
            correct_readout: false,
            sample_times_ns: vec![8.0, 16.0, 24.0, 32.0, 40.0],
            q_times_ns: vec![0.0, 10.0, 20.0, 30.0],
            q_theta: 64,
            q_phi: 128,
            sizes: vec![8, 16, 24, 32, 48, 64, 96, 128],
            g_over_j: vec![0.75, 1.0, 1.5],
            squeeze_sizes: vec![8, 12, 16, 24, 32],
            mu_ratio_range: vec![0.15, 1.5, 28.0],
            lmg_t_end: 100.0,
            lmg_t_step: 0.05,
            crosstalk: None,
            synthetic_amax: 0.05,
            output: PathBuf::from("out"),
        }
    }

    /// Defaults, overridden by `flags`, overridden by `config`.
    pub fn resolve(cmd: Command, flags: &ScenarioArgs, config: Option<&ScenarioArgs>) -> Result<Self> {
        let mut spec = Self::defaults(cmd);
        spec.apply(flags);
        if let Some(c) = config {
            spec.apply(c);
        }
        spec.validate(cmd)?;
        Ok(spec)
    }

    fn apply(&mut self, a: &ScenarioArgs) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &a.$f { self.$f = v.clone(); } )* };
        }
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if let Some(v) = &a.$f { self.$f = Some(v.clone()); } )* };
        }
        set!(
            engine, uniform, hx_mhz, delta_mhz, t_end_ns, t_step_ns, observables, tolerance, shots, seed,
            repetitions, partitions, readout_error, correct_readout, sample_times_ns, q_times_ns, q_theta, q_phi,
            sizes, g_over_j, squeeze_sizes, mu_ratio_range, lmg_t_end, lmg_t_step, synthetic_amax, output
        );
        set_opt!(device, lambda_mhz, n_qubits, t_avg_ns, crosstalk);
    }

    pub fn validate(&self, cmd: Command) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hx_mhz.is_empty() {
            return bad("hx list is empty".into());
        }
        if self.hx_mhz.iter().any(|h| !h.is_finite()) || self.delta_mhz.iter().any(|d| !d.is_finite()) {
            return bad("fields and detunings must be finite".into());
        }
        if !(self.t_step_ns > 0.0) || !(self.t_end_ns > 0.0) {
            return bad(format!("time window must be positive (end {}, step {})", self.t_end_ns, self.t_step_ns));
        }
        if let Some(t) = self.t_avg_ns {
            if !(t > 0.0 && t <= self.t_end_ns) {
                return bad(format!("averaging window {t} ns outside (0, {}]", self.t_end_ns));
            }
        }
        if self.engine == Engine::Dicke && !self.uniform {
            return bad("the dicke engine requires --uniform".into());
        }
        if self.n_qubits.is_some() && !self.uniform {
            return bad("--n-qubits only applies to uniform models".into());
        }
        if self.mu_ratio_range.len() != 3 || self.mu_ratio_range[2] < 1.0 {
            return bad("mu ratio range must be min,max,points".into());
        }
        match cmd {
            Command::Sample => {
                if self.engine != Engine::Full {
                    return bad("the sampling experiment runs on the full engine".into());
                }
                if self.repetitions == 0 || self.partitions == 0 || self.sample_times_ns.is_empty() {
                    return bad("sampling needs repetitions, partitions and sample times".into());
                }
            }
            Command::Qfunc if self.q_times_ns.is_empty() => return bad("no Q-function times".into()),
            _ => {}
        }
        Ok(())
    }

    pub fn observable_set(&self) -> ObservableSet {
        ObservableSet {
            moments: self.observables.contains(&Observable::Moments),
            per_qubit: self.observables.contains(&Observable::PerQubit),
        }
    }

    pub fn t_avg(&self) -> f64 {
        self.t_avg_ns.unwrap_or(self.t_end_ns)
    }

    /// Detunings to run: the explicit list or the device's own.
    pub fn detunings(&self, device: &DeviceSpec) -> Vec<f64> {
        if self.delta_mhz.is_empty() {
            vec![crate::model::to_mhz(device.delta)]
        } else {
            self.delta_mhz.clone()
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioArgs> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Inputs read from disk, embedded in the manifest so a replay never
/// depends on the original files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub device_toml: String,
    pub crosstalk_toml: Option<String>,
}

impl Inputs {
    pub fn load(spec: &ScenarioSpec) -> Result<Self> {
        let device = match &spec.device {
            Some(p) => DeviceSpec::load(p)?,
            None => DeviceSpec::builtin_16q(),
        };
        let crosstalk_toml = match &spec.crosstalk {
            Some(p) => Some(CrosstalkMatrix::load(p)?.to_toml_string()),
            None => None,
        };
        Ok(Self {
            device_toml: device.to_toml_string(),
            crosstalk_toml,
        })
    }

    pub fn device(&self) -> Result<DeviceSpec> {
        DeviceSpec::from_toml_str(&self.device_toml)
    }

    pub fn crosstalk(&self) -> Result<Option<CrosstalkMatrix>> {
        self.crosstalk_toml.as_deref().map(CrosstalkMatrix::from_toml_str).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_is_defaults_flags_config() {
        let flags = ScenarioArgs {
            hx_mhz: Some(vec![3.0]),
            seed: Some(7),
            ..Default::default()
        };
        let config: ScenarioArgs = toml::from_str("seed = 9\nt_step_ns = 2.0").unwrap();
        let s = ScenarioSpec::resolve(Command::Quench, &flags, Some(&config)).unwrap();
        assert_eq!(s.hx_mhz, vec![3.0]);
        assert_eq!(s.seed, 9);
        assert_eq!(s.t_step_ns, 2.0);
        assert_eq!(s.t_end_ns, 600.0);
    }

    #[test]
    fn invalid_scenarios_are_config_errors() {
        let mut a = ScenarioArgs {
            hx_mhz: Some(vec![]),
            ..Default::default()
        };
        assert!(matches!(ScenarioSpec::resolve(Command::Quench, &a, None), Err(Error::Config(_))));
        a.hx_mhz = None;
        a.t_step_ns = Some(0.0);
        assert!(matches!(ScenarioSpec::resolve(Command::Quench, &a, None), Err(Error::Config(_))));
        a.t_step_ns = None;
        a.engine = Some(Engine::Dicke);
        assert!(matches!(ScenarioSpec::resolve(Command::Quench, &a, None), Err(Error::Config(_))));
        a.uniform = Some(true);
        assert!(ScenarioSpec::resolve(Command::Quench, &a, None).is_ok());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<ScenarioArgs>("hx = [1.0]").is_err());
    }
}
