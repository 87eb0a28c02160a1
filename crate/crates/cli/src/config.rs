//! Run configuration. One TOML file with a table per subcommand; every
//! table is optional and command-line flags override its values.

use std::path::{Path, PathBuf};

use kerrfree::calibration::CalibrationConfig;
use kerrfree::synth::{Quantizer, SaturationHook};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub calibration: Option<CalibrationConfig>,
    pub snail_sweep: Option<SnailSweepConfig>,
    pub simulate: Option<SimulateConfig>,
    pub analyze: Option<AnalyzeConfig>,
    pub propagation_profile: Option<ProfileConfig>,
    pub johnson_fit: Option<JohnsonConfig>,
    /// Directory of the config file; relative paths inside resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(kerrfree::Error::from)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(c) = &cfg.calibration {
            c.chain()?;
            c.uncertainty()?;
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnailSweepConfig {
    pub alphas: Vec<f64>,
    pub flux_min: f64,
    pub flux_max: f64,
    pub points: usize,
    pub n_large: u32,
    pub m_snails: u32,
    pub inductance_ratio: f64,
    /// Grid of the coarse Kerr-free root scan.
    pub kerr_grid_points: usize,
}

impl Default for SnailSweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.2, 0.29, 0.4],
            flux_min: -0.5,
            flux_max: 0.5,
            points: 101,
            n_large: 2,
            m_snails: 1632,
            inductance_ratio: 0.05,
            kerr_grid_points: 401,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    #[default]
    Binary,
    Csv,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordFormat::Binary => "twpa",
            RecordFormat::Csv => "csv",
        }
    }
}

/// Distributed line used by sweep targets. `kappa` follows from the
/// calibration's `eta_db`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub v: f64,
    pub length: f64,
    #[serde(default = "default_segments")]
    pub n_segments: usize,
    #[serde(default)]
    pub chi_phase: f64,
}

fn default_segments() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// Lossy two-mode squeezed vacuum tuned to a transposed `ν̃_min`.
    Nu { nu: f64 },
    /// Same family, tuned so the squeezed joint quadrature sits at `db`.
    SqueezeDb { db: f64 },
    /// Lossless two-mode squeezed vacuum.
    Tmsv {
        r: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Covariance JSON or CSV file.
    Covariance { path: PathBuf },
    /// Labeled ladder of parametric strengths on a distributed line.
    Sweep {
        line: LineConfig,
        chis: Vec<f64>,
        #[serde(default)]
        labels: Option<Vec<String>>,
        #[serde(default)]
        saturation: Option<SaturationHook>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_samples")]
    pub n_samples: u64,
    #[serde(default)]
    pub record_format: RecordFormat,
    #[serde(default)]
    pub amplifier_occupation: Option<f64>,
    #[serde(default)]
    pub quantizer: Option<Quantizer>,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    pub target: TargetConfig,
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_rate() -> f64 {
    1e6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordPair {
    pub label: String,
    pub on: PathBuf,
    pub off: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub manifest: Option<PathBuf>,
    pub points: Vec<RecordPair>,
    /// Angle of the idler quadrature paired with `I_S` for `S±`.
    pub squeeze_angle: f64,
    /// Separation between the signal and idler bands, Hz.
    pub mode_separation_hz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub v: f64,
    pub length: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Alternative to `kappa`: loss `e^{−tan δ · θ}` over the line.
    #[serde(default)]
    pub tan_delta: Option<f64>,
    #[serde(default)]
    pub electrical_length: Option<f64>,
    pub chi_min: f64,
    pub chi_max: f64,
    pub points: usize,
    /// Signal frequencies; defaults to half the pump frequency.
    #[serde(default)]
    pub frequencies_hz: Vec<f64>,
    pub pump_hz: f64,
    #[serde(default = "default_segments")]
    pub n_segments: usize,
    #[serde(default)]
    pub noise_occupation: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JohnsonConfig {
    /// CSV with `temperature_k,power_w` columns.
    pub input: Option<PathBuf>,
    pub bw_hz: Option<f64>,
    /// Noise-temperature step: SNR improvement with the pump on.
    pub delta_snr: Option<f64>,
    /// TWPA net gain in dB for the same step.
    pub g_twpa_db: Option<f64>,
}
