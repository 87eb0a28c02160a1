//! From raw quadrature voltages to vacuum-referenced covariance matrices.
//!
//! The measured ON and OFF covariances (in V²) are mapped to the TWPA output
//! covariance by
//!
//! ```text
//! V_ii = (⟨x_i²⟩_ON − ⟨x_i²⟩_OFF)/𝒩 + 1,    V_ij = ⟨x_i x_j⟩_ON/𝒩,
//! 𝒩 = G·Z₀·h·f·BW/(4η)
//! ```
//!
//! where `G` is the calibrated pump-off gain of the chain and `η` the TWPA
//! transmissivity.

use std::f64::consts::LN_10;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{invalid_arg, Error, Result};
use crate::gaussian::{CovarianceMatrix, EntanglementReport, QuadratureSelector};
use crate::io::{QuadratureRecord, RecordStatistics};
use crate::stats::MomentAccumulator;
use crate::units::{db_to_linear, linear_to_db, photons_from_temperature, temperature_from_photons, BOLTZMANN, PLANCK};

/// Linear parameters of the measurement chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementChain {
    /// Pump-off gain from the TWPA input to the digitizer, `G_OFF = η·G_sys`.
    pub g_off: f64,
    /// TWPA power transmissivity with the pump off.
    pub eta: f64,
    /// Ohms.
    pub z0: f64,
    /// Center frequency, Hz.
    pub f: f64,
    /// Measurement bandwidth, Hz.
    pub bw: f64,
    /// Input-referred noise temperature of the amplifiers after the TWPA, K.
    pub t_sys: Option<f64>,
}

impl MeasurementChain {
    pub fn from_db(g_off_db: f64, eta_db: f64, z0: f64, f: f64, bw: f64) -> Result<Self> {
        if eta_db > 0.0 {
            return Err(invalid_arg(format!("eta_db must be <= 0, got {eta_db}")));
        }
        let chain = Self {
            g_off: db_to_linear(g_off_db),
            eta: db_to_linear(eta_db),
            z0,
            f,
            bw,
            t_sys: None,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn with_t_sys(mut self, kelvin: f64) -> Self {
        self.t_sys = Some(kelvin);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(invalid_arg(format!("{name} must be finite and > 0, got {x}")))
            }
        };
        positive("g_off", self.g_off)?;
        positive("z0", self.z0)?;
        positive("f", self.f)?;
        positive("bw", self.bw)?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid_arg(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if let Some(t) = self.t_sys {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(invalid_arg(format!("t_sys must be finite and >= 0, got {t}")));
            }
        }
        Ok(())
    }

    /// Gain after the TWPA, `G_sys = G_OFF/η`.
    pub fn g_sys(&self) -> f64 {
        self.g_off / self.eta
    }

    /// Vacuum quadrature variance at the digitizer per unit gain, `Z₀hf·BW/4` in V².
    pub fn vacuum_scale(&self) -> f64 {
        self.z0 * PLANCK * self.f * self.bw / 4.0
    }

    /// Amplifier noise occupation implied by `t_sys`; zero when unset.
    pub fn amplifier_occupation(&self) -> f64 {
        self.t_sys.map_or(0.0, |t| photons_from_temperature(t, self.f))
    }
}

/// Calibration settings as stored in a config file. Gains in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub g_off_db: f64,
    #[serde(default)]
    pub g_off_db_err: f64,
    pub eta_db: f64,
    #[serde(default)]
    pub eta_db_err: f64,
    #[serde(default = "default_z0")]
    pub z0_ohm: f64,
    pub f_hz: f64,
    pub bw_hz: f64,
    /// Classical correlation floor subtracted from reported `E`.
    #[serde(default)]
    pub e0_baseline: f64,
    #[serde(default)]
    pub t_sys_k: Option<f64>,
}

fn default_z0() -> f64 {
    50.0
}

impl CalibrationConfig {
    pub fn chain(&self) -> Result<MeasurementChain> {
        let mut c = MeasurementChain::from_db(self.g_off_db, self.eta_db, self.z0_ohm, self.f_hz, self.bw_hz)?;
        c.t_sys = self.t_sys_k;
        c.validate()?;
        Ok(c)
    }

    pub fn uncertainty(&self) -> Result<ChainUncertainty> {
        ChainUncertainty::new(self.g_off_db_err, self.eta_db_err)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.chain()?;
        c.uncertainty()?;
        if !(c.e0_baseline >= 0.0) {
            return Err(invalid_arg("e0_baseline must be >= 0"));
        }
        Ok(c)
    }
}

/// `𝒩 = G_OFF·Z₀·h·f·BW/(4η)` in V².
pub fn normalization_coefficient(chain: &MeasurementChain) -> Result<f64> {
    chain.validate()?;
    Ok(chain.g_off * chain.vacuum_scale() / chain.eta)
}

fn check_pair(on: &DMatrix<f64>, off: &DMatrix<f64>, n_coeff: f64) -> Result<()> {
    if on.shape() != off.shape() || !on.is_square() || !on.nrows().is_multiple_of(2) || on.nrows() == 0 {
        return Err(invalid_arg(format!(
            "ON {:?} and OFF {:?} covariances must be matching 2N x 2N matrices",
            on.shape(),
            off.shape()
        )));
    }
    if !(n_coeff > 0.0 && n_coeff.is_finite()) {
        return Err(invalid_arg(format!("normalization must be > 0, got {n_coeff}")));
    }
    Ok(())
}

/// Vacuum-referenced covariance from ON/OFF sample covariances (V²).
///
/// Diagonal entries subtract the OFF variance; cross entries use the ON
/// covariance alone.
pub fn scaled_covariance_matrix(on: &DMatrix<f64>, off: &DMatrix<f64>, n_coeff: f64) -> Result<CovarianceMatrix> {
    check_pair(on, off, n_coeff)?;
    let d = on.nrows();
    let data = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            (on[(i, i)] - off[(i, i)]) / n_coeff + 1.0
        } else {
            on[(i, j)] / n_coeff
        }
    });
    CovarianceMatrix::new(data)
}

/// `V_out = 4·[η(V_ON − V_OFF)/(G_OFF·Z₀hf·BW) + ¼·1]`, subtracting the
/// full OFF matrix. Agrees with [`scaled_covariance_matrix`] whenever the
/// OFF covariance is diagonal.
pub fn scaled_covariance_full_subtraction(
    on: &DMatrix<f64>,
    off: &DMatrix<f64>,
    chain: &MeasurementChain,
) -> Result<CovarianceMatrix> {
    chain.validate()?;
    check_pair(on, off, 1.0)?;
    let d = on.nrows();
    let scale = chain.eta / (chain.g_off * chain.z0 * PLANCK * chain.f * chain.bw);
    let data = (on - off) * (4.0 * scale) + DMatrix::identity(d, d);
    CovarianceMatrix::new(data)
}

/// [`scaled_covariance_matrix`] on streamed record statistics.
pub fn scaled_covariance(on: &RecordStatistics, off: &RecordStatistics, n_coeff: f64) -> Result<CovarianceMatrix> {
    if on.header.labels != off.header.labels {
        return Err(invalid_arg(format!(
            "ON channels {:?} differ from OFF channels {:?}",
            on.header.labels, off.header.labels
        )));
    }
    let too_few = || invalid_arg("need at least two frames per pump state");
    let c_on = on.covariance.covariance().ok_or_else(too_few)?;
    let c_off = off.covariance.covariance().ok_or_else(too_few)?;
    scaled_covariance_matrix(&c_on, &c_off, n_coeff)
}

/// Result of a Johnson–Nyquist fit `P(T) = BW·k_B·G·(T_N + T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub gain: f64,
    pub gain_err: f64,
    /// Kelvin.
    pub t_n: f64,
    pub t_n_err: f64,
    pub residuals: Vec<f64>,
    /// Residual degrees of freedom, `points − 2`.
    pub dof: usize,
}

impl CalibrationFit {
    pub fn gain_db(&self) -> f64 {
        linear_to_db(self.gain)
    }

    /// First-order dB error of the gain.
    pub fn gain_db_err(&self) -> f64 {
        10.0 / LN_10 * self.gain_err / self.gain
    }

    /// Multiplier turning a standard error into a half-width with the
    /// two-sided coverage a normal `k_sigma` band would have, using the
    /// Student-t distribution with [`dof`](Self::dof) degrees of freedom.
    pub fn coverage_factor(&self, k_sigma: f64) -> f64 {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let p = normal.cdf(k_sigma);
        if self.dof == 0 {
            return f64::INFINITY;
        }
        StudentsT::new(0.0, 1.0, self.dof as f64)
            .map(|t| t.inverse_cdf(p))
            .unwrap_or(f64::INFINITY)
    }

    /// `"91.74 ± 0.20 dB"`.
    pub fn gain_summary(&self) -> String {
        format!("{:.2} ± {:.2} dB", self.gain_db(), self.gain_db_err())
    }
}

/// Ordinary least squares of `P` against `T` for `(kelvin, watts)` points.
pub fn johnson_nyquist_fit(points: &[(f64, f64)], bw: f64) -> Result<CalibrationFit> {
    if points.len() < 3 {
        return Err(invalid_arg(format!("need at least 3 points, got {}", points.len())));
    }
    if !(bw > 0.0) {
        return Err(invalid_arg(format!("bandwidth must be > 0, got {bw}")));
    }
    if points.iter().any(|(t, p)| !t.is_finite() || !p.is_finite()) {
        return Err(invalid_arg("fit points must be finite"));
    }
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let p_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - t_mean).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - t_mean) * (p.1 - p_mean)).sum();
    if !(sxx > 1e-12 * t_mean.abs().max(1.0).powi(2)) {
        return Err(invalid_arg("temperatures must not all be equal"));
    }
    let slope = sxy / sxx;
    let intercept = p_mean - slope * t_mean;
    if !(slope > 0.0) {
        return Err(Error::NumericFailure {
            routine: "johnson_nyquist_fit",
            iterations: 1,
            detail: format!("fitted slope {slope} is not positive"),
        });
    }
    let residuals: Vec<f64> = points.iter().map(|&(t, p)| p - (intercept + slope * t)).collect();
    let dof = points.len() - 2;
    let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64;
    let var_slope = s2 / sxx;
    let var_intercept = s2 * (1.0 / n + t_mean * t_mean / sxx);
    let cov = -t_mean * s2 / sxx;

    let k = BOLTZMANN * bw;
    let t_n = intercept / slope;
    // Delta method for the ratio b/a.
    let var_tn = var_intercept / slope.powi(2) + intercept.powi(2) * var_slope / slope.powi(4)
        - 2.0 * intercept * cov / slope.powi(3);
    Ok(CalibrationFit {
        gain: slope / k,
        gain_err: var_slope.sqrt() / k,
        t_n,
        t_n_err: var_tn.max(0.0).sqrt(),
        residuals,
        dof,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureStatus {
    Ok,
    /// The inputs imply a negative temperature.
    NegativeWarning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseTemperature {
    pub kelvin: f64,
    pub status: TemperatureStatus,
}

/// `T_sys = T_N,OFF·(δ_SNR⁻¹ − G_T⁻¹)`. `g_twpa` may be infinite.
pub fn system_noise_temperature(t_n_off: f64, delta_snr: f64, g_twpa: f64) -> Result<NoiseTemperature> {
    for (name, x) in [("t_n_off", t_n_off), ("delta_snr", delta_snr), ("g_twpa", g_twpa)] {
        if !(x > 0.0) {
            return Err(invalid_arg(format!("{name} must be > 0, got {x}")));
        }
    }
    let kelvin = t_n_off * (1.0 / delta_snr - 1.0 / g_twpa);
    let status = if kelvin < 0.0 {
        TemperatureStatus::NegativeWarning
    } else {
        TemperatureStatus::Ok
    };
    Ok(NoiseTemperature { kelvin, status })
}

/// `η_e = 1/(1 + N)` for `N` added photons.
pub fn quantum_efficiency(added_photons: f64) -> f64 {
    1.0 / (1.0 + added_photons)
}

/// `N = 1/η_e − 1`.
pub fn added_photons(efficiency: f64) -> f64 {
    1.0 / efficiency - 1.0
}

/// Added photons of a noise temperature at frequency `f`.
pub fn added_photons_from_temperature(kelvin: f64, f: f64) -> f64 {
    photons_from_temperature(kelvin, f)
}

pub fn temperature_from_added_photons(photons: f64, f: f64) -> f64 {
    temperature_from_photons(photons, f)
}

pub const GAUSSIANITY_MIN_SAMPLES: u64 = 10_000;
pub const GAUSSIANITY_THRESHOLD: f64 = 0.01;

/// Skewness and kurtosis of the I and Q samples of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianityResult {
    pub skewness: [f64; 2],
    pub kurtosis: [f64; 2],
    pub samples: u64,
    pub pass: bool,
}

impl GaussianityResult {
    pub fn worst_skewness(&self) -> f64 {
        self.skewness.iter().fold(0.0f64, |a, s| a.max(s.abs()))
    }

    pub fn worst_excess_kurtosis(&self) -> f64 {
        self.kurtosis.iter().fold(0.0f64, |a, k| a.max((k - 3.0).abs()))
    }
}

/// Gaussianity from accumulated I and Q moments.
pub fn gaussianity_from_moments(i: &MomentAccumulator, q: &MomentAccumulator) -> Result<GaussianityResult> {
    let n = i.count().min(q.count());
    if n < GAUSSIANITY_MIN_SAMPLES {
        return Err(invalid_arg(format!(
            "gaussianity test needs at least {GAUSSIANITY_MIN_SAMPLES} samples, got {n}"
        )));
    }
    if !(i.variance() > 0.0 && q.variance() > 0.0) {
        return Err(invalid_arg("gaussianity test needs non-constant samples"));
    }
    let skewness = [i.skewness(), q.skewness()];
    let kurtosis = [i.kurtosis(), q.kurtosis()];
    let pass = skewness.iter().all(|s| s.abs() <= GAUSSIANITY_THRESHOLD)
        && kurtosis.iter().all(|k| (k - 3.0).abs() <= GAUSSIANITY_THRESHOLD);
    Ok(GaussianityResult {
        skewness,
        kurtosis,
        samples: n,
        pass,
    })
}

/// Passes iff `|skew| ≤ 0.01` and `|kurt − 3| ≤ 0.01` for both quadratures.
pub fn gaussianity_test(record: &QuadratureRecord) -> Result<GaussianityResult> {
    record.validate()?;
    let (mut i, mut q) = (MomentAccumulator::new(), MomentAccumulator::new());
    for s in &record.samples {
        i.push(s[0]);
        q.push(s[1]);
    }
    gaussianity_from_moments(&i, &q)
}

/// Per-channel Gaussianity of streamed record statistics.
pub fn gaussianity_of_statistics(stats: &RecordStatistics) -> Result<Vec<GaussianityResult>> {
    stats
        .moments
        .chunks_exact(2)
        .map(|m| gaussianity_from_moments(&m[0], &m[1]))
        .collect()
}

/// One-sigma dB uncertainties of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChainUncertainty {
    pub g_off_db: f64,
    pub eta_db: f64,
}

impl ChainUncertainty {
    pub fn new(g_off_db: f64, eta_db: f64) -> Result<Self> {
        if !(g_off_db >= 0.0 && eta_db >= 0.0) {
            return Err(invalid_arg("uncertainties must be >= 0"));
        }
        Ok(Self { g_off_db, eta_db })
    }

    /// Worst-case spread of `𝒩` in dB. `𝒩 ∝ G_OFF/η`, so the two add.
    pub fn normalization_db(&self) -> f64 {
        self.g_off_db + self.eta_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn point(value: f64) -> Self {
        Self {
            value,
            lo: value,
            hi: value,
        }
    }

    fn include(&mut self, x: f64) {
        self.lo = self.lo.min(x);
        self.hi = self.hi.max(x);
    }

    /// Largest distance from the value to either end.
    pub fn half_spread(&self) -> f64 {
        (self.value - self.lo).max(self.hi - self.value)
    }
}

/// Metrics at the nominal calibration with their corner-evaluation spreads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainReport {
    pub nominal: EntanglementReport,
    pub log_negativity: Interval,
    pub nu_min: Interval,
    pub purity: Interval,
    pub entropy_of_formation: Interval,
    pub squeeze_plus_db: Interval,
    pub squeeze_minus_db: Interval,
}

/// `V` recomputed as if `𝒩` had been `𝒩·ratio`: `1 + (V − 1)/ratio`.
pub fn renormalize(v: &CovarianceMatrix, ratio: f64) -> Result<CovarianceMatrix> {
    let d = v.dim();
    let id = DMatrix::<f64>::identity(d, d);
    CovarianceMatrix::new(&id + (v.matrix() - &id) / ratio)
}

/// Re-evaluates the metrics at the four corners `(G_OFF ± σ_G, η ± σ_η)`
/// and reports the min/max spread around the nominal values.
pub fn propagate_uncertainty(
    v_out: &CovarianceMatrix,
    uncertainty: &ChainUncertainty,
    side: &[usize],
    selector: &QuadratureSelector,
) -> Result<UncertainReport> {
    let nominal = EntanglementReport::from_covariance(v_out, side, selector)?;
    let mut out = UncertainReport {
        log_negativity: Interval::point(nominal.log_negativity),
        nu_min: Interval::point(nominal.nu_min),
        purity: Interval::point(nominal.purity),
        entropy_of_formation: Interval::point(nominal.entropy_of_formation),
        squeeze_plus_db: Interval::point(nominal.squeeze_plus_db),
        squeeze_minus_db: Interval::point(nominal.squeeze_minus_db),
        nominal,
    };
    for sg in [-1.0, 1.0] {
        for se in [-1.0, 1.0] {
            // 𝒩 ∝ G_OFF/η
            let shift_db = sg * uncertainty.g_off_db - se * uncertainty.eta_db;
            if shift_db == 0.0 {
                continue;
            }
            let v = renormalize(v_out, db_to_linear(shift_db))?;
            let r = EntanglementReport::from_covariance(&v, side, selector)?;
            out.log_negativity.include(r.log_negativity);
            out.nu_min.include(r.nu_min);
            out.purity.include(r.purity);
            out.entropy_of_formation.include(r.entropy_of_formation);
            out.squeeze_plus_db.include(r.squeeze_plus_db);
            out.squeeze_minus_db.include(r.squeeze_minus_db);
        }
    }
    Ok(out)
}

/// `max(E − E₀, 0)`.
pub fn subtract_baseline(e: f64, e0: f64) -> f64 {
    (e - e0).max(0.0)
}
