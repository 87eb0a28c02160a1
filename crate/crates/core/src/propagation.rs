//! Parametric gain with distributed loss along the traveling-wave line.
//!
//! Signal and idler obey the Heisenberg-Langevin pair
//!
//! ```text
//! (∂_t + v∂_x) a_S  = χ a_I† − (κ/2) a_S  + √κ ξ_S
//! (∂_t + v∂_x) a_I† = χ a_S  − (κ/2) a_I† + √κ ξ_I†
//! ```
//!
//! with perfect phase matching and a frequency-independent loss rate `κ`.
//! The deterministic part is the scattering matrix
//! `S(x) = e^{−κx/2v + iωx/v} [[cosh χx/v, sinh χx/v], [sinh χx/v, cosh χx/v]]`;
//! the Langevin terms inject noise that keeps the output commutators intact.
//!
//! Covariances are propagated with Gaussian channels `V ↦ X V Xᵀ + Y` in the
//! quadrature basis `(I_S, Q_S, I_I, Q_I)`, vacuum variance one.

use nalgebra::{Complex, DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::gaussian::CovarianceMatrix;

/// Line parameters. Rates are in 1/s, lengths in m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationParams {
    /// Distributed power loss rate `κ`.
    pub kappa: f64,
    /// Parametric interaction strength `χ`.
    pub chi: f64,
    /// Group velocity.
    pub v: f64,
    pub length: f64,
    /// Signal detuning, rad/s; only enters the global phase of `S`.
    pub omega: f64,
    /// Phase of the parametric coupling, a stand-in for residual pump phase
    /// shifts. Rotates the squeezing axes, never the gain.
    #[serde(default)]
    pub chi_phase: f64,
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(invalid_arg(format!("kappa must be >= 0, got {}", self.kappa)));
        }
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(invalid_arg(format!("group velocity must be > 0, got {}", self.v)));
        }
        if !(self.length >= 0.0) || !self.length.is_finite() {
            return Err(invalid_arg(format!("length must be >= 0, got {}", self.length)));
        }
        if !self.chi.is_finite() || !self.omega.is_finite() || !self.chi_phase.is_finite() {
            return Err(invalid_arg("chi, omega and chi_phase must be finite"));
        }
        Ok(())
    }

    /// Gain parameter `r = χL/v`.
    pub fn gain_parameter(&self) -> f64 {
        self.chi * self.length / self.v
    }

    /// Integrated loss `κL/v`; the line transmits `e^{−κL/v}`.
    pub fn loss_exponent(&self) -> f64 {
        self.kappa * self.length / self.v
    }

    /// Sets `κ` so that the whole line transmits `e^{−tan δ · θ}`.
    pub fn with_tan_delta_loss(self, tan_delta: f64, electrical_length: f64) -> Self {
        Self {
            kappa: tan_delta * electrical_length * self.v / self.length,
            ..self
        }
    }
}

/// `S(x)` linking `(a_S, a_I†)` at `x` to their values at the input.
pub fn scattering_matrix(x: f64, params: &PropagationParams) -> Result<Matrix2<Complex<f64>>> {
    params.validate()?;
    if !(0.0..=params.length).contains(&x) {
        return Err(invalid_arg(format!(
            "position {x} outside the line [0, {}]",
            params.length
        )));
    }
    let prefactor = Complex::new(-params.kappa * x / (2.0 * params.v), params.omega * x / params.v).exp();
    let r = params.chi * x / params.v;
    let diag = prefactor * r.cosh();
    let off = prefactor * r.sinh();
    Ok(Matrix2::new(diag, off, off, diag))
}

/// `|S₁₁|² − |S₁₂|² + (κ/v)∫₀ˣ (|S₁₁|² − |S₁₂|²) dx′`, evaluated with
/// composite Simpson quadrature on `n_quad` intervals.
///
/// The Langevin noise restores what the damping removes, so this is one for
/// every `x`.
pub fn commutator_balance(x: f64, params: &PropagationParams, n_quad: usize) -> Result<f64> {
    let weight = |s: &Matrix2<Complex<f64>>| s[(0, 0)].norm_sqr() - s[(0, 1)].norm_sqr();
    let direct = weight(&scattering_matrix(x, params)?);
    if params.kappa == 0.0 || x == 0.0 {
        return Ok(direct);
    }
    let n = n_quad.max(2) & !1;
    let h = x / n as f64;
    let mut sum = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * weight(&scattering_matrix((k as f64 * h).min(x), params)?);
    }
    Ok(direct + params.kappa / params.v * sum * h / 3.0)
}

/// Power gain `cosh² r` of a lossless line.
pub fn ideal_gain(params: &PropagationParams) -> Result<f64> {
    params.validate()?;
    if params.kappa != 0.0 {
        return Err(invalid_arg(
            "ideal_gain requires a lossless line; use distributed_output for kappa > 0",
        ));
    }
    Ok(params.gain_parameter().cosh().powi(2))
}

/// `r` with `cosh² r = gain` (linear power gain ≥ 1).
pub fn gain_parameter_for(gain: f64) -> Result<f64> {
    if !(gain >= 1.0) {
        return Err(invalid_arg(format!("power gain must be >= 1, got {gain}")));
    }
    Ok(gain.sqrt().acosh())
}

/// Lumped input-output channel of the amplifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IoChannel {
    /// Direct power gain at the signal frequency.
    pub g_signal: f64,
    /// Direct power gain at the idler frequency.
    pub g_idler: f64,
    /// Power transmissivity of the internal loss.
    pub eta: f64,
}

impl IoChannel {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid_arg(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        for g in [self.g_signal, self.g_idler] {
            if !(g >= 1.0) || !g.is_finite() {
                return Err(invalid_arg(format!("gains must be finite and >= 1, got {g}")));
            }
        }
        // A phase-matched two-mode squeezer amplifies both partners equally.
        if (self.g_signal - self.g_idler).abs() > 1e-9 * self.g_signal {
            return Err(invalid_arg(format!(
                "signal and idler gains must match, got {} and {}",
                self.g_signal, self.g_idler
            )));
        }
        Ok(())
    }

    /// Net gain `G_T = η G_S` seen at the output.
    pub fn net_gain(&self) -> f64 {
        self.eta * self.g_signal
    }
}

/// Mean photon numbers of the loss-port noise modes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseOccupations {
    pub signal: f64,
    pub idler: f64,
}

impl NoiseOccupations {
    pub fn vacuum() -> Self {
        Self::default()
    }

    pub fn uniform(n: f64) -> Self {
        Self { signal: n, idler: n }
    }

    fn validate(&self) -> Result<()> {
        for n in [self.signal, self.idler] {
            if !(n >= 0.0) || !n.is_finite() {
                return Err(invalid_arg(format!("noise occupations must be >= 0, got {n}")));
            }
        }
        Ok(())
    }
}

/// A Gaussian channel `V ↦ X V Xᵀ + Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChannel {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl GaussianChannel {
    pub fn identity(dim: usize) -> Self {
        Self {
            x: DMatrix::identity(dim, dim),
            y: DMatrix::zeros(dim, dim),
        }
    }

    /// Two-mode squeezer with `cosh² r` gain and coupling phase `φ`.
    pub fn two_mode_squeezer(r: f64, phase: f64) -> Self {
        let (c, s) = (r.cosh(), r.sinh());
        let (cp, sp) = (phase.cos(), phase.sin());
        #[rustfmt::skip]
        let x = DMatrix::from_row_slice(4, 4, &[
            c,       0.0,     s * cp,  s * sp,
            0.0,     c,       s * sp,  -s * cp,
            s * cp,  s * sp,  c,       0.0,
            s * sp,  -s * cp, 0.0,     c,
        ]);
        Self {
            x,
            y: DMatrix::zeros(4, 4),
        }
    }

    /// Symmetric beam-splitter loss on both modes with thermal noise ports.
    pub fn loss(transmissivity: f64, occ: NoiseOccupations) -> Self {
        let t = transmissivity;
        let mut y = DMatrix::zeros(4, 4);
        for (k, n) in [occ.signal, occ.signal, occ.idler, occ.idler].into_iter().enumerate() {
            y[(k, k)] = (1.0 - t) * (2.0 * n + 1.0);
        }
        Self {
            x: DMatrix::identity(4, 4) * t.sqrt(),
            y,
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &GaussianChannel) -> GaussianChannel {
        GaussianChannel {
            x: &next.x * &self.x,
            y: &next.x * &self.y * next.x.transpose() + &next.y,
        }
    }

    pub fn apply(&self, v: &CovarianceMatrix) -> Result<CovarianceMatrix> {
        let out = &self.x * v.matrix() * self.x.transpose() + &self.y;
        let sym = (&out + out.transpose()) * 0.5;
        CovarianceMatrix::new(sym)
    }

    /// Output for vacuum inputs.
    pub fn output_vacuum(&self) -> Result<CovarianceMatrix> {
        self.apply(&CovarianceMatrix::vacuum(self.x.nrows() / 2))
    }
}

/// Output covariance of the lumped channel for vacuum inputs.
///
/// The amplifier is modeled as an ideal two-mode squeezer of gain `G`
/// followed by symmetric loss `η` whose ports carry the given thermal
/// occupations. The net gain is `G_T = ηG` and an unpumped device (`G = 1`)
/// reduces to plain attenuation.
pub fn output_covariance(channel: &IoChannel, occupations: NoiseOccupations) -> Result<CovarianceMatrix> {
    channel.validate()?;
    occupations.validate()?;
    let r = gain_parameter_for(channel.g_signal)?;
    GaussianChannel::two_mode_squeezer(r, 0.0)
        .then(&GaussianChannel::loss(channel.eta, occupations))
        .output_vacuum()
}

/// Loss of a dielectric-limited line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    /// Power transmissivity `e^{−tan δ · θ}`.
    pub transmissivity: f64,
    /// `10 log₁₀` of the transmissivity (≤ 0).
    pub db: f64,
}

pub fn loss_from_tan_delta(tan_delta: f64, electrical_length: f64) -> Result<LossEstimate> {
    if !(tan_delta >= 0.0) || !(electrical_length >= 0.0) {
        return Err(invalid_arg("tan delta and electrical length must be >= 0"));
    }
    let transmissivity = (-tan_delta * electrical_length).exp();
    Ok(LossEstimate {
        transmissivity,
        db: 10.0 * transmissivity.log10(),
    })
}

/// Result of integrating the line segment by segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedOutput {
    /// Effective lumped gains and loss read off the composed channel.
    pub channel: IoChannel,
    /// The composed Gaussian channel, including the distributed noise.
    pub gaussian: GaussianChannel,
}

impl DistributedOutput {
    /// `G_T = η G_S`.
    pub fn net_gain(&self) -> f64 {
        self.channel.net_gain()
    }

    pub fn output_covariance(&self) -> Result<CovarianceMatrix> {
        self.gaussian.output_vacuum()
    }
}

/// Integrates gain and loss over `n_segments` equal slices of the line.
///
/// Each slice applies half its loss, its gain, then the other half of the
/// loss; noise enters at every loss step with the given occupations. The
/// deterministic part is exact for any `n`, and the accumulated noise
/// converges to the continuum integral as `n` grows.
pub fn distributed_output(
    params: &PropagationParams,
    n_segments: usize,
    occupations: NoiseOccupations,
) -> Result<DistributedOutput> {
    params.validate()?;
    occupations.validate()?;
    if n_segments == 0 {
        return Err(invalid_arg("need at least one segment"));
    }
    let dx = params.length / n_segments as f64;
    let half_loss = GaussianChannel::loss((-params.kappa * dx / (2.0 * params.v)).exp(), occupations);
    let gain = GaussianChannel::two_mode_squeezer(params.chi * dx / params.v, params.chi_phase);
    let slice = half_loss.then(&gain).then(&half_loss);

    let mut total = GaussianChannel::identity(4);
    for _ in 0..n_segments {
        total = total.then(&slice);
    }
    Ok(DistributedOutput {
        channel: effective_channel(&total.x),
        gaussian: total,
    })
}

/// Reads `η` and `G` from a composed transfer matrix `√η · X_squeeze(r)`.
fn effective_channel(x: &DMatrix<f64>) -> IoChannel {
    let direct = x[(0, 0)].powi(2) + x[(0, 1)].powi(2);
    let conversion = x[(0, 2)].powi(2) + x[(0, 3)].powi(2);
    let eta = direct - conversion;
    let g = direct / eta;
    IoChannel {
        g_signal: g,
        g_idler: g,
        eta,
    }
}
