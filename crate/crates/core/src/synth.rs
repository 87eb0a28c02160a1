//! Seeded synthetic ON/OFF records drawn from a known TWPA output state.
//!
//! With the pump on the digitizer sees, per quadrature and in units of the
//! vacuum variance `s = Z₀hf·BW/4`,
//!
//! ```text
//! Σ_ON  = s·[G_sys·V_out + (G_sys − 1)(2n_h + 1)·1]
//! Σ_OFF = s·[G_sys·(η + (1 − η)(2n_ζ + 1))·1 + (G_sys − 1)(2n_h + 1)·1]
//! ```
//!
//! with `G_sys = G_OFF/η`, amplifier noise occupation `n_h` and loss-port
//! occupation `n_ζ`. Frames are drawn as `L·z` with `L` the Cholesky factor
//! of `Σ` and `z` standard normal.
//!
//! Records are generated in chunks of [`CHUNK_FRAMES`] frames. Chunk `k` of
//! pump state `p` draws from ChaCha20 stream `2k + p` of the scenario seed,
//! so chunks can be produced in parallel and the output does not depend on
//! the thread count.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::MeasurementChain;
use crate::error::{invalid_arg, invalid_state, Error, Result};
use crate::gaussian::{transposed_nu_min, CovarianceMatrix};
use crate::io::{PumpState, RecordHeader, RecordSet, RecordStatistics};
use crate::propagation::{distributed_output, output_covariance, IoChannel, NoiseOccupations, PropagationParams};

pub const CHUNK_FRAMES: usize = 65_536;

/// Mid-tread uniform quantizer over `[−full_scale, full_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub bits: u32,
    /// Volts.
    pub full_scale: f64,
}

impl Quantizer {
    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.bits) {
            return Err(invalid_arg(format!(
                "quantizer bits must be in 1..=32, got {}",
                self.bits
            )));
        }
        if !(self.full_scale > 0.0 && self.full_scale.is_finite()) {
            return Err(invalid_arg("quantizer full scale must be > 0"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.full_scale / (1u64 << self.bits) as f64
    }

    pub fn apply(&self, x: f64) -> f64 {
        let step = self.step();
        let half = (1i64 << (self.bits - 1)) as f64;
        (x / step).round().clamp(-half, half - 1.0) * step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainScenario {
    /// TWPA output covariance, vacuum-normalized.
    pub target_state: CovarianceMatrix,
    pub chain: MeasurementChain,
    /// Frames per pump state.
    pub n_samples: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub quantizer: Option<Quantizer>,
    /// Occupation of the amplifier noise modes. `None` derives it from the
    /// chain's noise temperature.
    #[serde(default)]
    pub amplifier_occupation: Option<f64>,
    /// Occupation of the TWPA loss ports with the pump off.
    #[serde(default)]
    pub loss_occupation: f64,
    /// Hz, recorded in the file headers only.
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
}

fn default_sample_rate() -> f64 {
    1e6
}

impl ChainScenario {
    pub fn new(target_state: CovarianceMatrix, chain: MeasurementChain, n_samples: u64, rng_seed: u64) -> Self {
        Self {
            target_state,
            chain,
            n_samples,
            rng_seed,
            quantizer: None,
            amplifier_occupation: None,
            loss_occupation: 0.0,
            sample_rate: default_sample_rate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.n_samples == 0 {
            return Err(invalid_arg("n_samples must be >= 1"));
        }
        if 2 * self.target_state.n_modes() > crate::stats::MAX_DIM {
            return Err(invalid_arg("too many modes for a record file"));
        }
        if let Some(q) = &self.quantizer {
            q.validate()?;
        }
        let n_h = self.amplifier_occupation();
        if !(n_h >= 0.0 && n_h.is_finite()) || !(self.loss_occupation >= 0.0 && self.loss_occupation.is_finite()) {
            return Err(invalid_arg("noise occupations must be finite and >= 0"));
        }
        self.target_state.ensure_physical()
    }

    pub fn amplifier_occupation(&self) -> f64 {
        self.amplifier_occupation
            .unwrap_or_else(|| self.chain.amplifier_occupation())
    }

    pub fn header(&self, pump: PumpState) -> RecordHeader {
        RecordHeader::new(self.target_state.n_modes(), self.sample_rate, pump)
    }
}

/// `(Σ_ON, Σ_OFF)` of the digitized voltages, V².
pub fn measured_covariances(scenario: &ChainScenario) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    scenario.validate()?;
    let c = &scenario.chain;
    let d = scenario.target_state.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let g = c.g_sys();
    let added = (g - 1.0) * (2.0 * scenario.amplifier_occupation() + 1.0);
    let off_twpa = c.eta + (1.0 - c.eta) * (2.0 * scenario.loss_occupation + 1.0);
    let s = c.vacuum_scale();
    let on = (scenario.target_state.matrix() * g + &id * added) * s;
    let off = &id * ((g * off_twpa + added) * s);
    Ok((on, off))
}

fn factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Cholesky::new(sigma.clone())
        .map(|c| c.l())
        .ok_or_else(|| invalid_state("measured covariance is not positive definite"))
}

fn pump_bit(p: PumpState) -> u64 {
    match p {
        PumpState::Off => 0,
        PumpState::On => 1,
    }
}

fn n_chunks(n_samples: u64) -> u64 {
    n_samples.div_ceil(CHUNK_FRAMES as u64)
}

/// Frames of chunk `k`, interleaved.
fn chunk_frames(scenario: &ChainScenario, l: &DMatrix<f64>, pump: PumpState, k: u64) -> Vec<f64> {
    let d = l.nrows();
    let start = k * CHUNK_FRAMES as u64;
    let len = (scenario.n_samples - start).min(CHUNK_FRAMES as u64) as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(scenario.rng_seed);
    rng.set_stream((k << 1) | pump_bit(pump));
    let mut out = Vec::with_capacity(len * d);
    let mut z = DVector::<f64>::zeros(d);
    for _ in 0..len {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut x = 0.0;
            for j in 0..=i {
                x += l[(i, j)] * z[j];
            }
            out.push(match &scenario.quantizer {
                Some(q) => q.apply(x),
                None => x,
            });
        }
    }
    out
}

/// Streams one pump state's frames to `sink` in order, generating chunks
/// in parallel batches.
pub fn generate_frames(
    scenario: &ChainScenario,
    pump: PumpState,
    mut sink: impl FnMut(&[f64]) -> Result<()>,
) -> Result<()> {
    let (on, off) = measured_covariances(scenario)?;
    let l = factor(match pump {
        PumpState::On => &on,
        PumpState::Off => &off,
    })?;
    let total = n_chunks(scenario.n_samples);
    let batch = (2 * rayon::current_num_threads()).max(1) as u64;
    let mut k0 = 0;
    while k0 < total {
        let k1 = (k0 + batch).min(total);
        let chunks: Vec<Vec<f64>> = (k0..k1)
            .into_par_iter()
            .map(|k| chunk_frames(scenario, &l, pump, k))
            .collect();
        for c in &chunks {
            sink(c)?;
        }
        k0 = k1;
    }
    Ok(())
}

/// In-memory ON and OFF records.
pub fn sample_records(scenario: &ChainScenario) -> Result<(RecordSet, RecordSet)> {
    let run = |pump| -> Result<RecordSet> {
        let mut frames = Vec::with_capacity(scenario.n_samples as usize * scenario.target_state.dim());
        generate_frames(scenario, pump, |c| {
            frames.extend_from_slice(c);
            Ok(())
        })?;
        Ok(RecordSet {
            header: scenario.header(pump),
            frames,
        })
    };
    Ok((run(PumpState::On)?, run(PumpState::Off)?))
}

/// ON and OFF statistics without materializing the records. Chunk
/// statistics are merged in chunk order.
pub fn simulate_statistics(scenario: &ChainScenario) -> Result<(RecordStatistics, RecordStatistics)> {
    let (on, off) = measured_covariances(scenario)?;
    let run = |pump: PumpState, sigma: &DMatrix<f64>| -> Result<RecordStatistics> {
        let l = factor(sigma)?;
        let header = scenario.header(pump);
        let parts: Vec<RecordStatistics> = (0..n_chunks(scenario.n_samples))
            .into_par_iter()
            .map(|k| {
                let mut s = RecordStatistics::new(header.clone());
                s.extend(&chunk_frames(scenario, &l, pump, k));
                s
            })
            .collect();
        let mut total = RecordStatistics::new(header);
        for p in &parts {
            total.merge(p);
        }
        Ok(total)
    };
    Ok((run(PumpState::On, &on)?, run(PumpState::Off, &off)?))
}

/// Lossy two-mode squeezed vacuum `TMSV(r)` followed by loss `η`, with the
/// squeezing chosen so the partially transposed `ν̃_min` equals `nu`.
///
/// Needs `1 − η < ν < 1`.
pub fn lumped_state_for_nu(nu: f64, eta: f64) -> Result<(f64, CovarianceMatrix)> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid_arg(format!("eta must lie in (0, 1], got {eta}")));
    }
    if !(nu > 1.0 - eta && nu <= 1.0) {
        return Err(invalid_arg(format!("nu must lie in ({}, 1], got {nu}", 1.0 - eta)));
    }
    let r = -0.5 * ((nu - 1.0 + eta) / eta).ln();
    let g = r.cosh().powi(2);
    let v = output_covariance(
        &IoChannel {
            g_signal: g,
            g_idler: g,
            eta,
        },
        NoiseOccupations::vacuum(),
    )?;
    Ok((r, v))
}

/// Excess noise growing with drive, emulating high-power degradation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationHook {
    /// `χ` above which noise is added.
    pub onset_chi: f64,
    /// Added occupation per `(χ − onset)²`, in units of `onset⁻²`.
    pub strength: f64,
}

impl SaturationHook {
    pub fn excess_occupation(&self, chi: f64) -> f64 {
        let x = ((chi - self.onset_chi) / self.onset_chi.abs().max(f64::MIN_POSITIVE)).max(0.0);
        self.strength * x * x
    }
}

/// Base settings of a pump sweep. `line.chi` is overridden per point and
/// `line.kappa` is set so the unpumped line transmits `chain.eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpSweep {
    pub line: PropagationParams,
    pub n_segments: usize,
    pub chain: MeasurementChain,
    pub n_samples: u64,
    pub rng_seed: u64,
    #[serde(default)]
    pub amplifier_occupation: Option<f64>,
    #[serde(default)]
    pub saturation: Option<SaturationHook>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub label: String,
    pub chi: f64,
    /// Effective TWPA gain `G_S` of the distributed model.
    pub gain: f64,
    pub v_out: CovarianceMatrix,
    pub scenario: ChainScenario,
}

/// Decorrelates per-point seeds.
fn point_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl PumpSweep {
    pub fn line_for(&self, chi: f64) -> Result<PropagationParams> {
        let mut line = self.line;
        line.validate()?;
        if !(line.length > 0.0) {
            return Err(invalid_arg("sweep line length must be > 0"));
        }
        line.kappa = -self.chain.eta.ln() * line.v / line.length;
        line.chi = chi;
        Ok(line)
    }

    /// TWPA output state at drive `χ`, including any saturation noise.
    pub fn state_for(&self, chi: f64) -> Result<(f64, CovarianceMatrix)> {
        let out = distributed_output(&self.line_for(chi)?, self.n_segments, NoiseOccupations::vacuum())?;
        let mut v = out.output_covariance()?;
        if let Some(h) = &self.saturation {
            let n = h.excess_occupation(chi);
            if n > 0.0 {
                let d = v.dim();
                v = CovarianceMatrix::new(v.matrix() + DMatrix::identity(d, d) * (2.0 * n))?;
            }
        }
        Ok((out.channel.g_signal, v))
    }

    /// `χ` at which the pumped line (without saturation) reaches `ν̃_min = nu`.
    pub fn chi_for_nu(&self, nu: f64, chi_max: f64) -> Result<f64> {
        let f = |chi: f64| -> Result<f64> {
            let out = distributed_output(&self.line_for(chi)?, self.n_segments, NoiseOccupations::vacuum())?;
            Ok(transposed_nu_min(&out.output_covariance()?, &[1])? - nu)
        };
        let (mut lo, mut hi) = (0.0, chi_max);
        if f(hi)? > 0.0 {
            return Err(invalid_arg(format!("nu = {nu} is not reached below chi = {chi_max}")));
        }
        for it in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.abs().max(1.0) {
                return Ok(0.5 * (lo + hi));
            }
            if it == 199 {
                break;
            }
        }
        Err(Error::NumericFailure {
            routine: "chi_for_nu",
            iterations: 200,
            detail: "bisection did not converge".into(),
        })
    }

    /// One scenario per labeled `χ`, in input order.
    pub fn build(&self, points: &[(String, f64)]) -> Result<Vec<SweepEntry>> {
        let mut seen = std::collections::HashSet::new();
        for (label, _) in points {
            if !seen.insert(label) {
                return Err(invalid_arg(format!("duplicate sweep label {label:?}")));
            }
        }
        points
            .par_iter()
            .enumerate()
            .map(|(i, (label, chi))| {
                let (gain, v_out) = self.state_for(*chi)?;
                let mut scenario =
                    ChainScenario::new(v_out.clone(), self.chain, self.n_samples, point_seed(self.rng_seed, i));
                scenario.amplifier_occupation = self.amplifier_occupation;
                Ok(SweepEntry {
                    label: label.clone(),
                    chi: *chi,
                    gain,
                    v_out,
                    scenario,
                })
            })
            .collect()
    }
}

/// Shorthand for [`PumpSweep::build`].
pub fn pump_power_sweep(sweep: &PumpSweep, points: &[(String, f64)]) -> Result<Vec<SweepEntry>> {
    sweep.build(points)
}
