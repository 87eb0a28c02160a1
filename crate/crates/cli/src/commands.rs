use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use kerrfree::calibration::{
    gaussianity_of_statistics, johnson_nyquist_fit, normalization_coefficient, propagate_uncertainty,
    scaled_covariance, subtract_baseline, system_noise_temperature, CalibrationConfig, TemperatureStatus,
};
use kerrfree::gaussian::{
    entanglement_rate, log_negativity_from_nu, EntanglementReport, FluxDensityUnit, QuadratureSelector,
};
use kerrfree::io::{self, BinaryRecordWriter, PumpState};
use kerrfree::propagation::{distributed_output, NoiseOccupations, PropagationParams};
use kerrfree::snail::{coefficient_sweep, kerr_free_search, KerrSearch, SnailParams};
use kerrfree::synth::{self, ChainScenario, PumpSweep};
use kerrfree::units::{db_to_linear, linear_to_db};
use kerrfree::CovarianceMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RecordFormat, RunConfig, SnailSweepConfig, TargetConfig};
use crate::output::{ensure_dir, write_json, write_table};
use crate::{Cli, Command, Format, GlobalArgs, UsageError};

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.global.config.as_deref())?;
    ensure_dir(&cli.global.out)?;
    match &cli.command {
        Command::SnailSweep(a) => snail_sweep(&cli.global, &cfg, a),
        Command::Simulate(a) => simulate(&cli.global, &cfg, a),
        Command::Analyze(a) => analyze(&cli.global, &cfg, a),
        Command::PropagationProfile(a) => propagation_profile(&cli.global, &cfg, a),
        Command::JohnsonFit(a) => johnson_fit(&cli.global, &cfg, a),
    }
}

fn note(g: &GlobalArgs, msg: impl AsRef<str>) {
    if !g.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn calibration(cfg: &RunConfig) -> anyhow::Result<CalibrationConfig> {
    cfg.calibration
        .clone()
        .ok_or_else(|| usage("this command needs a [calibration] table in --config"))
}

fn selector(angle: f64) -> QuadratureSelector {
    QuadratureSelector::TwoMode { a: 0, b: 1, angle }
}

// ---------------------------------------------------------------- snail-sweep

#[derive(Debug, Args)]
pub struct SnailSweepArgs {
    /// Junction asymmetries, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,
    /// Lower flux bound in units of Φ₀.
    #[arg(long, allow_hyphen_values = true)]
    pub flux_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub flux_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub n_large: Option<u32>,
    #[arg(long)]
    pub m_snails: Option<u32>,
    /// Junction-to-geometric inductance ratio of the array.
    #[arg(long)]
    pub inductance_ratio: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SnailRow {
    pub alpha: f64,
    pub flux_over_phi0: f64,
    pub phi_min: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c2t: f64,
    pub c3t: f64,
    pub c4t: f64,
    pub p: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KerrFreeRow {
    pub alpha: f64,
    pub flux_over_phi0: f64,
    pub c3: f64,
    pub c2t: f64,
    pub c3t: f64,
    pub c4t: f64,
    pub p: f64,
}

/// Evenly spaced inclusive grid.
pub fn flux_grid(lo: f64, hi: f64, points: usize) -> anyhow::Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite()) || points == 0 || lo > hi || (points > 1 && lo == hi) {
        bail!(kerrfree::Error::InvalidArgument(format!(
            "empty or invalid flux range [{lo}, {hi}] with {points} points"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

fn snail_sweep(g: &GlobalArgs, cfg: &RunConfig, a: &SnailSweepArgs) -> anyhow::Result<()> {
    let mut s: SnailSweepConfig = cfg.snail_sweep.clone().unwrap_or_default();
    if let Some(v) = &a.alpha {
        s.alphas = v.clone();
    }
    s.flux_min = a.flux_min.unwrap_or(s.flux_min);
    s.flux_max = a.flux_max.unwrap_or(s.flux_max);
    s.points = a.points.unwrap_or(s.points);
    s.n_large = a.n_large.unwrap_or(s.n_large);
    s.m_snails = a.m_snails.unwrap_or(s.m_snails);
    s.inductance_ratio = a.inductance_ratio.unwrap_or(s.inductance_ratio);
    if s.alphas.is_empty() {
        bail!(kerrfree::Error::InvalidArgument("no alpha values given".into()));
    }
    let fluxes = flux_grid(s.flux_min, s.flux_max, s.points)?;

    let mut rows = Vec::new();
    let mut kerr = Vec::new();
    for &alpha in &s.alphas {
        let base = SnailParams {
            alpha,
            phi_ext: 0.0,
            n_large: s.n_large,
            e_j: 1.0,
        };
        base.validate()?;
        for r in coefficient_sweep(&base, s.m_snails, s.inductance_ratio, &fluxes)? {
            rows.push(SnailRow {
                alpha,
                flux_over_phi0: r.flux_over_phi0,
                phi_min: r.phi_min,
                c2: r.c2,
                c3: r.c3,
                c4: r.c4,
                c2t: r.c2t,
                c3t: r.c3t,
                c4t: r.c4t,
                p: r.p,
            });
        }
        if s.flux_min < s.flux_max && s.flux_min >= -0.5 && s.flux_max <= 0.5 {
            let search = KerrSearch {
                m_snails: s.m_snails,
                inductance_ratio: s.inductance_ratio,
                flux_range: (s.flux_min, s.flux_max),
                grid_points: s.kerr_grid_points,
            };
            for k in kerr_free_search(&base, &search)? {
                kerr.push(KerrFreeRow {
                    alpha,
                    flux_over_phi0: k.flux,
                    c3: k.single.c3(),
                    c2t: k.array.c2t(),
                    c3t: k.array.c3t(),
                    c4t: k.array.c4t(),
                    p: k.array.p,
                });
            }
        }
    }
    let p = write_table(&g.out, "snail_sweep", g.format, &rows)?;
    let k = write_table(&g.out, "kerr_free", g.format, &kerr)?;
    note(
        g,
        format!(
            "wrote {} rows to {} and {} Kerr-free points to {}",
            rows.len(),
            p.display(),
            kerr.len(),
            k.display()
        ),
    );
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Frames per pump state.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Override the target with a lossy TMSV at this ν̃_min.
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, value_enum)]
    pub record_format: Option<RecordFormatArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RecordFormatArg {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub n_samples: u64,
    pub record_format: RecordFormat,
    pub amplifier_occupation: f64,
    pub calibration: CalibrationConfig,
    pub points: Vec<ManifestPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestPoint {
    pub label: String,
    #[serde(default)]
    pub chi: Option<f64>,
    #[serde(default)]
    pub twpa_gain: Option<f64>,
    pub on: PathBuf,
    pub off: PathBuf,
    pub v_out: CovarianceMatrix,
    pub truth: EntanglementReport,
}

fn check_label(label: &str) -> anyhow::Result<()> {
    if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)) {
        bail!(kerrfree::Error::InvalidArgument(format!(
            "label {label:?} must be non-empty and use only [A-Za-z0-9._-]"
        )));
    }
    Ok(())
}

fn load_covariance(path: &Path) -> anyhow::Result<CovarianceMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let v = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        io::covariance_from_csv(&text)?
    } else {
        io::covariance_from_json(&text)?
    };
    Ok(v)
}

/// Labeled target states with optional `(χ, G_S)` of the generating line.
/// Label, optional `(χ, gain)` on a line, and the output state.
type Target = (String, Option<(f64, f64)>, CovarianceMatrix);

fn targets(cfg: &RunConfig, cal: &CalibrationConfig, target: &TargetConfig) -> anyhow::Result<Vec<Target>> {
    let chain = cal.chain()?;
    Ok(match target {
        TargetConfig::Nu { nu } => vec![("point".into(), None, synth::lumped_state_for_nu(*nu, chain.eta)?.1)],
        TargetConfig::SqueezeDb { db } => {
            vec![(
                "point".into(),
                None,
                synth::lumped_state_for_nu(db_to_linear(*db), chain.eta)?.1,
            )]
        }
        TargetConfig::Tmsv { r, phase } => {
            vec![(
                "point".into(),
                None,
                kerrfree::gaussian::two_mode_squeezed_vacuum(*r, *phase)?,
            )]
        }
        TargetConfig::Covariance { path } => vec![("point".into(), None, load_covariance(&cfg.resolve(path))?)],
        TargetConfig::Sweep {
            line,
            chis,
            labels,
            saturation,
        } => {
            let labels: Vec<String> = match labels {
                Some(l) if l.len() == chis.len() => l.clone(),
                Some(l) => bail!(usage(format!("{} labels for {} chi values", l.len(), chis.len()))),
                None => (0..chis.len()).map(|i| format!("chi_{i:02}")).collect(),
            };
            let sweep = PumpSweep {
                line: PropagationParams {
                    kappa: 0.0,
                    chi: 0.0,
                    v: line.v,
                    length: line.length,
                    omega: 0.0,
                    chi_phase: line.chi_phase,
                },
                n_segments: line.n_segments,
                chain,
                n_samples: 1,
                rng_seed: 0,
                amplifier_occupation: None,
                saturation: *saturation,
            };
            let points: Vec<(String, f64)> = labels.into_iter().zip(chis.iter().copied()).collect();
            sweep
                .build(&points)?
                .into_iter()
                .map(|e| (e.label, Some((e.chi, e.gain)), e.v_out))
                .collect()
        }
    })
}

/// Seed of the `i`-th point of a run.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

fn write_pump_state(
    scenario: &ChainScenario,
    pump: PumpState,
    format: RecordFormat,
    path: &Path,
) -> anyhow::Result<()> {
    match format {
        RecordFormat::Binary => {
            let mut w = BinaryRecordWriter::create(path, &scenario.header(pump))?;
            synth::generate_frames(scenario, pump, |c| w.write_frames(c))?;
            w.finish()?;
        }
        RecordFormat::Csv => {
            let (on, off) = synth::sample_records(scenario)?;
            io::write_csv_records(path, if pump == PumpState::On { &on } else { &off })?;
        }
    }
    Ok(())
}

fn simulate(g: &GlobalArgs, cfg: &RunConfig, a: &SimulateArgs) -> anyhow::Result<()> {
    let cal = calibration(cfg)?;
    let mut sim = cfg
        .simulate
        .clone()
        .ok_or_else(|| usage("simulate needs a [simulate] table in --config"))?;
    if let Some(n) = a.samples {
        sim.n_samples = n;
    }
    if let Some(nu) = a.nu {
        sim.target = TargetConfig::Nu { nu };
    }
    if let Some(f) = a.record_format {
        sim.record_format = match f {
            RecordFormatArg::Binary => RecordFormat::Binary,
            RecordFormatArg::Csv => RecordFormat::Csv,
        };
    }
    let seed = g.seed.or(cfg.seed).unwrap_or(0);
    let chain = cal.chain()?;
    let sel = selector(0.0);

    let mut points = Vec::new();
    let mut amp = 0.0;
    for (i, (label, line, v_out)) in targets(cfg, &cal, &sim.target)?.into_iter().enumerate() {
        check_label(&label)?;
        let mut scenario = ChainScenario::new(v_out.clone(), chain, sim.n_samples, point_seed(seed, i));
        scenario.amplifier_occupation = sim.amplifier_occupation;
        scenario.quantizer = sim.quantizer;
        scenario.sample_rate = sim.sample_rate_hz;
        scenario.validate()?;
        amp = scenario.amplifier_occupation();
        let ext = sim.record_format.extension();
        let on = PathBuf::from(format!("{label}_on.{ext}"));
        let off = PathBuf::from(format!("{label}_off.{ext}"));
        note(
            g,
            format!("simulating {label}: {} frames per pump state", sim.n_samples),
        );
        write_pump_state(&scenario, PumpState::On, sim.record_format, &g.out.join(&on))?;
        write_pump_state(&scenario, PumpState::Off, sim.record_format, &g.out.join(&off))?;
        let truth = EntanglementReport::from_covariance(&v_out, &[1], &sel)?;
        points.push(ManifestPoint {
            label,
            chi: line.map(|l| l.0),
            twpa_gain: line.map(|l| l.1),
            on,
            off,
            v_out,
            truth,
        });
    }
    let manifest = Manifest {
        format_version: 1,
        seed,
        n_samples: sim.n_samples,
        record_format: sim.record_format,
        amplifier_occupation: amp,
        calibration: cal,
        points,
    };
    let path = g.out.join("manifest.json");
    write_json(&path, &manifest)?;
    note(g, format!("wrote {}", path.display()));
    Ok(())
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Manifest written by `simulate`; record paths resolve next to it.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// A single ON record (needs --off).
    #[arg(long, requires = "off")]
    pub on: Option<PathBuf>,
    #[arg(long, requires = "on")]
    pub off: Option<PathBuf>,
    #[arg(long, default_value = "point")]
    pub label: String,
    /// Classical correlation floor subtracted from E.
    #[arg(long)]
    pub e0: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub label: String,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "E_err")]
    pub e_err: f64,
    pub purity: f64,
    #[serde(rename = "S_plus_db")]
    pub s_plus_db: f64,
    #[serde(rename = "S_minus_db")]
    pub s_minus_db: f64,
    pub nu_min: f64,
    #[serde(rename = "E_F")]
    pub e_f: f64,
    #[serde(rename = "R_E")]
    pub r_e: f64,
    #[serde(rename = "E_true")]
    pub e_true: Option<f64>,
    #[serde(rename = "E_abs_err")]
    pub e_abs_err: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PointReport {
    pub label: String,
    pub frames_on: u64,
    pub frames_off: u64,
    pub covariance: CovarianceMatrix,
    pub report: EntanglementReport,
    pub uncertainty: kerrfree::calibration::UncertainReport,
    pub gaussianity: Vec<kerrfree::calibration::GaussianityResult>,
    pub warnings: Vec<String>,
    pub row: AnalysisRow,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub calibration: CalibrationConfig,
    pub normalization_v2: f64,
    pub points: Vec<PointReport>,
}

struct Job {
    label: String,
    on: PathBuf,
    off: PathBuf,
    truth: Option<f64>,
}

fn analyze(g: &GlobalArgs, cfg: &RunConfig, a: &AnalyzeArgs) -> anyhow::Result<()> {
    let acfg = cfg.analyze.clone().unwrap_or_default();
    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| acfg.manifest.as_ref().map(|p| cfg.resolve(p)));
    let manifest: Option<(Manifest, PathBuf)> = match &manifest_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read manifest {}", p.display()))?;
            let m: Manifest = serde_json::from_str(&text).map_err(kerrfree::Error::from)?;
            Some((m, p.parent().map(Path::to_path_buf).unwrap_or_default()))
        }
        None => None,
    };
    let mut cal = match (&cfg.calibration, &manifest) {
        (Some(c), _) => c.clone(),
        (None, Some((m, _))) => m.calibration.clone(),
        (None, None) => return Err(usage("analyze needs a [calibration] table or a manifest")),
    };
    if let Some(e0) = a.e0 {
        cal.e0_baseline = e0;
    }
    if !(cal.e0_baseline >= 0.0) {
        return Err(usage("e0 baseline must be >= 0"));
    }

    let jobs: Vec<Job> = if let (Some(on), Some(off)) = (&a.on, &a.off) {
        vec![Job {
            label: a.label.clone(),
            on: on.clone(),
            off: off.clone(),
            truth: None,
        }]
    } else if let Some((m, dir)) = &manifest {
        m.points
            .iter()
            .map(|p| Job {
                label: p.label.clone(),
                on: dir.join(&p.on),
                off: dir.join(&p.off),
                truth: Some(p.truth.log_negativity),
            })
            .collect()
    } else if !acfg.points.is_empty() {
        acfg.points
            .iter()
            .map(|p| Job {
                label: p.label.clone(),
                on: cfg.resolve(&p.on),
                off: cfg.resolve(&p.off),
                truth: None,
            })
            .collect()
    } else {
        return Err(usage("analyze needs --manifest, --on/--off or [[analyze.points]]"));
    };

    let chain = cal.chain()?;
    let unc = cal.uncertainty()?;
    let n_coeff = normalization_coefficient(&chain)?;
    let sel = selector(acfg.squeeze_angle);
    note(g, format!("analyzing {} point(s)", jobs.len()));

    let points = jobs
        .par_iter()
        .map(|job| -> anyhow::Result<PointReport> {
            let on = io::record_statistics(&job.on).with_context(|| format!("reading {}", job.on.display()))?;
            let off = io::record_statistics(&job.off).with_context(|| format!("reading {}", job.off.display()))?;
            let mut warnings = Vec::new();
            if on.header.pump_state != PumpState::On {
                warnings.push(format!("{} is labeled pump OFF", job.on.display()));
            }
            if off.header.pump_state != PumpState::Off {
                warnings.push(format!("{} is labeled pump ON", job.off.display()));
            }
            if on.header.n_channels() != 2 {
                bail!(kerrfree::Error::InvalidArgument(format!(
                    "entanglement analysis needs 2 channels, got {}",
                    on.header.n_channels()
                )));
            }
            let v = scaled_covariance(&on, &off, n_coeff)?;
            if !v.is_physical() {
                warnings.push("reconstructed covariance is not physical".into());
            }
            let gaussianity = match gaussianity_of_statistics(&on) {
                Ok(gs) => {
                    for (k, r) in gs.iter().enumerate() {
                        if !r.pass {
                            warnings.push(format!(
                                "channel {} fails the Gaussianity gate (skew {:?}, kurtosis {:?})",
                                on.header.labels[k], r.skewness, r.kurtosis
                            ));
                        }
                    }
                    gs
                }
                Err(e) => {
                    warnings.push(format!("Gaussianity not tested: {e}"));
                    Vec::new()
                }
            };
            let u = propagate_uncertainty(&v, &unc, &[1], &sel)?;
            let rep = u.nominal.clone();
            let e = subtract_baseline(rep.log_negativity, cal.e0_baseline);
            let r_e = entanglement_rate(
                v.get(0, 0),
                rep.entropy_of_formation,
                TAU * acfg.mode_separation_hz,
                TAU * chain.bw,
                FluxDensityUnit::PerHertz,
            )?;
            let row = AnalysisRow {
                label: job.label.clone(),
                e,
                e_err: u.log_negativity.half_spread(),
                purity: rep.purity,
                s_plus_db: rep.squeeze_plus_db,
                s_minus_db: rep.squeeze_minus_db,
                nu_min: rep.nu_min,
                e_f: rep.entropy_of_formation,
                r_e,
                e_true: job.truth,
                e_abs_err: job.truth.map(|t| (e - t).abs()),
            };
            Ok(PointReport {
                label: job.label.clone(),
                frames_on: on.count(),
                frames_off: off.count(),
                covariance: v,
                report: rep,
                uncertainty: u,
                gaussianity,
                warnings,
                row,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    for p in &points {
        for w in &p.warnings {
            note(g, format!("warning [{}]: {w}", p.label));
        }
    }
    let rows: Vec<&AnalysisRow> = points.iter().map(|p| &p.row).collect();
    let table = write_table(&g.out, "analysis", g.format, &rows)?;
    let report = AnalysisReport {
        calibration: cal,
        normalization_v2: n_coeff,
        points,
    };
    write_json(&g.out.join("report.json"), &report)?;
    note(g, format!("wrote {} and report.json", table.display()));
    Ok(())
}

// ---------------------------------------------------------------- propagation-profile

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub chi_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Dielectric loss tangent; replaces kappa.
    #[arg(long)]
    pub tan_delta: Option<f64>,
    #[arg(long)]
    pub n_segments: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ProfileRow {
    pub chi: f64,
    pub frequency_hz: f64,
    pub gain_db: f64,
    pub ideal_gain_db: f64,
    pub eta_db: f64,
    pub nu_min: f64,
    pub nu_min_fine: f64,
    #[serde(rename = "E")]
    pub e: f64,
}

/// One profile row at `n` and `2n` segments.
pub fn profile_row(
    params: &PropagationParams,
    frequency_hz: f64,
    n: usize,
    occ: NoiseOccupations,
) -> kerrfree::Result<ProfileRow> {
    let coarse = distributed_output(params, n, occ)?;
    let fine = distributed_output(params, 2 * n, occ)?;
    let nu = kerrfree::gaussian::transposed_nu_min(&coarse.output_covariance()?, &[1])?;
    let nu_fine = kerrfree::gaussian::transposed_nu_min(&fine.output_covariance()?, &[1])?;
    Ok(ProfileRow {
        chi: params.chi,
        frequency_hz,
        gain_db: linear_to_db(coarse.net_gain()),
        ideal_gain_db: linear_to_db(params.gain_parameter().cosh().powi(2)),
        eta_db: linear_to_db(coarse.channel.eta),
        nu_min: nu,
        nu_min_fine: nu_fine,
        e: log_negativity_from_nu(nu),
    })
}

fn propagation_profile(g: &GlobalArgs, cfg: &RunConfig, a: &ProfileArgs) -> anyhow::Result<()> {
    let mut p = cfg
        .propagation_profile
        .clone()
        .ok_or_else(|| usage("propagation-profile needs a [propagation_profile] table in --config"))?;
    p.chi_max = a.chi_max.unwrap_or(p.chi_max);
    p.points = a.points.unwrap_or(p.points);
    p.n_segments = a.n_segments.unwrap_or(p.n_segments);
    if a.tan_delta.is_some() {
        p.tan_delta = a.tan_delta;
        p.kappa = None;
    }
    let base = PropagationParams {
        kappa: p.kappa.unwrap_or(0.0),
        chi: 0.0,
        v: p.v,
        length: p.length,
        omega: 0.0,
        chi_phase: 0.0,
    };
    base.validate()?;
    let base = match (p.kappa, p.tan_delta) {
        (Some(_), Some(_)) => return Err(usage("give either kappa or tan_delta, not both")),
        (_, Some(td)) => {
            let theta = p
                .electrical_length
                .ok_or_else(|| usage("tan_delta needs electrical_length"))?;
            kerrfree::propagation::loss_from_tan_delta(td, theta)?;
            if !(p.length > 0.0) {
                bail!(kerrfree::Error::InvalidArgument("length must be > 0".into()));
            }
            base.with_tan_delta_loss(td, theta)
        }
        _ => base,
    };
    let chis = flux_grid(p.chi_min, p.chi_max, p.points)?;
    let freqs = if p.frequencies_hz.is_empty() {
        vec![p.pump_hz / 2.0]
    } else {
        p.frequencies_hz.clone()
    };
    let occ = NoiseOccupations::uniform(p.noise_occupation);
    let grid: Vec<(f64, f64)> = chis.iter().flat_map(|&c| freqs.iter().map(move |&f| (c, f))).collect();
    let rows = grid
        .par_iter()
        .map(|&(chi, f)| {
            let params = PropagationParams {
                chi,
                omega: TAU * (f - p.pump_hz / 2.0),
                ..base
            };
            profile_row(&params, f, p.n_segments, occ)
        })
        .collect::<kerrfree::Result<Vec<_>>>()?;
    let path = write_table(&g.out, "propagation_profile", g.format, &rows)?;
    note(g, format!("wrote {} rows to {}", rows.len(), path.display()));
    Ok(())
}

// ---------------------------------------------------------------- johnson-fit

#[derive(Debug, Args)]
pub struct JohnsonArgs {
    /// CSV with `temperature_k,power_w` columns.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub bw_hz: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct JohnsonPoint {
    temperature_k: f64,
    power_w: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JohnsonRow {
    pub gain_db: f64,
    pub gain_db_err: f64,
    pub gain: f64,
    pub gain_err: f64,
    pub t_n_k: f64,
    pub t_n_err_k: f64,
    pub dof: usize,
    /// Multiplier on the standard errors for normal-3σ coverage.
    pub coverage_factor_3sigma: f64,
    pub summary: String,
    pub t_sys_k: Option<f64>,
    pub t_sys_negative: Option<bool>,
}

fn johnson_fit(g: &GlobalArgs, cfg: &RunConfig, a: &JohnsonArgs) -> anyhow::Result<()> {
    let j = cfg.johnson_fit.clone().unwrap_or_default();
    let input = match (&a.input, &j.input) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => cfg.resolve(p),
        _ => return Err(usage("johnson-fit needs --input or johnson_fit.input")),
    };
    let bw = a
        .bw_hz
        .or(j.bw_hz)
        .or(cfg.calibration.as_ref().map(|c| c.bw_hz))
        .ok_or_else(|| usage("johnson-fit needs a bandwidth (--bw-hz)"))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(&input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    let mut points = Vec::new();
    for r in rdr.deserialize::<JohnsonPoint>() {
        let r = r.map_err(kerrfree::Error::from)?;
        points.push((r.temperature_k, r.power_w));
    }
    let fit = johnson_nyquist_fit(&points, bw)?;
    let t_sys = match (j.delta_snr, j.g_twpa_db) {
        (Some(d), Some(gt)) => Some(system_noise_temperature(fit.t_n, d, db_to_linear(gt))?),
        (None, None) => None,
        _ => return Err(usage("delta_snr and g_twpa_db go together")),
    };
    if let Some(t) = &t_sys {
        if t.status == TemperatureStatus::NegativeWarning {
            note(
                g,
                format!(
                    "warning: inputs imply a negative system noise temperature ({} K)",
                    t.kelvin
                ),
            );
        }
    }
    let row = JohnsonRow {
        gain_db: fit.gain_db(),
        gain_db_err: fit.gain_db_err(),
        gain: fit.gain,
        gain_err: fit.gain_err,
        t_n_k: fit.t_n,
        t_n_err_k: fit.t_n_err,
        dof: fit.dof,
        coverage_factor_3sigma: fit.coverage_factor(3.0),
        summary: fit.gain_summary(),
        t_sys_k: t_sys.map(|t| t.kelvin),
        t_sys_negative: t_sys.map(|t| t.status == TemperatureStatus::NegativeWarning),
    };
    let path = write_table(&g.out, "johnson_fit", g.format, &[&row])?;
    if g.format == Format::Json {
        write_json(&g.out.join("johnson_residuals.json"), &fit.residuals)?;
    }
    note(
        g,
        format!(
            "G = {}, T_N = {:.3} ± {:.3} K -> {}",
            row.summary,
            fit.t_n,
            fit.t_n_err,
            path.display()
        ),
    );
    Ok(())
}
