//! SNAIL potential and its flux-tunable nonlinear coefficients.
//!
//! A SNAIL is a loop of one small junction (`αE_J`) and `n` large junctions
//! (`E_J` each) threaded by an external reduced flux `φ_ext = 2πΦ/Φ₀`. With
//! the phase `φ_s` across the small junction and a uniform drop across the
//! large ones,
//!
//! ```text
//! U(φ_s) = −α E_J cos φ_s − n E_J cos((φ_ext − φ_s)/n)
//! ```
//!
//! Expanding around the minimum `φ_min` gives `U/E_J = Σ c_k (φ_s − φ_min)^k`
//! with `c_k = U⁽ᵏ⁾(φ_min)/(k! E_J)`. Derivatives are evaluated in closed
//! form: the k-th derivative of `cos x` is `cos(x + kπ/2)`.
//!
//! An array of `M` SNAILs in series with a linear inductance `L` has
//! renormalized coefficients `c̃_k` that depend on the participation ratio
//! `p = (M L_J/L)/(2c₂ + M L_J/L)`. The effective Kerr term `c̃₄` picks up a
//! negative `c₃²` correction, so a Kerr-free bias point is not where `c₄`
//! vanishes but slightly off it.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

const GOLDEN_TOL: f64 = 1e-7;
const NEWTON_MAX_ITER: usize = 60;
/// `|U′(φ_min)|` must end below this, in units of `E_J`.
pub const MINIMUM_TOL: f64 = 1e-12;
/// Kerr-free roots are refined until the bracketed expression is this small.
pub const KERR_ROOT_TOL: f64 = 1e-12;

/// Physical parameters of a single SNAIL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnailParams {
    /// Small-to-large junction energy ratio, `0 < α < 0.5`.
    pub alpha: f64,
    /// Reduced external flux `2πΦ/Φ₀`, radians.
    pub phi_ext: f64,
    /// Number of large junctions.
    pub n_large: u32,
    /// Josephson energy of one large junction.
    pub e_j: f64,
}

impl SnailParams {
    /// Two large junctions, unit `E_J`, flux in units of `Φ₀`.
    pub fn new(alpha: f64, flux_quanta: f64) -> Result<Self> {
        let p = Self {
            alpha,
            phi_ext: TAU * flux_quanta,
            n_large: 2,
            e_j: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_flux(self, flux_quanta: f64) -> Self {
        Self {
            phi_ext: TAU * flux_quanta,
            ..self
        }
    }

    pub fn flux_quanta(&self) -> f64 {
        self.phi_ext / TAU
    }

    /// `0 < α < 0.5`, and `α < 1/n` so the loop has a single well per period.
    pub fn validate(&self) -> Result<()> {
        if self.n_large == 0 {
            return Err(invalid_arg("SNAIL needs at least one large junction"));
        }
        let bound = 0.5f64.min(1.0 / self.n_large as f64);
        if !(self.alpha > 0.0 && self.alpha < bound) {
            return Err(invalid_arg(format!(
                "asymmetry alpha must lie in (0, {bound}), got {}",
                self.alpha
            )));
        }
        if !self.phi_ext.is_finite() {
            return Err(invalid_arg("external flux must be finite"));
        }
        if !(self.e_j > 0.0) || !self.e_j.is_finite() {
            return Err(invalid_arg(format!("E_J must be positive, got {}", self.e_j)));
        }
        Ok(())
    }
}

/// `U(φ_s)` in the energy unit of `params.e_j`.
pub fn snail_potential(phi_s: f64, params: &SnailParams) -> f64 {
    let n = params.n_large as f64;
    params.e_j * (-params.alpha * phi_s.cos() - n * ((params.phi_ext - phi_s) / n).cos())
}

/// `dᵏU/dφ_sᵏ` at `phi_s`; `order = 0` is the potential itself.
pub fn potential_derivative(phi_s: f64, params: &SnailParams, order: u32) -> f64 {
    let n = params.n_large as f64;
    let shift = order as f64 * PI / 2.0;
    let theta = (params.phi_ext - phi_s) / n;
    let chain = (-1.0 / n).powi(order as i32);
    params.e_j * (-params.alpha * (phi_s + shift).cos() - n * chain * (theta + shift).cos())
}

/// Phase of the potential minimum in the well selected by `φ_ext`.
///
/// `φ_ext` is reduced to `[−π, π]` (the coefficients are `2π`-periodic in
/// flux, with `φ_min` shifting by the same multiple of `2π`). In the reduced
/// cell the minimum lies between `0` and `φ_ext`, where `U′` changes sign.
/// A golden-section search on that bracket is polished by Newton steps on `U′`.
pub fn find_minimum(params: &SnailParams) -> Result<f64> {
    params.validate()?;
    let wraps = (params.phi_ext / TAU).round();
    let reduced = SnailParams {
        phi_ext: params.phi_ext - TAU * wraps,
        ..*params
    };
    let (lo, hi) = if reduced.phi_ext >= 0.0 {
        (0.0, reduced.phi_ext)
    } else {
        (reduced.phi_ext, 0.0)
    };

    let mut x = golden_section(|p| snail_potential(p, &reduced), lo, hi, GOLDEN_TOL);
    let mut iterations = 0;
    let slope_tol = MINIMUM_TOL * reduced.e_j;
    loop {
        let d1 = potential_derivative(x, &reduced, 1);
        if d1.abs() < 0.01 * slope_tol {
            break;
        }
        if iterations >= NEWTON_MAX_ITER {
            break;
        }
        let d2 = potential_derivative(x, &reduced, 2);
        if !(d2 > 0.0) {
            return Err(Error::NumericFailure {
                routine: "find_minimum",
                iterations,
                detail: format!("non-positive curvature {d2:e} at phi = {x}"),
            });
        }
        let step = d1 / d2;
        let next = (x - step).clamp(lo, hi);
        iterations += 1;
        if next == x {
            break;
        }
        x = next;
    }

    let d1 = potential_derivative(x, &reduced, 1);
    let d2 = potential_derivative(x, &reduced, 2);
    if !(d1.abs() < slope_tol && d2 > 0.0) {
        return Err(Error::NumericFailure {
            routine: "find_minimum",
            iterations,
            detail: format!("U'(phi) = {d1:e}, U''(phi) = {d2:e} at phi = {x}"),
        });
    }
    Ok(x + TAU * wraps)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Taylor coefficients `c₁, c₂, …` of `U/E_J` around `φ_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    /// `c[0]` is `c₁`, `c[k-1]` is `c_k`.
    pub c: Vec<f64>,
    pub phi_min: f64,
}

impl CoefficientSet {
    /// `c_k` for `k ≥ 1`.
    pub fn get(&self, k: usize) -> f64 {
        self.c[k - 1]
    }

    pub fn c1(&self) -> f64 {
        self.c[0]
    }

    pub fn c2(&self) -> f64 {
        self.c[1]
    }

    pub fn c3(&self) -> f64 {
        self.c[2]
    }

    pub fn c4(&self) -> f64 {
        self.c[3]
    }
}

/// Coefficients up to `order` (2..=6); `c₁…c₄` are always present.
pub fn taylor_coefficients(params: &SnailParams, order: u32) -> Result<CoefficientSet> {
    if !(2..=6).contains(&order) {
        return Err(invalid_arg(format!("expansion order must be in 2..=6, got {order}")));
    }
    let phi_min = find_minimum(params)?;
    let top = order.max(4);
    let mut factorial = 1.0;
    let c = (1..=top)
        .map(|k| {
            factorial *= k as f64;
            potential_derivative(phi_min, params, k) / (factorial * params.e_j)
        })
        .collect();
    Ok(CoefficientSet { c, phi_min })
}

/// Renormalized coefficients of an array of `M` SNAILs in series with a
/// linear inductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayCoefficientSet {
    /// `[c̃₂, c̃₃, c̃₄]`.
    pub c_tilde: [f64; 3],
    /// Participation ratio.
    pub p: f64,
    pub m_snails: u32,
    /// `L_J / L`.
    pub inductance_ratio: f64,
}

impl ArrayCoefficientSet {
    pub fn c2t(&self) -> f64 {
        self.c_tilde[0]
    }

    pub fn c3t(&self) -> f64 {
        self.c_tilde[1]
    }

    pub fn c4t(&self) -> f64 {
        self.c_tilde[2]
    }
}

/// `p = x/(2c₂ + x)` with `x = M L_J/L`; an infinite ratio gives `p = 1`.
pub fn participation_ratio(c2: f64, m_snails: u32, inductance_ratio: f64) -> f64 {
    if inductance_ratio.is_infinite() {
        return 1.0;
    }
    let x = m_snails as f64 * inductance_ratio;
    x / (2.0 * c2 + x)
}

/// `c₄ − (9c₃²/4c₂)(1 − p)`, the sign-carrying factor of `c̃₄`.
pub fn kerr_factor(c2: f64, c3: f64, c4: f64, p: f64) -> f64 {
    c4 - 9.0 * c3 * c3 / (4.0 * c2) * (1.0 - p)
}

/// `c̃₂ = (p/M)c₂`, `c̃₃ = (p³/M²)c₃`, `c̃₄ = (p⁴/M³)(c₄ − (9c₃²/4c₂)(1−p))`.
pub fn array_coefficients(
    single: &CoefficientSet,
    m_snails: u32,
    inductance_ratio: f64,
) -> Result<ArrayCoefficientSet> {
    if single.c.len() < 4 {
        return Err(invalid_arg("array renormalization needs c1..c4"));
    }
    let (c2, c3, c4) = (single.c2(), single.c3(), single.c4());
    if !(c2 > 0.0) {
        return Err(invalid_arg(format!("c2 must be positive, got {c2}")));
    }
    if m_snails == 0 {
        return Err(invalid_arg("array needs at least one SNAIL"));
    }
    if !(inductance_ratio > 0.0) {
        return Err(invalid_arg(format!(
            "inductance ratio must be positive, got {inductance_ratio}"
        )));
    }
    let p = participation_ratio(c2, m_snails, inductance_ratio);
    let m = m_snails as f64;
    Ok(ArrayCoefficientSet {
        c_tilde: [
            p / m * c2,
            p.powi(3) / m.powi(2) * c3,
            p.powi(4) / m.powi(3) * kerr_factor(c2, c3, c4, p),
        ],
        p,
        m_snails,
        inductance_ratio,
    })
}

/// One row of a flux sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
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

/// Single-SNAIL and array coefficients at each flux (in `Φ₀`), in input order.
pub fn coefficient_sweep(
    base: &SnailParams,
    m_snails: u32,
    inductance_ratio: f64,
    fluxes: &[f64],
) -> Result<Vec<SweepRow>> {
    fluxes
        .par_iter()
        .map(|&flux| {
            let params = base.with_flux(flux);
            let single = taylor_coefficients(&params, 4)?;
            let arr = array_coefficients(&single, m_snails, inductance_ratio)?;
            Ok(SweepRow {
                flux_over_phi0: flux,
                phi_min: single.phi_min,
                c2: single.c2(),
                c3: single.c3(),
                c4: single.c4(),
                c2t: arr.c2t(),
                c3t: arr.c3t(),
                c4t: arr.c4t(),
                p: arr.p,
            })
        })
        .collect()
}

/// A flux bias where the array's effective Kerr coefficient vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KerrFreePoint {
    /// `Φ/Φ₀`.
    pub flux: f64,
    pub array: ArrayCoefficientSet,
    pub single: CoefficientSet,
}

/// Settings for [`kerr_free_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrSearch {
    pub m_snails: u32,
    pub inductance_ratio: f64,
    /// Inclusive flux range in units of `Φ₀`, within `[−0.5, 0.5]`.
    pub flux_range: (f64, f64),
    /// Points in the coarse sign-change sweep.
    pub grid_points: usize,
}

/// All roots of `c̃₄(Φ) = 0` in the flux range, sorted by flux.
///
/// A dense sweep finds sign changes of `c₄ − (9c₃²/4c₂)(1−p)`, which has the
/// sign of `c̃₄` but not its `M⁻³` scale, and each bracket is bisected until
/// that factor is below [`KERR_ROOT_TOL`]. No sign change gives an empty list.
pub fn kerr_free_search(base: &SnailParams, search: &KerrSearch) -> Result<Vec<KerrFreePoint>> {
    base.validate()?;
    let (lo, hi) = search.flux_range;
    if !(lo < hi) || lo < -0.5 || hi > 0.5 {
        return Err(invalid_arg(format!(
            "flux range must satisfy -0.5 <= lo < hi <= 0.5, got ({lo}, {hi})"
        )));
    }
    if search.grid_points < 2 {
        return Err(invalid_arg("flux sweep needs at least two points"));
    }
    let factor = |flux: f64| -> Result<f64> {
        let single = taylor_coefficients(&base.with_flux(flux), 4)?;
        let p = participation_ratio(single.c2(), search.m_snails, search.inductance_ratio);
        Ok(kerr_factor(single.c2(), single.c3(), single.c4(), p))
    };
    let n = search.grid_points;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let values = grid.par_iter().map(|&f| factor(f)).collect::<Result<Vec<f64>>>()?;

    let mut roots: Vec<f64> = Vec::new();
    for i in 0..n {
        if values[i] == 0.0 {
            roots.push(grid[i]);
        }
        if i + 1 < n && values[i] * values[i + 1] < 0.0 {
            roots.push(bisect(&factor, grid[i], grid[i + 1], values[i])?);
        }
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup();

    roots
        .into_iter()
        .map(|flux| {
            let single = taylor_coefficients(&base.with_flux(flux), 4)?;
            let array = array_coefficients(&single, search.m_snails, search.inductance_ratio)?;
            Ok(KerrFreePoint { flux, array, single })
        })
        .collect()
}

fn bisect(f: &impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm.abs() < KERR_ROOT_TOL || mid == a || mid == b {
            return Ok(mid);
        }
        if fa * fm < 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    Err(Error::NumericFailure {
        routine: "kerr_free_search",
        iterations: 200,
        detail: format!("bracket [{a}, {b}] did not converge"),
    })
}
