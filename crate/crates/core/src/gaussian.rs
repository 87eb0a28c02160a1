//! Gaussian continuous-variable states in the covariance-matrix picture.
//!
//! Quadratures are ordered `(I₁, Q₁, …, I_N, Q_N)` and normalized so the
//! vacuum has unit variance in every quadrature. In these units a covariance
//! matrix `V` is physical iff `V + iΩ ⪰ 0`, which is equivalent to every
//! symplectic eigenvalue being at least one.
//!
//! Entanglement between two groups of modes is detected with the
//! positive-partial-transpose test: transposition flips the sign of the `Q`
//! quadratures of one side, and the state is entangled iff the transposed
//! matrix has a symplectic eigenvalue below one. The logarithmic negativity
//! `E = max(−log₂ ν̃_min, 0)` measures by how much.

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_state, Error, Result};

/// Relative tolerance on `V − Vᵀ`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Slack allowed below one when testing `ν_min ≥ 1`.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Relative tolerance used when pairing the doubled eigenvalues of `−(ΩV)²`.
pub const PAIRING_TOL: f64 = 1e-9;

/// Block-diagonal symplectic form with `N` copies of `[[0, 1], [−1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> Result<DMatrix<f64>> {
    if n_modes == 0 {
        return Err(invalid_arg("symplectic form needs at least one mode"));
    }
    let dim = 2 * n_modes;
    let mut omega = DMatrix::zeros(dim, dim);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    Ok(omega)
}

/// Symmetric `2N × 2N` covariance matrix in vacuum-normalized units.
///
/// Construction checks shape, finiteness and symmetry. Positivity and
/// physicality are checked by the operations that need them.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n_modes: usize,
    data: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = data.shape();
        if rows != cols {
            return Err(invalid_arg(format!("covariance is not square: {rows}x{cols}")));
        }
        if rows == 0 || rows % 2 != 0 {
            return Err(invalid_arg(format!(
                "covariance dimension must be a positive even number, got {rows}"
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(invalid_state("covariance has non-finite entries"));
        }
        let scale = data.amax().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..rows {
            for j in (i + 1)..rows {
                worst = worst.max((data[(i, j)] - data[(j, i)]).abs());
            }
        }
        if worst > SYMMETRY_TOL * scale {
            return Err(invalid_state(format!(
                "covariance is not symmetric: max |V_ij - V_ji| = {worst:e}"
            )));
        }
        Ok(Self {
            n_modes: rows / 2,
            data,
        })
    }

    /// Builds from a row-major slice of length `(2N)²`.
    pub fn from_row_major(n_modes: usize, values: &[f64]) -> Result<Self> {
        let dim = 2 * n_modes;
        if n_modes == 0 || values.len() != dim * dim {
            return Err(invalid_arg(format!(
                "expected {} values for {n_modes} modes, got {}",
                dim * dim,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, values))
    }

    pub fn vacuum(n_modes: usize) -> Self {
        assert!(n_modes > 0, "vacuum needs at least one mode");
        Self {
            n_modes,
            data: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    /// Product of identical thermal states with mean occupation `n̄`.
    pub fn thermal(n_modes: usize, occupation: f64) -> Result<Self> {
        if !(occupation >= 0.0) || !occupation.is_finite() {
            return Err(invalid_arg(format!(
                "thermal occupation must be >= 0, got {occupation}"
            )));
        }
        if n_modes == 0 {
            return Err(invalid_arg("thermal state needs at least one mode"));
        }
        let dim = 2 * n_modes;
        Ok(Self {
            n_modes,
            data: DMatrix::identity(dim, dim) * (2.0 * occupation + 1.0),
        })
    }

    /// Two-mode state in standard form `[[a·1, c·Z], [c·Z, a·1]]`, `Z = diag(1, −1)`.
    ///
    /// Its partially transposed spectrum is `{a − c, a + c}` and its own
    /// spectrum is `√(a² − c²)` twice.
    pub fn symmetric_two_mode(diagonal: f64, correlation: f64) -> Result<Self> {
        let (a, c) = (diagonal, correlation);
        #[rustfmt::skip]
        let data = DMatrix::from_row_slice(4, 4, &[
            a,   0.0, c,   0.0,
            0.0, a,   0.0, -c,
            c,   0.0, a,   0.0,
            0.0, -c,  0.0, a,
        ]);
        Self::new(data)
    }

    /// Direct sum of single-mode covariances.
    pub fn direct_sum(parts: &[CovarianceMatrix]) -> Result<Self> {
        let dim: usize = parts.iter().map(|p| p.dim()).sum();
        if dim == 0 {
            return Err(invalid_arg("direct sum of nothing"));
        }
        let mut data = DMatrix::zeros(dim, dim);
        let mut offset = 0;
        for p in parts {
            let d = p.dim();
            data.view_mut((offset, offset), (d, d)).copy_from(&p.data);
            offset += d;
        }
        Self::new(data)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    pub fn determinant(&self) -> f64 {
        self.data.clone().determinant()
    }

    /// `S V Sᵀ` for a `2N × 2N` transformation `S`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.shape() != (self.dim(), self.dim()) {
            return Err(invalid_arg("transformation has the wrong shape"));
        }
        let mut out = s * &self.data * s.transpose();
        symmetrize(&mut out);
        Self::new(out)
    }

    /// Covariance of the listed modes, in the listed order.
    pub fn reduced(&self, modes: &[usize]) -> Result<Self> {
        check_modes(self.n_modes, modes)?;
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let d = idx.len();
        let data = DMatrix::from_fn(d, d, |i, j| self.data[(idx[i], idx[j])]);
        Self::new(data)
    }

    /// Smallest eigenvalue of the real matrix; positive iff positive definite.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.data.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// `V + iΩ ⪰ 0`, within [`PHYSICALITY_TOL`].
    pub fn is_physical(&self) -> bool {
        symplectic_eigenvalues(self)
            .map(|s| s.min() >= 1.0 - PHYSICALITY_TOL)
            .unwrap_or(false)
    }

    pub fn ensure_physical(&self) -> Result<()> {
        let spectrum = symplectic_eigenvalues(self)?;
        let nu = spectrum.min();
        if nu < 1.0 - PHYSICALITY_TOL {
            return Err(invalid_state(format!(
                "covariance violates the uncertainty principle: nu_min = {nu}"
            )));
        }
        Ok(())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn check_modes(n_modes: usize, modes: &[usize]) -> Result<()> {
    for &m in modes {
        if m >= n_modes {
            return Err(invalid_arg(format!("mode index {m} out of range for {n_modes} modes")));
        }
    }
    Ok(())
}

/// Symplectic eigenvalues, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymplecticSpectrum {
    pub values: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn product(&self) -> f64 {
        self.values.iter().product()
    }
}

/// Symplectic eigenvalues of a positive-definite covariance matrix.
///
/// These are the moduli of the eigenvalues of `iΩV`. With `V = LLᵀ` the
/// matrix `K = LᵀΩL` is real antisymmetric with eigenvalues `±iν_k`, so its
/// singular values are the `ν_k`, each twice. Each value carries an absolute
/// error of order `ε‖V‖`, which keeps strongly squeezed values accurate.
pub fn symplectic_eigenvalues(v: &CovarianceMatrix) -> Result<SymplecticSpectrum> {
    let omega = symplectic_form(v.n_modes())?;
    let chol = v.matrix().clone().cholesky().ok_or_else(|| {
        invalid_state(format!(
            "covariance is not positive definite: min eigenvalue {:e}",
            v.min_eigenvalue()
        ))
    })?;
    let l = chol.l();
    let k = l.transpose() * omega * &l;
    let mut sv: Vec<f64> = k.singular_values().iter().cloned().collect();
    sv.sort_by(|x, y| x.total_cmp(y));
    let top = sv[sv.len() - 1];
    let mut values = Vec::with_capacity(v.n_modes());
    for pair in sv.chunks_exact(2) {
        let (lo, hi) = (pair[0], pair[1]);
        // Pairs are exact in exact arithmetic; a large split means a broken input.
        if hi - lo > PAIRING_TOL * hi + 64.0 * f64::EPSILON * top {
            return Err(Error::NumericFailure {
                routine: "symplectic_eigenvalues",
                iterations: 1,
                detail: format!("unpaired singular values {lo:e} and {hi:e}"),
            });
        }
        values.push(0.5 * (lo + hi));
    }
    Ok(SymplecticSpectrum { values })
}

/// Flips the sign of the `Q` row and column of each selected mode.
pub fn partial_transpose(v: &CovarianceMatrix, modes: &[usize]) -> Result<CovarianceMatrix> {
    check_modes(v.n_modes(), modes)?;
    let mut flip = vec![false; v.n_modes()];
    for &m in modes {
        flip[m] = true;
    }
    let mut data = v.matrix().clone();
    let d = v.dim();
    for (m, &f) in flip.iter().enumerate() {
        if !f {
            continue;
        }
        let q = 2 * m + 1;
        for j in 0..d {
            data[(q, j)] = -data[(q, j)];
        }
        for i in 0..d {
            data[(i, q)] = -data[(i, q)];
        }
    }
    Ok(CovarianceMatrix {
        n_modes: v.n_modes(),
        data,
    })
}

fn check_bipartition(n_modes: usize, side: &[usize]) -> Result<()> {
    check_modes(n_modes, side)?;
    let mut seen = vec![false; n_modes];
    for &m in side {
        seen[m] = true;
    }
    let count = seen.iter().filter(|&&s| s).count();
    if count == 0 || count == n_modes {
        return Err(invalid_arg("bipartition must leave modes on both sides"));
    }
    Ok(())
}

/// Minimum symplectic eigenvalue of the partial transpose over `side`.
pub fn transposed_nu_min(v: &CovarianceMatrix, side: &[usize]) -> Result<f64> {
    check_bipartition(v.n_modes(), side)?;
    Ok(symplectic_eigenvalues(&partial_transpose(v, side)?)?.min())
}

/// `max(−log₂ ν, 0)`.
pub fn log_negativity_from_nu(nu: f64) -> f64 {
    if nu >= 1.0 {
        0.0
    } else {
        -nu.log2()
    }
}

/// Logarithmic negativity in bits between `side` and the remaining modes.
pub fn log_negativity(v: &CovarianceMatrix, side: &[usize]) -> Result<f64> {
    check_bipartition(v.n_modes(), side)?;
    v.ensure_physical()?;
    Ok(log_negativity_from_nu(transposed_nu_min(v, side)?))
}

/// `μ = 1/√det V`; one for pure states.
pub fn purity(v: &CovarianceMatrix) -> Result<f64> {
    let det = v.determinant();
    if !(det > 0.0) {
        return Err(invalid_state(format!("covariance determinant is {det:e}")));
    }
    Ok(1.0 / det.sqrt())
}

/// Entanglement of formation, in ebits, of a symmetric two-mode Gaussian
/// state with transposed minimum symplectic eigenvalue `ν`.
///
/// Uses `E_F = c₊ log₂ c₊ − c₋ log₂ c₋` with `c± = (ν^{−1/2} ± ν^{1/2})² / 4`.
/// The parenthesis is squared; without the square `c₊ − c₋ ≠ 1` and the
/// expression does not vanish at `ν = 1`.
pub fn entropy_of_formation(nu_min: f64) -> Result<f64> {
    if !(nu_min > 0.0 && nu_min <= 1.0) {
        return Err(invalid_arg(format!(
            "entropy of formation needs 0 < nu_min <= 1, got {nu_min}"
        )));
    }
    let (inv_root, root) = (nu_min.powf(-0.5), nu_min.sqrt());
    let c_plus = (inv_root + root).powi(2) / 4.0;
    let c_minus = (inv_root - root).powi(2) / 4.0;
    let minus_term = if c_minus > 0.0 { c_minus * c_minus.log2() } else { 0.0 };
    Ok((c_plus * c_plus.log2() - minus_term).max(0.0))
}

/// How the photon-flux intensity entering [`entanglement_rate`] is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FluxDensityUnit {
    /// Photons per second per hertz of bandwidth.
    #[default]
    PerHertz,
    /// Photons per second per rad/s of bandwidth.
    PerAngularFrequency,
}

/// Entanglement generation rate `R_E = 2⟨𝓘₁²⟩ E_F (Δω + δω)` in ebits/s.
///
/// `delta_omega` and `band_width` are angular frequencies. With
/// [`FluxDensityUnit::PerHertz`] the bandwidth is converted with `1/2π`.
pub fn entanglement_rate(
    photon_flux_intensity: f64,
    e_formation: f64,
    delta_omega: f64,
    band_width: f64,
    unit: FluxDensityUnit,
) -> Result<f64> {
    for (name, x) in [
        ("photon_flux_intensity", photon_flux_intensity),
        ("e_formation", e_formation),
        ("delta_omega", delta_omega),
        ("band_width", band_width),
    ] {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(invalid_arg(format!("{name} must be finite and >= 0, got {x}")));
        }
    }
    let span = match unit {
        FluxDensityUnit::PerHertz => (delta_omega + band_width) / (2.0 * PI),
        FluxDensityUnit::PerAngularFrequency => delta_omega + band_width,
    };
    Ok(2.0 * photon_flux_intensity * e_formation * span)
}

/// Two-mode squeezed vacuum with squeezing `r` and phase `φ`.
///
/// Diagonal blocks `cosh 2r · 1`, off-diagonal `sinh 2r · [[cos φ, sin φ], [sin φ, −cos φ]]`.
pub fn two_mode_squeezed_vacuum(r: f64, phase: f64) -> Result<CovarianceMatrix> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid_arg(format!("squeezing parameter must be >= 0, got {r}")));
    }
    let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    let (cp, sp) = (phase.cos(), phase.sin());
    #[rustfmt::skip]
    let data = DMatrix::from_row_slice(4, 4, &[
        c,       0.0,      s * cp,  s * sp,
        0.0,     c,        s * sp,  -s * cp,
        s * cp,  s * sp,   c,       0.0,
        s * sp,  -s * cp,  0.0,     c,
    ]);
    CovarianceMatrix::new(data)
}

/// Chooses which pair of quadrature combinations [`squeezing_db`] reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureSelector {
    /// `x = cos θ I + sin θ Q` (squeezed) and its orthogonal partner (amplified).
    Single { mode: usize, angle: f64 },
    /// `y = cos θ I_b + sin θ Q_b`; squeezed `(I_a − y)/√2`, amplified `(I_a + y)/√2`.
    ///
    /// For a two-mode squeezed state of phase `φ`, `θ = φ` picks the
    /// principal axes.
    TwoMode { a: usize, b: usize, angle: f64 },
    /// Arbitrary directions in quadrature space; normalized before use.
    Custom { squeezed: Vec<f64>, amplified: Vec<f64> },
}

impl QuadratureSelector {
    pub fn two_mode(a: usize, b: usize) -> Self {
        QuadratureSelector::TwoMode { a, b, angle: 0.0 }
    }

    fn directions(&self, n_modes: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        let dim = 2 * n_modes;
        match *self {
            QuadratureSelector::Single { mode, angle } => {
                check_modes(n_modes, &[mode])?;
                let mut s = DVector::zeros(dim);
                let mut a = DVector::zeros(dim);
                s[2 * mode] = angle.cos();
                s[2 * mode + 1] = angle.sin();
                a[2 * mode] = -angle.sin();
                a[2 * mode + 1] = angle.cos();
                Ok((s, a))
            }
            QuadratureSelector::TwoMode { a, b, angle } => {
                check_modes(n_modes, &[a, b])?;
                if a == b {
                    return Err(invalid_arg("two-mode selector needs distinct modes"));
                }
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let mut s = DVector::zeros(dim);
                let mut p = DVector::zeros(dim);
                s[2 * a] = h;
                p[2 * a] = h;
                s[2 * b] = -h * angle.cos();
                s[2 * b + 1] = -h * angle.sin();
                p[2 * b] = h * angle.cos();
                p[2 * b + 1] = h * angle.sin();
                Ok((s, p))
            }
            QuadratureSelector::Custom {
                ref squeezed,
                ref amplified,
            } => {
                let norm = |v: &[f64]| -> Result<DVector<f64>> {
                    if v.len() != dim {
                        return Err(invalid_arg(format!(
                            "custom quadrature needs {dim} components, got {}",
                            v.len()
                        )));
                    }
                    let x = DVector::from_column_slice(v);
                    let n = x.norm();
                    if !(n > 0.0) {
                        return Err(invalid_arg("custom quadrature direction is zero"));
                    }
                    Ok(x / n)
                };
                Ok((norm(squeezed)?, norm(amplified)?))
            }
        }
    }
}

/// Variances of the selected (squeezed, amplified) quadratures in dB
/// relative to vacuum. Squeezing below the vacuum level is negative.
pub fn squeezing_db(v: &CovarianceMatrix, selector: &QuadratureSelector) -> Result<(f64, f64)> {
    let (vs, va) = quadrature_variances(v, selector)?;
    Ok((10.0 * vs.log10(), 10.0 * va.log10()))
}

/// Linear variances behind [`squeezing_db`].
pub fn quadrature_variances(v: &CovarianceMatrix, selector: &QuadratureSelector) -> Result<(f64, f64)> {
    let (s, a) = selector.directions(v.n_modes())?;
    let var = |u: &DVector<f64>| (u.transpose() * v.matrix() * u)[(0, 0)];
    let (vs, va) = (var(&s), var(&a));
    if !(vs > 0.0 && va > 0.0) {
        return Err(invalid_state(format!(
            "selected quadrature variances must be positive, got {vs} and {va}"
        )));
    }
    Ok((vs, va))
}

/// Entanglement and squeezing metrics of a two-party split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    /// Bits.
    pub log_negativity: f64,
    pub purity: f64,
    /// Ebits; evaluated at `min(ν̃_min, 1)`.
    pub entropy_of_formation: f64,
    /// Minimum symplectic eigenvalue of the partial transpose.
    pub nu_min: f64,
    /// `S₊`, the squeezed quadrature, dB relative to vacuum.
    pub squeeze_plus_db: f64,
    /// `S₋`, the amplified quadrature, dB relative to vacuum.
    pub squeeze_minus_db: f64,
    /// Whether the state itself passed the physicality test.
    pub physical: bool,
}

impl EntanglementReport {
    /// Computes every metric without rejecting slightly unphysical input,
    /// which estimated matrices often are. The `physical` flag records the
    /// outcome of the check instead.
    pub fn from_covariance(v: &CovarianceMatrix, side: &[usize], selector: &QuadratureSelector) -> Result<Self> {
        let nu_min = transposed_nu_min(v, side)?;
        let (squeeze_plus_db, squeeze_minus_db) = squeezing_db(v, selector)?;
        Ok(Self {
            log_negativity: log_negativity_from_nu(nu_min),
            purity: purity(v)?,
            entropy_of_formation: entropy_of_formation(nu_min.min(1.0))?,
            nu_min,
            squeeze_plus_db,
            squeeze_minus_db,
            physical: v.is_physical(),
        })
    }
}

/// `E` at `ν` and at `ν ± δν`, as (value, lower, upper).
pub fn log_negativity_interval(nu: f64, nu_err: f64) -> (f64, f64, f64) {
    let e = log_negativity_from_nu(nu);
    let lo = log_negativity_from_nu(nu + nu_err.abs());
    let hi = if nu - nu_err.abs() > 0.0 {
        log_negativity_from_nu(nu - nu_err.abs())
    } else {
        f64::INFINITY
    };
    (e, lo, hi)
}

/// `2r / ln 2`, the logarithmic negativity of a two-mode squeezed vacuum.
pub fn tmsv_log_negativity(r: f64) -> f64 {
    2.0 * r / LN_2
}
