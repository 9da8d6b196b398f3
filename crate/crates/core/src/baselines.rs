//! Comparison estimators: least-squares + FFT beamscan, on-grid OMP, and
//! atomic-norm estimation that assumes the ideal ULA manifold.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::anm::{self, EstimateSet, EstimatorOptions};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::numerics::{self, CMatrix, CVector};
use crate::spectrum::{self, Spectrum};

pub const DEFAULT_FFT_POINTS: usize = 4096;
pub const DEFAULT_DICTIONARY_STEP_DEG: f64 = 1.0;

/// On-grid dictionary with column i = C·a(θᵢ, p).
#[derive(Debug, Clone)]
pub struct GridDictionary {
    angles_deg: Vec<f64>,
    atoms: CMatrix,
    norms: Vec<f64>,
}

impl GridDictionary {
    /// Grid of `step_deg` spacing over (−90°, 90°], ending at 90°.
    pub fn new(c: &CMatrix, geometry: &ArrayGeometry, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0 && step_deg <= 90.0) {
            return Err(Error::param(format!("dictionary step must be in (0, 90], got {step_deg}")));
        }
        let count = (180.0 / step_deg).floor() as usize;
        let angles: Vec<f64> = (0..count).rev().map(|i| 90.0 - step_deg * i as f64).collect();
        Self::from_angles(c, geometry, angles)
    }

    pub fn from_angles(c: &CMatrix, geometry: &ArrayGeometry, angles_deg: Vec<f64>) -> Result<Self> {
        if c.ncols() != geometry.n_elements() {
            return Err(Error::dim(format!(
                "C has {} columns, array has {} elements",
                c.ncols(),
                geometry.n_elements()
            )));
        }
        if angles_deg.is_empty() || angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("dictionary angles must be non-empty and strictly increasing"));
        }
        let atoms = c * geometry.steering_matrix(&angles_deg);
        let norms: Vec<f64> = atoms.column_iter().map(|col| col.norm()).collect();
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::param(format!("dictionary atom at {}° is zero", angles_deg[i])));
        }
        Ok(Self {
            angles_deg,
            atoms,
            norms,
        })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn atoms(&self) -> &CMatrix {
        &self.atoms
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// Beamscan of the least-squares element-domain signal x̂ = C†r:
/// |Σₙ x̂ₙ e^{−jπ n sinθ}|² at the `n_fft` uniform sinθ bins.
pub fn fft_spectrum(r: &CVector, c: &CMatrix, n_fft: usize) -> Result<Spectrum> {
    let n = c.ncols();
    if n_fft < n {
        return Err(Error::param(format!("n_fft = {n_fft} is smaller than N = {n}")));
    }
    if r.len() != c.nrows() {
        return Err(Error::dim(format!("r has length {} but C has {} rows", r.len(), c.nrows())));
    }
    let rhs = CMatrix::from_column_slice(r.len(), 1, r.as_slice());
    let x = numerics::least_squares_strict(c, &rhs)?;

    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (b, xi) in buf.iter_mut().zip(x.column(0).iter()) {
        *b = *xi;
    }
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);

    // Bin k is sinθ = 2k/n_fft, wrapped into (−1, 1].
    let mut bins: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let mut u = 2.0 * k as f64 / n_fft as f64;
            if u > 1.0 {
                u -= 2.0;
            }
            (u.asin().to_degrees(), v.norm_sqr())
        })
        .collect();
    bins.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Spectrum {
        angles_deg: bins.iter().map(|b| b.0).collect(),
        values: bins.iter().map(|b| b.1).collect(),
        gamma_level: None,
    })
}

#[derive(Debug, Clone)]
pub struct FftEstimate {
    pub angles_deg: Vec<f64>,
    pub deficit: usize,
    pub spectrum: Spectrum,
}

pub fn fft_estimate(r: &CVector, c: &CMatrix, k: usize, n_fft: usize) -> Result<FftEstimate> {
    let spectrum = fft_spectrum(r, c, n_fft)?;
    let peaks = spectrum::find_peaks(&spectrum, k)?;
    Ok(FftEstimate {
        angles_deg: peaks.angles_deg,
        deficit: peaks.deficit,
        spectrum,
    })
}

#[derive(Debug, Clone)]
pub struct OmpEstimate {
    /// Selected grid angles, ascending.
    pub angles_deg: Vec<f64>,
    /// Dictionary indices in selection order.
    pub selected: Vec<usize>,
    /// Least-squares coefficients, same order as `selected`.
    pub coefficients: Vec<Complex64>,
    /// ‖residual‖ before the first and after every accepted iteration.
    pub residual_norms: Vec<f64>,
    pub deficit: usize,
}

impl OmpEstimate {
    /// |coefficient|² at the selected atoms, zero elsewhere on the grid.
    pub fn spectrum(&self, dictionary: &GridDictionary) -> Spectrum {
        let mut values = vec![0.0; dictionary.len()];
        for (&i, c) in self.selected.iter().zip(&self.coefficients) {
            values[i] = c.norm_sqr();
        }
        Spectrum {
            angles_deg: dictionary.angles_deg.clone(),
            values,
            gamma_level: None,
        }
    }
}

/// Orthogonal matching pursuit with a least-squares refit after each pick.
///
/// Stops early, flagging a deficit, if the refit becomes rank-deficient or
/// a pick fails to shrink the residual.
pub fn omp_estimate(r: &CVector, dictionary: &GridDictionary, k: usize) -> Result<OmpEstimate> {
    if k == 0 || k > dictionary.len() {
        return Err(Error::param(format!("k = {k} must be in 1..={}", dictionary.len())));
    }
    if r.len() != dictionary.atoms.nrows() {
        return Err(Error::dim(format!(
            "r has length {} but dictionary atoms have {} rows",
            r.len(),
            dictionary.atoms.nrows()
        )));
    }
    let rhs = CMatrix::from_column_slice(r.len(), 1, r.as_slice());
    let mut residual = r.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut coefficients = Vec::new();
    let mut residual_norms = vec![residual.norm()];

    while selected.len() < k {
        let corr = dictionary.atoms.adjoint() * &residual;
        let best = (0..dictionary.len())
            .filter(|i| !selected.contains(i))
            .max_by(|&a, &b| {
                let ca = corr[a].norm() / dictionary.norms[a];
                let cb = corr[b].norm() / dictionary.norms[b];
                ca.total_cmp(&cb).then(b.cmp(&a))
            });
        let Some(best) = best else { break };

        let mut trial = selected.clone();
        trial.push(best);
        let sub = dictionary.atoms.select_columns(&trial);
        let fit = numerics::least_squares(&sub, &rhs)?;
        if fit.rank_deficient {
            log::debug!("OMP stopped at {} atoms: refit is rank-deficient", selected.len());
            break;
        }
        let next = r - &sub * fit.solution.column(0);
        let norm = next.norm();
        if norm >= *residual_norms.last().unwrap() {
            log::debug!("OMP stopped at {} atoms: residual did not decrease", selected.len());
            break;
        }
        selected = trial;
        coefficients = fit.solution.column(0).iter().cloned().collect();
        residual = next;
        residual_norms.push(norm);
    }

    let mut angles_deg: Vec<f64> = selected.iter().map(|&i| dictionary.angles_deg[i]).collect();
    angles_deg.sort_by(f64::total_cmp);
    Ok(OmpEstimate {
        angles_deg,
        deficit: k - selected.len(),
        selected,
        coefficients,
        residual_norms,
    })
}

/// The atomic-norm estimator run as if the array were the ideal ULA (T = I).
pub fn anm_ula_estimate(r: &CVector, c: &CMatrix, gamma: f64, k: usize, options: &EstimatorOptions) -> Result<EstimateSet> {
    let n = c.ncols();
    anm::estimate_doa(r, c, &CMatrix::identity(n, n), k, gamma, options)
}
