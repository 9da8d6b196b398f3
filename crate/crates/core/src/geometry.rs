//! Linear array geometry, steering vectors and the ULA-to-array
//! transformation matrix.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, frobenius, CMatrix, CVector};

/// Perturbations at or beyond this many wavelengths are rejected.
pub const MAX_PERTURBATION: f64 = 0.5;
/// Perturbations beyond this many wavelengths are accepted with a warning.
pub const WARN_PERTURBATION: f64 = 0.25;
const MAX_REDRAWS: usize = 100;

/// Element positions of a nominally half-wavelength linear array.
///
/// Positions share the unit of `wavelength`. The reference array is always
/// the ideal ULA with element `n` at `n·λ/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryRecord", into = "GeometryRecord")]
pub struct ArrayGeometry {
    positions: Vec<f64>,
    wavelength: f64,
    sigma: f64,
    seed: Option<u64>,
}

/// On-disk form of [`ArrayGeometry`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryRecord {
    pub n_elements: usize,
    pub wavelength: f64,
    pub positions: Vec<f64>,
    pub seed: Option<u64>,
    pub sigma: f64,
}

impl TryFrom<GeometryRecord> for ArrayGeometry {
    type Error = Error;

    fn try_from(rec: GeometryRecord) -> Result<Self> {
        if rec.n_elements != rec.positions.len() {
            return Err(Error::dim(format!(
                "n_elements is {} but {} positions were given",
                rec.n_elements,
                rec.positions.len()
            )));
        }
        let mut g = ArrayGeometry::new(rec.positions, rec.wavelength)?;
        g.sigma = rec.sigma;
        g.seed = rec.seed;
        Ok(g)
    }
}

impl From<ArrayGeometry> for GeometryRecord {
    fn from(g: ArrayGeometry) -> Self {
        GeometryRecord {
            n_elements: g.positions.len(),
            wavelength: g.wavelength,
            positions: g.positions,
            seed: g.seed,
            sigma: g.sigma,
        }
    }
}

impl ArrayGeometry {
    pub fn new(positions: Vec<f64>, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::param(format!("wavelength must be positive, got {wavelength}")));
        }
        if positions.is_empty() {
            return Err(Error::param("geometry needs at least one element"));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("element positions must be finite"));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("element positions must be strictly increasing"));
        }
        for (n, &p) in positions.iter().enumerate() {
            let offset = (p - n as f64 * wavelength / 2.0) / wavelength;
            if offset.abs() >= MAX_PERTURBATION {
                return Err(Error::param(format!(
                    "element {n} is {offset:.3} wavelengths from its ULA position (limit {MAX_PERTURBATION})"
                )));
            }
            if offset.abs() > WARN_PERTURBATION {
                log::warn!("element {n} is {offset:.3} wavelengths from its ULA position");
            }
        }
        Ok(Self {
            positions,
            wavelength,
            sigma: 0.0,
            seed: None,
        })
    }

    /// Half-wavelength uniform linear array.
    pub fn ula(n_elements: usize, wavelength: f64) -> Result<Self> {
        let positions = (0..n_elements)
            .map(|n| n as f64 * wavelength / 2.0)
            .collect();
        Self::new(positions, wavelength)
    }

    pub fn n_elements(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Standard deviation (in wavelengths) the positions were drawn with.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// The ideal ULA positions p̄ₙ = n·λ/2.
    pub fn reference_positions(&self) -> Vec<f64> {
        (0..self.n_elements())
            .map(|n| n as f64 * self.wavelength / 2.0)
            .collect()
    }

    /// p̃ₙ = pₙ − n·λ/2, in the unit of the positions.
    pub fn perturbations(&self) -> Vec<f64> {
        self.positions
            .iter()
            .zip(self.reference_positions())
            .map(|(p, r)| p - r)
            .collect()
    }

    pub fn is_uniform(&self) -> bool {
        self.positions == self.reference_positions()
    }

    pub fn steering_vector(&self, theta_deg: f64) -> CVector {
        steering_vector(theta_deg, &self.positions, self.wavelength)
    }

    pub fn reference_steering_vector(&self, theta_deg: f64) -> CVector {
        steering_vector(theta_deg, &self.reference_positions(), self.wavelength)
    }

    pub fn steering_matrix(&self, thetas_deg: &[f64]) -> CMatrix {
        steering_matrix(thetas_deg, &self.positions, self.wavelength)
    }

    pub fn reference_steering_matrix(&self, thetas_deg: &[f64]) -> CMatrix {
        steering_matrix(thetas_deg, &self.reference_positions(), self.wavelength)
    }
}

/// Perturbed ULA: pₙ = n·λ/2 + p̃ₙ with p̃ₙ ~ N(0, (σλ)²).
///
/// A draw that would break the strict ordering of positions, or land half a
/// wavelength or more from the ULA slot, is redrawn for that element.
pub fn make_nulra(n_elements: usize, wavelength: f64, sigma: f64, seed: u64) -> Result<ArrayGeometry> {
    if n_elements < 2 {
        return Err(Error::param(format!("need at least 2 elements, got {n_elements}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be a finite non-negative number, got {sigma}")));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::param(format!("wavelength must be positive, got {wavelength}")));
    }
    let normal = Normal::new(0.0, sigma * wavelength)
        .map_err(|e| Error::param(format!("bad perturbation distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<f64> = Vec::with_capacity(n_elements);
    for n in 0..n_elements {
        let nominal = n as f64 * wavelength / 2.0;
        let mut accepted = None;
        for _ in 0..=MAX_REDRAWS {
            let offset = if sigma == 0.0 { 0.0 } else { normal.sample(&mut rng) };
            let p = nominal + offset;
            let ordered = positions.last().is_none_or(|&prev| p > prev);
            if ordered && offset.abs() < MAX_PERTURBATION * wavelength {
                accepted = Some(p);
                break;
            }
        }
        match accepted {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::param(format!(
                    "could not place element {n} after {MAX_REDRAWS} redraws (sigma {sigma} too large)"
                )))
            }
        }
    }
    let mut g = ArrayGeometry::new(positions, wavelength)?;
    g.sigma = sigma;
    g.seed = Some(seed);
    Ok(g)
}

/// aₙ(θ) = exp(j·2π·pₙ·sinθ/λ).
pub fn steering_vector(theta_deg: f64, positions: &[f64], wavelength: f64) -> CVector {
    let k = 2.0 * PI * theta_deg.to_radians().sin() / wavelength;
    CVector::from_iterator(
        positions.len(),
        positions.iter().map(|&p| Complex64::cis(k * p)),
    )
}

/// Columns are the steering vectors of `thetas_deg`.
pub fn steering_matrix(thetas_deg: &[f64], positions: &[f64], wavelength: f64) -> CMatrix {
    let mut sorted = thetas_deg.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        log::warn!("steering matrix built with duplicate angles");
    }
    let mut a = CMatrix::zeros(positions.len(), thetas_deg.len());
    for (k, &theta) in thetas_deg.iter().enumerate() {
        a.set_column(k, &steering_vector(theta, positions, wavelength));
    }
    a
}

/// How the default fitting grid samples the angle domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridSpacing {
    #[default]
    UniformAngle,
    UniformSine,
}

/// `points` angles spanning [−89°, 89°].
pub fn fit_grid(points: usize, spacing: GridSpacing) -> Vec<f64> {
    const EDGE: f64 = 89.0;
    if points == 1 {
        return vec![0.0];
    }
    let step = 1.0 / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let t = -1.0 + 2.0 * i as f64 * step;
            match spacing {
                GridSpacing::UniformAngle => t * EDGE,
                GridSpacing::UniformSine => (t * EDGE.to_radians().sin()).asin().to_degrees(),
            }
        })
        .collect()
}

pub const DEFAULT_FIT_POINTS: usize = 181;

/// Least-squares map T with T·a(θ, p̄) ≈ a(θ, p).
#[derive(Debug, Clone)]
pub struct TransformationMatrix {
    pub t: CMatrix,
    pub fit_grid_deg: Vec<f64>,
    /// ‖T·A(grid, p̄) − A(grid, p)‖_F / ‖A(grid, p)‖_F
    pub fit_residual: f64,
}

impl TransformationMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            t: CMatrix::identity(n, n),
            fit_grid_deg: Vec::new(),
            fit_residual: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    /// ‖T·a(θ, p̄) − a(θ, p)‖₂ / √N at a single angle.
    pub fn mapping_error(&self, geometry: &ArrayGeometry, theta_deg: f64) -> f64 {
        let mapped = &self.t * geometry.reference_steering_vector(theta_deg);
        let diff = mapped - geometry.steering_vector(theta_deg);
        diff.norm() / (geometry.n_elements() as f64).sqrt()
    }
}

/// Fit the transformation matrix on `fit_grid_deg`.
///
/// An exact ULA maps to itself, so it gets the identity without a solve.
pub fn compute_transformation(geometry: &ArrayGeometry, fit_grid_deg: &[f64]) -> Result<TransformationMatrix> {
    check_grid(geometry, fit_grid_deg)?;
    if geometry.is_uniform() {
        return Ok(TransformationMatrix {
            t: CMatrix::identity(geometry.n_elements(), geometry.n_elements()),
            fit_grid_deg: fit_grid_deg.to_vec(),
            fit_residual: 0.0,
        });
    }
    fit_transformation(geometry, fit_grid_deg)
}

/// Least-squares fit of T on the grid, with no shortcut for uniform arrays.
///
/// Solved row by row: T·Ā = A is Āᵀ·Tᵀ = Aᵀ, one right-hand side per row of T.
pub fn fit_transformation(geometry: &ArrayGeometry, fit_grid_deg: &[f64]) -> Result<TransformationMatrix> {
    check_grid(geometry, fit_grid_deg)?;
    let tm = solve_rows(geometry, fit_grid_deg)?;
    if tm.1 > 1e8 {
        log::warn!("transformation fit grid is ill-conditioned (condition {:.3e})", tm.1);
    }
    Ok(tm.0)
}

/// Fit T on the true target angles, as a diagnostic. With fewer angles than
/// elements the fit is underdetermined and the minimum-norm T is returned.
pub fn compute_transformation_oracle(geometry: &ArrayGeometry, thetas_deg: &[f64]) -> Result<TransformationMatrix> {
    if thetas_deg.is_empty() {
        return Err(Error::param("oracle transformation needs at least one angle"));
    }
    Ok(solve_rows(geometry, thetas_deg)?.0)
}

fn check_grid(geometry: &ArrayGeometry, grid: &[f64]) -> Result<()> {
    let n = geometry.n_elements();
    if grid.len() < n {
        return Err(Error::param(format!(
            "fit grid has {} angles, need at least N = {n}",
            grid.len()
        )));
    }
    if grid.iter().any(|t| !(t.abs() < 90.0)) {
        return Err(Error::param("fit grid angles must lie strictly inside (-90, 90) degrees"));
    }
    Ok(())
}

fn solve_rows(geometry: &ArrayGeometry, grid: &[f64]) -> Result<(TransformationMatrix, f64)> {
    let reference = geometry.reference_steering_matrix(grid);
    let actual = geometry.steering_matrix(grid);
    let ls = numerics::least_squares(&reference.transpose(), &actual.transpose())?;
    let t = ls.solution.transpose();
    let fit_residual = frobenius(&(&t * &reference - &actual)) / frobenius(&actual);
    Ok((
        TransformationMatrix {
            t,
            fit_grid_deg: grid.to_vec(),
            fit_residual,
        },
        ls.condition,
    ))
}
