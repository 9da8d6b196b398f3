//! Atomic-norm DOA estimation on a non-uniform array.
//!
//! The estimator solves
//!
//! ```text
//! minimize   ½‖r − z‖²
//! subject to [[G, q], [qᴴ, u]] ⪰ 0,   q = Tᴴ Cᴴ z,
//!            Tr G = γ²/u,   Σₙ G[n, n+k] = 0 for k ≠ 0,
//! ```
//!
//! whose constraints force |aᴴ(θ, p̄)·q| ≤ γ for every θ on the ideal ULA
//! manifold, and T carries that manifold onto the real array. Directions are
//! the peaks of f(θ) = |aᴴ(θ, p̄)·q̂|².
//!
//! The solver is ADMM on the splitting "affine part in (z, G)" versus "PSD
//! cone on the bordered matrix", internally normalized so that γ = u = 1.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, frobenius, CMatrix, CVector};
use crate::spectrum::{self, PeakSet, Spectrum, DEFAULT_SPECTRUM_POINTS};

/// Grid size used to check the dual-norm bound after every solve.
pub const DUAL_CHECK_POINTS: usize = 10_000;
/// Allowed relative excess of max|aᴴq| over γ.
pub const DUAL_BOUND_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// γ² = 10^(−0.096·ζ + 5.5722)
    #[default]
    PaperFit,
    /// γ² = 10^(0.1·ζ)·M·K·ln(M·K)
    Theory,
}

/// Regularization weight γ for an SNR of `snr_db`.
pub fn gamma_from_snr(snr_db: f64, m: usize, k: usize, mode: GammaMode) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::param("snr_db must be finite"));
    }
    let gamma_sq = match mode {
        GammaMode::PaperFit => 10f64.powf(-0.096 * snr_db + 5.5722),
        GammaMode::Theory => {
            if m == 0 || k == 0 {
                return Err(Error::param("theory-mode gamma needs M, K >= 1"));
            }
            let mk = (m * k) as f64;
            10f64.powf(0.1 * snr_db) * mk * mk.ln()
        }
    };
    if !(gamma_sq > 0.0) {
        return Err(Error::param(format!(
            "gamma rule gives non-positive gamma^2 = {gamma_sq} (M·K = 1 in theory mode?)"
        )));
    }
    Ok(gamma_sq.sqrt())
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub r: CVector,
    /// Combined matrix C = B·diag(a(α, p)), M×N.
    pub c: CMatrix,
    /// Transformation matrix, N×N.
    pub t: CMatrix,
    pub gamma: f64,
    pub u: f64,
}

impl SdpProblem {
    pub fn new(r: CVector, c: CMatrix, t: CMatrix, gamma: f64) -> Result<Self> {
        let p = Self { r, c, t, gamma, u: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_u(mut self, u: f64) -> Result<Self> {
        self.u = u;
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("gamma must be positive and finite, got {}", self.gamma)));
        }
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(Error::param(format!("u must be positive and finite, got {}", self.u)));
        }
        if self.c.nrows() != self.r.len() {
            return Err(Error::dim(format!("C has {} rows but r has length {}", self.c.nrows(), self.r.len())));
        }
        if !self.t.is_square() || self.t.nrows() != self.c.ncols() {
            return Err(Error::dim(format!(
                "T is {}x{} but C has {} columns",
                self.t.nrows(),
                self.t.ncols(),
                self.c.ncols()
            )));
        }
        Ok(())
    }

    /// Tᴴ Cᴴ, mapping z to q.
    pub fn operator(&self) -> CMatrix {
        self.t.adjoint() * self.c.adjoint()
    }

    pub fn objective(&self, z: &CVector) -> f64 {
        0.5 * (&self.r - z).norm_squared()
    }

    /// ‖r − (TᴴCᴴ)†·q‖², the objective in the form that eliminates z.
    /// The pseudo-inverse is the minimum-norm one when TᴴCᴴ is wide.
    pub fn pseudo_inverse_objective(&self, q: &CVector) -> Result<f64> {
        let h = self.operator();
        let rhs = CMatrix::from_column_slice(q.len(), 1, q.as_slice());
        let z = numerics::least_squares(&h, &rhs)?.solution;
        Ok((&self.r - z.column(0)).norm_squared())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative stopping tolerance on the ADMM primal and dual residuals.
    pub tolerance: f64,
    pub rho_init: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Multiplicative penalty step of residual balancing.
    pub rho_factor: f64,
    /// Residual ratio that triggers a penalty update.
    pub balance_ratio: f64,
    /// Iterations between residual checks (one "outer" iteration).
    pub check_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            tolerance: 1e-6,
            rho_init: 1.0,
            rho_min: 1e-4,
            rho_max: 1e4,
            rho_factor: 2.0,
            balance_ratio: 10.0,
            check_every: 10,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.check_every == 0 {
            return Err(Error::param("max_iterations and check_every must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance must be positive"));
        }
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_init && self.rho_init <= self.rho_max) {
            return Err(Error::param("need 0 < rho_min <= rho_init <= rho_max"));
        }
        if !(self.rho_factor > 1.0 && self.balance_ratio > 1.0) {
            return Err(Error::param("rho_factor and balance_ratio must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    /// ½‖r − z‖² at this iterate, in the caller's scale. ADMM iterates are
    /// infeasible, so this approaches the optimum from below.
    pub objective: f64,
    /// ½‖r − s·z‖² with s ≤ 1 the largest scale putting TᴴCᴴ·s·z inside the
    /// dual-norm ball (checked on a fine grid); an upper bound on the optimum.
    pub feasible_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rho: f64,
    /// The penalty changed right after this check.
    pub rho_updated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub constraint_violation: f64,
    pub min_eigenvalue: f64,
    pub repair_weight: f64,
    /// max over a fine grid of |aᴴ(θ, p̄)·q| / γ
    pub dual_bound_ratio: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub z: CVector,
    pub q: CVector,
    pub g: CMatrix,
    pub gamma: f64,
    pub u: f64,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest of the relative PSD deficit, trace gap and anti-diagonal sums.
    pub constraint_violation: f64,
    /// Smallest eigenvalue of [[G, q], [qᴴ, u]].
    pub min_eigenvalue: f64,
    /// Weight of the strictly feasible point blended in to clear residual
    /// PSD infeasibility; 0 when the ADMM iterate was already feasible.
    pub repair_weight: f64,
    pub dual_bound_ratio: f64,
    pub trace: Vec<TracePoint>,
}

impl SdpSolution {
    pub fn diagnostics(&self) -> SolverDiagnostics {
        SolverDiagnostics {
            iterations: self.iterations,
            objective: self.objective,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            constraint_violation: self.constraint_violation,
            min_eigenvalue: self.min_eigenvalue,
            repair_weight: self.repair_weight,
            dual_bound_ratio: self.dual_bound_ratio,
            trace: self.trace.clone(),
        }
    }

    pub fn bordered(&self) -> CMatrix {
        bordered(&self.g, &self.q, self.u)
    }
}

/// [[G, q], [qᴴ, u]]
pub fn bordered(g: &CMatrix, q: &CVector, u: f64) -> CMatrix {
    let n = g.nrows();
    let mut b = CMatrix::zeros(n + 1, n + 1);
    b.view_mut((0, 0), (n, n)).copy_from(g);
    for i in 0..n {
        b[(i, n)] = q[i];
        b[(n, i)] = q[i].conj();
    }
    b[(n, n)] = Complex64::new(u, 0.0);
    b
}

/// Σₙ G[n, n+k] for k = −(N−1)..=(N−1); index k + N − 1.
pub fn diagonal_sums(g: &CMatrix) -> Vec<Complex64> {
    let n = g.nrows() as isize;
    (-(n - 1)..n)
        .map(|k| {
            (0..n)
                .filter(|&i| i + k >= 0 && i + k < n)
                .map(|i| g[(i as usize, (i + k) as usize)])
                .sum()
        })
        .collect()
}

/// Orthogonal projection of a Hermitian matrix onto
/// {Tr G = trace, Σₙ G[n, n+k] = 0 for k ≠ 0}. Each diagonal is shifted by
/// its mean excess; diagonals are disjoint so the shifts are independent.
fn project_affine(g: &mut CMatrix, trace: f64) {
    let n = g.nrows();
    for k in 0..n {
        let len = (n - k) as f64;
        let mut sum = Complex64::new(0.0, 0.0);
        for i in 0..(n - k) {
            sum += g[(i, i + k)];
        }
        let target = if k == 0 { Complex64::new(trace, 0.0) } else { Complex64::new(0.0, 0.0) };
        let shift = (sum - target) / len;
        for i in 0..(n - k) {
            g[(i, i + k)] -= shift;
            if k > 0 {
                g[(i + k, i)] = g[(i, i + k)].conj();
            } else {
                g[(i, i)].im = 0.0;
            }
        }
    }
}

/// Solve the transformation-matrix SDP by ADMM.
pub fn solve_sdp(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
    problem.validate()?;
    options.validate()?;
    let n = problem.n();
    let m = problem.m();
    let gamma = problem.gamma;
    let u = problem.u;

    // Normalized problem: r' = r/γ, γ' = u' = 1. The feasible set in q is
    // {sup_θ |aᴴq| ≤ γ} for every u, so z = γ·z' and G = (γ²/u)·G'.
    let r = &problem.r / Complex64::new(gamma, 0.0);
    let h = problem.operator();
    let h_adj = h.adjoint();
    let gram = numerics::hermitian_eig(&(&h_adj * &h))?;
    let basis = &gram.vectors;
    let basis_adj = basis.adjoint();
    let r_coords = &basis_adj * &r;

    let mut rho = options.rho_init;
    let mut s = bordered(
        &(CMatrix::identity(n, n) * Complex64::new(1.0 / n as f64, 0.0)),
        &CVector::zeros(n),
        1.0,
    );
    let mut y = CMatrix::zeros(n + 1, n + 1);
    let mut z = CVector::zeros(m);
    let mut g = CMatrix::zeros(n, n);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;

    for it in 1..=options.max_iterations {
        iterations = it;
        let p = &s - &y;

        g = p.view((0, 0), (n, n)).into_owned();
        project_affine(&mut g, 1.0);

        // z = (I + 2ρHᴴH)⁻¹ (r' + 2ρHᴴw), w the Hermitian average of the border.
        let w = CVector::from_fn(n, |i, _| (p[(i, n)] + p[(n, i)].conj()) * 0.5);
        let rhs_coords = &r_coords + &basis_adj * (&h_adj * &w) * Complex64::new(2.0 * rho, 0.0);
        let scaled = CVector::from_fn(m, |i, _| rhs_coords[i] / (1.0 + 2.0 * rho * gram.values[i]));
        z = basis * scaled;
        let q = &h * &z;

        let x = bordered(&g, &q, 1.0);
        let s_prev = std::mem::replace(&mut s, numerics::psd_project(&(&x + &y))?);
        y += &x - &s;

        let last = it == options.max_iterations;
        if it % options.check_every == 0 || last {
            primal_residual = frobenius(&(&x - &s));
            dual_residual = rho * frobenius(&(&s - &s_prev));
            let eps_primal = options.tolerance * frobenius(&x).max(frobenius(&s)).max(1.0);
            let eps_dual = options.tolerance * (rho * frobenius(&y)).max(1.0);
            let objective = gamma * gamma * 0.5 * (&r - &z).norm_squared();
            let shrink = 1.0 / max_dual_magnitude(&q, DUAL_CHECK_POINTS).max(1.0);
            let feasible_objective = gamma * gamma * 0.5 * (&r - &z * Complex64::new(shrink, 0.0)).norm_squared();
            let mut point = TracePoint {
                iteration: it,
                objective,
                feasible_objective,
                primal_residual,
                dual_residual,
                rho,
                rho_updated: false,
            };
            if primal_residual <= eps_primal && dual_residual <= eps_dual {
                trace.push(point);
                converged = true;
                break;
            }
            let ratio = options.balance_ratio;
            if primal_residual > ratio * dual_residual && rho < options.rho_max {
                let next = (rho * options.rho_factor).min(options.rho_max);
                y *= Complex64::new(rho / next, 0.0);
                rho = next;
                point.rho_updated = true;
            } else if dual_residual > ratio * primal_residual && rho > options.rho_min {
                let next = (rho / options.rho_factor).max(options.rho_min);
                y *= Complex64::new(rho / next, 0.0);
                rho = next;
                point.rho_updated = true;
            }
            trace.push(point);
        }
    }

    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            primal_residual,
            dual_residual,
        });
    }

    // Blend towards the strictly feasible point (G' = I/N, q' = 0) just
    // enough to clear any PSD deficit left by finite ADMM accuracy. Both
    // affine constraints hold for the blend because they hold at both ends.
    let floor = 1.0 / n as f64;
    let min_eig_normalized = numerics::min_eigenvalue(&bordered(&g, &(&h * &z), 1.0))?;
    let mut repair_weight = 0.0;
    if min_eig_normalized < 0.0 {
        let deficit = -min_eig_normalized + 1e-12;
        repair_weight = (deficit / (deficit + floor)).min(1.0);
        g = g * Complex64::new(1.0 - repair_weight, 0.0)
            + CMatrix::identity(n, n) * Complex64::new(repair_weight * floor, 0.0);
        z *= Complex64::new(1.0 - repair_weight, 0.0);
    }

    // Back to the caller's scale; a congruence, so PSD is preserved.
    let level = gamma * gamma / u;
    let z = z * Complex64::new(gamma, 0.0);
    let g = g * Complex64::new(level, 0.0);
    let q = &h * &z;
    let min_eig = numerics::min_eigenvalue(&bordered(&g, &q, u))?;

    let trace_gap = ((0..n).map(|i| g[(i, i)].re).sum::<f64>() - level).abs() / level;
    let g_norm = frobenius(&g).max(f64::MIN_POSITIVE);
    let sums = diagonal_sums(&g);
    let off_sum = sums
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != n - 1)
        .map(|(_, s)| s.norm())
        .fold(0.0, f64::max)
        / g_norm;
    let constraint_violation = (-min_eig / u).max(0.0).max(trace_gap).max(off_sum);

    let dual_bound_ratio = max_dual_magnitude(&q, DUAL_CHECK_POINTS) / gamma;
    if dual_bound_ratio > 1.0 + DUAL_BOUND_SLACK {
        return Err(Error::Numeric {
            message: format!("dual polynomial bound violated: max |a^H q| = {dual_bound_ratio:.6}·gamma"),
            residual: dual_bound_ratio - 1.0,
        });
    }

    let objective = problem.objective(&z);
    Ok(SdpSolution {
        z,
        q,
        g,
        gamma,
        u,
        objective,
        iterations,
        primal_residual,
        dual_residual,
        constraint_violation,
        min_eigenvalue: min_eig,
        repair_weight,
        dual_bound_ratio,
        trace,
    })
}

/// aᴴ(θ, p̄)·q for a half-wavelength ULA reference.
fn reference_inner(q: &CVector, sin_theta: f64) -> Complex64 {
    let step = PI * sin_theta;
    q.iter()
        .enumerate()
        .map(|(n, &qn)| Complex64::cis(-step * n as f64) * qn)
        .sum()
}

/// max over `points` values of sinθ uniform on (−1, 1] of |aᴴ(θ, p̄)·q|.
pub fn max_dual_magnitude(q: &CVector, points: usize) -> f64 {
    (1..=points)
        .map(|i| {
            let s = -1.0 + 2.0 * i as f64 / points as f64;
            reference_inner(q, s).norm()
        })
        .fold(0.0, f64::max)
}

/// f(θ) = |aᴴ(θ, p̄)·q̂|² on `grid_deg`.
pub fn dual_polynomial(solution: &SdpSolution, grid_deg: &[f64]) -> Spectrum {
    let mut s = polynomial_spectrum(&solution.q, grid_deg);
    s.gamma_level = Some(solution.gamma * solution.gamma);
    s
}

/// |aᴴ(θ, p̄)·q|² for an arbitrary coefficient vector.
pub fn polynomial_spectrum(q: &CVector, grid_deg: &[f64]) -> Spectrum {
    let values = grid_deg
        .iter()
        .map(|t| reference_inner(q, t.to_radians().sin()).norm_sqr())
        .collect();
    Spectrum {
        angles_deg: grid_deg.to_vec(),
        values,
        gamma_level: None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EstimatorOptions {
    pub solver: SolverOptions,
    pub spectrum_points: usize,
    pub u: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            spectrum_points: DEFAULT_SPECTRUM_POINTS,
            u: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimateSet {
    /// Estimated directions, ascending.
    pub angles_deg: Vec<f64>,
    /// Requested directions with no matching spectral peak.
    pub deficit: usize,
    pub spectrum: Spectrum,
    pub solution: SdpSolution,
}

/// Solve, evaluate the dual polynomial and pick the `k` strongest peaks.
pub fn estimate_doa(
    r: &CVector,
    c: &CMatrix,
    t: &CMatrix,
    k: usize,
    gamma: f64,
    options: &EstimatorOptions,
) -> Result<EstimateSet> {
    let problem = SdpProblem::new(r.clone(), c.clone(), t.clone(), gamma)?.with_u(options.u)?;
    let solution = solve_sdp(&problem, &options.solver)?;
    let grid = spectrum::uniform_angle_grid(options.spectrum_points);
    let spectrum = dual_polynomial(&solution, &grid);
    let PeakSet { angles_deg, deficit, .. } = spectrum::find_peaks(&spectrum, k)?;
    Ok(EstimateSet {
        angles_deg,
        deficit,
        spectrum,
        solution,
    })
}
