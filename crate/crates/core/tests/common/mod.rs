#![allow(dead_code)]

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Print straight to the terminal, past the test harness's output capture.
pub fn report(line: &str) {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{line}");
}

/// r_m = Σₙ B[m,n]·e^{j2π pₙ sinα/λ}·Σₖ e^{j2π pₙ sinθₖ/λ}·sₖ, one scalar at a time.
pub fn double_sum_received(b: &CMat, positions: &[f64], wavelength: f64, alpha_deg: f64, thetas_deg: &[f64], amps: &[Complex64]) -> CVec {
    let sa = alpha_deg.to_radians().sin();
    CVec::from_fn(b.nrows(), |m, _| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (n, &p) in positions.iter().enumerate() {
            let phase_rx = 2.0 * PI * p * sa / wavelength;
            let mut inner = Complex64::new(0.0, 0.0);
            for (t, s) in thetas_deg.iter().zip(amps) {
                let ph = 2.0 * PI * p * t.to_radians().sin() / wavelength;
                inner += Complex64::new(ph.cos(), ph.sin()) * s;
            }
            acc += b[(m, n)] * Complex64::new(phase_rx.cos(), phase_rx.sin()) * inner;
        }
        acc
    })
}

/// Reference (half-wavelength ULA) steering vector at sinθ = u.
pub fn ula_atom(n: usize, u: f64) -> CVec {
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, PI * i as f64 * u))
}

pub struct LassoOracle {
    /// ½‖r − z‖² at the dual point recovered from the LASSO solution.
    pub objective: f64,
    pub z: CVec,
    pub iterations: usize,
    pub gap: f64,
}

/// Solve min_c ½‖r − Wc‖² + γ‖c‖₁ by accelerated proximal gradient, with
/// W's columns H-adjoint images of ULA atoms on `points` values of sinθ.
/// Its dual is min ½‖r − z‖² s.t. |aᴴ(u)·Hz| ≤ γ on the grid, i.e. the
/// SDP's problem with the continuous constraint sampled. Returns the dual
/// point z = s·(r − Wc), s the largest scale keeping it feasible.
pub fn lasso_dual_oracle(r: &CVec, h: &CMat, gamma: f64, points: usize, max_iter: usize) -> LassoOracle {
    let n = h.nrows();
    let atoms = CMat::from_fn(n, points, |i, j| {
        let u = -1.0 + 2.0 * (j + 1) as f64 / points as f64;
        Complex64::from_polar(1.0, PI * i as f64 * u)
    });
    // W = Hᴴ·atoms, so that Wᴴz = atomsᴴ·(Hz).
    let w = h.adjoint() * &atoms;
    let wh = w.adjoint();
    let lip = {
        // power iteration on WᴴW
        let mut v = CVec::from_element(points, Complex64::new(1.0, 0.0));
        let mut lam = 0.0;
        for _ in 0..500 {
            let next = &wh * (&w * &v);
            lam = next.norm() / v.norm();
            v = next / Complex64::new(v.norm().max(1e-300), 0.0);
            v /= Complex64::new(v.norm(), 0.0);
        }
        lam * 1.01
    };
    let step = 1.0 / lip;
    let soft = |x: &CVec| {
        x.map(|c| {
            let m = c.norm();
            if m <= gamma * step {
                Complex64::new(0.0, 0.0)
            } else {
                c * ((m - gamma * step) / m)
            }
        })
    };

    let mut c = CVec::zeros(points);
    let mut y = c.clone();
    let mut t: f64 = 1.0;
    let mut best: Option<LassoOracle> = None;
    for it in 1..=max_iter {
        let grad = &wh * (&w * &y - r);
        let next = soft(&(&y - grad * Complex64::new(step, 0.0)));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &c) * Complex64::new((t - 1.0) / t_next, 0.0);
        c = next;
        t = t_next;

        if it % 200 == 0 || it == max_iter {
            let resid = r - &w * &c;
            let corr = (&wh * &resid).iter().map(|v| v.norm()).fold(0.0, f64::max);
            let s = if corr > gamma { gamma / corr } else { 1.0 };
            let z = &resid * Complex64::new(s, 0.0);
            let primal = 0.5 * resid.norm_squared() + gamma * c.iter().map(|v| v.norm()).sum::<f64>();
            let dual = r.dotc(&z).re - 0.5 * z.norm_squared();
            let gap = primal - dual;
            let objective = 0.5 * (r - &z).norm_squared();
            let done = gap <= 1e-10 * primal.abs().max(1e-300);
            let better = best.as_ref().is_none_or(|b| gap < b.gap);
            if better {
                best = Some(LassoOracle {
                    objective,
                    z,
                    iterations: it,
                    gap,
                });
            }
            if done {
                break;
            }
        }
    }
    best.unwrap()
}
