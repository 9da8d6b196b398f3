//! RIS measurement model: phase-switched reflection patterns, the combined
//! matrix C = B·diag(a(α, p)) and single-channel received snapshots.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::numerics::{CMatrix, CVector};

/// Noise variance used when a scenario has no targets, so that the SNR
/// definition has no signal power to refer to.
pub const DEFAULT_NOISE_FLOOR: f64 = 1.0;

/// M×N matrix of RIS reflection coefficients; row m is the pattern applied
/// during slot m. Amplitudes are 1 and phases come from `phase_alphabet_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementRecord", into = "MeasurementRecord")]
pub struct MeasurementMatrix {
    b: CMatrix,
    phase_alphabet_deg: Vec<f64>,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub n_measurements: usize,
    pub n_elements: usize,
    pub seed: u64,
    pub phase_alphabet_deg: Vec<f64>,
    /// Row-major [re, im] pairs.
    pub entries: Vec<[f64; 2]>,
}

impl From<MeasurementMatrix> for MeasurementRecord {
    fn from(m: MeasurementMatrix) -> Self {
        let (rows, cols) = m.b.shape();
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| [m.b[(i, j)].re, m.b[(i, j)].im])
            .collect();
        MeasurementRecord {
            n_measurements: rows,
            n_elements: cols,
            seed: m.seed,
            phase_alphabet_deg: m.phase_alphabet_deg,
            entries,
        }
    }
}

impl TryFrom<MeasurementRecord> for MeasurementMatrix {
    type Error = Error;

    fn try_from(rec: MeasurementRecord) -> Result<Self> {
        if rec.entries.len() != rec.n_measurements * rec.n_elements {
            return Err(Error::dim(format!(
                "measurement matrix declares {}x{} but has {} entries",
                rec.n_measurements,
                rec.n_elements,
                rec.entries.len()
            )));
        }
        let b = CMatrix::from_row_iterator(
            rec.n_measurements,
            rec.n_elements,
            rec.entries.iter().map(|e| Complex64::new(e[0], e[1])),
        );
        let m = MeasurementMatrix {
            b,
            phase_alphabet_deg: rec.phase_alphabet_deg,
            seed: rec.seed,
        };
        m.validate()?;
        Ok(m)
    }
}

impl MeasurementMatrix {
    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    pub fn n_measurements(&self) -> usize {
        self.b.nrows()
    }

    pub fn n_elements(&self) -> usize {
        self.b.ncols()
    }

    pub fn phase_alphabet_deg(&self) -> &[f64] {
        &self.phase_alphabet_deg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn validate(&self) -> Result<()> {
        let symbols: Vec<Complex64> = self.phase_alphabet_deg.iter().map(|&d| unit_phase(d)).collect();
        for z in self.b.iter() {
            if !symbols.iter().any(|s| (s - z).norm() < 1e-12) {
                return Err(Error::param(format!(
                    "measurement entry {z} is not in the phase alphabet {:?}",
                    self.phase_alphabet_deg
                )));
            }
        }
        Ok(())
    }
}

/// e^{jφ} with components snapped to exact 0/±1 when φ is a multiple of 90°.
fn unit_phase(deg: f64) -> Complex64 {
    let z = Complex64::cis(deg.to_radians());
    let snap = |x: f64| if x.abs() < 1e-15 { 0.0 } else if (x.abs() - 1.0).abs() < 1e-15 { x.signum() } else { x };
    Complex64::new(snap(z.re), snap(z.im))
}

/// Two-phase (0°/180°) RIS patterns: i.i.d. equiprobable ±1 entries.
pub fn make_measurement_matrix(n_elements: usize, n_measurements: usize, seed: u64) -> Result<MeasurementMatrix> {
    make_measurement_matrix_with_alphabet(n_elements, n_measurements, &[0.0, 180.0], seed)
}

/// Patterns whose phases are drawn uniformly from `alphabet_deg`.
pub fn make_measurement_matrix_with_alphabet(
    n_elements: usize,
    n_measurements: usize,
    alphabet_deg: &[f64],
    seed: u64,
) -> Result<MeasurementMatrix> {
    if n_measurements == 0 {
        return Err(Error::param("need at least one measurement"));
    }
    if n_elements == 0 {
        return Err(Error::param("need at least one RIS element"));
    }
    if alphabet_deg.is_empty() {
        return Err(Error::param("phase alphabet is empty"));
    }
    let symbols: Vec<Complex64> = alphabet_deg.iter().map(|&d| unit_phase(d)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = CMatrix::from_fn(n_measurements, n_elements, |_, _| {
        symbols[rng.random_range(0..symbols.len())]
    });
    Ok(MeasurementMatrix {
        b,
        phase_alphabet_deg: alphabet_deg.to_vec(),
        seed,
    })
}

/// C = B·diag(a(α, p)).
pub fn combined_matrix(measurement: &MeasurementMatrix, geometry: &ArrayGeometry, alpha_deg: f64) -> Result<CMatrix> {
    if measurement.n_elements() != geometry.n_elements() {
        return Err(Error::dim(format!(
            "measurement matrix has {} columns but the array has {} elements",
            measurement.n_elements(),
            geometry.n_elements()
        )));
    }
    let a = geometry.steering_vector(alpha_deg);
    let mut c = measurement.b.clone();
    for (n, phase) in a.iter().enumerate() {
        for m in 0..c.nrows() {
            c[(m, n)] *= phase;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub theta_deg: f64,
    pub amplitude: Complex64,
}

/// Unit-amplitude complex gains with i.i.d. uniform phases.
pub fn random_unit_amplitudes(k: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| Complex64::cis(rng.random_range(0.0..2.0 * PI)))
        .collect()
}

fn default_noise_floor() -> f64 {
    DEFAULT_NOISE_FLOOR
}

/// Everything needed to synthesize one received snapshot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub targets: Vec<Target>,
    pub receiver_deg: f64,
    pub measurement: MeasurementMatrix,
    /// SNR in dB; `None` disables noise.
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let n = self.geometry.n_elements();
        if self.measurement.n_elements() != n {
            return Err(Error::dim(format!(
                "measurement matrix has {} columns, array has {n} elements",
                self.measurement.n_elements()
            )));
        }
        if self.targets.len() >= n {
            return Err(Error::param(format!(
                "{} targets but only {n} elements (need K < N)",
                self.targets.len()
            )));
        }
        for t in &self.targets {
            if !(t.theta_deg > -90.0 && t.theta_deg <= 90.0) {
                return Err(Error::param(format!("target angle {} outside (-90, 90]", t.theta_deg)));
            }
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::param("snr_db must be finite"));
            }
        }
        Ok(())
    }

    pub fn thetas_deg(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.theta_deg).collect()
    }

    /// Smallest pairwise angle separation, if there are two or more targets.
    pub fn min_separation_deg(&self) -> Option<f64> {
        let mut th = self.thetas_deg();
        th.sort_by(f64::total_cmp);
        th.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
    }

    pub fn combined_matrix(&self) -> Result<CMatrix> {
        combined_matrix(&self.measurement, &self.geometry, self.receiver_deg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub r: CVector,
    pub noiseless: CVector,
    pub noise_variance: f64,
}

/// r = C·A(θ, p)·s + w with circular Gaussian w scaled so that
/// 10·log₁₀(‖C·A·s‖² / (M·σ²)) equals the scenario SNR.
pub fn simulate_received(scenario: &Scenario) -> Result<ReceivedSignal> {
    scenario.validate()?;
    let c = scenario.combined_matrix()?;
    let m = c.nrows();
    let noiseless = if scenario.targets.is_empty() {
        CVector::zeros(m)
    } else {
        let a = scenario.geometry.steering_matrix(&scenario.thetas_deg());
        let s = CVector::from_iterator(
            scenario.targets.len(),
            scenario.targets.iter().map(|t| t.amplitude),
        );
        &c * (a * s)
    };
    let Some(snr_db) = scenario.snr_db else {
        return Ok(ReceivedSignal {
            r: noiseless.clone(),
            noiseless,
            noise_variance: 0.0,
        });
    };
    let power = noiseless.norm_squared();
    let noise_variance = if power > 0.0 {
        power / (m as f64 * 10f64.powf(snr_db / 10.0))
    } else {
        log::warn!(
            "scenario has no signal power; drawing pure noise at the floor variance {}",
            scenario.noise_floor
        );
        scenario.noise_floor
    };
    let w = complex_gaussian(m, noise_variance, scenario.noise_seed);
    Ok(ReceivedSignal {
        r: &noiseless + w,
        noiseless,
        noise_variance,
    })
}

/// i.i.d. circular complex Gaussian samples with E|w|² = variance.
pub fn complex_gaussian(len: usize, variance: f64, seed: u64) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (variance / 2.0).sqrt();
    CVector::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(scale * re, scale * im)
    })
}

/// CSV with columns `index,re,im`.
pub fn write_received_csv(path: impl AsRef<Path>, r: &CVector) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::param(format!("{}: {other:?}", path.display())),
    })?;
    w.write_record(["index", "re", "im"])?;
    for (i, z) in r.iter().enumerate() {
        w.write_record([i.to_string(), z.re.to_string(), z.im.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_nulra;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn scenario(thetas: &[f64], snr: Option<f64>, seed: u64) -> Scenario {
        let geometry = make_nulra(16, 1.0, 0.1, seed).unwrap();
        let measurement = make_measurement_matrix(16, 32, seed + 1).unwrap();
        let amps = random_unit_amplitudes(thetas.len(), seed + 2);
        Scenario {
            geometry,
            targets: thetas
                .iter()
                .zip(amps)
                .map(|(&theta_deg, amplitude)| Target { theta_deg, amplitude })
                .collect(),
            receiver_deg: 12.0,
            measurement,
            snr_db: snr,
            noise_seed: seed + 3,
            noise_floor: DEFAULT_NOISE_FLOOR,
        }
    }

    /// r_m = Σ_n A e^{jφ_{n,m}} e^{j2πp_n sinα/λ} Σ_k s_k e^{j2πp_n sinθ_k/λ}, element by element.
    fn double_sum(sc: &Scenario) -> Vec<Complex64> {
        let g = &sc.geometry;
        let lambda = g.wavelength();
        let b = sc.measurement.b();
        (0..b.nrows())
            .map(|m| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, &p) in g.positions().iter().enumerate() {
                    let mut x = Complex64::new(0.0, 0.0);
                    for t in &sc.targets {
                        x += t.amplitude
                            * Complex64::cis(2.0 * PI * p * t.theta_deg.to_radians().sin() / lambda);
                    }
                    x *= b[(m, n)];
                    acc += x * Complex64::cis(2.0 * PI * p * sc.receiver_deg.to_radians().sin() / lambda);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn entries_are_plus_minus_one() {
        let m = make_measurement_matrix(16, 32, 5).unwrap();
        assert_eq!(m.b().shape(), (32, 16));
        assert!(m
            .b()
            .iter()
            .all(|z| *z == Complex64::new(1.0, 0.0) || *z == Complex64::new(-1.0, 0.0)));
    }

    #[test]
    fn entry_mean_is_zero() {
        let m = make_measurement_matrix(1000, 1000, 77).unwrap();
        let n = 1e6;
        let mean: f64 = m.b().iter().map(|z| z.re).sum::<f64>() / n;
        // binomial: std of the mean of ±1 draws is 1/sqrt(n)
        assert!(mean.abs() < 3.0 / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn measurement_deterministic_and_round_trips() {
        let a = make_measurement_matrix(8, 4, 3).unwrap();
        assert_eq!(a, make_measurement_matrix(8, 4, 3).unwrap());
        let back: MeasurementMatrix = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, back);
        assert!(make_measurement_matrix(8, 0, 3).is_err());
    }

    #[test]
    fn broadside_receiver_leaves_b_unchanged() {
        let g = make_nulra(16, 1.0, 0.1, 2).unwrap();
        let m = make_measurement_matrix(16, 32, 2).unwrap();
        let c = combined_matrix(&m, &g, 0.0).unwrap();
        assert_eq!(&c, m.b());
    }

    #[test]
    fn combined_matrix_entrywise() {
        let g = make_nulra(16, 1.0, 0.1, 4).unwrap();
        let m = make_measurement_matrix(16, 32, 4).unwrap();
        let alpha: f64 = 37.3;
        let c = combined_matrix(&m, &g, alpha).unwrap();
        for i in 0..32 {
            for n in 0..16 {
                let want = m.b()[(i, n)] * Complex64::cis(2.0 * PI * g.positions()[n] * alpha.to_radians().sin());
                assert!((c[(i, n)] - want).norm() < 1e-14);
                assert!((c[(i, n)].norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn no_targets_noiseless_is_zero() {
        let sc = scenario(&[], None, 1);
        let r = simulate_received(&sc).unwrap();
        assert!(r.r.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn no_targets_with_snr_uses_floor() {
        let sc = scenario(&[], Some(10.0), 1);
        let r = simulate_received(&sc).unwrap();
        assert_eq!(r.noise_variance, DEFAULT_NOISE_FLOOR);
        assert!(r.r.norm() > 0.0);
    }

    #[test]
    fn single_target_matches_double_sum() {
        let mut sc = scenario(&[23.0], None, 9);
        sc.targets[0].amplitude = Complex64::new(1.0, 0.0);
        let r = simulate_received(&sc).unwrap();
        for (got, want) in r.r.iter().zip(double_sum(&sc)) {
            assert!((got - want).norm() < 1e-10 * want.norm().max(1.0));
        }
    }

    #[test]
    fn linear_in_amplitudes() {
        let sc = scenario(&[-10.0, 40.0], None, 2);
        let base = simulate_received(&sc).unwrap().noiseless;
        let factor = Complex64::new(-0.7, 2.1);
        let mut scaled = sc.clone();
        for t in &mut scaled.targets {
            t.amplitude *= factor;
        }
        let got = simulate_received(&scaled).unwrap().noiseless;
        assert!((got - base * factor).norm() < 1e-12);
    }

    #[test]
    fn empirical_snr_matches() {
        let mut sc = scenario(&[-30.345, 0.789, 20.456], Some(10.0), 4);
        let m = 32.0;
        let mut ratio = 0.0;
        for seed in 0..1000 {
            sc.noise_seed = seed;
            let r = simulate_received(&sc).unwrap();
            let noise = (&r.r - &r.noiseless).norm_squared();
            ratio += noise / (m * r.noise_variance);
        }
        let mean_ratio = ratio / 1000.0;
        let snr_err_db = 10.0 * mean_ratio.log10();
        assert!(snr_err_db.abs() < 0.2, "empirical SNR off by {snr_err_db} dB");
    }

    #[test]
    fn seeded_noise_is_bit_reproducible() {
        let sc = scenario(&[5.0], Some(0.0), 6);
        assert_eq!(simulate_received(&sc).unwrap(), simulate_received(&sc).unwrap());
    }

    #[test]
    fn invalid_scenarios() {
        let mut sc = scenario(&[5.0], None, 1);
        sc.targets[0].theta_deg = -90.0;
        assert!(simulate_received(&sc).is_err());
        let many: Vec<f64> = (0..16).map(|i| i as f64).collect();
        assert!(simulate_received(&scenario(&many, None, 1)).is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let sc = scenario(&[-3.0, 44.0], Some(12.5), 8);
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(sc, back);
        assert_eq!(back.min_separation_deg(), Some(47.0));
    }

    #[test]
    fn csv_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let r = CVector::from_vec(vec![Complex64::new(1.5, -2.0), Complex64::new(0.0, 1.0)]);
        write_received_csv(&path, &r).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "index,re,im\n0,1.5,-2\n1,0,1\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn factorized_model_equals_double_sum(seed in 0u64..100_000, k in 0usize..5, alpha in -80.0f64..80.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let thetas: Vec<f64> = (0..k).map(|_| rng.random_range(-89.0..89.0)).collect();
            let mut sc = scenario(&thetas, None, seed);
            sc.receiver_deg = alpha;
            let r = simulate_received(&sc).unwrap().r;
            let want = double_sum(&sc);
            let scale = want.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
            let err = r.iter().zip(&want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-10 * scale);
        }
    }
}
