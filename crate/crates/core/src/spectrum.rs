//! Sampled pseudo-spectra, peak picking and CSV export.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPECTRUM_POINTS: usize = 8192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub angles_deg: Vec<f64>,
    pub values: Vec<f64>,
    /// γ² for dual-polynomial spectra; `None` for other estimators.
    pub gamma_level: Option<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// `points` angles uniformly covering (−90°, 90°], endpoint 90° included.
pub fn uniform_angle_grid(points: usize) -> Vec<f64> {
    let step = 180.0 / points as f64;
    (1..=points).map(|i| -90.0 + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    /// Refined peak locations, ascending.
    pub angles_deg: Vec<f64>,
    /// Spectrum value at the grid point of each peak (same order).
    pub heights: Vec<f64>,
    /// How many of the requested peaks were not found.
    pub deficit: usize,
}

/// The `k` highest strict local maxima, refined by a three-point parabola
/// through the log-values.
pub fn find_peaks(spectrum: &Spectrum, k: usize) -> Result<PeakSet> {
    if spectrum.is_empty() {
        return Err(Error::param("cannot pick peaks from an empty spectrum"));
    }
    if k == 0 {
        return Err(Error::param("number of peaks must be at least 1"));
    }
    if spectrum.angles_deg.len() != spectrum.values.len() {
        return Err(Error::dim("spectrum angles and values differ in length"));
    }
    let v = &spectrum.values;
    let mut maxima: Vec<usize> = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    maxima.truncate(k);

    let floor = (spectrum.max_value() * 1e-300).max(f64::MIN_POSITIVE);
    let log = |i: usize| v[i].max(floor).ln();
    let mut peaks: Vec<(f64, f64)> = maxima
        .iter()
        .map(|&i| {
            let x = &spectrum.angles_deg;
            let theta = parabolic_vertex(
                (x[i - 1], log(i - 1)),
                (x[i], log(i)),
                (x[i + 1], log(i + 1)),
            );
            (theta, v[i])
        })
        .collect();
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let deficit = k - peaks.len();
    if deficit > 0 {
        log::debug!("found {} of {k} requested spectral peaks", peaks.len());
    }
    Ok(PeakSet {
        angles_deg: peaks.iter().map(|p| p.0).collect(),
        heights: peaks.iter().map(|p| p.1).collect(),
        deficit,
    })
}

/// Abscissa of the vertex of the parabola through three points with
/// arbitrary spacing, clamped to the bracketing interval.
fn parabolic_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (x2, y2) = p2;
    let d0 = x1 - x0;
    let d2 = x1 - x2;
    let num = d0 * d0 * (y1 - y2) - d2 * d2 * (y1 - y0);
    let den = d0 * (y1 - y2) - d2 * (y1 - y0);
    if den == 0.0 || !num.is_finite() || !den.is_finite() {
        return x1;
    }
    (x1 - 0.5 * num / den).clamp(x0, x2)
}

/// Single spectrum as `angle_deg,value`.
pub fn write_spectrum_csv(path: impl AsRef<Path>, spectrum: &Spectrum) -> Result<()> {
    let path = path.as_ref();
    let mut w = open_csv(path)?;
    w.write_record(["angle_deg", "value"])?;
    for (a, v) in spectrum.angles_deg.iter().zip(&spectrum.values) {
        w.write_record([a.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Several spectra stacked as `angle_deg,value,method`.
pub fn write_spectra_csv(path: impl AsRef<Path>, spectra: &[(&str, &Spectrum)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = open_csv(path)?;
    w.write_record(["angle_deg", "value", "method"])?;
    for (method, s) in spectra {
        for (a, v) in s.angles_deg.iter().zip(&s.values) {
            w.write_record([a.to_string(), v.to_string(), method.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn open_csv(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}
