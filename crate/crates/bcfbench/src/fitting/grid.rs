use crate::bath::BathSpec;
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Time,
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub domain: Domain,
    pub points: Vec<f64>,
    pub values: Vec<Complex64>,
    pub equidistant: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SampleGrid {
    pub fn new(domain: Domain, points: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::Precondition(format!(
                "grid has {} points but {} values",
                points.len(),
                values.len()
            )));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("grid points must be strictly increasing".into()));
        }
        let equidistant = is_equidistant(&points);
        Ok(SampleGrid { domain, points, values, equidistant, warnings: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> Option<f64> {
        if self.equidistant && self.points.len() >= 2 {
            Some(self.points[1] - self.points[0])
        } else {
            None
        }
    }
}

fn is_equidistant(points: &[f64]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let h = points[1] - points[0];
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.abs())).max(h.abs());
    points.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * scale)
}

/// L(t) at t_n = nΔt for t_n < t_max.
pub fn time_grid(bath: &BathSpec, dt: f64, t_max: f64) -> Result<SampleGrid> {
    if !(dt > 0.0) || !(t_max > dt) {
        return Err(Error::Precondition(format!("time grid needs 0 < dt < t_max (dt={dt}, t_max={t_max})")));
    }
    let n = ((t_max / dt) - 1e-9).ceil() as usize;
    let points: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let values = super::bath_samples(bath, &points)?;
    let mut g = SampleGrid::new(Domain::Time, points, values)?;
    g.equidistant = true;
    Ok(g)
}

/// 𝓕[L](ω) at ω_j = -ω_max + jΔω for ω_j < ω_max; divergent points are
/// dropped and listed in `warnings`.
pub fn frequency_grid(bath: &BathSpec, d_omega: f64, omega_max: f64) -> Result<SampleGrid> {
    if !(d_omega > 0.0) || !(omega_max > 0.0) {
        return Err(Error::Precondition("frequency grid needs positive spacing and range".into()));
    }
    let n = ((2.0 * omega_max / d_omega) - 1e-9).ceil() as usize;
    let mut points = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for j in 0..n {
        let w = snap(-omega_max + j as f64 * d_omega, d_omega);
        match bath.bcf_freq(w) {
            Ok(v) => {
                points.push(w);
                values.push(Complex64::new(v, 0.0));
            }
            Err(Error::Pole(_)) => warnings.push(format!("omitted divergent point omega = {w}")),
            Err(e) => return Err(e),
        }
    }
    let mut g = SampleGrid::new(Domain::Frequency, points, values)?;
    g.warnings = warnings;
    Ok(g)
}

// kill rounding noise so that ω = 0 is hit exactly
fn snap(w: f64, h: f64) -> f64 {
    let r = (w / h).round() * h;
    if (w - r).abs() < 1e-9 * h {
        r
    } else {
        w
    }
}

#[derive(Debug, Clone)]
pub struct SubOhmicGrid {
    pub grid: SampleGrid,
    pub omega_r0: Option<f64>,
    pub omega_l0: Option<f64>,
}

/// Inner edges of the smooth outer regions.
pub const SUBOHMIC_OMEGA_R1: f64 = 0.13;
pub const SUBOHMIC_OMEGA_L1: f64 = -0.1;

/// Five-region frequency grid for a spectrum that diverges at ω = 0: two
/// equidistant outer regions (Δω = 0.1), two logarithmic inner regions of
/// `n_log` points starting where 𝓕[L] first drops to `cap`, and an excluded
/// centre.
pub fn subohmic_frequency_grid(bath: &BathSpec, omega_max: f64, n_log: usize, cap: f64) -> Result<SubOhmicGrid> {
    let d_omega = 0.1;
    if bath.beta.is_infinite() {
        return Err(Error::Precondition("the five-region grid is for finite temperature".into()));
    }
    if n_log < 2 {
        return Err(Error::Precondition("need at least two logarithmic points per region".into()));
    }
    let r0 = cap_crossing(bath, SUBOHMIC_OMEGA_R1, cap)?;
    let l0 = cap_crossing(bath, SUBOHMIC_OMEGA_L1, cap)?;
    let (r0, l0) = match (r0, l0) {
        (Some(r), Some(l)) => (r, l),
        _ => {
            let mut g = frequency_grid(bath, d_omega, omega_max)?;
            g.warnings.push(format!("F[L] never reaches the cap {cap}; using an equidistant grid"));
            return Ok(SubOhmicGrid { grid: g, omega_r0: None, omega_l0: None });
        }
    };
    let mut points = Vec::new();
    let n = ((2.0 * omega_max / d_omega) - 1e-9).ceil() as usize;
    for j in 0..n {
        let w = snap(-omega_max + j as f64 * d_omega, d_omega);
        if w < SUBOHMIC_OMEGA_L1 {
            points.push(w);
        }
    }
    let log_region = |w0: f64, w1: f64| -> Vec<f64> {
        let (a, b) = (w0.abs().ln(), w1.abs().ln());
        let mut v: Vec<f64> = (0..n_log).map(|k| (a + k as f64 / (n_log - 1) as f64 * (b - a)).exp()).collect();
        v[0] = w0.abs();
        v[n_log - 1] = w1.abs();
        v
    };
    let mut left: Vec<f64> = log_region(l0, SUBOHMIC_OMEGA_L1).into_iter().map(|w| -w).collect();
    left.reverse();
    // the outer grid ends strictly below ω_l^(1), which the log region includes
    points.extend(left);
    points.extend(log_region(r0, SUBOHMIC_OMEGA_R1));
    for j in 0..n {
        let w = snap(-omega_max + j as f64 * d_omega, d_omega);
        if w > SUBOHMIC_OMEGA_R1 {
            points.push(w);
        }
    }
    let values = points
        .iter()
        .map(|&w| bath.bcf_freq(w).map(|v| Complex64::new(v, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    let grid = SampleGrid::new(Domain::Frequency, points, values)?;
    Ok(SubOhmicGrid { grid, omega_r0: Some(r0), omega_l0: Some(l0) })
}

/// The frequency between 0 and `edge` where 𝓕[L] equals `cap`, found by
/// log-space bisection.
fn cap_crossing(bath: &BathSpec, edge: f64, cap: f64) -> Result<Option<f64>> {
    let sign = edge.signum();
    let f = |x: f64| bath.bcf_freq(sign * x).map(|v| v - cap);
    let mut hi = edge.abs();
    let mut lo = 1e-14 * hi;
    if f(hi)? > 0.0 || f(lo)? < 0.0 {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    Ok(Some(sign * (lo * hi).sqrt()))
}
