//! Exact benchmarks for a harmonic oscillator (frequency ω₀, coupling v₀)
//! in a Gaussian bath: equilibrium second moments, equilibrium spectra,
//! the response kernel G₊(t) and the transient ⟨q²⟩(t).

mod volterra;

pub use volterra::{g_plus_volterra, transient_q2, transient_q2_series, GPlus, InitialMoments, TRANSIENT_DT};

use crate::bath::{BathSpec, Beta};
use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts};
use crate::special::hurwitz_zeta;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub omega0: f64,
    pub v0: f64,
}

impl OscillatorParams {
    pub fn new(omega0: f64, v0: f64) -> Result<Self> {
        let o = OscillatorParams { omega0, v0 };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 > 0.0) || !(self.v0 > 0.0) || !self.omega0.is_finite() || !self.v0.is_finite() {
            return Err(Error::Domain(format!("oscillator needs omega0 > 0 and v0 > 0 ({self:?})")));
        }
        Ok(())
    }

    /// M = ħ/(ω₀v₀²).
    pub fn mass(&self, hbar: f64) -> f64 {
        hbar / (self.omega0 * self.v0 * self.v0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Q2,
    P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatsubaraSumSpec {
    pub n_terms: usize,
    /// Add the fitted a/n² + b/n⁴ remainder beyond `n_terms`.
    pub tail: bool,
}

impl Default for MatsubaraSumSpec {
    fn default() -> Self {
        MatsubaraSumSpec { n_terms: 10_000, tail: true }
    }
}

/// ⟨q²⟩_eq or ⟨p²⟩_eq of the oscillator coupled to the full bath.
pub fn eq_moment(bath: &BathSpec, osc: &OscillatorParams, which: Moment, spec: MatsubaraSumSpec) -> Result<f64> {
    osc.validate()?;
    bath.validate()?;
    let w0 = osc.omega0;
    let m = osc.mass(bath.hbar);
    let term = |nu: f64| -> Result<f64> {
        let zeta = nu * bath.eta_hat(Complex64::new(nu, 0.0))?.re / m;
        let den = w0 * w0 + nu * nu + zeta;
        Ok(match which {
            Moment::Q2 => w0 * w0 / den,
            Moment::P2 => (w0 * w0 + zeta) / den,
        })
    };
    match bath.beta_hbar() {
        Some(bh) => {
            if spec.n_terms < 2 {
                return Err(Error::Precondition("Matsubara sum needs at least two terms".into()));
            }
            let nu1 = 2.0 * PI / bh;
            let mut sum = 0.0;
            let mut last = [0.0; 2];
            // add smallest terms first
            let terms: Vec<f64> = (1..=spec.n_terms).map(|n| term(nu1 * n as f64)).collect::<Result<_>>()?;
            for (i, t) in terms.iter().enumerate().rev() {
                sum += t;
                if i + 2 >= spec.n_terms {
                    last[spec.n_terms - 1 - i] = *t;
                }
            }
            if spec.tail {
                // T_n ≈ a/n² + b/n⁴ matched at n = N-1 and n = N
                let n = spec.n_terms as f64;
                let (t_n, t_nm1) = (last[0], last[1]);
                let (p, q) = (n - 1.0, n);
                let det = 1.0 / (p * p * q.powi(4)) - 1.0 / (q * q * p.powi(4));
                let a = (t_nm1 / q.powi(4) - t_n / p.powi(4)) / det;
                let b = (t_n / (p * p) - t_nm1 / (q * q)) / det;
                let start = Complex64::new(n + 1.0, 0.0);
                sum += a * hurwitz_zeta(2.0, start)?.re + b * hurwitz_zeta(4.0, start)?.re;
            }
            Ok((1.0 + 2.0 * sum) / (bh * w0))
        }
        None => {
            let opts = QuadOpts::tol(1e-14, 1e-12);
            let scale = bath.sd.scale().max(w0);
            let r = quad::integrate_to_infinity(
                |nu| match term(nu) {
                    Ok(v) => Complex64::new(v, 0.0),
                    Err(_) => Complex64::new(f64::NAN, 0.0),
                },
                0.0,
                scale,
                opts,
            )?;
            let pref = match which {
                Moment::Q2 => 1.0 / (PI * w0),
                Moment::P2 => 1.0 / (PI * w0),
            };
            Ok(pref * r.value.re)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Qq,
    Pp,
}

/// Ĝ₊(-iω) = [ω₀² - ω² - iω η̂(-iω)/M]⁻¹.
pub fn g_plus_hat_imag_axis(bath: &BathSpec, osc: &OscillatorParams, omega: f64) -> Result<Complex64> {
    let m = osc.mass(bath.hbar);
    let eta = bath.eta_hat(Complex64::new(0.0, -omega))?;
    let den = Complex64::new(osc.omega0 * osc.omega0 - omega * omega, 0.0) - Complex64::new(0.0, omega) * eta / m;
    Ok(1.0 / den)
}

/// Exact 𝓕[C_qq](ω) or 𝓕[C_pp](ω).
pub fn spectral_correlation(bath: &BathSpec, osc: &OscillatorParams, which: Correlation, omega: f64) -> Result<f64> {
    osc.validate()?;
    bath.validate()?;
    let w0 = osc.omega0;
    let ratio = match which {
        Correlation::Qq => 1.0,
        Correlation::Pp => (omega / w0).powi(2),
    };
    if omega == 0.0 {
        if which == Correlation::Pp {
            return Ok(0.0);
        }
        return match bath.beta_hbar() {
            None => Ok(0.0),
            Some(bh) => {
                let slope = bath
                    .sd
                    .low_frequency_slope()
                    .ok_or_else(|| Error::Pole("F[C_qq] diverges at omega = 0".into()))?;
                let m = osc.mass(bath.hbar);
                Ok(2.0 * w0 * slope / (bh * m * w0.powi(4)))
            }
        };
    }
    let img = g_plus_hat_imag_axis(bath, osc, omega)?.im;
    let thermal = match bath.beta {
        Beta::Infinite => {
            if omega > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Beta::Finite(b) => 1.0 / -(-b * bath.hbar * omega).exp_m1(),
    };
    Ok(2.0 * w0 * thermal * img * ratio)
}

/// Checks lim_{ω→0⁺} ω·Im η̂(-iω) = 0 numerically, which the small-ω form
/// of the spectrum relies on.
pub fn check_small_frequency_limit(bath: &BathSpec) -> Result<()> {
    let sc = bath.sd.scale();
    let probe = |w: f64| -> Result<f64> { Ok(w * bath.eta_hat(Complex64::new(0.0, -w))?.im) };
    let a = probe(1e-3 * sc)?.abs();
    let b = probe(1e-6 * sc)?.abs();
    if b > 1e-8 && b > 0.5 * a {
        return Err(Error::Numerical {
            msg: "omega * Im eta_hat(-i omega) does not vanish as omega -> 0".into(),
            estimate: b,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::SpectralDensity;

    #[test]
    fn free_limit_moments() {
        for (beta, w0) in [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0)] {
            let bath = BathSpec::new(SpectralDensity::ohmic(1.0, 1.0, 10.0), Beta::Finite(beta));
            let osc = OscillatorParams::new(w0, 1e-8).unwrap();
            let q2 = eq_moment(&bath, &osc, Moment::Q2, MatsubaraSumSpec::default()).unwrap();
            let p2 = eq_moment(&bath, &osc, Moment::P2, MatsubaraSumSpec::default()).unwrap();
            let free = 0.5 / (0.5 * beta * w0).tanh();
            assert!((q2 - free).abs() < 1e-10, "{beta} {w0}: {q2} vs {free}");
            assert!((p2 - q2).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_temperature_free_limit() {
        let bath = BathSpec::new(SpectralDensity::ohmic(1.0, 0.1, 5.0), Beta::Infinite);
        let osc = OscillatorParams::new(1.3, 1e-6).unwrap();
        let q2 = eq_moment(&bath, &osc, Moment::Q2, MatsubaraSumSpec::default()).unwrap();
        assert!((q2 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn spectrum_ratio() {
        let bath = BathSpec::new(SpectralDensity::ohmic(1.0, 1.0, 10.0), Beta::Finite(1.0));
        let osc = OscillatorParams::new(1.0, 1.0).unwrap();
        let q = spectral_correlation(&bath, &osc, Correlation::Qq, 0.7).unwrap();
        let p = spectral_correlation(&bath, &osc, Correlation::Pp, 0.7).unwrap();
        assert!((p / q - 0.49).abs() < 1e-13);
    }
}
