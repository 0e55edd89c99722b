//! Spectral densities, thermal baths and the exact bath-side quantities
//! L(t), 𝓕[L](ω), η(t), η̂(s) and the counter-term strength λ.

use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts};
use crate::special::{exp_integral_e1_scaled, gamma, hurwitz_zeta};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::f64::consts::{FRAC_PI_2, PI};

/// Quadrature runs up to this many multiples of the dominant frequency scale.
pub const QUAD_CAP_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtTerm {
    pub c: Complex64,
    pub mu: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFilter {
    /// Filter height as a fraction of J_base(ω_f).
    pub fraction: f64,
    pub omega_f: f64,
    pub sigma_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpectralDensity {
    OhmicExp { s: f64, alpha: f64, omega_c: f64 },
    MeierTannor { terms: Vec<MtTerm> },
    Filtered { base: Box<SpectralDensity>, filter: GaussianFilter },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Beta::Infinite)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Beta::Finite(b) => Some(b),
            Beta::Infinite => None,
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => ser.serialize_f64(*b),
            Beta::Infinite => ser.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(b) if b > 0.0 && b.is_finite() => Ok(Beta::Finite(b)),
            Raw::Num(b) => Err(serde::de::Error::custom(format!("beta must be positive, got {b}"))),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(Beta::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unrecognised beta '{t}'"))),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    #[serde(flatten)]
    pub sd: SpectralDensity,
    pub beta: Beta,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// cot z without overflow for large |Im z|.
pub fn cot(z: Complex64) -> Complex64 {
    let i = c(0.0, 1.0);
    if z.im >= 0.0 {
        let w = (2.0 * i * z).exp();
        i * (w + 1.0) / (w - 1.0)
    } else {
        let w = (-2.0 * i * z).exp();
        i * (1.0 + w) / (1.0 - w)
    }
}

impl SpectralDensity {
    pub fn ohmic(s: f64, alpha: f64, omega_c: f64) -> Self {
        SpectralDensity::OhmicExp { s, alpha, omega_c }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralDensity::OhmicExp { s, alpha, omega_c } => {
                if !(*s > 0.0) || !(*omega_c > 0.0) || !alpha.is_finite() || !s.is_finite() || !omega_c.is_finite() {
                    return Err(Error::Domain(format!(
                        "ohmic density needs s > 0, omega_c > 0 (s={s}, alpha={alpha}, omega_c={omega_c})"
                    )));
                }
            }
            SpectralDensity::MeierTannor { terms } => {
                if let Some(t) = terms.iter().find(|t| !(t.mu.re > 0.0)) {
                    return Err(Error::Domain(format!("Meier-Tannor rate {} is not stable", t.mu)));
                }
            }
            SpectralDensity::Filtered { base, filter } => {
                base.validate()?;
                if !(filter.sigma_f > 0.0) || !(filter.omega_f >= 0.0) {
                    return Err(Error::Domain("filter needs sigma_f > 0 and omega_f >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// J(ω) for ω ≥ 0.
    pub fn eval(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(Error::Domain(format!("J evaluated at {omega}")));
        }
        if omega < 0.0 {
            return Err(Error::Domain(format!("J is defined for omega >= 0, got {omega}")));
        }
        Ok(self.eval_unchecked(omega))
    }

    /// Odd extension J(-ω) = -J(ω).
    pub fn eval_odd(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 {
            Ok(-self.eval(-omega)?)
        } else {
            self.eval(omega)
        }
    }

    pub(crate) fn eval_unchecked(&self, omega: f64) -> f64 {
        match self {
            SpectralDensity::OhmicExp { s, alpha, omega_c } => {
                if omega == 0.0 {
                    return 0.0;
                }
                FRAC_PI_2 * alpha * omega_c.powf(1.0 - s) * omega.powf(*s) * (-omega / omega_c).exp()
            }
            SpectralDensity::MeierTannor { terms } => {
                let w2 = omega * omega;
                terms
                    .iter()
                    .map(|t| {
                        let (g, o) = (t.mu.re, t.mu.im);
                        let num = 4.0 * omega * (t.c * (w2 + t.mu.conj() * t.mu.conj())).im;
                        num / (((omega + o).powi(2) + g * g) * ((omega - o).powi(2) + g * g))
                    })
                    .sum()
            }
            SpectralDensity::Filtered { base, filter } => {
                let jb = base.eval_unchecked(omega);
                let jf = base.eval_unchecked(filter.omega_f);
                let f = filter.fraction * jf * (-(omega - filter.omega_f).powi(2) / (2.0 * filter.sigma_f.powi(2))).exp();
                (jb - f).abs()
            }
        }
    }

    /// Frequency scale used for quadrature caps and substitutions.
    pub fn scale(&self) -> f64 {
        match self {
            SpectralDensity::OhmicExp { omega_c, .. } => *omega_c,
            SpectralDensity::MeierTannor { terms } => {
                terms.iter().map(|t| t.mu.norm()).fold(0.0, f64::max).max(1e-300)
            }
            SpectralDensity::Filtered { base, filter } => base.scale().max(filter.omega_f),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let sc = self.scale();
        let mut pts = vec![0.0, 0.1 * sc, sc, 10.0 * sc, 60.0 * sc, QUAD_CAP_FACTOR * sc];
        if let SpectralDensity::Filtered { filter, .. } = self {
            for k in [-6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0] {
                let p = filter.omega_f + k * filter.sigma_f;
                if p > 0.0 {
                    pts.push(p);
                }
            }
        }
        if let SpectralDensity::MeierTannor { terms } = self {
            for t in terms {
                let o = t.mu.im.abs();
                if o > 0.0 {
                    pts.push(o);
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// lim_{ω→0⁺} J(ω)/ω when finite.
    pub fn low_frequency_slope(&self) -> Option<f64> {
        match self {
            SpectralDensity::OhmicExp { s, alpha, .. } => {
                if *s > 1.0 {
                    Some(0.0)
                } else if *s == 1.0 {
                    Some(FRAC_PI_2 * alpha)
                } else {
                    None
                }
            }
            SpectralDensity::MeierTannor { terms } => {
                Some(terms.iter().map(|t| 4.0 * (t.c / (t.mu * t.mu)).im).sum())
            }
            SpectralDensity::Filtered { .. } => {
                if self.eval_unchecked(0.0) == 0.0 {
                    let h = 1e-7 * self.scale();
                    Some(self.eval_unchecked(h) / h)
                } else {
                    None
                }
            }
        }
    }

    /// λ = (1/π)∫₀^∞ J(ω)/ω dω.
    pub fn counter_lambda(&self) -> Result<f64> {
        self.validate()?;
        match self {
            SpectralDensity::OhmicExp { s, alpha, omega_c } => Ok(alpha * omega_c * gamma(*s) / 2.0),
            SpectralDensity::MeierTannor { terms } => Ok(terms.iter().map(|t| 2.0 * (t.c / t.mu).im).sum()),
            SpectralDensity::Filtered { .. } => {
                let v = self.integrate_real_axis(|w| Complex64::new(self.eval_unchecked(w) / w, 0.0))?;
                Ok(v.re / PI)
            }
        }
    }

    /// η(t) = (2/π)∫₀^∞ J(ω)/ω cos(ωt) dω.
    pub fn eta_time(&self, t: f64) -> Result<f64> {
        self.validate()?;
        match self {
            SpectralDensity::OhmicExp { s, alpha, omega_c } => {
                Ok(alpha * omega_c * gamma(*s) * c(1.0, omega_c * t).powf(-s).re)
            }
            SpectralDensity::MeierTannor { terms } => {
                Ok(terms.iter().map(|m| 4.0 * (m.c / m.mu * (-m.mu * t).exp()).im).sum())
            }
            SpectralDensity::Filtered { .. } => {
                let v = self.integrate_real_axis(|w| Complex64::new(self.eval_unchecked(w) / w * (w * t).cos(), 0.0))?;
                Ok(2.0 * v.re / PI)
            }
        }
    }

    /// ∫₀^∞ f(ω) dω: adaptive pieces up to the cap, mapped tail beyond it.
    fn integrate_real_axis<F: Fn(f64) -> Complex64>(&self, f: F) -> Result<Complex64> {
        let pts = self.breakpoints();
        let cap = *pts.last().unwrap();
        let opts = QuadOpts::tol(1e-15, 1e-12);
        let head = quad::integrate_with_breaks(&f, &pts, opts)?;
        let tail = quad::integrate_to_infinity(&f, cap, cap, opts)?;
        Ok(head.value + tail.value)
    }

    /// η̂(s) through the real-axis integral (2/π)∫(J/ω)·s/(ω²+s²) dω,
    /// or its principal-value form on the imaginary axis.
    pub fn eta_hat_quadrature(&self, s: Complex64) -> Result<Complex64> {
        self.validate()?;
        if s.re < 0.0 {
            return Err(Error::Domain(format!("eta_hat needs Re(s) >= 0, got {s}")));
        }
        if s.re > 0.0 {
            let v = self.integrate_real_axis(|w| s * (self.eval_unchecked(w) / w) / (w * w + s * s))?;
            return Ok(v * (2.0 / PI));
        }
        // s = -iω
        let omega = -s.im;
        let w = omega.abs();
        if w == 0.0 {
            return self
                .low_frequency_slope()
                .map(|v| Complex64::new(v, 0.0))
                .ok_or_else(|| Error::Pole("eta_hat at s = 0 diverges for this density".into()));
        }
        let g = |x: f64| self.eval_unchecked(x) / x;
        let h = |x: f64| Complex64::new(g(x) / (x + w), 0.0);
        let sc = self.scale();
        let upper = (QUAD_CAP_FACTOR * sc).max(2.0 * w);
        let opts = QuadOpts::tol(1e-15, 1e-12);
        let pv = quad::principal_value(h, 0.5 * w, upper, w, opts)?;
        // x = (w/2)v² on [0, w/2] smooths a sub-Ohmic x^(s-1) endpoint
        let head = quad::integrate(
            |v| {
                let x = 0.5 * w * v * v;
                if x == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    h(x) / (x - w) * (w * v)
                }
            },
            0.0,
            1.0,
            opts,
        )?;
        let tail = quad::integrate_to_infinity(|x| Complex64::new(g(x) / (x * x - w * w), 0.0), upper, upper, opts)?;
        let im = -(2.0 * w / PI) * (head.value.re + pv.value.re + tail.value.re);
        let v = c(g(w), im);
        Ok(if omega > 0.0 { v } else { v.conj() })
    }
}

impl BathSpec {
    pub fn new(sd: SpectralDensity, beta: Beta) -> Self {
        BathSpec { sd, beta, hbar: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.sd.validate()?;
        if let Beta::Finite(b) = self.beta {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::Domain(format!("beta must be positive, got {b}")));
            }
        }
        if !(self.hbar > 0.0) {
            return Err(Error::Domain(format!("hbar must be positive, got {}", self.hbar)));
        }
        Ok(())
    }

    pub fn beta_hbar(&self) -> Option<f64> {
        self.beta.finite().map(|b| b * self.hbar)
    }

    pub fn counter_lambda(&self) -> Result<f64> {
        self.sd.counter_lambda()
    }

    pub fn eta_time(&self, t: f64) -> Result<f64> {
        self.sd.eta_time(t)
    }

    /// 𝓕[L](ω) = 2J(ω)/(1 - e^{-βħω}) with J odd in ω.
    pub fn bcf_freq(&self, omega: f64) -> Result<f64> {
        self.validate()?;
        if !omega.is_finite() {
            return Err(Error::Domain(format!("F[L] evaluated at {omega}")));
        }
        match self.beta_hbar() {
            None => Ok(if omega > 0.0 { 2.0 * self.sd.eval_unchecked(omega) } else { 0.0 }),
            Some(bh) => {
                if omega == 0.0 {
                    return self
                        .sd
                        .low_frequency_slope()
                        .map(|slope| 2.0 * slope / bh)
                        .ok_or_else(|| Error::Pole("F[L] diverges at omega = 0".into()));
                }
                let j = self.sd.eval_odd(omega)?;
                Ok(2.0 * j / -(-bh * omega).exp_m1())
            }
        }
    }

    /// L(t) for t ≥ 0.
    pub fn bcf_time(&self, t: f64) -> Result<Complex64> {
        self.validate()?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("L(t) needs finite t >= 0, got {t}")));
        }
        match (&self.sd, self.beta_hbar()) {
            (SpectralDensity::OhmicExp { s, alpha, omega_c }, None) => {
                Ok(c(0.5 * alpha * omega_c * omega_c * gamma(s + 1.0), 0.0) / c(1.0, omega_c * t).powf(s + 1.0))
            }
            (SpectralDensity::OhmicExp { s, alpha, omega_c }, Some(bh)) => {
                let x = bh * omega_c;
                let z = c(1.0, -omega_c * t) / x;
                let pref = alpha * omega_c * omega_c * gamma(s + 1.0) / (2.0 * x.powf(s + 1.0));
                let v = hurwitz_zeta(s + 1.0, z.conj())? + hurwitz_zeta(s + 1.0, z + 1.0)?;
                let mut v = v * pref;
                if t == 0.0 {
                    v.im = 0.0;
                }
                Ok(v)
            }
            (SpectralDensity::MeierTannor { terms }, Some(bh)) => mt_bcf_time(terms, bh, t),
            _ => self.bcf_time_quadrature(t),
        }
    }

    /// L(t) from the defining integral.
    pub fn bcf_time_quadrature(&self, t: f64) -> Result<Complex64> {
        self.validate()?;
        let bh = self.beta_hbar();
        let sd = &self.sd;
        let f = |w: f64| {
            let j = sd.eval_unchecked(w);
            if j == 0.0 {
                return c(0.0, 0.0);
            }
            let coth = match bh {
                Some(bh) => 1.0 / (0.5 * bh * w).tanh(),
                None => 1.0,
            };
            c(j * coth * (w * t).cos(), -j * (w * t).sin())
        };
        let pts = sd.breakpoints();
        let mut opts = QuadOpts::tol(1e-14, 1e-12);
        opts.max_intervals = 20_000;
        let v = quad::integrate_with_breaks(f, &pts, opts)?;
        let mut v = v.value / PI;
        if t == 0.0 {
            v.im = 0.0;
        }
        Ok(v)
    }

    /// η̂(s) for Re(s) ≥ 0; closed forms where available.
    pub fn eta_hat(&self, s: Complex64) -> Result<Complex64> {
        self.validate()?;
        if s.re < 0.0 || !s.re.is_finite() || !s.im.is_finite() {
            return Err(Error::Domain(format!("eta_hat needs Re(s) >= 0, got {s}")));
        }
        match &self.sd {
            SpectralDensity::OhmicExp { s: sexp, alpha, omega_c } if *sexp == 1.0 => {
                ohmic1_eta_hat(*alpha, *omega_c, s)
            }
            SpectralDensity::MeierTannor { terms } => Ok(mt_eta_hat(terms, s)),
            sd => sd.eta_hat_quadrature(s),
        }
    }
}

/// η̂ for the s = 1 Ohmic density via the exponential integral.
fn ohmic1_eta_hat(alpha: f64, omega_c: f64, s: Complex64) -> Result<Complex64> {
    if s.re > 0.0 {
        let p = s / omega_c;
        let i = c(0.0, 1.0);
        let a = exp_integral_e1_scaled(-i * p)?;
        let b = exp_integral_e1_scaled(i * p)?;
        return Ok((a - b) * alpha / (2.0 * i));
    }
    let omega = -s.im;
    let x = omega.abs() / omega_c;
    if x == 0.0 {
        return Ok(c(FRAC_PI_2 * alpha, 0.0));
    }
    let plus = exp_integral_e1_scaled(c(x, 0.0))?.re;
    // e^{-x}E1(-x) on the principal-value line equals -e^{-x}Ei(x)
    let minus = exp_integral_e1_scaled(c(-x, 0.0))?.re;
    let v = c(FRAC_PI_2 * alpha * (-x).exp(), 0.5 * alpha * (plus - minus));
    Ok(if omega > 0.0 { v } else { v.conj() })
}

pub(crate) fn mt_eta_hat(terms: &[MtTerm], s: Complex64) -> Complex64 {
    let i = c(0.0, 1.0);
    terms
        .iter()
        .map(|t| {
            let (cc, mu) = (t.c, t.mu);
            -2.0 * i * (cc / (mu * (s + mu)) - cc.conj() / (mu.conj() * (s + mu.conj())))
        })
        .sum()
}

/// i·J(iν) for a Meier–Tannor density; real for real ν.
pub fn mt_i_j_imag(terms: &[MtTerm], nu: f64) -> f64 {
    terms.iter().map(|t| -4.0 * nu * (t.c / (t.mu * t.mu - nu * nu)).im).sum()
}

/// Re L from the cot-weighted poles of J plus the Matsubara series, Im L in
/// closed form.
fn mt_bcf_time(terms: &[MtTerm], bh: f64, t: f64) -> Result<Complex64> {
    let mut re = 0.0;
    let mut im = 0.0;
    for m in terms {
        let e = (-m.mu * t).exp();
        re += 2.0 * (m.c * cot(0.5 * bh * m.mu) * e).im;
        im -= 2.0 * (m.c * e).im;
    }
    let nu1 = 2.0 * PI / bh;
    let im_c: f64 = terms.iter().map(|m| m.c.im).sum();
    if t == 0.0 && im_c.abs() > 1e-14 {
        return Err(Error::Domain("Re L(0) diverges for a Meier-Tannor density with Im(c) != 0".into()));
    }
    let needed = if t > 0.0 { (40.0 / (nu1 * t)).ceil() as usize } else { usize::MAX };
    let n_max = needed.min(2_000_000);
    let mut sum = 0.0;
    for n in 1..=n_max {
        let nu = nu1 * n as f64;
        sum += mt_i_j_imag(terms, nu) * (-nu * t).exp();
    }
    if needed > n_max {
        // remaining terms decay as 1/ν³ when Im(c) = 0
        let a3: f64 = terms.iter().map(|m| 4.0 * (m.c * m.mu * m.mu).im).sum::<f64>();
        let tail_zeta = 1.0 / (2.0 * (n_max as f64 + 0.5).powi(2));
        sum += a3 / nu1.powi(3) * tail_zeta * (-(nu1 * n_max as f64) * t).exp();
    }
    re += 2.0 / bh * sum;
    Ok(c(re, if t == 0.0 { 0.0 } else { im }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ohmic_j_at_cutoff() {
        let sd = SpectralDensity::ohmic(1.0, 1.0, 10.0);
        assert_eq!(sd.eval(0.0).unwrap(), 0.0);
        let v = sd.eval(10.0).unwrap();
        assert!((v - FRAC_PI_2 * 10.0 * (-1f64).exp()).abs() < 1e-13);
        assert!(sd.eval(f64::NAN).is_err());
    }

    #[test]
    fn filter_leaves_one_percent() {
        let base = SpectralDensity::ohmic(1.0, 0.1, 5.0);
        let sd = SpectralDensity::Filtered {
            base: Box::new(base.clone()),
            filter: GaussianFilter { fraction: 0.99, omega_f: 2.1, sigma_f: 0.2 },
        };
        let v = sd.eval(2.1).unwrap();
        assert!((v - 0.01 * base.eval(2.1).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn cot_matches_real_formula() {
        for &x in &[0.3, 1.1, -2.0] {
            assert!((cot(c(x, 0.0)).re - 1.0 / x.tan()).abs() < 1e-13);
        }
        // large imaginary parts saturate at ∓i
        assert!((cot(c(0.4, 400.0)) - c(0.0, -1.0)).norm() < 1e-14);
        assert!((cot(c(0.4, -400.0)) - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn lambda_closed_forms() {
        assert!((SpectralDensity::ohmic(1.0, 0.2, 10.0).counter_lambda().unwrap() - 1.0).abs() < 1e-14);
        assert!((SpectralDensity::ohmic(1.0, 0.1, 5.0).counter_lambda().unwrap() - 0.25).abs() < 1e-14);
        assert!(SpectralDensity::ohmic(0.0, 0.1, 5.0).counter_lambda().is_err());
    }

    #[test]
    fn beta_json_round_trip() {
        let bath: BathSpec =
            serde_json::from_str(r#"{"type":"ohmic_exp","s":1.0,"alpha":1.0,"omega_c":10.0,"beta":"inf"}"#).unwrap();
        assert!(bath.beta.is_infinite());
        assert_eq!(bath.hbar, 1.0);
        let back = serde_json::to_string(&bath).unwrap();
        let again: BathSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(again, bath);
        assert!(serde_json::from_str::<BathSpec>(r#"{"type":"ohmic_exp","s":1,"alpha":1,"omega_c":1,"beta":-1}"#).is_err());
    }

    #[test]
    fn mt_json_shape() {
        let sd: SpectralDensity =
            serde_json::from_str(r#"{"type":"meier_tannor","terms":[{"c":[0.5,0.1],"mu":[1.0,2.0]}]}"#).unwrap();
        match sd {
            SpectralDensity::MeierTannor { ref terms } => assert_eq!(terms[0].mu, c(1.0, 2.0)),
            _ => panic!(),
        }
    }
}
