//! Hurwitz zeta and exponential integral on the argument ranges reached by
//! the Ohmic closed forms.

use crate::error::{Error, Result};
use num_complex::Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// B_2, B_4, ..., B_26
const BERNOULLI_EVEN: [f64; 13] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
];

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// ζ(s, a) = Σ_{k≥0} (a+k)^{-s} with principal-branch powers.
///
/// Shifts `a` by the recurrence until Re(a) ≥ 20 and finishes with an
/// Euler–Maclaurin tail.
pub fn hurwitz_zeta(s: f64, a: Complex64) -> Result<Complex64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::Domain(format!("hurwitz_zeta needs real s > 1, got {s}")));
    }
    if !a.re.is_finite() || !a.im.is_finite() {
        return Err(Error::Domain("hurwitz_zeta: non-finite argument".into()));
    }
    if a.im == 0.0 && a.re <= 0.0 && a.re == a.re.round() {
        return Err(Error::Domain(format!("hurwitz_zeta: pole at a = {}", a.re)));
    }
    let shift = if a.re < 20.0 { (20.0 - a.re).ceil() as usize } else { 0 };
    let mut head = Complex64::new(0.0, 0.0);
    for k in 0..shift {
        head += (a + k as f64).powf(-s);
    }
    let w = a + shift as f64;
    let lw = w.ln();
    let w_s = (-s * lw).exp();
    let mut tail = w * w_s / (s - 1.0) + 0.5 * w_s;
    // rising factorial s(s+1)...(s+2j-2) / (2j)!, times w^{-s-2j+1}
    let inv_w2 = 1.0 / (w * w);
    let mut pow = w_s / w;
    let mut coef = s / 2.0;
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = pow * (coef * b);
        tail += term;
        if term.norm() < 1e-18 * tail.norm() {
            break;
        }
        let n = 2.0 * (j as f64 + 1.0);
        coef *= (s + n - 1.0) * (s + n) / ((n + 1.0) * (n + 2.0));
        pow *= inv_w2;
    }
    Ok(head + tail)
}

/// E₁(z) = ∫_z^∞ e^{-u}/u du, principal value on the negative real axis.
pub fn exp_integral_e1(z: Complex64) -> Result<Complex64> {
    if z.re < 0.0 && z.im == 0.0 {
        return Ok(Complex64::new(-ei_real(-z.re), 0.0));
    }
    Ok(exp_integral_e1_scaled(z)? * (-z).exp())
}

/// e^z E₁(z); stays finite where E₁ itself under- or overflows.
pub fn exp_integral_e1_scaled(z: Complex64) -> Result<Complex64> {
    if z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("exponential integral at z = {z}")));
    }
    if z.im == 0.0 && z.re < 0.0 {
        let x = -z.re;
        return Ok(Complex64::new(-ei_scaled(x), 0.0));
    }
    let r = z.norm();
    if r <= 4.0 || (z.re < 0.0 && r <= 40.0) {
        return Ok(e1_series(z) * z.exp());
    }
    e1_cf_scaled(z)
}

fn e1_series(z: Complex64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for k in 1..600 {
        let kf = k as f64;
        term *= -z / kf;
        let add = term / kf;
        sum += add;
        if add.norm() <= 1e-17 * sum.norm() && k > 2 {
            break;
        }
    }
    -EULER_GAMMA - z.ln() - sum
}

// e^z E1(z) = 1/(z+1- 1/(z+3- 4/(z+5- ...))), modified Lentz.
fn e1_cf_scaled(z: Complex64) -> Result<Complex64> {
    let tiny = 1e-300;
    let mut f = z + 1.0;
    if f.norm() < tiny {
        f = Complex64::new(tiny, 0.0);
    }
    let mut c = f;
    let mut d = Complex64::new(0.0, 0.0);
    for n in 1..20000 {
        let nf = n as f64;
        let a = -nf * nf;
        let b = z + 2.0 * nf + 1.0;
        d = b + a * d;
        if d.norm() < tiny {
            d = Complex64::new(tiny, 0.0);
        }
        c = b + a / c;
        if c.norm() < tiny {
            c = Complex64::new(tiny, 0.0);
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).norm() < 1e-16 {
            return Ok(1.0 / f);
        }
    }
    Err(Error::Numerical {
        msg: format!("continued fraction for E1({z}) did not converge"),
        estimate: f64::NAN,
    })
}

fn ei_real(x: f64) -> f64 {
    if x <= 40.0 {
        ei_series(x)
    } else {
        ei_scaled(x) * x.exp()
    }
}

// e^{-x} Ei(x) for x > 0
fn ei_scaled(x: f64) -> f64 {
    if x <= 40.0 {
        return ei_series(x) * (-x).exp();
    }
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..200 {
        let next = term * k as f64 / x;
        if next > term {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum / x
}

fn ei_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..600 {
        let kf = k as f64;
        term *= x / kf;
        let add = term / kf;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    EULER_GAMMA + x.ln() + sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zeta_basel() {
        let v = hurwitz_zeta(2.0, c(1.0, 0.0)).unwrap();
        assert!((v.re - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn zeta_recurrence() {
        let a = c(2.0, 1.0);
        let lhs = hurwitz_zeta(3.0, a).unwrap() - hurwitz_zeta(3.0, a + 1.0).unwrap();
        let rhs = a.powf(-3.0);
        assert!((lhs - rhs).norm() < 1e-14 * rhs.norm());
    }

    #[test]
    fn zeta_against_direct_sum() {
        // slowly convergent direct sum with an integral tail estimate
        let s = 2.5;
        let a = c(0.3, -4.0);
        let n = 200_000;
        let mut direct = c(0.0, 0.0);
        for k in 0..n {
            direct += (a + k as f64).powf(-s);
        }
        let w = a + n as f64;
        direct += w.powf(1.0 - s) / (s - 1.0) + 0.5 * w.powf(-s);
        let v = hurwitz_zeta(s, a).unwrap();
        assert!((v - direct).norm() < 1e-11 * v.norm(), "{v} vs {direct}");
    }

    #[test]
    fn zeta_rejects_poles() {
        assert!(hurwitz_zeta(2.0, c(-3.0, 0.0)).is_err());
        assert!(hurwitz_zeta(1.0, c(1.0, 0.0)).is_err());
    }

    #[test]
    fn e1_of_one() {
        // E1(1) from a 60-term series, evaluated independently of the code path
        let mut s = 0.0f64;
        let mut t = 1.0f64;
        for k in 1..60 {
            t *= -1.0 / k as f64;
            s += t / k as f64;
        }
        let oracle = -EULER_GAMMA - s;
        let v = exp_integral_e1(c(1.0, 0.0)).unwrap();
        assert!((v.re - oracle).abs() < 1e-15);
        assert!((v.re - 0.219_383_934_395_520_27).abs() < 1e-15);
    }

    #[test]
    fn e1_series_and_fraction_overlap() {
        for &z in &[c(4.5, 0.3), c(3.0, 3.5), c(0.5, 5.0), c(-2.0, 5.0)] {
            let series = e1_series(z) * z.exp();
            let cf = e1_cf_scaled(z).unwrap();
            assert!((series - cf).norm() < 1e-12 * cf.norm(), "{z}: {series} {cf}");
        }
    }

    #[test]
    fn e1_negative_axis_is_principal_value() {
        // Ei(2) = 4.954234356001890
        let v = exp_integral_e1(c(-2.0, 0.0)).unwrap();
        assert!((v.re + 4.954_234_356_001_890).abs() < 1e-13);
        assert_eq!(v.im, 0.0);
        // Across the cut the imaginary part jumps by ∓iπ around the PV.
        let up = exp_integral_e1(c(-2.0, 1e-12)).unwrap();
        assert!((up.re - v.re).abs() < 1e-9);
        assert!((up.im + std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn ei_asymptotic_matches_series_at_switch() {
        let a = ei_series(40.0) * (-40.0f64).exp();
        let mut sum = 1.0;
        let mut term = 1.0;
        for k in 1..40 {
            term *= k as f64 / 40.0;
            sum += term;
        }
        assert!((a - sum / 40.0).abs() < 1e-13 * a);
    }

    #[test]
    fn e1_large_imaginary() {
        // e^{ix}E1(ix) → 1/(ix) (1 - 1/(ix) + 2/(ix)^2 ...)
        let z = c(0.0, 300.0);
        let v = exp_integral_e1_scaled(z).unwrap();
        let approx = (1.0 / z) * (1.0 - 1.0 / z + 2.0 / (z * z) - 6.0 / (z * z * z) + 24.0 / (z * z * z * z));
        assert!((v - approx).norm() < 1e-10 * v.norm());
    }
}
