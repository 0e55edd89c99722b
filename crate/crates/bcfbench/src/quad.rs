//! Adaptive Gauss–Kronrod (7/15) quadrature for complex-valued integrands.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

impl QuadOpts {
    pub fn tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOpts { abs_tol, rel_tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    resabs: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    let mut resabs = fc.norm() * WGK[7];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        k += (f1 + f2) * WGK[j];
        resabs += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            g += (f1 + f2) * WG[j / 2];
        }
    }
    Segment { a, b, value: k * h, error: ((k - g) * h).norm(), resabs: resabs * h.abs() }
}

/// ∫_a^b f(x) dx with global adaptive bisection. The integrand is never
/// evaluated at the endpoints, so integrable endpoint singularities are fine.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, opts: QuadOpts) -> Result<QuadResult> {
    integrate_with_breaks(f, &[a, b], opts)
}

/// Like [`integrate`] with the interval pre-split at `points` (sorted, first
/// and last are the limits).
pub fn integrate_with_breaks<F: Fn(f64) -> Complex64>(
    f: F,
    points: &[f64],
    opts: QuadOpts,
) -> Result<QuadResult> {
    if points.len() < 2 {
        return Err(Error::Precondition("quadrature needs two limits".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut resabs = 0.0;
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let s = gk15(&f, w[0], w[1]);
        evaluations += 15;
        value += s.value;
        error += s.error;
        resabs += s.resabs;
        heap.push(s);
    }
    loop {
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(Error::Numerical { msg: "integrand produced non-finite values".into(), estimate: f64::NAN });
        }
        let target = opts.abs_tol.max(opts.rel_tol * value.norm()).max(50.0 * f64::EPSILON * resabs);
        if error <= target {
            return Ok(QuadResult { value, error, evaluations });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Numerical { msg: "adaptive quadrature hit its interval budget".into(), estimate: error });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            return Err(Error::Numerical { msg: "quadrature interval underflow".into(), estimate: error });
        }
        let l = gk15(&f, worst.a, mid);
        let r = gk15(&f, mid, worst.b);
        evaluations += 30;
        value += l.value + r.value - worst.value;
        error += l.error + r.error - worst.error;
        resabs += l.resabs + r.resabs - worst.resabs;
        heap.push(l);
        heap.push(r);
        // the running error sum drifts when segments are replaced; refresh occasionally
        if heap.len() % 64 == 0 {
            error = heap.iter().map(|s| s.error).sum();
        }
    }
}

pub fn integrate_real<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOpts) -> Result<(f64, f64)> {
    let r = integrate(|x| Complex64::new(f(x), 0.0), a, b, opts)?;
    Ok((r.value.re, r.error))
}

/// ∫_a^∞ f(x) dx through x = a + scale·u/(1-u).
pub fn integrate_to_infinity<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    scale: f64,
    opts: QuadOpts,
) -> Result<QuadResult> {
    integrate(
        |u| {
            let om = 1.0 - u;
            let x = a + scale * u / om;
            let v = f(x);
            if v.norm() == 0.0 {
                v
            } else {
                v * (scale / (om * om))
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Principal value of ∫_a^b h(x)/(x - w) dx for a < w < b.
///
/// A symmetric window of half-width δ around the pole is folded onto
/// ∫_0^δ [h(w+u) - h(w-u)]/u du, which is regular.
pub fn principal_value<F: Fn(f64) -> Complex64>(
    h: F,
    a: f64,
    b: f64,
    w: f64,
    opts: QuadOpts,
) -> Result<QuadResult> {
    if !(a < w && w < b) {
        return Err(Error::Precondition(format!("pole {w} outside ({a}, {b})")));
    }
    let delta = (w - a).min(b - w);
    let mut out = integrate(|u| (h(w + u) - h(w - u)) / u, 0.0, delta, opts)?;
    let sides: [(f64, f64); 2] = [(a, w - delta), (w + delta, b)];
    for (lo, hi) in sides {
        if hi > lo {
            let r = integrate(|x| h(x) / (x - w), lo, hi, opts)?;
            out.value += r.value;
            out.error += r.error;
            out.evaluations += r.evaluations;
        }
    }
    Ok(out)
}

/// Composite Simpson weights for `n` equidistant samples (n odd); an even
/// count closes with a 3/8 panel.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => return w,
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
            return w;
        }
        _ => {}
    }
    let simpson_end = if n % 2 == 1 { n - 1 } else { n - 4 };
    let mut i = 0;
    while i + 2 <= simpson_end {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    if n.is_multiple_of(2) {
        let s = n - 4;
        w[s] += 3.0 * h / 8.0;
        w[s + 1] += 9.0 * h / 8.0;
        w[s + 2] += 9.0 * h / 8.0;
        w[s + 3] += 3.0 * h / 8.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate_real(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadOpts::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r.0 - exact).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        let r = integrate_real(|x| x.powf(-0.5), 0.0, 1.0, QuadOpts::default()).unwrap();
        assert!((r.0 - 2.0).abs() < 1e-11);
    }

    #[test]
    fn oscillatory_complex() {
        let r = integrate(|x| Complex64::new(0.0, 7.0 * x).exp(), 0.0, 3.0, QuadOpts::default()).unwrap();
        let exact = (Complex64::new(0.0, 21.0).exp() - 1.0) / Complex64::new(0.0, 7.0);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn semi_infinite() {
        let r = integrate_to_infinity(|x| Complex64::new(1.0 / (1.0 + x * x), 0.0), 0.0, 1.0, QuadOpts::default())
            .unwrap();
        assert!((r.value.re - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn pv_of_reciprocal() {
        // PV ∫_0^3 1/(x-1) dx = ln 2
        let r = principal_value(|_| Complex64::new(1.0, 0.0), 0.0, 3.0, 1.0, QuadOpts::default()).unwrap();
        assert!((r.value.re - 2f64.ln()).abs() < 1e-13);
        // PV ∫_0^2 x^2/(x-0.5) dx
        let r = principal_value(|x| Complex64::new(x * x, 0.0), 0.0, 2.0, 0.5, QuadOpts::default()).unwrap();
        let exact = 2.0 + 0.5 * 2.0 + 0.25 * 3f64.ln();
        assert!((r.value.re - exact).abs() < 1e-12);
    }

    #[test]
    fn simpson_weights_integrate_cubics() {
        for n in [3usize, 4, 7, 10, 11] {
            let h = 0.3;
            let w = simpson_weights(n, h);
            let s: f64 = w.iter().enumerate().map(|(i, wi)| wi * (i as f64 * h).powi(3)).sum();
            let b = (n - 1) as f64 * h;
            assert!((s - b.powi(4) / 4.0).abs() < 1e-12, "n={n}");
        }
    }
}
