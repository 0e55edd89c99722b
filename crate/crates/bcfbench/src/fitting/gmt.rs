//! Generalized Meier–Tannor fit: ESPRIT on Im L for the spectral density
//! poles, then a bounded quasi-Newton fit of real exponentials to the
//! Matsubara remainder of Re L.

use super::esprit::{EspritMode, EspritProblem};
use super::grid::{time_grid, Domain, SampleGrid};
use super::{ExpTerm, ExponentialBCF};
use crate::bath::{cot, mt_i_j_imag, BathSpec, MtTerm};
use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy)]
pub struct GmtOptions {
    pub dt: f64,
    pub t_max: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Lower bound on the Matsubara rates.
    pub gamma_min: f64,
}

impl Default for GmtOptions {
    fn default() -> Self {
        GmtOptions { dt: 0.01, t_max: 20.0, max_iter: 500, tol: 1e-12, gamma_min: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct GmtReport {
    pub model: ExponentialBCF,
    /// (c_j, μ_j) of the fitted spectral density.
    pub mt_terms: Vec<MtTerm>,
    /// max |Im L - fit| / max |Im L| on the grid.
    pub step1_residual: f64,
    /// Root-mean-square Re L residual before and after the Matsubara fit.
    pub step2_initial: f64,
    pub step2_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Meier–Tannor pairs (c, μ) from an exponential fit of Im L(t).
pub fn mt_terms_from_im_fit(model: &ExponentialBCF) -> Vec<MtTerm> {
    let mut out = Vec::new();
    for (k, t) in model.terms.iter().enumerate() {
        let j = model.conjugate_map[k];
        if j == k {
            out.push(MtTerm { c: Complex64::new(0.0, -0.5) * t.d.re, mu: t.z });
        } else if t.z.im > 0.0 {
            let a = 0.5 * (t.d + model.terms[j].d.conj());
            out.push(MtTerm { c: Complex64::new(0.0, -1.0) * a, mu: t.z });
        }
    }
    out
}

/// Exponential terms of L(t) carried by the spectral-density poles.
pub fn mt_pole_terms(terms: &[MtTerm], beta_hbar: f64) -> Vec<ExpTerm> {
    let i = Complex64::new(0.0, 1.0);
    let mut out = Vec::new();
    for m in terms {
        let cc = m.c * cot(0.5 * beta_hbar * m.mu);
        if m.mu.im == 0.0 {
            out.push(ExpTerm { d: Complex64::new(2.0 * cc.im, -2.0 * m.c.im), z: m.mu });
        } else {
            out.push(ExpTerm { d: -i * cc - m.c, z: m.mu });
            out.push(ExpTerm { d: i * cc.conj() + m.c.conj(), z: m.mu.conj() });
        }
    }
    out
}

fn pole_part_re(terms: &[ExpTerm], t: f64) -> f64 {
    terms.iter().map(|x| (x.d * (-x.z * t).exp()).re).sum()
}

/// Two-step GMT&FIT with `k_sd` spectral-density exponentials and
/// `k_matsubara` real Matsubara exponentials.
pub fn gmt_fit(bath: &BathSpec, k_sd: usize, k_matsubara: usize) -> Result<GmtReport> {
    gmt_fit_with(bath, k_sd, k_matsubara, GmtOptions::default())
}

pub fn gmt_fit_with(bath: &BathSpec, k_sd: usize, k_matsubara: usize, opts: GmtOptions) -> Result<GmtReport> {
    let bh = bath
        .beta_hbar()
        .ok_or_else(|| Error::Precondition("GMT&FIT needs a finite temperature".into()))?;
    let grid = time_grid(bath, opts.dt, opts.t_max)?;
    gmt_fit_samples(&grid, bh, k_sd, k_matsubara, opts)
}

/// GMT&FIT on precomputed L(t) samples.
pub fn gmt_fit_samples(
    grid: &SampleGrid,
    beta_hbar: f64,
    k_sd: usize,
    k_matsubara: usize,
    opts: GmtOptions,
) -> Result<GmtReport> {
    if grid.domain != Domain::Time {
        return Err(Error::Precondition("GMT&FIT needs time-domain samples".into()));
    }
    let dt = grid.spacing().ok_or_else(|| Error::Precondition("GMT&FIT needs an equidistant grid".into()))?;
    let im_grid = SampleGrid {
        values: grid.values.iter().map(|v| Complex64::new(v.im, 0.0)).collect(),
        ..grid.clone()
    };
    let im_fit = EspritProblem::new(&im_grid, EspritMode::ConjugateClosed)?.fit(k_sd)?;
    let im_max = im_grid.values.iter().map(|v| v.re.abs()).fold(0.0, f64::max).max(1e-300);
    let step1_residual = im_grid
        .points
        .iter()
        .zip(&im_grid.values)
        .map(|(&t, v)| (v.re - im_fit.eval(t).re).abs())
        .fold(0.0, f64::max)
        / im_max;
    let mt_terms = mt_terms_from_im_fit(&im_fit);
    let poles = mt_pole_terms(&mt_terms, beta_hbar);

    let times = &grid.points;
    let target: Vec<f64> = times.iter().zip(&grid.values).map(|(&t, v)| v.re - pole_part_re(&poles, t)).collect();
    let nu1 = 2.0 * PI / beta_hbar;
    let mut x = Vec::with_capacity(2 * k_matsubara);
    for n in 1..=k_matsubara {
        let nu = nu1 * n as f64;
        x.push(2.0 * mt_i_j_imag(&mt_terms, nu) / beta_hbar);
        x.push(nu);
    }
    let objective = |p: &[f64], grad: Option<&mut [f64]>| -> f64 {
        let mut f = 0.0;
        let mut g = vec![0.0; p.len()];
        for (i, &t) in times.iter().enumerate() {
            let mut model = 0.0;
            for n in 0..k_matsubara {
                model += p[2 * n] * (-p[2 * n + 1] * t).exp();
            }
            let r = target[i] - model;
            f += r * r;
            for n in 0..k_matsubara {
                let e = (-p[2 * n + 1] * t).exp();
                g[2 * n] -= 2.0 * r * e;
                g[2 * n + 1] += 2.0 * r * p[2 * n] * t * e;
            }
        }
        if let Some(out) = grad {
            out.copy_from_slice(&g);
        }
        f
    };
    let lower: Vec<f64> = (0..2 * k_matsubara)
        .map(|i| if i % 2 == 1 { opts.gamma_min } else { f64::NEG_INFINITY })
        .collect();
    let n_pts = times.len() as f64;
    let step2_initial = (objective(&x, None) / n_pts).sqrt();
    let (x, iterations, converged) = if k_matsubara > 0 {
        projected_bfgs(&objective, x, &lower, opts.max_iter, opts.tol)
    } else {
        (x, 0, true)
    };
    let step2_residual = (objective(&x, None) / n_pts).sqrt();

    let mut terms = poles;
    for n in 0..k_matsubara {
        terms.push(ExpTerm { d: Complex64::new(x[2 * n], 0.0), z: Complex64::new(x[2 * n + 1], 0.0) });
    }
    let mut model = ExponentialBCF::new(terms)?;
    model.flags.extend(im_fit.flags.iter().cloned());
    if !converged {
        model.flags.push(format!("Matsubara fit stopped after {iterations} iterations"));
    }
    let _ = dt;
    Ok(GmtReport { model, mt_terms, step1_residual, step2_initial, step2_residual, iterations, converged })
}

/// Minimises f subject to x ≥ lower with BFGS steps projected onto the
/// box; variables sitting on a bound with an outward gradient are frozen
/// for the step.
pub(crate) fn projected_bfgs<F>(f: &F, mut x: Vec<f64>, lower: &[f64], max_iter: usize, tol: f64) -> (Vec<f64>, usize, bool)
where
    F: Fn(&[f64], Option<&mut [f64]>) -> f64,
{
    let n = x.len();
    for i in 0..n {
        x[i] = x[i].max(lower[i]);
    }
    let mut g = vec![0.0; n];
    let mut fx = f(&x, Some(&mut g));
    let f0 = fx.max(1e-300);
    let mut h = identity(n);
    for it in 0..max_iter {
        let free: Vec<bool> = (0..n).map(|i| !(x[i] <= lower[i] && g[i] > 0.0)).collect();
        let pg: f64 = (0..n).filter(|&i| free[i]).map(|i| g[i] * g[i]).sum::<f64>().sqrt();
        if pg <= tol * f0.sqrt() || fx <= tol * tol * f0 {
            return (x, it, true);
        }
        let mut dir = vec![0.0; n];
        for i in 0..n {
            if !free[i] {
                continue;
            }
            for j in 0..n {
                if free[j] {
                    dir[i] -= h[i][j] * g[j];
                }
            }
        }
        let mut slope: f64 = (0..n).map(|i| dir[i] * g[i]).sum();
        if slope >= 0.0 {
            h = identity(n);
            for i in 0..n {
                dir[i] = if free[i] { -g[i] } else { 0.0 };
            }
            slope = (0..n).map(|i| dir[i] * g[i]).sum();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..n).map(|i| (x[i] + step * dir[i]).max(lower[i])).collect();
            let mut gt = vec![0.0; n];
            let ft = f(&trial, Some(&mut gt));
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            return (x, it, (fx - f0).abs() <= tol * f0 || fx <= tol * f0);
        };
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy: f64 = (0..n).map(|i| s[i] * y[i]).sum();
        let rel_change = (fx - fnew) / fx.max(1e-300);
        x = xn;
        g = gn;
        fx = fnew;
        if rel_change.abs() < tol && it > 0 {
            return (x, it + 1, true);
        }
        if sy > 1e-300 {
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    (x, max_iter, false)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = (0..n).map(|i| y[i] * hy[i]).sum();
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_respects_bounds() {
        // minimum of (x-1)^2 + (y+2)^2 with y >= 0 sits at (1, 0)
        let f = |p: &[f64], g: Option<&mut [f64]>| {
            if let Some(g) = g {
                g[0] = 2.0 * (p[0] - 1.0);
                g[1] = 2.0 * (p[1] + 2.0);
            }
            (p[0] - 1.0).powi(2) + (p[1] + 2.0).powi(2)
        };
        let (x, _, ok) = projected_bfgs(&f, vec![5.0, 3.0], &[f64::NEG_INFINITY, 0.0], 200, 1e-14);
        assert!(ok);
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1] == 0.0, "{x:?}");
    }

    #[test]
    fn bfgs_rosenbrock() {
        let f = |p: &[f64], g: Option<&mut [f64]>| {
            let (a, b) = (p[0], p[1]);
            if let Some(g) = g {
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
            }
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let (x, _, _) = projected_bfgs(&f, vec![-1.2, 1.0], &[f64::NEG_INFINITY; 2], 500, 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5, "{x:?}");
    }
}
