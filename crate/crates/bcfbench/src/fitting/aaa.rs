//! AAA rational approximation of 𝓕[L](ω) and its conversion to an
//! exponential sum through the lower-half-plane poles.

use super::grid::{Domain, SampleGrid};
use super::{ExpTerm, ExponentialBCF};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct AaaOptions {
    /// Relative residual at which the greedy loop stops early.
    pub tol: f64,
    /// Poles whose residue is below this fraction of max|F| are treated as
    /// Froissart doublets.
    pub froissart_tol: f64,
}

impl Default for AaaOptions {
    fn default() -> Self {
        AaaOptions { tol: 1e-13, froissart_tol: 1e-13 }
    }
}

struct Barycentric {
    support: Vec<f64>,
    values: Vec<Complex64>,
    weights: Vec<Complex64>,
}

impl Barycentric {
    fn eval(&self, x: f64) -> Complex64 {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = Complex64::new(0.0, 0.0);
        for k in 0..self.support.len() {
            let dx = x - self.support[k];
            if dx == 0.0 {
                return self.values[k];
            }
            let c = self.weights[k] / dx;
            num += c * self.values[k];
            den += c;
        }
        num / den
    }

    /// Zeros of the denominator Σ w_k/(ω - s_k): eigenvalues of P·diag(s)
    /// restricted to the complement of the all-ones vector.
    fn poles(&self) -> Result<Vec<Complex64>> {
        let m = self.support.len();
        if m < 2 {
            return Ok(Vec::new());
        }
        let wsum: Complex64 = self.weights.iter().sum();
        let wnorm = self.weights.iter().map(|w| w.norm()).fold(0.0, f64::max);
        if wsum.norm() < 1e-14 * wnorm {
            return Err(Error::FitFailure("barycentric weights sum to zero (degenerate degree)".into()));
        }
        // Helmert basis of {x : Σx = 0}
        let mut q = CMat::zeros(m, m - 1);
        for k in 1..m {
            let nrm = ((k * (k + 1)) as f64).sqrt();
            for i in 0..k {
                q[(i, k - 1)] = Complex64::new(1.0 / nrm, 0.0);
            }
            q[(k, k - 1)] = Complex64::new(-(k as f64) / nrm, 0.0);
        }
        let mut ps = CMat::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let delta = if i == j { 1.0 } else { 0.0 };
                ps[(i, j)] = (Complex64::new(delta, 0.0) - self.weights[i] / wsum) * self.support[j];
            }
        }
        let a = q.adjoint() * ps * &q;
        let (lam, _) = linalg::eig(&a).or_else(|_| {
            // defective restriction: eigenvalues alone are enough here
            let schur = nalgebra::Schur::try_new(a.clone(), 1e-15, 10_000)
                .ok_or_else(|| Error::FitFailure("pole eigenproblem did not converge".into()))?;
            let t = schur.unpack().1;
            Ok::<_, Error>(((0..t.nrows()).map(|i| t[(i, i)]).collect(), CMat::zeros(0, 0)))
        })?;
        Ok(lam)
    }

    fn residue(&self, pole: Complex64) -> Complex64 {
        let mut num = Complex64::new(0.0, 0.0);
        let mut dden = Complex64::new(0.0, 0.0);
        for k in 0..self.support.len() {
            let dx = pole - self.support[k];
            num += self.weights[k] * self.values[k] / dx;
            dden -= self.weights[k] / (dx * dx);
        }
        num / dden
    }
}

fn greedy_aaa(x: &[f64], f: &[Complex64], max_support: usize, tol: f64) -> Result<Barycentric> {
    let n = x.len();
    let fmax = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mean: Complex64 = f.iter().sum::<Complex64>() / n as f64;
    let mut r: Vec<Complex64> = vec![mean; n];
    let mut is_support = vec![false; n];
    let mut support_idx: Vec<usize> = Vec::new();
    let mut best: Option<Barycentric> = None;
    for _ in 0..max_support {
        let (j, _) = (0..n)
            .filter(|&i| !is_support[i])
            .map(|i| (i, (f[i] - r[i]).norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::FitFailure("ran out of sample points".into()))?;
        is_support[j] = true;
        support_idx.push(j);
        let rows: Vec<usize> = (0..n).filter(|&i| !is_support[i]).collect();
        let m = support_idx.len();
        let mut loewner = CMat::zeros(rows.len().max(m), m);
        for (ri, &i) in rows.iter().enumerate() {
            for (c, &k) in support_idx.iter().enumerate() {
                loewner[(ri, c)] = (f[i] - f[k]) / (x[i] - x[k]);
            }
        }
        let svd = loewner.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let smin = (0..svd.singular_values.len())
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .expect("non-empty");
        let weights: Vec<Complex64> = (0..m).map(|c| vt[(smin, c)].conj()).collect();
        let bary = Barycentric {
            support: support_idx.iter().map(|&k| x[k]).collect(),
            values: support_idx.iter().map(|&k| f[k]).collect(),
            weights,
        };
        for i in 0..n {
            r[i] = if is_support[i] { f[i] } else { bary.eval(x[i]) };
        }
        let err = (0..n).map(|i| (f[i] - r[i]).norm()).fold(0.0, f64::max);
        best = Some(bary);
        if err <= tol * fmax {
            break;
        }
    }
    best.ok_or_else(|| Error::FitFailure("AAA produced no approximant".into()))
}

/// Real-linear least squares for d_k so that 2 Re Σ d_k/(z_k - iω) matches
/// the samples; returns the fitted model.
pub(crate) fn refit_frequency(x: &[f64], f: &[Complex64], rates: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    let k = rates.len();
    let mut a = DMatrix::<f64>::zeros(n, 2 * k);
    for i in 0..n {
        for (c, z) in rates.iter().enumerate() {
            let g = 1.0 / (z - Complex64::new(0.0, x[i]));
            a[(i, 2 * c)] = 2.0 * g.re;
            a[(i, 2 * c + 1)] = -2.0 * g.im;
        }
    }
    let b = DVector::from_iterator(n, f.iter().map(|v| v.re));
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-15 * svd.singular_values.max())
        .map_err(|e| Error::Numerical { msg: e.to_string(), estimate: f64::NAN })?;
    Ok((0..k).map(|c| Complex64::new(sol[2 * c], sol[2 * c + 1])).collect())
}

fn grid_residual(x: &[f64], f: &[Complex64], model: &ExponentialBCF) -> f64 {
    x.iter().zip(f).map(|(&w, v)| (v.re - model.eval_freq(w)).abs()).fold(0.0, f64::max)
}

/// AAA fit of 𝓕[L] samples with at most 2·`k_target` poles; each stable
/// (lower-half-plane) pole ω_p becomes a rate z = iω_p.
pub fn aaa_fit(grid: &SampleGrid, k_target: usize, tol: f64) -> Result<ExponentialBCF> {
    aaa_fit_with(grid, k_target, AaaOptions { tol, ..Default::default() })
}

pub fn aaa_fit_with(grid: &SampleGrid, k_target: usize, opts: AaaOptions) -> Result<ExponentialBCF> {
    if grid.domain != Domain::Frequency {
        return Err(Error::Precondition("AAA needs frequency-domain samples".into()));
    }
    if k_target == 0 {
        return Err(Error::Precondition("K must be positive".into()));
    }
    let x = &grid.points;
    let f = &grid.values;
    if f.iter().any(|v| !v.re.is_finite()) {
        return Err(Error::Precondition("grid contains non-finite samples".into()));
    }
    let fmax = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bary = greedy_aaa(x, f, 2 * k_target + 1, opts.tol)?;
    let poles = bary.poles()?;
    let mut flags = Vec::new();
    let mut rates = Vec::new();
    let mut doublets = Vec::new();
    for p in poles {
        if p.im >= 0.0 {
            flags.push(format!("discarded pole {p} outside the lower half plane"));
            continue;
        }
        if bary.residue(p).norm() < opts.froissart_tol * fmax {
            doublets.push(p);
            continue;
        }
        rates.push(Complex64::new(0.0, 1.0) * p);
    }
    if rates.is_empty() {
        return Err(Error::FitFailure("no stable poles found".into()));
    }
    let closed = ExponentialBCF::new(rates.iter().map(|&z| ExpTerm { d: Complex64::new(0.0, 0.0), z }).collect())?;
    let all_rates: Vec<Complex64> = closed.terms.iter().map(|t| t.z).collect();
    let d = refit_frequency(x, f, &all_rates)?;
    let terms: Vec<ExpTerm> = all_rates.iter().zip(&d).map(|(&z, &d)| ExpTerm { d, z }).collect();
    let mut model = ExponentialBCF { terms, conjugate_map: closed.conjugate_map, flags: Vec::new() };
    if !doublets.is_empty() {
        // keep the pruning only if the residual does not grow by more than 10x
        let pruned_res = grid_residual(x, f, &model);
        let mut with: Vec<Complex64> = rates.clone();
        with.extend(doublets.iter().map(|p| Complex64::new(0.0, 1.0) * p));
        let closed_w = ExponentialBCF::new(with.iter().map(|&z| ExpTerm { d: Complex64::new(0.0, 0.0), z }).collect())?;
        let rates_w: Vec<Complex64> = closed_w.terms.iter().map(|t| t.z).collect();
        let d_w = refit_frequency(x, f, &rates_w)?;
        let model_w = ExponentialBCF {
            terms: rates_w.iter().zip(&d_w).map(|(&z, &d)| ExpTerm { d, z }).collect(),
            conjugate_map: closed_w.conjugate_map,
            flags: Vec::new(),
        };
        if pruned_res > 10.0 * grid_residual(x, f, &model_w) {
            flags.push(format!("kept {} near-doublet poles: pruning raised the residual", doublets.len()));
            model = model_w;
        } else {
            flags.push(format!("pruned {} Froissart doublet(s)", doublets.len()));
        }
    }
    model.flags = flags;
    Ok(model)
}
