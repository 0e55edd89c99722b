//! ESPRIT: Hankel matrix of equidistant samples, truncated SVD, shift
//! invariance of the signal subspace for the poles, least squares for the
//! amplitudes.

use super::grid::{Domain, SampleGrid};
use super::{ExpTerm, ExponentialBCF};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Hankel row count cap; keeps the SVD affordable for long records.
pub const MAX_HANKEL_ROWS: usize = 1000;
const RANK_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EspritMode {
    /// Real and imaginary parts share one real Hankel basis, so the
    /// recovered rate set is closed under conjugation by construction.
    ConjugateClosed,
    /// Plain complex ESPRIT; missing conjugate partners are appended with
    /// zero amplitude afterwards.
    Complex,
}

enum Basis {
    Real(DMatrix<f64>),
    Complex(CMat),
}

/// A dataset with its signal-subspace decomposition, reusable across K.
pub struct EspritProblem {
    dt: f64,
    samples: Vec<Complex64>,
    basis: Basis,
    singular_values: Vec<f64>,
    rows: usize,
}

impl EspritProblem {
    pub fn new(grid: &SampleGrid, mode: EspritMode) -> Result<Self> {
        if grid.domain != Domain::Time {
            return Err(Error::Precondition("ESPRIT needs time-domain samples".into()));
        }
        let dt = grid
            .spacing()
            .ok_or_else(|| Error::Precondition("ESPRIT needs an equidistant grid".into()))?;
        let n = grid.len();
        if n < 4 {
            return Err(Error::Precondition("ESPRIT needs at least four samples".into()));
        }
        let rows = (n / 2).min(MAX_HANKEL_ROWS);
        let cols = n - rows + 1;
        let y = &grid.values;
        let (basis, singular_values): (Basis, Vec<f64>) = match mode {
            EspritMode::ConjugateClosed => {
                let h = DMatrix::<f64>::from_fn(rows, 2 * cols, |i, j| {
                    if j < cols {
                        y[i + j].re
                    } else {
                        y[i + j - cols].im
                    }
                });
                let svd = h.svd(true, false);
                let u = svd.u.expect("requested U");
                (Basis::Real(u), svd.singular_values.iter().copied().collect())
            }
            EspritMode::Complex => {
                let h = CMat::from_fn(rows, cols, |i, j| y[i + j]);
                let svd = h.svd(true, false);
                let u = svd.u.expect("requested U");
                (Basis::Complex(u), svd.singular_values.iter().copied().collect())
            }
        };
        // nalgebra does not promise sorted singular values
        let mut order: Vec<usize> = (0..singular_values.len()).collect();
        order.sort_by(|&a, &b| singular_values[b].total_cmp(&singular_values[a]));
        let sorted: Vec<f64> = order.iter().map(|&i| singular_values[i]).collect();
        let basis = match basis {
            Basis::Real(u) => Basis::Real(DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])])),
            Basis::Complex(u) => Basis::Complex(CMat::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])])),
        };
        Ok(EspritProblem { dt, samples: y.clone(), basis, singular_values: sorted, rows })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn numerical_rank(&self) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count()
    }

    pub fn fit(&self, k: usize) -> Result<ExponentialBCF> {
        if k == 0 {
            return Err(Error::Precondition("K must be positive".into()));
        }
        if 2 * k > self.samples.len() {
            return Err(Error::Precondition(format!("{} samples cannot determine {k} terms", self.samples.len())));
        }
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            let mut m = ExponentialBCF::new(vec![ExpTerm { d: Complex64::new(0.0, 0.0), z: Complex64::new(1.0, 0.0) }])?;
            m.flags.push("zero signal".into());
            return Ok(m);
        }
        let rank = self.numerical_rank();
        if k > rank || k >= self.rows {
            return Err(Error::RankDeficient { requested: k, rank: rank.min(self.rows - 1) });
        }
        let lambdas: Vec<Complex64> = match &self.basis {
            Basis::Real(u) => {
                let uk = u.columns(0, k);
                let up = uk.rows(0, self.rows - 1).into_owned();
                let down = uk.rows(1, self.rows - 1).into_owned();
                let svd = up.svd(true, true);
                let phi = svd
                    .solve(&down, 1e-15 * svd.singular_values.max())
                    .map_err(|e| Error::Numerical { msg: e.to_string(), estimate: f64::NAN })?;
                phi.complex_eigenvalues().iter().copied().collect()
            }
            Basis::Complex(u) => {
                let uk = u.columns(0, k);
                let up = uk.rows(0, self.rows - 1).into_owned();
                let down = uk.rows(1, self.rows - 1).into_owned();
                let svd = up.svd(true, true);
                let phi = svd
                    .solve(&down, 1e-15 * svd.singular_values.max())
                    .map_err(|e| Error::Numerical { msg: e.to_string(), estimate: f64::NAN })?;
                linalg::eig(&phi)?.0
            }
        };
        let mut flags = Vec::new();
        let mut rates: Vec<Complex64> = Vec::with_capacity(k);
        for lam in lambdas {
            if lam.norm() == 0.0 {
                return Err(Error::Numerical { msg: "ESPRIT produced a zero pole".into(), estimate: 0.0 });
            }
            let mut z = -lam.ln() / self.dt;
            if !(z.re > 0.0) {
                flags.push(format!("reflected unstable rate {z}"));
                z.re = z.re.abs().max(1e-12 / self.dt);
            }
            rates.push(z);
        }
        let d = fit_amplitudes(&self.samples, self.dt, &rates)?;
        let terms = rates.iter().zip(d.iter()).map(|(&z, &d)| ExpTerm { d, z }).collect();
        let mut model = ExponentialBCF::new(terms)?;
        model.flags = flags;
        Ok(model)
    }
}

/// Least-squares amplitudes for fixed rates on the uniform grid nΔt.
pub(crate) fn fit_amplitudes(samples: &[Complex64], dt: f64, rates: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = samples.len();
    let k = rates.len();
    let steps: Vec<Complex64> = rates.iter().map(|z| (-z * dt).exp()).collect();
    let mut v = CMat::zeros(n, k);
    for (c, s) in steps.iter().enumerate() {
        let mut p = Complex64::new(1.0, 0.0);
        for r in 0..n {
            v[(r, c)] = p;
            p *= s;
        }
    }
    let b = CVec::from_column_slice(samples);
    Ok(linalg::lstsq(&v, &b, 1e-15)?.iter().copied().collect())
}

/// ESPRIT with the conjugate-closed basis.
pub fn esprit_fit(grid: &SampleGrid, k: usize) -> Result<ExponentialBCF> {
    EspritProblem::new(grid, EspritMode::ConjugateClosed)?.fit(k)
}
