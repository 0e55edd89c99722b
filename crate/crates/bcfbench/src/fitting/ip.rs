//! Interacting-pseudomode parameters to exponential form:
//! L_mod(t) = (1/ħ) gᵀ e^{-iω̃t} g with ω̃ = ω - (i/2)diag(κ).

use super::{ExpTerm, ExponentialBCF};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpParameters {
    /// Real symmetric Q×Q mode-frequency matrix, row-major.
    pub omega_matrix: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    pub g: Vec<f64>,
}

impl IpParameters {
    pub fn validate(&self) -> Result<usize> {
        let q = self.kappa.len();
        if q == 0 || self.g.len() != q || self.omega_matrix.len() != q || self.omega_matrix.iter().any(|r| r.len() != q) {
            return Err(Error::Precondition("IP parameters have inconsistent sizes".into()));
        }
        for i in 0..q {
            for j in 0..q {
                if (self.omega_matrix[i][j] - self.omega_matrix[j][i]).abs() > 1e-12 * (1.0 + self.omega_matrix[i][j].abs()) {
                    return Err(Error::Precondition("omega matrix is not symmetric".into()));
                }
            }
        }
        if self.kappa.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::Precondition("all kappa must be positive".into()));
        }
        Ok(q)
    }

    pub fn omega_tilde(&self) -> CMat {
        let q = self.kappa.len();
        CMat::from_fn(q, q, |i, j| {
            let im = if i == j { -0.5 * self.kappa[i] } else { 0.0 };
            Complex64::new(self.omega_matrix[i][j], im)
        })
    }
}

/// Diagonalises ω̃ = SΛS⁻¹ and returns d_k = (1/ħ)(gᵀS)_k(S⁻¹g)_k,
/// z_k = iΛ_k.
pub fn ip_to_exponential(ip: &IpParameters, hbar: f64) -> Result<ExponentialBCF> {
    let q = ip.validate()?;
    let wt = ip.omega_tilde();
    let (lam, s) = linalg::eig(&wt)?;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Decomposition("eigenvector matrix is singular".into()))?;
    let g = CMat::from_fn(q, 1, |i, _| Complex64::new(ip.g[i], 0.0));
    let left = g.transpose() * &s;
    let right = &s_inv * &g;
    let terms = (0..q)
        .map(|k| ExpTerm { d: left[(0, k)] * right[(k, 0)] / hbar, z: Complex64::new(0.0, 1.0) * lam[k] })
        .collect();
    ExponentialBCF::new(terms)
}
