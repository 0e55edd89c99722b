//! Exponential-sum models of the bath correlation function and the fitting
//! algorithms that produce them.

mod aaa;
mod esprit;
pub mod gmt;
pub mod grid;
mod ip;

pub use aaa::{aaa_fit, AaaOptions};
pub use esprit::{esprit_fit, EspritMode, EspritProblem};
pub use gmt::{gmt_fit, GmtOptions, GmtReport};
pub use grid::{frequency_grid, subohmic_frequency_grid, time_grid, SampleGrid, SubOhmicGrid};
pub use ip::{ip_to_exponential, IpParameters};

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::quad::simpson_weights;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relative tolerance for recognising z_j as the conjugate of z_k.
pub const CONJ_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub d: Complex64,
    pub z: Complex64,
}

/// L_mod(t) = Σ_k d_k e^{-z_k t} over a rate set closed under conjugation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBCF {
    pub terms: Vec<ExpTerm>,
    /// `conjugate_map[k] = j` with z_j = z_k*.
    pub conjugate_map: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ExponentialBCF {
    /// Builds a model, snapping near-conjugate rate pairs together and
    /// appending zero-amplitude partners for rates that have none.
    pub fn new(terms: Vec<ExpTerm>) -> Result<Self> {
        let mut terms = terms;
        for t in &terms {
            if !(t.z.re > 0.0) || !t.z.im.is_finite() || !t.d.re.is_finite() || !t.d.im.is_finite() {
                return Err(Error::Precondition(format!("unstable or non-finite term d={} z={}", t.d, t.z)));
            }
        }
        let n0 = terms.len();
        let mut map: Vec<Option<usize>> = vec![None; n0];
        for k in 0..n0 {
            if map[k].is_some() {
                continue;
            }
            let zk = terms[k].z;
            let tol = CONJ_TOL * zk.norm().max(1.0);
            if zk.im.abs() <= tol {
                terms[k].z.im = 0.0;
                map[k] = Some(k);
                continue;
            }
            let partner = (0..n0)
                .filter(|&j| j != k && map[j].is_none())
                .map(|j| (j, (terms[j].z - zk.conj()).norm()))
                .filter(|&(_, dist)| dist <= tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((j, _)) = partner {
                let avg = 0.5 * (zk + terms[j].z.conj());
                terms[k].z = avg;
                terms[j].z = avg.conj();
                map[k] = Some(j);
                map[j] = Some(k);
            }
        }
        let mut conjugate_map: Vec<usize> = Vec::with_capacity(n0);
        let mut appended = Vec::new();
        for k in 0..n0 {
            match map[k] {
                Some(j) => conjugate_map.push(j),
                None => {
                    let j = n0 + appended.len();
                    appended.push(ExpTerm { d: Complex64::new(0.0, 0.0), z: terms[k].z.conj() });
                    conjugate_map.push(j);
                }
            }
        }
        for (i, _) in appended.iter().enumerate() {
            let partner = (0..n0).filter(|&k| map[k].is_none()).nth(i).expect("one partner per append");
            conjugate_map.push(partner);
        }
        terms.extend(appended);
        Ok(ExponentialBCF { terms, conjugate_map, flags: Vec::new() })
    }

    /// Single real-rate or empty models are handy in tests.
    pub fn empty() -> Self {
        ExponentialBCF { terms: Vec::new(), conjugate_map: Vec::new(), flags: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// d̄_k, the amplitudes of L_mod(t)* in the same basis.
    pub fn dbar(&self, k: usize) -> Complex64 {
        self.terms[self.conjugate_map[k]].d.conj()
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        if t < 0.0 {
            return self.eval(-t).conj();
        }
        self.terms.iter().map(|x| x.d * (-x.z * t).exp()).sum()
    }

    /// 𝓕[L_mod](ω) = 2 Re Σ d_k/(z_k - iω).
    pub fn eval_freq(&self, omega: f64) -> f64 {
        2.0 * self
            .terms
            .iter()
            .map(|x| x.d / (x.z - Complex64::new(0.0, omega)))
            .sum::<Complex64>()
            .re
    }

    /// Checks stability and conjugate closure of the term multiset.
    pub fn check_invariants(&self) -> Result<()> {
        if self.conjugate_map.len() != self.terms.len() {
            return Err(Error::Precondition("conjugate map length mismatch".into()));
        }
        for (k, t) in self.terms.iter().enumerate() {
            if !(t.z.re > 0.0) {
                return Err(Error::Precondition(format!("term {k} has Re z = {} <= 0", t.z.re)));
            }
            let j = self.conjugate_map[k];
            if j >= self.terms.len() || self.conjugate_map[j] != k {
                return Err(Error::Precondition(format!("conjugate map is not an involution at {k}")));
            }
            if (self.terms[j].z - t.z.conj()).norm() > CONJ_TOL * t.z.norm().max(1.0) {
                return Err(Error::Precondition(format!("term {k} is not paired with its conjugate rate")));
            }
        }
        Ok(())
    }

    /// Number of terms with a nonzero amplitude.
    pub fn active_terms(&self) -> usize {
        self.terms.iter().filter(|t| t.d.norm() > 0.0).count()
    }
}

/// δL = (1/t_f)∫₀^{t_f} |L(t) - L_mod(t)|/|L(0)| dt by composite Simpson on
/// `points` samples (at least 3001).
pub fn delta_l(bath: &BathSpec, model: &ExponentialBCF, t_f: f64) -> Result<f64> {
    delta_l_with_points(bath, model, t_f, 3001)
}

pub fn delta_l_with_points(bath: &BathSpec, model: &ExponentialBCF, t_f: f64, points: usize) -> Result<f64> {
    if !(t_f > 0.0) {
        return Err(Error::Precondition(format!("t_f must be positive, got {t_f}")));
    }
    let n = points.max(3001) | 1;
    let h = t_f / (n - 1) as f64;
    let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let exact = bath_samples(bath, &times)?;
    let l0 = exact[0].norm();
    if l0 == 0.0 {
        return Err(Error::Precondition("L(0) vanishes".into()));
    }
    Ok(delta_l_from_samples(&exact, model, h) / l0)
}

/// Unnormalised δL·|L(0)| from precomputed exact samples on a uniform grid.
pub fn delta_l_from_samples(exact: &[Complex64], model: &ExponentialBCF, h: f64) -> f64 {
    let n = exact.len();
    let w = simpson_weights(n, h);
    let t_f = (n - 1) as f64 * h;
    let mut acc = 0.0;
    for i in 0..n {
        acc += w[i] * (exact[i] - model.eval(i as f64 * h)).norm();
    }
    acc / t_f
}

/// L(t) on a list of times, evaluated in parallel.
pub fn bath_samples(bath: &BathSpec, times: &[f64]) -> Result<Vec<Complex64>> {
    use rayon::prelude::*;
    times.par_iter().map(|&t| bath.bcf_time(t)).collect()
}
