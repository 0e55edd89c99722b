//! Hierarchical equations of motion for exponential-sum bath models: the
//! moment representation for a harmonic system and a dense generic
//! hierarchy for finite-dimensional systems.

mod generic;
mod moment;

pub use generic::{
    fourier_half, gibbs_state, rk4_propagate, system_correlation, GenericHeom, HeomState, Rk4Report, SteadyOptions,
    SteadyReport,
};
pub use moment::{
    build_moment_generator, build_moment_generator_with_depth, correlation_mod, steady_moments, transient_moments,
    CorrelationSeries, MomentGenerator, MomentObservable, MomentState, CORRELATION_DT,
};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use std::collections::HashMap;

/// Multi-indices j ∈ ℕ^k with Σj ≤ cutoff, ordered by depth and then
/// lexicographically, with the inverse map.
#[derive(Debug, Clone)]
pub struct HierarchyIndexSet {
    k: usize,
    cutoff: usize,
    flat: Vec<u8>,
    map: HashMap<Vec<u8>, usize>,
}

impl HierarchyIndexSet {
    pub fn new(k: usize, cutoff: usize) -> Result<Self> {
        if cutoff > u8::MAX as usize {
            return Err(Error::Precondition(format!("depth cutoff {cutoff} too large")));
        }
        let total = Self::count(k, cutoff);
        let mut flat = Vec::with_capacity(total * k);
        let mut cur = vec![0u8; k];
        for depth in 0..=cutoff {
            fill(&mut cur, 0, depth, &mut flat);
        }
        let map = if k == 0 {
            HashMap::from([(Vec::new(), 0)])
        } else {
            flat.chunks(k).enumerate().map(|(i, c)| (c.to_vec(), i)).collect()
        };
        Ok(HierarchyIndexSet { k, cutoff, flat, map })
    }

    /// (cutoff + k)! / (cutoff! k!)
    pub fn count(k: usize, cutoff: usize) -> usize {
        let mut c: u128 = 1;
        for i in 1..=k as u128 {
            c = c * (cutoff as u128 + i) / i;
        }
        c as usize
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u8] {
        &self.flat[i * self.k..(i + 1) * self.k]
    }

    pub fn depth(&self, i: usize) -> usize {
        self.get(i).iter().map(|&x| x as usize).sum()
    }

    pub fn index_of(&self, j: &[u8]) -> Option<usize> {
        self.map.get(j).copied()
    }

    /// Index of j ± e_kk, if it lies in the set.
    pub fn neighbor(&self, i: usize, kk: usize, up: bool) -> Option<usize> {
        let mut j = self.get(i).to_vec();
        if up {
            j[kk] = j[kk].checked_add(1)?;
        } else {
            j[kk] = j[kk].checked_sub(1)?;
        }
        self.index_of(&j)
    }
}

fn fill(cur: &mut Vec<u8>, pos: usize, remaining: usize, out: &mut Vec<u8>) {
    let k = cur.len();
    if k == 0 {
        return;
    }
    if pos == k - 1 {
        cur[pos] = remaining as u8;
        out.extend_from_slice(cur);
        return;
    }
    for v in (0..=remaining).rev() {
        cur[pos] = v as u8;
        fill(cur, pos + 1, remaining - v, out);
    }
    cur[pos] = 0;
}

/// System Hamiltonian and coupling operator of a finite-dimensional system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub h_s: CMat,
    pub v_s: CMat,
    pub labels: Vec<String>,
}

impl SystemSpec {
    pub fn new(h_s: CMat, v_s: CMat) -> Result<Self> {
        let s = SystemSpec { h_s, v_s, labels: Vec::new() };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.h_s.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.h_s.nrows();
        if n == 0 || !self.h_s.is_square() || self.v_s.shape() != (n, n) {
            return Err(Error::Domain("H_S and V_S must be square matrices of equal size".into()));
        }
        for (name, m) in [("H_S", &self.h_s), ("V_S", &self.v_s)] {
            let scale = m.iter().map(|x| x.norm()).fold(1.0, f64::max);
            let dev = (m - m.adjoint()).iter().map(|x| x.norm()).fold(0.0, f64::max);
            if dev > 1e-12 * scale {
                return Err(Error::Domain(format!("{name} is not Hermitian (deviation {dev:.3e})")));
            }
        }
        Ok(())
    }

    /// H_S + λV_S².
    pub fn with_counter_term(&self, lambda: f64) -> SystemSpec {
        let v2 = &self.v_s * &self.v_s;
        SystemSpec { h_s: &self.h_s + v2 * crate::Complex64::new(lambda, 0.0), v_s: self.v_s.clone(), labels: self.labels.clone() }
    }

    /// H_S,eff = H_S − λV_S².
    pub fn h_eff(&self, lambda: f64) -> CMat {
        let v2 = &self.v_s * &self.v_s;
        &self.h_s - v2 * crate::Complex64::new(lambda, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_set_counts() {
        for (k, h) in [(1, 3), (3, 2), (6, 4), (16, 6)] {
            let s = HierarchyIndexSet::new(k, h).unwrap();
            assert_eq!(s.len(), HierarchyIndexSet::count(k, h));
            for i in 0..s.len() {
                assert_eq!(s.index_of(s.get(i)), Some(i));
            }
        }
        assert_eq!(HierarchyIndexSet::count(16, 6), 74_613);
    }

    #[test]
    fn ordered_by_depth() {
        let s = HierarchyIndexSet::new(4, 3).unwrap();
        assert_eq!(s.depth(0), 0);
        for i in 1..s.len() {
            assert!(s.depth(i) >= s.depth(i - 1));
        }
    }
}
