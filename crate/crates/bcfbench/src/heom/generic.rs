//! Generic HEOM for an n_S-level system, stored as one contiguous array of
//! n_S×n_S blocks in the eigenbasis of H_S so that H_S^× is diagonal.

use super::{HierarchyIndexSet, SystemSpec};
use crate::bath::Beta;
use crate::error::{Error, Result};
use crate::fitting::ExponentialBCF;
use crate::linalg::{self, CMat};
use crate::quad::simpson_weights;
use num_complex::Complex64;
use rayon::prelude::*;

const NONE: u32 = u32::MAX;

/// Hierarchy norm growth that aborts a propagation.
pub const BLOWUP_FACTOR: f64 = 1e6;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone)]
pub struct GenericHeom {
    n: usize,
    k: usize,
    hbar: f64,
    idx: HierarchyIndexSet,
    energies: Vec<f64>,
    basis: CMat,
    v: Vec<Complex64>,
    d: Vec<Complex64>,
    dbar: Vec<Complex64>,
    rate: Vec<Complex64>,
    up: Vec<u32>,
    down: Vec<u32>,
    sqrt_j: Vec<f64>,
    /// Auxiliary blocks are stored as ρ_j/Π_k s_k^{j_k}; this is s_k.
    scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeomState {
    pub data: Vec<Complex64>,
}

impl HeomState {
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl GenericHeom {
    pub fn new(sys: &SystemSpec, model: &ExponentialBCF, depth: usize, hbar: f64) -> Result<Self> {
        sys.validate()?;
        if depth < 1 {
            return Err(Error::Precondition("hierarchy depth must be at least 1".into()));
        }
        model
            .check_invariants()
            .map_err(|e| Error::Precondition(format!("model BCF rejected: {e}")))?;
        let n = sys.dim();
        let k = model.len();
        let idx = HierarchyIndexSet::new(k, depth)?;
        let (energies, basis) = linalg::eigh(&sys.h_s);
        let v_eig = basis.adjoint() * &sys.v_s * &basis;
        let v = (0..n * n).map(|i| v_eig[(i / n, i % n)]).collect();
        // s_k = √max(|d_k|, |d̄_k|) balances the downward (∝ d) and upward
        // (∝ 1/ħ) couplings, which keeps the generator far less non-normal
        let scale: Vec<f64> = (0..k)
            .map(|i| {
                let m = model.terms[i].d.norm().max(model.dbar(i).norm());
                if m > 0.0 { (m * hbar).sqrt() } else { 1.0 }
            })
            .collect();
        let d: Vec<Complex64> = model.terms.iter().zip(&scale).map(|(t, s)| t.d / s).collect();
        let dbar = (0..k).map(|i| model.dbar(i) / scale[i]).collect();
        let z: Vec<Complex64> = model.terms.iter().map(|t| t.z).collect();
        let nado = idx.len();
        let mut up = vec![NONE; nado * k];
        let mut down = vec![NONE; nado * k];
        let mut sqrt_j = vec![0.0; nado * k];
        let mut rate = vec![c(0.0, 0.0); nado];
        for i in 0..nado {
            let j = idx.get(i);
            for kk in 0..k {
                rate[i] += z[kk] * j[kk] as f64;
                sqrt_j[i * k + kk] = (j[kk] as f64).sqrt();
                if let Some(u) = idx.neighbor(i, kk, true) {
                    up[i * k + kk] = u as u32;
                }
                if let Some(dn) = idx.neighbor(i, kk, false) {
                    down[i * k + kk] = dn as u32;
                }
            }
        }
        Ok(GenericHeom { n, k, hbar, idx, energies, basis, v, d, dbar, rate, up, down, sqrt_j, scale })
    }

    pub fn system_dim(&self) -> usize {
        self.n
    }

    pub fn n_ados(&self) -> usize {
        self.idx.len()
    }

    pub fn index_set(&self) -> &HierarchyIndexSet {
        &self.idx
    }

    pub fn state_len(&self) -> usize {
        self.idx.len() * self.n * self.n
    }

    fn to_eigen(&self, op: &CMat) -> CMat {
        self.basis.adjoint() * op * &self.basis
    }

    fn from_eigen(&self, op: &CMat) -> CMat {
        &self.basis * op * self.basis.adjoint()
    }

    /// ρ_0 = ρ_S, all auxiliary blocks zero.
    pub fn initial(&self, rho_s: &CMat) -> Result<HeomState> {
        if rho_s.shape() != (self.n, self.n) {
            return Err(Error::Domain("initial density matrix has the wrong size".into()));
        }
        let r = self.to_eigen(rho_s);
        let mut data = vec![c(0.0, 0.0); self.state_len()];
        for a in 0..self.n {
            for b in 0..self.n {
                data[a * self.n + b] = r[(a, b)];
            }
        }
        Ok(HeomState { data })
    }

    /// ρ_0 in the original basis.
    pub fn rho0(&self, state: &HeomState) -> CMat {
        let n = self.n;
        let r = CMat::from_fn(n, n, |a, b| state.data[a * n + b]);
        self.from_eigen(&r)
    }

    pub fn trace(&self, state: &HeomState) -> Complex64 {
        (0..self.n).map(|a| state.data[a * self.n + a]).sum()
    }

    /// max |ρ_0 − ρ_0†|.
    pub fn hermiticity_residual(&self, state: &HeomState) -> f64 {
        let n = self.n;
        let mut dev: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                dev = dev.max((state.data[a * n + b] - state.data[b * n + a].conj()).norm());
            }
        }
        dev
    }

    pub fn expectation(&self, state: &HeomState, op: &CMat) -> Complex64 {
        linalg::trace(&(op * self.rho0(state)))
    }

    fn scratch(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        (vec![c(0.0, 0.0); self.state_len()], vec![c(0.0, 0.0); self.state_len()])
    }

    /// V·ρ_j and ρ_j·V for every block.
    fn v_products(&self, x: &[Complex64], vx: &mut [Complex64], xv: &mut [Complex64]) {
        let n = self.n;
        let nn = n * n;
        let v = &self.v;
        vx.par_chunks_mut(nn)
            .zip(xv.par_chunks_mut(nn))
            .zip(x.par_chunks(nn))
            .for_each(|((l, r), blk)| {
                for a in 0..n {
                    for b in 0..n {
                        let mut sl = c(0.0, 0.0);
                        let mut sr = c(0.0, 0.0);
                        for m in 0..n {
                            sl += v[a * n + m] * blk[m * n + b];
                            sr += blk[a * n + m] * v[m * n + b];
                        }
                        l[a * n + b] = sl;
                        r[a * n + b] = sr;
                    }
                }
            });
    }

    /// d/dt of the hierarchy.
    pub fn rhs(&self, x: &[Complex64], out: &mut [Complex64]) {
        let (mut vx, mut xv) = self.scratch();
        self.rhs_with(x, out, &mut vx, &mut xv);
    }

    fn rhs_with(&self, x: &[Complex64], out: &mut [Complex64], vx: &mut [Complex64], xv: &mut [Complex64]) {
        self.v_products(x, vx, xv);
        let (n, k) = (self.n, self.k);
        let nn = n * n;
        let inv_hbar = 1.0 / self.hbar;
        let (vx, xv) = (&*vx, &*xv);
        out.par_chunks_mut(nn).enumerate().for_each(|(i, o)| {
            let blk = &x[i * nn..(i + 1) * nn];
            let rate = self.rate[i];
            for a in 0..n {
                for b in 0..n {
                    let w = (self.energies[a] - self.energies[b]) * inv_hbar;
                    o[a * n + b] = (c(0.0, -w) - rate) * blk[a * n + b];
                }
            }
            for kk in 0..k {
                let dn = self.down[i * k + kk];
                if dn != NONE {
                    let s = self.sqrt_j[i * k + kk];
                    let (cd, cdb) = (self.d[kk] * s, self.dbar[kk] * s);
                    let off = dn as usize * nn;
                    for e in 0..nn {
                        o[e] += cd * vx[off + e] - cdb * xv[off + e];
                    }
                }
                let up = self.up[i * k + kk];
                if up != NONE {
                    let s = -(self.sqrt_j[i * k + kk] * self.sqrt_j[i * k + kk] + 1.0).sqrt() * inv_hbar * self.scale[kk];
                    let off = up as usize * nn;
                    for e in 0..nn {
                        o[e] += (vx[off + e] - xv[off + e]) * s;
                    }
                }
            }
        });
    }

    /// Left-multiplies every block by `op` (given in the original basis).
    pub fn apply_left(&self, op: &CMat, state: &HeomState) -> HeomState {
        let o = self.to_eigen(op);
        let n = self.n;
        let nn = n * n;
        let mut data = vec![c(0.0, 0.0); state.data.len()];
        data.par_chunks_mut(nn).zip(state.data.par_chunks(nn)).for_each(|(dst, src)| {
            for a in 0..n {
                for b in 0..n {
                    let mut s = c(0.0, 0.0);
                    for m in 0..n {
                        s += o[(a, m)] * src[m * n + b];
                    }
                    dst[a * n + b] = s;
                }
            }
        });
        HeomState { data }
    }

    /// Solves Lx = 0 with tr ρ_0 = 1 by right-preconditioned restarted GMRES
    /// on (L − w uᵀ)x = −w, where u is the trace functional and w a multiple
    /// of the identity block. The preconditioner solves the shallow levels of
    /// the hierarchy exactly and the deeper ones by forward substitution.
    pub fn steady_state(&self, guess: &HeomState, opts: &SteadyOptions) -> Result<(HeomState, SteadyReport)> {
        let len = self.state_len();
        let n = self.n;
        let shift = self.shift_scale();
        let coarse = self.build_coarse(shift);
        let mut b = vec![c(0.0, 0.0); len];
        for a in 0..n {
            b[a * n + a] = c(-shift / n as f64, 0.0);
        }
        let (mut vx, mut xv) = self.scratch();
        let apply = |x: &[Complex64], out: &mut [Complex64], vx: &mut [Complex64], xv: &mut [Complex64]| {
            self.rhs_with(x, out, vx, xv);
            let tr: Complex64 = (0..n).map(|a| x[a * n + a]).sum();
            for a in 0..n {
                out[a * n + a] -= tr * (shift / n as f64);
            }
        };
        let dot = |a: &[Complex64], bb: &[Complex64]| -> Complex64 {
            a.par_iter().zip(bb.par_iter()).map(|(x, y)| x.conj() * y).sum()
        };
        let nrm = |a: &[Complex64]| -> f64 { a.par_iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt() };
        let b_norm = nrm(&b);
        let m = opts.restart.max(1);

        let mut x = guess.data.clone();
        let mut r = vec![c(0.0, 0.0); len];
        let mut w = vec![c(0.0, 0.0); len];
        let mut z = vec![c(0.0, 0.0); len];
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        let mut iterations = 0;
        let mut residual;
        loop {
            apply(&x, &mut r, &mut vx, &mut xv);
            r.par_iter_mut().zip(b.par_iter()).for_each(|(ri, bi)| *ri = bi - *ri);
            let beta = nrm(&r);
            residual = beta / b_norm;
            if residual <= opts.tol || iterations >= opts.max_iter || !residual.is_finite() {
                break;
            }
            basis.clear();
            basis.push(r.iter().map(|v| v / beta).collect());
            let mut h = vec![vec![c(0.0, 0.0); m]; m + 1];
            let (mut cs, mut sn) = (vec![c(0.0, 0.0); m], vec![c(0.0, 0.0); m]);
            let mut g = vec![c(0.0, 0.0); m + 1];
            g[0] = c(beta, 0.0);
            let mut used = 0;
            for j in 0..m {
                self.precondition(&coarse, &basis[j], &mut z, &mut vx, &mut xv);
                apply(&z, &mut w, &mut vx, &mut xv);
                for i in 0..=j {
                    let hij = dot(&basis[i], &w);
                    h[i][j] = hij;
                    let vi = &basis[i];
                    w.par_iter_mut().zip(vi.par_iter()).for_each(|(wk, vk)| *wk -= hij * vk);
                }
                let hn = nrm(&w);
                h[j + 1][j] = c(hn, 0.0);
                for i in 0..j {
                    let (a, bb) = (h[i][j], h[i + 1][j]);
                    h[i][j] = cs[i].conj() * a + sn[i].conj() * bb;
                    h[i + 1][j] = -sn[i] * a + cs[i] * bb;
                }
                let (a, bb) = (h[j][j], h[j + 1][j]);
                let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
                if den == 0.0 {
                    break;
                }
                cs[j] = a / den;
                sn[j] = bb / den;
                h[j][j] = c(den, 0.0);
                h[j + 1][j] = c(0.0, 0.0);
                g[j + 1] = -sn[j] * g[j];
                g[j] = cs[j].conj() * g[j];
                used = j + 1;
                iterations += 1;
                residual = g[j + 1].norm() / b_norm;
                if residual <= opts.tol || iterations >= opts.max_iter || hn == 0.0 {
                    break;
                }
                basis.push(w.iter().map(|v| v / hn).collect());
            }
            let mut y = vec![c(0.0, 0.0); used];
            for i in (0..used).rev() {
                let mut acc = g[i];
                for l in i + 1..used {
                    acc -= h[i][l] * y[l];
                }
                y[i] = acc / h[i][i];
            }
            w.par_iter_mut().for_each(|v| *v = c(0.0, 0.0));
            for (yi, vi) in y.iter().zip(&basis) {
                w.par_iter_mut().zip(vi.par_iter()).for_each(|(wk, vk)| *wk += yi * vk);
            }
            self.precondition(&coarse, &w, &mut z, &mut vx, &mut xv);
            x.par_iter_mut().zip(z.par_iter()).for_each(|(xi, zi)| *xi += zi);
            log::debug!("steady state: {iterations} iterations, residual {residual:.3e}");
        }
        let state = HeomState { data: x };
        let mut deriv = vec![c(0.0, 0.0); len];
        self.rhs_with(&state.data, &mut deriv, &mut vx, &mut xv);
        let report = SteadyReport {
            iterations,
            residual,
            rho0_derivative: nrm(&deriv[..n * n]),
            hierarchy_derivative: nrm(&deriv),
            trace: self.trace(&state).re,
            hermiticity: self.hermiticity_residual(&state),
        };
        if !(residual <= opts.tol) {
            return Err(Error::NoConvergence { iterations, residual });
        }
        Ok((state, report))
    }

    fn shift_scale(&self) -> f64 {
        let spread = self.energies.last().unwrap_or(&0.0) - self.energies.first().unwrap_or(&0.0);
        let zmax = self.rate.iter().map(|r| r.norm()).fold(0.0, f64::max);
        (spread / self.hbar).max(zmax / self.idx.cutoff().max(1) as f64).max(1.0)
    }

    /// Largest depth whose truncated hierarchy is solved exactly inside the
    /// preconditioner.
    fn coarse_depth(&self) -> usize {
        let nn = self.n * self.n;
        let mut depth = 0;
        while depth < self.idx.cutoff() && HierarchyIndexSet::count(self.k, depth + 1) * nn <= COARSE_MAX_DIM {
            depth += 1;
        }
        depth
    }

    fn build_coarse(&self, shift: f64) -> Coarse {
        let depth = self.coarse_depth();
        let nn = self.n * self.n;
        if depth == 0 && self.k > 0 && self.idx.cutoff() >= 1 && nn <= SCHUR_MAX_DIM {
            return Coarse { nado: self.k + 1, kind: CoarseKind::Schur(self.schur_factor(shift)) };
        }
        let (nado, lu) = self.coarse_factor(depth, shift);
        Coarse { nado, kind: CoarseKind::Dense(lu) }
    }

    fn diag_entry(&self, i: usize, a: usize, b: usize) -> Complex64 {
        c(0.0, -(self.energies[a] - self.energies[b]) / self.hbar) - self.rate[i]
    }

    fn divide_diag(&self, i: usize, x: &mut [Complex64]) {
        let n = self.n;
        for a in 0..n {
            for b in 0..n {
                x[a * n + b] /= self.diag_entry(i, a, b);
            }
        }
    }

    /// out += f·(coupling of ρ_{e_k} into ρ_0) applied to `x`.
    fn add_first_tier_up(&self, kk: usize, x: &[Complex64], out: &mut [Complex64], f: f64) {
        let nn = self.n * self.n;
        let (mut l, mut r) = (vec![c(0.0, 0.0); nn], vec![c(0.0, 0.0); nn]);
        self.block_products(x, &mut l, &mut r);
        let s = -self.scale[kk] / self.hbar * f;
        for e in 0..nn {
            out[e] += (l[e] - r[e]) * s;
        }
    }

    /// out += f·(coupling of ρ_0 into ρ_{e_k}) applied to `x`.
    fn add_first_tier_down(&self, kk: usize, x: &[Complex64], out: &mut [Complex64], f: f64) {
        let nn = self.n * self.n;
        let (mut l, mut r) = (vec![c(0.0, 0.0); nn], vec![c(0.0, 0.0); nn]);
        self.block_products(x, &mut l, &mut r);
        for e in 0..nn {
            out[e] += (self.d[kk] * l[e] - self.dbar[kk] * r[e]) * f;
        }
    }

    /// LU of S = A_00 − Σ_k U_k D_k⁻¹ W_k for the depth-1 truncation, where
    /// A_00 includes the trace constraint.
    fn schur_factor(&self, shift: f64) -> Lu {
        let n = self.n;
        let nn = n * n;
        let cols: Vec<Vec<Complex64>> = (0..nn)
            .into_par_iter()
            .map(|col| {
                let mut x = vec![c(0.0, 0.0); nn];
                x[col] = c(1.0, 0.0);
                let mut y = vec![c(0.0, 0.0); nn];
                y[col] = self.diag_entry(0, col / n, col % n);
                if col % (n + 1) == 0 {
                    for a in 0..n {
                        y[a * n + a] -= c(shift / n as f64, 0.0);
                    }
                }
                let mut t = vec![c(0.0, 0.0); nn];
                for kk in 0..self.k {
                    t.iter_mut().for_each(|v| *v = c(0.0, 0.0));
                    self.add_first_tier_down(kk, &x, &mut t, 1.0);
                    self.divide_diag(self.up[kk] as usize, &mut t);
                    self.add_first_tier_up(kk, &t, &mut y, -1.0);
                }
                y
            })
            .collect();
        CMat::from_fn(nn, nn, |r, col| cols[col][r]).lu()
    }

    /// Dense LU of (L − w uᵀ) restricted to depths ≤ `depth`, with the
    /// couplings to deeper levels dropped.
    fn coarse_factor(&self, depth: usize, shift: f64) -> (usize, nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>) {
        let (n, k) = (self.n, self.k);
        let nn = n * n;
        let nado = (0..self.idx.len()).take_while(|&i| self.idx.depth(i) <= depth).count();
        let dim = nado * nn;
        let inv_hbar = 1.0 / self.hbar;
        let mut m = CMat::zeros(dim, dim);
        for i in 0..nado {
            let row0 = i * nn;
            for a in 0..n {
                for b in 0..n {
                    let w = (self.energies[a] - self.energies[b]) * inv_hbar;
                    m[(row0 + a * n + b, row0 + a * n + b)] += c(0.0, -w) - self.rate[i];
                }
            }
            for kk in 0..k {
                let s = self.sqrt_j[i * k + kk];
                let dn = self.down[i * k + kk];
                if dn != NONE {
                    let (cd, cdb) = (self.d[kk] * s, self.dbar[kk] * s);
                    self.add_commutator_like(&mut m, row0, dn as usize * nn, cd, -cdb);
                }
                let up = self.up[i * k + kk];
                if up != NONE && (up as usize) < nado {
                    let f = -(s * s + 1.0).sqrt() * inv_hbar * self.scale[kk];
                    self.add_commutator_like(&mut m, row0, up as usize * nn, c(f, 0.0), c(-f, 0.0));
                }
            }
        }
        if depth == 0 {
            // ρ_0 alone is singular under the rank-one trace term; a plain
            // shift on populations and (near-)static coherences keeps it regular
            for a in 0..n {
                for b in 0..n {
                    let e = a * n + b;
                    if a == b || m[(e, e)].norm() < 1e-8 * shift {
                        m[(e, e)] -= c(shift, 0.0);
                    }
                }
            }
        } else {
            for a in 0..n {
                for b in 0..n {
                    m[(a * n + a, b * n + b)] -= c(shift / n as f64, 0.0);
                }
            }
        }
        (nado, m.lu())
    }

    /// Adds l·(V X) + r·(X V) for the block at `col0` into the rows at `row0`.
    fn add_commutator_like(&self, m: &mut CMat, row0: usize, col0: usize, l: Complex64, r: Complex64) {
        let n = self.n;
        for a in 0..n {
            for b in 0..n {
                for q in 0..n {
                    m[(row0 + a * n + b, col0 + q * n + b)] += l * self.v[a * n + q];
                    m[(row0 + a * n + b, col0 + a * n + q)] += r * self.v[q * n + b];
                }
            }
        }
    }

    fn block_products(&self, blk: &[Complex64], l: &mut [Complex64], r: &mut [Complex64]) {
        let n = self.n;
        for a in 0..n {
            for b in 0..n {
                let mut sl = c(0.0, 0.0);
                let mut sr = c(0.0, 0.0);
                for m in 0..n {
                    sl += self.v[a * n + m] * blk[m * n + b];
                    sr += blk[a * n + m] * self.v[m * n + b];
                }
                l[a * n + b] = sl;
                r[a * n + b] = sr;
            }
        }
    }

    /// Exact solve on the coarse levels, then forward substitution through
    /// the deeper ones using only their diagonal and downward couplings.
    fn precondition(
        &self,
        coarse: &Coarse,
        r: &[Complex64],
        out: &mut [Complex64],
        vx: &mut [Complex64],
        xv: &mut [Complex64],
    ) {
        let (n, k) = (self.n, self.k);
        let nn = n * n;
        let inv_hbar = 1.0 / self.hbar;
        match &coarse.kind {
            CoarseKind::Dense(lu) => {
                let split = coarse.nado * nn;
                let sol = lu.solve(&linalg::CVec::from_column_slice(&r[..split])).expect("coarse block is regular");
                out[..split].copy_from_slice(sol.as_slice());
            }
            CoarseKind::Schur(lu) => {
                let mut rhs = r[..nn].to_vec();
                let mut t = vec![c(0.0, 0.0); nn];
                for kk in 0..k {
                    let i = self.up[kk] as usize;
                    t.copy_from_slice(&r[i * nn..(i + 1) * nn]);
                    self.divide_diag(i, &mut t);
                    self.add_first_tier_up(kk, &t, &mut rhs, -1.0);
                }
                let x0 = lu.solve(&linalg::CVec::from_vec(rhs)).expect("Schur complement is regular");
                out[..nn].copy_from_slice(x0.as_slice());
                for kk in 0..k {
                    let i = self.up[kk] as usize;
                    t.copy_from_slice(&r[i * nn..(i + 1) * nn]);
                    self.add_first_tier_down(kk, x0.as_slice(), &mut t, -1.0);
                    self.divide_diag(i, &mut t);
                    out[i * nn..(i + 1) * nn].copy_from_slice(&t);
                }
            }
        }
        for i in 0..coarse.nado {
            let (lo, hi) = (i * nn, (i + 1) * nn);
            self.block_products(&out[lo..hi], &mut vx[lo..hi], &mut xv[lo..hi]);
        }
        for i in coarse.nado..self.idx.len() {
            let (lo, hi) = (i * nn, (i + 1) * nn);
            let o = &mut out[lo..hi];
            o.copy_from_slice(&r[lo..hi]);
            for kk in 0..k {
                let dn = self.down[i * k + kk];
                if dn != NONE {
                    let s = self.sqrt_j[i * k + kk];
                    let (cd, cdb) = (self.d[kk] * s, self.dbar[kk] * s);
                    let off = dn as usize * nn;
                    for e in 0..nn {
                        o[e] -= cd * vx[off + e] - cdb * xv[off + e];
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    let w = (self.energies[a] - self.energies[b]) * inv_hbar;
                    o[a * n + b] /= c(0.0, -w) - self.rate[i];
                }
            }
            let o = &out[lo..hi];
            let (l, rr) = (&mut vx[lo..hi], &mut xv[lo..hi]);
            self.block_products(o, l, rr);
        }
    }
}

/// Upper bound on the size of the exactly solved coarse problem.
const COARSE_MAX_DIM: usize = 1500;

/// Upper bound on n_S² for the depth-1 Schur complement.
const SCHUR_MAX_DIM: usize = 4096;

type Lu = nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>;

struct Coarse {
    nado: usize,
    kind: CoarseKind,
}

enum CoarseKind {
    /// Dense LU of every level up to some depth.
    Dense(Lu),
    /// Depth-1 truncation with the first-tier blocks eliminated, leaving an
    /// n_S²×n_S² Schur complement on ρ_0.
    Schur(Lu),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Krylov subspace size between GMRES restarts.
    pub restart: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions { tol: 1e-11, max_iter: 5000, restart: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyReport {
    pub iterations: usize,
    pub residual: f64,
    /// ‖dρ_0/dt‖ at the returned state.
    pub rho0_derivative: f64,
    pub hierarchy_derivative: f64,
    pub trace: f64,
    pub hermiticity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rk4Report {
    pub steps: usize,
    pub initial_norm: f64,
    pub max_norm: f64,
}

/// Classic RK4 from t = 0 to `t_end`; `observe(t, state)` runs at t = 0 and
/// after every `stride` steps.
pub fn rk4_propagate(
    heom: &GenericHeom,
    state: &HeomState,
    dt: f64,
    t_end: f64,
    stride: usize,
    mut observe: impl FnMut(f64, &HeomState),
) -> Result<(HeomState, Rk4Report)> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Domain(format!("need dt > 0 and t_end >= 0 (dt = {dt}, t_end = {t_end})")));
    }
    let steps = (t_end / dt).round() as usize;
    let len = heom.state_len();
    let mut x = state.clone();
    let initial_norm = x.norm().max(1e-300);
    let mut max_norm = initial_norm;
    let (mut vx, mut xv) = heom.scratch();
    let mut k1 = vec![c(0.0, 0.0); len];
    let mut k2 = vec![c(0.0, 0.0); len];
    let mut k3 = vec![c(0.0, 0.0); len];
    let mut k4 = vec![c(0.0, 0.0); len];
    let mut tmp = vec![c(0.0, 0.0); len];
    let stride = stride.max(1);
    observe(0.0, &x);
    for step in 1..=steps {
        heom.rhs_with(&x.data, &mut k1, &mut vx, &mut xv);
        axpy_into(&mut tmp, &x.data, 0.5 * dt, &k1);
        heom.rhs_with(&tmp, &mut k2, &mut vx, &mut xv);
        axpy_into(&mut tmp, &x.data, 0.5 * dt, &k2);
        heom.rhs_with(&tmp, &mut k3, &mut vx, &mut xv);
        axpy_into(&mut tmp, &x.data, dt, &k3);
        heom.rhs_with(&tmp, &mut k4, &mut vx, &mut xv);
        let h6 = dt / 6.0;
        x.data.par_iter_mut().enumerate().for_each(|(i, xi)| {
            *xi += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * h6;
        });
        let nrm = x.norm();
        max_norm = max_norm.max(nrm);
        if !nrm.is_finite() || nrm > BLOWUP_FACTOR * initial_norm {
            return Err(Error::Instability(format!(
                "hierarchy norm grew from {initial_norm:.3e} to {nrm:.3e} by t = {:.3}; \
                 models with strongly negative F[L_mod] are unstable at weak coupling",
                step as f64 * dt
            )));
        }
        if step % stride == 0 {
            observe(step as f64 * dt, &x);
        }
    }
    Ok((x, Rk4Report { steps, initial_norm, max_norm }))
}

fn axpy_into(out: &mut [Complex64], x: &[Complex64], a: f64, y: &[Complex64]) {
    out.par_iter_mut().zip(x.par_iter().zip(y.par_iter())).for_each(|(o, (xi, yi))| *o = xi + yi * a);
}

/// exp(−βH)/Z; at β = ∞ the uniform mixture over the (possibly degenerate)
/// ground space.
pub fn gibbs_state(h: &CMat, beta: Beta) -> CMat {
    let (e, u) = linalg::eigh(h);
    let n = e.len();
    let e0 = e[0];
    let w: Vec<f64> = match beta {
        Beta::Finite(b) => e.iter().map(|x| (-b * (x - e0)).exp()).collect(),
        Beta::Infinite => {
            let scale = e.iter().map(|x| x.abs()).fold(1.0, f64::max);
            e.iter().map(|x| if x - e0 <= 1e-9 * scale { 1.0 } else { 0.0 }).collect()
        }
    };
    let z: f64 = w.iter().sum();
    let mut rho = CMat::zeros(n, n);
    for (i, wi) in w.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        let col = u.column(i);
        rho += col * col.adjoint() * c(wi / z, 0.0);
    }
    rho
}

/// C_AB(t) = tr[A e^{𝓛t}(B ρ(t_f))] at t = 0, Δ, 2Δ, … up to `t_end`,
/// with Δ = dt·stride. ρ(t_f) is used as given, without re-symmetrization.
pub fn system_correlation(
    heom: &GenericHeom,
    steady: &HeomState,
    a: &CMat,
    b: &CMat,
    dt: f64,
    stride: usize,
    t_end: f64,
) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let start = heom.apply_left(b, steady);
    let mut times = Vec::new();
    let mut values = Vec::new();
    rk4_propagate(heom, &start, dt, t_end, stride, |t, s| {
        times.push(t);
        values.push(heom.expectation(s, a));
    })?;
    Ok((times, values))
}

/// 2Re∫₀^T C(t)e^{iωt}dt by composite Simpson on an equidistant series.
pub fn fourier_half(values: &[Complex64], dt: f64, omegas: &[f64]) -> Vec<f64> {
    let w = simpson_weights(values.len(), dt);
    omegas
        .iter()
        .map(|&om| {
            let s: Complex64 = values
                .iter()
                .zip(&w)
                .enumerate()
                .map(|(i, (v, wi))| v * Complex64::from_polar(*wi, om * i as f64 * dt))
                .sum();
            2.0 * s.re
        })
        .collect()
}
