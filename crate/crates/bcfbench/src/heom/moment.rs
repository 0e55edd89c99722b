//! HEOM of a harmonic system in the moment representation
//! φ_{m,n,j} = tr(a^m ρ_j a†^n)/√(m!n!). Depth m+n+Σj couples only to the
//! same depth and depth − 2, so truncation at depth 2 is exact for second
//! moments.

use super::generic::fourier_half;
use super::HierarchyIndexSet;
use crate::error::{Error, Result};
use crate::exact::{InitialMoments, OscillatorParams};
use crate::fitting::ExponentialBCF;
use crate::linalg::{self, CMat, CVec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

/// Time step of the correlation series and of its Simpson Fourier sum.
pub const CORRELATION_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentObservable {
    Q,
    P,
}

#[derive(Debug, Clone)]
pub struct MomentGenerator {
    pub osc: OscillatorParams,
    pub lambda: f64,
    pub hbar: f64,
    idx: HierarchyIndexSet,
    matrix: CMat,
    /// Largest real part among depth-1 eigenvalues; every eigenvalue of the
    /// generator is a sum of at most `depth` of these.
    abscissa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub data: CVec,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn build_moment_generator(
    osc: &OscillatorParams,
    model: &ExponentialBCF,
    lambda: f64,
    hbar: f64,
) -> Result<MomentGenerator> {
    build_moment_generator_with_depth(osc, model, lambda, hbar, 2)
}

pub fn build_moment_generator_with_depth(
    osc: &OscillatorParams,
    model: &ExponentialBCF,
    lambda: f64,
    hbar: f64,
    depth: usize,
) -> Result<MomentGenerator> {
    osc.validate()?;
    model
        .check_invariants()
        .map_err(|e| Error::Precondition(format!("model BCF rejected: {e}")))?;
    if !(lambda >= 0.0) || !(hbar > 0.0) {
        return Err(Error::Precondition("need lambda >= 0 and hbar > 0".into()));
    }
    if depth < 2 {
        return Err(Error::Precondition("moment hierarchy needs depth >= 2".into()));
    }
    let k = model.len();
    let idx = HierarchyIndexSet::new(k + 2, depth)?;
    let dim = idx.len();
    let mut g = CMat::zeros(dim, dim);
    let (w0, v0) = (osc.omega0, osc.v0);
    let w_eff = w0 + lambda * v0 * v0 / hbar;
    let ct = c(0.0, -lambda * v0 * v0 / hbar);
    let d: Vec<Complex64> = model.terms.iter().map(|t| t.d).collect();
    let dbar: Vec<Complex64> = (0..k).map(|i| model.dbar(i)).collect();
    let z: Vec<Complex64> = model.terms.iter().map(|t| t.z).collect();

    let mut target = vec![0u8; k + 2];
    for col in 0..dim {
        let src = idx.get(col).to_vec();
        let (m, n) = (src[0] as i32, src[1] as i32);
        let (mf, nf) = (m as f64, n as f64);
        let j = &src[2..];
        let mut push = |dm: i32, dn: i32, dj: Option<(usize, i32)>, coef: Complex64, g: &mut CMat| {
            if coef == Complex64::new(0.0, 0.0) || m + dm < 0 || n + dn < 0 {
                return;
            }
            target.copy_from_slice(&src);
            target[0] = (m + dm) as u8;
            target[1] = (n + dn) as u8;
            if let Some((kk, s)) = dj {
                let v = j[kk] as i32 + s;
                if v < 0 {
                    return;
                }
                target[2 + kk] = v as u8;
            }
            if let Some(row) = idx.index_of(&target) {
                g[(row, col)] += coef;
            }
        };
        // -(i/ħ)[H_S, ·] with H_S = ħω₀a†a + λv₀²q²
        let mut diag = c(0.0, -w_eff * (mf - nf));
        for kk in 0..k {
            diag -= z[kk] * j[kk] as f64;
        }
        push(0, 0, None, diag, &mut g);
        push(2, 0, None, ct * 0.5 * ((mf + 1.0) * (mf + 2.0)).sqrt(), &mut g);
        push(0, 2, None, -ct * 0.5 * ((nf + 1.0) * (nf + 2.0)).sqrt(), &mut g);
        push(1, -1, None, ct * ((mf + 1.0) * nf).sqrt(), &mut g);
        push(-1, 1, None, -ct * (mf * (nf + 1.0)).sqrt(), &mut g);
        for kk in 0..k {
            // this element feeds φ_{j+e_k} through d_k S[qρ] − d̄_k S[ρq]
            let pref = v0 * (j[kk] as f64 + 1.0).sqrt() * FRAC_1_SQRT_2;
            let up = Some((kk, 1));
            push(-1, 0, up, d[kk] * pref * mf.sqrt(), &mut g);
            push(1, 0, up, d[kk] * pref * (mf + 1.0).sqrt(), &mut g);
            push(0, -1, up, d[kk] * pref * nf.sqrt(), &mut g);
            push(0, 1, up, -dbar[kk] * pref * (nf + 1.0).sqrt(), &mut g);
            push(0, -1, up, -dbar[kk] * pref * nf.sqrt(), &mut g);
            push(-1, 0, up, -dbar[kk] * pref * mf.sqrt(), &mut g);
            // and φ_{j−e_k} through −(v₀/ħ)S[q^× ρ]
            if j[kk] > 0 {
                let pref = -(v0 / hbar) * (j[kk] as f64).sqrt() * FRAC_1_SQRT_2;
                let down = Some((kk, -1));
                push(1, 0, down, c(pref * (mf + 1.0).sqrt(), 0.0), &mut g);
                push(0, 1, down, c(-pref * (nf + 1.0).sqrt(), 0.0), &mut g);
            }
        }
    }

    let depth1: Vec<usize> = (0..dim).filter(|&i| idx.depth(i) == 1).collect();
    let block = CMat::from_fn(depth1.len(), depth1.len(), |r, s| g[(depth1[r], depth1[s])]);
    let abscissa = linalg::eigenvalues(&block)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(MomentGenerator { osc: *osc, lambda, hbar, idx, matrix: g, abscissa })
}

impl MomentGenerator {
    pub fn dim(&self) -> usize {
        self.idx.len()
    }

    pub fn depth(&self) -> usize {
        self.idx.cutoff()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn index_set(&self) -> &HierarchyIndexSet {
        &self.idx
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.abscissa
    }

    pub fn index_of(&self, m: u8, n: u8, j: &[u8]) -> Option<usize> {
        let mut key = vec![m, n];
        key.extend_from_slice(j);
        self.idx.index_of(&key)
    }

    fn k(&self) -> usize {
        self.idx.k() - 2
    }

    pub fn check_stable(&self) -> Result<()> {
        let scale = self.matrix.iter().map(|x| x.norm()).fold(1.0, f64::max);
        if self.abscissa > 1e-10 * scale {
            return Err(Error::Instability(format!(
                "moment generator has an eigenvalue with real part ~{:.3e} > 0",
                self.abscissa
            )));
        }
        Ok(())
    }

    pub fn vacuum(&self) -> MomentState {
        self.from_moments(&InitialMoments::vacuum())
    }

    /// Gaussian zero-mean initial state with the given second moments and
    /// all auxiliary elements zero.
    pub fn from_moments(&self, init: &InitialMoments) -> MomentState {
        let mut data = CVec::zeros(self.dim());
        let zero = vec![0u8; self.k()];
        let a2 = c(0.5 * (init.q2 - init.p2), 0.5 * init.qp_sym);
        let set = |m: u8, n: u8, v: Complex64, data: &mut CVec| {
            if let Some(i) = self.index_of(m, n, &zero) {
                data[i] = v;
            }
        };
        set(0, 0, c(1.0, 0.0), &mut data);
        set(2, 0, a2 * FRAC_1_SQRT_2, &mut data);
        set(0, 2, a2.conj() * FRAC_1_SQRT_2, &mut data);
        set(1, 1, c(0.5 * (init.q2 + init.p2 - 1.0), 0.0), &mut data);
        MomentState { data }
    }

    pub fn propagator(&self, t: f64) -> Result<CMat> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("propagation time must be >= 0, got {t}")));
        }
        self.check_stable()?;
        let e = linalg::expm(&(&self.matrix * c(t, 0.0)));
        if e.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::Instability("matrix exponential overflowed".into()));
        }
        Ok(e)
    }

    pub fn propagate(&self, state: &MomentState, t: f64) -> Result<MomentState> {
        if t == 0.0 {
            return Ok(state.clone());
        }
        Ok(MomentState { data: self.propagator(t)? * &state.data })
    }

    pub fn phi(&self, state: &MomentState, m: u8, n: u8, j: &[u8]) -> Complex64 {
        self.index_of(m, n, j).map(|i| state.data[i]).unwrap_or_default()
    }

    fn phi0(&self, state: &MomentState, m: u8, n: u8) -> Complex64 {
        self.phi(state, m, n, &vec![0u8; self.k()])
    }

    pub fn trace(&self, state: &MomentState) -> Complex64 {
        self.phi0(state, 0, 0)
    }

    pub fn q2(&self, state: &MomentState) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let v = s2 * self.phi0(state, 2, 0) + s2 * self.phi0(state, 0, 2) + 2.0 * self.phi0(state, 1, 1)
            + self.phi0(state, 0, 0);
        0.5 * v.re
    }

    pub fn p2(&self, state: &MomentState) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let v = -s2 * self.phi0(state, 2, 0) - s2 * self.phi0(state, 0, 2) + 2.0 * self.phi0(state, 1, 1)
            + self.phi0(state, 0, 0);
        0.5 * v.re
    }

    /// The transformed left multiplication by q or p on every auxiliary
    /// element; elements pushed beyond the depth cutoff are dropped since
    /// they never feed back into lower depths.
    pub fn apply_left(&self, which: MomentObservable, state: &MomentState) -> MomentState {
        let mut out = CVec::zeros(self.dim());
        let (ca, cad, cr) = match which {
            MomentObservable::Q => (c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)),
            MomentObservable::P => (c(0.0, -FRAC_1_SQRT_2), c(0.0, FRAC_1_SQRT_2), c(0.0, FRAC_1_SQRT_2)),
        };
        let mut key = vec![0u8; self.idx.k()];
        for i in 0..self.dim() {
            let x = state.data[i];
            if x == Complex64::new(0.0, 0.0) {
                continue;
            }
            let src = self.idx.get(i);
            let (m, n) = (src[0] as i32, src[1] as i32);
            for (dm, dn, coef) in [
                (-1, 0, ca * (m as f64).sqrt()),
                (1, 0, cad * (m as f64 + 1.0).sqrt()),
                (0, -1, cr * (n as f64).sqrt()),
            ] {
                if m + dm < 0 || n + dn < 0 || coef == Complex64::new(0.0, 0.0) {
                    continue;
                }
                key.copy_from_slice(src);
                key[0] = (m + dm) as u8;
                key[1] = (n + dn) as u8;
                if let Some(r) = self.idx.index_of(&key) {
                    out[r] += coef * x;
                }
            }
        }
        MomentState { data: out }
    }

    /// ⟨0|(0| o^L φ |0⟩ for a state produced by `apply_left`.
    pub fn read_left(&self, which: MomentObservable, state: &MomentState) -> Complex64 {
        let (p10, p01) = (self.phi0(state, 1, 0), self.phi0(state, 0, 1));
        match which {
            MomentObservable::Q => (p10 + p01) * FRAC_1_SQRT_2,
            MomentObservable::P => (p01 - p10) * c(0.0, FRAC_1_SQRT_2),
        }
    }
}

/// (⟨q²⟩_mod, ⟨p²⟩_mod) after propagating the vacuum to t_f.
pub fn steady_moments(
    osc: &OscillatorParams,
    model: &ExponentialBCF,
    lambda: f64,
    hbar: f64,
    t_f: f64,
) -> Result<(f64, f64)> {
    let gen = build_moment_generator(osc, model, lambda, hbar)?;
    let s = gen.propagate(&gen.vacuum(), t_f)?;
    Ok((gen.q2(&s), gen.p2(&s)))
}

/// (⟨q²⟩, ⟨p²⟩) at each of the ascending `times`, starting from `initial`.
pub fn transient_moments(gen: &MomentGenerator, initial: &MomentState, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(times.len());
    let mut state = initial.clone();
    let mut now = 0.0;
    for &t in times {
        if t < now {
            return Err(Error::Domain("times must be ascending and non-negative".into()));
        }
        state = gen.propagate(&state, t - now)?;
        now = t;
        out.push((gen.q2(&state), gen.p2(&state)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub omegas: Vec<f64>,
    pub spectrum: Vec<f64>,
}

/// C_oo^mod(t) on t = 0, 0.1, …, t_max from the state at t_f, and
/// 𝓕[C](ω) = 2Re∫₀^{t_max} C(t)e^{iωt}dt by Simpson's rule.
pub fn correlation_mod(
    gen: &MomentGenerator,
    which: MomentObservable,
    t_f: f64,
    t_max: f64,
    omegas: &[f64],
) -> Result<CorrelationSeries> {
    let steady = gen.propagate(&gen.vacuum(), t_f)?;
    let mut state = gen.apply_left(which, &steady);
    let n = (t_max / CORRELATION_DT).round() as usize;
    let step = gen.propagator(CORRELATION_DT)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i > 0 {
            state = MomentState { data: &step * &state.data };
        }
        times.push(i as f64 * CORRELATION_DT);
        values.push(gen.read_left(which, &state));
    }
    let spectrum = fourier_half(&values, CORRELATION_DT, omegas);
    Ok(CorrelationSeries { times, values, omegas: omegas.to_vec(), spectrum })
}
