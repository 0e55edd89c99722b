//! Second-order trapezoidal solver for the G₊ Volterra equation and the
//! exact transient ⟨q²⟩(t) built from it.

use super::OscillatorParams;
use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::quad::simpson_weights;
use serde::{Deserialize, Serialize};

/// G₊ and G₊′ sampled at t_n = n·dt.
#[derive(Debug, Clone, PartialEq)]
pub struct GPlus {
    pub dt: f64,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
}

impl GPlus {
    pub fn times(&self) -> Vec<f64> {
        (0..self.g.len()).map(|i| i as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialMoments {
    pub q2: f64,
    pub p2: f64,
    /// ⟨qp + pq⟩₀
    pub qp_sym: f64,
}

impl InitialMoments {
    pub fn vacuum() -> Self {
        InitialMoments { q2: 0.5, p2: 0.5, qp_sym: 0.0 }
    }
}

/// Energy growth beyond this factor flags an unstable step size; the
/// dissipative kernel can only remove energy.
const GROWTH_BOUND: f64 = 10.0;

/// Solves G₊″ + (1/M)∫₀ᵗ η(t−τ)G₊′(τ)dτ + ω₀²G₊ = 0, G₊(0)=0, G₊′(0)=1,
/// on n_steps steps of size dt.
pub fn g_plus_volterra(bath: &BathSpec, osc: &OscillatorParams, dt: f64, n_steps: usize) -> Result<GPlus> {
    osc.validate()?;
    bath.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let eta: Vec<f64> = (0..=n_steps).map(|k| bath.sd.eta_time(k as f64 * dt)).collect::<Result<_>>()?;
    solve_with_kernel(&eta, osc.omega0, 1.0 / osc.mass(bath.hbar), dt)
}

pub(crate) fn solve_with_kernel(eta: &[f64], omega0: f64, inv_m: f64, h: f64) -> Result<GPlus> {
    let n = eta.len();
    let w2 = omega0 * omega0;
    let mut g = vec![0.0; n];
    let mut dg = vec![0.0; n];
    dg[0] = 1.0;
    // G(0) = 0 and the memory integral is empty, so f(0) = 0
    let mut f_prev = 0.0;
    let e0 = 0.5 * (dg[0] * dg[0] + w2 * g[0] * g[0]);
    for m in 0..n.saturating_sub(1) {
        let next = m + 1;
        // known part of h·[½η_next v_0 + Σ_{k=1}^{next-1} η_{next-k} v_k]
        let mut s = 0.5 * eta[next] * dg[0];
        for k in 1..next {
            s += eta[next - k] * dg[k];
        }
        s *= h;
        // u' = u + h/2 (v + v'),  v' = v + h/2 (f + f'),  f' = -ω₀²u' - (1/M)(s + h/2 η₀ v')
        let (u, v) = (g[m], dg[m]);
        let c = inv_m * 0.5 * h * eta[0];
        // v' (1 + h²ω₀²/4 + h c/2) = v + h/2 f - h/2 ω₀² (u + h/2 v) - h/2 (1/M) s
        let lhs = 1.0 + 0.25 * h * h * w2 + 0.5 * h * c;
        let rhs = v + 0.5 * h * f_prev - 0.5 * h * w2 * (u + 0.5 * h * v) - 0.5 * h * inv_m * s;
        let v_new = rhs / lhs;
        let u_new = u + 0.5 * h * (v + v_new);
        f_prev = -w2 * u_new - inv_m * (s + 0.5 * h * eta[0] * v_new);
        g[next] = u_new;
        dg[next] = v_new;
        let e = 0.5 * (v_new * v_new + w2 * u_new * u_new);
        if !e.is_finite() || e > GROWTH_BOUND * e0 {
            return Err(Error::Instability(format!(
                "G+ grows at t = {:.4} with dt = {h}; reduce the step size",
                next as f64 * h
            )));
        }
    }
    Ok(GPlus { dt: h, g, dg })
}

/// Default base step; Richardson extrapolation uses this and its half.
pub const TRANSIENT_DT: f64 = 0.005;

/// Exact ⟨q²⟩(t) for a factorized initial state.
pub fn transient_q2(bath: &BathSpec, osc: &OscillatorParams, initial: InitialMoments, t: f64) -> Result<f64> {
    Ok(transient_q2_series(bath, osc, initial, &[t], TRANSIENT_DT)?[0])
}

/// ⟨q²⟩ at several times from one G₊ solve per step size, with Richardson
/// extrapolation between `dt` and `dt/2`. Each t is snapped to the grid.
pub fn transient_q2_series(
    bath: &BathSpec,
    osc: &OscillatorParams,
    initial: InitialMoments,
    times: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::Domain("transient times must be finite and non-negative".into()));
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let coarse = transient_on_grid(bath, osc, initial, times, t_max, dt)?;
    let fine = transient_on_grid(bath, osc, initial, times, t_max, 0.5 * dt)?;
    let mut out = Vec::with_capacity(times.len());
    for (c, f) in coarse.iter().zip(&fine) {
        let extrap = (4.0 * f - c) / 3.0;
        let est = (f - c).abs() / 3.0;
        if est > 1e-3 * extrap.abs().max(1.0) {
            return Err(Error::Numerical {
                msg: "transient <q^2> did not converge under step halving".into(),
                estimate: est,
            });
        }
        out.push(extrap);
    }
    Ok(out)
}

fn transient_on_grid(
    bath: &BathSpec,
    osc: &OscillatorParams,
    initial: InitialMoments,
    times: &[f64],
    t_max: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let n_steps = ((t_max / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if n_steps == 0 { dt } else { t_max / n_steps as f64 };
    let gp = g_plus_volterra(bath, osc, h, n_steps)?;
    let re_l: Vec<f64> = (0..=n_steps)
        .map(|k| bath.bcf_time(k as f64 * h).map(|l| l.re))
        .collect::<Result<_>>()?;
    let w0 = osc.omega0;
    let noise_pref = w0 / (osc.mass(bath.hbar) * bath.hbar);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let n = (t / h).round() as usize;
        let (g, dg) = (gp.g[n], gp.dg[n]);
        let mut val = initial.q2 * dg * dg + initial.p2 * w0 * w0 * g * g + initial.qp_sym * w0 * g * dg;
        if n > 0 {
            // ∫∫ G(τ)G(τ′) Re L(|τ−τ′|): the imaginary part is odd and cancels
            let w = simpson_weights(n + 1, h);
            let a: Vec<f64> = (0..=n).map(|i| w[i] * gp.g[i]).collect();
            let mut acc = 0.0;
            for i in 0..=n {
                let mut row = 0.5 * a[i] * re_l[0];
                for j in 0..i {
                    row += a[j] * re_l[i - j];
                }
                acc += 2.0 * a[i] * row;
            }
            val += noise_pref * acc;
        }
        out.push(val);
    }
    Ok(out)
}
