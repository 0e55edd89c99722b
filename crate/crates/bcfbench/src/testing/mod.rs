//! Error estimation for a target system through harmonic surrogates: split
//! the system-bath coupling into Bohr-frequency transitions, give each one an
//! oscillator that probes the same part of the BCF, and weight the oscillator
//! errors by how strongly each transition couples.

pub mod systems;

use crate::bath::{BathSpec, Beta};
use crate::error::{Error, Result};
use crate::exact::{eq_moment, spectral_correlation, Correlation, MatsubaraSumSpec, Moment, OscillatorParams};
use crate::fitting::ExponentialBCF;
use crate::heom::{
    build_moment_generator, correlation_mod, gibbs_state, rk4_propagate, GenericHeom, MomentObservable, SteadyOptions,
    SystemSpec,
};
use crate::linalg::{self, CMat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Share of the total coupling weight the retained transitions must cover.
pub const RETAINED_WEIGHT: f64 = 0.99;
/// Ω = 0 weight above which decomposition fails unless explicitly allowed.
pub const ZERO_FREQ_WEIGHT_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSpec {
    pub omega: f64,
    /// C_Ω in the original basis of H_S.
    pub c: CMat,
    pub coupling: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecomposeOptions {
    /// Absolute merge tolerance for Bohr frequencies; `None` means
    /// 1e-9·max|Ω|.
    pub freq_tol: Option<f64>,
    pub allow_zero_freq: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Minimal descending-weight prefix covering 99% of the Ω > 0 weight.
    pub retained: Vec<TransitionSpec>,
    /// Every Ω > 0 transition, sorted like `retained`.
    pub all: Vec<TransitionSpec>,
    /// The merged Ω = 0 block, if any.
    pub zero: Option<TransitionSpec>,
    pub rho_eq: CMat,
    pub warnings: Vec<String>,
}

impl Decomposition {
    pub fn retained_weight(&self) -> f64 {
        self.retained.iter().map(|t| t.weight).sum()
    }
}

/// Splits V_S into Σ_Ω (C_Ω + C_Ω†) over the Bohr frequencies of H_S and
/// weights each transition by tr[(C_Ω + C_Ω†)² ρ_eq], with ρ_eq the Gibbs
/// state of H_S − λV_S².
pub fn decompose_transitions(sys: &SystemSpec, beta: Beta, lambda: f64, opts: DecomposeOptions) -> Result<Decomposition> {
    sys.validate()?;
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!("lambda must be non-negative, got {lambda}")));
    }
    let n = sys.dim();
    let (e, u) = linalg::eigh(&sys.h_s);
    let v = u.adjoint() * &sys.v_s * &u;
    let spread = e[n - 1] - e[0];
    let tol = match opts.freq_tol {
        Some(t) if t >= 0.0 => t,
        Some(t) => return Err(Error::Precondition(format!("freq_tol must be non-negative, got {t}"))),
        None => 1e-9 * spread.max(f64::MIN_POSITIVE),
    };

    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            pairs.push((e[j] - e[i], i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<Vec<(f64, usize, usize)>> = Vec::new();
    for p in pairs {
        match groups.last_mut() {
            Some(g) if p.0 - g.last().expect("non-empty").0 <= tol => g.push(p),
            _ => groups.push(vec![p]),
        }
    }

    let rho_eq = gibbs_state(&sys.h_eff(lambda), beta);
    // Bohr frequencies that V_S does not connect are not transitions
    let negligible = 1e-12 * v.norm();
    let mut all = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut block = CMat::zeros(n, n);
        for &(_, i, j) in g {
            let f = if i == j { 0.5 } else { 1.0 };
            block[(i, j)] += v[(i, j)] * f;
        }
        if block.norm() <= negligible {
            continue;
        }
        let cmat = &u * block * u.adjoint();
        let x = &cmat + cmat.adjoint();
        let coupling = linalg::trace(&(&x * &x * &rho_eq)).re;
        let omega = g.iter().map(|p| p.0).sum::<f64>() / g.len() as f64;
        all.push(TransitionSpec { omega, c: cmat, coupling, weight: 0.0 });
    }
    let total: f64 = all.iter().map(|t| t.coupling).sum();
    if !(total > 0.0) {
        return Err(Error::Precondition("V_S has no weight in the equilibrium state".into()));
    }
    for t in &mut all {
        t.weight = t.coupling / total;
    }

    let mut warnings = Vec::new();
    let zero = if all[0].omega <= tol { Some(all.remove(0)) } else { None };
    if all.is_empty() {
        return Err(Error::Precondition("V_S induces no transition with nonzero frequency".into()));
    }
    if let Some(z) = &zero {
        if z.weight > ZERO_FREQ_WEIGHT_LIMIT {
            let msg = format!("dropping an Omega = 0 transition with weight {:.4e}", z.weight);
            if !opts.allow_zero_freq {
                return Err(Error::Precondition(format!("{msg}; zero-frequency transitions are not supported")));
            }
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    all.sort_by(|a, b| {
        if (a.weight - b.weight).abs() <= 1e-12 {
            b.omega.total_cmp(&a.omega)
        } else {
            b.weight.total_cmp(&a.weight)
        }
    });
    let target = RETAINED_WEIGHT * all.iter().map(|t| t.weight).sum::<f64>();
    let mut acc = 0.0;
    let mut retained = Vec::new();
    for t in &all {
        if acc >= target {
            break;
        }
        acc += t.weight;
        retained.push(t.clone());
    }
    Ok(Decomposition { retained, all, zero, rho_eq, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateAssignment {
    pub transition: TransitionSpec,
    pub omega0: f64,
    pub v0: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Relative residual of v₀²⟨q²⟩_eq = coupling.
    pub coupling_residual: f64,
    /// Renormalized oscillator frequency ω₀√(1 + 2λv₀²/(ħω₀)); equals Ω.
    pub omega_renormalized: f64,
}

impl SurrogateAssignment {
    pub fn oscillator(&self) -> OscillatorParams {
        OscillatorParams { omega0: self.omega0, v0: self.v0 }
    }
}

pub const ASSIGN_MAX_ITER: usize = 200;
pub const ASSIGN_TOL: f64 = 1e-10;

fn omega0_for(omega: f64, lambda: f64, v2: f64, hbar: f64) -> f64 {
    let a = lambda * v2 / hbar;
    // √(a² + Ω²) − a without cancellation
    omega * omega / ((a * a + omega * omega).sqrt() + a)
}

/// Finds (ω₀, v₀) with ω₀ = √((λv₀²/ħ)² + Ω²) − λv₀²/ħ and
/// v₀²⟨q²⟩_eq(ω₀, v₀) = coupling, where ⟨q²⟩_eq is the exact value for the
/// full bath.
pub fn assign_surrogate(tr: &TransitionSpec, lambda: f64, bath: &BathSpec) -> Result<SurrogateAssignment> {
    bath.validate()?;
    if !(tr.coupling > 0.0) || !(tr.omega > 0.0) {
        return Err(Error::Precondition(format!(
            "transition needs positive coupling and frequency (Omega = {}, coupling = {})",
            tr.omega, tr.coupling
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Precondition(format!("lambda must be non-negative, got {lambda}")));
    }
    let hbar = bath.hbar;
    let free_q2 = match bath.beta_hbar() {
        Some(bh) => 0.5 / (0.5 * bh * tr.omega).tanh(),
        None => 0.5,
    };
    let q2_of = |v2: f64| -> Result<(f64, f64)> {
        let w0 = omega0_for(tr.omega, lambda, v2, hbar);
        let osc = OscillatorParams::new(w0, v2.sqrt())?;
        Ok((w0, eq_moment(bath, &osc, Moment::Q2, MatsubaraSumSpec::default())?))
    };
    let mut v2 = tr.coupling / free_q2;
    let mut damping = 1.0;
    let mut last_res = f64::INFINITY;
    for it in 1..=ASSIGN_MAX_ITER {
        let (_, q2) = q2_of(v2)?;
        let next = tr.coupling / q2;
        let res = (next - v2).abs() / v2;
        if res < ASSIGN_TOL {
            let (w0, q2) = q2_of(next)?;
            return Ok(SurrogateAssignment {
                transition: tr.clone(),
                omega0: w0,
                v0: next.sqrt(),
                converged: true,
                iterations: it,
                coupling_residual: (next * q2 - tr.coupling).abs() / tr.coupling,
                omega_renormalized: systems::renormalized_frequency(w0, next.sqrt(), lambda, hbar),
            });
        }
        if res > last_res {
            damping = 0.5;
        }
        last_res = res;
        v2 += damping * (next - v2);
    }
    Err(Error::NoConvergence { iterations: ASSIGN_MAX_ITER, residual: last_res })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestQuantity {
    Moments,
    Spectra,
    Both,
}

impl TestQuantity {
    fn moments(self) -> bool {
        matches!(self, TestQuantity::Moments | TestQuantity::Both)
    }
    fn spectra(self) -> bool {
        matches!(self, TestQuantity::Spectra | TestQuantity::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTestOptions {
    pub what: TestQuantity,
    /// Propagation time to the surrogate steady state.
    pub t_f: f64,
    /// Length of the correlation-function series.
    pub t_max: f64,
    /// Frequency grid for spectral errors (trapezoidal integration).
    pub omegas: Vec<f64>,
    /// 𝓕[L_mod](Ω) below −fl_tol flags a weak-coupling instability risk.
    pub fl_tol: f64,
}

impl Default for SurrogateTestOptions {
    fn default() -> Self {
        let omegas = (0..=800).map(|i| -4.0 + 0.01 * i as f64).collect();
        SurrogateTestOptions { what: TestQuantity::Moments, t_f: 300.0, t_max: 100.0, omegas, fl_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub omega: f64,
    pub weight: f64,
    pub omega0: f64,
    pub v0: f64,
    pub model_spectrum_at_omega: f64,
    pub weak_coupling_risk: bool,
    pub unstable: Option<String>,
    pub q2_exact: Option<f64>,
    pub q2_model: Option<f64>,
    pub p2_exact: Option<f64>,
    pub p2_model: Option<f64>,
    pub delta_q2: Option<f64>,
    pub delta_p2: Option<f64>,
    pub delta_spectrum_qq: Option<f64>,
    pub delta_spectrum_pp: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTotals {
    pub q2: Option<f64>,
    pub p2: Option<f64>,
    pub spectrum_qq: Option<f64>,
    pub spectrum_pp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub transitions: Vec<TransitionReport>,
    /// Σ_Ω p(Ω)δ_Ω over the stable transitions.
    pub totals: ErrorTotals,
    pub any_unstable: bool,
    pub any_weak_coupling_risk: bool,
}

fn rel(exact: f64, model: f64) -> f64 {
    (exact - model).abs() / exact.abs()
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}

fn spectrum_error(bath: &BathSpec, osc: &OscillatorParams, which: Correlation, omegas: &[f64], model: &[f64]) -> Result<f64> {
    let mut xs = Vec::with_capacity(omegas.len());
    let mut diff = Vec::with_capacity(omegas.len());
    let mut base = Vec::with_capacity(omegas.len());
    for (&w, &m) in omegas.iter().zip(model) {
        match spectral_correlation(bath, osc, which, w) {
            Ok(v) => {
                xs.push(w);
                diff.push((v - m).abs());
                base.push(v.abs());
            }
            Err(Error::Pole(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let den = trapezoid(&xs, &base);
    if !(den > 0.0) {
        return Err(Error::Precondition("frequency grid carries no spectral weight".into()));
    }
    Ok(trapezoid(&xs, &diff) / den)
}

fn test_one(a: &SurrogateAssignment, bath: &BathSpec, model: &ExponentialBCF, lambda: f64, opts: &SurrogateTestOptions) -> Result<TransitionReport> {
    let osc = a.oscillator();
    let fl = model.eval_freq(a.transition.omega);
    let mut rep = TransitionReport {
        omega: a.transition.omega,
        weight: a.transition.weight,
        omega0: a.omega0,
        v0: a.v0,
        model_spectrum_at_omega: fl,
        weak_coupling_risk: fl < -opts.fl_tol,
        unstable: None,
        q2_exact: None,
        q2_model: None,
        p2_exact: None,
        p2_model: None,
        delta_q2: None,
        delta_p2: None,
        delta_spectrum_qq: None,
        delta_spectrum_pp: None,
    };
    let gen = build_moment_generator(&osc, model, lambda, bath.hbar)?;
    if let Err(e) = gen.check_stable() {
        rep.unstable = Some(e.to_string());
        return Ok(rep);
    }
    if opts.what.moments() {
        let s = gen.propagate(&gen.vacuum(), opts.t_f)?;
        let (q2m, p2m) = (gen.q2(&s), gen.p2(&s));
        let q2 = eq_moment(bath, &osc, Moment::Q2, MatsubaraSumSpec::default())?;
        let p2 = eq_moment(bath, &osc, Moment::P2, MatsubaraSumSpec::default())?;
        rep.q2_exact = Some(q2);
        rep.q2_model = Some(q2m);
        rep.p2_exact = Some(p2);
        rep.p2_model = Some(p2m);
        rep.delta_q2 = Some(rel(q2, q2m));
        rep.delta_p2 = Some(rel(p2, p2m));
    }
    if opts.what.spectra() {
        for (obs, corr) in [(MomentObservable::Q, Correlation::Qq), (MomentObservable::P, Correlation::Pp)] {
            let series = correlation_mod(&gen, obs, opts.t_f, opts.t_max, &opts.omegas)?;
            let d = spectrum_error(bath, &osc, corr, &opts.omegas, &series.spectrum)?;
            match corr {
                Correlation::Qq => rep.delta_spectrum_qq = Some(d),
                Correlation::Pp => rep.delta_spectrum_pp = Some(d),
            }
        }
    }
    Ok(rep)
}

/// Runs every surrogate against the exact solution and aggregates
/// δ_HO = Σ p(Ω)δ_Ω, leaving unstable surrogates out of the totals.
pub fn run_surrogate_test(
    assignments: &[SurrogateAssignment],
    bath: &BathSpec,
    model: &ExponentialBCF,
    opts: &SurrogateTestOptions,
) -> Result<TestReport> {
    if let Some(a) = assignments.iter().find(|a| !a.converged) {
        return Err(Error::Precondition(format!("assignment at Omega = {} did not converge", a.transition.omega)));
    }
    model.check_invariants()?;
    let lambda = bath.counter_lambda()?;
    let transitions: Vec<TransitionReport> =
        assignments.par_iter().map(|a| test_one(a, bath, model, lambda, opts)).collect::<Result<_>>()?;
    let total = |f: fn(&TransitionReport) -> Option<f64>| -> Option<f64> {
        let stable: Vec<&TransitionReport> = transitions.iter().filter(|t| t.unstable.is_none()).collect();
        if stable.is_empty() {
            return None;
        }
        stable.iter().map(|t| f(t).map(|d| t.weight * d)).sum()
    };
    let totals = ErrorTotals {
        q2: total(|t| t.delta_q2),
        p2: total(|t| t.delta_p2),
        spectrum_qq: total(|t| t.delta_spectrum_qq),
        spectrum_pp: total(|t| t.delta_spectrum_pp),
    };
    for t in transitions.iter().filter(|t| t.unstable.is_some()) {
        log::warn!("surrogate at Omega = {:.5} is unstable and left out of the totals", t.omega);
    }
    Ok(TestReport {
        any_unstable: transitions.iter().any(|t| t.unstable.is_some()),
        any_weak_coupling_risk: transitions.iter().any(|t| t.weak_coupling_risk),
        transitions,
        totals,
    })
}

/// Decomposes, assigns every retained transition and returns the assignments.
pub fn assign_all(sys: &SystemSpec, bath: &BathSpec, opts: DecomposeOptions) -> Result<(Decomposition, Vec<SurrogateAssignment>)> {
    let lambda = bath.counter_lambda()?;
    let dec = decompose_transitions(sys, bath.beta, lambda, opts)?;
    let assignments = dec.retained.par_iter().map(|t| assign_surrogate(t, lambda, bath)).collect::<Result<Vec<_>>>()?;
    Ok((dec, assignments))
}

/// A steady-state observable of the target system.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    Expectation(CMat),
    /// ⟨AB⟩ − ⟨A⟩⟨B⟩.
    Covariance(CMat, CMat),
}

impl Observable {
    pub fn evaluate(&self, rho: &CMat) -> f64 {
        let ev = |op: &CMat| linalg::trace(&(op * rho));
        match self {
            Observable::Expectation(a) => ev(a).re,
            Observable::Covariance(a, b) => (ev(&(a * b)) - ev(a) * ev(b)).re,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SteadyMethod {
    /// Solve 𝓛x = 0 with a trace constraint.
    Solve(SteadyOptions),
    /// RK4 from the Gibbs state of H_S,eff to t_f.
    Propagate { dt: f64, t_f: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceParams {
    pub depth: usize,
    pub method: SteadyMethod,
    /// Convergence is measured against the row with this K.
    pub k_ref: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub values: Vec<Option<f64>>,
    pub deltas: Vec<Option<f64>>,
    pub delta_ho_q2: Option<f64>,
    pub delta_ho_p2: Option<f64>,
    pub failure: Option<String>,
    pub trace: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub observables: Vec<String>,
    pub k_ref: usize,
    pub rows: Vec<ConvergenceRow>,
}

/// Steady-state ρ_S of the target system for one model.
pub fn target_steady_state(sys: &SystemSpec, bath: &BathSpec, model: &ExponentialBCF, depth: usize, method: &SteadyMethod) -> Result<CMat> {
    let lambda = bath.counter_lambda()?;
    let heom = GenericHeom::new(&sys.with_counter_term(lambda), model, depth, bath.hbar)?;
    let start = heom.initial(&gibbs_state(&sys.h_eff(lambda), bath.beta))?;
    let state = match method {
        SteadyMethod::Solve(o) => heom.steady_state(&start, o)?.0,
        SteadyMethod::Propagate { dt, t_f } => rk4_propagate(&heom, &start, *dt, *t_f, usize::MAX, |_, _| {})?.0,
    };
    Ok(heom.rho0(&state))
}

/// δ⟨O⟩ = |⟨O⟩_{K_ref} − ⟨O⟩_K|/|⟨O⟩_{K_ref}| for each model, side by side
/// with the surrogate totals for the same model when `surrogates` is given.
pub fn convergence_report(
    sys: &SystemSpec,
    bath: &BathSpec,
    models: &[(usize, ExponentialBCF)],
    observables: &[(String, Observable)],
    params: &ConvergenceParams,
    surrogates: Option<(&[SurrogateAssignment], &SurrogateTestOptions)>,
) -> Result<ConvergenceTable> {
    if !models.iter().any(|(k, _)| *k == params.k_ref) {
        return Err(Error::Precondition(format!("no model with the reference K = {}", params.k_ref)));
    }
    let mut rows = Vec::with_capacity(models.len());
    for (k, model) in models {
        let mut row = ConvergenceRow {
            k: *k,
            values: vec![None; observables.len()],
            deltas: vec![None; observables.len()],
            delta_ho_q2: None,
            delta_ho_p2: None,
            failure: None,
            trace: None,
        };
        match target_steady_state(sys, bath, model, params.depth, &params.method) {
            Ok(rho) => {
                row.trace = Some(linalg::trace(&rho).re);
                row.values = observables.iter().map(|(_, o)| Some(o.evaluate(&rho))).collect();
            }
            Err(e) => {
                log::warn!("K = {k}: {e}");
                row.failure = Some(e.to_string());
            }
        }
        if let Some((assignments, opts)) = surrogates {
            match run_surrogate_test(assignments, bath, model, opts) {
                Ok(r) => {
                    row.delta_ho_q2 = r.totals.q2;
                    row.delta_ho_p2 = r.totals.p2;
                    if r.any_unstable && row.failure.is_none() {
                        row.failure = Some("unstable surrogate".into());
                    }
                }
                Err(e) => row.failure = Some(e.to_string()),
            }
        }
        rows.push(row);
    }
    let reference: Vec<Option<f64>> =
        rows.iter().find(|r| r.k == params.k_ref).map(|r| r.values.clone()).expect("reference row exists");
    for row in &mut rows {
        row.deltas = row
            .values
            .iter()
            .zip(&reference)
            .map(|(v, r)| match (v, r) {
                (Some(v), Some(r)) => Some((r - v).abs() / r.abs()),
                _ => None,
            })
            .collect();
    }
    Ok(ConvergenceTable { observables: observables.iter().map(|(n, _)| n.clone()).collect(), k_ref: params.k_ref, rows })
}

/// First K of an ascending sweep after which the metric stays below `level`.
pub fn crossing_k(ks: &[usize], metric: &[Option<f64>], level: f64) -> Option<usize> {
    let mut out = None;
    for (k, m) in ks.iter().zip(metric) {
        match m {
            Some(v) if *v < level => {
                if out.is_none() {
                    out = Some(*k);
                }
            }
            _ => out = None,
        }
    }
    out
}

/// ⟨σ̄ᵢ¹σ̄ᵢ²⟩ for i = x, y, z on the two-spin system.
pub fn two_spin_correlators() -> Result<Vec<(String, Observable)>> {
    ['x', 'y', 'z']
        .iter()
        .map(|&p| {
            Ok((
                format!("s{p}s{p}"),
                Observable::Covariance(systems::two_spin_pauli(p, 0)?, systems::two_spin_pauli(p, 1)?),
            ))
        })
        .collect()
}
