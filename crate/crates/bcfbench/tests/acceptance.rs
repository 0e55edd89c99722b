//! Acceptance criteria, one line each. Failing criteria are reported but do
//! not fail the run unless BCFBENCH_ACCEPTANCE_STRICT=1 is set.

use bcfbench::exact::{
    self, transient_q2_series, Correlation, InitialMoments, MatsubaraSumSpec, Moment, OscillatorParams, TRANSIENT_DT,
};
use bcfbench::fitting::grid::Domain;
use bcfbench::fitting::{
    aaa_fit, delta_l, esprit_fit, ip_to_exponential, time_grid, ExpTerm, ExponentialBCF, IpParameters, SampleGrid,
};
use bcfbench::heom::{
    build_moment_generator, build_moment_generator_with_depth, gibbs_state, steady_moments, transient_moments,
    GenericHeom, SteadyOptions,
};
use bcfbench::linalg::{expm, CMat};
use bcfbench::testing::{
    self, systems, ConvergenceParams, DecomposeOptions, SteadyMethod, SurrogateAssignment, SurrogateTestOptions,
};
use bcfbench::{BathSpec, Beta, Complex64, MtTerm, SpectralDensity};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use std::time::{Duration, Instant};

type Check = Result<String, String>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn e<E: std::fmt::Display>(x: E) -> String {
    x.to_string()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn ohmic(s: f64, alpha: f64, wc: f64, beta: Beta) -> BathSpec {
    BathSpec::new(SpectralDensity::ohmic(s, alpha, wc), beta)
}

/// Pairs each expected (Ω, ω₀, v₀, p) row with the unused assignment of
/// nearest Ω and returns the largest entry deviation per row.
fn match_rows(expected: &[[f64; 4]], got: &[SurrogateAssignment]) -> Vec<f64> {
    let mut used = vec![false; got.len()];
    expected
        .iter()
        .map(|row| {
            let best = (0..got.len())
                .filter(|&i| !used[i])
                .min_by(|&a, &b| {
                    (got[a].transition.omega - row[0]).abs().total_cmp(&(got[b].transition.omega - row[0]).abs())
                });
            match best {
                Some(i) => {
                    used[i] = true;
                    let a = &got[i];
                    let vals = [a.transition.omega, a.omega0, a.v0, a.transition.weight];
                    vals.iter().zip(row).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
                }
                None => f64::INFINITY,
            }
        })
        .collect()
}

fn two_spin_surrogates() -> Check {
    let sys = systems::two_spin(1.2, 0.8, 0.4).map_err(e)?;
    let bath = ohmic(1.0, 0.2, 10.0, Beta::Finite(1.0));
    let (_, got) = testing::assign_all(&sys, &bath, DecomposeOptions::default()).map_err(e)?;
    let expected = [[0.630, 0.306, 0.704, 0.647], [1.524, 0.933, 0.883, 0.353]];
    ensure(got.len() == 2, format!("{} transitions retained, expected 2", got.len()))?;
    let dev = match_rows(&expected, &got).into_iter().fold(0.0, f64::max);
    let rows: Vec<String> = got
        .iter()
        .map(|a| format!("({:.5}, {:.5}, {:.5}, {:.5})", a.transition.omega, a.omega0, a.v0, a.transition.weight))
        .collect();
    ensure(dev <= 1e-3, format!("max deviation {dev:.2e} > 1e-3: {}", rows.join(" ")))?;
    Ok(format!("max deviation {dev:.1e}: {}", rows.join(" ")))
}

fn transmon_surrogates() -> Check {
    let tr = systems::transmon_resonator(1.0, 2.0, 0.4, 0.15, 5).map_err(e)?;
    let bath = ohmic(1.0, 0.1, 5.0, Beta::Infinite);
    let (dec, got) = testing::assign_all(&tr.system, &bath, DecomposeOptions::default()).map_err(e)?;
    let expected = [
        [2.08500, 1.68817, 1.33186, 0.70446],
        [0.76310, 0.65289, 0.69141, 0.19645],
        [2.09154, 2.07711, 0.24069, 0.02418],
        [2.09547, 2.08149, 0.23691, 0.02343],
        [2.08544, 2.07598, 0.19475, 0.01584],
        [2.07421, 2.06673, 0.17314, 0.01252],
        [2.09190, 2.08759, 0.13136, 0.00721],
        [0.76096, 0.75719, 0.12301, 0.00633],
        [0.78129, 0.77787, 0.11712, 0.00576],
        [0.74326, 0.74096, 0.09604, 0.00385],
    ];
    let devs = match_rows(&expected, &got);
    let within = devs.iter().filter(|d| **d <= 1e-4).count();
    let worst = devs.iter().cloned().fold(0.0, f64::max);
    let detail = format!(
        "{within}/10 rows within 1e-4 (worst {worst:.1e}); {} transitions retained, weight {:.5}",
        got.len(),
        dec.retained_weight()
    );
    ensure(within == 10, detail.clone())?;
    Ok(detail)
}

fn ohmic_fit_and_propagate() -> Check {
    let bath = ohmic(1.0, 1.0, 10.0, Beta::Finite(1.0));
    let osc = OscillatorParams::new(1.0, 1.0).map_err(e)?;
    let model = esprit_fit(&time_grid(&bath, 0.01, 20.0).map_err(e)?, 14).map_err(e)?;
    let dl = delta_l(&bath, &model, 30.0).map_err(e)?;
    let lambda = bath.counter_lambda().map_err(e)?;
    let (q2, _) = steady_moments(&osc, &model, lambda, bath.hbar, 30.0).map_err(e)?;
    let exact = exact::eq_moment(&bath, &osc, Moment::Q2, MatsubaraSumSpec::default()).map_err(e)?;
    let dq = (q2 - exact).abs() / exact;
    let detail = format!("deltaL = {dl:.2e}, delta<q2> = {dq:.2e} = {:.1} deltaL", dq / dl);
    ensure(dl <= 1e-4 && dq <= 200.0 * dl, detail.clone())?;
    Ok(detail)
}

fn random_stable_model(rng: &mut StdRng, pairs: usize, osc: &OscillatorParams) -> ExponentialBCF {
    loop {
        let mut terms = Vec::new();
        for _ in 0..pairs {
            let z = c(rng.random_range(0.3..2.0), rng.random_range(-2.0..2.0));
            for zz in [z, z.conj()] {
                terms.push(ExpTerm { d: c(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)), z: zz });
            }
        }
        let model = ExponentialBCF::new(terms).unwrap();
        let stable = build_moment_generator_with_depth(osc, &model, 0.2, 1.0, 4).is_ok_and(|g| g.check_stable().is_ok());
        if stable {
            return model;
        }
    }
}

fn moment_truncation() -> Check {
    let mut rng = StdRng::seed_from_u64(2024);
    let osc = OscillatorParams::new(1.0, 0.6).map_err(e)?;
    let mut worst: f64 = 0.0;
    for k in [2, 4] {
        for _ in 0..3 {
            let model = random_stable_model(&mut rng, k / 2, &osc);
            let g2 = build_moment_generator_with_depth(&osc, &model, 0.2, 1.0, 2).map_err(e)?;
            let g4 = build_moment_generator_with_depth(&osc, &model, 0.2, 1.0, 4).map_err(e)?;
            let s2 = g2.propagate(&g2.vacuum(), 5.0).map_err(e)?;
            let s4 = g4.propagate(&g4.vacuum(), 5.0).map_err(e)?;
            for (a, b) in [(g2.q2(&s2), g4.q2(&s4)), (g2.p2(&s2), g4.p2(&s4))] {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    ensure(worst <= 1e-12, format!("max relative difference {worst:.2e}"))?;
    Ok(format!("max relative difference {worst:.1e} over 6 models"))
}

fn transient_oracle() -> Check {
    let bath = ohmic(1.0, 1.0, 10.0, Beta::Finite(1.0));
    let osc = OscillatorParams::new(1.0, 1.0).map_err(e)?;
    let grid = time_grid(&bath, 0.01, 20.0).map_err(e)?;
    let mut chosen = None;
    for k in (10..=24).step_by(2) {
        let Ok(m) = esprit_fit(&grid, k) else { continue };
        let dl = delta_l(&bath, &m, 30.0).map_err(e)?;
        if dl <= 1e-5 {
            chosen = Some((k, m, dl));
            break;
        }
    }
    let (k, model, dl) = chosen.ok_or("no ESPRIT model with deltaL <= 1e-5 for K <= 24")?;
    let lambda = bath.counter_lambda().map_err(e)?;
    let gen = build_moment_generator(&osc, &model, lambda, bath.hbar).map_err(e)?;
    let times = [1.0, 2.0, 5.0];
    let heom: Vec<f64> = transient_moments(&gen, &gen.vacuum(), &times).map_err(e)?.iter().map(|x| x.0).collect();
    let oracle = transient_q2_series(&bath, &osc, InitialMoments::vacuum(), &times, TRANSIENT_DT).map_err(e)?;
    let diff = heom.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let detail = format!("K = {k} (deltaL {dl:.1e}), max |diff| {diff:.2e} at t = 1, 2, 5");
    ensure(diff <= 1e-4, detail.clone())?;
    Ok(detail)
}

fn exact_self_consistency() -> Check {
    let bath = ohmic(1.0, 1.0, 10.0, Beta::Finite(1.0));
    let mt = BathSpec::new(
        SpectralDensity::MeierTannor {
            terms: vec![MtTerm { c: c(0.7, 0.0), mu: c(0.8, 2.0) }, MtTerm { c: c(0.3, 0.0), mu: c(1.5, 0.5) }],
        },
        Beta::Finite(1.0),
    );
    let mut eta_dev: f64 = 0.0;
    for b in [&bath, &mt] {
        for s in [c(3.0, 0.0), c(0.0, -2.0), c(0.0, 0.4), c(0.5, 2.0)] {
            let a = b.eta_hat(s).map_err(e)?;
            let q = b.sd.eta_hat_quadrature(s).map_err(e)?;
            eta_dev = eta_dev.max((a - q).norm());
        }
    }
    let osc = OscillatorParams::new(1.0, 1.0).map_err(e)?;
    let w = 1.3;
    let pos = exact::spectral_correlation(&bath, &osc, Correlation::Qq, w).map_err(e)?;
    let neg = exact::spectral_correlation(&bath, &osc, Correlation::Qq, -w).map_err(e)?;
    let fdt = (neg - (-w).exp() * pos).abs();
    let free = OscillatorParams::new(1.0, 1e-6).map_err(e)?;
    let q2 = exact::eq_moment(&bath, &free, Moment::Q2, MatsubaraSumSpec::default()).map_err(e)?;
    let free_dev = (q2 - 0.5 / (0.5f64).tanh()).abs();
    let detail = format!("eta branches {eta_dev:.1e}, FDT {fdt:.1e}, free limit {free_dev:.1e}");
    ensure(eta_dev <= 1e-8 && fdt <= 1e-10 && free_dev <= 1e-6, detail.clone())?;
    Ok(detail)
}

fn subohmic_slope() -> Check {
    let bath = ohmic(0.5, 1.0, 10.0, Beta::Finite(10.0));
    let osc = OscillatorParams::new(1.0, 1.0).map_err(e)?;
    // least-squares slope over nine log-spaced points
    let xs: Vec<f64> = (0..9).map(|i| -6.0 + 0.25 * i as f64).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| exact::spectral_correlation(&bath, &osc, Correlation::Qq, 10f64.powf(*x)).map(f64::log10))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    ensure((slope + 0.5).abs() <= 0.05, format!("slope {slope:.4}"))?;
    Ok(format!("slope {slope:.4}"))
}

fn max_term_error(model: &ExponentialBCF, truth: &[(Complex64, Complex64)]) -> f64 {
    let active: Vec<&ExpTerm> = model.terms.iter().filter(|t| t.d.norm() > 1e-12).collect();
    if active.len() != truth.len() {
        return f64::INFINITY;
    }
    truth
        .iter()
        .map(|(d, z)| {
            let best = active.iter().min_by(|a, b| (a.z - z).norm().total_cmp(&(b.z - z).norm())).unwrap();
            (best.z - z).norm().max((best.d - d).norm())
        })
        .fold(0.0, f64::max)
}

fn fitting_oracles() -> Check {
    let truth = [
        (c(0.8, 0.3), c(0.5, 2.0)),
        (c(0.6, -0.2), c(0.5, -2.0)),
        (c(1.5, 0.0), c(3.0, 0.0)),
        (c(0.1, 0.05), c(0.2, 0.0)),
    ];
    let pts: Vec<f64> = (0..1500).map(|i| i as f64 * 0.01).collect();
    let vals = pts.iter().map(|&t| truth.iter().map(|(d, z)| d * (-z * t).exp()).sum()).collect();
    let esprit = esprit_fit(&SampleGrid::new(Domain::Time, pts, vals).map_err(e)?, 4).map_err(e)?;
    let esprit_err = max_term_error(&esprit, &truth);

    let poles = [
        (c(1.0, 0.4), c(0.7, 2.0)),
        (c(1.0, -0.4), c(0.7, -2.0)),
        (c(0.5, 0.1), c(0.3, 5.0)),
        (c(0.5, -0.1), c(0.3, -5.0)),
    ];
    let target = ExponentialBCF::new(poles.iter().map(|(d, z)| ExpTerm { d: *d, z: *z }).collect()).map_err(e)?;
    let w: Vec<f64> = (0..801).map(|i| -40.0 + 0.1 * i as f64).collect();
    let f = w.iter().map(|&x| c(target.eval_freq(x), 0.0)).collect();
    let aaa = aaa_fit(&SampleGrid::new(Domain::Frequency, w, f).map_err(e)?, 4, 1e-13).map_err(e)?;
    let aaa_err = max_term_error(&aaa, &poles);

    let mut rng = StdRng::seed_from_u64(11);
    let q = 3;
    let mut om = vec![vec![0.0; q]; q];
    for i in 0..q {
        for j in i..q {
            let v = if i == j { rng.random_range(0.5..3.0) } else { rng.random_range(-0.5..0.5) };
            om[i][j] = v;
            om[j][i] = v;
        }
    }
    let ip = IpParameters {
        omega_matrix: om,
        kappa: (0..q).map(|_| rng.random_range(0.2..1.2)).collect(),
        g: (0..q).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let hbar = 1.0;
    let model = ip_to_exponential(&ip, hbar).map_err(e)?;
    let g = CMat::from_fn(q, 1, |i, _| c(ip.g[i], 0.0));
    let mut ip_err: f64 = 0.0;
    for _ in 0..20 {
        let t = rng.random_range(0.0..10.0);
        let direct = (g.transpose() * expm(&(ip.omega_tilde() * c(0.0, -t))) * &g)[(0, 0)] / hbar;
        ip_err = ip_err.max((model.eval(t) - direct).norm());
    }
    let detail = format!("ESPRIT {esprit_err:.1e}, AAA {aaa_err:.1e}, IP {ip_err:.1e}");
    ensure(esprit_err <= 1e-8 && aaa_err <= 1e-8 && ip_err <= 1e-12, detail.clone())?;
    Ok(detail)
}

fn decreasing(v: &[Option<f64>]) -> bool {
    v.windows(2).all(|w| matches!(w, [Some(a), Some(b)] if b < a))
}

/// Least-squares slope of log10(metric) against K.
fn log_trend(ks: &[usize], v: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        ks.iter().zip(v).filter_map(|(k, x)| x.filter(|x| *x > 0.0).map(|x| (*k as f64, x.log10()))).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    Some(pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>())
}

fn two_spin_sweep() -> Check {
    let sys = systems::two_spin(1.2, 0.8, 0.4).map_err(e)?;
    let bath = ohmic(1.0, 0.2, 10.0, Beta::Finite(1.0));
    let grid = time_grid(&bath, 0.01, 20.0).map_err(e)?;
    let ks = [6, 8, 10, 12, 14, 16];
    let models: Vec<(usize, ExponentialBCF)> =
        ks.iter().map(|&k| esprit_fit(&grid, k).map(|m| (k, m))).collect::<Result<_, _>>().map_err(e)?;
    let (_, assignments) = testing::assign_all(&sys, &bath, DecomposeOptions::default()).map_err(e)?;
    let observables = testing::two_spin_correlators().map_err(e)?;
    let params = ConvergenceParams { depth: 6, method: SteadyMethod::Solve(SteadyOptions::default()), k_ref: 16 };
    let opts = SurrogateTestOptions::default();
    let table = testing::convergence_report(&sys, &bath, &models, &observables, &params, Some((&assignments, &opts)))
        .map_err(e)?;
    if let Some(r) = table.rows.iter().find(|r| r.failure.is_some()) {
        return Err(format!("K = {}: {}", r.k, r.failure.as_deref().unwrap_or("")));
    }
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, f) in [
        ("dHO<q2>", (|r: &testing::ConvergenceRow| r.delta_ho_q2) as fn(&testing::ConvergenceRow) -> Option<f64>),
        ("dHO<p2>", |r: &testing::ConvergenceRow| r.delta_ho_p2),
    ] {
        let v: Vec<Option<f64>> = table.rows.iter().map(f).collect();
        let cross = testing::crossing_k(&ks, &v, 0.01);
        let mono = decreasing(&v);
        ok &= mono && cross.is_some_and(|k| k.abs_diff(10) <= 2);
        parts.push(format!("{name} cross {cross:?} monotone {mono}"));
    }
    // the reference row is zero by construction
    let ks_obs = &ks[..ks.len() - 1];
    for (i, name) in table.observables.iter().enumerate() {
        let v: Vec<Option<f64>> = table.rows[..ks_obs.len()].iter().map(|r| r.deltas[i]).collect();
        let cross = testing::crossing_k(ks_obs, &v, 0.01);
        let trend = log_trend(ks_obs, &v);
        let strict = decreasing(&v);
        ok &= cross.is_some_and(|k| k.abs_diff(10) <= 2) && trend.is_some_and(|s| s < 0.0);
        parts.push(format!(
            "d<{name}> cross {cross:?} log-slope {:.2} strictly monotone {strict}",
            trend.unwrap_or(f64::NAN)
        ));
    }
    let detail = parts.join("; ");
    ensure(ok, detail.clone())?;
    Ok(detail)
}

fn transmon_run() -> Check {
    let tr = systems::transmon_resonator(1.0, 2.0, 0.4, 0.15, 5).map_err(e)?;
    let bath = ohmic(1.0, 0.1, 5.0, Beta::Infinite);
    let model = esprit_fit(&time_grid(&bath, 0.02, 40.0).map_err(e)?, 8).map_err(e)?;
    let min_fl = (0..=2000).map(|i| model.eval_freq(-10.0 + 0.01 * i as f64)).fold(f64::INFINITY, f64::min);
    let lambda = bath.counter_lambda().map_err(e)?;
    let heom = GenericHeom::new(&tr.system.with_counter_term(lambda), &model, 4, bath.hbar).map_err(e)?;
    let start = heom.initial(&gibbs_state(&tr.system.h_eff(lambda), bath.beta)).map_err(e)?;
    let (state, rep) = heom.steady_state(&start, &SteadyOptions::default()).map_err(e)?;
    let trace = heom.trace(&state);
    let top_t = heom.expectation(&state, &tr.top_t).re;
    let top_r = heom.expectation(&state, &tr.top_r).re;
    let order = |p: f64| (1e-5..=1e-3).contains(&p.abs());
    let detail = format!(
        "{} GMRES iterations, residual {:.1e}, |tr - 1| = {:.1e}, top populations t {top_t:.2e} r {top_r:.2e}, \
         min F[L_mod] {min_fl:.1e}",
        rep.iterations,
        rep.residual,
        (trace - 1.0).norm()
    );
    ensure((trace - 1.0).norm() <= 1e-8 && order(top_t) && order(top_r), detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 10] = [
        ("1 Two-spin surrogate parameters", Duration::from_secs(1), two_spin_surrogates),
        ("2 Transmon surrogate parameters", Duration::from_secs(10), transmon_surrogates),
        ("3 Ohmic fit and moment propagation", Duration::from_secs(30), ohmic_fit_and_propagate),
        ("4 Moment truncation exactness", Duration::from_secs(5), moment_truncation),
        ("5 Transient oracle", Duration::from_secs(60), transient_oracle),
        ("6 Exact-module self-consistency", Duration::from_secs(10), exact_self_consistency),
        ("7 Sub-Ohmic divergence", Duration::from_secs(30), subohmic_slope),
        ("8 Fitting oracles", Duration::from_secs(10), fitting_oracles),
        ("9 Two-spin K sweep", Duration::from_secs(600), two_spin_sweep),
        ("10 Transmon K=8, H=4 run", Duration::from_secs(600), transmon_run),
    ];
    let mut passed = 0;
    for (name, budget, check) in criteria {
        let t0 = Instant::now();
        let out = check();
        let dt = t0.elapsed();
        let (ok, detail) = match out {
            Ok(d) if dt <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {:.0} s budget", budget.as_secs_f64())),
            Err(d) => (false, d),
        };
        passed += ok as usize;
        println!(
            "[{}] {name} ({:.2} s / {:.0} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            budget.as_secs_f64()
        );
    }
    println!("{passed}/10 acceptance criteria passed");
    if passed < 10 && std::env::var("BCFBENCH_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
