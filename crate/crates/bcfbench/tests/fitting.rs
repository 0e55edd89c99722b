use bcfbench::bath::{BathSpec, Beta, MtTerm, SpectralDensity};
use bcfbench::fitting::{
    self, aaa_fit, delta_l, esprit_fit, frequency_grid, gmt_fit, ip_to_exponential, subohmic_frequency_grid,
    time_grid, EspritMode, EspritProblem, ExpTerm, ExponentialBCF, IpParameters, SampleGrid,
};
use bcfbench::fitting::grid::Domain;
use bcfbench::linalg::{expm, CMat};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn synthetic_time_grid(terms: &[(Complex64, Complex64)], dt: f64, n: usize) -> SampleGrid {
    let points: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let values = points.iter().map(|&t| terms.iter().map(|(d, z)| d * (-z * t).exp()).sum()).collect();
    SampleGrid::new(Domain::Time, points, values).unwrap()
}

fn match_terms(model: &ExponentialBCF, expected: &[(Complex64, Complex64)], tol: f64) {
    let active: Vec<&ExpTerm> = model.terms.iter().filter(|t| t.d.norm() > 1e-12).collect();
    assert_eq!(active.len(), expected.len(), "{:?}", model.terms);
    for (d, z) in expected {
        let best = active.iter().min_by(|a, b| (a.z - z).norm().total_cmp(&(b.z - z).norm())).unwrap();
        assert!((best.z - z).norm() < tol, "rate {z} recovered as {}", best.z);
        assert!((best.d - d).norm() < tol, "amplitude {d} recovered as {}", best.d);
    }
}

#[test]
fn esprit_recovers_conjugate_pair() {
    let truth = [(c(2.0, 0.0), c(1.0, 3.0)), (c(2.0, 0.0), c(1.0, -3.0))];
    let g = synthetic_time_grid(&truth, 0.01, 2000);
    let m = esprit_fit(&g, 2).unwrap();
    m.check_invariants().unwrap();
    match_terms(&m, &truth, 1e-10);
}

#[test]
fn esprit_recovers_four_terms() {
    let truth = [
        (c(0.8, 0.3), c(0.5, 2.0)),
        (c(0.6, -0.2), c(0.5, -2.0)),
        (c(1.5, 0.0), c(3.0, 0.0)),
        (c(0.1, 0.05), c(0.2, 0.0)),
    ];
    let g = synthetic_time_grid(&truth, 0.01, 1500);
    match_terms(&esprit_fit(&g, 4).unwrap(), &truth, 1e-8);
    // the complex variant sees the same rates
    let m = EspritProblem::new(&g, EspritMode::Complex).unwrap().fit(4).unwrap();
    match_terms(&m, &truth, 1e-8);
}

#[test]
fn esprit_zero_signal() {
    let g = synthetic_time_grid(&[], 0.01, 100);
    let m = esprit_fit(&g, 1).unwrap();
    assert_eq!(m.terms[0].d, c(0.0, 0.0));
    assert!(m.terms[0].z.re > 0.0);
}

#[test]
fn esprit_rank_deficiency() {
    let truth = [(c(1.0, 0.0), c(1.0, 0.0))];
    let g = synthetic_time_grid(&truth, 0.01, 400);
    assert!(matches!(esprit_fit(&g, 3), Err(bcfbench::Error::RankDeficient { .. })));
}

#[test]
fn esprit_rejects_uneven_grid() {
    let g = SampleGrid::new(Domain::Time, vec![0.0, 0.1, 0.3, 0.4, 0.7], vec![c(1.0, 0.0); 5]).unwrap();
    assert!(matches!(esprit_fit(&g, 1), Err(bcfbench::Error::Precondition(_))));
}

#[test]
fn esprit_ohmic_benchmark() {
    let bath = BathSpec::new(SpectralDensity::ohmic(1.0, 1.0, 10.0), Beta::Finite(1.0));
    let g = time_grid(&bath, 0.01, 20.0).unwrap();
    let m = esprit_fit(&g, 14).unwrap();
    m.check_invariants().unwrap();
    let dl = delta_l(&bath, &m, 30.0).unwrap();
    assert!(dl < 1e-4, "deltaL = {dl}");
}

#[test]
fn aaa_recovers_rational_target() {
    let model = ExponentialBCF::new(vec![
        ExpTerm { d: c(1.0, 0.4), z: c(0.7, 2.0) },
        ExpTerm { d: c(1.0, -0.4), z: c(0.7, -2.0) },
    ])
    .unwrap();
    let pts: Vec<f64> = (0..601).map(|i| -30.0 + 0.1 * i as f64).collect();
    let vals = pts.iter().map(|&w| c(model.eval_freq(w), 0.0)).collect();
    let g = SampleGrid::new(Domain::Frequency, pts, vals).unwrap();
    let fit = aaa_fit(&g, 2, 1e-13).unwrap();
    fit.check_invariants().unwrap();
    match_terms(&fit, &[(c(1.0, 0.4), c(0.7, 2.0)), (c(1.0, -0.4), c(0.7, -2.0))], 1e-10);
}

#[test]
fn aaa_symmetric_data_is_conjugate_closed() {
    let pts: Vec<f64> = (0..401).map(|i| -20.0 + 0.1 * i as f64).collect();
    let vals = pts.iter().map(|&w| c(1.0 / (1.0 + w * w) + 0.5 / (4.0 + (w * w - 9.0).powi(2) / 9.0), 0.0)).collect();
    let g = SampleGrid::new(Domain::Frequency, pts, vals).unwrap();
    let fit = aaa_fit(&g, 6, 1e-12).unwrap();
    fit.check_invariants().unwrap();
}

#[test]
fn aaa_ohmic_improves_with_k() {
    let bath = BathSpec::new(SpectralDensity::ohmic(1.0, 1.0, 10.0), Beta::Finite(1.0));
    let g = frequency_grid(&bath, 0.1, 300.0).unwrap();
    let mut prev = f64::INFINITY;
    for k in [10, 14, 18] {
        let m = aaa_fit(&g, k, 1e-13).unwrap();
        let dl = delta_l(&bath, &m, 30.0).unwrap();
        assert!(dl < prev, "K={k}: {dl} !< {prev}");
        prev = dl;
    }
}

#[test]
fn subohmic_grid_layout() {
    let bath = BathSpec::new(SpectralDensity::ohmic(0.5, 1.0, 10.0), Beta::Finite(10.0));
    let g = subohmic_frequency_grid(&bath, 300.0, 100, 50.0).unwrap();
    let r0 = g.omega_r0.unwrap();
    let l0 = g.omega_l0.unwrap();
    assert!((bath.bcf_freq(r0).unwrap() - 50.0).abs() < 1e-8);
    assert!((bath.bcf_freq(l0).unwrap() - 50.0).abs() < 1e-8);
    // same order of magnitude as the published endpoints
    assert!(r0 > 3e-4 && r0 < 5e-4, "{r0}");
    assert!(l0 < -3e-4 && l0 > -5e-4, "{l0}");
    let inner_r = g.grid.points.iter().filter(|&&w| w >= r0 && w <= 0.13).count();
    let inner_l = g.grid.points.iter().filter(|&&w| w <= l0 && w >= -0.1).count();
    assert_eq!(inner_r, 100);
    assert_eq!(inner_l, 100);
    assert!(g.grid.values.iter().all(|v| v.re <= 50.0 + 1e-8));
    assert!(!g.grid.points.iter().any(|&w| w > l0 && w < r0));
}

#[test]
fn gmt_exact_two_term_density() {
    let terms = vec![MtTerm { c: c(0.6, 0.0), mu: c(1.0, 2.5) }, MtTerm { c: c(0.3, 0.0), mu: c(0.5, 1.0) }];
    let bath = BathSpec::new(SpectralDensity::MeierTannor { terms: terms.clone() }, Beta::Finite(1.0));
    let rep = gmt_fit(&bath, 4, 3).unwrap();
    assert!(rep.step1_residual < 1e-10, "{}", rep.step1_residual);
    for t in &terms {
        assert!(rep.mt_terms.iter().any(|m| (m.mu - t.mu).norm() < 1e-8 && (m.c - t.c).norm() < 1e-8));
    }
    rep.model.check_invariants().unwrap();
    assert!(rep.step2_residual <= rep.step2_initial);
}

#[test]
fn gmt_ohmic_term_count() {
    let bath = BathSpec::new(SpectralDensity::ohmic(1.0, 1.0, 10.0), Beta::Finite(1.0));
    let rep = gmt_fit(&bath, 8, 4).unwrap();
    assert_eq!(rep.model.len(), 12);
    rep.model.check_invariants().unwrap();
    // the Matsubara terms can only improve Re L
    let step1_only = ExponentialBCF::new(
        bcfbench::fitting::gmt::mt_pole_terms(&rep.mt_terms, 1.0),
    )
    .unwrap();
    assert!(delta_l(&bath, &rep.model, 30.0).unwrap() <= delta_l(&bath, &step1_only, 30.0).unwrap());
}

#[test]
fn matsubara_guess_scales_with_temperature() {
    let terms = vec![MtTerm { c: c(0.6, 0.0), mu: c(1.0, 2.5) }];
    let a = 2.0 * bcfbench::bath::mt_i_j_imag(&terms, 2.0 * std::f64::consts::PI / 50.0) / 50.0;
    let b = 2.0 * bcfbench::bath::mt_i_j_imag(&terms, 2.0 * std::f64::consts::PI / 100.0) / 100.0;
    // ν_1 → 0 makes iJ(iν) linear in ν, so the amplitude drops like 1/β²; the prefactor alone is 1/β
    assert!(b.abs() < a.abs() / 2.0 * 1.01);
}

#[test]
fn ip_single_mode() {
    let ip = IpParameters { omega_matrix: vec![vec![2.0]], kappa: vec![0.5], g: vec![1.0] };
    let m = ip_to_exponential(&ip, 1.0).unwrap();
    assert_eq!(m.active_terms(), 1);
    let t = m.terms.iter().find(|t| t.d.norm() > 0.0).unwrap();
    assert!((t.d - c(1.0, 0.0)).norm() < 1e-14);
    assert!((t.z - c(0.25, 2.0)).norm() < 1e-14);
}

fn random_ip(seed: u64, q: usize) -> IpParameters {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut om = vec![vec![0.0; q]; q];
    for i in 0..q {
        for j in i..q {
            let v = if i == j { 2.0 + 2.0 * next() } else { 0.5 * next() };
            om[i][j] = v;
            om[j][i] = v;
        }
    }
    let kappa = (0..q).map(|_| 0.2 + next().abs()).collect();
    let g = (0..q).map(|_| next()).collect();
    IpParameters { omega_matrix: om, kappa, g }
}

#[test]
fn ip_matches_matrix_exponential() {
    let ip = random_ip(7, 2);
    let m = ip_to_exponential(&ip, 1.0).unwrap();
    let t = 0.7;
    let e = expm(&(ip.omega_tilde() * c(0.0, -t)));
    let g = CMat::from_fn(2, 1, |i, _| c(ip.g[i], 0.0));
    let direct = (g.transpose() * e * &g)[(0, 0)];
    assert!((m.eval(t) - direct).norm() < 1e-12);
    let sum: Complex64 = m.terms.iter().map(|t| t.d).sum();
    let gg: f64 = ip.g.iter().map(|x| x * x).sum();
    assert!((sum - c(gg, 0.0)).norm() < 1e-12);
}

#[test]
fn ip_spectrum_positive() {
    for seed in 0..5 {
        let ip = random_ip(seed, 3);
        let m = ip_to_exponential(&ip, 1.0).unwrap();
        let min = (0..4001).map(|i| m.eval_freq(-20.0 + 0.01 * i as f64)).fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "seed {seed}: {min}");
    }
}

#[test]
fn delta_l_properties() {
    let terms = vec![MtTerm { c: c(0.6, 0.0), mu: c(1.0, 2.5) }];
    let bath = BathSpec::new(SpectralDensity::MeierTannor { terms }, Beta::Finite(1.0));
    let g = time_grid(&bath, 0.01, 20.0).unwrap();
    let m = esprit_fit(&g, 12).unwrap();
    let base = delta_l(&bath, &m, 20.0).unwrap();
    let mut doubled = m.clone();
    for t in &mut doubled.terms {
        t.d *= 2.0;
    }
    assert!(delta_l(&bath, &doubled, 20.0).unwrap() > base);
    let none = fitting::delta_l_from_samples(&[c(1.0, 0.0); 5], &ExponentialBCF::empty(), 0.1);
    assert!((none - 1.0).abs() < 1e-14);
}
