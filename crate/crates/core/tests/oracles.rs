//! Library results checked against independent reference computations.

mod support;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinsweep::cavity::{s21, s21_resonance, CavityMode, SpinBath};
use spinsweep::config::Config;
use spinsweep::dynamics::{eigen_rates, propagate, rate_matrix, LambdaSystem, PropagationMethod};
use spinsweep::ensemble::lz_probability_from_coupling;
use spinsweep::spinham::eigensystem;
use support::{expm_series, jacobi_eigenvalues, lz_oracle, real_embedding};

#[test]
fn hamiltonian_spectrum_matches_jacobi() {
    let sys = Config::default_gd_yvo4().spin_system().unwrap();
    for b in [0.0, 13.0, 26.0, 43.0, 52.0, 100.0] {
        let h = sys.hamiltonian(b);
        let lib = eigensystem(&h).values;
        let jac = jacobi_eigenvalues(real_embedding(h.matrix()));
        for (k, e) in lib.iter().enumerate() {
            let (a, c) = (jac[2 * k], jac[2 * k + 1]);
            assert!(
                (e - a).abs() < 1e-10 && (e - c).abs() < 1e-10,
                "B = {b}: {e} vs {a}, {c}"
            );
        }
    }
}

#[test]
fn landau_zener_matches_two_level_integration() {
    let slope_ghz_per_mt = 0.03;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut oracle_cache: Vec<(f64, f64)> = Vec::new();
    for rate in [0.02, 0.2, 2.0, 20.0, 200.0] {
        let alpha_hz_per_s = slope_ghz_per_mt * 1e9 * rate / 60.0;
        for p_target in [0.05f64, 0.2, 0.5, 0.8, 0.95] {
            // coupling that should give p_target, then measured in coupling units
            let g_hz = (-p_target.ln() * alpha_hz_per_s).sqrt() / two_pi;
            let a = alpha_hz_per_s / (g_hz * g_hz);
            let expected = match oracle_cache
                .iter()
                .find(|(k, _)| (k / a - 1.0).abs() < 1e-12)
            {
                Some(&(_, p)) => p,
                None => {
                    let p = lz_oracle(a);
                    oracle_cache.push((a, p));
                    p
                }
            };
            let p = lz_probability_from_coupling(g_hz * 1e-9, slope_ghz_per_mt, rate).unwrap();
            assert!(
                (p / expected - 1.0).abs() < 0.01,
                "rate {rate}: formula {p}, oracle {expected}"
            );
        }
    }
}

#[test]
fn propagation_matches_series_exponential() {
    let sys = LambdaSystem::new(100.0, 1.0, 2.0).unwrap();
    let m = rate_matrix(&sys);
    let n0 = Vector3::new(0.7, 0.2, 0.1);
    let t: Vec<f64> = (0..200).map(|k| 1e-4 * 1.07f64.powi(k)).collect();
    for method in [PropagationMethod::Expm, PropagationMethod::Adaptive] {
        let p = propagate(&m, n0, &t, method).unwrap();
        for (tk, state) in t.iter().zip(&p.states) {
            let want = expm_series(&m, *tk) * n0;
            assert!(
                (state - want).amax() < 1e-8,
                "{method:?} t = {tk}: {state} vs {want}"
            );
        }
    }
}

#[test]
fn rate_eigenvalues_match_closed_form() {
    let r = eigen_rates(&LambdaSystem::new(100.0, 1.0, 2.0).unwrap());
    let d = 9809f64.sqrt();
    assert_eq!(r[0], 0.0);
    assert!((r[1] - (-103.0 + d) / 2.0).abs() < 1e-10);
    assert!((r[2] - (-103.0 - d) / 2.0).abs() < 1e-10);
    let eig = rate_matrix(&LambdaSystem::new(100.0, 1.0, 2.0).unwrap()).complex_eigenvalues();
    let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in re.iter().zip(r) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn resonant_transmission_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let f0 = rng.random_range(1.0..20.0);
        let mode = CavityMode::new(
            "m",
            f0,
            10f64.powf(rng.random_range(-6.0..-3.0)),
            10f64.powf(rng.random_range(-6.0..-3.0)),
            0.5,
        )
        .unwrap();
        let g0 = 10f64.powf(rng.random_range(-12.0..-9.0));
        let gamma_s = 10f64.powf(rng.random_range(-5.0..-2.0));
        let n = 10f64.powf(rng.random_range(10.0..17.0));
        let bath = SpinBath::new(f0, gamma_s, g0 * n.sqrt()).unwrap();
        let direct = s21(f0, &mode, &bath).norm();
        let closed = s21_resonance(&mode, g0, gamma_s, n);
        assert!(
            (direct / closed - 1.0).abs() < 1e-12,
            "{direct} vs {closed}"
        );
    }
}

#[test]
fn crossing_shows_twice_the_coupling() {
    // spins tuned through the mode: the minimum normal-mode splitting is 2 g_eff
    let mode = CavityMode::new("m", 7.46, 5e-5, 5e-5, 0.5).unwrap();
    let g = 2.6e-3;
    let f: Vec<f64> = (0..20001)
        .map(|k| 7.45 + 0.02 * k as f64 / 20000.0)
        .collect();
    let bath = SpinBath::new(7.46, 1e-4, g).unwrap();
    let y: Vec<f64> = f.iter().map(|f| s21(*f, &mode, &bath).norm()).collect();
    let peaks: Vec<f64> = (1..y.len() - 1)
        .filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1])
        .map(|k| f[k])
        .collect();
    assert_eq!(peaks.len(), 2);
    let split = peaks[1] - peaks[0];
    assert!((split / (2.0 * g) - 1.0).abs() < 1e-3, "splitting {split}");
}
