//! First-passage ensembles and the Bihill density fit.

use oqkd_core::buffer::BufferParams;
use oqkd_core::fpt::{
    bihill, composite_density, default_density_bins, fit_bihill, histogram_density, run_ensemble,
    tail_stats, BihillParams,
};
use oqkd_core::seed::rng_from_seed;
use oqkd_core::traffic::{category_preset, Category};
use oqkd_core::wdm::WdmConfig;
use rand::Rng;
use rand_distr::StandardNormal;

const DT: f64 = 1.0 / 60.0;

fn preset(cat: Category, b0: f64) -> BufferParams {
    BufferParams::new(category_preset(cat, 80).unwrap(), WdmConfig::default(), b0).unwrap()
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let params = preset(Category::Cat3, 0.5);
    let run = || run_ensemble(&params, 64, 48.0, DT, 99).unwrap();
    let one = in_pool(1, run);
    for workers in [4, 8] {
        assert_eq!(in_pool(workers, run), one);
    }
}

#[test]
fn raising_b0_never_shortens_a_trial() {
    let low = run_ensemble(&preset(Category::Cat1, 0.5), 200, 7.0 * 24.0, DT, 5).unwrap();
    let high = run_ensemble(&preset(Category::Cat1, 1.0), 200, 7.0 * 24.0, DT, 5).unwrap();
    for i in 0..200 {
        assert!(high.samples_hours[i] >= low.samples_hours[i], "trial {i}");
        assert!(!low.censored[i] || high.censored[i]);
    }
}

/// `𝒦` so that the pure Bihill integrates to one over (0, ∞).
fn normalized(a1: f64, m1: f64, a2: f64, m2: f64) -> BihillParams {
    let shape = BihillParams::new(1.0, a1, m1, a2, m2);
    // Log-spaced trapezoid; the tails beyond the range are negligible here.
    let ts: Vec<f64> = (0..=20_000)
        .map(|i| 1e-4 * 1e8f64.powf(i as f64 / 20_000.0))
        .collect();
    let mass: f64 = ts
        .windows(2)
        .map(|w| {
            0.5 * (w[1] - w[0]) * (bihill(w[0], &shape).unwrap() + bihill(w[1], &shape).unwrap())
        })
        .sum();
    BihillParams::new(1.0 / mass, a1, m1, a2, m2)
}

#[test]
fn round_trip_with_one_percent_noise() {
    let truth = normalized(2.0, 3.0, 10.0, 2.0);
    let mut rng = rng_from_seed(3);
    let density: Vec<(f64, f64)> = (1..=120)
        .map(|i| {
            let t = 0.25 * i as f64;
            let z: f64 = rng.sample(StandardNormal);
            (
                t,
                composite_density(t, &truth, 0.0, 24.0).unwrap() * (1.0 + 0.01 * z),
            )
        })
        .collect();
    let fit = fit_bihill(&density, 0.0, 24.0).unwrap();
    let p = fit.params;
    for (name, got, want) in [
        ("k_norm", p.k_norm, truth.k_norm),
        ("a1", p.a1, truth.a1),
        ("m1", p.m1, truth.m1),
        ("a2", p.a2, truth.a2),
        ("m2", p.m2, truth.m2),
    ] {
        assert!((got - want).abs() <= 0.1 * want, "{name}: {got} vs {want}");
    }
    assert!(fit.restart_residuals.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn pure_noise_density_reports_a_residual() {
    let mut rng = rng_from_seed(8);
    let mut density: Vec<(f64, f64)> = (1..=40).map(|i| (i as f64, rng.random::<f64>())).collect();
    // Keep the mode away from the ends so the preconditions hold.
    density[20].1 = 2.0;
    match fit_bihill(&density, 0.0, 24.0) {
        Ok(fit) => assert!(fit.params.residual.is_finite() && fit.params.residual > 0.0),
        Err(oqkd_core::Error::NotConverged { residual, .. }) => assert!(residual.is_finite()),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn composite_model_fits_cat1_better_than_pure_bihill() {
    let params = preset(Category::Cat1, 1.0);
    let span = 30.0 * 24.0;
    let ens = run_ensemble(&params, 2000, span, DT, 17).unwrap();
    let observed = ens.observed();
    let bins = default_density_bins(&observed, (0.0, span), 24.0);
    let density = histogram_density(&observed, bins, (0.0, span)).unwrap();
    let alpha = params.traffic.alpha;

    let composite = fit_bihill(&density, alpha, 24.0).unwrap();
    let pure = fit_bihill(&density, 0.0, 24.0).unwrap();
    assert!(
        composite.params.residual < pure.params.residual,
        "composite {} vs pure {}",
        composite.params.residual,
        pure.params.residual
    );

    let target: f64 = density.iter().map(|(_, f)| f).sum::<f64>() * span / bins as f64;
    let n = 200_000;
    let h = span / n as f64;
    let integral: f64 = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            composite_density(t, &composite.params, alpha, 24.0).unwrap() * h
        })
        .sum();
    assert!(
        (integral - target).abs() < 1e-3,
        "integral {integral} vs mass {target}"
    );

    let tails = tail_stats(&ens).unwrap();
    assert!(tails.heavy_tail);
}
