use pstar_core::experiments::{
    build_martingale, build_modified_martingale, estimate_powers, gen_correlated_pvalues, gen_observations,
    run_figure2, run_figure2a, write_power_csv, ExperimentConfig, GaussianScenario, Method, PowerRow,
};
use pstar_core::numeric::normal_sf;
use pstar_core::rng::StreamRng;

const ALPHA: f64 = 0.01;

fn inverse_sf(p: f64) -> f64 {
    // bisection on the decreasing survival function
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_sf(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn null_pvalues_are_uniform() {
    let s = GaussianScenario {
        k: 1,
        ..Default::default()
    };
    let mut rng = StreamRng::new(5, 5);
    let n = 10_000;
    let mut ps: Vec<f64> = (0..n).map(|_| gen_correlated_pvalues(&s, &mut rng)[0]).collect();
    ps.sort_by(f64::total_cmp);
    let ks = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n as f64 - p).max(p - i as f64 / n as f64))
        .fold(0.0, f64::max);
    // 5% critical value 1.358/√n
    assert!(ks < 1.358 / (n as f64).sqrt(), "{ks}");
}

#[test]
fn equicorrelation() {
    let s = GaussianScenario {
        k: 2,
        rho: 0.9,
        ..Default::default()
    };
    let mut rng = StreamRng::new(6, 6);
    let n = 100_000;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let ps = gen_correlated_pvalues(&s, &mut rng);
        let (x, y) = (inverse_sf(ps[0]), inverse_sf(ps[1]));
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let n = n as f64;
    let cov = sxy / n - sx * sy / (n * n);
    let r = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
    assert!((r - 0.9).abs() < 0.02, "{r}");
}

#[test]
fn martingales_have_unit_mean_under_null() {
    let s = GaussianScenario {
        n: 5,
        ..Default::default()
    };
    let reps = 100_000;
    let mut rng = StreamRng::new(8, 8);
    let (mut a, mut a2, mut b, mut b2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..reps {
        let xs = gen_observations(&s, &mut rng);
        let t = build_martingale(&xs, 0.5).unwrap().terminal();
        let u = build_modified_martingale(&xs, 0.5).unwrap().terminal();
        a += t;
        a2 += t * t;
        b += u;
        b2 += u * u;
    }
    let r = reps as f64;
    for (sum, sq) in [(a, a2), (b, b2)] {
        let mean = sum / r;
        let se = ((sq / r - mean * mean) / r).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
    }
}

#[test]
fn every_test_is_valid_at_delta_zero() {
    let reps = 20_000;
    let bound = ALPHA + 3.0 * (ALPHA * (1.0 - ALPHA) / reps as f64).sqrt();
    for (k, indep) in [(20, false), (100, true)] {
        let s = GaussianScenario {
            k,
            rho: 0.9,
            independent_first: indep,
            reps,
            seed: 1,
            ..Default::default()
        };
        let methods: &[Method] = if indep { &Method::SETTING_2 } else { &Method::SETTING_1 };
        for e in estimate_powers(&s, methods, ALPHA).unwrap() {
            assert!(e.power <= bound, "{e:?}");
        }
    }
    for n in [2, 10, 100] {
        let s = GaussianScenario {
            n,
            reps,
            seed: 2,
            ..Default::default()
        };
        let mut methods = Method::MARTINGALE.to_vec();
        methods.push(Method::VilleMaxRandom);
        for e in estimate_powers(&s, &methods, ALPHA).unwrap() {
            assert!(e.power <= bound, "n = {n}: {e:?}");
        }
    }
}

#[test]
fn enhanced_beats_deterministic_averaging_on_shared_draws() {
    // with K = 51 the enhanced rule rejects whenever the equal-weight
    // average is at most 1/51, a larger region than P̄ ≤ 1/200
    for delta in [0.5, 1.0, 2.0] {
        let s = GaussianScenario {
            k: 51,
            delta,
            rho: 0.9,
            independent_first: true,
            reps: 5_000,
            seed: 3,
            ..Default::default()
        };
        let e = estimate_powers(&s, &[Method::ArithAvg, Method::Enhanced], ALPHA).unwrap();
        assert!(e[1].power >= e[0].power, "{e:?}");
    }
}

#[test]
fn figure_tables_are_reproducible() {
    let c = ExperimentConfig::from_toml(
        r#"
        seed = 11
        reps = 500
        [figure2a]
        k_values = [20]
        deltas = [0.0, 2.0]
        [figure2]
        n_values = [2, 10]
        deltas = [0.0, 1.0]
        "#,
    )
    .unwrap();
    let render = |rows: Vec<PowerRow>| {
        let mut out = Vec::new();
        write_power_csv(&rows, &mut out).unwrap();
        out
    };
    let a = render(run_figure2a(&c).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| render(run_figure2a(&c).unwrap()));
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 5 + 2 * 1);
    let rows = run_figure2(&c).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 5);
}
