use contact_star::asymptotics::{
    c_n_lambda, capacity_estimate, ek_time, kappa, metastable_index, regime_window, transition_point, v_high, v_low,
    w_threshold, Regime,
};
use contact_star::chain::{build_reduced_chain, Mode, ModelParams, State};
use contact_star::numerics::{HpScalar, PrecisionPolicy};
use contact_star::potential::{capacity, with_stationary};
use contact_star::qsd::{qsd_by_recurrence, QsdMeasure};
use contact_star::Error;
use rug::Rational;

const PREC: u32 = 256;

fn params(n: usize, lambda: i64) -> ModelParams {
    ModelParams::with_lambda(n, Rational::from(lambda)).unwrap()
}

fn measure(p: &ModelParams) -> QsdMeasure {
    qsd_by_recurrence(p, &PrecisionPolicy::default()).unwrap()
}

fn high_error(n: usize) -> f64 {
    let p = params(n, 1);
    let k = 3 * n / 4;
    ((&measure(&p).v[k] / &v_high(&p, k, PREC).unwrap().value).to_f64() - 1.0).abs()
}

#[test]
fn high_profile_error_is_order_one_over_n() {
    let (e100, e200) = (high_error(100), high_error(200));
    let c = e100 * 100.0;
    assert!(e200 * 200.0 <= 1.5 * c, "e100={e100:.3e} e200={e200:.3e}");
}

#[test]
fn low_end_mass_matches_normalising_constant() {
    let mut errs = Vec::new();
    for n in [100usize, 200, 400] {
        let p = params(n, 1);
        let m = measure(&p);
        let expected = c_n_lambda(&p, PREC).unwrap().value * 2.0;
        errs.push(((&m.v[1] / &m.v[n]) / expected).to_f64() - 1.0);
    }
    assert!(errs.windows(2).all(|w| w[1].abs() < w[0].abs()), "{errs:?}");
    assert!(errs[2].abs() < 0.02, "{errs:?}");
}

/// `B(a, N) = (1/a) Π_{k=1}^{N−1} k/(a+k)`.
fn beta_by_product(a: f64, n: usize) -> f64 {
    (1..n).fold(1.0 / a, |acc, k| acc * k as f64 / (a + k as f64))
}

#[test]
fn normalising_constant_against_beta_product() {
    let p = params(50, 1);
    let (lambda, d, n) = (1.0f64, 3.0f64, 50.0f64);
    let ln_inv =
        (lambda / d).ln() + n.ln() + beta_by_product(1.0 / d, 50).ln() + n * (lambda * (1.0 + lambda) / d).ln();
    let got = c_n_lambda(&p, PREC).unwrap().log_value.to_f64();
    assert!((got + ln_inv).abs() < 1e-12, "{got} vs {}", -ln_inv);
}

#[test]
fn capacity_estimate_converges() {
    let mut ratios = Vec::new();
    for n in [100usize, 200, 400] {
        let p = params(n, 1);
        let chain = with_stationary(build_reduced_chain::<HpScalar>(&p, Mode::Regenerative, PREC)).unwrap();
        let exact = capacity(&chain, &[0], &[State::new(1, n / 2).index(n)]).unwrap();
        ratios.push((exact / capacity_estimate(&p, 0.2, PREC).unwrap().value).to_f64());
    }
    assert!(ratios.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs()), "{ratios:?}");
}

#[test]
fn low_profile_refuses_the_transition_band() {
    let p = params(300, 1);
    let t = transition_point(&p);
    assert!((t - 100.0).abs() < 1e-12);
    assert!(matches!(v_low(&p, 100, PREC), Err(Error::Domain(_))));
    assert!(v_low(&p, 99, PREC).is_ok());
    assert_eq!(regime_window(&p, 100, 0.1), Regime::Transition);
    assert_eq!(regime_window(&p, 10, 0.1), Regime::Low);
    assert_eq!(regime_window(&p, 250, 0.1), Regime::High);
}

#[test]
fn transition_band_is_worse_than_both_regimes() {
    let p = params(400, 1);
    let m = measure(&p);
    let err = |k: usize, r: HpScalar| ((&m.v[k] / r).to_f64() - 1.0).abs();
    let band = err(130, v_low(&p, 130, PREC).unwrap().value);
    let low = err(40, v_low(&p, 40, PREC).unwrap().value);
    let high = err(300, v_high(&p, 300, PREC).unwrap().value);
    assert!(band > low && band > high, "band={band:.3e} low={low:.3e} high={high:.3e}");
}

#[test]
fn kappa_against_gamma_value() {
    // 2^{2/3} Γ(4/3)
    let oracle = 2f64.powf(2.0 / 3.0) * 0.892_979_511_569_249_2;
    assert!((kappa(&params(10, 1), PREC).unwrap().to_f64() - oracle).abs() < 1e-14);
    for n in [100usize, 1000] {
        let ek = ek_time(&params(n, 1), PREC).unwrap();
        assert!(ek.relative_gap() < 1.0 / n as f64, "gap {:.3e} at N={n}", ek.relative_gap());
    }
}

#[test]
fn metastable_index_and_threshold() {
    assert_eq!(metastable_index(&params(50, 1)), 25);
    assert_eq!(metastable_index(&params(50, 2)), 33);
    let w = w_threshold(1.0).unwrap().w;
    assert!(w > 0.5 && w < 1.0);
    assert_eq!(w_threshold(2.0).unwrap().w, 1.0);
}
