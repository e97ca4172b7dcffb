//! Closed-form asymptotic quantities of the star contact process: the two regime profiles of
//! `v_n`, the normalizing constant `C_{N,λ}`, the masses, the capacity estimate, the
//! Eyring–Kramers time and the threshold `w` bounding the capacity window.
//!
//! Values are assembled in the log domain; `value = exp(log_value)`.

use std::collections::BTreeMap;
use std::io::Write;

use rug::Rational;
use serde::Serialize;

use crate::chain::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::special::{gamma_fn, ln_beta, ln_gamma};
use crate::numerics::{HpScalar, Precision};
use crate::qsd::{format_log10, QsdMeasure};

/// Half-width exponent of the transition band: `|n − λN/(1+2λ)| < N^{1/2 + a}`.
pub const BAND_EXPONENT: f64 = 0.1;

/// Default relative window margin `ε`.
pub const DEFAULT_EPS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    High,
    Low,
    Transition,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::High => "high",
            Regime::Low => "low",
            Regime::Transition => "transition",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub value: HpScalar,
    /// Natural logarithm of `value`.
    pub log_value: HpScalar,
    pub regime: Option<Regime>,
    /// Admissible window `[lo, hi]` of `n` where the quantity applies, when there is one.
    pub window: Option<(usize, usize)>,
    /// Logarithms of the named factors whose sum is `log_value`.
    pub components: BTreeMap<&'static str, HpScalar>,
}

impl AsymptoticReport {
    fn from_components(components: BTreeMap<&'static str, HpScalar>, prec: Precision) -> Self {
        let log_value = components.values().fold(HpScalar::zero(prec), |acc, x| acc + x);
        AsymptoticReport { value: log_value.exp(), log_value, regime: None, window: None, components }
    }

    pub fn log10(&self) -> f64 {
        self.log_value.to_f64() / std::f64::consts::LN_10
    }
}

/// `λN/(1+2λ)`, the point where the low-regime profile is singular.
pub fn transition_point(params: &ModelParams) -> f64 {
    let lam = params.lambda_f64();
    lam * params.n as f64 / (1.0 + 2.0 * lam)
}

/// Regime of `n` relative to the band `λN/(1+2λ) ± N^{1/2+a}`.
pub fn regime_of(params: &ModelParams, n: usize, a: f64) -> Regime {
    let centre = transition_point(params);
    let half = (params.n as f64).powf(0.5 + a);
    let x = n as f64;
    if x >= centre + half {
        Regime::High
    } else if x <= centre - half {
        Regime::Low
    } else {
        Regime::Transition
    }
}

/// Regime of `n` relative to the linear windows `[0, λN/(1+2λ) − εN]` and `[λN/(1+2λ) + εN, N]`.
pub fn regime_window(params: &ModelParams, n: usize, eps: f64) -> Regime {
    let centre = transition_point(params);
    let half = eps * params.n as f64;
    let x = n as f64;
    if x >= centre + half {
        Regime::High
    } else if x <= centre - half {
        Regime::Low
    } else {
        Regime::Transition
    }
}

struct Consts {
    lambda: HpScalar,
    one: HpScalar,
    /// `1 + 2λ`
    d: HpScalar,
    big_n: HpScalar,
}

fn consts(params: &ModelParams, prec: Precision) -> Consts {
    let lambda = params.lambda_hp(prec);
    let one = HpScalar::one(prec);
    let d = &one + &lambda * 2.0;
    Consts { big_n: HpScalar::from_int(params.n as i64, prec), lambda, one, d }
}

fn ln_binomial(n: usize, k: usize, prec: Precision) -> Result<HpScalar> {
    let g = |x: usize| ln_gamma(&HpScalar::from_int(x as i64 + 1, prec));
    Ok(g(n)? - g(k)? - g(n - k)?)
}

/// `v_n^high = C(N,n) λ^{n−N} Π_{k=n}^{N−1} [1 + 1/((1+2λ)(k+1) − λN)]`.
pub fn v_high(params: &ModelParams, n: usize, prec: Precision) -> Result<AsymptoticReport> {
    let big_n = params.n;
    if n > big_n {
        return Err(Error::StateOutOfRange(n));
    }
    let c = consts(params, prec);
    let lambda_n = &c.lambda * &c.big_n;
    let mut f = c.one.clone();
    for k in n..big_n {
        let denom = &c.d * HpScalar::from_int(k as i64 + 1, prec) - &lambda_n;
        f = f * (&c.one + denom.recip());
    }
    let mut comps = BTreeMap::new();
    comps.insert("binomial", ln_binomial(big_n, n, prec)?);
    comps.insert("power", c.lambda.ln() * HpScalar::from_int(n as i64 - big_n as i64, prec));
    comps.insert("f", f.ln());
    let mut r = AsymptoticReport::from_components(comps, prec);
    r.regime = Some(regime_of(params, n, BAND_EXPONENT));
    Ok(r)
}

/// `ln C_{N,λ}` with `C^{−1} = (λ/(1+2λ)) N B(1/(1+2λ), N) (λ(1+λ)/(1+2λ))^N`.
pub fn c_n_lambda(params: &ModelParams, prec: Precision) -> Result<AsymptoticReport> {
    let c = consts(params, prec);
    let mut comps = BTreeMap::new();
    comps.insert("prefactor", -(&c.lambda / &c.d).ln() - c.big_n.ln());
    comps.insert("beta", -ln_beta(&c.d.recip(), &c.big_n)?);
    comps.insert("exponential", -(&c.big_n * (&c.lambda * (&c.one + &c.lambda) / &c.d).ln()));
    Ok(AsymptoticReport::from_components(comps, prec))
}

/// `v_n^low = C_{N,λ} (1+λ)^n (1 − ((1+2λ)/λ)(n/N))^{−2λ/(1+2λ)}` for `n < λN/(1+2λ)`.
pub fn v_low(params: &ModelParams, n: usize, prec: Precision) -> Result<AsymptoticReport> {
    let lambda = &params.lambda;
    let lhs = Rational::from(n) * (1 + Rational::from(2 * lambda));
    if lhs >= (lambda * Rational::from(params.n)) {
        return Err(Error::Domain(format!("n = {n} is not below the transition point")));
    }
    let c = consts(params, prec);
    let x = &c.d / &c.lambda * HpScalar::from_int(n as i64, prec) / &c.big_n;
    let beta = &c.lambda * 2.0 / &c.d;
    let mut comps = c_n_lambda(params, prec)?.components;
    comps.insert("growth", (&c.one + &c.lambda).ln() * HpScalar::from_int(n as i64, prec));
    comps.insert("g", -(beta * (&c.one - x).ln()));
    let mut r = AsymptoticReport::from_components(comps, prec);
    r.regime = Some(regime_of(params, n, BAND_EXPONENT));
    Ok(r)
}

/// `m = ⌊λN/(1+λ)⌋`.
pub fn metastable_index(params: &ModelParams) -> usize {
    let lambda = &params.lambda;
    let m = (lambda * Rational::from(params.n)) / Rational::from(1 + lambda);
    m.floor().numer().to_usize().expect("fits")
}

/// `((1+λ)/λ)^{N + 2/(1+2λ)}`.
pub fn total_mass(params: &ModelParams, prec: Precision) -> Result<AsymptoticReport> {
    let c = consts(params, prec);
    let mut comps = BTreeMap::new();
    let exponent = &c.big_n + HpScalar::from_int(2, prec) / &c.d;
    comps.insert("exponential", exponent * ((&c.one + &c.lambda) / &c.lambda).ln());
    Ok(AsymptoticReport::from_components(comps, prec))
}

/// `((1+λ)/√(2πλN)) ((1+λ)/λ)^{N + 2/(1+2λ)}`, the asymptotic value of `v_m`.
pub fn metastable_mass(params: &ModelParams, prec: Precision) -> Result<AsymptoticReport> {
    let c = consts(params, prec);
    let mut comps = total_mass(params, prec)?.components;
    let gauss = HpScalar::pi(prec) * 2.0 * &c.lambda * &c.big_n;
    comps.insert("gaussian", (&c.one + &c.lambda).ln() - gauss.ln() * 0.5);
    Ok(AsymptoticReport::from_components(comps, prec))
}

/// `(1+2λ) (λ/(1+λ))^{2/(1+2λ)} B(1/(1+2λ), N)^{−1} ((1+2λ)/(1+λ)²)^N`, with the window
/// `[⌈εN⌉, ⌊wN⌋]` of targets `(1,n)` it applies to.
pub fn capacity_estimate(params: &ModelParams, eps: f64, prec: Precision) -> Result<AsymptoticReport> {
    let c = consts(params, prec);
    let l1 = &c.one + &c.lambda;
    let mut comps = BTreeMap::new();
    comps.insert("prefactor", c.d.ln() + HpScalar::from_int(2, prec) / &c.d * (&c.lambda / &l1).ln());
    comps.insert("beta", -ln_beta(&c.d.recip(), &c.big_n)?);
    comps.insert("exponential", &c.big_n * (&c.d / (&l1 * &l1)).ln());
    let mut r = AsymptoticReport::from_components(comps, prec);
    let w = w_threshold(params.lambda_f64())?.w;
    let big_n = params.n as f64;
    r.window = Some(((eps * big_n).ceil() as usize, (w * big_n).floor() as usize));
    Ok(r)
}

/// Both forms of the Eyring–Kramers time.
#[derive(Debug, Clone, PartialEq)]
pub struct EkTime {
    /// `κ_λ N^{−1/(1+2λ)} ((1+λ)²/(1+2λ))^N`, `κ_λ = ((1+λ)/λ)^{2/(1+2λ)} Γ(2(1+λ)/(1+2λ))`.
    pub gamma_form: AsymptoticReport,
    /// `(1/(1+2λ)) ((1+λ)/λ)^{2/(1+2λ)} B(1/(1+2λ), N) ((1+λ)²/(1+2λ))^N`.
    pub beta_form: AsymptoticReport,
}

impl EkTime {
    pub fn relative_gap(&self) -> f64 {
        crate::numerics::rel_diff(&self.gamma_form.value, &self.beta_form.value)
    }
}

/// `κ_λ = ((1+λ)/λ)^{2/(1+2λ)} Γ(2(1+λ)/(1+2λ))`.
pub fn kappa(params: &ModelParams, prec: Precision) -> Result<HpScalar> {
    let c = consts(params, prec);
    let l1 = &c.one + &c.lambda;
    let g = gamma_fn(&(&l1 * 2.0 / &c.d))?;
    Ok((&l1 / &c.lambda).powf(&(HpScalar::from_int(2, prec) / &c.d)) * g)
}

pub fn ek_time(params: &ModelParams, prec: Precision) -> Result<EkTime> {
    let c = consts(params, prec);
    let l1 = &c.one + &c.lambda;
    let exponential = &c.big_n * (&l1 * &l1 / &c.d).ln();

    let mut g = BTreeMap::new();
    g.insert("kappa", kappa(params, prec)?.ln());
    g.insert("power_of_N", -(c.big_n.ln() / &c.d));
    g.insert("exponential", exponential.clone());

    let mut b = BTreeMap::new();
    b.insert("prefactor", -c.d.ln() + HpScalar::from_int(2, prec) / &c.d * (&l1 / &c.lambda).ln());
    b.insert("beta", ln_beta(&c.d.recip(), &c.big_n)?);
    b.insert("exponential", exponential);

    let ek = EkTime {
        gamma_form: AsymptoticReport::from_components(g, prec),
        beta_form: AsymptoticReport::from_components(b, prec),
    };
    if ek.relative_gap() > 10.0 / params.n as f64 {
        log::warn!("Eyring-Kramers gamma and beta forms differ by {:.3e} at N={}", ek.relative_gap(), params.n);
    }
    Ok(ek)
}

/// `2 ln(1+λ) − ln(1+2λ)`, the exponential growth rate of the extinction time.
pub fn ldp_exponent(lambda: f64) -> f64 {
    2.0 * lambda.ln_1p() - (2.0 * lambda).ln_1p()
}

/// `s(λ,t) = ln((1+2λ)/(λ(1+λ))) + t ln t + (1−t) ln(1−t) + (1−t) ln λ`, with `0 ln 0 = 0`.
pub fn s_profile(lambda: f64, t: f64) -> f64 {
    let xlogx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
    ((1.0 + 2.0 * lambda) / (lambda * (1.0 + lambda))).ln() + xlogx(t) + xlogx(1.0 - t) + (1.0 - t) * lambda.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WThreshold {
    pub w: f64,
    /// Root of `s(λ,·)` in `(λ/(1+2λ), 1]`; absent for `λ > φ`.
    pub w_tilde: Option<f64>,
}

/// Upper edge `w` of the admissible capacity window.
///
/// For `λ ≤ φ` the root `w̃` of `s(λ,·)` is found by bisection; then `δ = w̃/2, w̃/4, …` is
/// refined until `w = w̃ − δ` exceeds `λ/(1+λ)` and satisfies `s(λ,w) > −2w ln(1+λ)` with
/// margin `1e-9`. For `λ > φ`, `w = 1`.
pub fn w_threshold(lambda: f64) -> Result<WThreshold> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!("lambda = {lambda}")));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    if lambda > phi {
        return Ok(WThreshold { w: 1.0, w_tilde: None });
    }
    let s = |t: f64| s_profile(lambda, t);
    let mut lo = lambda / (1.0 + 2.0 * lambda);
    let mut hi = 1.0;
    if !(s(lo) < 0.0 && s(hi) >= -1e-15) {
        return Err(Error::Bracket(format!(
            "s(lambda, t) has no sign change on (lambda/(1+2 lambda), 1] for lambda = {lambda}"
        )));
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if s(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w_tilde = 0.5 * (lo + hi);
    let floor = lambda / (1.0 + lambda);
    let mut delta = w_tilde / 2.0;
    while delta > 1e-12 {
        let w = w_tilde - delta;
        if w > floor && s(w) > -2.0 * w * lambda.ln_1p() + 1e-9 {
            return Ok(WThreshold { w, w_tilde: Some(w_tilde) });
        }
        delta /= 2.0;
    }
    Err(Error::Bracket(format!("no admissible w below {w_tilde} for lambda = {lambda}")))
}

/// One row of a regime sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub regime: Regime,
    pub v_exact_log10: f64,
    pub v_asym_log10: f64,
    pub ratio: f64,
}

/// Compares `v_n` with `v_low`, `v_high`, or `C_{N,λ}(1+λ)^n` inside the transition band.
pub fn regime_sweep(qsd: &QsdMeasure, eps: f64, prec: Precision) -> Result<Vec<SweepRow>> {
    let params = &qsd.params;
    let c = c_n_lambda(params, prec)?;
    let growth = (HpScalar::one(prec) + params.lambda_hp(prec)).ln();
    (0..=params.n)
        .map(|n| {
            let regime = regime_window(params, n, eps);
            let log_asym = match regime {
                Regime::Low => v_low(params, n, prec)?.log_value,
                Regime::High => v_high(params, n, prec)?.log_value,
                Regime::Transition => &c.log_value + &growth * HpScalar::from_int(n as i64, prec),
            };
            let log_exact = qsd.v[n].with_prec(prec).ln();
            let ratio = (&log_exact - &log_asym).exp().to_f64();
            let ln10 = std::f64::consts::LN_10;
            Ok(SweepRow {
                n,
                regime,
                v_exact_log10: log_exact.to_f64() / ln10,
                v_asym_log10: log_asym.to_f64() / ln10,
                ratio,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["n", "regime", "v_exact_log10", "v_asym_log10", "ratio"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.regime.to_string(),
            format_log10(r.v_exact_log10),
            format_log10(r.v_asym_log10),
            format!("{:.12e}", r.ratio),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rel_diff;

    fn lam(n: usize, l: i64) -> ModelParams {
        ModelParams::with_lambda(n, Rational::from(l)).unwrap()
    }

    #[test]
    fn v_high_boundary_and_single_factor() {
        for l in [1, 2] {
            let p = lam(30, l);
            let top = v_high(&p, 30, 128).unwrap();
            assert!(rel_diff(&top.value, &HpScalar::one(128)) < 1e-30);
            let f = top.components["f"].exp();
            assert!(rel_diff(&f, &HpScalar::one(128)) < 1e-30);
            let f1 = v_high(&p, 29, 128).unwrap().components["f"].exp();
            let expected = 1.0 + 1.0 / ((1.0 + 2.0 * l as f64) * 30.0 - l as f64 * 30.0);
            assert!((f1.to_f64() - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn v_low_at_zero_is_c() {
        let p = lam(50, 1);
        let c = c_n_lambda(&p, 128).unwrap();
        assert!(rel_diff(&v_low(&p, 0, 128).unwrap().value, &c.value) < 1e-30);
        assert!(v_low(&p, 17, 128).is_err());
        assert!(v_low(&p, 16, 128).is_ok());
    }

    #[test]
    fn mass_quotient() {
        let p = lam(100, 1);
        let t = total_mass(&p, 128).unwrap().value;
        let m = metastable_mass(&p, 128).unwrap().value;
        let expected = (2.0 * std::f64::consts::PI * 100.0).sqrt() / 2.0;
        assert!(((t / m).to_f64() - expected).abs() < 1e-12);
        assert_eq!(metastable_index(&p), 50);
    }

    #[test]
    fn kappa_one_and_bases() {
        let k = kappa(&lam(10, 1), 128).unwrap().to_f64();
        assert!((k - 1.417_52).abs() < 1e-5, "{k}");
        assert!((ldp_exponent(1.0) - (4.0f64 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn ek_forms_converge() {
        let gap = |n| ek_time(&lam(n, 1), 128).unwrap().relative_gap();
        let (g1, g2) = (gap(100), gap(400));
        assert!(g2 < g1 && g2 < 2.0 / 400.0, "{g1} {g2}");
    }

    #[test]
    fn s_identity_at_golden_ratio() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!(s_profile(phi, 1.0).abs() < 1e-15);
        assert_eq!(w_threshold(2.0).unwrap(), WThreshold { w: 1.0, w_tilde: None });
    }

    #[test]
    fn w_tilde_matches_grid_scan() {
        let t = w_threshold(1.0).unwrap();
        let root = t.w_tilde.unwrap();
        let mut scan = None;
        let mut prev = s_profile(1.0, 1.0 / 3.0);
        let mut k = 1;
        while scan.is_none() {
            let x = 1.0 / 3.0 + k as f64 * 1e-6;
            let cur = s_profile(1.0, x.min(1.0));
            if prev < 0.0 && cur >= 0.0 {
                scan = Some(x);
            }
            prev = cur;
            k += 1;
        }
        assert!((root - scan.unwrap()).abs() < 2e-6);
        assert!(root > 0.5);
        assert!(t.w > 0.5 && t.w < root);
        assert!(s_profile(1.0, t.w) > -2.0 * t.w * 2f64.ln());
    }
}
