//! Gamma and beta functions at arbitrary precision.
//!
//! Gamma and log-gamma are delegated to MPFR (correctly rounded). The incomplete beta
//! function uses the classical continued fraction evaluated with modified Lentz iteration.

use rug::Float;

use super::{HpScalar, Precision};
use crate::error::{Error, Result};

const GUARD_BITS: Precision = 64;

pub fn gamma_fn(a: &HpScalar) -> Result<HpScalar> {
    if !a.is_positive() {
        return Err(Error::Domain(format!("gamma requires a > 0, got {a:?}")));
    }
    Ok(HpScalar::from_float(Float::with_val(a.prec(), a.as_float().gamma_ref())))
}

pub fn ln_gamma(a: &HpScalar) -> Result<HpScalar> {
    if !a.is_positive() {
        return Err(Error::Domain(format!("ln_gamma requires a > 0, got {a:?}")));
    }
    Ok(HpScalar::from_float(Float::with_val(a.prec(), a.as_float().ln_gamma_ref())))
}

/// `ln B(a, b)`. Symmetric in `a` and `b` bit for bit.
pub fn ln_beta(a: &HpScalar, b: &HpScalar) -> Result<HpScalar> {
    let prec = a.prec().max(b.prec());
    let wp = prec + GUARD_BITS;
    let (a, b) = (a.with_prec(wp), b.with_prec(wp));
    let value = ln_gamma(&a)? + ln_gamma(&b)? - ln_gamma(&(&a + &b))?;
    Ok(value.with_prec(prec))
}

/// Complete beta `B(a, b)` when `x` is `None`, otherwise the incomplete beta
/// `B(x; a, b) = ∫_0^x t^{a−1} (1−t)^{b−1} dt` for `x ∈ (0, 1]`.
pub fn beta_fn(a: &HpScalar, b: &HpScalar, x: Option<&HpScalar>) -> Result<HpScalar> {
    if !a.is_positive() || !b.is_positive() {
        return Err(Error::Domain(format!("beta requires a, b > 0, got ({a:?}, {b:?})")));
    }
    let prec = a.prec().max(b.prec());
    let complete = || -> Result<HpScalar> { Ok(ln_beta(a, b)?.with_prec(prec + GUARD_BITS).exp().with_prec(prec)) };
    let Some(x) = x else {
        return complete();
    };
    let one = HpScalar::one(prec);
    if !x.is_positive() || *x > one {
        return Err(Error::Domain(format!("incomplete beta requires x in (0, 1], got {x:?}")));
    }
    if *x == one {
        return complete();
    }
    let wp = prec + GUARD_BITS;
    let (a, b, x) = (a.with_prec(wp), b.with_prec(wp), x.with_prec(wp));
    let one = HpScalar::one(wp);
    let two = HpScalar::from_int(2, wp);
    // The continued fraction converges fast for x < (a+1)/(a+b+2); use the reflection otherwise.
    let switch = (&a + &one) / (&a + &b + &two);
    let value = if x < switch {
        incomplete_beta_cf(&a, &b, &x)?
    } else {
        let full = ln_beta(&a, &b)?.exp();
        full - incomplete_beta_cf(&b, &a, &(&one - &x))?
    };
    Ok(value.with_prec(prec))
}

/// `x^a (1−x)^b / a · CF(a, b, x)`.
fn incomplete_beta_cf(a: &HpScalar, b: &HpScalar, x: &HpScalar) -> Result<HpScalar> {
    let prec = a.prec();
    let one = HpScalar::one(prec);
    let tiny = HpScalar::from_int(2, prec).powi(-(i64::from(prec) * 2));
    let eps = HpScalar::from_int(2, prec).powi(-(i64::from(prec) - 8));
    let front = (a * &x.ln() + b * &(&one - x).ln()).exp() / a;

    let qab = a + b;
    let qap = a + &one;
    let qam = a - &one;
    let mut c = one.clone();
    let mut d = &one - &(&qab * x / &qap);
    if d.abs() < tiny {
        d = tiny.clone();
    }
    d = d.recip();
    let mut h = d.clone();
    let max_iter = 200_000usize;
    for m in 1..=max_iter {
        let m_f = HpScalar::from_int(m as i64, prec);
        let m2 = &m_f * 2.0;
        // even step
        let aa = &m_f * &(b - &m_f) * x / ((&qam + &m2) * (a + &m2));
        d = &one + &(&aa * &d);
        if d.abs() < tiny {
            d = tiny.clone();
        }
        c = &one + &(&aa / &c);
        if c.abs() < tiny {
            c = tiny.clone();
        }
        d = d.recip();
        h = &h * &(&d * &c);
        // odd step
        let aa = -((a + &m_f) * (&qab + &m_f) * x) / ((a + &m2) * (&qap + &m2));
        d = &one + &(&aa * &d);
        if d.abs() < tiny {
            d = tiny.clone();
        }
        c = &one + &(&aa / &c);
        if c.abs() < tiny {
            c = tiny.clone();
        }
        d = d.recip();
        let del = &d * &c;
        h = &h * &del;
        if (&del - &one).abs() < eps {
            return Ok(front * h);
        }
    }
    Err(Error::Domain("incomplete beta continued fraction did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rel_diff;
    use rug::Rational;

    const P: Precision = 256;

    fn hp(x: f64) -> HpScalar {
        HpScalar::from_f64(x, P)
    }

    fn frac(n: i64, d: i64) -> HpScalar {
        HpScalar::from_rational(&Rational::from((n, d)), P)
    }

    /// Bernoulli numbers B_0..B_{2m} from the exact recurrence Σ_{j<=k} C(k+1, j) B_j = 0.
    fn bernoulli(count: usize) -> Vec<Rational> {
        let mut b: Vec<Rational> = vec![Rational::from(1)];
        for k in 1..count {
            let mut acc = Rational::new();
            for (j, bj) in b.iter().enumerate() {
                let c = rug::Integer::from(rug::Integer::binomial_u((k + 1) as u32, j as u32));
                acc += Rational::from(bj * &c);
            }
            b.push(-acc / Rational::from(k as i64 + 1));
        }
        b
    }

    /// Independent oracle: shift the argument up by K, apply the Stirling series with exact
    /// Bernoulli coefficients, divide by the rising factorial.
    fn gamma_oracle(a: &HpScalar) -> HpScalar {
        let prec = 2 * P;
        let a = a.with_prec(prec);
        let shift = 60i64;
        let z = &a + HpScalar::from_int(shift, prec);
        let b = bernoulli(60);
        let two_pi = HpScalar::pi(prec) * 2.0;
        let mut ln_g = (&z - 0.5) * z.ln() - &z + two_pi.ln() * 0.5;
        for k in 1..=28usize {
            let b2k = HpScalar::from_rational(&b[2 * k], prec);
            let denom = HpScalar::from_int((2 * k * (2 * k - 1)) as i64, prec) * z.powi(2 * k as i64 - 1);
            ln_g = ln_g + b2k / denom;
        }
        let mut rising = HpScalar::one(prec);
        for j in 0..shift {
            rising = rising * (&a + HpScalar::from_int(j, prec));
        }
        (ln_g.exp() / rising).with_prec(P)
    }

    #[test]
    fn gamma_known_values() {
        assert!(rel_diff(&gamma_fn(&hp(1.0)).unwrap(), &HpScalar::one(P)) < 1e-70);
        let sqrt_pi = HpScalar::pi(P).sqrt();
        assert!(rel_diff(&gamma_fn(&hp(0.5)).unwrap(), &sqrt_pi) < 1e-70);
        assert!(gamma_fn(&hp(0.0)).is_err());
        assert!(gamma_fn(&hp(-1.5)).is_err());
    }

    #[test]
    fn gamma_four_thirds_matches_stirling_oracle() {
        let a = frac(4, 3);
        let g = gamma_fn(&a).unwrap();
        let oracle = gamma_oracle(&a);
        assert!(rel_diff(&g, &oracle) < 1e-25, "{g:?} vs {oracle:?}");
        assert!((g.to_f64() - 0.892_979_511_569_249_2).abs() < 1e-15);
    }

    #[test]
    fn gamma_recurrence() {
        for a in [0.1, 0.5, 1.7, 9.3] {
            let a = hp(a);
            let lhs = gamma_fn(&(&a + 1.0)).unwrap();
            let rhs = &a * gamma_fn(&a).unwrap();
            assert!(rel_diff(&lhs, &rhs) < 1e-20);
            assert!(rel_diff(&gamma_fn(&a).unwrap(), &gamma_oracle(&a)) < 1e-25);
        }
    }

    #[test]
    fn beta_complete_cases() {
        let b = beta_fn(&hp(1.0), &hp(7.0), None).unwrap();
        assert!(rel_diff(&b, &frac(1, 7)) < 1e-70);
        let a = frac(1, 3);
        let n = hp(100.0);
        let via_gamma = gamma_oracle(&a) * gamma_oracle(&n) / gamma_oracle(&(&a + &n));
        assert!(rel_diff(&beta_fn(&a, &n, None).unwrap(), &via_gamma) < 1e-20);
    }

    #[test]
    fn beta_is_symmetric() {
        for (a, b) in [(0.3, 5.0), (2.5, 0.75), (1.0 / 3.0, 800.0)] {
            let (a, b) = (hp(a), hp(b));
            assert_eq!(beta_fn(&a, &b, None).unwrap(), beta_fn(&b, &a, None).unwrap());
        }
    }

    #[test]
    fn incomplete_beta_full_interval_is_complete() {
        let (a, b) = (frac(1, 3), hp(12.0));
        let one = HpScalar::one(P);
        assert_eq!(beta_fn(&a, &b, Some(&one)).unwrap(), beta_fn(&a, &b, None).unwrap());
    }

    #[test]
    fn incomplete_beta_matches_polynomial_antiderivative() {
        // ∫_0^x t (1-t)^2 dt = x²/2 − 2x³/3 + x⁴/4
        for x in [frac(1, 10), frac(2, 5), frac(9, 10)] {
            let exact = x.powi(2) / 2.0 - x.powi(3) * frac(2, 3) + x.powi(4) / 4.0;
            let got = beta_fn(&hp(2.0), &hp(3.0), Some(&x)).unwrap();
            assert!(rel_diff(&got, &exact) < 1e-20, "{x:?}");
        }
    }

    #[test]
    fn incomplete_beta_complements() {
        // B(x; a, b) + B(1-x; b, a) = B(a, b)
        let (a, b) = (frac(1, 3), hp(40.0));
        let x = frac(1, 50);
        let one = HpScalar::one(P);
        let lhs = beta_fn(&a, &b, Some(&x)).unwrap() + beta_fn(&b, &a, Some(&(&one - &x))).unwrap();
        assert!(rel_diff(&lhs, &beta_fn(&a, &b, None).unwrap()) < 1e-20);
    }

    #[test]
    fn beta_domain_errors() {
        assert!(beta_fn(&hp(0.0), &hp(1.0), None).is_err());
        assert!(beta_fn(&hp(1.0), &hp(1.0), Some(&hp(0.0))).is_err());
        assert!(beta_fn(&hp(1.0), &hp(1.0), Some(&hp(1.5))).is_err());
    }
}
