//! Adaptive Gauss–Legendre quadrature at arbitrary precision, plus a variant that removes an
//! algebraic endpoint singularity `(b − u)^{−β}` by the substitution `s = (b − u)^{1−β}`.

use std::cell::Cell;

use super::{HpScalar, Precision, DEFAULT_PRECISION};
use crate::error::{Error, Result};

/// Hard cap on integrand evaluations per integral.
pub const DEFAULT_EVAL_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub max_evals: usize,
    /// Gauss–Legendre points per panel.
    pub order: usize,
    pub prec: Precision,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-18, max_evals: DEFAULT_EVAL_BUDGET, order: 20, prec: DEFAULT_PRECISION }
    }
}

impl QuadOptions {
    pub fn with_prec(prec: Precision) -> Self {
        QuadOptions { prec, ..Default::default() }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(order: usize, prec: Precision) -> (Vec<HpScalar>, Vec<HpScalar>) {
    assert!(order >= 2);
    let wp = prec + 32;
    let n = order as i64;
    let one = HpScalar::one(wp);
    let eps = HpScalar::from_int(2, wp).powi(-(i64::from(wp) - 16));
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    for i in 1..=order {
        let guess = (std::f64::consts::PI * (i as f64 - 0.25) / (order as f64 + 0.5)).cos();
        let mut x = HpScalar::from_f64(guess, wp);
        let mut dp = one.clone();
        for _ in 0..100 {
            // P_n(x) and P_{n-1}(x) via the three-term recurrence.
            let mut p0 = one.clone();
            let mut p1 = x.clone();
            for k in 2..=n {
                let p2 = ((&x * &p1) * HpScalar::from_int(2 * k - 1, wp) - &p0 * HpScalar::from_int(k - 1, wp))
                    / HpScalar::from_int(k, wp);
                p0 = p1;
                p1 = p2;
            }
            dp = (&x * &p1 - &p0) * HpScalar::from_int(n, wp) / (&x * &x - &one);
            let dx = &p1 / &dp;
            x = &x - &dx;
            if dx.abs() < eps {
                break;
            }
        }
        let w = HpScalar::from_int(2, wp) / ((&one - &(&x * &x)) * &dp * &dp);
        nodes.push(x.with_prec(prec));
        weights.push(w.with_prec(prec));
    }
    (nodes, weights)
}

struct Integrator<'f, F: Fn(&HpScalar) -> HpScalar> {
    f: &'f F,
    nodes: Vec<HpScalar>,
    weights: Vec<HpScalar>,
    evals: Cell<usize>,
    max_evals: usize,
}

impl<F: Fn(&HpScalar) -> HpScalar> Integrator<'_, F> {
    fn panel(&self, a: &HpScalar, b: &HpScalar) -> Result<HpScalar> {
        let half = (b - a) / 2.0;
        let mid = (a + b) / 2.0;
        let mut sum = HpScalar::zero(a.prec());
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let u = &mid + &(&half * x);
            sum = sum + w * &(self.f)(&u);
        }
        let n = self.evals.get() + self.nodes.len();
        self.evals.set(n);
        if n > self.max_evals {
            return Err(Error::QuadratureBudget(self.max_evals));
        }
        Ok(sum * half)
    }

    fn adapt(&self, a: &HpScalar, b: &HpScalar, whole: HpScalar, tol: &HpScalar, depth: usize) -> Result<HpScalar> {
        let mid = (a + b) / 2.0;
        let left = self.panel(a, &mid)?;
        let right = self.panel(&mid, b)?;
        let refined = &left + &right;
        let err = (&refined - &whole).abs();
        if err <= *tol || depth == 0 {
            return Ok(refined);
        }
        let half_tol = tol / 2.0;
        let l = self.adapt(a, &mid, left, &half_tol, depth - 1)?;
        let r = self.adapt(&mid, b, right, &half_tol, depth - 1)?;
        Ok(l + r)
    }
}

/// `∫_a^b f(u) du` for a smooth integrand.
pub fn integrate(
    f: impl Fn(&HpScalar) -> HpScalar,
    a: &HpScalar,
    b: &HpScalar,
    opts: &QuadOptions,
) -> Result<HpScalar> {
    let prec = opts.prec;
    let (a, b) = (a.with_prec(prec), b.with_prec(prec));
    if a == b {
        return Ok(HpScalar::zero(prec));
    }
    let (nodes, weights) = gauss_legendre(opts.order, prec);
    let integ = Integrator { f: &f, nodes, weights, evals: Cell::new(0), max_evals: opts.max_evals };

    // Coarse pass over 8 panels fixes the magnitude the relative tolerance refers to.
    let pieces = 8;
    let width = (&b - &a) / pieces as f64;
    let mut coarse = Vec::with_capacity(pieces);
    let mut scale = HpScalar::zero(prec);
    for i in 0..pieces {
        let lo = &a + &(&width * i as f64);
        let hi = if i + 1 == pieces { b.clone() } else { &a + &(&width * (i + 1) as f64) };
        let v = integ.panel(&lo, &hi)?;
        scale = scale + v.abs();
        coarse.push((lo, hi, v));
    }
    if scale.is_zero() {
        scale = HpScalar::from_int(2, prec).powi(-(i64::from(prec)));
    }
    let tol = scale * opts.rel_tol / pieces as f64;
    let mut total = HpScalar::zero(prec);
    for (lo, hi, v) in coarse {
        total = total + integ.adapt(&lo, &hi, v, &tol, 60)?;
    }
    Ok(total)
}

/// `∫_a^b g(u) (b − u)^{−β} du` for smooth `g` and `0 ≤ β < 1`.
///
/// With `κ = 1/(1−β)` and `u = b − s^κ` the integral becomes `κ ∫_0^{(b−a)^{1−β}} g(b − s^κ) ds`,
/// whose integrand is bounded.
pub fn integrate_singular(
    g: impl Fn(&HpScalar) -> HpScalar,
    a: &HpScalar,
    b: &HpScalar,
    beta: &HpScalar,
    opts: &QuadOptions,
) -> Result<HpScalar> {
    let prec = opts.prec;
    let one = HpScalar::one(prec);
    if beta.is_negative() || *beta >= one {
        return Err(Error::NonIntegrable(beta.to_f64()));
    }
    if beta.is_zero() {
        return integrate(g, a, b, opts);
    }
    let (a, b) = (a.with_prec(prec), b.with_prec(prec));
    let exponent = &one - &beta.with_prec(prec);
    let kappa = exponent.recip();
    let upper = (&b - &a).powf(&exponent);
    let inner = |s: &HpScalar| -> HpScalar {
        let u = &b - &s.powf(&kappa);
        g(&u)
    };
    let value = integrate(inner, &HpScalar::zero(prec), &upper, opts)?;
    Ok(value * kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rel_diff;
    use rug::Rational;

    fn frac(n: i64, d: i64, prec: Precision) -> HpScalar {
        HpScalar::from_rational(&Rational::from((n, d)), prec)
    }

    #[test]
    fn nodes_integrate_polynomials_exactly() {
        let (x, w) = gauss_legendre(8, 128);
        // ∫_{-1}^{1} x^14 dx = 2/15
        let s: HpScalar = x.iter().zip(&w).map(|(x, w)| w * &x.powi(14)).sum();
        assert!(rel_diff(&s, &frac(2, 15, 128)) < 1e-35);
    }

    #[test]
    fn plain_adaptive_on_peaked_integrand() {
        let opts = QuadOptions::default();
        // ∫_0^1 (1 - t/3)^800 dt = 3/801 (1 - (2/3)^801)
        let p = frac(1, 3, opts.prec);
        let v = integrate(
            |t| (HpScalar::one(opts.prec) - &(&p * t)).powi(800),
            &HpScalar::zero(256),
            &HpScalar::one(256),
            &opts,
        )
        .unwrap();
        let exact = frac(3, 801, 256) * (HpScalar::one(256) - frac(2, 3, 256).powi(801));
        assert!(rel_diff(&v, &exact) < 1e-18);
    }

    #[test]
    fn singular_unit_integrands() {
        let opts = QuadOptions::default();
        let (zero, one) = (HpScalar::zero(256), HpScalar::one(256));
        let g = |_: &HpScalar| HpScalar::one(256);
        let v = integrate_singular(g, &zero, &one, &frac(2, 3, 256), &opts).unwrap();
        assert!(rel_diff(&v, &HpScalar::from_int(3, 256)) < 1e-15);
        let v = integrate_singular(g, &zero, &one, &frac(1, 2, 256), &opts).unwrap();
        assert!(rel_diff(&v, &HpScalar::from_int(2, 256)) < 1e-15);
    }

    /// Brute-force oracle: trapezoid on the transformed variable, refined with Richardson steps.
    fn transformed_trapezoid(c: f64, beta: f64) -> f64 {
        let kappa = 1.0 / (1.0 - beta);
        let upper = c.powf(1.0 - beta);
        let h = |s: f64| kappa * (c - s.powf(kappa));
        let mut prev = f64::NAN;
        let mut n = 1usize << 10;
        let mut estimates = Vec::new();
        while n <= 1 << 22 {
            let step = upper / n as f64;
            let mut sum = 0.5 * (h(0.0) + h(upper));
            for i in 1..n {
                sum += h(i as f64 * step);
            }
            let est = sum * step;
            estimates.push(est);
            if (est - prev).abs() < 1e-14 * est.abs() {
                break;
            }
            prev = est;
            n *= 2;
        }
        *estimates.last().unwrap()
    }

    #[test]
    fn singular_with_linear_numerator() {
        let opts = QuadOptions::default();
        let prec = opts.prec;
        let half = frac(1, 2, prec);
        let beta = frac(1, 3, prec);
        let v = integrate_singular(|u| u.clone(), &HpScalar::zero(prec), &half, &beta, &opts).unwrap();
        let oracle = transformed_trapezoid(0.5, 1.0 / 3.0);
        assert!((v.to_f64() - oracle).abs() < 1e-12 * oracle, "{v:?} vs {oracle}");
        // closed form c^{2-β} (1/(1-β) - 1/(2-β))
        let two = HpScalar::from_int(2, prec);
        let one = HpScalar::one(prec);
        let exact = half.powf(&(&two - &beta)) * ((&one - &beta).recip() - (&two - &beta).recip());
        assert!(rel_diff(&v, &exact) < 1e-15);
    }

    #[test]
    fn zero_exponent_matches_plain_quadrature() {
        let opts = QuadOptions::default();
        let prec = opts.prec;
        let f = |u: &HpScalar| (u * 3.0).exp() * u.powi(2);
        let (a, b) = (HpScalar::zero(prec), frac(7, 10, prec));
        let plain = integrate(f, &a, &b, &opts).unwrap();
        let tiny = HpScalar::from_int(2, prec).powi(-60);
        let near_zero = integrate_singular(|u| f(u) * (&b - u).powf(&tiny), &a, &b, &tiny, &opts).unwrap();
        let zero = integrate_singular(f, &a, &b, &HpScalar::zero(prec), &opts).unwrap();
        assert_eq!(plain, zero);
        assert!(rel_diff(&plain, &near_zero) < 1e-12);
    }

    #[test]
    fn rejects_non_integrable_and_respects_budget() {
        let opts = QuadOptions::default();
        let (zero, one) = (HpScalar::zero(256), HpScalar::one(256));
        let err = integrate_singular(|_| one.clone(), &zero, &one, &one, &opts).unwrap_err();
        assert!(matches!(err, Error::NonIntegrable(_)));
        let tight = QuadOptions { max_evals: 100, rel_tol: 1e-60, ..opts };
        let err = integrate(|u| (u * 50.0).exp().recip() + u.sqrt(), &zero, &one, &tight).unwrap_err();
        assert_eq!(err, Error::QuadratureBudget(100));
    }
}
