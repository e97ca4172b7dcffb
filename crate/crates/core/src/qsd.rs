//! The stationary measure of the regenerative chain, scaled so that the all-infected state has
//! mass one: `u_n = μ(0,n)`, `v_n = μ(1,n)`, `v_N = 1`.
//!
//! Three routes are provided: the three-term recurrences solved downward from `v_N`, a direct
//! stationary solve of the chain, and the integral representation of the restricted measure
//! `π_n` (proportional to `v_n` for `n ≥ 1`).

use std::io::Write;

use rug::Rational;
use serde::Serialize;

use crate::chain::{build_reduced_chain, ChainSpec, Mode, ModelParams, State};
use crate::error::{Error, Result};
use crate::numerics::quad::{integrate, integrate_singular, QuadOptions};
use crate::numerics::special::beta_fn;
use crate::numerics::{binomial, rel_diff, HpScalar, Precision, PrecisionPolicy, Scalar};
use crate::potential::stationary_distribution;

/// `u`, `v` and the total mass `Z = Σ (u_n + v_n)` of the scaled stationary measure.
#[derive(Debug, Clone, PartialEq)]
pub struct QsdMeasure {
    pub params: ModelParams,
    pub u: Vec<HpScalar>,
    pub v: Vec<HpScalar>,
    pub z: HpScalar,
    /// Precision at which the result was accepted.
    pub precision: Precision,
}

/// Solution of the recurrences in an arbitrary field, with the auxiliary sequence `a_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceSolution<S> {
    pub u: Vec<S>,
    pub v: Vec<S>,
    /// `a_n = n u_n` for `n ≥ 1`, `a_0 = α u_0 / (1+λ)`; index `N+1` holds zero.
    pub a: Vec<S>,
}

/// Runs the recurrences once in the field `S`:
/// `v_n = [(n+2+λN) v_{n+1} − (n+2) v_{n+2}] / (λ(1+λ)(N−n))` downward from `v_{N+1} = 0`,
/// `v_N = 1`; then `a_{n+1} = λ(N−n) v_n − (n+1) v_{n+1}`, `u_n = a_n / n`, and
/// `u_0 = (v_0 + a_1) / α`.
pub fn solve_recurrence<S: Scalar>(params: &ModelParams, ctx: S::Ctx) -> RecurrenceSolution<S> {
    let big_n = params.n;
    let lambda = S::from_rational(&params.lambda, ctx);
    let alpha = S::from_rational(&params.alpha, ctx);
    let one = S::one(ctx);
    let int = |k: usize| S::from_i64(k as i64, ctx);
    let lambda_big_n = lambda.mul(&int(big_n));
    let growth = lambda.mul(&one.add(&lambda));

    let mut v = vec![S::zero(ctx); big_n + 2];
    v[big_n] = one.clone();
    for n in (0..big_n).rev() {
        let lhs = int(n + 2).add(&lambda_big_n).mul(&v[n + 1]).sub(&int(n + 2).mul(&v[n + 2]));
        v[n] = lhs.div(&growth.mul(&int(big_n - n)));
    }
    let mut a = vec![S::zero(ctx); big_n + 2];
    for n in 0..big_n {
        a[n + 1] = lambda.mul(&int(big_n - n)).mul(&v[n]).sub(&int(n + 1).mul(&v[n + 1]));
    }
    let mut u = vec![S::zero(ctx); big_n + 1];
    for n in 1..=big_n {
        u[n] = a[n].div(&int(n));
    }
    u[0] = v[0].add(&a[1]).div(&alpha);
    a[0] = alpha.mul(&u[0]).div(&one.add(&lambda));
    v.truncate(big_n + 1);
    RecurrenceSolution { u, v, a }
}

/// Largest relative residual of `v_n = (1+λ) a_n − a_{n+1}` and of
/// `(n+1) a_{n+2} − (n+2+λ(N+1)) a_{n+1} + λ(1+λ)(N−n) a_n = 0` over all `n`; neither identity is
/// used to build the solution.
pub fn recurrence_residual(params: &ModelParams, sol: &RecurrenceSolution<HpScalar>) -> f64 {
    let big_n = params.n;
    let prec = sol.v[0].prec();
    let lambda = params.lambda_hp(prec);
    let one = HpScalar::one(prec);
    let int = |k: usize| HpScalar::from_int(k as i64, prec);
    let a = |k: usize| sol.a.get(k).cloned().unwrap_or_else(|| HpScalar::zero(prec));
    let rel = |terms: &[HpScalar]| -> f64 {
        let scale = terms.iter().fold(HpScalar::zero(prec), |m, t| m.max(&t.abs()));
        if scale.is_zero() {
            return 0.0;
        }
        let total: HpScalar = terms.iter().cloned().sum();
        (total.abs() / scale).to_f64()
    };
    let mut worst = 0.0f64;
    for n in 1..=big_n {
        let t = [sol.v[n].clone(), -((&one + &lambda) * a(n)), a(n + 1)];
        worst = worst.max(rel(&t));
    }
    for n in 0..=big_n {
        let t = [
            int(n + 1) * a(n + 2),
            -((int(n + 2) + &lambda * int(big_n + 1)) * a(n + 1)),
            &lambda * (&one + &lambda) * int(big_n - n) * a(n),
        ];
        worst = worst.max(rel(&t));
    }
    worst
}

/// Recurrence solution with adaptive precision: doubles the working precision until `v_0` and
/// `u_0` agree across two consecutive precisions and the residual check passes at `2^{−p/2}`.
pub fn qsd_by_recurrence(params: &ModelParams, policy: &PrecisionPolicy) -> Result<QsdMeasure> {
    let (sol, prec) = policy.escalate(
        |p| {
            let sol = solve_recurrence::<HpScalar>(params, p);
            let tol = 2f64.powi(-(p as i32) / 2);
            if recurrence_residual(params, &sol) > tol {
                return Ok(None);
            }
            Ok(Some(sol))
        },
        |sol| vec![sol.v[0].clone(), sol.u[0].clone()],
    )?;
    Ok(QsdMeasure::from_parts(params.clone(), sol.u, sol.v, prec))
}

impl QsdMeasure {
    pub fn from_parts(params: ModelParams, u: Vec<HpScalar>, v: Vec<HpScalar>, precision: Precision) -> Self {
        let z = u.iter().chain(&v).cloned().sum();
        QsdMeasure { params, u, v, z, precision }
    }

    /// Rescales a stationary vector of the regenerative chain (reduced-chain indexing) to
    /// `v_N = 1`.
    pub fn from_stationary(params: &ModelParams, mu: &[HpScalar]) -> Self {
        let big_n = params.n;
        let prec = mu[0].prec();
        let top = &mu[State::new(1, big_n).index(big_n)];
        let scale =
            |h: u8| -> Vec<HpScalar> { (0..=big_n).map(|n| &mu[State::new(h, n).index(big_n)] / top).collect() };
        Self::from_parts(params.clone(), scale(0), scale(1), prec)
    }

    /// The probability vector `ν = μ / Z` in reduced-chain indexing.
    pub fn distribution(&self) -> Vec<HpScalar> {
        self.u.iter().chain(&self.v).map(|x| x / &self.z).collect()
    }

    /// Writes `n,u_decimal,v_decimal,log10_u,log10_v`, one row per `n`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(["n", "u_decimal", "v_decimal", "log10_u", "log10_v"]).map_err(io)?;
        for n in 0..=self.params.n {
            w.write_record([
                n.to_string(),
                self.u[n].to_decimal(),
                self.v[n].to_decimal(),
                format_log10(self.u[n].log10()),
                format_log10(self.v[n].log10()),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc {
            #[serde(rename = "N")]
            n: usize,
            lambda: String,
            alpha: String,
            precision_bits: u32,
            #[serde(rename = "Z")]
            z: String,
            u: Vec<String>,
            v: Vec<String>,
            log10_u: Vec<f64>,
            log10_v: Vec<f64>,
        }
        let doc = Doc {
            n: self.params.n,
            lambda: self.params.lambda.to_string(),
            alpha: self.params.alpha.to_string(),
            precision_bits: self.precision,
            z: self.z.to_decimal(),
            u: self.u.iter().map(HpScalar::to_decimal).collect(),
            v: self.v.iter().map(HpScalar::to_decimal).collect(),
            log10_u: self.u.iter().map(HpScalar::log10).collect(),
            log10_v: self.v.iter().map(HpScalar::log10).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes")
    }
}

pub(crate) fn format_log10(x: f64) -> String {
    format!("{x:.12}")
}

/// Stationary distribution of an irreducible chain (exact for rational rates).
pub fn stationary_oracle<S: Scalar>(chain: &ChainSpec<S>) -> Result<Vec<S>> {
    stationary_distribution(chain)
}

/// Exact `(u, v)` from a rational stationary solve of the regenerative chain, scaled to `v_N = 1`.
pub fn exact_measure_by_oracle(params: &ModelParams) -> Result<(Vec<Rational>, Vec<Rational>)> {
    let chain = build_reduced_chain::<Rational>(params, Mode::Regenerative, ());
    let mu = stationary_oracle(&chain)?;
    let big_n = params.n;
    let top = mu[State::new(1, big_n).index(big_n)].clone();
    let scale = |h: u8| -> Vec<Rational> {
        (0..=big_n).map(|n| Rational::from(&mu[State::new(h, n).index(big_n)] / &top)).collect()
    };
    Ok((scale(0), scale(1)))
}

/// `p = λ/(1+2λ)` and `β = 2λ/(1+2λ)` at the given precision.
fn p_beta(params: &ModelParams, prec: Precision) -> (HpScalar, HpScalar) {
    let lambda = params.lambda_hp(prec);
    let denom = HpScalar::one(prec) + &lambda * 2.0;
    (&lambda / &denom, &lambda * 2.0 / denom)
}

fn quad_opts(prec: Precision) -> QuadOptions {
    QuadOptions { rel_tol: 1e-24_f64.max(2f64.powi(-(prec as i32) / 2)), ..QuadOptions::with_prec(prec) }
}

/// `I_{N'} = ∫_0^1 (1 − p t)^{N'} (1 − t)^{−β} dt`.
pub fn i_n_integral(params: &ModelParams, order: usize, prec: Precision) -> Result<HpScalar> {
    let (p, beta) = p_beta(params, prec);
    let one = HpScalar::one(prec);
    integrate_singular(|t| (&one - &(&p * t)).powi(order as i64), &HpScalar::zero(prec), &one, &beta, &quad_opts(prec))
}

/// `I_{N'} − I_{N'−1} = −p ∫_0^1 t (1 − p t)^{N'−1} (1 − t)^{−β} dt`, evaluated without
/// subtracting the two integrals.
pub fn i_n_difference(params: &ModelParams, order: usize, prec: Precision) -> Result<HpScalar> {
    assert!(order >= 1);
    let (p, beta) = p_beta(params, prec);
    let one = HpScalar::one(prec);
    let inner = integrate_singular(
        |t| t * &(&one - &(&p * t)).powi(order as i64 - 1),
        &HpScalar::zero(prec),
        &one,
        &beta,
        &quad_opts(prec),
    )?;
    Ok(-(p * inner))
}

/// The constants `b/π₀`, `c/π₀` and `π₀` of the restricted measure `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormConstants {
    pub b_over_pi0: HpScalar,
    pub c_over_pi0: HpScalar,
    pub pi0: HpScalar,
    /// Two-term expansion `−λ²N² + λ(1+3λ)N`.
    pub b_over_pi0_asymptotic: HpScalar,
}

/// `b/π₀ = λ(1 + 2λ − I_N) / (I_N − I_{N−1})` by quadrature, `c/π₀ = −1`, and `π₀` from the
/// normalization `Σ π_n = 1` written as positive beta-weighted binomial sums.
pub fn b_over_pi0(params: &ModelParams, prec: Precision) -> Result<ClosedFormConstants> {
    let big_n = params.n;
    let lambda = params.lambda_hp(prec);
    let one = HpScalar::one(prec);
    let denom = &one + &lambda * 2.0;
    let i_n = i_n_integral(params, big_n, prec)?;
    let diff = i_n_difference(params, big_n, prec)?;
    let b = &lambda * (&denom - &i_n) / diff;
    let c = -HpScalar::one(prec);

    // Summing the integral form over n: 1/π₀ = [(b/λ − c) S(N) − (1+λ)(b/λ) S(N−1)] / (1+2λ).
    let s_n = binomial_beta_sum(params, big_n, prec)?;
    let s_n1 = binomial_beta_sum(params, big_n - 1, prec)?;
    let b_l = &b / &lambda;
    let inv_pi0 = ((&b_l - &c) * &s_n - (&one + &lambda) * &b_l * &s_n1) / &denom;
    let pi0 = inv_pi0.recip();

    let nn = HpScalar::from_int(big_n as i64, prec);
    let asym = -(&lambda * &lambda * &nn * &nn) + &lambda * (&one + &lambda * 3.0) * &nn;
    Ok(ClosedFormConstants { b_over_pi0: b, c_over_pi0: c, pi0, b_over_pi0_asymptotic: asym })
}

/// `S(M) = Σ_{j=0}^{M} C(M,j) B(1/(1+2λ), j+1) (λ²/(1+2λ))^j`.
fn binomial_beta_sum(params: &ModelParams, m: usize, prec: Precision) -> Result<HpScalar> {
    let wp = prec + 64;
    let lambda = params.lambda_hp(wp);
    let denom = HpScalar::one(wp) + &lambda * 2.0;
    let a = denom.recip();
    let x = &lambda * &lambda / &denom;
    let mut total = HpScalar::zero(wp);
    // B(a, j+1) = B(a, j) · j / (a + j)
    let mut beta = beta_fn(&a, &HpScalar::one(wp), None)?;
    let mut power = HpScalar::one(wp);
    for j in 0..=m {
        if j > 0 {
            let jj = HpScalar::from_int(j as i64, wp);
            beta = &beta * &jj / (&a + &jj);
            power = &power * &x;
        }
        total = total + binomial(m as u64, j as u64, wp) * &beta * &power;
    }
    Ok(total.with_prec(prec))
}

/// `J(i, k) = ∫_0^p u^i (1−u)^k (1 − u/p)^{−β} du`.
fn j_integral(params: &ModelParams, i: usize, k: i64, prec: Precision) -> Result<HpScalar> {
    let (p, beta) = p_beta(params, prec);
    let one = HpScalar::one(prec);
    let g = |u: &HpScalar| u.powi(i as i64) * (&one - u).powi(k);
    let raw = integrate_singular(g, &HpScalar::zero(prec), &p, &beta, &quad_opts(prec))?;
    Ok(raw * p.powf(&beta))
}

/// Whether `n` lies within `N^{0.6}` of `λN/(1+2λ)`, where the integral representation of
/// `π_n` cancels heavily.
pub fn pi_near_transition(params: &ModelParams, n: usize) -> bool {
    let lam = params.lambda_f64();
    let big_n = params.n as f64;
    (n as f64 - lam * big_n / (1.0 + 2.0 * lam)).abs() < big_n.powf(0.6)
}

/// `π_n / π₀` from the integral representation (three integrals for `n ≥ 1`, two for `n = 0`):
/// `−(b/λ²) C(N−1,n) (1+λ)^n J(n, N−n−1) − (b/λ) C(N−1,n−1) (1+λ)^{n−1} J(n−1, N−n)
///  − ((c − b/λ)/λ) C(N,n) (1+λ)^n J(n, N−n)`.
pub fn pi_ratio_integral(
    params: &ModelParams,
    consts: &ClosedFormConstants,
    n: usize,
    prec: Precision,
) -> Result<HpScalar> {
    let big_n = params.n;
    if n > big_n {
        return Err(Error::StateOutOfRange(n));
    }
    if pi_near_transition(params, n) {
        log::warn!("pi_{n} for N={big_n}: n is close to the transition point; the integral form loses accuracy");
    }
    let lambda = params.lambda_hp(prec);
    let one = HpScalar::one(prec);
    let b = &consts.b_over_pi0;
    let c = &consts.c_over_pi0;
    let cb = c - &(b / &lambda);
    if n == 0 {
        let (p, beta) = p_beta(params, prec);
        let denom = &one + &lambda * 2.0;
        let opts = quad_opts(prec);
        let zero = HpScalar::zero(prec);
        let i_n1 = integrate_singular(|t| (&one - &(&p * t)).powi(big_n as i64 - 1), &zero, &one, &beta, &opts)?;
        let i_n = integrate_singular(|t| (&one - &(&p * t)).powi(big_n as i64), &zero, &one, &beta, &opts)?;
        return Ok(-(b / (&lambda * &denom)) * i_n1 - &cb / &denom * i_n);
    }
    let nb = big_n as u64;
    let nu = n as u64;
    let grow = (&one + &lambda).powi(n as i64);
    let grow1 = (&one + &lambda).powi(n as i64 - 1);
    let k = big_n as i64 - n as i64;
    let mut total = HpScalar::zero(prec);
    if n < big_n {
        let t1 = binomial(nb - 1, nu, prec) * &grow * j_integral(params, n, k - 1, prec)?;
        total = total - b / (&lambda * &lambda) * t1;
    }
    let t2 = binomial(nb - 1, nu - 1, prec) * &grow1 * j_integral(params, n - 1, k, prec)?;
    let t3 = binomial(nb, nu, prec) * &grow * j_integral(params, n, k, prec)?;
    total = total - b / &lambda * t2 - &cb / &lambda * t3;
    Ok(total)
}

/// `π_n` from the integral representation, scaled by `π₀`.
pub fn pi_integral(params: &ModelParams, n: usize, prec: Precision) -> Result<HpScalar> {
    let consts = b_over_pi0(params, prec)?;
    Ok(pi_ratio_integral(params, &consts, n, prec)? * consts.pi0)
}

/// The restricted measure `π` implied by a recurrence solution: `π ∝ (v_1/(λN), v_1, …, v_N)`.
pub fn pi_from_measure(qsd: &QsdMeasure) -> Vec<HpScalar> {
    let big_n = qsd.params.n;
    let prec = qsd.v[0].prec();
    let lambda_n = qsd.params.lambda_hp(prec) * HpScalar::from_int(big_n as i64, prec);
    let mut pi: Vec<HpScalar> = std::iter::once(&qsd.v[1] / &lambda_n).chain(qsd.v[1..].iter().cloned()).collect();
    let total: HpScalar = pi.iter().cloned().sum();
    for x in &mut pi {
        *x = &*x / &total;
    }
    pi
}

/// `Σ_{k<m} (−1)^k C(a,k) p^{−k−1} B(k+1, N'+1)` with `a = −2λ/(1+2λ)`, `p = λ/(1+2λ)`.
pub fn taylor_expansion_i(params: &ModelParams, order: usize, m: usize, prec: Precision) -> Result<HpScalar> {
    if m == 0 {
        return Err(Error::InvalidParams("expansion needs at least one term".into()));
    }
    let (p, beta) = p_beta(params, prec);
    let a = -beta;
    let big = HpScalar::from_int(order as i64 + 1, prec);
    let mut total = HpScalar::zero(prec);
    let mut gen_binom = HpScalar::one(prec);
    for k in 0..m {
        if k > 0 {
            let kk = HpScalar::from_int(k as i64, prec);
            gen_binom = gen_binom * (&a - &(&kk - 1.0)) / &kk;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let b = beta_fn(&HpScalar::from_int(k as i64 + 1, prec), &big, None)?;
        total = total + &gen_binom * sign * p.powi(-(k as i64) - 1) * b;
    }
    Ok(total)
}

/// Plain-quadrature value of `I_{N'}` by `∫_0^1` without the singular substitution, only for tests
/// of the substitution itself on the smooth part `(1 − pt)^{N'}`.
#[doc(hidden)]
pub fn smooth_part_integral(params: &ModelParams, order: usize, prec: Precision) -> Result<HpScalar> {
    let (p, _) = p_beta(params, prec);
    let one = HpScalar::one(prec);
    integrate(|t| (&one - &(&p * t)).powi(order as i64), &HpScalar::zero(prec), &one, &quad_opts(prec))
}

/// Maximum relative difference between two equally long vectors.
pub fn max_rel_diff(a: &[HpScalar], b: &[HpScalar]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_diff(x, y)).fold(0.0, f64::max)
}
