//! Explicit test functions and flows for bracketing `CAP((0,0), (1,n))` on the trace chain on
//! `F = {(0,0)} ∪ {(1,k)}`.
//!
//! `h` is the indicator of `(0,0)` and `h†` is geometric, `(1+λ)^{−k}`, on `(1,0), …, (1,R₁)`.
//! The tentative flows `(Φ_{h†} ∓ Φ*_h)/2` are corrected in two sweeps so that they become
//! divergence-free away from `(0,0)` and `(1,n)`: first each residual divergence at `(1,k)`,
//! `k ≤ R₁`, is spread over the edges from `(1,l)`, `k < l ≤ R₂`; then the remaining
//! divergences are carried along the nearest-neighbour path towards `(1,n)`.

use crate::asymptotics::w_threshold;
use crate::chain::{
    build_reduced_chain, build_trace_chain, trace_index, trace_states, ChainSpec, Mode, ModelParams, State,
};
use crate::error::{Error, Result};
use crate::numerics::{HpScalar, Precision};

use super::flow::{associated_flows, dirichlet_functional, thomson_functional, Flow};
use super::{equilibrium_potential, stationary_distribution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestObjectOptions {
    /// `R₁ = ⌊N^q⌋`.
    pub q: f64,
    /// Lower edge of the target window, `n ≥ εN`.
    pub eps: f64,
    /// `R₂ = ⌊rN⌋`; defaults to `min(ε, λ/(1+2λ))/2`.
    pub r: Option<f64>,
}

impl Default for TestObjectOptions {
    fn default() -> Self {
        TestObjectOptions { q: 0.3, eps: 0.2, r: None }
    }
}

#[derive(Debug, Clone)]
pub struct TestObjects {
    /// Trace chain with stationary law `μ|_F / μ(F)`.
    pub chain: ChainSpec<HpScalar>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub h: Vec<HpScalar>,
    pub h_dagger: Vec<HpScalar>,
    /// `(h + h†)/2`
    pub f: Vec<HpScalar>,
    /// `(h† − h)/2`
    pub g: Vec<HpScalar>,
    pub phi: Flow<HpScalar>,
    pub psi: Flow<HpScalar>,
    pub r1: usize,
    pub r2: usize,
    /// `μ(F)` under the stationary law of the regenerative chain.
    pub mass_f: HpScalar,
}

/// Admissible targets `[⌈εN⌉, ⌊wN⌋]`.
pub fn target_window(params: &ModelParams, eps: f64) -> Result<(usize, usize)> {
    let big_n = params.n as f64;
    let w = w_threshold(params.lambda_f64())?.w;
    Ok(((eps * big_n).ceil() as usize, (w * big_n).floor() as usize))
}

pub fn capacity_test_objects(
    params: &ModelParams,
    n: usize,
    opts: &TestObjectOptions,
    prec: Precision,
) -> Result<TestObjects> {
    let big_n = params.n;
    let p = params.lambda_f64() / (1.0 + 2.0 * params.lambda_f64());
    if !(opts.q > 0.0 && opts.q < 1.0) {
        return Err(Error::InvalidParams(format!("q = {} outside (0, 1)", opts.q)));
    }
    if !(opts.eps > 0.0 && opts.eps < 1.0) {
        return Err(Error::InvalidParams(format!("eps = {} outside (0, 1)", opts.eps)));
    }
    let r = opts.r.unwrap_or(opts.eps.min(p) / 2.0);
    if !(r > 0.0 && r < opts.eps.min(p)) {
        return Err(Error::InvalidParams(format!("r = {r} outside (0, min(eps, lambda/(1+2 lambda)))")));
    }
    let (lo, hi) = target_window(params, opts.eps)?;
    if n < lo || n > hi {
        return Err(Error::Window { n, lo, hi });
    }
    let r1 = (big_n as f64).powf(opts.q).floor() as usize;
    let r2 = (r * big_n as f64).floor() as usize;
    if r2 <= r1 || r2 >= n {
        return Err(Error::InvalidParams(format!("need R1 = {r1} < R2 = {r2} < n = {n}")));
    }

    let full = build_reduced_chain::<HpScalar>(params, Mode::Regenerative, prec);
    let mu = stationary_distribution(&full)?;
    let states = trace_states(params);
    let mass_f: HpScalar = states.iter().map(|&x| mu[x].clone()).sum();
    let mu_f = states.iter().map(|&x| &mu[x] / &mass_f).collect();
    let chain = build_trace_chain::<HpScalar>(params, prec).with_stationary(mu_f)?;

    let len = big_n + 2;
    let zero = HpScalar::zero(prec);
    let one = HpScalar::one(prec);
    let mut h = vec![zero.clone(); len];
    h[0] = one.clone();
    let mut h_dagger = vec![zero.clone(); len];
    h_dagger[0] = one.clone();
    let q = (&one + params.lambda_hp(prec)).recip();
    let mut geom = one.clone();
    for k in 0..=r1 {
        h_dagger[trace_index(k)] = geom.clone();
        geom = geom * &q;
    }
    let f: Vec<HpScalar> = h.iter().zip(&h_dagger).map(|(a, b)| (a + b) / 2.0).collect();
    let g: Vec<HpScalar> = h.iter().zip(&h_dagger).map(|(a, b)| (b - a) / 2.0).collect();

    let (_, phi_star_h, _) = associated_flows(&chain, &h)?;
    let (phi_hd, _, _) = associated_flows(&chain, &h_dagger)?;
    let half = HpScalar::from_f64(0.5, prec);
    let phi = correct(phi_hd.minus(&phi_star_h).scaled(&half), big_n, n, r1, r2, prec);
    let psi = correct(phi_hd.plus(&phi_star_h).scaled(&half), big_n, n, r1, r2, prec);

    Ok(TestObjects { chain, a: vec![0], b: vec![trace_index(n)], h, h_dagger, f, g, phi, psi, r1, r2, mass_f })
}

fn correct(mut flow: Flow<HpScalar>, big_n: usize, n: usize, r1: usize, r2: usize, prec: Precision) -> Flow<HpScalar> {
    let t = trace_index;
    for k in 0..=r1 {
        let d = flow.divergence(t(k), prec);
        if d.is_zero() {
            continue;
        }
        if k == 0 {
            // (1,1) is the only neighbour of (1,0) within the count ladder
            flow.add(t(0), t(1), &-d);
        } else {
            let share = d / HpScalar::from_int((r2 - k) as i64, prec);
            for l in k + 1..=r2 {
                flow.add(t(l), t(k), &share);
            }
        }
    }
    let div = flow.divergences(big_n + 2, prec);
    let mut below = HpScalar::zero(prec);
    for k in 0..n {
        below = below + &div[t(k)];
        if k > r1 {
            flow.add(t(k), t(k + 1), &-below.clone());
        }
    }
    let mut above = HpScalar::zero(prec);
    for k in (n..big_n).rev() {
        above = above + &div[t(k + 1)];
        flow.add(t(k), t(k + 1), &above);
    }
    flow
}

/// Values of the two functionals next to the exact capacity of the trace chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub dirichlet: HpScalar,
    pub exact: HpScalar,
    pub thomson: HpScalar,
}

impl TestObjects {
    /// Exact equilibrium potential `h_{(0,0),(1,n)}` on `F` and `CAP_F`, through the sparse
    /// regenerative chain and `μ(F) CAP_F = CAP`.
    pub fn exact(&self, params: &ModelParams, prec: Precision) -> Result<(Vec<HpScalar>, HpScalar)> {
        let full = build_reduced_chain::<HpScalar>(params, Mode::Regenerative, prec);
        let full = super::with_stationary(full)?;
        let target = State::new(1, self.b[0] - 1).index(params.n);
        let sol = equilibrium_potential(&full, &[0], &[target])?;
        let h = trace_states(params).iter().map(|&x| sol.h[x].clone()).collect();
        Ok((h, sol.capacity / &self.mass_f))
    }

    pub fn bracket(&self, params: &ModelParams, prec: Precision) -> Result<Bracket> {
        let (h, exact) = self.exact(params, prec)?;
        let dirichlet = dirichlet_functional(&self.chain, &self.a, &self.b, &self.f, &self.phi, &h)?;
        let thomson = thomson_functional(&self.chain, &self.a, &self.b, &self.g, &self.psi, &h)?;
        Ok(Bracket { dirichlet, exact, thomson })
    }

    /// Largest `|div|` over states other than `(0,0)` and `(1,n)`, for each flow.
    pub fn residual_divergence(&self) -> (HpScalar, HpScalar) {
        let prec = self.h[0].prec();
        let len = self.h.len();
        let worst = |flow: &Flow<HpScalar>| {
            let div = flow.divergences(len, prec);
            (0..len)
                .filter(|x| !self.a.contains(x) && !self.b.contains(x))
                .fold(HpScalar::zero(prec), |m, x| m.max(&div[x].abs()))
        };
        (worst(&self.phi), worst(&self.psi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Rational;

    #[test]
    fn flows_are_divergence_free_off_the_endpoints() {
        let params = ModelParams::with_lambda(100, Rational::from(1)).unwrap();
        let t = capacity_test_objects(&params, 50, &TestObjectOptions::default(), 256).unwrap();
        assert_eq!(t.h_dagger[trace_index(0)], HpScalar::one(256));
        let scale = |f: &Flow<HpScalar>| f.iter().fold(HpScalar::zero(256), |m, (_, _, v)| m.max(&v.abs()));
        let (dp, ds) = t.residual_divergence();
        assert!((dp / scale(&t.phi)).to_f64() < 1e-10);
        assert!((ds / scale(&t.psi)).to_f64() < 1e-10);
    }

    #[test]
    fn window_is_enforced() {
        let params = ModelParams::with_lambda(100, Rational::from(1)).unwrap();
        let err = capacity_test_objects(&params, 5, &TestObjectOptions::default(), 128).unwrap_err();
        assert!(matches!(err, Error::Window { .. }));
    }
}
