//! Flows on the edge set of a chain, the associated flows of a function, and the Dirichlet and
//! Thomson functionals.

use std::collections::BTreeMap;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::numerics::Scalar;

use super::chain_ctx;

/// An antisymmetric edge function, `φ(x,y) = −φ(y,x)`. Only the orientation `x < y` is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow<S> {
    values: BTreeMap<(usize, usize), S>,
}

impl<S: Scalar> Default for Flow<S> {
    fn default() -> Self {
        Flow { values: BTreeMap::new() }
    }
}

impl<S: Scalar> Flow<S> {
    pub fn new() -> Self {
        Self::default()
    }

    /// `φ(x,y)`, or `None` off the support.
    pub fn get(&self, x: usize, y: usize) -> Option<S> {
        if x < y {
            self.values.get(&(x, y)).cloned()
        } else {
            self.values.get(&(y, x)).map(|v| v.neg())
        }
    }

    /// Sets `φ(x,y) = v` (and so `φ(y,x) = −v`).
    pub fn set(&mut self, x: usize, y: usize, v: S) {
        assert_ne!(x, y, "flows have no self-loops");
        if x < y {
            self.values.insert((x, y), v);
        } else {
            self.values.insert((y, x), v.neg());
        }
    }

    /// `φ(x,y) += v`.
    pub fn add(&mut self, x: usize, y: usize, v: &S) {
        assert_ne!(x, y, "flows have no self-loops");
        let (key, v) = if x < y { ((x, y), v.clone()) } else { ((y, x), v.neg()) };
        match self.values.get_mut(&key) {
            Some(cur) => *cur = cur.add(&v),
            None => {
                self.values.insert(key, v);
            }
        }
    }

    /// `(x, y, φ(x,y))` with `x < y`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &S)> + '_ {
        self.values.iter().map(|(&(x, y), v)| (x, y, v))
    }

    pub fn is_zero(&self) -> bool {
        self.values.values().all(|v| v.is_zero())
    }

    pub fn scaled(&self, c: &S) -> Self {
        Flow { values: self.values.iter().map(|(&k, v)| (k, v.mul(c))).collect() }
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (x, y, v) in other.iter() {
            out.add(x, y, v);
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (x, y, v) in other.iter() {
            out.add(x, y, &v.neg());
        }
        out
    }

    /// Net outflow `Σ_y φ(x,y)` at a single state.
    pub fn divergence(&self, x: usize, ctx: S::Ctx) -> S {
        self.iter().fold(S::zero(ctx), |acc, (a, b, v)| {
            if a == x {
                acc.add(v)
            } else if b == x {
                acc.sub(v)
            } else {
                acc
            }
        })
    }

    /// Divergence at every state `0..len`.
    pub fn divergences(&self, len: usize, ctx: S::Ctx) -> Vec<S> {
        let mut div = vec![S::zero(ctx); len];
        for (x, y, v) in self.iter() {
            div[x] = div[x].add(v);
            div[y] = div[y].sub(v);
        }
        div
    }
}

/// `c(x,y) = μ(x) r(x,y)`.
fn conductance<S: Scalar>(chain: &ChainSpec<S>, mu: &[S], x: usize, y: usize, ctx: S::Ctx) -> S {
    chain.rate(x, y).map(|r| mu[x].mul(r)).unwrap_or_else(|| S::zero(ctx))
}

/// `⟨φ,ψ⟩ = ½ Σ_{(x,y)} φ(x,y) ψ(x,y) / c^s(x,y)`, with `c^s` the symmetrized conductance.
pub fn flow_inner<S: Scalar>(chain: &ChainSpec<S>, phi: &Flow<S>, psi: &Flow<S>) -> Result<S> {
    let mu = chain.stationary()?;
    let ctx = chain_ctx(chain)?;
    let two = S::from_i64(2, ctx);
    let mut acc = S::zero(ctx);
    for (x, y, a) in phi.iter() {
        let Some(b) = psi.get(x, y) else { continue };
        if a.is_zero() || b.is_zero() {
            continue;
        }
        let cs = conductance(chain, mu, x, y, ctx).add(&conductance(chain, mu, y, x, ctx)).div(&two);
        if cs.is_zero() {
            return Err(Error::FlowSupport(x, y));
        }
        // both orientations contribute the same term, cancelling the ½
        acc = acc.add(&a.mul(&b).div(&cs));
    }
    for (x, y, v) in psi.iter().chain(phi.iter()) {
        if !v.is_zero() && chain.rate(x, y).is_none() && chain.rate(y, x).is_none() {
            return Err(Error::FlowSupport(x, y));
        }
    }
    Ok(acc)
}

pub fn flow_norm_sq<S: Scalar>(chain: &ChainSpec<S>, phi: &Flow<S>) -> Result<S> {
    flow_inner(chain, phi, phi)
}

/// `(Φ_f, Φ*_f, Ψ_f)` with `Φ_f(x,y) = f(y)c(y,x) − f(x)c(x,y)`,
/// `Φ*_f(x,y) = f(y)c(x,y) − f(x)c(y,x)` and `Ψ_f = (Φ_f + Φ*_f)/2`.
pub fn associated_flows<S: Scalar>(chain: &ChainSpec<S>, f: &[S]) -> Result<(Flow<S>, Flow<S>, Flow<S>)> {
    let mu = chain.stationary()?;
    let ctx = chain_ctx(chain)?;
    let two = S::from_i64(2, ctx);
    let mut pairs: Vec<(usize, usize)> = chain.edges().map(|(x, y, _)| if x < y { (x, y) } else { (y, x) }).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let (mut phi, mut phi_star, mut psi) = (Flow::new(), Flow::new(), Flow::new());
    for (x, y) in pairs {
        let cxy = conductance(chain, mu, x, y, ctx);
        let cyx = conductance(chain, mu, y, x, ctx);
        let a = f[y].mul(&cyx).sub(&f[x].mul(&cxy));
        let b = f[y].mul(&cxy).sub(&f[x].mul(&cyx));
        let c = a.add(&b).div(&two);
        phi.set(x, y, a);
        phi_star.set(x, y, b);
        psi.set(x, y, c);
    }
    Ok((phi, phi_star, psi))
}

fn check_values<S: Scalar>(f: &[S], set: &[usize], value: &S) -> Result<()> {
    match set.iter().find(|&&x| !f[x].sub(value).is_zero()) {
        Some(&x) => Err(Error::Infeasible(x)),
        None => Ok(()),
    }
}

/// `Σ_x h(x) (DIV φ)(x)`.
fn weighted_divergence<S: Scalar>(phi: &Flow<S>, h: &[S], ctx: S::Ctx) -> S {
    phi.divergences(h.len(), ctx)
        .iter()
        .zip(h)
        .fold(S::zero(ctx), |acc, (d, w)| if w.is_zero() { acc } else { acc.add(&d.mul(w)) })
}

/// `‖Φ_f − φ‖² − 2 Σ_x h_{A,B}(x) (DIV φ)(x)` for `f = 1` on `A`, `f = 0` on `B`.
/// Every feasible pair gives an upper bound on `CAP(A,B)`.
pub fn dirichlet_functional<S: Scalar>(
    chain: &ChainSpec<S>,
    a: &[usize],
    b: &[usize],
    f: &[S],
    phi: &Flow<S>,
    h: &[S],
) -> Result<S> {
    let ctx = chain_ctx(chain)?;
    check_values(f, a, &S::one(ctx))?;
    check_values(f, b, &S::zero(ctx))?;
    let (phi_f, _, _) = associated_flows(chain, f)?;
    let norm = flow_norm_sq(chain, &phi_f.minus(phi))?;
    let two = S::from_i64(2, ctx);
    Ok(norm.sub(&two.mul(&weighted_divergence(phi, h, ctx))))
}

/// `[Σ_x h_{A,B}(x) (DIV ψ)(x)]² / ‖Φ_g − ψ‖²` for `g = 0` on `A ∪ B` and `ψ ≠ 0`.
/// Every feasible pair gives a lower bound on `CAP(A,B)`.
pub fn thomson_functional<S: Scalar>(
    chain: &ChainSpec<S>,
    a: &[usize],
    b: &[usize],
    g: &[S],
    psi: &Flow<S>,
    h: &[S],
) -> Result<S> {
    let ctx = chain_ctx(chain)?;
    if psi.is_zero() {
        return Err(Error::ZeroFlow);
    }
    check_values(g, a, &S::zero(ctx))?;
    check_values(g, b, &S::zero(ctx))?;
    let (phi_g, _, _) = associated_flows(chain, g)?;
    let norm = flow_norm_sq(chain, &phi_g.minus(psi))?;
    if norm.is_zero() {
        return Err(Error::ZeroFlow);
    }
    let num = weighted_divergence(psi, h, ctx);
    Ok(num.mul(&num).div(&norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::with_stationary;
    use rug::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn antisymmetry_and_divergence() {
        let mut phi = Flow::<Rational>::new();
        phi.set(2, 0, q(3, 1));
        assert_eq!(phi.get(0, 2), Some(q(-3, 1)));
        assert_eq!(phi.divergence(2, ()), q(3, 1));
        assert_eq!(phi.divergence(0, ()), q(-3, 1));
        phi.add(1, 2, &q(1, 2));
        let total = phi.divergences(3, ()).into_iter().fold(q(0, 1), |a, b| a + b);
        assert_eq!(total, q(0, 1));
    }

    #[test]
    fn unit_flow_norm() {
        // c^s(0,1) = ½ under μ = (½, ½) with unit rates.
        let c = with_stationary(ChainSpec::from_rates(2, [(0, 1, q(1, 1)), (1, 0, q(1, 1))]).unwrap()).unwrap();
        let mut phi = Flow::new();
        phi.set(0, 1, q(1, 1));
        assert_eq!(flow_norm_sq(&c, &phi).unwrap(), q(2, 1));
        let mut off = Flow::new();
        off.set(0, 1, q(1, 1));
        let c3 =
            with_stationary(ChainSpec::from_rates(3, [(0, 1, q(1, 1)), (1, 2, q(1, 1)), (2, 0, q(1, 1))]).unwrap())
                .unwrap();
        assert!(flow_norm_sq(&c3, &off).is_ok());
        let mut bad = Flow::new();
        bad.set(0, 2, q(1, 1));
        let path = with_stationary(
            ChainSpec::from_rates(3, [(0, 1, q(1, 1)), (1, 0, q(1, 1)), (1, 2, q(1, 1)), (2, 1, q(1, 1))]).unwrap(),
        )
        .unwrap();
        assert_eq!(flow_norm_sq(&path, &bad).unwrap_err(), Error::FlowSupport(0, 2));
    }

    #[test]
    fn constant_function_flows_are_divergence_free_under_stationarity() {
        let c = with_stationary(
            ChainSpec::from_rates(3, [(0, 1, q(1, 1)), (1, 2, q(2, 1)), (2, 0, q(3, 1)), (1, 0, q(1, 1))]).unwrap(),
        )
        .unwrap();
        let f = vec![q(5, 1); 3];
        let (phi, phi_star, _) = associated_flows(&c, &f).unwrap();
        assert!(phi.divergences(3, ()).iter().all(|d| *d == 0));
        assert!(phi_star.divergences(3, ()).iter().all(|d| *d == 0));
    }

    #[test]
    fn thomson_rejects_zero_flow() {
        let c = with_stationary(ChainSpec::from_rates(2, [(0, 1, q(1, 1)), (1, 0, q(1, 1))]).unwrap()).unwrap();
        let zero = vec![q(0, 1); 2];
        assert_eq!(thomson_functional(&c, &[0], &[1], &zero, &Flow::new(), &zero).unwrap_err(), Error::ZeroFlow);
    }
}
