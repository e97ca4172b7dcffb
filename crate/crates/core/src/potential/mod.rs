//! Potential theory for finite, possibly non-reversible, continuous-time Markov chains.
//!
//! For a chain with rates `r` and stationary law `μ`: the Dirichlet form
//! `D(f) = ½ Σ μ(x) r(x,y) (f(y) − f(x))²`, the adjoint `r†(x,y) = μ(y) r(y,x) / μ(x)`, the
//! equilibrium potential `h_{A,B}(x) = P_x[τ_A < τ_B]`, the capacity `CAP(A,B) = D(h_{A,B})`,
//! hitting times, and trace processes. All linear solves go through the subtraction-free state
//! reduction in [`elim`], so results keep full relative precision even when the stationary
//! masses span hundreds of orders of magnitude.

pub(crate) mod elim;
pub mod flow;
pub mod test_objects;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::numerics::{HpScalar, Scalar};
use elim::Reducer;

pub use flow::{associated_flows, dirichlet_functional, flow_inner, flow_norm_sq, thomson_functional, Flow};
pub use test_objects::{capacity_test_objects, TestObjectOptions, TestObjects};

/// Construction context (precision) of the chain's scalars.
pub(crate) fn chain_ctx<S: Scalar>(chain: &ChainSpec<S>) -> Result<S::Ctx> {
    chain.edges().next().map(|(_, _, r)| r.ctx()).ok_or_else(|| Error::InvalidParams("chain has no transitions".into()))
}

/// Communicating classes, each sorted, ordered by smallest member.
pub fn communicating_classes<S: Scalar>(chain: &ChainSpec<S>) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(chain.len(), 0);
    let nodes: Vec<_> = (0..chain.len()).map(|_| g.add_node(())).collect();
    for (x, y, _) in chain.edges() {
        g.add_edge(nodes[x], nodes[y], ());
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            c.sort_unstable();
            c
        })
        .collect();
    classes.sort();
    classes
}

pub fn check_irreducible<S: Scalar>(chain: &ChainSpec<S>) -> Result<()> {
    let classes = communicating_classes(chain);
    if classes.len() == 1 {
        Ok(())
    } else {
        Err(Error::Reducible(classes))
    }
}

/// Stationary distribution of an irreducible chain by state reduction.
pub fn stationary_distribution<S: Scalar>(chain: &ChainSpec<S>) -> Result<Vec<S>> {
    check_irreducible(chain)?;
    let len = chain.len();
    if len == 1 {
        return Err(Error::InvalidParams("single-state chain".into()));
    }
    let ctx = chain_ctx(chain)?;
    let mut red = Reducer::new(chain, &vec![true; len], None, ctx);
    let mut targets = vec![true; len];
    targets[len - 1] = false;
    red.eliminate(&targets)?;
    let mut m = vec![S::zero(ctx); len];
    m[len - 1] = S::one(ctx);
    red.back_substitute_measure(&mut m);
    let total = m.iter().fold(S::zero(ctx), |acc, v| acc.add(v));
    Ok(m.iter().map(|v| v.div(&total)).collect())
}

/// The chain with its stationary distribution computed and attached.
pub fn with_stationary<S: Scalar>(chain: ChainSpec<S>) -> Result<ChainSpec<S>> {
    let mu = stationary_distribution(&chain)?;
    chain.with_stationary(mu)
}

/// `½ Σ_{x,y} μ(x) r(x,y) [f(y) − f(x)]²`.
pub fn dirichlet_form<S: Scalar>(chain: &ChainSpec<S>, f: &[S]) -> Result<S> {
    let mu = chain.stationary()?;
    let ctx = chain_ctx(chain)?;
    let mut acc = S::zero(ctx);
    for (x, y, r) in chain.edges() {
        let d = f[y].sub(&f[x]);
        acc = acc.add(&mu[x].mul(r).mul(&d.mul(&d)));
    }
    Ok(acc.div(&S::from_i64(2, ctx)))
}

fn positive_stationary<S: Scalar>(chain: &ChainSpec<S>) -> Result<&[S]> {
    let mu = chain.stationary()?;
    if let Some(x) = mu.iter().position(|m| !m.is_positive()) {
        return Err(Error::ZeroStationaryMass(x));
    }
    Ok(mu)
}

/// Time reversal with respect to `μ`: `r†(x,y) = μ(y) r(y,x) / μ(x)`.
pub fn adjoint_chain<S: Scalar>(chain: &ChainSpec<S>) -> Result<ChainSpec<S>> {
    let mu = positive_stationary(chain)?;
    let mut adj = ChainSpec::new(chain.len());
    for (y, x, r) in chain.edges() {
        adj.add_rate(x, y, mu[y].mul(r).div(&mu[x]))?;
    }
    let adj = match chain.labels() {
        Some(l) => adj.with_labels(l.to_vec()),
        None => adj,
    };
    Ok(adj.with_stationary_unchecked(mu.to_vec()))
}

/// `r^s(x,y) = [μ(x) r(x,y) + μ(y) r(y,x)] / (2 μ(x))`, reversible with respect to `μ`.
pub fn symmetrized_chain<S: Scalar>(chain: &ChainSpec<S>) -> Result<ChainSpec<S>> {
    let mu = positive_stationary(chain)?;
    let ctx = chain_ctx(chain)?;
    let two = S::from_i64(2, ctx);
    let mut sym = ChainSpec::new(chain.len());
    for (x, y, r) in chain.edges() {
        let c = mu[x].mul(r).div(&two);
        sym.add_rate(x, y, c.div(&mu[x]))?;
        sym.add_rate(y, x, c.div(&mu[y]))?;
    }
    let sym = match chain.labels() {
        Some(l) => sym.with_labels(l.to_vec()),
        None => sym,
    };
    Ok(sym.with_stationary_unchecked(mu.to_vec()))
}

fn canonical_set(set: &[usize], len: usize) -> Result<Vec<usize>> {
    let s: BTreeSet<usize> = set.iter().copied().collect();
    if s.is_empty() {
        return Err(Error::BadStateSets);
    }
    if let Some(&x) = s.iter().find(|&&x| x >= len) {
        return Err(Error::StateOutOfRange(x));
    }
    Ok(s.into_iter().collect())
}

fn canonical_pair(a: &[usize], b: &[usize], len: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let a = canonical_set(a, len)?;
    let b = canonical_set(b, len)?;
    if a.iter().any(|x| b.binary_search(x).is_ok()) {
        return Err(Error::BadStateSets);
    }
    Ok((a, b))
}

/// Equilibrium potential `h_{A,B}` with the capacity between `A` and `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSolution<S> {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub h: Vec<S>,
    pub capacity: S,
}

#[derive(Serialize)]
struct PotentialJson<'a> {
    #[serde(rename = "A")]
    a: &'a [usize],
    #[serde(rename = "B")]
    b: &'a [usize],
    capacity: String,
    h: Vec<String>,
}

impl PotentialSolution<HpScalar> {
    /// `{"A": [...], "B": [...], "capacity": "<decimal>", "h": ["<decimal>", ...]}`.
    pub fn to_json(&self) -> String {
        let doc = PotentialJson {
            a: &self.a,
            b: &self.b,
            capacity: self.capacity.to_decimal(),
            h: self.h.iter().map(HpScalar::to_decimal).collect(),
        };
        serde_json::to_string(&doc).expect("plain data serializes")
    }
}

/// Solves `𝓛h = 0` off `A ∪ B` with `h = 1` on `A`, `h = 0` on `B`.
///
/// The capacity is taken in flux form, `Σ_{x∈A} μ(x) r_{A∪B}(x, B)`, where `r_{A∪B}` is the trace
/// on `A ∪ B` produced by the same reduction. It equals `D(h_{A,B})` but involves no differences
/// of nearly equal potentials.
pub fn equilibrium_potential<S: Scalar>(
    chain: &ChainSpec<S>,
    a: &[usize],
    b: &[usize],
) -> Result<PotentialSolution<S>> {
    let len = chain.len();
    let (a, b) = canonical_pair(a, b, len)?;
    check_irreducible(chain)?;
    let mu = chain.stationary()?;
    let ctx = chain_ctx(chain)?;
    let mut interior = vec![true; len];
    for &x in a.iter().chain(&b) {
        interior[x] = false;
    }
    let mut red = Reducer::new(chain, &vec![true; len], None, ctx);
    red.eliminate(&interior)?;
    let mut capacity = S::zero(ctx);
    for &x in &a {
        let row = red.row(x);
        let escape = b.iter().filter_map(|y| row.get(y)).fold(S::zero(ctx), |acc, r| acc.add(r));
        capacity = capacity.add(&mu[x].mul(&escape));
    }
    let mut h = vec![S::zero(ctx); len];
    for &x in &a {
        h[x] = S::one(ctx);
    }
    red.back_substitute(&mut h);
    Ok(PotentialSolution { a, b, h, capacity })
}

pub fn capacity<S: Scalar>(chain: &ChainSpec<S>, a: &[usize], b: &[usize]) -> Result<S> {
    Ok(equilibrium_potential(chain, a, b)?.capacity)
}

/// `E_x τ_y = Σ_z h†_{x,y}(z) μ(z) / CAP(x,y)`.
pub fn mean_hitting_time<S: Scalar>(chain: &ChainSpec<S>, x: usize, y: usize) -> Result<S> {
    if x == y {
        return Err(Error::BadStateSets);
    }
    let cap = capacity(chain, &[x], &[y])?;
    let adj = adjoint_chain(chain)?;
    let h_adj = equilibrium_potential(&adj, &[x], &[y])?.h;
    let mu = chain.stationary()?;
    let ctx = chain_ctx(chain)?;
    let mass = h_adj.iter().zip(mu).fold(S::zero(ctx), |acc, (h, m)| acc.add(&h.mul(m)));
    Ok(mass.div(&cap))
}

/// Expected hitting time of `target` from `x` by first-step analysis, `(−𝓛)T = 1` off the target.
pub fn direct_hitting_time<S: Scalar>(chain: &ChainSpec<S>, x: usize, target: &[usize]) -> Result<S> {
    Ok(hitting_times(chain, x, target)?[x].clone())
}

/// Expected hitting times of `target` from every state reachable from `x` (zero elsewhere).
pub fn hitting_times<S: Scalar>(chain: &ChainSpec<S>, x: usize, target: &[usize]) -> Result<Vec<S>> {
    let len = chain.len();
    let target = canonical_set(target, len)?;
    if x >= len {
        return Err(Error::StateOutOfRange(x));
    }
    let ctx = chain_ctx(chain)?;
    let mut in_target = vec![false; len];
    for &t in &target {
        in_target[t] = true;
    }
    let mut times = vec![S::zero(ctx); len];
    if in_target[x] {
        return Ok(times);
    }
    // States reachable from x before the target is entered.
    let mut active = vec![false; len];
    active[x] = true;
    let mut queue = VecDeque::from([x]);
    let mut hits_target = false;
    while let Some(z) = queue.pop_front() {
        if in_target[z] {
            hits_target = true;
            continue;
        }
        for &y in chain.row(z).keys() {
            if !active[y] {
                active[y] = true;
                queue.push_back(y);
            }
        }
    }
    if !hits_target {
        return Err(Error::Unreachable(x));
    }
    let rhs = (0..len).map(|z| if active[z] && !in_target[z] { S::one(ctx) } else { S::zero(ctx) }).collect();
    let interior: Vec<bool> = (0..len).map(|z| active[z] && !in_target[z]).collect();
    let mut red = Reducer::new(chain, &active, Some(rhs), ctx);
    red.eliminate(&interior).map_err(|e| match e {
        Error::Unreachable(_) => Error::Unreachable(x),
        e => e,
    })?;
    red.back_substitute(&mut times);
    Ok(times)
}

/// `(1 − CAP(x,B)/CAP(x,A∪B), CAP(x,A)/CAP(x,A∪B))`, which bracket `h_{A,B}(x)`.
pub fn potential_bounds<S: Scalar>(chain: &ChainSpec<S>, x: usize, a: &[usize], b: &[usize]) -> Result<(S, S)> {
    let (a, b) = canonical_pair(a, b, chain.len())?;
    if a.contains(&x) || b.contains(&x) {
        return Err(Error::BadStateSets);
    }
    let ctx = chain_ctx(chain)?;
    let union: Vec<usize> = a.iter().chain(&b).copied().collect();
    let cap_union = capacity(chain, &[x], &union)?;
    let cap_a = capacity(chain, &[x], &a)?;
    let cap_b = capacity(chain, &[x], &b)?;
    let lower = S::one(ctx).sub(&cap_b.div(&cap_union));
    let upper = cap_a.div(&cap_union);
    Ok((lower, upper))
}

/// The trace of the chain on `F`, with states renumbered in increasing order of their index.
/// When the chain carries a stationary law, the trace carries `μ|_F / μ(F)`.
pub fn trace_chain_generic<S: Scalar>(chain: &ChainSpec<S>, f: &[usize]) -> Result<ChainSpec<S>> {
    let len = chain.len();
    let f = canonical_set(f, len)?;
    if f.len() == len {
        return Err(Error::BadStateSets);
    }
    check_irreducible(chain)?;
    let ctx = chain_ctx(chain)?;
    let mut outside = vec![true; len];
    for &x in &f {
        outside[x] = false;
    }
    let mut red = Reducer::new(chain, &vec![true; len], None, ctx);
    red.eliminate(&outside)?;
    let position: BTreeMap<usize, usize> = f.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut trace = ChainSpec::new(f.len());
    for (i, &x) in f.iter().enumerate() {
        for (y, r) in red.row(x) {
            trace.add_rate(i, position[y], r.clone())?;
        }
    }
    if let Some(labels) = chain.labels() {
        trace = trace.with_labels(f.iter().map(|&x| labels[x]).collect());
    }
    if let Ok(mu) = chain.stationary() {
        let mass = f.iter().fold(S::zero(ctx), |acc, &x| acc.add(&mu[x]));
        let restricted = f.iter().map(|&x| mu[x].div(&mass)).collect();
        trace = trace.with_stationary(restricted)?;
    }
    Ok(trace)
}
