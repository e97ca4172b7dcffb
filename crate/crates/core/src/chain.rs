//! Finite continuous-time Markov chains and the three chains built from the star contact process.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rug::{Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{HpScalar, Precision, Scalar};

/// Parameters of the star contact process: leaf count, infection rate, regeneration rate.
///
/// Rates are held as exact rationals; decimal inputs such as `0.75` parse exactly.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelParams {
    pub n: usize,
    pub lambda: Rational,
    pub alpha: Rational,
}

impl ModelParams {
    pub fn new(n: usize, lambda: Rational, alpha: Rational) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("N must be at least 1".into()));
        }
        if lambda.cmp0() != std::cmp::Ordering::Greater {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {lambda}")));
        }
        if alpha.cmp0() != std::cmp::Ordering::Greater {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
        }
        Ok(ModelParams { n, lambda, alpha })
    }

    /// Parameters with the default regeneration rate `α = 1`.
    pub fn with_lambda(n: usize, lambda: Rational) -> Result<Self> {
        Self::new(n, lambda, Rational::from(1))
    }

    /// Parses `λ` and `α` from decimal (`0.75`, `1e-2`) or fraction (`3/4`) notation.
    pub fn parse(n: usize, lambda: &str, alpha: &str) -> Result<Self> {
        Self::new(n, parse_rational(lambda)?, parse_rational(alpha)?)
    }

    pub fn lambda_hp(&self, prec: Precision) -> HpScalar {
        HpScalar::from_rational(&self.lambda, prec)
    }

    pub fn alpha_hp(&self, prec: Precision) -> HpScalar {
        HpScalar::from_rational(&self.alpha, prec)
    }

    pub fn lambda_f64(&self) -> f64 {
        self.lambda.to_f64()
    }

    pub fn num_states(&self) -> usize {
        2 * (self.n + 1)
    }

    pub fn index(&self, s: State) -> usize {
        s.index(self.n)
    }

    pub fn state(&self, index: usize) -> State {
        State::from_index(index, self.n)
    }

    /// The fully infected state `(1, N)`.
    pub fn all_infected(&self) -> State {
        State::new(1, self.n)
    }

    pub fn extinct(&self) -> State {
        State::new(0, 0)
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={}, lambda={}, alpha={}", self.n, self.lambda, self.alpha)
    }
}

/// Exact rational from `p/q`, integer, or decimal-with-exponent notation.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if s.contains('/') {
        return Rational::from_str(s).map_err(|_| bad());
    }
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let mut value = Rational::from(Integer::from_str(&digits).map_err(|_| bad())?);
    let shift = exp - frac_part.len() as i32;
    let ten = Rational::from(10);
    let scale = Rational::from(rug::ops::Pow::pow(&ten, shift.unsigned_abs()));
    if shift >= 0 {
        value *= scale;
    } else {
        value /= scale;
    }
    if neg {
        value = -value;
    }
    Ok(value)
}

/// A point `(hub, n)` of the ladder chain: hub status and number of infected leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State {
    pub hub: u8,
    pub n: usize,
}

impl State {
    pub fn new(hub: u8, n: usize) -> Self {
        assert!(hub <= 1, "hub status is 0 or 1");
        State { hub, n }
    }

    /// `hub·(N+1) + n`.
    pub fn index(self, big_n: usize) -> usize {
        assert!(self.n <= big_n, "infected count exceeds N");
        usize::from(self.hub) * (big_n + 1) + self.n
    }

    pub fn from_index(index: usize, big_n: usize) -> Self {
        assert!(index < 2 * (big_n + 1), "state index out of range");
        State { hub: (index / (big_n + 1)) as u8, n: index % (big_n + 1) }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.hub, self.n)
    }
}

impl FromStr for State {
    type Err = Error;

    /// Parses `"hub,count"`, optionally parenthesized.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (h, n) = t.split_once(',').ok_or_else(|| Error::Parse(format!("expected hub,count: {s:?}")))?;
        let hub: u8 = h.trim().parse().map_err(|_| Error::Parse(format!("bad hub status in {s:?}")))?;
        let n: usize = n.trim().parse().map_err(|_| Error::Parse(format!("bad count in {s:?}")))?;
        if hub > 1 {
            return Err(Error::Parse(format!("hub status must be 0 or 1 in {s:?}")));
        }
        Ok(State { hub, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `(0,0)` is absorbing.
    Absorbing,
    /// `(0,0)` jumps to `(1,0)` at rate `α`.
    Regenerative,
}

/// A finite CTMC on states `0..len` with a sparse rate map and an optional stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec<S> {
    rows: Vec<BTreeMap<usize, S>>,
    labels: Option<Vec<State>>,
    stationary: Option<Vec<S>>,
}

impl<S: Scalar> ChainSpec<S> {
    pub fn new(len: usize) -> Self {
        ChainSpec { rows: vec![BTreeMap::new(); len], labels: None, stationary: None }
    }

    /// Builds a chain from `(from, to, rate)` triples; zero rates are skipped, repeats add up.
    pub fn from_rates(len: usize, rates: impl IntoIterator<Item = (usize, usize, S)>) -> Result<Self> {
        let mut chain = Self::new(len);
        for (x, y, r) in rates {
            chain.add_rate(x, y, r)?;
        }
        Ok(chain)
    }

    pub fn add_rate(&mut self, x: usize, y: usize, rate: S) -> Result<()> {
        let len = self.len();
        if x >= len {
            return Err(Error::StateOutOfRange(x));
        }
        if y >= len {
            return Err(Error::StateOutOfRange(y));
        }
        if x == y {
            return Err(Error::InvalidParams(format!("self-loop at state {x}")));
        }
        if rate.is_negative() {
            return Err(Error::InvalidParams(format!("negative rate {x}->{y}")));
        }
        if rate.is_zero() {
            return Ok(());
        }
        self.stationary = None;
        match self.rows[x].get_mut(&y) {
            Some(r) => *r = r.add(&rate),
            None => {
                self.rows[x].insert(y, rate);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rate(&self, x: usize, y: usize) -> Option<&S> {
        self.rows.get(x).and_then(|row| row.get(&y))
    }

    pub fn row(&self, x: usize) -> &BTreeMap<usize, S> {
        &self.rows[x]
    }

    pub fn rows(&self) -> &[BTreeMap<usize, S>] {
        &self.rows
    }

    pub fn out_rate(&self, x: usize, ctx: S::Ctx) -> S {
        self.rows[x].values().fold(S::zero(ctx), |acc, r| acc.add(r))
    }

    /// All `(x, y, r(x,y))` with positive rate, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &S)> + '_ {
        self.rows.iter().enumerate().flat_map(|(x, row)| row.iter().map(move |(&y, r)| (x, y, r)))
    }

    pub fn labels(&self) -> Option<&[State]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<State>) -> Self {
        assert_eq!(labels.len(), self.len());
        self.labels = Some(labels);
        self
    }

    pub fn stationary(&self) -> Result<&[S]> {
        self.stationary.as_deref().ok_or(Error::MissingStationary)
    }

    pub fn has_stationary(&self) -> bool {
        self.stationary.is_some()
    }

    /// Attaches a stationary law after checking normalization and global balance.
    pub fn with_stationary(mut self, mu: Vec<S>) -> Result<Self> {
        self.check_stationary(&mu)?;
        self.stationary = Some(mu);
        Ok(self)
    }

    /// Attaches a stationary law without checks; for laws derived from an already checked one.
    pub(crate) fn with_stationary_unchecked(mut self, mu: Vec<S>) -> Self {
        self.stationary = Some(mu);
        self
    }

    fn check_stationary(&self, mu: &[S]) -> Result<()> {
        if mu.len() != self.len() {
            return Err(Error::InvalidParams(format!(
                "stationary vector has length {}, chain has {} states",
                mu.len(),
                self.len()
            )));
        }
        let Some(first) = mu.first() else {
            return Ok(());
        };
        let ctx = first.ctx();
        let within = |residual: &S, scale: &S| -> bool {
            match residual.precision_bits() {
                None => residual.is_zero(),
                Some(prec) => {
                    let bound = scale.abs().to_hp(prec) * HpScalar::from_int(2, prec).powi(-(i64::from(prec) / 2));
                    residual.abs().to_hp(prec) <= bound
                }
            }
        };
        let total = mu.iter().fold(S::zero(ctx), |acc, m| acc.add(m));
        if !within(&total.sub(&S::one(ctx)), &S::one(ctx)) {
            return Err(Error::InvalidParams(format!("stationary vector sums to {}", total.to_f64())));
        }
        let mut inflow = vec![S::zero(ctx); self.len()];
        let mut scale = vec![S::zero(ctx); self.len()];
        for (x, y, r) in self.edges() {
            let c = mu[x].mul(r);
            inflow[y] = inflow[y].add(&c);
            scale[y] = scale[y].add(&c);
            scale[x] = scale[x].add(&c);
        }
        for x in 0..self.len() {
            let outflow = mu[x].mul(&self.out_rate(x, ctx));
            if !within(&inflow[x].sub(&outflow), &scale[x]) {
                return Err(Error::InvalidParams(format!("stationary vector violates balance at state {x}")));
            }
        }
        Ok(())
    }

    /// Same chain with every scalar mapped through `f`.
    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> ChainSpec<T> {
        ChainSpec {
            rows: self.rows.iter().map(|row| row.iter().map(|(&y, r)| (y, f(r))).collect()).collect(),
            labels: self.labels.clone(),
            stationary: self.stationary.as_ref().map(|mu| mu.iter().map(&f).collect()),
        }
    }

    pub fn to_hp(&self, prec: Precision) -> ChainSpec<HpScalar> {
        self.map(|r| r.to_hp(prec))
    }

    /// Multiplies one existing rate by `factor` (used to check that validations are sensitive).
    pub fn scale_rate(&mut self, x: usize, y: usize, factor: &S) -> Result<()> {
        let r = self.rows.get_mut(x).and_then(|row| row.get_mut(&y)).ok_or(Error::FlowSupport(x, y))?;
        *r = r.mul(factor);
        self.stationary = None;
        Ok(())
    }

    /// Index of a labelled state.
    pub fn index_of(&self, s: State) -> Option<usize> {
        self.labels.as_ref()?.iter().position(|&l| l == s)
    }
}

fn lambda_s<S: Scalar>(params: &ModelParams, ctx: S::Ctx) -> S {
    S::from_rational(&params.lambda, ctx)
}

/// The reduced `(hub, count)` chain on `2(N+1)` states, indexed by `hub·(N+1) + n`.
pub fn build_reduced_chain<S: Scalar>(params: &ModelParams, mode: Mode, ctx: S::Ctx) -> ChainSpec<S> {
    let big_n = params.n;
    let lambda: S = lambda_s(params, ctx);
    let idx = |hub: u8, n: usize| State::new(hub, n).index(big_n);
    let mut chain = ChainSpec::new(params.num_states());
    let mut put = |x: usize, y: usize, r: S| chain.add_rate(x, y, r).expect("rates are valid by construction");
    for n in 0..=big_n {
        let nn = S::from_i64(n as i64, ctx);
        if n < big_n {
            put(idx(1, n), idx(1, n + 1), lambda.mul(&S::from_i64((big_n - n) as i64, ctx)));
        }
        if n > 0 {
            put(idx(1, n), idx(1, n - 1), nn.clone());
            put(idx(0, n), idx(0, n - 1), nn.clone());
            put(idx(0, n), idx(1, n), lambda.mul(&nn));
        }
        put(idx(1, n), idx(0, n), S::one(ctx));
    }
    if mode == Mode::Regenerative {
        put(idx(0, 0), idx(1, 0), S::from_rational(&params.alpha, ctx));
    }
    let labels = (0..params.num_states()).map(|i| State::from_index(i, big_n)).collect();
    chain.with_labels(labels)
}

/// Index of `(1, n)` in the trace chain on `F = {(0,0)} ∪ {(1,n)}`; `(0,0)` is index 0.
pub fn trace_index(n: usize) -> usize {
    n + 1
}

/// The states of `F` in trace-chain order, as indices of the reduced chain.
pub fn trace_states(params: &ModelParams) -> Vec<usize> {
    std::iter::once(0).chain((0..=params.n).map(|n| State::new(1, n).index(params.n))).collect()
}

/// The trace of the regenerative chain on `F = {(0,0)} ∪ {(1,n) : 0 ≤ n ≤ N}` in closed form.
///
/// A hub recovery at `(1,n)` starts a healthy-hub excursion that loses leaves one at a time, each
/// step ending in reinfection with probability `λ/(1+λ)`. The excursion returns to `(1,n−j)` with
/// probability `λ/(1+λ)^{j+1}` for `j < n` and reaches `(0,0)` with probability `(1+λ)^{−n}`;
/// `j = 0` is a self-loop and is dropped. State order: `(0,0)`, then `(1,0), …, (1,N)`.
pub fn build_trace_chain<S: Scalar>(params: &ModelParams, ctx: S::Ctx) -> ChainSpec<S> {
    let big_n = params.n;
    let lambda: S = lambda_s(params, ctx);
    let one = S::one(ctx);
    let q = one.div(&one.add(&lambda));
    let mut chain = ChainSpec::new(big_n + 2);
    let mut put = |x: usize, y: usize, r: S| chain.add_rate(x, y, r).expect("rates are valid by construction");
    put(0, trace_index(0), S::from_rational(&params.alpha, ctx));
    for n in 0..=big_n {
        let from = trace_index(n);
        if n < big_n {
            put(from, trace_index(n + 1), lambda.mul(&S::from_i64((big_n - n) as i64, ctx)));
        }
        if n > 0 {
            put(from, trace_index(n - 1), S::from_i64(n as i64, ctx));
        }
        // q^{j+1} λ for the jump to (1, n-j)
        let mut geom = q.mul(&q);
        for j in 1..n {
            put(from, trace_index(n - j), lambda.mul(&geom));
            geom = geom.mul(&q);
        }
        let mut to_extinct = one.clone();
        for _ in 0..n {
            to_extinct = to_extinct.mul(&q);
        }
        put(from, 0, to_extinct);
    }
    let labels = std::iter::once(State::new(0, 0)).chain((0..=big_n).map(|n| State::new(1, n))).collect();
    chain.with_labels(labels)
}
