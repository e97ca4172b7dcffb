//! Subtraction-free state reduction (Grassmann–Taksar–Heyman style).
//!
//! Eliminating a state `k` reroutes every path `i → k → j` into a direct rate
//! `r(i,k) r(k,j) / r(k)`, where `r(k)` is the current total out-rate of `k`. Self-loops created
//! this way are dropped: they neither change jump probabilities nor harmonic or hitting-time
//! equations. Only additions, multiplications and divisions of nonnegative numbers occur, so
//! relative accuracy does not degrade with the size of the chain or the spread of the rates.

use std::collections::{BTreeMap, BTreeSet};

use crate::chain::ChainSpec;
use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// One elimination step, recorded for back-substitution.
#[derive(Debug, Clone)]
pub(crate) struct Step<S> {
    pub node: usize,
    pub total: S,
    /// Out-rates of `node` to states still present when it was removed.
    pub out: Vec<(usize, S)>,
    /// In-rates into `node` from states still present when it was removed.
    pub inflow: Vec<(usize, S)>,
    pub rhs: S,
}

#[derive(Debug, Clone)]
pub(crate) struct Reducer<S: Scalar> {
    out: Vec<BTreeMap<usize, S>>,
    inn: Vec<BTreeSet<usize>>,
    rhs: Vec<S>,
    present: Vec<bool>,
    pub steps: Vec<Step<S>>,
    ctx: S::Ctx,
}

impl<S: Scalar> Reducer<S> {
    /// Restricts the chain to the states flagged in `active`; rates leaving the active set are
    /// discarded. `rhs` is a per-state source term (ones for hitting times, zeros otherwise).
    pub fn new(chain: &ChainSpec<S>, active: &[bool], rhs: Option<Vec<S>>, ctx: S::Ctx) -> Self {
        let len = chain.len();
        let mut out = vec![BTreeMap::new(); len];
        let mut inn = vec![BTreeSet::new(); len];
        for (x, y, r) in chain.edges() {
            if active[x] && active[y] {
                out[x].insert(y, r.clone());
                inn[y].insert(x);
            }
        }
        Reducer {
            out,
            inn,
            rhs: rhs.unwrap_or_else(|| vec![S::zero(ctx); len]),
            present: active.to_vec(),
            steps: Vec::new(),
            ctx,
        }
    }

    /// Eliminates the flagged states, choosing at each step the one with the smallest
    /// in-degree × out-degree product (ties by index) to limit fill-in.
    pub fn eliminate(&mut self, targets: &[bool]) -> Result<()> {
        let mut pending: BTreeSet<usize> = (0..targets.len()).filter(|&x| targets[x] && self.present[x]).collect();
        while !pending.is_empty() {
            let k = *pending.iter().min_by_key(|&&x| (self.inn[x].len() * self.out[x].len(), x)).expect("nonempty");
            pending.remove(&k);
            self.eliminate_one(k)?;
        }
        Ok(())
    }

    fn eliminate_one(&mut self, k: usize) -> Result<()> {
        let out_k: Vec<(usize, S)> = std::mem::take(&mut self.out[k]).into_iter().collect();
        let total = out_k.iter().fold(S::zero(self.ctx), |acc, (_, r)| acc.add(r));
        if total.is_zero() {
            return Err(Error::Unreachable(k));
        }
        let sources: Vec<usize> = std::mem::take(&mut self.inn[k]).into_iter().collect();
        let mut inflow = Vec::with_capacity(sources.len());
        let rhs_share = self.rhs[k].div(&total);
        for &i in &sources {
            let r_ik = self.out[i].remove(&k).expect("in-set and out-map agree");
            let w = r_ik.div(&total);
            for (j, r_kj) in &out_k {
                if *j == i {
                    continue;
                }
                let add = w.mul(r_kj);
                match self.out[i].get_mut(j) {
                    Some(r) => *r = r.add(&add),
                    None => {
                        self.out[i].insert(*j, add);
                        self.inn[*j].insert(i);
                    }
                }
            }
            if !rhs_share.is_zero() {
                self.rhs[i] = self.rhs[i].add(&r_ik.mul(&rhs_share));
            }
            inflow.push((i, r_ik));
        }
        for (j, _) in &out_k {
            self.inn[*j].remove(&k);
        }
        self.present[k] = false;
        let rhs = std::mem::replace(&mut self.rhs[k], S::zero(self.ctx));
        self.steps.push(Step { node: k, total, out: out_k, inflow, rhs });
        Ok(())
    }

    /// Current out-rates of a state that has not been eliminated.
    pub fn row(&self, x: usize) -> &BTreeMap<usize, S> {
        &self.out[x]
    }

    /// Solves `values(k) = (rhs(k) + Σ_j r(k,j) values(j)) / r(k)` for the eliminated states, in
    /// reverse elimination order. Values of the remaining states must be filled in by the caller.
    pub fn back_substitute(&self, values: &mut [S]) {
        for step in self.steps.iter().rev() {
            let mut acc = step.rhs.clone();
            for (j, r) in &step.out {
                if !values[*j].is_zero() {
                    acc = acc.add(&r.mul(&values[*j]));
                }
            }
            values[step.node] = acc.div(&step.total);
        }
    }

    /// Stationary-measure back-substitution: `m(k) = Σ_i m(i) r(i,k) / r(k)`.
    pub fn back_substitute_measure(&self, measure: &mut [S]) {
        for step in self.steps.iter().rev() {
            let mut acc = S::zero(self.ctx);
            for (i, r) in &step.inflow {
                acc = acc.add(&measure[*i].mul(r));
            }
            measure[step.node] = acc.div(&step.total);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Rational;

    fn q(n: i64) -> Rational {
        Rational::from(n)
    }

    #[test]
    fn path_elimination_gives_half_split() {
        // 0 - m - 1 with unit rates; eliminating m gives r(0,1) = 1/2.
        let chain = ChainSpec::from_rates(3, [(0, 2, q(1)), (2, 0, q(1)), (2, 1, q(1)), (1, 2, q(1))]).unwrap();
        let mut red = Reducer::new(&chain, &[true; 3], None, ());
        red.eliminate(&[false, false, true]).unwrap();
        assert_eq!(red.row(0).get(&1), Some(&Rational::from((1, 2))));
        assert_eq!(red.row(1).get(&0), Some(&Rational::from((1, 2))));
        assert!(red.row(0).get(&0).is_none());
    }

    #[test]
    fn hitting_time_of_birth_death_chain() {
        // 0 <-> 1 -> 2 (absorbing), all rates 1: T(0) = 3, T(1) = 2.
        let chain = ChainSpec::from_rates(3, [(0, 1, q(1)), (1, 0, q(1)), (1, 2, q(1))]).unwrap();
        let mut red = Reducer::new(&chain, &[true; 3], Some(vec![q(1), q(1), q(0)]), ());
        red.eliminate(&[true, true, false]).unwrap();
        let mut t = vec![q(0); 3];
        red.back_substitute(&mut t);
        assert_eq!(t, vec![q(3), q(2), q(0)]);
    }

    #[test]
    fn dead_end_is_reported() {
        let chain = ChainSpec::from_rates(3, [(0, 1, q(1))]).unwrap();
        let mut red = Reducer::new(&chain, &[true; 3], None, ());
        assert_eq!(red.eliminate(&[false, true, false]).unwrap_err(), Error::Unreachable(1));
    }
}
