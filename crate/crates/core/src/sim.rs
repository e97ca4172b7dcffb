//! Exact event-driven simulation of the star contact process, on the lumped `(hub, count)` chain
//! and on the leaf-resolved process.
//!
//! Sample `i` of a run with seed `s` draws from ChaCha8 seeded with `s` on stream `i`, so every
//! sample is reproducible on its own, whatever order or thread it is computed in.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotics::ek_time;
use crate::chain::{ModelParams, State};
use crate::error::{Error, Result};

/// Default per-sample event budget.
pub const DEFAULT_MAX_EVENTS: u64 = 1_000_000_000;

/// Largest expected number of events per sample accepted by [`check_feasible`].
pub const FEASIBLE_EVENTS: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    /// Starting state; `None` means all sites infected.
    pub initial: Option<State>,
    pub seed: u64,
    pub max_events: u64,
    pub samples: usize,
}

impl SimConfig {
    pub fn new(params: ModelParams, initial: Option<State>, seed: u64, samples: usize) -> Result<Self> {
        let config = SimConfig { params, initial, seed, max_events: DEFAULT_MAX_EVENTS, samples };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::NoSamples);
        }
        if self.max_events == 0 {
            return Err(Error::InvalidParams("max_events must be positive".into()));
        }
        let s = self.start();
        if s.hub > 1 || s.n > self.params.n {
            return Err(Error::InvalidParams(format!("initial state {s} outside the chain")));
        }
        Ok(())
    }

    pub fn start(&self) -> State {
        self.initial.unwrap_or_else(|| self.params.all_infected())
    }

    /// The generator of sample `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionSample {
    pub time: f64,
    pub events: u64,
    pub truncated: bool,
}

fn exponential(rng: &mut impl Rng, rate: f64) -> f64 {
    // 1 − U lies in (0, 1]
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// One extinction time of the lumped chain.
pub fn reduced_sample(params: &ModelParams, start: State, max_events: u64, rng: &mut impl Rng) -> ExtinctionSample {
    let big_n = params.n as f64;
    let lambda = params.lambda_f64();
    let (mut hub, mut n) = (start.hub, start.n);
    let mut time = 0.0;
    let mut events = 0;
    while hub == 1 || n > 0 {
        if events == max_events {
            return ExtinctionSample { time, events, truncated: true };
        }
        let count = n as f64;
        let (up, down, flip) =
            if hub == 1 { (lambda * (big_n - count), count, 1.0) } else { (0.0, count, lambda * count) };
        let total = up + down + flip;
        time += exponential(rng, total);
        let pick = rng.random::<f64>() * total;
        if pick < up {
            n += 1;
        } else if pick < up + down {
            n -= 1;
        } else {
            hub = 1 - hub;
        }
        events += 1;
    }
    ExtinctionSample { time, events, truncated: false }
}

/// One extinction time of the leaf-resolved process; `observe(hub, infected_leaves)` sees every
/// visited configuration, projected, starting with the initial one.
pub fn full_sample_observed(
    params: &ModelParams,
    start: State,
    max_events: u64,
    rng: &mut impl Rng,
    mut observe: impl FnMut(u8, usize),
) -> ExtinctionSample {
    let big_n = params.n;
    let lambda = params.lambda_f64();
    // leaves[..infected] are the infected leaves
    let mut leaves: Vec<usize> = (0..big_n).collect();
    let mut infected = start.n;
    let mut hub = start.hub;
    let mut time = 0.0;
    let mut events = 0;
    observe(hub, infected);
    while hub == 1 || infected > 0 {
        if events == max_events {
            return ExtinctionSample { time, events, truncated: true };
        }
        let healthy = big_n - infected;
        let hub_rate = if hub == 1 { 1.0 } else { lambda * infected as f64 };
        let recover = infected as f64;
        let infect = if hub == 1 { lambda * healthy as f64 } else { 0.0 };
        let total = hub_rate + recover + infect;
        time += exponential(rng, total);
        let pick = rng.random::<f64>() * total;
        if pick < hub_rate {
            hub = 1 - hub;
        } else if pick < hub_rate + recover {
            let slot = rng.random_range(0..infected);
            leaves.swap(slot, infected - 1);
            infected -= 1;
        } else {
            let slot = infected + rng.random_range(0..healthy);
            leaves.swap(slot, infected);
            infected += 1;
        }
        events += 1;
        observe(hub, infected);
    }
    ExtinctionSample { time, events, truncated: false }
}

pub fn full_sample(params: &ModelParams, start: State, max_events: u64, rng: &mut impl Rng) -> ExtinctionSample {
    full_sample_observed(params, start, max_events, rng, |_, _| {})
}

/// Samples `0..config.samples` of the lumped chain.
pub fn simulate_reduced(config: &SimConfig) -> impl Iterator<Item = ExtinctionSample> + '_ {
    let start = config.start();
    (0..config.samples as u64)
        .map(move |i| reduced_sample(&config.params, start, config.max_events, &mut config.rng(i)))
}

/// Samples `0..config.samples` of the leaf-resolved process.
pub fn simulate_full(config: &SimConfig) -> impl Iterator<Item = ExtinctionSample> + '_ {
    let start = config.start();
    (0..config.samples as u64).map(move |i| full_sample(&config.params, start, config.max_events, &mut config.rng(i)))
}

/// Rough expected event count of one sample: the Eyring–Kramers time times the event rate near
/// the metastable state.
pub fn expected_events(params: &ModelParams) -> Result<f64> {
    let lambda = params.lambda_f64();
    let big_n = params.n as f64;
    let time = ek_time(params, 64)?.gamma_form.value.to_f64();
    Ok(time * (2.0 * lambda * big_n / (1.0 + lambda) + 1.0))
}

pub fn check_feasible(params: &ModelParams) -> Result<()> {
    let events = expected_events(params)?;
    if events.is_finite() && events <= FEASIBLE_EVENTS {
        Ok(())
    } else {
        Err(Error::SimulationInfeasible(format!(
            "about {events:.3e} events per sample expected (limit {FEASIBLE_EVENTS:e}); use the exact solver"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub seed: u64,
    pub n: usize,
}

/// Sample mean, standard error `s/√n` and the normal 95% interval.
pub fn summarize(samples: &[ExtinctionSample], seed: u64) -> Result<MeanEstimate> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let truncated = samples.iter().filter(|s| s.truncated).count();
    if truncated > 0 {
        return Err(Error::Truncated(truncated));
    }
    let n = samples.len();
    let mean = samples.iter().map(|s| s.time).sum::<f64>() / n as f64;
    let var = if n > 1 { samples.iter().map(|s| (s.time - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let se = (var / n as f64).sqrt();
    Ok(MeanEstimate { mean, se, ci95: (mean - 1.959_963_984_540_054 * se, mean + 1.959_963_984_540_054 * se), seed, n })
}

/// Runs the lumped simulation after the feasibility guard and summarizes it.
pub fn estimate_mean(config: &SimConfig) -> Result<MeanEstimate> {
    config.validate()?;
    check_feasible(&config.params)?;
    let samples: Vec<_> = simulate_reduced(config).collect();
    summarize(&samples, config.seed)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the two-sample statistic, `Q_KS((√m + 0.12 + 0.11/√m) D)` with
/// `m = n_a n_b / (n_a + n_b)` and `Q_KS(x) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²x²}`.
pub fn ks_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let m = (na * nb) as f64 / (na + nb) as f64;
    let x = (m.sqrt() + 0.12 + 0.11 / m.sqrt()) * d;
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `sample_index,time,events,truncated`.
pub fn write_samples_csv<W: Write>(samples: &[ExtinctionSample], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["sample_index", "time", "events", "truncated"]).map_err(io)?;
    for (i, s) in samples.iter().enumerate() {
        w.write_record([i.to_string(), format!("{:e}", s.time), s.events.to_string(), s.truncated.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::Rational;

    fn params(n: usize, num: i64, den: i64) -> ModelParams {
        ModelParams::with_lambda(n, Rational::from((num, den))).unwrap()
    }

    #[test]
    fn extinct_start_is_immediate() {
        let c = SimConfig::new(params(3, 1, 1), Some(State::new(0, 0)), 1, 3).unwrap();
        for s in simulate_reduced(&c).chain(simulate_full(&c)) {
            assert_eq!(s, ExtinctionSample { time: 0.0, events: 0, truncated: false });
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let c = SimConfig::new(params(4, 1, 1), None, 7, 20).unwrap();
        let a: Vec<_> = simulate_reduced(&c).collect();
        let b: Vec<_> = simulate_reduced(&c).collect();
        assert_eq!(a, b);
        let single = reduced_sample(&c.params, c.start(), c.max_events, &mut c.rng(13));
        assert_eq!(single, a[13]);
        assert!(a.iter().all(|s| s.time > 0.0));
    }

    #[test]
    fn budget_marks_truncation() {
        let mut c = SimConfig::new(params(20, 2, 1), None, 3, 2).unwrap();
        c.max_events = 5;
        let s: Vec<_> = simulate_reduced(&c).collect();
        assert!(s.iter().all(|s| s.truncated && s.events == 5));
        assert_eq!(summarize(&s, 3).unwrap_err(), Error::Truncated(2));
    }

    #[test]
    fn constant_samples_have_zero_se() {
        let s = vec![ExtinctionSample { time: 2.5, events: 1, truncated: false }; 4];
        let m = summarize(&s, 0).unwrap();
        assert_eq!((m.mean, m.se), (2.5, 0.0));
        assert_eq!(summarize(&[], 0).unwrap_err(), Error::NoSamples);
    }

    #[test]
    fn n1_mean_is_two() {
        let c = SimConfig::new(params(1, 1, 1), Some(State::new(1, 1)), 11, 100_000).unwrap();
        let m = estimate_mean(&c).unwrap();
        assert!((m.mean - 2.0).abs() < 3.0 * m.se, "{m:?}");
    }

    #[test]
    fn se_scales_with_sample_count() {
        let c = |k| SimConfig::new(params(1, 1, 1), Some(State::new(1, 1)), 5, k).unwrap();
        let small = estimate_mean(&c(20_000)).unwrap().se;
        let large = estimate_mean(&c(40_000)).unwrap().se;
        let ratio = small / large;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn single_step_from_hub_only() {
        // from (1,0) with N=1 the first event is (1,1) with probability λ/(1+λ)
        let p = params(1, 1, 1);
        let c = SimConfig::new(p.clone(), Some(State::new(1, 0)), 2, 1).unwrap();
        let draws = 100_000;
        let mut up = 0;
        for i in 0..draws {
            let mut first = None;
            full_sample_observed(&p, State::new(1, 0), 1, &mut c.rng(i), |h, n| {
                if (h, n) != (1, 0) && first.is_none() {
                    first = Some((h, n));
                }
            });
            if first == Some((1, 1)) {
                up += 1;
            }
        }
        let freq = up as f64 / draws as f64;
        let se = (0.25 / draws as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "{freq}");
    }

    #[test]
    fn healthy_hub_never_gains_leaves() {
        let p = params(6, 1, 1);
        let c = SimConfig::new(p.clone(), None, 9, 1).unwrap();
        for i in 0..200 {
            let mut prev: Option<(u8, usize)> = None;
            full_sample_observed(&p, p.all_infected(), DEFAULT_MAX_EVENTS, &mut c.rng(i), |h, n| {
                if let Some((ph, pn)) = prev {
                    if ph == 0 && h == 0 {
                        assert!(n <= pn);
                    }
                }
                prev = Some((h, n));
            });
        }
    }

    #[test]
    fn ks_detects_shift_and_accepts_identity() {
        let a: Vec<f64> = (0..500).map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 250.0).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert!((ks_statistic(&a, &b) - 0.5).abs() < 1e-12);
        assert!(ks_p_value(0.5, 500, 500) < 1e-10);
        assert!(ks_p_value(0.0, 500, 500) == 1.0);
        // Q_KS(1) ≈ 0.2700
        let m = 250.0f64;
        let d = 1.0 / (m.sqrt() + 0.12 + 0.11 / m.sqrt());
        assert!((ks_p_value(d, 500, 500) - 0.270_000).abs() < 1e-3);
    }

    #[test]
    fn infeasible_instances_are_refused() {
        assert!(check_feasible(&params(10, 3, 4)).is_ok());
        assert!(matches!(check_feasible(&params(400, 1, 1)), Err(Error::SimulationInfeasible(_))));
    }
}
