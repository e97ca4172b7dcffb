use contact_star::chain::{build_reduced_chain, Mode, ModelParams};
use contact_star::numerics::HpScalar;
use contact_star::potential::direct_hitting_time;
use contact_star::sim::{estimate_mean, simulate_full, simulate_reduced, summarize, SimConfig};
use rug::Rational;

fn config(n: usize, seed: u64, samples: usize) -> SimConfig {
    SimConfig::new(ModelParams::with_lambda(n, Rational::from(1)).unwrap(), None, seed, samples).unwrap()
}

#[test]
fn same_seed_same_samples() {
    let c = config(4, 7, 200);
    let a: Vec<_> = simulate_full(&c).collect();
    let b: Vec<_> = simulate_full(&c).collect();
    assert_eq!(a, b);
    let other: Vec<_> = simulate_full(&config(4, 8, 200)).collect();
    assert_ne!(a, other);
}

#[test]
fn full_and_reduced_means_match_exact() {
    let c = config(2, 11, 20_000);
    let p = &c.params;
    let chain = build_reduced_chain::<HpScalar>(p, Mode::Absorbing, 128);
    let exact = direct_hitting_time(&chain, p.all_infected().index(2), &[0]).unwrap().to_f64();
    let full = summarize(&simulate_full(&c).collect::<Vec<_>>(), c.seed).unwrap();
    let reduced = estimate_mean(&c).unwrap();
    assert!((full.mean - exact).abs() < 4.0 * full.se, "full {} vs {exact}", full.mean);
    assert!((reduced.mean - exact).abs() < 4.0 * reduced.se, "reduced {} vs {exact}", reduced.mean);
    assert!(simulate_reduced(&c).all(|s| !s.truncated && s.events > 0));
}
