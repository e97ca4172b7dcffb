use contact_star::chain::{build_reduced_chain, build_trace_chain, trace_states, ChainSpec, Mode, ModelParams};
use contact_star::numerics::{rel_diff, HpScalar};
use contact_star::potential::{
    adjoint_chain, associated_flows, capacity, direct_hitting_time, dirichlet_functional, equilibrium_potential,
    mean_hitting_time, thomson_functional, trace_chain_generic, with_stationary, Flow,
};
use contact_star::qsd::{exact_measure_by_oracle, solve_recurrence};
use contact_star::Error;
use proptest::prelude::*;
use rug::Rational;

/// A random irreducible chain on up to 8 states: a directed cycle plus random extra edges,
/// rates in `{1/4, …, 3}`.
fn random_chain() -> impl Strategy<Value = ChainSpec<Rational>> {
    (3usize..=8).prop_flat_map(|n| {
        let cycle = prop::collection::vec(1i64..=12, n);
        let extra = prop::collection::vec((0..n, 0..n, 1i64..=12), 0..2 * n);
        (Just(n), cycle, extra).prop_map(|(n, cycle, extra)| {
            let mut rates = Vec::new();
            for (x, r) in cycle.into_iter().enumerate() {
                rates.push((x, (x + 1) % n, Rational::from((r, 4))));
            }
            for (x, y, r) in extra {
                if x != y && y != (x + 1) % n {
                    rates.push((x, y, Rational::from((r, 4))));
                }
            }
            rates.sort_by_key(|(x, y, _)| (*x, *y));
            rates.dedup_by_key(|(x, y, _)| (*x, *y));
            with_stationary(ChainSpec::from_rates(n, rates).unwrap()).unwrap()
        })
    })
}

fn small_rational() -> impl Strategy<Value = Rational> {
    (1i64..=9, 1i64..=4).prop_map(|(a, b)| Rational::from((a, b)))
}

fn perturbation(len: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-8i64..=8, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn capacity_is_symmetric_and_shared_with_adjoint(chain in random_chain()) {
        let n = chain.len();
        let (a, b) = (vec![0], vec![n - 1]);
        let cap = capacity(&chain, &a, &b).unwrap();
        prop_assert!(cap > 0);
        prop_assert_eq!(&cap, &capacity(&chain, &b, &a).unwrap());
        prop_assert_eq!(&cap, &capacity(&adjoint_chain(&chain).unwrap(), &a, &b).unwrap());
    }

    #[test]
    fn capacity_grows_with_the_target(chain in random_chain()) {
        let n = chain.len();
        let small = capacity(&chain, &[0], &[n - 1]).unwrap();
        let large = capacity(&chain, &[0], &[n - 2, n - 1]).unwrap();
        prop_assert!(large >= small);
    }

    #[test]
    fn mean_hitting_time_matches_direct_solve(chain in random_chain(), from in 0usize..8) {
        let n = chain.len();
        let x = from % (n - 1) + 1;
        prop_assert_eq!(mean_hitting_time(&chain, x, 0).unwrap(), direct_hitting_time(&chain, x, &[0]).unwrap());
    }

    #[test]
    fn variational_functionals_bracket_capacity(
        chain in random_chain(),
        df in perturbation(8),
        dphi in perturbation(64),
        dpsi in perturbation(64),
    ) {
        let n = chain.len();
        let (a, b) = (vec![0], vec![n - 1]);
        let sol = equilibrium_potential(&chain, &a, &b).unwrap();
        let h_adj = equilibrium_potential(&adjoint_chain(&chain).unwrap(), &a, &b).unwrap().h;
        let (h, cap) = (&sol.h, &sol.capacity);
        let (_, phi_star_h, _) = associated_flows(&chain, h).unwrap();
        let (phi_h_adj, _, _) = associated_flows(&chain, &h_adj).unwrap();
        let half = Rational::from((1, 2));

        let mut f: Vec<Rational> = h.iter().zip(&h_adj).map(|(x, y)| Rational::from(x + y) / 2).collect();
        let mut g: Vec<Rational> = h.iter().zip(&h_adj).map(|(x, y)| Rational::from(y - x) / (cap * Rational::from(2))).collect();
        for x in 1..n - 1 {
            f[x] += Rational::from((df[x], 16));
            g[x] += Rational::from((df[x], 32));
        }
        let mut phi = phi_h_adj.minus(&phi_star_h).scaled(&half);
        let mut psi = phi_h_adj.plus(&phi_star_h).scaled(&(half / cap.clone()));
        for (k, (x, y, _)) in chain.edges().enumerate() {
            phi.add(x, y, &Rational::from((dphi[k % 64], 64)));
            psi.add(x, y, &Rational::from((dpsi[k % 64], 64)));
        }

        let d = dirichlet_functional(&chain, &a, &b, &f, &phi, h).unwrap();
        prop_assert!(&d >= cap);
        match thomson_functional(&chain, &a, &b, &g, &psi, h) {
            Ok(t) => prop_assert!(&t <= cap),
            Err(e) => prop_assert!(matches!(e, Error::ZeroFlow)),
        }
    }

    #[test]
    fn recurrence_matches_stationary_oracle(n in 1usize..=6, lambda in small_rational(), alpha in small_rational()) {
        let params = ModelParams::new(n, lambda, alpha).unwrap();
        let rec = solve_recurrence::<Rational>(&params, ());
        let (u, v) = exact_measure_by_oracle(&params).unwrap();
        prop_assert_eq!(&rec.u, &u);
        prop_assert_eq!(&rec.v, &v);
    }

    #[test]
    fn trace_chain_matches_elimination(n in 1usize..=6, lambda in small_rational()) {
        let params = ModelParams::with_lambda(n, lambda).unwrap();
        let full = build_reduced_chain::<Rational>(&params, Mode::Regenerative, ());
        let generic = trace_chain_generic(&full, &trace_states(&params)).unwrap();
        let closed = build_trace_chain::<Rational>(&params, ());
        prop_assert_eq!(generic.rows(), closed.rows());
    }

    #[test]
    fn log_of_product_is_sum_of_logs(a in -300f64..300.0, b in -300f64..300.0) {
        let x = HpScalar::from_ln(&HpScalar::from_f64(a, 200));
        let y = HpScalar::from_ln(&HpScalar::from_f64(b, 200));
        let lhs = (&x * &y).ln();
        let rhs = x.ln() + y.ln();
        prop_assert!((lhs - rhs).abs().to_f64() < 1e-50);
    }

    #[test]
    fn exact_and_float_capacities_agree(chain in random_chain()) {
        let n = chain.len();
        let exact = capacity(&chain, &[0], &[n - 1]).unwrap();
        let hp = with_stationary(chain.to_hp(128)).unwrap();
        let float = capacity(&hp, &[0], &[n - 1]).unwrap();
        prop_assert!(rel_diff(&float, &HpScalar::from_rational(&exact, 128)) < 1e-30);
    }
}

#[test]
fn empty_flow_is_rejected_by_thomson() {
    let chain = with_stationary(
        ChainSpec::from_rates(3, [(0, 1, Rational::from(1)), (1, 2, Rational::from(1)), (2, 0, Rational::from(1))])
            .unwrap(),
    )
    .unwrap();
    let g = vec![Rational::new(); 3];
    let h = equilibrium_potential(&chain, &[0], &[2]).unwrap().h;
    assert!(thomson_functional(&chain, &[0], &[2], &g, &Flow::new(), &h).is_err());
}
