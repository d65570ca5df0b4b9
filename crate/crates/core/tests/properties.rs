//! Property tests for the invariants of the minimax, strategy, simulation,
//! scheme and certification layers.

use std::sync::Arc;

use proptest::prelude::*;
use stochgame::pathspace::SamplePath;
use stochgame::*;

fn table_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..6, 1usize..6).prop_flat_map(|(nu, nv)| {
        (
            Just(nu),
            Just(nv),
            prop::collection::vec(-10.0f64..10.0, nu * nv),
        )
    })
}

fn controlled_heat() -> GameProblem<f64> {
    let c = FnCoefficients::new(
        |_t, _x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| out[0] = u[0] + v[0],
        |_t, _x: &[f64], u: &[f64], _v: &[f64], out: &mut [f64]| out[0] = 0.5 + u[0].abs(),
        |x: &[f64]| (-x[0] * x[0]).exp(),
    );
    GameProblem::new(
        "mixed",
        1,
        1,
        Arc::new(c),
        ControlSet::linspace("U", -1.0, 1.0, 5).unwrap(),
        ControlSet::linspace("V", -0.5, 0.5, 3).unwrap(),
        1.0,
        (0.0, 1.0),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn lower_minimax_never_exceeds_upper((nu, nv, table) in table_strategy()) {
        let up = minimax(&table, nu, nv, Side::Upper);
        let lo = minimax(&table, nu, nv, Side::Lower);
        prop_assert!(lo.value <= up.value);
        prop_assert_eq!(table[up.u_index * nv + up.v_index], up.value);
        prop_assert_eq!(table[lo.u_index * nv + lo.v_index], lo.value);
    }

    #[test]
    fn upper_saddle_is_a_best_response((nu, nv, table) in table_strategy()) {
        let up = minimax(&table, nu, nv, Side::Upper);
        for i in 0..nu {
            prop_assert!(table[i * nv + up.v_index] <= up.value);
        }
        for j in 0..nv {
            let col_max = (0..nu).map(|i| table[i * nv + j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(up.value <= col_max);
        }
    }

    #[test]
    fn hamiltonian_vanishes_at_zero_and_is_monotone_in_m(
        x in -2.0f64..2.0,
        p in -3.0f64..3.0,
        m in -2.0f64..2.0,
        dm in 0.0f64..2.0,
    ) {
        let prob = controlled_heat();
        for side in [Side::Upper, Side::Lower] {
            let zero = HamiltonianQuery::new(0.0, vec![x], vec![0.0], vec![0.0]).unwrap();
            prop_assert_eq!(hamiltonian(&prob, side, &zero).unwrap().value, 0.0);
            let q1 = HamiltonianQuery::new(0.0, vec![x], vec![p], vec![m]).unwrap();
            let q2 = HamiltonianQuery::new(0.0, vec![x], vec![p], vec![m + dm]).unwrap();
            let h1 = hamiltonian(&prob, side, &q1).unwrap().value;
            let h2 = hamiltonian(&prob, side, &q2).unwrap().value;
            prop_assert!(h1 <= h2 + 1e-12);
        }
        let q = HamiltonianQuery::new(0.0, vec![x], vec![p], vec![m]).unwrap();
        prop_assert!(
            hamiltonian(&prob, Side::Lower, &q).unwrap().value
                <= hamiltonian(&prob, Side::Upper, &q).unwrap().value
        );
    }

    #[test]
    fn strategies_are_non_anticipative(
        split in 1usize..19,
        a in prop::collection::vec(-2.0f64..2.0, 21),
        b in prop::collection::vec(-2.0f64..2.0, 21),
        radius in 0.2f64..2.0,
    ) {
        let controls = Arc::new(ControlSet::linspace("U", -1.0, 1.0, 5).unwrap());
        let exit = StoppingRule::first_exit(vec![0.0], radius, StoppingRule::constant(0.0)).unwrap();
        let strat = ElementaryStrategy::new(
            Player::One,
            controls,
            StoppingRule::constant(0.0),
            vec![
                Segment::new(exit, ActionSelector::Threshold { axis: 0, threshold: 0.0, below: 0, above: 4 }),
                Segment::new(StoppingRule::Terminal, ActionSelector::Threshold { axis: 0, threshold: 0.5, below: 1, above: 3 }),
            ],
        )
        .unwrap();
        let mut other = a.clone();
        other[split + 1..].copy_from_slice(&b[split + 1..]);
        let times = SamplePath::<f64>::uniform_times(0.0, 1.0, 20);
        let pa = SamplePath::new(1, times.clone(), a).unwrap();
        let pb = SamplePath::new(1, times, other).unwrap();
        for j in 0..=split {
            prop_assert_eq!(
                strat.cursor().action(&pa.prefix(j)).unwrap(),
                strat.cursor().action(&pb.prefix(j)).unwrap()
            );
        }
    }

    #[test]
    fn concatenation_at_start_and_horizon(
        head_index in 0usize..5,
        tail_index in 0usize..5,
        xs in prop::collection::vec(-2.0f64..2.0, 11),
    ) {
        let controls = Arc::new(ControlSet::linspace("U", -1.0, 1.0, 5).unwrap());
        let head = ElementaryStrategy::constant(Player::One, controls.clone(), head_index).unwrap();
        let tail_now = ElementaryStrategy::constant_from(Player::One, controls.clone(), tail_index, StoppingRule::constant(0.0)).unwrap();
        let tail_never = ElementaryStrategy::constant_from(Player::One, controls, tail_index, StoppingRule::Terminal).unwrap();
        let path = SamplePath::new(1, SamplePath::<f64>::uniform_times(0.0, 1.0, 10), xs).unwrap();
        let now = ElementaryStrategy::concatenate(&head, &tail_now).unwrap();
        let never = ElementaryStrategy::concatenate(&head, &tail_never).unwrap();
        for k in 1..=10 {
            let t = k as f64 / 10.0;
            prop_assert_eq!(now.action_index_at(&path, t).unwrap(), tail_index);
            prop_assert_eq!(never.action_index_at(&path, t).unwrap(), head_index);
        }
    }

    #[test]
    fn strategy_json_round_trip_is_exact(threshold in -5.0f64..5.0, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
        let controls = Arc::new(ControlSet::linspace("U", -1.0, 1.0, 3).unwrap());
        let s = ElementaryStrategy::with_decisions(
            Player::Two,
            controls,
            &[0.0, d1, d2],
            ActionSelector::Threshold { axis: 0, threshold, below: 0, above: 2 },
        )
        .unwrap();
        let back = ElementaryStrategy::<f64>::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_deterministic_per_seed(seed in any::<u64>(), x in -1.0f64..1.0) {
        let p = presets::heat::<f64>().unwrap();
        let u = ElementaryStrategy::constant(Player::One, p.u_set().clone(), 0).unwrap();
        let v = ElementaryStrategy::constant(Player::Two, p.v_set().clone(), 0).unwrap();
        let pair = StrategyPair::new(u, v).unwrap();
        let cfg = SimulationConfig::new(25, seed, 8);
        let a = simulate_batch(&p, &pair, 0.0, &[x], &cfg).unwrap();
        let b = simulate_batch(&p, &pair, 0.0, &[x], &cfg).unwrap();
        prop_assert_eq!(a.trajectories, b.trajectories);
    }

    #[test]
    fn scheme_is_monotone_in_terminal_data(a in -1.0f64..1.0, c in 0.5f64..2.0, shift in 0.0f64..0.5) {
        let base = controlled_heat();
        let make = move |lift: f64| {
            let coeffs = FnCoefficients::new(
                |_t, _x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| out[0] = u[0] + v[0],
                |_t, _x: &[f64], u: &[f64], _v: &[f64], out: &mut [f64]| out[0] = 0.5 + u[0].abs(),
                move |x: &[f64]| (a * x[0]).sin() * (-c * x[0] * x[0]).exp() + lift * (-(x[0] - a).powi(2)).exp(),
            );
            GameProblem::new(
                "pair",
                1,
                1,
                Arc::new(coeffs),
                (**base.u_set()).clone(),
                (**base.v_set()).clone(),
                1.0,
                (-1.0, 2.0),
            )
            .unwrap()
        };
        let (p1, p2) = (make(0.0), make(shift));
        let grid = SpaceTimeGrid::auto_for_problem(&p1, vec![Axis::new(-2.0, 2.0, 41)], 0.9).unwrap();
        for side in [Side::Upper, Side::Lower] {
            let v1 = solve(&p1, side, &grid, Boundary::Extrapolated).unwrap();
            let v2 = solve(&p2, side, &grid, Boundary::Extrapolated).unwrap();
            for (x, y) in v1.values().values().iter().zip(v2.values().values()) {
                prop_assert!(x <= y);
            }
        }
        let lo = solve(&p1, Side::Lower, &grid, Boundary::Extrapolated).unwrap();
        let up = solve(&p1, Side::Upper, &grid, Boundary::Extrapolated).unwrap();
        for (l, u) in lo.values().values().iter().zip(up.values().values()) {
            prop_assert!(l <= u);
        }
    }

    #[test]
    fn matrix_values_are_ordered_and_monotone_in_families(seed in any::<u64>()) {
        let p = presets::hopf_lax_asym::<f64>().unwrap();
        let spec = |count, seed| RandomFamilySpec {
            count,
            seed,
            state_box: vec![(-1.0, 1.0)],
            horizon: 1.0,
            max_switches: 2,
        };
        let fu = StrategyFamily::random(Player::One, p.u_set().clone(), &spec(4, seed)).unwrap();
        let fv = StrategyFamily::random(Player::Two, p.v_set().clone(), &spec(3, seed ^ 1)).unwrap();
        let fv_more = fv.union(&StrategyFamily::random(Player::Two, p.v_set().clone(), &spec(2, seed ^ 2)).unwrap()).unwrap();
        let cfg = SimulationConfig::new(20, seed, 4);
        let small = upper_lower_values(&p, &fu, &fv, 0.0, &[0.3], &cfg).unwrap();
        let large = upper_lower_values(&p, &fu, &fv_more, 0.0, &[0.3], &cfg).unwrap();
        prop_assert!(small.v_minus <= small.v_plus);
        prop_assert!(large.v_plus <= small.v_plus);
        prop_assert!(large.v_minus <= small.v_minus);
    }

    #[test]
    fn repeated_lattice_combination_is_monotone(values in prop::collection::vec(1.0f64..3.0, 1..6)) {
        let p = presets::hopf_lax_asym::<f64>().unwrap();
        let grid = SpaceTimeGrid::new(vec![Axis::new(-1.0, 1.0, 11)], 4, 1.0).unwrap();
        let members: Vec<SemiSolutionCandidate<f64>> = values
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let w = GridFunction::from_fn(grid.clone(), move |t, x| c + (k as f64 * x[0] + t).sin().abs());
                SemiSolutionCandidate::new(&p, Arc::new(w), SemiClass::SuperUpper, WitnessProducer::Constant { index: k % 11 }, 5.0).unwrap()
            })
            .collect();
        let mut acc = members[0].clone();
        for m in &members[1..] {
            let next = lattice_combine(&acc, m).unwrap();
            for (a, b) in next.w().values().iter().zip(acc.w().values()) {
                prop_assert!(a <= b);
            }
            acc = next;
        }
    }
}

#[test]
fn constant_terminal_data_stays_constant() {
    let c = FnCoefficients::new(
        |_t, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]| out[0] = u[0] * x[0].sin() + v[0],
        |_t, _x: &[f64], u: &[f64], _v: &[f64], out: &mut [f64]| out[0] = 0.3 + u[0].abs(),
        |_x: &[f64]| 0.731,
    );
    let p = GameProblem::new(
        "flat",
        1,
        1,
        Arc::new(c),
        ControlSet::linspace("U", -1.0, 1.0, 5).unwrap(),
        ControlSet::linspace("V", -0.5, 0.5, 3).unwrap(),
        1.0,
        (0.731, 0.731),
    )
    .unwrap();
    let grid = SpaceTimeGrid::auto_for_problem(&p, vec![Axis::new(-2.0, 2.0, 81)], 0.9).unwrap();
    let vg = solve(&p, Side::Upper, &grid, Boundary::Extrapolated).unwrap();
    let drift = vg
        .values()
        .values()
        .iter()
        .map(|v| (v - 0.731).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-9);
}

#[test]
fn monte_carlo_weak_error_on_heat() {
    let p = presets::heat::<f64>().unwrap();
    let u = ElementaryStrategy::constant(Player::One, p.u_set().clone(), 0).unwrap();
    let v = ElementaryStrategy::constant(Player::Two, p.v_set().clone(), 0).unwrap();
    let (mean, se) = estimate_value(
        &p,
        &u,
        &v,
        0.0,
        &[0.0],
        &SimulationConfig::new(10, 11, 20_000),
    )
    .unwrap();
    assert!(
        (mean - 1.0 / 5f64.sqrt()).abs() < 4.0 * se + 1e-3,
        "mean {mean} se {se}"
    );
}
