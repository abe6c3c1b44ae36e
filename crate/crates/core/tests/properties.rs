//! Randomized invariants checked against brute-force span enumeration and the
//! full-tableau oracle.

use std::collections::BTreeSet;

use iesim::analysis::{aggregate, estimate_crossing, fit_collapse, CollapseOptions, Curve};
use iesim::circuit::trajectory_rng;
use iesim::ensemble::DataRow;
use iesim::gf2::{apply_gate, rank, row_reduce_window};
use iesim::oracle::{oracle_snapshots, random_site_region, OracleRun, Role, DEFAULT_QUBIT_CAP};
use iesim::verify::observables_for;
use iesim::{
    run_trajectory, sample_two_qubit_clifford, BitMatrix, BitRow, CircuitConfig, ColumnWindow,
    EntropyQueries, InitialState, Region, SymplecticGate, TrackedTableau,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn matrix(n_qubits: usize, bits: &[Vec<bool>]) -> BitMatrix {
    let rows: Vec<BitRow> = bits.iter().map(|r| BitRow::from_bits(r.iter().copied())).collect();
    BitMatrix::from_rows(2 * n_qubits, &rows).unwrap()
}

fn restrict(row: &BitRow, window: &ColumnWindow) -> Vec<bool> {
    window.qubits().iter().flat_map(|&q| [row.get(2 * q), row.get(2 * q + 1)]).collect()
}

/// Every vector in the span, by enumerating all subsets of rows.
fn span(rows: &[BitRow], n_cols: usize) -> BTreeSet<Vec<u64>> {
    assert!(rows.len() <= 12);
    let mut out = BTreeSet::new();
    for subset in 0u32..(1 << rows.len()) {
        let mut acc = BitRow::zeros(n_cols);
        for (i, r) in rows.iter().enumerate() {
            if subset >> i & 1 == 1 {
                acc.xor_assign(r);
            }
        }
        out.insert(acc.words().to_vec());
    }
    out
}

fn brute_rank(rows: &[BitRow], window: &ColumnWindow) -> usize {
    let mut vecs = BTreeSet::new();
    for subset in 0u32..(1 << rows.len()) {
        let mut acc = vec![false; 2 * window.len()];
        for (i, r) in rows.iter().enumerate() {
            if subset >> i & 1 == 1 {
                for (a, b) in acc.iter_mut().zip(restrict(r, window)) {
                    *a ^= b;
                }
            }
        }
        vecs.insert(acc);
    }
    vecs.len().trailing_zeros() as usize
}

prop_compose! {
    fn arb_matrix(max_qubits: usize, max_rows: usize)
        (n in 1..=max_qubits, m in 0..=max_rows)
        (bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 2 * n), m), n in Just(n))
        -> (usize, Vec<Vec<bool>>) {
        (n, bits)
    }
}

prop_compose! {
    fn arb_matrix_window(max_qubits: usize, max_rows: usize)
        ((n, bits) in arb_matrix(max_qubits, max_rows))
        (window in prop::sample::subsequence((0..n).collect::<Vec<_>>(), 0..=n).prop_shuffle(),
         n in Just(n), bits in Just(bits))
        -> (usize, Vec<Vec<bool>>, ColumnWindow) {
        (n, bits, ColumnWindow::new(window))
    }
}

fn symplectic_products(m: &BitMatrix) -> Vec<bool> {
    let rows = m.to_rows();
    let mut out = Vec::new();
    for u in &rows {
        for v in &rows {
            out.push(u.symplectic_product(v));
        }
    }
    out
}

fn random_gate(seed: u64, arity: usize) -> SymplecticGate {
    let mut rng = trajectory_rng(seed, 0);
    match arity {
        1 => {
            let all = iesim::gf2::enumerate_single_qubit_symplectics();
            all[rng.random_range(0..all.len())].clone()
        }
        2 => sample_two_qubit_clifford(&mut rng, 0.9),
        _ => {
            let a = sample_two_qubit_clifford(&mut rng, 0.9).embed(arity, &[0, 1]);
            let b = sample_two_qubit_clifford(&mut rng, 0.9).embed(arity, &[arity - 2, arity - 1]);
            a.then(&b)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rank_matches_span_enumeration((n, bits, window) in arb_matrix_window(5, 10)) {
        let m = matrix(n, &bits);
        prop_assert_eq!(rank(&m, &window).unwrap(), brute_rank(&m.to_rows(), &window));
    }

    #[test]
    fn row_reduce_window_keeps_span_and_isolates_pivots(
        (n, bits, window) in arb_matrix_window(5, 10)
    ) {
        let mut m = matrix(n, &bits);
        let before = span(&m.to_rows(), 2 * n);
        let all = ColumnWindow::all(n);
        let rank_before = rank(&m, &all).unwrap();
        let window_rank = rank(&m, &window).unwrap();
        let pivots = row_reduce_window(&mut m, &window).unwrap();

        prop_assert_eq!(span(&m.to_rows(), 2 * n), before);
        prop_assert_eq!(rank(&m, &all).unwrap(), rank_before);
        prop_assert_eq!(pivots.len(), window_rank);
        let pivot_rows: Vec<BitRow> = pivots.iter().map(|&i| m.row_bits(i)).collect();
        prop_assert_eq!(brute_rank(&pivot_rows, &window), pivots.len());
        for i in (0..m.n_rows()).filter(|i| !pivots.contains(i)) {
            prop_assert!(restrict(&m.row_bits(i), &window).iter().all(|&b| !b));
        }
    }

    #[test]
    fn row_reduce_window_is_idempotent((n, bits, window) in arb_matrix_window(5, 10)) {
        let mut m = matrix(n, &bits);
        let first = row_reduce_window(&mut m, &window).unwrap();
        let reduced = m.clone();
        let second = row_reduce_window(&mut m, &window).unwrap();
        prop_assert_eq!(first, second);
        prop_assert_eq!(m, reduced);
    }

    #[test]
    fn echelon_on_a_partial_mask_keeps_the_row_space(
        (n, bits) in arb_matrix(40, 10),
        mask_seed in any::<u64>(),
    ) {
        let mut m = matrix(n, &bits);
        let before = span(&m.to_rows(), 2 * n);
        let mut rng = trajectory_rng(mask_seed, 0);
        let mut mask = vec![0u64; (2 * n).div_ceil(64)];
        for c in 0..2 * n {
            if rng.random_bool(0.5) {
                mask[c / 64] |= 1 << (c % 64);
            }
        }
        let expected_rank = m.rank_masked(&mask);
        prop_assert_eq!(m.echelon(&mask), expected_rank);
        prop_assert_eq!(span(&m.to_rows(), 2 * n), before);
    }

    #[test]
    fn gates_preserve_rank_and_commutation(
        (n, bits) in arb_matrix(6, 10),
        arity in 1usize..=3,
        gate_seed in any::<u64>(),
        pick_seed in any::<u64>(),
    ) {
        prop_assume!(n >= arity);
        let mut m = matrix(n, &bits);
        let gate = random_gate(gate_seed, arity);
        prop_assert!(gate.is_symplectic());
        let mut qubits: Vec<usize> = (0..n).collect();
        qubits.shuffle(&mut trajectory_rng(pick_seed, 0));
        let window = ColumnWindow::new(qubits[..arity].iter().copied());

        let all = ColumnWindow::all(n);
        let rank_before = rank(&m, &all).unwrap();
        let products_before = symplectic_products(&m);
        apply_gate(&mut m, &gate, &window).unwrap();
        prop_assert_eq!(rank(&m, &all).unwrap(), rank_before);
        prop_assert_eq!(symplectic_products(&m), products_before);
    }
}

fn init_strategy() -> impl Strategy<Value = InitialState> {
    prop_oneof![
        Just(InitialState::PureProduct),
        Just(InitialState::MaximallyMixed),
        Just(InitialState::BellReference),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Random gates, transductions and compactions on the tracked tableau.
    #[test]
    fn tracked_tableau_bookkeeping(
        sites in 1usize..=5,
        init in init_strategy(),
        seed in any::<u64>(),
        steps in 1usize..60,
    ) {
        let mut t = TrackedTableau::new(init, 2 * sites).unwrap();
        let mut rng = trajectory_rng(seed, 0);
        let k = t.n_tracked();
        let mut transductions = 0;
        for _ in 0..steps {
            match rng.random_range(0..4) {
                0 | 1 => {
                    let n = t.n_system();
                    let q1 = rng.random_range(0..n);
                    let q2 = (q1 + rng.random_range(1..n)) % n;
                    let g = sample_two_qubit_clifford(&mut rng, 0.9);
                    t.apply_two_qubit_gate(&g, q1, q2).unwrap();
                }
                2 => {
                    let site = rng.random_range(0..sites);
                    let m_before = t.generator_total();
                    t.transduce_site(site).unwrap();
                    transductions += 1;
                    let delta = t.generator_total() as i64 - m_before as i64;
                    prop_assert!((0..=2).contains(&delta), "M changed by {}", delta);
                }
                _ => {
                    let m = t.generator_total();
                    let total = t.row_count() + t.ignored_count();
                    t.compact();
                    prop_assert_eq!(t.generator_total(), m);
                    prop_assert_eq!(t.row_count() + t.ignored_count(), total);
                    prop_assert_eq!(t.rows().rank_all(), t.row_count());
                    // Idempotent.
                    let snapshot = t.clone();
                    t.compact();
                    prop_assert_eq!(&t, &snapshot);
                }
            }
            prop_assert!(t.row_count() <= 2 * k);
            prop_assert!(t.peak_row_count() <= 2 * k);
            prop_assert_eq!(t.n_apparatus(), transductions);
            prop_assert_eq!(t.n_environment(), transductions);
        }
    }

    #[test]
    fn compressed_matches_oracle(
        sites in prop::sample::select(vec![4usize, 6, 8]),
        p in prop::sample::select(vec![0.0, 0.1, 0.3, 0.5, 0.7, 1.0]),
        init in init_strategy(),
        seed in any::<u64>(),
        index in 0u64..1000,
    ) {
        let config = CircuitConfig::new(sites, p)
            .with_layers(3 * sites)
            .with_init(init)
            .with_seed(seed)
            .with_record_every(1)
            .with_observables(observables_for(sites, init));
        let efficient = run_trajectory(&config, index).unwrap();
        let oracle = oracle_snapshots(&config, index, DEFAULT_QUBIT_CAP).unwrap();
        prop_assert_eq!(efficient.snapshots, oracle);
    }

    #[test]
    fn conditional_entropy_bounds_and_consistency(
        sites in prop::sample::select(vec![4usize, 6, 8]),
        p in 0.0f64..=1.0,
        init in init_strategy(),
        seed in any::<u64>(),
        region_seed in any::<u64>(),
    ) {
        let config = CircuitConfig::new(sites, p).with_init(init).with_seed(seed);
        let mut traj = iesim::Trajectory::new(&config, 0).unwrap();
        let mut rng = trajectory_rng(region_seed, 0);
        while !traj.is_done() {
            traj.step().unwrap();
            let t = traj.tableau();
            let empty = t.joint_with_apparatus(&Region::empty()).unwrap();
            for _ in 0..4 {
                let region = Region::new(
                    (0..t.n_tracked()).filter(|_| rng.random_bool(0.5)),
                );
                let cond = t.conditional(&region).unwrap();
                prop_assert!(cond <= region.len() as i64);
                prop_assert_eq!(cond, t.joint_with_apparatus(&region).unwrap() - empty);
                // Positivity needs the exchange symmetry, which holds on
                // unions of whole sites.
                let closed = random_site_region(&mut rng, t.n_system(), init.has_reference());
                prop_assert!(t.conditional(&closed).unwrap() >= 0);
            }
        }
    }
}

#[test]
fn reference_qubits_are_out_of_reach() {
    let config = CircuitConfig::new(4, 0.4).with_init(InitialState::BellReference).with_seed(3);
    let mut run = OracleRun::new(&config, 0, DEFAULT_QUBIT_CAP).unwrap();
    while !run.is_done() {
        run.step().unwrap();
        // Operations on the system alone leave the reference maximally mixed.
        let full = run.tableau();
        let reference = full.qubits_with(Role::Reference);
        assert_eq!(reference.len(), 8);
        assert_eq!(full.entropy_region(&reference).unwrap(), 8);
    }
    let mut t = TrackedTableau::new(InitialState::BellReference, 8).unwrap();
    assert!(t.apply_two_qubit_gate(&SymplecticGate::cnot(), 0, 8).is_err());
}

#[test]
fn transduction_count_is_binomial() {
    let (sites, layers, p, n) = (8usize, 32usize, 0.3, 400u64);
    let config = CircuitConfig::new(sites, p).with_layers(layers).with_seed(11);
    let total: usize = (0..n).map(|i| run_trajectory(&config, i).unwrap().transductions).sum();
    let trials = (n as usize * sites * layers) as f64;
    let mean = trials * p;
    let sigma = (trials * p * (1.0 - p)).sqrt();
    assert!(
        (total as f64 - mean).abs() < 3.0 * sigma,
        "{total} transductions, expected {mean} +- {sigma}"
    );
}

#[test]
fn aggregate_ignores_row_order() {
    let config = CircuitConfig::new(4, 0.5)
        .with_seed(5)
        .with_record_every(2)
        .with_observables(observables_for(4, InitialState::PureProduct));
    let mut rows: Vec<DataRow> = (0..40)
        .flat_map(|i| DataRow::from_record(&run_trajectory(&config, i).unwrap()))
        .collect();
    let reference = aggregate(&rows);
    let mut rng = trajectory_rng(99, 0);
    for _ in 0..5 {
        rows.shuffle(&mut rng);
        let shuffled = aggregate(&rows);
        assert_eq!(shuffled.len(), reference.len());
        for (a, b) in shuffled.iter().zip(&reference) {
            assert_eq!((a.sites, a.p, &a.observable, a.layer, a.count), (b.sites, b.p, &b.observable, b.layer, b.count));
            assert!((a.mean - b.mean).abs() < 1e-12);
            match (a.stderr, b.stderr) {
                (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12),
                (x, y) => assert_eq!(x, y),
            }
        }
    }
}

fn line(sites: usize, ps: &[f64], slope: f64, offset: f64) -> Curve {
    Curve {
        sites,
        p: ps.to_vec(),
        mean: ps.iter().map(|p| slope * p + offset).collect(),
        stderr: vec![0.01; ps.len()],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn crossing_of_two_lines(
        cross in 0.42f64..0.60,
        s1 in 1.0f64..5.0,
        s2 in 6.0f64..20.0,
    ) {
        let ps = iesim::analysis::p_grid(0.40, 0.62, 0.02);
        let small = line(16, &ps, s1, -s1 * cross);
        let large = line(32, &ps, s2, -s2 * cross);
        let got = estimate_crossing(&small, &large).unwrap();
        prop_assert!((got - cross).abs() < 1e-9, "{} vs {}", got, cross);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn collapse_minimum_beats_the_grid(
        p_c in 0.48f64..0.54,
        nu in 0.9f64..1.5,
        seed in any::<u64>(),
    ) {
        let ps = iesim::analysis::p_grid(0.40, 0.62, 0.02);
        let points = iesim::analysis::synthetic_collapse_points(&[16, 32, 64], &ps, p_c, nu, 0.02, seed);
        let curves = iesim::analysis::curves(&points, "I3");
        let opts = CollapseOptions { grid: 21, ..CollapseOptions::default() };
        let fit = fit_collapse(&curves, &opts).unwrap();
        for pt in &fit.trace {
            prop_assert!(fit.cost <= pt.cost + 1e-12, "{:?} beats the fit {}", pt, fit.cost);
        }
    }
}
