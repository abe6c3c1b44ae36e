//! The brickwork data-collection circuit.
//!
//! A layer applies bricks to neighbouring sites (periodic chain), then
//! transduces each site independently with probability `p`. Odd layers
//! (1-based) pair sites `(2k, 2k+1)`, even layers pair `(2k+1, 2k+2 mod L)`.
//!
//! A brick on sites `i, j` applies a random two-qubit Clifford `U1` to
//! `(a_i, a_j)` and the same `U1` to `(b_i, b_j)`, swaps `a_i <-> b_i` and
//! `a_j <-> b_j`, then applies a second pair of identical gates `U2`.
//!
//! RNG contract, per layer: bricks left to right, each drawing `U1` then `U2`
//! (see [`sample_two_qubit_clifford`]); then one uniform `f64` per site
//! `0..L` deciding transduction. Every backend driven through
//! [`CircuitDriver`] therefore sees the same event sequence for the same seed.

use std::sync::LazyLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{enumerate_single_qubit_symplectics, SymplecticGate};
use crate::observables::{EntropyQueries, Observable};
use crate::tableau::{InitialState, TrackedTableau};

pub const DEFAULT_CNOT_PROB: f64 = 0.9;

static SINGLE_QUBIT: LazyLock<Vec<SymplecticGate>> =
    LazyLock::new(enumerate_single_qubit_symplectics);
static CNOT: LazyLock<SymplecticGate> = LazyLock::new(SymplecticGate::cnot);
static SWAP4: LazyLock<[SymplecticGate; 2]> = LazyLock::new(|| {
    let swap = SymplecticGate::swap();
    [swap.embed(4, &[0, 1]), swap.embed(4, &[2, 3])]
});

/// Whether a brick applies the same gates to the `a` and `b` qubits.
///
/// `Broken` samples independent gates for the two sublattices and exists only
/// as a negative control for the exchange-symmetry checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrickSymmetry {
    #[default]
    Symmetric,
    Broken,
}

fn default_cnot_prob() -> f64 {
    DEFAULT_CNOT_PROB
}

fn default_init() -> InitialState {
    InitialState::PureProduct
}

fn is_symmetric(b: &BrickSymmetry) -> bool {
    *b == BrickSymmetry::Symmetric
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitConfig {
    /// Number of sites `L` (two qubits each).
    #[serde(rename = "L")]
    pub sites: usize,
    /// Number of layers `T`; `None` means `4L`.
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    /// Transduction probability per site per layer.
    pub p: f64,
    #[serde(default = "default_cnot_prob")]
    pub cnot_prob: f64,
    #[serde(default = "default_init")]
    pub initial_state: InitialState,
    #[serde(default)]
    pub master_seed: u64,
    /// Snapshot stride in layers; `0` records the final layer only.
    #[serde(default)]
    pub record_every: usize,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default, skip_serializing_if = "is_symmetric")]
    pub brick: BrickSymmetry,
}

impl CircuitConfig {
    pub fn new(sites: usize, p: f64) -> Self {
        Self {
            sites,
            layers: None,
            p,
            cnot_prob: DEFAULT_CNOT_PROB,
            initial_state: InitialState::PureProduct,
            master_seed: 0,
            record_every: 0,
            observables: Vec::new(),
            brick: BrickSymmetry::Symmetric,
        }
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = Some(layers);
        self
    }

    pub fn with_init(mut self, init: InitialState) -> Self {
        self.initial_state = init;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_observables(mut self, obs: Vec<Observable>) -> Self {
        self.observables = obs;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn layers(&self) -> usize {
        self.layers.unwrap_or(4 * self.sites)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sites < 4 || self.sites % 2 != 0 {
            return bad(format!("L must be even and at least 4, got {}", self.sites));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return bad(format!("p must lie in [0, 1], got {}", self.p));
        }
        if !(0.0..=1.0).contains(&self.cnot_prob) {
            return bad(format!("cnot_prob must lie in [0, 1], got {}", self.cnot_prob));
        }
        if self.layers() == 0 {
            return bad("T must be at least 1".into());
        }
        for o in &self.observables {
            o.validate(self.sites, self.initial_state)?;
        }
        Ok(())
    }

    /// Whether observables are evaluated after `layer` (0 = initial state).
    pub fn is_recorded(&self, layer: usize) -> bool {
        let last = self.layers();
        match self.record_every {
            0 => layer == last,
            k => layer % k == 0 || layer == last,
        }
    }
}

/// Per-trajectory generator: ChaCha8 seeded with `master_seed`, stream
/// `trajectory_index`.
pub fn trajectory_rng(master_seed: u64, trajectory_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trajectory_index);
    rng
}

/// Random two-qubit Clifford action: `S1 (x) S2`, followed with probability
/// `cnot_prob` by a CNOT and another `S3 (x) S4`. Each `S` is uniform over the
/// six single-qubit symplectics.
///
/// Draw order: `S1`, `S2`, the CNOT coin, then `S3`, `S4` if the coin hit.
pub fn sample_two_qubit_clifford<R: Rng + ?Sized>(rng: &mut R, cnot_prob: f64) -> SymplecticGate {
    let singles = &*SINGLE_QUBIT;
    let pick = |rng: &mut R| singles[rng.random_range(0..singles.len())].clone();
    let first = pick(rng).tensor(&pick(rng));
    if rng.random::<f64>() < cnot_prob {
        let last = pick(rng).tensor(&pick(rng));
        first.then(&CNOT).then(&last)
    } else {
        first
    }
}

/// The four two-qubit gates making up one brick.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrickGates {
    pub first_a: SymplecticGate,
    pub first_b: SymplecticGate,
    pub second_a: SymplecticGate,
    pub second_b: SymplecticGate,
}

impl BrickGates {
    pub fn symmetric(first: SymplecticGate, second: SymplecticGate) -> Self {
        Self { first_a: first.clone(), first_b: first, second_a: second.clone(), second_b: second }
    }

    /// The whole brick as one gate on `(a_i, b_i, a_j, b_j)`.
    pub fn fused(&self) -> SymplecticGate {
        let [swap_i, swap_j] = &*SWAP4;
        self.first_a
            .embed(4, &[0, 2])
            .then(&self.first_b.embed(4, &[1, 3]))
            .then(swap_i)
            .then(swap_j)
            .then(&self.second_a.embed(4, &[0, 2]))
            .then(&self.second_b.embed(4, &[1, 3]))
    }
}

/// A state the circuit can act on.
pub trait CircuitBackend {
    fn apply_brick(&mut self, site_i: usize, site_j: usize, gates: &BrickGates) -> Result<()>;
    fn transduce(&mut self, site: usize) -> Result<()>;
    /// Called once after the transductions of every layer.
    fn end_layer(&mut self) -> Result<()> {
        Ok(())
    }
}

impl CircuitBackend for TrackedTableau {
    fn apply_brick(&mut self, site_i: usize, site_j: usize, gates: &BrickGates) -> Result<()> {
        self.apply_gate_on(&gates.fused(), &[2 * site_i, 2 * site_i + 1, 2 * site_j, 2 * site_j + 1])
    }

    fn transduce(&mut self, site: usize) -> Result<()> {
        self.transduce_site(site)
    }

    fn end_layer(&mut self) -> Result<()> {
        self.compact();
        Ok(())
    }
}

/// Sample a brick's gates and apply them to sites `(site_i, site_j)`.
pub fn apply_brick<B: CircuitBackend + ?Sized, R: Rng + ?Sized>(
    backend: &mut B,
    rng: &mut R,
    site_i: usize,
    site_j: usize,
    cnot_prob: f64,
    symmetry: BrickSymmetry,
) -> Result<()> {
    let gates = match symmetry {
        BrickSymmetry::Symmetric => {
            let first = sample_two_qubit_clifford(rng, cnot_prob);
            let second = sample_two_qubit_clifford(rng, cnot_prob);
            BrickGates::symmetric(first, second)
        }
        BrickSymmetry::Broken => BrickGates {
            first_a: sample_two_qubit_clifford(rng, cnot_prob),
            first_b: sample_two_qubit_clifford(rng, cnot_prob),
            second_a: sample_two_qubit_clifford(rng, cnot_prob),
            second_b: sample_two_qubit_clifford(rng, cnot_prob),
        },
    };
    backend.apply_brick(site_i, site_j, &gates)
}

/// Site pairs acted on in 1-based layer `t`.
pub fn brick_pairs(sites: usize, t: usize) -> impl Iterator<Item = (usize, usize)> {
    let offset = if t % 2 == 1 { 0 } else { 1 };
    (0..sites / 2).map(move |k| {
        let i = 2 * k + offset;
        (i % sites, (i + 1) % sites)
    })
}

/// Owns the RNG and layer counter of one trajectory and drives any backend.
pub struct CircuitDriver {
    config: CircuitConfig,
    rng: ChaCha8Rng,
    layer: usize,
    transductions: usize,
}

impl CircuitDriver {
    pub fn new(config: &CircuitConfig, trajectory_index: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            rng: trajectory_rng(config.master_seed, trajectory_index),
            layer: 0,
            transductions: 0,
        })
    }

    pub fn config(&self) -> &CircuitConfig {
        &self.config
    }

    /// Layers completed so far.
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn transductions(&self) -> usize {
        self.transductions
    }

    pub fn is_done(&self) -> bool {
        self.layer >= self.config.layers()
    }

    /// Run one layer; returns its 1-based index.
    pub fn step<B: CircuitBackend + ?Sized>(&mut self, backend: &mut B) -> Result<usize> {
        let t = self.layer + 1;
        let c = &self.config;
        for (i, j) in brick_pairs(c.sites, t) {
            apply_brick(backend, &mut self.rng, i, j, c.cnot_prob, c.brick)?;
        }
        for site in 0..c.sites {
            if self.rng.random::<f64>() < c.p {
                backend.transduce(site)?;
                self.transductions += 1;
            }
        }
        backend.end_layer()?;
        self.layer = t;
        Ok(t)
    }
}

/// Observable values after one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub layer: usize,
    pub values: Vec<(Observable, i64)>,
}

impl Snapshot {
    pub fn value(&self, obs: &Observable) -> Option<i64> {
        self.values.iter().find(|(o, _)| o == obs).map(|&(_, v)| v)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub config: CircuitConfig,
    pub trajectory_index: u64,
    pub snapshots: Vec<Snapshot>,
    pub transductions: usize,
    pub peak_rows: usize,
    pub elapsed: Duration,
}

impl TrajectoryRecord {
    /// Equality of everything except wall-clock time.
    pub fn same_data(&self, other: &Self) -> bool {
        self.config == other.config
            && self.trajectory_index == other.trajectory_index
            && self.snapshots == other.snapshots
            && self.transductions == other.transductions
            && self.peak_rows == other.peak_rows
    }

    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }
}

/// Evaluate every requested observable on the current state.
pub fn take_snapshot<E: EntropyQueries + ?Sized>(
    state: &E,
    layer: usize,
    observables: &[Observable],
) -> Result<Snapshot> {
    let values = observables
        .iter()
        .map(|o| Ok((o.clone(), o.evaluate(state)?)))
        .collect::<Result<_>>()?;
    Ok(Snapshot { layer, values })
}

/// A single trajectory of the compressed simulator, stepped layer by layer.
pub struct Trajectory {
    driver: CircuitDriver,
    tableau: TrackedTableau,
}

impl Trajectory {
    pub fn new(config: &CircuitConfig, trajectory_index: u64) -> Result<Self> {
        let driver = CircuitDriver::new(config, trajectory_index)?;
        let tableau = TrackedTableau::new(config.initial_state, 2 * config.sites)?;
        Ok(Self { driver, tableau })
    }

    pub fn step(&mut self) -> Result<usize> {
        self.driver.step(&mut self.tableau)
    }

    pub fn is_done(&self) -> bool {
        self.driver.is_done()
    }

    pub fn layer(&self) -> usize {
        self.driver.layer()
    }

    pub fn tableau(&self) -> &TrackedTableau {
        &self.tableau
    }

    pub fn driver(&self) -> &CircuitDriver {
        &self.driver
    }
}

/// Run a full trajectory and record the configured observables.
pub fn run_trajectory(config: &CircuitConfig, trajectory_index: u64) -> Result<TrajectoryRecord> {
    let start = Instant::now();
    let mut traj = Trajectory::new(config, trajectory_index)?;
    let mut snapshots = Vec::new();
    if config.is_recorded(0) {
        snapshots.push(take_snapshot(traj.tableau(), 0, &config.observables)?);
    }
    while !traj.is_done() {
        let layer = traj.step()?;
        if config.is_recorded(layer) {
            snapshots.push(take_snapshot(traj.tableau(), layer, &config.observables)?);
        }
    }
    Ok(TrajectoryRecord {
        config: config.clone(),
        trajectory_index,
        snapshots,
        transductions: traj.driver.transductions(),
        peak_rows: traj.tableau.peak_row_count(),
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::{conditional_entropy, Region};

    fn is_local(g: &SymplecticGate) -> bool {
        let rows = g.matrix_rows();
        rows[..2].iter().all(|r| r & 0b1100 == 0) && rows[2..].iter().all(|r| r & 0b0011 == 0)
    }

    #[test]
    fn no_cnot_branch_gives_local_gates() {
        let mut rng = trajectory_rng(1, 0);
        for _ in 0..200 {
            let g = sample_two_qubit_clifford(&mut rng, 0.0);
            assert!(g.is_symplectic());
            assert!(is_local(&g));
        }
    }

    #[test]
    fn forced_cnot_with_identity_singles_is_cnot() {
        let id = &SINGLE_QUBIT[0];
        assert!(id.is_identity());
        let g = id.tensor(id).then(&CNOT).then(&id.tensor(id));
        assert_eq!(g, SymplecticGate::cnot());
        let mut rng = trajectory_rng(2, 0);
        for _ in 0..200 {
            assert!(!is_local(&sample_two_qubit_clifford(&mut rng, 1.0)));
        }
    }

    #[test]
    fn cnot_branch_frequency() {
        let mut rng = trajectory_rng(3, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| !is_local(&sample_two_qubit_clifford(&mut rng, 0.9))).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.9).abs() < 0.01, "CNOT branch frequency {freq}");
    }

    #[test]
    fn brick_pairs_cover_periodic_chain() {
        assert_eq!(brick_pairs(6, 1).collect::<Vec<_>>(), [(0, 1), (2, 3), (4, 5)]);
        assert_eq!(brick_pairs(6, 2).collect::<Vec<_>>(), [(1, 2), (3, 4), (5, 0)]);
    }

    /// Apply a brick gate by gate, as the definition reads.
    fn apply_unfused(t: &mut TrackedTableau, i: usize, j: usize, g: &BrickGates) {
        let (ai, bi, aj, bj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        t.apply_two_qubit_gate(&g.first_a, ai, aj).unwrap();
        t.apply_two_qubit_gate(&g.first_b, bi, bj).unwrap();
        t.apply_two_qubit_gate(&SymplecticGate::swap(), ai, bi).unwrap();
        t.apply_two_qubit_gate(&SymplecticGate::swap(), aj, bj).unwrap();
        t.apply_two_qubit_gate(&g.second_a, ai, aj).unwrap();
        t.apply_two_qubit_gate(&g.second_b, bi, bj).unwrap();
    }

    fn scrambled(seed: u64) -> TrackedTableau {
        let config = CircuitConfig::new(4, 0.3).with_layers(6).with_seed(seed);
        let mut traj = Trajectory::new(&config, 0).unwrap();
        while !traj.is_done() {
            traj.step().unwrap();
        }
        traj.tableau().clone()
    }

    #[test]
    fn fused_brick_matches_gate_sequence() {
        let mut rng = trajectory_rng(4, 0);
        for seed in 0..20 {
            let gates = BrickGates {
                first_a: sample_two_qubit_clifford(&mut rng, 0.9),
                first_b: sample_two_qubit_clifford(&mut rng, 0.9),
                second_a: sample_two_qubit_clifford(&mut rng, 0.9),
                second_b: sample_two_qubit_clifford(&mut rng, 0.9),
            };
            let mut fused = scrambled(seed);
            let mut plain = fused.clone();
            fused.apply_brick(3, 0, &gates).unwrap();
            apply_unfused(&mut plain, 3, 0, &gates);
            assert_eq!(fused, plain);
        }
    }

    /// Exchange `a_s <-> b_s` on every site.
    fn exchange_ab(t: &TrackedTableau) -> TrackedTableau {
        let mut out = t.clone();
        for s in 0..t.n_sites() {
            out.apply_two_qubit_gate(&SymplecticGate::swap(), 2 * s, 2 * s + 1).unwrap();
        }
        out
    }

    #[test]
    fn brick_commutes_with_ab_exchange() {
        let mut rng = trajectory_rng(5, 0);
        for seed in 0..10 {
            let gates = BrickGates::symmetric(
                sample_two_qubit_clifford(&mut rng, 0.9),
                sample_two_qubit_clifford(&mut rng, 0.9),
            );
            let base = scrambled(seed);
            let mut brick_first = base.clone();
            brick_first.apply_brick(1, 2, &gates).unwrap();
            let mut exchange_first = exchange_ab(&base);
            exchange_first.apply_brick(1, 2, &gates).unwrap();
            assert_eq!(exchange_ab(&brick_first), exchange_first);
        }
    }

    #[test]
    fn broken_brick_does_not_commute_with_ab_exchange() {
        let mut rng = trajectory_rng(6, 0);
        let mut differs = false;
        for seed in 0..10 {
            let gates = BrickGates {
                first_a: sample_two_qubit_clifford(&mut rng, 0.9),
                first_b: sample_two_qubit_clifford(&mut rng, 0.9),
                second_a: sample_two_qubit_clifford(&mut rng, 0.9),
                second_b: sample_two_qubit_clifford(&mut rng, 0.9),
            };
            let base = scrambled(seed);
            let mut brick_first = base.clone();
            brick_first.apply_brick(1, 2, &gates).unwrap();
            let mut exchange_first = exchange_ab(&base);
            exchange_first.apply_brick(1, 2, &gates).unwrap();
            differs |= exchange_ab(&brick_first) != exchange_first;
        }
        assert!(differs);
    }

    #[test]
    fn identity_bricks_are_two_swaps() {
        let mut t = TrackedTableau::new(InitialState::PureProduct, 8).unwrap();
        let id = SymplecticGate::identity(2);
        t.apply_brick(0, 1, &BrickGates::symmetric(id.clone(), id)).unwrap();
        // Z_a and Z_b exchange places: the row set is unchanged.
        let mut got: Vec<String> = t.rows().to_rows().iter().map(|r| r.to_string()).collect();
        let mut want: Vec<String> = TrackedTableau::new(InitialState::PureProduct, 8)
            .unwrap()
            .rows()
            .to_rows()
            .iter()
            .map(|r| r.to_string())
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(conditional_entropy(&t, &Region::sites([0])).unwrap(), 0);
    }

    #[test]
    fn full_transduction_keeps_product_state() {
        let config = CircuitConfig::new(8, 1.0)
            .with_seed(11)
            .with_record_every(1)
            .with_observables(vec![Observable::I3, Observable::CondEntropyQuarter, Observable::Profile(5)]);
        let rec = run_trajectory(&config, 0).unwrap();
        assert_eq!(rec.snapshots.len(), config.layers() + 1);
        for snap in &rec.snapshots {
            assert!(snap.values.iter().all(|&(_, v)| v == 0), "{snap:?}");
        }
        assert_eq!(rec.transductions, 8 * config.layers());
    }

    #[test]
    fn deterministic_given_seed_and_index() {
        let config = CircuitConfig::new(8, 0.4)
            .with_seed(99)
            .with_record_every(4)
            .with_observables(vec![Observable::I3, Observable::CondEntropyQuarter]);
        let a = run_trajectory(&config, 3).unwrap();
        let b = run_trajectory(&config, 3).unwrap();
        assert!(a.same_data(&b));
        let c = run_trajectory(&config, 4).unwrap();
        assert!(!a.same_data(&c));
    }

    #[test]
    fn config_validation() {
        assert!(CircuitConfig::new(6, 0.5).validate().is_ok());
        assert!(CircuitConfig::new(5, 0.5).validate().is_err());
        assert!(CircuitConfig::new(2, 0.5).validate().is_err());
        assert!(CircuitConfig::new(8, 1.5).validate().is_err());
        assert!(CircuitConfig::new(6, 0.5).with_observables(vec![Observable::I3]).validate().is_err());
        assert!(CircuitConfig::new(8, 0.5)
            .with_observables(vec![Observable::CoherentInfo])
            .validate()
            .is_err());
        assert!(CircuitConfig::new(8, 0.5).with_layers(0).validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let config = CircuitConfig::new(16, 0.52)
            .with_seed(7)
            .with_init(InitialState::BellReference)
            .with_observables(vec![Observable::CoherentInfo, Observable::Profile(4)]);
        let text = serde_json::to_string(&config).unwrap();
        assert!(text.contains("\"L\":16"));
        let back: CircuitConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, config);
        let minimal: CircuitConfig = serde_json::from_str(r#"{"L": 8, "p": 0.1}"#).unwrap();
        assert_eq!(minimal.layers(), 32);
        assert_eq!(minimal.cnot_prob, 0.9);
        assert!(serde_json::from_str::<CircuitConfig>(r#"{"L": 8, "p": 0.1, "bogus": 1}"#).is_err());
    }
}
