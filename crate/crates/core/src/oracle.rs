//! Full-tableau reference simulator.
//!
//! Keeps every qubit explicitly: system, reference, and one apparatus plus one
//! environment qubit per transduction, appended when they first interact.
//! Nothing is ever discarded, so any region's entropy is available, at a cost
//! that grows with the number of transductions. Used only to check the
//! compressed simulator and the exchange symmetries at small sizes.

use rand::Rng;
use serde::Serialize;

use crate::circuit::{take_snapshot, BrickGates, CircuitBackend, CircuitConfig, CircuitDriver, Snapshot};
use crate::error::{Error, Result};
use crate::gf2::{self, BitMatrix, BitRow, ColumnWindow, SymplecticGate};
use crate::observables::{EntropyQueries, Region};
use crate::tableau::InitialState;

pub const DEFAULT_QUBIT_CAP: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    Reference,
    Apparatus,
    Environment,
}

/// Which appended qubits a [`BlockEntropy`] view conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Apparatus,
    Environment,
}

impl Block {
    fn role(self) -> Role {
        match self {
            Self::Apparatus => Role::Apparatus,
            Self::Environment => Role::Environment,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FullTableau {
    rows: BitMatrix,
    roles: Vec<Role>,
    n_system: usize,
    kind: InitialState,
    cap: usize,
    layer: usize,
}

impl FullTableau {
    pub fn new(kind: InitialState, n_system: usize, cap: usize) -> Result<Self> {
        if n_system == 0 || n_system % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "system qubit count must be even and positive, got {n_system}"
            )));
        }
        let n_reference = if kind.has_reference() { n_system } else { 0 };
        let k = n_system + n_reference;
        if k > cap {
            return Err(Error::OracleCap { needed: k, cap });
        }
        let mut roles = vec![Role::System; n_system];
        roles.resize(k, Role::Reference);
        let mut rows = BitMatrix::new(2 * k);
        match kind {
            InitialState::PureProduct => {
                for q in 0..n_system {
                    rows.push_row(&BitRow::pauli_z(k, q))?;
                }
            }
            InitialState::MaximallyMixed => {}
            InitialState::BellReference => {
                for q in 0..n_system {
                    let r = q + n_system;
                    let mut x = BitRow::pauli_x(k, q);
                    x.set(2 * r, true);
                    let mut z = BitRow::pauli_z(k, q);
                    z.set(2 * r + 1, true);
                    rows.push_row(&x)?;
                    rows.push_row(&z)?;
                }
            }
        }
        Ok(Self { rows, roles, n_system, kind, cap, layer: 0 })
    }

    pub fn n_qubits(&self) -> usize {
        self.roles.len()
    }

    pub fn n_tracked(&self) -> usize {
        if self.kind.has_reference() {
            2 * self.n_system
        } else {
            self.n_system
        }
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn qubits_with(&self, role: Role) -> Vec<usize> {
        (0..self.roles.len()).filter(|&q| self.roles[q] == role).collect()
    }

    pub fn rows(&self) -> &BitMatrix {
        &self.rows
    }

    /// Layers completed so far.
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    fn check_system(&self, qubits: &[usize]) -> Result<()> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.n_system {
                return Err(Error::Contract(format!("qubit {q} is not a system qubit")));
            }
            if qubits[..i].contains(&q) {
                return Err(Error::Contract(format!("qubit {q} repeated in gate window")));
            }
        }
        Ok(())
    }

    pub fn apply_gate_on(&mut self, gate: &SymplecticGate, qubits: &[usize]) -> Result<()> {
        self.check_system(qubits)?;
        gf2::apply_gate(&mut self.rows, gate, &ColumnWindow::new(qubits.iter().copied()))?;
        Ok(())
    }

    fn append_fresh(&mut self, role: Role) -> usize {
        let q = self.roles.len();
        self.roles.push(role);
        self.rows.grow_cols(2 * self.roles.len());
        let i = self.rows.push_zero_row();
        self.rows.set(i, 2 * q + 1, true);
        q
    }

    /// Append fresh apparatus and environment qubits in `|0>`, then swap `b`
    /// with the apparatus qubit and `a` with the environment qubit.
    pub fn transduce_site(&mut self, site: usize) -> Result<()> {
        if site >= self.n_system / 2 {
            return Err(Error::Contract(format!("site {site} outside 0..{}", self.n_system / 2)));
        }
        let needed = self.roles.len() + 2;
        if needed > self.cap {
            return Err(Error::OracleCap { needed, cap: self.cap });
        }
        let app = self.append_fresh(Role::Apparatus);
        let env = self.append_fresh(Role::Environment);
        let swap = SymplecticGate::swap();
        gf2::apply_gate(&mut self.rows, &swap, &ColumnWindow::new([2 * site + 1, app]))?;
        gf2::apply_gate(&mut self.rows, &swap, &ColumnWindow::new([2 * site, env]))?;
        Ok(())
    }

    fn check_region(&self, region: &[usize]) -> Result<()> {
        for (i, &q) in region.iter().enumerate() {
            if q >= self.roles.len() {
                return Err(Error::Contract(format!(
                    "qubit {q} outside the {} oracle qubits",
                    self.roles.len()
                )));
            }
            if region[..i].contains(&q) {
                return Err(Error::Contract(format!("qubit {q} repeated in region")));
            }
        }
        Ok(())
    }

    /// Entropy of an arbitrary qubit set: `|R| - (M - rank of the rows on the
    /// complement of R)`.
    pub fn entropy_region(&self, region: &[usize]) -> Result<i64> {
        self.check_region(region)?;
        let mut inside = vec![false; self.roles.len()];
        for &q in region {
            inside[q] = true;
        }
        let outside = ColumnWindow::new((0..self.roles.len()).filter(|&q| !inside[q]));
        let r = gf2::rank(&self.rows, &outside)?;
        Ok(region.len() as i64 - (self.rows.n_rows() as i64 - r as i64))
    }

    /// Same quantity, computed by isolating the generators supported inside
    /// `R`: reduce over the complement, drop the pivots, count survivors.
    pub fn entropy_region_by_reduction(&self, region: &[usize]) -> Result<i64> {
        self.check_region(region)?;
        let mut inside = vec![false; self.roles.len()];
        for &q in region {
            inside[q] = true;
        }
        let outside = ColumnWindow::new((0..self.roles.len()).filter(|&q| !inside[q]));
        let mut rows = self.rows.clone();
        let pivots = gf2::row_reduce_window(&mut rows, &outside)?;
        rows.remove_rows(&pivots);
        let survivors = rows.n_rows() - rows.remove_zero_rows();
        Ok(region.len() as i64 - survivors as i64)
    }

    /// Entropy of everything; zero for pure starts.
    pub fn total_entropy(&self) -> i64 {
        self.roles.len() as i64 - self.rows.rank_all() as i64
    }

    fn with_role(&self, region: &Region, role: Role) -> Vec<usize> {
        let mut qubits = region.qubits().to_vec();
        qubits.extend(self.qubits_with(role));
        qubits
    }

    /// Precomputed view answering `S(P u block)` for tracked regions `P`.
    pub fn block_view(&self, block: Block) -> BlockEntropy {
        BlockEntropy::new(self, block)
    }
}

impl CircuitBackend for FullTableau {
    /// Gate by gate, as the brick is defined; the compressed simulator uses
    /// the fused form.
    fn apply_brick(&mut self, site_i: usize, site_j: usize, gates: &BrickGates) -> Result<()> {
        let (ai, bi, aj, bj) = (2 * site_i, 2 * site_i + 1, 2 * site_j, 2 * site_j + 1);
        let swap = SymplecticGate::swap();
        self.apply_gate_on(&gates.first_a, &[ai, aj])?;
        self.apply_gate_on(&gates.first_b, &[bi, bj])?;
        self.apply_gate_on(&swap, &[ai, bi])?;
        self.apply_gate_on(&swap, &[aj, bj])?;
        self.apply_gate_on(&gates.second_a, &[ai, aj])?;
        self.apply_gate_on(&gates.second_b, &[bi, bj])
    }

    fn transduce(&mut self, site: usize) -> Result<()> {
        self.transduce_site(site)
    }

    fn end_layer(&mut self) -> Result<()> {
        self.layer += 1;
        Ok(())
    }
}

/// Naive queries straight from [`FullTableau::entropy_region`].
impl EntropyQueries for FullTableau {
    fn n_system(&self) -> usize {
        self.n_system
    }

    fn initial_state(&self) -> InitialState {
        self.kind
    }

    fn joint_with_apparatus(&self, region: &Region) -> Result<i64> {
        region.check_within(self.n_tracked())?;
        self.entropy_region(&self.with_role(region, Role::Apparatus))
    }

    fn conditional(&self, region: &Region) -> Result<i64> {
        let apparatus = self.qubits_with(Role::Apparatus);
        Ok(self.joint_with_apparatus(region)? - self.entropy_region(&apparatus)?)
    }
}

/// `S(P u B)` for a fixed block `B` of appended qubits and varying tracked
/// regions `P`.
///
/// The rows are eliminated once over the columns outside `tracked u B`; the
/// `r_out` pivot rows contribute their count to every complement rank, and the
/// remaining rows (zero outside `tracked u B`) are projected onto the tracked
/// columns. Then `S(P u B) = |P| + |B| - M + r_out + rank(residual on
/// tracked \ P)`.
#[derive(Clone, Debug)]
pub struct BlockEntropy {
    block: Block,
    n_system: usize,
    n_tracked: usize,
    kind: InitialState,
    block_len: usize,
    n_generators: usize,
    r_out: usize,
    residual: BitMatrix,
}

impl BlockEntropy {
    fn new(full: &FullTableau, block: Block) -> Self {
        let role = block.role();
        let n_tracked = full.n_tracked();
        let outside =
            ColumnWindow::new((n_tracked..full.n_qubits()).filter(|&q| full.roles[q] != role));
        let mask = outside.column_mask(full.n_qubits()).expect("indices in range");
        let mut rows = full.rows.clone();
        let r_out = rows.echelon(&mask);
        let mut residual = BitMatrix::new(2 * n_tracked);
        for i in r_out..rows.n_rows() {
            let r = residual.push_zero_row();
            for c in 0..2 * n_tracked {
                if rows.get(i, c) {
                    residual.set(r, c, true);
                }
            }
        }
        residual.reduce_and_drop_dependent();
        Self {
            block,
            n_system: full.n_system,
            n_tracked,
            kind: full.kind,
            block_len: full.qubits_with(role).len(),
            n_generators: full.rows.n_rows(),
            r_out,
            residual,
        }
    }

    pub fn block(&self) -> Block {
        self.block
    }

    /// `S(P u B)`.
    pub fn joint(&self, region: &Region) -> Result<i64> {
        region.check_within(self.n_tracked)?;
        let mask = crate::observables::complement_mask(self.n_tracked, region);
        let r = self.residual.rank_masked(&mask);
        Ok((region.len() + self.block_len) as i64 - self.n_generators as i64
            + (self.r_out + r) as i64)
    }
}

/// Conditioning is on the view's block, which is the apparatus for the views
/// used in observable comparisons.
impl EntropyQueries for BlockEntropy {
    fn n_system(&self) -> usize {
        self.n_system
    }

    fn initial_state(&self) -> InitialState {
        self.kind
    }

    fn joint_with_apparatus(&self, region: &Region) -> Result<i64> {
        self.joint(region)
    }

    fn conditional(&self, region: &Region) -> Result<i64> {
        Ok(self.joint(region)? - self.joint(&Region::empty())?)
    }
}

/// A seeded oracle trajectory, stepped layer by layer with the same driver
/// (and so the same random draws) as the compressed simulator.
pub struct OracleRun {
    driver: CircuitDriver,
    full: FullTableau,
}

impl OracleRun {
    pub fn new(config: &CircuitConfig, trajectory_index: u64, cap: usize) -> Result<Self> {
        let driver = CircuitDriver::new(config, trajectory_index)?;
        let full = FullTableau::new(config.initial_state, 2 * config.sites, cap)?;
        Ok(Self { driver, full })
    }

    pub fn step(&mut self) -> Result<usize> {
        self.driver.step(&mut self.full)
    }

    pub fn is_done(&self) -> bool {
        self.driver.is_done()
    }

    pub fn layer(&self) -> usize {
        self.driver.layer()
    }

    pub fn tableau(&self) -> &FullTableau {
        &self.full
    }
}

/// Run the oracle over a full trajectory, calling `visit` after every
/// recorded layer (including layer 0 when scheduled).
pub fn evolve_full<F>(config: &CircuitConfig, trajectory_index: u64, cap: usize, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &FullTableau) -> Result<()>,
{
    let mut run = OracleRun::new(config, trajectory_index, cap)?;
    if config.is_recorded(0) {
        visit(0, run.tableau())?;
    }
    while !run.is_done() {
        let layer = run.step()?;
        if config.is_recorded(layer) {
            visit(layer, run.tableau())?;
        }
    }
    Ok(())
}

/// Oracle values of the configured observables at every recorded layer.
pub fn oracle_snapshots(config: &CircuitConfig, trajectory_index: u64, cap: usize) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    evolve_full(config, trajectory_index, cap, |layer, full| {
        let view = full.block_view(Block::Apparatus);
        out.push(take_snapshot(&view, layer, &config.observables)?);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SymmetryViolation {
    pub layer: usize,
    pub region: Vec<usize>,
    pub lhs: i64,
    pub rhs: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SymmetryReport {
    pub checks: usize,
    pub violations: Vec<SymmetryViolation>,
}

impl SymmetryReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(&mut self, other: SymmetryReport) {
        self.checks += other.checks;
        self.violations.extend(other.violations);
    }
}

/// A random union of whole sites of the system and, with a reference, of the
/// reference copy. Each site is included with probability one half.
pub fn random_site_region<R: Rng + ?Sized>(rng: &mut R, n_system: usize, with_reference: bool) -> Region {
    let sites = n_system / 2;
    let system: Vec<usize> = (0..sites).filter(|_| rng.random::<bool>()).collect();
    let mut region = Region::sites(system);
    if with_reference {
        let reference: Vec<usize> = (0..sites).filter(|_| rng.random::<bool>()).collect();
        region = region.union(&Region::reference_sites(n_system, reference));
    }
    region
}

/// Check `S(P u A) = S(P u E)` on `P = {}` and `trials` random site-closed
/// regions.
///
/// The exact symmetry of a trajectory exchanges `a <-> b` on every site
/// together with `A <-> E`, so the identity holds for regions closed under
/// `a <-> b`, that is, unions of whole sites.
pub fn check_ie_symmetry<R: Rng + ?Sized>(full: &FullTableau, trials: usize, rng: &mut R) -> Result<SymmetryReport> {
    let app = full.block_view(Block::Apparatus);
    let env = full.block_view(Block::Environment);
    let mut report = SymmetryReport::default();
    let with_reference = full.kind.has_reference();
    for t in 0..=trials {
        let region = if t == 0 {
            Region::empty()
        } else {
            random_site_region(rng, full.n_system, with_reference)
        };
        let (lhs, rhs) = (app.joint(&region)?, env.joint(&region)?);
        report.checks += 1;
        if lhs != rhs {
            report.violations.push(SymmetryViolation { layer: full.layer, region: region.qubits().to_vec(), lhs, rhs });
        }
    }
    Ok(report)
}

/// Check `S(P_S, P_S' ; A) = S(P_S^c, P_S'^c ; A)` on the full region and
/// `trials` random site-closed regions. Needs a reference.
pub fn check_complement_symmetry<R: Rng + ?Sized>(
    full: &FullTableau,
    trials: usize,
    rng: &mut R,
) -> Result<SymmetryReport> {
    if !full.kind.has_reference() {
        return Err(Error::Contract("complement symmetry needs a Bell-reference start".into()));
    }
    let app = full.block_view(Block::Apparatus);
    let tracked = Region::new(0..full.n_tracked());
    let mut report = SymmetryReport::default();
    for t in 0..=trials {
        let region = if t == 0 { tracked.clone() } else { random_site_region(rng, full.n_system, true) };
        let complement = region.complement_in(&tracked);
        let (lhs, rhs) = (app.joint(&region)?, app.joint(&complement)?);
        report.checks += 1;
        if lhs != rhs {
            report.violations.push(SymmetryViolation { layer: full.layer, region: region.qubits().to_vec(), lhs, rhs });
        }
    }
    Ok(report)
}
