//! The compressed stabilizer state used for production runs.
//!
//! Only the support of each generator on the system (and, optionally, the
//! reference copy of the system) is tracked. Apparatus and environment qubits
//! exist only as counters. Generators whose tracked support vanishes still
//! belong to the stabilizer group (they act on the apparatus), so we count
//! them in `ignored` to keep the total generator number `M` exact.
//!
//! Qubit layout: site `s` owns `a_s = 2s` and `b_s = 2s + 1`; the reference
//! partner of system qubit `q` is `q + n_system`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::gf2::{self, BitMatrix, BitRow, ColumnWindow, SymplecticGate};

/// How the system (and possibly its reference copy) starts out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// `|0...0>` on the system.
    #[serde(rename = "product", alias = "pureproduct")]
    PureProduct,
    /// Fully mixed system, no generators.
    #[serde(rename = "mixed", alias = "maximallymixed")]
    MaximallyMixed,
    /// Each system qubit in a Bell pair with a reference qubit.
    #[serde(rename = "bell", alias = "bellreference")]
    BellReference,
}

impl InitialState {
    pub fn name(self) -> &'static str {
        match self {
            Self::PureProduct => "product",
            Self::MaximallyMixed => "mixed",
            Self::BellReference => "bell",
        }
    }

    pub fn has_reference(self) -> bool {
        matches!(self, Self::BellReference)
    }
}

impl std::str::FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "product" | "pure" | "pureproduct" => Ok(Self::PureProduct),
            "mixed" | "maximallymixed" => Ok(Self::MaximallyMixed),
            "bell" | "bellreference" => Ok(Self::BellReference),
            other => Err(Error::InvalidConfig(format!("unknown initial state {other:?}"))),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackedTableau {
    rows: BitMatrix,
    ignored: usize,
    n_system: usize,
    n_reference: usize,
    n_apparatus: usize,
    n_environment: usize,
    kind: InitialState,
    independent: bool,
    peak_rows: usize,
}

impl TrackedTableau {
    pub fn new(kind: InitialState, n_system: usize) -> Result<Self, Error> {
        if n_system == 0 || n_system % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "system qubit count must be even and positive, got {n_system}"
            )));
        }
        let n_reference = if kind.has_reference() { n_system } else { 0 };
        let k = n_system + n_reference;
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
                    let i = rows.push_zero_row();
                    rows.set(i, 2 * q, true);
                    rows.set(i, 2 * r, true);
                    let i = rows.push_zero_row();
                    rows.set(i, 2 * q + 1, true);
                    rows.set(i, 2 * r + 1, true);
                }
            }
        }
        let peak_rows = rows.n_rows();
        Ok(Self {
            rows,
            ignored: 0,
            n_system,
            n_reference,
            n_apparatus: 0,
            n_environment: 0,
            kind,
            independent: true,
            peak_rows,
        })
    }

    pub fn kind(&self) -> InitialState {
        self.kind
    }

    pub fn n_system(&self) -> usize {
        self.n_system
    }

    pub fn n_sites(&self) -> usize {
        self.n_system / 2
    }

    pub fn n_reference(&self) -> usize {
        self.n_reference
    }

    /// `K`: system plus reference qubits.
    pub fn n_tracked(&self) -> usize {
        self.n_system + self.n_reference
    }

    pub fn n_apparatus(&self) -> usize {
        self.n_apparatus
    }

    pub fn n_environment(&self) -> usize {
        self.n_environment
    }

    pub fn ignored_count(&self) -> usize {
        self.ignored
    }

    pub fn rows(&self) -> &BitMatrix {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.n_rows()
    }

    /// Largest row count seen since construction.
    pub fn peak_row_count(&self) -> usize {
        self.peak_rows
    }

    /// `M`: tracked rows plus ignored generators.
    pub fn generator_total(&self) -> usize {
        self.rows.n_rows() + self.ignored
    }

    /// Rank of the tracked rows over all tracked columns.
    pub fn tracked_rank(&self) -> usize {
        if self.independent {
            self.rows.n_rows()
        } else {
            self.rows.rank_all()
        }
    }

    /// Rank of the tracked rows restricted to `window`.
    pub fn rank_on(&self, window: &ColumnWindow) -> Result<usize, Error> {
        Ok(gf2::rank(&self.rows, window)?)
    }

    pub(crate) fn rank_masked(&self, mask: &[u64]) -> usize {
        self.rows.rank_masked(mask)
    }

    fn check_system_qubits(&self, qubits: &[usize]) -> Result<(), Error> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.n_system {
                return Err(Error::Contract(format!(
                    "gates act on system qubits only; qubit {q} is outside 0..{}",
                    self.n_system
                )));
            }
            if qubits[..i].contains(&q) {
                return Err(Error::Contract(format!("qubit {q} repeated in gate window")));
            }
        }
        Ok(())
    }

    pub fn apply_two_qubit_gate(
        &mut self,
        gate: &SymplecticGate,
        q1: usize,
        q2: usize,
    ) -> Result<(), Error> {
        if gate.arity() != 2 {
            return Err(Error::Contract(format!("expected a two-qubit gate, got arity {}", gate.arity())));
        }
        self.apply_gate_on(gate, &[q1, q2])
    }

    /// Apply a gate of any supported arity to system qubits.
    pub fn apply_gate_on(&mut self, gate: &SymplecticGate, qubits: &[usize]) -> Result<(), Error> {
        self.check_system_qubits(qubits)?;
        gf2::apply_gate(&mut self.rows, gate, &ColumnWindow::new(qubits.iter().copied()))?;
        Ok(())
    }

    /// Noisy transduction of one site: `b` is handed to a fresh apparatus
    /// qubit, `a` to a fresh environment qubit that is traced out, and both
    /// are replaced by `|0>`.
    pub fn transduce_site(&mut self, site: usize) -> Result<(), Error> {
        if site >= self.n_sites() {
            return Err(Error::Contract(format!(
                "site {site} outside 0..{}",
                self.n_sites()
            )));
        }
        let (a, b) = (2 * site, 2 * site + 1);
        let k = self.n_tracked();

        // b moves to the apparatus: its support is no longer tracked.
        self.rows.clear_qubits(&[b]);
        self.n_apparatus += 1;

        // a goes to the environment and is traced out.
        let pivots = gf2::row_reduce_window(&mut self.rows, &ColumnWindow::new([a]))?;
        self.rows.swap_remove_rows(&pivots);
        self.n_environment += 1;

        // Fresh |0> on both qubits.
        self.rows.push_row(&BitRow::pauli_z(k, a))?;
        self.rows.push_row(&BitRow::pauli_z(k, b))?;
        self.independent = false;
        // Several transductions between compactions can leave dependent rows;
        // eliminate early rather than let the count pass 2K.
        if self.rows.n_rows() > 2 * k {
            self.rows.truncate(self.rows.n_rows() - 2);
            self.compact();
            self.rows.push_row(&BitRow::pauli_z(k, a))?;
            self.rows.push_row(&BitRow::pauli_z(k, b))?;
            self.independent = false;
        }
        self.peak_rows = self.peak_rows.max(self.rows.n_rows());
        Ok(())
    }

    /// Gaussian elimination over the tracked columns; rows that vanish are
    /// supported on the apparatus only and move into the ignored counter.
    pub fn compact(&mut self) {
        if self.independent {
            return;
        }
        self.ignored += self.rows.reduce_and_drop_dependent();
        self.independent = true;
    }

    /// Text dump: a header with the counters, then one bitstring per row.
    pub fn dump(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TrackedTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "# K={} M={} rows={} ignored={} system={} reference={} apparatus={} environment={}",
            self.n_tracked(),
            self.generator_total(),
            self.rows.n_rows(),
            self.ignored,
            self.n_system,
            self.n_reference,
            self.n_apparatus,
            self.n_environment,
        )?;
        for i in 0..self.rows.n_rows() {
            writeln!(f, "{}", self.rows.row_bits(i))?;
        }
        Ok(())
    }
}
