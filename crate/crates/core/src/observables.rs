//! Entropy observables, in bits.
//!
//! For a stabilizer state with `M` independent generators on `N` qubits,
//! `S = N - M`. The generators of a reduced state on region `R` span the
//! subgroup supported on `R`, whose dimension is `M - rank(restriction to the
//! complement of R)`. Everything below is that identity applied to the tracked
//! rows, with the apparatus handled through the generator count.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tableau::{InitialState, TrackedTableau};

/// A set of tracked qubits (system and/or reference), kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Region {
    qubits: Vec<usize>,
}

impl Region {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new<I: IntoIterator<Item = usize>>(qubits: I) -> Self {
        let set: BTreeSet<usize> = qubits.into_iter().collect();
        Self { qubits: set.into_iter().collect() }
    }

    /// Both system qubits of every listed site.
    pub fn sites<I: IntoIterator<Item = usize>>(sites: I) -> Self {
        Self::new(sites.into_iter().flat_map(|s| [2 * s, 2 * s + 1]))
    }

    /// Both reference qubits of every listed site.
    pub fn reference_sites<I: IntoIterator<Item = usize>>(n_system: usize, sites: I) -> Self {
        Self::new(sites.into_iter().flat_map(|s| [n_system + 2 * s, n_system + 2 * s + 1]))
    }

    /// Sites `0..x`.
    pub fn prefix(x: usize) -> Self {
        Self::sites(0..x)
    }

    /// Quarter `n` in `1..=4` of an `l`-site chain: sites `[(n-1)l/4, nl/4)`.
    pub fn quarter(l: usize, n: usize) -> Self {
        assert!((1..=4).contains(&n));
        Self::sites((n - 1) * l / 4..n * l / 4)
    }

    pub fn system(n_system: usize) -> Self {
        Self::new(0..n_system)
    }

    pub fn union(&self, other: &Region) -> Region {
        Self::new(self.qubits.iter().chain(&other.qubits).copied())
    }

    pub fn contains(&self, q: usize) -> bool {
        self.qubits.binary_search(&q).is_ok()
    }

    /// Qubits of `universe` not in `self`.
    pub fn complement_in(&self, universe: &Region) -> Region {
        Region { qubits: universe.qubits.iter().copied().filter(|&q| !self.contains(q)).collect() }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub(crate) fn check_within(&self, n_tracked: usize) -> Result<()> {
        match self.qubits.last() {
            Some(&q) if q >= n_tracked => Err(Error::Contract(format!(
                "region qubit {q} outside the {n_tracked} tracked qubits"
            ))),
            _ => Ok(()),
        }
    }
}

/// Column mask over `n_tracked` qubits selecting everything outside `region`.
pub(crate) fn complement_mask(n_tracked: usize, region: &Region) -> Vec<u64> {
    let mut mask = vec![0u64; (2 * n_tracked).div_ceil(64)];
    for q in 0..n_tracked {
        if !region.contains(q) {
            mask[(2 * q) / 64] |= 3 << ((2 * q) % 64);
        }
    }
    mask
}

/// `S(P ; A)`: entropy of region `P` together with the whole apparatus.
pub fn joint_entropy_with_apparatus(t: &TrackedTableau, region: &Region) -> Result<i64> {
    region.check_within(t.n_tracked())?;
    let outside = t.rank_masked(&complement_mask(t.n_tracked(), region));
    Ok((region.len() + t.n_apparatus()) as i64 - t.generator_total() as i64 + outside as i64)
}

/// `S(P | A) = S(P ; A) - S(A)`.
pub fn conditional_entropy(t: &TrackedTableau, region: &Region) -> Result<i64> {
    region.check_within(t.n_tracked())?;
    let outside = t.rank_masked(&complement_mask(t.n_tracked(), region));
    Ok(region.len() as i64 - t.tracked_rank() as i64 + outside as i64)
}

/// Entropy queries shared by the compressed simulator and the full oracle.
pub trait EntropyQueries {
    fn n_system(&self) -> usize;
    fn initial_state(&self) -> InitialState;
    /// `S(P ; A)`.
    fn joint_with_apparatus(&self, region: &Region) -> Result<i64>;
    /// `S(P | A)`.
    fn conditional(&self, region: &Region) -> Result<i64>;

    fn n_sites(&self) -> usize {
        self.n_system() / 2
    }
}

impl EntropyQueries for TrackedTableau {
    fn n_system(&self) -> usize {
        TrackedTableau::n_system(self)
    }

    fn initial_state(&self) -> InitialState {
        self.kind()
    }

    fn joint_with_apparatus(&self, region: &Region) -> Result<i64> {
        joint_entropy_with_apparatus(self, region)
    }

    fn conditional(&self, region: &Region) -> Result<i64> {
        conditional_entropy(self, region)
    }
}

/// `I3 = 4 S(R1|A) - 2 S(R1 u R2|A) - S(R1 u R3|A)` over the four quarters.
pub fn tripartite_information<E: EntropyQueries + ?Sized>(state: &E) -> Result<i64> {
    let l = state.n_sites();
    if l % 4 != 0 {
        return Err(Error::Contract(format!("I3 needs a site count divisible by 4, got {l}")));
    }
    let r1 = Region::quarter(l, 1);
    let s1 = state.conditional(&r1)?;
    let s12 = state.conditional(&r1.union(&Region::quarter(l, 2)))?;
    let s13 = state.conditional(&r1.union(&Region::quarter(l, 3)))?;
    Ok(4 * s1 - 2 * s12 - s13)
}

/// Coherent information from the initial system to system plus apparatus.
///
/// Mixed start: `S(S | A)`. Bell start: `S(S ; A) - S(S u S' ; A)`.
pub fn coherent_information<E: EntropyQueries + ?Sized>(state: &E) -> Result<i64> {
    let system = Region::system(state.n_system());
    match state.initial_state() {
        InitialState::MaximallyMixed => state.conditional(&system),
        InitialState::BellReference => {
            let both = Region::new(0..2 * state.n_system());
            Ok(state.joint_with_apparatus(&system)? - state.joint_with_apparatus(&both)?)
        }
        InitialState::PureProduct => Err(Error::Contract(
            "coherent information needs a mixed or Bell-reference start".into(),
        )),
    }
}

/// `S(P_x | A)` for prefixes of `x` sites.
pub fn entropy_profile<E: EntropyQueries + ?Sized>(
    state: &E,
    xs: &[usize],
) -> Result<Vec<(usize, i64)>> {
    xs.iter()
        .map(|&x| {
            if x > state.n_sites() {
                return Err(Error::Contract(format!(
                    "profile length {x} exceeds {} sites",
                    state.n_sites()
                )));
            }
            Ok((x, state.conditional(&Region::prefix(x))?))
        })
        .collect()
}

/// Named observables recorded along a trajectory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Observable {
    /// `S(P_{L/4} | A)`.
    CondEntropyQuarter,
    I3,
    CoherentInfo,
    /// `S(P_x | A)` for the first `x` sites.
    Profile(usize),
}

impl Observable {
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Check that the observable is defined for this geometry and start.
    pub fn validate(&self, sites: usize, init: InitialState) -> Result<()> {
        match self {
            Self::I3 if sites % 4 != 0 => Err(Error::InvalidConfig(format!(
                "I3 needs L divisible by 4, got L={sites}"
            ))),
            Self::CoherentInfo if init == InitialState::PureProduct => Err(Error::InvalidConfig(
                "coherent_info needs init=mixed or init=bell".into(),
            )),
            Self::Profile(x) if *x > sites => Err(Error::InvalidConfig(format!(
                "profile:{x} exceeds L={sites}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn evaluate<E: EntropyQueries + ?Sized>(&self, state: &E) -> Result<i64> {
        match self {
            Self::CondEntropyQuarter => state.conditional(&Region::prefix(state.n_sites() / 4)),
            Self::I3 => tripartite_information(state),
            Self::CoherentInfo => coherent_information(state),
            Self::Profile(x) => state.conditional(&Region::prefix(*x)),
        }
    }

    /// Parse a comma-separated list; `profile:all` expands to `0..=sites`.
    pub fn parse_list(spec: &str, sites: usize) -> Result<Vec<Observable>> {
        let mut out = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            if item == "profile:all" {
                out.extend((0..=sites).map(Observable::Profile));
            } else {
                out.push(item.parse()?);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CondEntropyQuarter => f.write_str("cond_entropy_quarter"),
            Self::I3 => f.write_str("I3"),
            Self::CoherentInfo => f.write_str("coherent_info"),
            Self::Profile(x) => write!(f, "profile:{x}"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cond_entropy_quarter" => Ok(Self::CondEntropyQuarter),
            "I3" => Ok(Self::I3),
            "coherent_info" => Ok(Self::CoherentInfo),
            _ => s
                .strip_prefix("profile:")
                .and_then(|x| x.parse().ok())
                .map(Self::Profile)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown observable {s:?}"))),
        }
    }
}

impl TryFrom<String> for Observable {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Observable> for String {
    fn from(o: Observable) -> String {
        o.to_string()
    }
}
