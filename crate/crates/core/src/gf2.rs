//! Bit-packed linear algebra over GF(2).
//!
//! A Pauli operator on `n` qubits (up to phase) is a vector of `2n` bits. We
//! use the interleaved column convention: column `2q` holds the X-support of
//! qubit `q` and column `2q + 1` its Z-support, so the two columns of a qubit
//! always sit in the same machine word.
//!
//! Clifford gates act on these vectors by right-multiplication with a
//! symplectic matrix: a row restricted to the gate's window, read as the
//! vector `(x_0, z_0, x_1, z_1, ...)`, is replaced by `row * M`.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::OnceLock;

use thiserror::Error;

const WORD: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Gf2Error {
    #[error("qubit {qubit} is outside the {n_qubits} available qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("qubit {0} appears more than once in a column window")]
    DuplicateQubit(usize),
    #[error("gate acts on {gate} qubits but the window holds {window}")]
    ArityMismatch { gate: usize, window: usize },
    #[error("gate matrix does not preserve the symplectic form")]
    NotSymplectic,
    #[error("unsupported gate arity {0} (1 to 4 qubits)")]
    UnsupportedArity(usize),
    #[error("row has {found} columns, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("matrices need an even number of columns, got {0}")]
    OddColumns(usize),
    #[error("invalid bit character {0:?}")]
    BadBit(char),
}

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

#[inline]
fn xor_words(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= *s;
    }
}

/// A single GF(2) vector, bit-packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitRow {
    words: Vec<u64>,
    len: usize,
}

impl BitRow {
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; words_for(len)], len }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut row = Self::default();
        for b in bits {
            if row.len % WORD == 0 {
                row.words.push(0);
            }
            if b {
                row.words[row.len / WORD] |= 1 << (row.len % WORD);
            }
            row.len += 1;
        }
        row
    }

    /// Single-qubit X on qubit `q` of an `n_qubits` register.
    pub fn pauli_x(n_qubits: usize, q: usize) -> Self {
        let mut row = Self::zeros(2 * n_qubits);
        row.set(2 * q, true);
        row
    }

    /// Single-qubit Z on qubit `q` of an `n_qubits` register.
    pub fn pauli_z(n_qubits: usize, q: usize) -> Self {
        let mut row = Self::zeros(2 * n_qubits);
        row.set(2 * q + 1, true);
        row
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor_assign(&mut self, other: &BitRow) {
        assert_eq!(self.len, other.len, "row length mismatch");
        xor_words(&mut self.words, &other.words);
    }

    pub fn xor(&self, other: &BitRow) -> BitRow {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Symplectic inner product: 1 iff the two Paulis anticommute.
    pub fn symplectic_product(&self, other: &BitRow) -> bool {
        assert_eq!(self.len, other.len, "row length mismatch");
        let mut acc = 0u32;
        for (&a, &b) in self.words.iter().zip(&other.words) {
            acc ^= (a & swap_xz(b)).count_ones();
        }
        acc & 1 == 1
    }
}

/// Exchange the X and Z bit of every qubit in a word.
#[inline]
fn swap_xz(w: u64) -> u64 {
    const EVEN: u64 = 0x5555_5555_5555_5555;
    ((w & EVEN) << 1) | ((w >> 1) & EVEN)
}

impl fmt::Display for BitRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitRow({self})")
    }
}

impl FromStr for BitRow {
    type Err = Gf2Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Gf2Error::BadBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_bits(bits))
    }
}

/// An ordered list of qubits. Resolves to the columns `{2q, 2q + 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColumnWindow {
    qubits: Vec<usize>,
}

impl ColumnWindow {
    pub fn new<I: IntoIterator<Item = usize>>(qubits: I) -> Self {
        Self { qubits: qubits.into_iter().collect() }
    }

    pub fn all(n_qubits: usize) -> Self {
        Self::new(0..n_qubits)
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

    pub fn validate(&self, n_qubits: usize) -> Result<(), Gf2Error> {
        if let Some(&q) = self.qubits.iter().find(|&&q| q >= n_qubits) {
            return Err(Gf2Error::QubitOutOfRange { qubit: q, n_qubits });
        }
        let duplicate = if self.qubits.len() <= 8 {
            let q = &self.qubits;
            (1..q.len()).find_map(|i| q[..i].contains(&q[i]).then_some(q[i]))
        } else {
            let mut seen = vec![false; n_qubits];
            self.qubits.iter().copied().find(|&q| std::mem::replace(&mut seen[q], true))
        };
        match duplicate {
            Some(q) => Err(Gf2Error::DuplicateQubit(q)),
            None => Ok(()),
        }
    }

    /// Word mask selecting the window's columns in a row of `n_qubits` qubits.
    pub fn column_mask(&self, n_qubits: usize) -> Result<Vec<u64>, Gf2Error> {
        self.validate(n_qubits)?;
        let mut mask = vec![0u64; words_for(2 * n_qubits)];
        for &q in &self.qubits {
            mask[(2 * q) / WORD] |= 3 << ((2 * q) % WORD);
        }
        Ok(mask)
    }
}

/// A list of equal-length rows stored contiguously.
///
/// Bits past `n_cols` are kept zero. Rows are addressed by index; the
/// elimination routines either keep row positions (`row_reduce_window`) or
/// move pivots to the top (`echelon`).
#[derive(Clone)]
pub struct BitMatrix {
    data: Vec<u64>,
    stride: usize,
    n_cols: usize,
    n_rows: usize,
}

impl BitMatrix {
    pub fn new(n_cols: usize) -> Self {
        Self { data: Vec::new(), stride: words_for(n_cols).max(1), n_cols, n_rows: 0 }
    }

    pub fn from_rows(n_cols: usize, rows: &[BitRow]) -> Result<Self, Gf2Error> {
        let mut m = Self::new(n_cols);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_qubits(&self) -> usize {
        self.n_cols / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    /// Number of meaningful words per row.
    pub fn row_words(&self) -> usize {
        words_for(self.n_cols)
    }

    pub fn row(&self, i: usize) -> &[u64] {
        let start = i * self.stride;
        &self.data[start..start + self.row_words()]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [u64] {
        let w = self.row_words();
        let start = i * self.stride;
        &mut self.data[start..start + w]
    }

    pub fn row_bits(&self, i: usize) -> BitRow {
        BitRow { words: self.row(i).to_vec(), len: self.n_cols }
    }

    pub fn to_rows(&self) -> Vec<BitRow> {
        (0..self.n_rows).map(|i| self.row_bits(i)).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(c < self.n_cols);
        (self.data[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(c < self.n_cols, "column {c} out of range {}", self.n_cols);
        let idx = r * self.stride + c / WORD;
        let mask = 1u64 << (c % WORD);
        if value {
            self.data[idx] |= mask;
        } else {
            self.data[idx] &= !mask;
        }
    }

    pub fn push_row(&mut self, row: &BitRow) -> Result<usize, Gf2Error> {
        if row.len != self.n_cols {
            return Err(Gf2Error::LengthMismatch { expected: self.n_cols, found: row.len });
        }
        let i = self.push_zero_row();
        let w = row.words.len();
        self.row_mut(i)[..w].copy_from_slice(&row.words);
        Ok(i)
    }

    pub fn push_zero_row(&mut self) -> usize {
        self.data.resize(self.data.len() + self.stride, 0);
        self.n_rows += 1;
        self.n_rows - 1
    }

    pub fn is_row_zero(&self, i: usize) -> bool {
        self.row(i).iter().all(|&w| w == 0)
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let s = self.stride;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (head, tail) = self.data.split_at_mut(hi * s);
        head[lo * s..lo * s + s].swap_with_slice(&mut tail[..s]);
    }

    /// `rows[dst] ^= rows[src]`, touching words from `from_word` on.
    #[inline]
    pub fn xor_row_into(&mut self, src: usize, dst: usize, from_word: usize) {
        debug_assert_ne!(src, dst);
        let s = self.stride;
        let w = self.row_words();
        if src < dst {
            let (head, tail) = self.data.split_at_mut(dst * s);
            xor_words(&mut tail[from_word..w], &head[src * s + from_word..src * s + w]);
        } else {
            let (head, tail) = self.data.split_at_mut(src * s);
            xor_words(&mut head[dst * s + from_word..dst * s + w], &tail[from_word..w]);
        }
    }

    pub fn truncate(&mut self, n_rows: usize) {
        if n_rows < self.n_rows {
            self.n_rows = n_rows;
            self.data.truncate(n_rows * self.stride);
        }
    }

    /// Remove the listed rows, keeping the relative order of the rest.
    pub fn remove_rows(&mut self, indices: &[usize]) {
        if indices.is_empty() {
            return;
        }
        let mut drop = vec![false; self.n_rows];
        for &i in indices {
            drop[i] = true;
        }
        let s = self.stride;
        let mut out = 0;
        for i in 0..self.n_rows {
            if !drop[i] {
                if out != i {
                    self.data.copy_within(i * s..i * s + s, out * s);
                }
                out += 1;
            }
        }
        self.truncate(out);
    }

    /// Remove the listed rows by moving the last rows into their places.
    /// Cheaper than [`Self::remove_rows`] but does not keep the order.
    pub fn swap_remove_rows(&mut self, indices: &[usize]) {
        let mut sorted = indices.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted.dedup();
        for i in sorted {
            let last = self.n_rows - 1;
            self.swap_rows(i, last);
            self.truncate(last);
        }
    }

    /// Drop all-zero rows; returns how many were removed.
    pub fn remove_zero_rows(&mut self) -> usize {
        let zero: Vec<usize> = (0..self.n_rows).filter(|&i| self.is_row_zero(i)).collect();
        self.remove_rows(&zero);
        zero.len()
    }

    /// Zero both columns of each listed qubit in every row.
    pub fn clear_qubits(&mut self, qubits: &[usize]) {
        let s = self.stride;
        for &q in qubits {
            let w = (2 * q) / WORD;
            let keep = !(3u64 << ((2 * q) % WORD));
            for r in 0..self.n_rows {
                self.data[r * s + w] &= keep;
            }
        }
    }

    /// Grow the column count, zero-filling the new columns.
    pub fn grow_cols(&mut self, n_cols: usize) {
        assert!(n_cols >= self.n_cols, "grow_cols cannot shrink");
        let need = words_for(n_cols);
        if need > self.stride {
            let stride = need.max(2 * self.stride);
            let mut data = vec![0u64; self.n_rows * stride];
            for r in 0..self.n_rows {
                data[r * stride..r * stride + self.stride]
                    .copy_from_slice(&self.data[r * self.stride..(r + 1) * self.stride]);
            }
            self.data = data;
            self.stride = stride;
        }
        self.n_cols = n_cols;
    }

    /// Copy of the matrix with every row ANDed against `mask`, zero rows dropped.
    fn masked_copy(&self, mask: &[u64]) -> BitMatrix {
        let w = self.row_words();
        let mut out = BitMatrix::new(self.n_cols);
        out.data.reserve(self.n_rows * out.stride);
        for r in 0..self.n_rows {
            let row = self.row(r);
            if row.iter().zip(mask).any(|(a, m)| a & m != 0) {
                let i = out.push_zero_row();
                let dst = out.row_mut(i);
                for k in 0..w {
                    dst[k] = row[k] & mask[k];
                }
            }
        }
        out
    }

    /// Forward elimination over the columns selected by `mask`, scanning
    /// columns in increasing index and taking the lowest-index candidate row as
    /// pivot. Pivot rows are swapped to the top in the order found. Row
    /// operations act on full rows, so the row space is preserved. Returns the
    /// number of pivots, which is the rank of the masked restriction.
    pub fn echelon(&mut self, mask: &[u64]) -> usize {
        self.echelon_impl(mask, false)
    }

    /// `restricted`: every row is already zero outside `mask`.
    fn echelon_impl(&mut self, mask: &[u64], restricted: bool) -> usize {
        let mut rank = 0;
        let s = self.stride;
        let full = self.full_mask();
        // Rows below the pivots vanish on every processed masked column, so
        // XORs may skip leading words only while those words hold no other bits.
        let mut skip_ok = true;
        for (wi, &mw) in mask.iter().enumerate().take(self.row_words()) {
            let from_word = if skip_ok { wi } else { 0 };
            skip_ok &= restricted || mw & full[wi] == full[wi];
            let mut bits = mw;
            while bits != 0 {
                if rank == self.n_rows {
                    return rank;
                }
                let bit = bits.trailing_zeros();
                bits &= bits - 1;
                let probe = 1u64 << bit;
                let Some(pivot) =
                    (rank..self.n_rows).find(|&r| self.data[r * s + wi] & probe != 0)
                else {
                    continue;
                };
                // Rows between `rank` and `pivot` lack the bit; eliminate
                // below the pivot, then move it up.
                for r in pivot + 1..self.n_rows {
                    if self.data[r * s + wi] & probe != 0 {
                        self.xor_row_into(pivot, r, from_word);
                    }
                }
                self.swap_rows(rank, pivot);
                rank += 1;
            }
        }
        rank
    }

    fn full_mask(&self) -> Vec<u64> {
        let mut mask = vec![u64::MAX; self.row_words()];
        let tail = self.n_cols % WORD;
        if tail != 0 {
            *mask.last_mut().unwrap() = (1u64 << tail) - 1;
        }
        mask
    }

    /// Rank of the rows restricted to `mask`, without modifying `self`.
    pub fn rank_masked(&self, mask: &[u64]) -> usize {
        self.masked_copy(mask).echelon_impl(mask, true)
    }

    pub fn rank_all(&self) -> usize {
        let mask = self.full_mask();
        self.clone().echelon(&mask)
    }

    /// Row-reduce over all columns in place, then drop zero rows. Returns
    /// the number of rows dropped.
    pub fn reduce_and_drop_dependent(&mut self) -> usize {
        let mask = self.full_mask();
        let rank = self.echelon(&mask);
        let dropped = self.n_rows - rank;
        self.truncate(rank);
        dropped
    }
}

impl PartialEq for BitMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n_cols == other.n_cols
            && self.n_rows == other.n_rows
            && (0..self.n_rows).all(|i| self.row(i) == other.row(i))
    }
}

impl Eq for BitMatrix {}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries((0..self.n_rows).map(|i| self.row_bits(i))).finish()
    }
}

/// GF(2) rank of `rows` restricted to the window's columns.
pub fn rank(rows: &BitMatrix, window: &ColumnWindow) -> Result<usize, Gf2Error> {
    let mask = window.column_mask(rows.n_qubits())?;
    Ok(rows.rank_masked(&mask))
}

/// Change the basis of the row space so that only the returned pivot rows
/// have nonzero restriction to the window, and those restrictions are
/// linearly independent. Row positions are kept; only non-pivot rows are
/// modified (each receives XORs of pivot rows).
pub fn row_reduce_window(
    rows: &mut BitMatrix,
    window: &ColumnWindow,
) -> Result<Vec<usize>, Gf2Error> {
    let mask = window.column_mask(rows.n_qubits())?;
    let mut is_pivot = vec![false; rows.n_rows()];
    let mut pivots = Vec::new();
    for (wi, &mw) in mask.iter().enumerate() {
        let mut bits = mw;
        while bits != 0 {
            let probe = 1u64 << bits.trailing_zeros();
            bits &= bits - 1;
            let s = rows.stride;
            let Some(pivot) =
                (0..rows.n_rows).find(|&r| !is_pivot[r] && rows.data[r * s + wi] & probe != 0)
            else {
                continue;
            };
            is_pivot[pivot] = true;
            pivots.push(pivot);
            // Earlier non-pivot rows lack the bit.
            for r in pivot + 1..rows.n_rows {
                if !is_pivot[r] && rows.data[r * s + wi] & probe != 0 {
                    rows.xor_row_into(pivot, r, 0);
                }
            }
        }
    }
    Ok(pivots)
}

/// Replace the window restriction `v` of every row by `v * M`.
pub fn apply_gate(
    rows: &mut BitMatrix,
    gate: &SymplecticGate,
    window: &ColumnWindow,
) -> Result<(), Gf2Error> {
    if gate.arity() != window.len() {
        return Err(Gf2Error::ArityMismatch { gate: gate.arity(), window: window.len() });
    }
    window.validate(rows.n_qubits())?;
    // Window qubits adjacent in both the row and the gate share one field.
    let mut fields = [(0usize, 0u32, 0u64, 0u32); 4];
    let mut n_fields = 0;
    for (m, &q) in window.qubits().iter().enumerate() {
        let (w, sh) = ((2 * q) / WORD, ((2 * q) % WORD) as u32);
        if n_fields > 0 {
            let (pw, psh, pmask, poff) = fields[n_fields - 1];
            let width = pmask.count_ones();
            if pw == w && psh + width == sh && poff + width == 2 * m as u32 {
                fields[n_fields - 1].2 = (pmask << 2) | 3;
                continue;
            }
        }
        fields[n_fields] = (w, sh, 3, 2 * m as u32);
        n_fields += 1;
    }
    let fields = &fields[..n_fields];
    let s = rows.stride;
    // A table pays off only when it has fewer entries than there are rows.
    let table = (1usize << gate.dim() <= rows.n_rows).then(|| gate.table());
    for r in 0..rows.n_rows {
        let row = &mut rows.data[r * s..r * s + s];
        let mut input = 0usize;
        for &(w, sh, mask, off) in fields {
            input |= (((row[w] >> sh) & mask) as usize) << off;
        }
        let output = match table {
            Some(t) => t[input] as usize,
            None => gate.apply_bits(input as u8) as usize,
        };
        if output != input {
            for &(w, sh, mask, off) in fields {
                let field = (output >> off) as u64 & mask;
                row[w] = (row[w] & !(mask << sh)) | (field << sh);
            }
        }
    }
    Ok(())
}

/// The `6` invertible 2x2 matrices over GF(2), i.e. every phase-free
/// single-qubit Clifford action. Order: enumerate `n` in `0..16`, reading the
/// image of X as the low two bits of `n` and the image of Z as the high two
/// bits (bit 0 = X part, bit 1 = Z part), keeping the invertible ones, then
/// move the identity to the front. The other five keep ascending `n`.
pub fn enumerate_single_qubit_symplectics() -> Vec<SymplecticGate> {
    let mut out: Vec<SymplecticGate> = (0u8..16)
        .filter_map(|n| {
            let (x_img, z_img) = (n & 3, n >> 2);
            (x_img != 0 && z_img != 0 && x_img != z_img)
                .then(|| SymplecticGate::from_rows(1, &[x_img, z_img]).expect("invertible 2x2"))
        })
        .collect();
    // Rotate the identity (x->x, z->z, i.e. n = 9) to the front.
    let id = out.iter().position(|g| g.is_identity()).expect("identity present");
    out[..=id].rotate_right(1);
    out
}

/// A phase-free Clifford gate on `1..=4` qubits, stored as its `2k x 2k`
/// symplectic matrix over GF(2).
///
/// `rows[i]` is the image of basis vector `e_i` as a bitmask, with bit `2m`
/// the X-part and bit `2m + 1` the Z-part of gate qubit `m`. The lookup
/// table for row updates is built on first application.
#[derive(Clone)]
pub struct SymplecticGate {
    arity: usize,
    rows: [u8; 8],
    table: OnceLock<[u8; 256]>,
}

impl PartialEq for SymplecticGate {
    fn eq(&self, other: &Self) -> bool {
        self.arity == other.arity && self.rows == other.rows
    }
}

impl Eq for SymplecticGate {}

impl Hash for SymplecticGate {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.arity.hash(state);
        self.rows.hash(state);
    }
}

impl SymplecticGate {
    pub fn from_rows(arity: usize, rows: &[u8]) -> Result<Self, Gf2Error> {
        if !(1..=4).contains(&arity) {
            return Err(Gf2Error::UnsupportedArity(arity));
        }
        let dim = 2 * arity;
        if rows.len() != dim {
            return Err(Gf2Error::LengthMismatch { expected: dim, found: rows.len() });
        }
        let full = if dim == 8 { u8::MAX } else { (1u8 << dim) - 1 };
        let mut packed = [0u8; 8];
        for (dst, &src) in packed.iter_mut().zip(rows) {
            if src & !full != 0 {
                return Err(Gf2Error::LengthMismatch { expected: dim, found: 8 - src.leading_zeros() as usize });
            }
            *dst = src;
        }
        let gate = Self::unchecked(arity, packed);
        if !gate.is_symplectic() {
            return Err(Gf2Error::NotSymplectic);
        }
        Ok(gate)
    }

    fn unchecked(arity: usize, rows: [u8; 8]) -> Self {
        Self { arity, rows, table: OnceLock::new() }
    }

    fn table(&self) -> &[u8; 256] {
        self.table.get_or_init(|| {
            let mut table = [0u8; 256];
            // Each entry extends the entry without its lowest set bit.
            for v in 1..1usize << self.dim() {
                table[v] = table[v & (v - 1)] ^ self.rows[v.trailing_zeros() as usize];
            }
            table
        })
    }

    pub fn identity(arity: usize) -> Self {
        assert!((1..=4).contains(&arity));
        let mut rows = [0u8; 8];
        for (i, r) in rows.iter_mut().enumerate().take(2 * arity) {
            *r = 1 << i;
        }
        Self::unchecked(arity, rows)
    }

    /// CNOT with control on gate qubit 0: `x_t ^= x_c`, `z_c ^= z_t`.
    pub fn cnot() -> Self {
        Self::from_rows(2, &[0b0101, 0b0010, 0b0100, 0b1010]).expect("CNOT is symplectic")
    }

    pub fn swap() -> Self {
        Self::from_rows(2, &[0b0100, 0b1000, 0b0001, 0b0010]).expect("SWAP is symplectic")
    }

    pub fn hadamard() -> Self {
        Self::from_rows(1, &[0b10, 0b01]).expect("H is symplectic")
    }

    pub fn phase() -> Self {
        Self::from_rows(1, &[0b11, 0b10]).expect("S is symplectic")
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        2 * self.arity
    }

    /// Matrix entry `M[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.rows[i] >> j & 1 == 1
    }

    pub fn matrix_rows(&self) -> &[u8] {
        &self.rows[..self.dim()]
    }

    /// `v * M` for a window restriction packed as bits.
    pub fn apply_bits(&self, v: u8) -> u8 {
        let mut out = 0;
        let mut bits = v;
        while bits != 0 {
            out ^= self.rows[bits.trailing_zeros() as usize];
            bits &= bits - 1;
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.arity)
    }

    pub fn is_symplectic(&self) -> bool {
        let dim = self.dim();
        (0..dim).all(|i| {
            (0..dim).all(|j| {
                let expected = i / 2 == j / 2 && i != j;
                symplectic_form(self.rows[i], self.rows[j]) == expected
            })
        })
    }

    /// The gate that applies `self` and then `next`: matrix `self * next`.
    pub fn then(&self, next: &SymplecticGate) -> SymplecticGate {
        assert_eq!(self.arity, next.arity, "arity mismatch in composition");
        let mut rows = [0u8; 8];
        for (i, r) in rows.iter_mut().enumerate().take(self.dim()) {
            *r = next.apply_bits(self.rows[i]);
        }
        Self::unchecked(self.arity, rows)
    }

    /// `self` on the first qubits, `other` on the following ones.
    pub fn tensor(&self, other: &SymplecticGate) -> SymplecticGate {
        let arity = self.arity + other.arity;
        let left: Vec<usize> = (0..self.arity).collect();
        let right: Vec<usize> = (self.arity..arity).collect();
        self.embed(arity, &left).then(&other.embed(arity, &right))
    }

    /// Lift to an `arity`-qubit gate acting on `positions`, identity elsewhere.
    pub fn embed(&self, arity: usize, positions: &[usize]) -> SymplecticGate {
        assert_eq!(positions.len(), self.arity, "one position per gate qubit");
        assert!(arity <= 4 && positions.iter().all(|&p| p < arity));
        let spread = |v: u8| -> u8 {
            let mut out = 0u8;
            for (m, &p) in positions.iter().enumerate() {
                out |= ((v >> (2 * m)) & 3) << (2 * p);
            }
            out
        };
        let mut rows = Self::identity(arity).rows;
        for (m, &p) in positions.iter().enumerate() {
            rows[2 * p] = spread(self.rows[2 * m]);
            rows[2 * p + 1] = spread(self.rows[2 * m + 1]);
        }
        Self::unchecked(arity, rows)
    }

    /// Inverse via `M^-1 = L M^T L`, with `L` the symplectic form.
    pub fn inverse(&self) -> SymplecticGate {
        let dim = self.dim();
        let mut rows = [0u8; 8];
        for (i, r) in rows.iter_mut().enumerate().take(dim) {
            // (L M^T L)[i][j] = M[j ^ 1][i ^ 1]
            for j in 0..dim {
                if self.entry(j ^ 1, i ^ 1) {
                    *r |= 1 << j;
                }
            }
        }
        Self::unchecked(self.arity, rows)
    }
}

impl fmt::Debug for SymplecticGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dim = self.dim();
        let rows: Vec<String> = self.rows[..dim]
            .iter()
            .map(|r| (0..dim).map(|j| if r >> j & 1 == 1 { '1' } else { '0' }).collect())
            .collect();
        write!(f, "SymplecticGate[{}]", rows.join(" "))
    }
}

/// `u L v^T` for packed window vectors.
#[inline]
fn symplectic_form(u: u8, v: u8) -> bool {
    let swapped = ((v & 0x55) << 1) | ((v >> 1) & 0x55);
    (u & swapped).count_ones() & 1 == 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&str]) -> BitMatrix {
        let rows: Vec<BitRow> = rows.iter().map(|s| s.parse().unwrap()).collect();
        BitMatrix::from_rows(rows[0].len(), &rows).unwrap()
    }

    #[test]
    fn identity_rank() {
        let id = m(&["1000", "0100", "0010", "0001"]);
        assert_eq!(rank(&id, &ColumnWindow::all(2)).unwrap(), 4);
    }

    #[test]
    fn dependent_third_row() {
        let rows = m(&["1100", "0110", "1010"]);
        assert_eq!(rank(&rows, &ColumnWindow::all(2)).unwrap(), 2);
    }

    #[test]
    fn rank_window_out_of_range() {
        let rows = m(&["1100"]);
        assert_eq!(
            rank(&rows, &ColumnWindow::new([2])),
            Err(Gf2Error::QubitOutOfRange { qubit: 2, n_qubits: 2 })
        );
        assert_eq!(rank(&rows, &ColumnWindow::new([0, 0])), Err(Gf2Error::DuplicateQubit(0)));
    }

    #[test]
    fn reduce_already_reduced() {
        let mut rows = m(&["0100", "0001"]);
        let before = rows.clone();
        let pivots = row_reduce_window(&mut rows, &ColumnWindow::new([0])).unwrap();
        assert_eq!(pivots, vec![0]);
        assert_eq!(rows, before);
    }

    #[test]
    fn reduce_clears_shared_x() {
        let mut rows = m(&["1010", "1001"]);
        let pivots = row_reduce_window(&mut rows, &ColumnWindow::new([0])).unwrap();
        assert_eq!(pivots, vec![0]);
        assert_eq!(rows.row_bits(1).to_string(), "0011");
    }

    #[test]
    fn cnot_spreads_x_from_control() {
        let mut rows = m(&["1000"]);
        apply_gate(&mut rows, &SymplecticGate::cnot(), &ColumnWindow::new([0, 1])).unwrap();
        assert_eq!(rows.row_bits(0).to_string(), "1010");
        // Z on the target picks up Z on the control.
        let mut rows = m(&["0001"]);
        apply_gate(&mut rows, &SymplecticGate::cnot(), &ColumnWindow::new([0, 1])).unwrap();
        assert_eq!(rows.row_bits(0).to_string(), "0101");
    }

    #[test]
    fn swap_exchanges_qubits() {
        let mut rows = m(&["1001"]);
        apply_gate(&mut rows, &SymplecticGate::swap(), &ColumnWindow::new([0, 1])).unwrap();
        assert_eq!(rows.row_bits(0).to_string(), "0110");
    }

    #[test]
    fn gate_window_order_matters() {
        // CNOT with control on qubit 1 when the window is reversed.
        let mut rows = m(&["0010"]);
        apply_gate(&mut rows, &SymplecticGate::cnot(), &ColumnWindow::new([1, 0])).unwrap();
        assert_eq!(rows.row_bits(0).to_string(), "1010");
    }

    #[test]
    fn arity_mismatch() {
        let mut rows = m(&["1000"]);
        let err = apply_gate(&mut rows, &SymplecticGate::cnot(), &ColumnWindow::new([0]));
        assert_eq!(err, Err(Gf2Error::ArityMismatch { gate: 2, window: 1 }));
    }

    #[test]
    fn six_single_qubit_symplectics() {
        // Oracle: enumerate all 16 2x2 matrices and keep those with nonzero
        // determinant.
        let invertible = (0u8..16)
            .filter(|n| {
                let (a, b, c, d) = (n & 1, n >> 1 & 1, n >> 2 & 1, n >> 3 & 1);
                (a * d + b * c) % 2 == 1
            })
            .count();
        let gates = enumerate_single_qubit_symplectics();
        assert_eq!(gates.len(), invertible);
        assert_eq!(gates.len(), 6);
        assert!(gates[0].is_identity());
        assert!(gates.iter().all(SymplecticGate::is_symplectic));
        assert!(gates.contains(&SymplecticGate::hadamard()));
        assert!(gates.contains(&SymplecticGate::phase()));
        for (i, a) in gates.iter().enumerate() {
            for b in &gates[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn rejects_non_symplectic() {
        // x -> x, z -> z on qubit 0 but x0 -> x0 + x1 without the Z back-action.
        let err = SymplecticGate::from_rows(2, &[0b0101, 0b0010, 0b0100, 0b1000]);
        assert_eq!(err, Err(Gf2Error::NotSymplectic));
        // Singular.
        assert_eq!(SymplecticGate::from_rows(1, &[0b01, 0b01]), Err(Gf2Error::NotSymplectic));
    }

    #[test]
    fn inverse_composes_to_identity() {
        let g = SymplecticGate::hadamard().tensor(&SymplecticGate::phase()).then(&SymplecticGate::cnot());
        assert!(g.then(&g.inverse()).is_identity());
        assert!(g.inverse().then(&g).is_identity());
        assert!(SymplecticGate::swap().then(&SymplecticGate::swap()).is_identity());
    }

    #[test]
    fn embed_matches_window_application() {
        let mut a = m(&["10011100"]);
        let mut b = a.clone();
        let g = SymplecticGate::cnot();
        apply_gate(&mut a, &g, &ColumnWindow::new([3, 1])).unwrap();
        apply_gate(&mut b, &g.embed(4, &[3, 1]), &ColumnWindow::all(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grow_cols_keeps_content() {
        let mut rows = m(&["1011"]);
        rows.grow_cols(200);
        assert_eq!(rows.n_cols(), 200);
        assert!(rows.get(0, 0) && !rows.get(0, 1) && rows.get(0, 3));
        rows.set(0, 199, true);
        assert_eq!(rows.row_bits(0).count_ones(), 4);
    }

    #[test]
    fn remove_rows_keeps_order() {
        let mut rows = m(&["1000", "0100", "0010", "0001"]);
        rows.remove_rows(&[0, 2]);
        assert_eq!(rows.to_rows(), vec!["0100".parse().unwrap(), "0001".parse().unwrap()]);
    }

    #[test]
    fn symplectic_product_detects_anticommutation() {
        let x: BitRow = "1000".parse().unwrap();
        let z: BitRow = "0100".parse().unwrap();
        let xx: BitRow = "1010".parse().unwrap();
        let zz: BitRow = "0101".parse().unwrap();
        assert!(x.symplectic_product(&z));
        assert!(!xx.symplectic_product(&zz));
    }
}
