//! Bit-exact linear algebra over F₂.
//!
//! Everything here is immutable once built and every operation is pure, so values can be
//! shared freely between Monte-Carlo workers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum F2Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },
    #[error("cannot parse polynomial {text:?}: {reason}")]
    Parse { text: String, reason: String },
    #[error("no pivot available in column {column}")]
    NoPivot { column: usize, partial: F2Matrix },
}

type Words = SmallVec<[u64; 2]>;

/// Fixed-length vector of bits, packed little-endian into 64-bit words.
///
/// Unused high bits of the last word are always zero, so derived equality, ordering and
/// hashing are canonical.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec {
    len: usize,
    words: Words,
}

#[inline]
fn word_count(len: usize) -> usize {
    len.div_ceil(64)
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: SmallVec::from_elem(0, word_count(len)),
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVec {
            len,
            words: SmallVec::from_elem(u64::MAX, word_count(len)),
        };
        v.mask_tail();
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Builds a vector of length `len` from the low bits of `value`.
    pub fn from_u64(len: usize, value: u64) -> Self {
        assert!(len <= 64, "from_u64 supports at most 64 bits");
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = value;
            v.mask_tail();
        }
        v
    }

    /// Low 64 bits as an integer; only meaningful for `len <= 64`.
    pub fn to_u64(&self) -> u64 {
        self.words.first().copied().unwrap_or(0)
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len, "bit {i} out of range {}", self.len);
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len, "bit {i} out of range {}", self.len);
        let mask = 1u64 << (i & 63);
        if value {
            self.words[i >> 6] |= mask;
        } else {
            self.words[i >> 6] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i >> 6] ^= 1u64 << (i & 63);
    }

    pub fn checked_get(&self, i: usize) -> Result<bool, F2Error> {
        if i < self.len {
            Ok(self.get(i))
        } else {
            Err(F2Error::OutOfRange {
                index: i,
                len: self.len,
            })
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Parity of the bitwise AND, i.e. the F₂ inner product. Lengths must agree.
    #[inline]
    pub fn dot(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.len, other.len);
        let mut acc = 0u32;
        for (a, b) in self.words.iter().zip(other.words.iter()) {
            acc ^= (a & b).count_ones();
        }
        acc & 1 == 1
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut r = self.clone();
        r.xor_assign(other);
        r
    }

    pub fn and(&self, other: &BitVec) -> BitVec {
        debug_assert_eq!(self.len, other.len);
        let mut r = self.clone();
        for (a, b) in r.words.iter_mut().zip(other.words.iter()) {
            *a &= b;
        }
        r
    }

    pub fn or(&self, other: &BitVec) -> BitVec {
        debug_assert_eq!(self.len, other.len);
        let mut r = self.clone();
        for (a, b) in r.words.iter_mut().zip(other.words.iter()) {
            *a |= b;
        }
        r
    }

    /// Pointwise `self <= other`.
    pub fn is_below(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(other.words.iter())
            .all(|(a, b)| a & !b == 0)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }

    pub fn first_one(&self) -> Option<usize> {
        self.iter_ones().next()
    }

    /// Concatenation `self ++ other`.
    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut r = BitVec::zeros(self.len + other.len);
        for i in self.iter_ones() {
            r.set(i, true);
        }
        for i in other.iter_ones() {
            r.set(self.len + i, true);
        }
        r
    }

    /// Bits `start..start+len` as a new vector.
    pub fn slice(&self, start: usize, len: usize) -> BitVec {
        assert!(start + len <= self.len);
        let mut r = BitVec::zeros(len);
        for i in self.iter_ones() {
            if i >= start && i < start + len {
                r.set(i - start, true);
            }
        }
        r
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.len)
            .map(|i| if self.get(i) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({})", self.to_bit_string())
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

impl FromStr for BitVec {
    type Err = F2Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut v = BitVec::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                _ => {
                    return Err(F2Error::Parse {
                        text: s.to_string(),
                        reason: format!("unexpected character {c:?}"),
                    })
                }
            }
        }
        Ok(v)
    }
}

impl Serialize for BitVec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_bit_string())
    }
}

impl<'de> Deserialize<'de> for BitVec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Affine function over F₂: `constant + Σ coeffs_i · x_i`.
///
/// The variable universe size is carried in `coeffs.len()`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinPoly {
    coeffs: BitVec,
    constant: bool,
}

impl LinPoly {
    pub fn new(coeffs: BitVec, constant: bool) -> Self {
        LinPoly { coeffs, constant }
    }

    pub fn zero(vars: usize) -> Self {
        LinPoly::new(BitVec::zeros(vars), false)
    }

    pub fn one(vars: usize) -> Self {
        LinPoly::new(BitVec::zeros(vars), true)
    }

    /// The polynomial `x_i` (0-based index).
    pub fn var(vars: usize, i: usize) -> Self {
        let mut c = BitVec::zeros(vars);
        c.set(i, true);
        LinPoly::new(c, false)
    }

    /// Literal `x_i` (positive) or `x_i + 1` (negated).
    pub fn literal(vars: usize, i: usize, positive: bool) -> Self {
        let mut p = LinPoly::var(vars, i);
        p.constant = !positive;
        p
    }

    /// Sum of the given variables.
    pub fn sum_of_vars(vars: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut c = BitVec::zeros(vars);
        for i in indices {
            c.flip(i);
        }
        LinPoly::new(c, false)
    }

    #[inline]
    pub fn vars(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    pub fn coeffs(&self) -> &BitVec {
        &self.coeffs
    }

    #[inline]
    pub fn constant(&self) -> bool {
        self.constant
    }

    pub fn is_zero(&self) -> bool {
        !self.constant && self.coeffs.is_zero()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_zero()
    }

    /// Number of variables with a nonzero coefficient.
    pub fn support_size(&self) -> usize {
        self.coeffs.count_ones()
    }

    pub fn eval(&self, a: &BitVec) -> Result<bool, F2Error> {
        if a.len() != self.vars() {
            return Err(F2Error::Dimension {
                expected: self.vars(),
                got: a.len(),
            });
        }
        Ok(self.eval_unchecked(a))
    }

    #[inline]
    pub fn eval_unchecked(&self, a: &BitVec) -> bool {
        self.coeffs.dot(a) ^ self.constant
    }

    pub fn add(&self, other: &LinPoly) -> Result<LinPoly, F2Error> {
        if self.vars() != other.vars() {
            return Err(F2Error::Dimension {
                expected: self.vars(),
                got: other.vars(),
            });
        }
        Ok(self.add_unchecked(other))
    }

    #[inline]
    pub fn add_unchecked(&self, other: &LinPoly) -> LinPoly {
        LinPoly::new(self.coeffs.xor(&other.coeffs), self.constant ^ other.constant)
    }

    /// `self + 1`.
    pub fn negate(&self) -> LinPoly {
        LinPoly::new(self.coeffs.clone(), !self.constant)
    }

    /// Parses the text form `x1+x3+1` over a universe of `vars` variables (names are 1-based).
    pub fn parse(text: &str, vars: usize) -> Result<LinPoly, F2Error> {
        let err = |reason: String| F2Error::Parse {
            text: text.to_string(),
            reason,
        };
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(err("empty".into()));
        }
        let mut p = LinPoly::zero(vars);
        for tok in trimmed.split('+') {
            let tok = tok.trim();
            match tok {
                "0" => {}
                "1" => p.constant = !p.constant,
                _ => {
                    let idx: usize = tok
                        .strip_prefix('x')
                        .ok_or_else(|| err(format!("bad term {tok:?}")))?
                        .parse()
                        .map_err(|_| err(format!("bad variable {tok:?}")))?;
                    if idx == 0 || idx > vars {
                        return Err(err(format!("variable {tok} outside 1..={vars}")));
                    }
                    p.coeffs.flip(idx - 1);
                }
            }
        }
        Ok(p)
    }
}

impl fmt::Display for LinPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms: Vec<String> = self.coeffs.iter_ones().map(|i| format!("x{}", i + 1)).collect();
        if self.constant {
            terms.push("1".into());
        }
        if terms.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&terms.join("+"))
        }
    }
}

impl fmt::Debug for LinPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinPoly({self})")
    }
}

/// Dense F₂ matrix stored as a list of row bit vectors.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct F2Matrix {
    cols: usize,
    rows: Vec<BitVec>,
}

impl F2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        F2Matrix {
            cols,
            rows: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.rows[i].set(i, true);
        }
        m
    }

    pub fn from_rows(cols: usize, rows: Vec<BitVec>) -> Result<Self, F2Error> {
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(F2Error::Dimension {
                expected: cols,
                got: bad.len(),
            });
        }
        Ok(F2Matrix { cols, rows })
    }

    /// Convenience constructor from nested 0/1 literals.
    pub fn from_bits(rows: &[&[u8]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let rows = rows
            .iter()
            .map(|r| {
                assert_eq!(r.len(), cols);
                BitVec::from_bools(&r.iter().map(|&b| b != 0).collect::<Vec<_>>())
            })
            .collect();
        F2Matrix { cols, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn mat_vec(&self, a: &BitVec) -> Result<BitVec, F2Error> {
        if a.len() != self.cols {
            return Err(F2Error::Dimension {
                expected: self.cols,
                got: a.len(),
            });
        }
        let mut out = BitVec::zeros(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if row.dot(a) {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    /// One step of the canonical elimination: with `used` rows already pivoted, picks the
    /// lowest-index row `>= used` having a 1 in `column`, swaps it to position `used`, and
    /// clears the column everywhere else. Returns `false` (leaving `self` untouched) when no
    /// such row exists.
    pub fn pivot_step(&mut self, used: usize, column: usize) -> bool {
        let Some(pr) = (used..self.rows.len()).find(|&r| self.rows[r].get(column)) else {
            return false;
        };
        self.rows.swap(used, pr);
        let pivot = self.rows[used].clone();
        for (r, row) in self.rows.iter_mut().enumerate() {
            if r != used && row.get(column) {
                row.xor_assign(&pivot);
            }
        }
        true
    }

    /// Deterministic reduced-row-echelon transformation driven by a caller-chosen pivot
    /// column order. Two calls on equal inputs produce bit-identical results, which is what
    /// lets both simulated players replay it independently.
    pub fn canonical_reduce(&self, pivot_cols: &[usize]) -> Result<F2Matrix, F2Error> {
        let mut m = self.clone();
        for (t, &c) in pivot_cols.iter().enumerate() {
            if c >= self.cols {
                return Err(F2Error::OutOfRange {
                    index: c,
                    len: self.cols,
                });
            }
            if pivot_cols[..t].contains(&c) || !m.pivot_step(t, c) {
                return Err(F2Error::NoPivot {
                    column: c,
                    partial: m,
                });
            }
        }
        Ok(m)
    }
}

impl fmt::Debug for F2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self.rows.iter().map(|r| r.to_bit_string()).collect();
        write!(f, "F2Matrix[{}]", rows.join(";"))
    }
}

/// `⌈log₂ m⌉`, with the convention that a choice among at most one option costs 0 bits.
pub fn ceil_log2(m: usize) -> u32 {
    if m <= 1 {
        0
    } else {
        usize::BITS - (m - 1).leading_zeros()
    }
}
