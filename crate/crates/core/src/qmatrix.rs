//! Q-matrix algebra: attribute profiles, item combinations, capability,
//! completeness, column-permutation equivalence and candidate enumeration.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest item count a bitmask row label can hold.
pub const MAX_ITEMS: usize = 32;
/// Largest attribute count a profile bitmask can hold.
pub const MAX_ATTRIBUTES: usize = 16;
/// Item cap for exhaustive enumeration.
pub const ENUM_MAX_ITEMS: usize = 20;
/// Attribute cap for exhaustive enumeration.
pub const ENUM_MAX_ATTRIBUTES: usize = 10;
/// Default cap on the raw search-space size `(2^k - 1)^m`.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

/// A k-bit attribute profile. Bit `j` (0-based) is attribute `j + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttributeProfile(u16);

impl AttributeProfile {
    pub const ZERO: AttributeProfile = AttributeProfile(0);

    pub fn from_bits(bits: u16) -> Self {
        AttributeProfile(bits)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn cardinality(self) -> u32 {
        self.0.count_ones()
    }

    pub fn has(self, attribute: usize) -> bool {
        self.0 >> attribute & 1 == 1
    }

    /// True iff every attribute in `required` is mastered.
    pub fn dominates(self, required: u16) -> bool {
        self.0 & required == required
    }

    /// `A^1 ... A^k` as a string of `0`/`1`.
    pub fn label(self, k: usize) -> String {
        (0..k).map(|j| if self.has(j) { '1' } else { '0' }).collect()
    }

    pub fn parse_label(label: &str) -> Result<(Self, usize)> {
        let k = label.len();
        if k == 0 || k > MAX_ATTRIBUTES {
            return Err(Error::InvalidParams(format!("bad profile label {label:?}")));
        }
        let mut bits = 0u16;
        for (j, ch) in label.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << j,
                '0' => {}
                _ => return Err(Error::InvalidParams(format!("bad profile label {label:?}"))),
            }
        }
        Ok((AttributeProfile(bits), k))
    }

    /// All nonzero profiles of length `k`, by cardinality then lexicographic
    /// order of the sorted attribute indices.
    pub fn nonzero_profiles(k: usize) -> Vec<AttributeProfile> {
        let mut out: Vec<u32> = (1u32..1 << k).collect();
        out.sort_by(|&a, &b| card_lex_cmp(a, b));
        out.into_iter().map(|b| AttributeProfile(b as u16)).collect()
    }
}

/// A nonempty set of items. Bit `i` (0-based) is item `i + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemCombo(u32);

impl ItemCombo {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 {
            return Err(Error::InvalidParams("item combination must be nonempty".into()));
        }
        Ok(ItemCombo(bits))
    }

    /// Builds a combo from 0-based item indices.
    pub fn from_items(items: &[usize]) -> Result<Self> {
        let mut bits = 0u32;
        for &i in items {
            if i >= MAX_ITEMS {
                return Err(Error::ItemOutOfRange { item: i + 1, m: MAX_ITEMS });
            }
            bits |= 1 << i;
        }
        ItemCombo::new(bits)
    }

    pub fn single(item: usize) -> Self {
        ItemCombo(1 << item)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn cardinality(self) -> u32 {
        self.0.count_ones()
    }

    pub fn contains(self, item: usize) -> bool {
        self.0 >> item & 1 == 1
    }

    pub fn is_subset_of(self, other: ItemCombo) -> bool {
        self.0 & other.0 == self.0
    }

    /// 0-based item indices in ascending order.
    pub fn items(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..MAX_ITEMS).filter(move |&i| bits >> i & 1 == 1)
    }

    pub fn with(self, item: usize) -> ItemCombo {
        ItemCombo(self.0 | 1 << item)
    }

    /// Comma-joined 1-based item indices, e.g. `1,3`.
    pub fn label(self) -> String {
        self.items().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(",")
    }

    /// Parses a comma-joined list of 1-based item indices.
    pub fn parse_label(label: &str) -> Result<Self> {
        let mut items = Vec::new();
        for part in label.split(',') {
            let i: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParams(format!("bad item combo {label:?}")))?;
            if i == 0 {
                return Err(Error::InvalidParams(format!("items are 1-based in {label:?}")));
            }
            items.push(i - 1);
        }
        ItemCombo::from_items(&items)
    }
}

impl fmt::Display for ItemCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Cardinality first, then lexicographic comparison of the ascending
/// index lists of the set bits.
pub fn card_lex_cmp(a: u32, b: u32) -> Ordering {
    a.count_ones().cmp(&b.count_ones()).then_with(|| {
        let diff = a ^ b;
        if diff == 0 {
            return Ordering::Equal;
        }
        // The first differing index belongs to the lexicographically smaller list.
        let low = diff.trailing_zeros();
        if a >> low & 1 == 1 {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    })
}

/// An m x k binary item-attribute matrix without zero rows.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QMatrix {
    m: usize,
    k: usize,
    rows: Vec<u16>,
}

impl QMatrix {
    /// Builds from row bitmasks (bit `j` = attribute `j + 1`).
    pub fn from_row_bits(k: usize, rows: Vec<u16>) -> Result<Self> {
        let m = rows.len();
        if m == 0 || m > MAX_ITEMS {
            return Err(Error::InvalidQMatrix(format!("item count must be in 1..={MAX_ITEMS}, got {m}")));
        }
        if k == 0 || k > MAX_ATTRIBUTES {
            return Err(Error::InvalidQMatrix(format!(
                "attribute count must be in 1..={MAX_ATTRIBUTES}, got {k}"
            )));
        }
        let mask = (1u32 << k) - 1;
        for (i, &r) in rows.iter().enumerate() {
            if r == 0 {
                return Err(Error::InvalidQMatrix(format!("row {} is all zeros", i + 1)));
            }
            if u32::from(r) & !mask != 0 {
                return Err(Error::InvalidQMatrix(format!("row {} has bits beyond k = {k}", i + 1)));
            }
        }
        Ok(QMatrix { m, k, rows })
    }

    /// Builds from a dense 0/1 row-major table.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let mut bits = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidQMatrix(format!("row {} has length {}, expected {k}", i + 1, row.len())));
            }
            let mut b = 0u16;
            for (j, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => b |= 1 << j,
                    _ => return Err(Error::InvalidQMatrix(format!("entry ({}, {}) is not binary", i + 1, j + 1))),
                }
            }
            bits.push(b);
        }
        QMatrix::from_row_bits(k, bits)
    }

    /// Builds from column values read as m-bit integers, row 1 most significant.
    pub fn from_columns(m: usize, columns: &[u32]) -> Result<Self> {
        let k = columns.len();
        let rows = (0..m)
            .map(|i| {
                let shift = m - 1 - i;
                columns
                    .iter()
                    .enumerate()
                    .fold(0u16, |acc, (j, &c)| acc | (((c >> shift) & 1) as u16) << j)
            })
            .collect();
        QMatrix::from_row_bits(k, rows)
    }

    /// The k x k identity, one unit row per attribute.
    pub fn identity(k: usize) -> Result<Self> {
        QMatrix::from_row_bits(k, (0..k).map(|j| 1u16 << j).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Row `item` (0-based) as an attribute bitmask.
    pub fn row(&self, item: usize) -> u16 {
        self.rows[item]
    }

    pub fn row_bits(&self) -> &[u16] {
        &self.rows
    }

    pub fn get(&self, item: usize, attribute: usize) -> bool {
        self.rows[item] >> attribute & 1 == 1
    }

    /// Column `j` as an m-bit integer with row 1 in the most significant bit.
    pub fn column(&self, j: usize) -> u32 {
        self.rows
            .iter()
            .fold(0u32, |acc, &r| acc << 1 | u32::from(r >> j & 1))
    }

    pub fn columns(&self) -> Vec<u32> {
        (0..self.k).map(|j| self.column(j)).collect()
    }

    /// Capability indicator of `profile` for 0-based `item`: 1 iff the
    /// profile masters every attribute the item requires.
    pub fn capability(&self, profile: AttributeProfile, item: usize) -> Result<bool> {
        if item >= self.m {
            return Err(Error::ItemOutOfRange { item: item + 1, m: self.m });
        }
        Ok(profile.dominates(self.rows[item]))
    }

    /// Bitmask of items the profile can answer (bit `i` = item `i + 1`).
    pub fn capable_items(&self, profile: AttributeProfile) -> u32 {
        self.rows
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &r)| if profile.dominates(r) { acc | 1 << i } else { acc })
    }

    /// Every unit row `e_j` occurs among the rows.
    pub fn is_complete(&self) -> bool {
        (0..self.k).all(|j| self.rows.contains(&(1u16 << j)))
    }

    /// Equality up to a column permutation.
    pub fn equivalent(&self, other: &QMatrix) -> Result<bool> {
        if self.m != other.m || self.k != other.k {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.m, self.k, other.m, other.k
            )));
        }
        let mut a = self.columns();
        let mut b = other.columns();
        a.sort_unstable();
        b.sort_unstable();
        Ok(a == b)
    }

    /// The class representative whose columns are in nonincreasing order.
    pub fn canonicalize(&self) -> QMatrix {
        let mut cols = self.columns();
        cols.sort_unstable_by(|a, b| b.cmp(a));
        QMatrix::from_columns(self.m, &cols).expect("column permutation keeps rows nonzero")
    }

    pub fn is_canonical(&self) -> bool {
        self.columns().windows(2).all(|w| w[0] >= w[1])
    }

    /// New matrix whose column `j` is column `perm[j]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<QMatrix> {
        if perm.len() != self.k {
            return Err(Error::DimensionMismatch(format!("permutation of length {} for k = {}", perm.len(), self.k)));
        }
        let cols = self.columns();
        let permuted: Vec<u32> = perm.iter().map(|&p| cols[p]).collect();
        QMatrix::from_columns(self.m, &permuted)
    }

    /// Keeps the listed rows (0-based), in the given order.
    pub fn select_rows(&self, items: &[usize]) -> Result<QMatrix> {
        let mut rows = Vec::with_capacity(items.len());
        for &i in items {
            if i >= self.m {
                return Err(Error::ItemOutOfRange { item: i + 1, m: self.m });
            }
            rows.push(self.rows[i]);
        }
        QMatrix::from_row_bits(self.k, rows)
    }

    /// Rows as `0`/`1` strings.
    pub fn row_strings(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|&r| AttributeProfile::from_bits(r).label(self.k))
            .collect()
    }

    /// Text form: m lines of k characters, each line newline-terminated.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.m * (self.k + 1));
        for row in self.row_strings() {
            s.push_str(&row);
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for QMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for QMatrix {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        if body.is_empty() {
            return Err(Error::Parse { line: 1, msg: "empty Q-matrix".into() });
        }
        let mut rows = Vec::new();
        let mut k = None;
        for (n, line) in body.split('\n').enumerate() {
            let width = *k.get_or_insert(line.len());
            if line.len() != width {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("expected {width} characters, found {}", line.len()),
                });
            }
            let mut row = Vec::with_capacity(width);
            for ch in line.chars() {
                match ch {
                    '0' => row.push(0),
                    '1' => row.push(1),
                    other => {
                        return Err(Error::Parse { line: n + 1, msg: format!("unexpected character {other:?}") })
                    }
                }
            }
            rows.push(row);
        }
        QMatrix::from_rows(&rows)
    }
}

/// Raw size of the search space, `(2^k - 1)^m`, saturating.
pub fn search_space_size(m: usize, k: usize) -> u128 {
    let base = (1u128 << k) - 1;
    (0..m).fold(1u128, |acc, _| acc.saturating_mul(base))
}

/// One canonical representative per equivalence class of zero-row-free
/// m x k binary matrices.
pub fn enumerate_candidates(m: usize, k: usize, budget: u128) -> Result<Candidates> {
    if m == 0 || m > ENUM_MAX_ITEMS {
        return Err(Error::TooLarge { what: "enumeration", m, cap: ENUM_MAX_ITEMS });
    }
    if k == 0 || k > ENUM_MAX_ATTRIBUTES {
        return Err(Error::InvalidParams(format!("enumeration requires 1 <= k <= {ENUM_MAX_ATTRIBUTES}, got {k}")));
    }
    let needed = search_space_size(m, k);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let full = (1u32 << m) - 1;
    Ok(Candidates { m, full, cols: Some(vec![full; k]) })
}

/// Iterator over nonincreasing column tuples whose union covers every row.
#[derive(Debug, Clone)]
pub struct Candidates {
    m: usize,
    full: u32,
    cols: Option<Vec<u32>>,
}

impl Candidates {
    fn advance(cols: &mut [u32]) -> bool {
        match cols.iter().rposition(|&c| c > 0) {
            None => false,
            Some(p) => {
                cols[p] -= 1;
                let v = cols[p];
                for c in &mut cols[p + 1..] {
                    *c = v;
                }
                true
            }
        }
    }
}

impl Iterator for Candidates {
    type Item = QMatrix;

    fn next(&mut self) -> Option<QMatrix> {
        loop {
            let cols = self.cols.as_mut()?;
            let current = cols.clone();
            if !Self::advance(cols) {
                self.cols = None;
            }
            if current.iter().fold(0, |acc, &c| acc | c) == self.full {
                return Some(QMatrix::from_columns(self.m, &current).expect("covering columns"));
            }
        }
    }
}
