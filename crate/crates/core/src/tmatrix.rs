//! T-matrix construction.
//!
//! Rows are labelled by item combinations, columns by nonzero attribute
//! profiles. Four variants share one layout:
//!
//! * plain: entry `(S, A)` is 1 iff profile `A` can answer every item in `S`;
//! * slip: each row of the plain matrix scaled by `prod_{i in S} c_i`;
//! * slip-guess: row `S` is the elementwise product over `i in S` of
//!   `g_i * 1 + (c_i - g_i) * B(i)`;
//! * augmented: the slip-guess matrix with a leading guessing column and a
//!   trailing all-ones row.
//!
//! The [`DMatrix`] is the `g`-only row transform that eliminates guessing
//! from the augmented matrix.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra as na;

use crate::error::{Error, Result};
use crate::qmatrix::{card_lex_cmp, AttributeProfile, ItemCombo, QMatrix, MAX_ITEMS};
use crate::scalar::Scalar;

/// Largest item count for which saturated orders are built.
pub const SATURATED_MAX_ITEMS: usize = 14;

/// Ordered row labels of a T-matrix.
#[derive(Clone, Debug)]
pub struct ComboOrder {
    m: usize,
    combos: Vec<ItemCombo>,
    index: HashMap<ItemCombo, usize>,
}

impl PartialEq for ComboOrder {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.combos == other.combos
    }
}

impl ComboOrder {
    /// Caller-ordered combos over `m` items. Duplicates are rejected.
    pub fn new(m: usize, combos: Vec<ItemCombo>) -> Result<Self> {
        if m == 0 || m > MAX_ITEMS {
            return Err(Error::InvalidParams(format!("item count must be in 1..={MAX_ITEMS}, got {m}")));
        }
        let mut index = HashMap::with_capacity(combos.len());
        for (pos, &c) in combos.iter().enumerate() {
            if c.bits() >> m != 0 {
                return Err(Error::ItemOutOfRange { item: 32 - c.bits().leading_zeros() as usize, m });
            }
            if index.insert(c, pos).is_some() {
                return Err(Error::InvalidParams(format!("duplicate combo {c}")));
            }
        }
        Ok(ComboOrder { m, combos, index })
    }

    /// All `2^m - 1` nonempty combos, by cardinality then lexicographic order.
    pub fn saturated(m: usize) -> Result<Self> {
        if m == 0 || m > SATURATED_MAX_ITEMS {
            return Err(Error::TooLarge { what: "saturated order", m, cap: SATURATED_MAX_ITEMS });
        }
        let mut bits: Vec<u32> = (1u32..1 << m).collect();
        bits.sort_by(|&a, &b| card_lex_cmp(a, b));
        let combos = bits.into_iter().map(|b| ItemCombo::new(b).expect("nonzero")).collect();
        ComboOrder::new(m, combos)
    }

    /// The `m` single items.
    pub fn singles(m: usize) -> Result<Self> {
        ComboOrder::new(m, (0..m).map(ItemCombo::single).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn combos(&self) -> &[ItemCombo] {
        &self.combos
    }

    pub fn position(&self, combo: ItemCombo) -> Option<usize> {
        self.index.get(&combo).copied()
    }

    pub fn lookup(&self, combo: ItemCombo) -> Result<usize> {
        self.position(combo).ok_or_else(|| Error::ComboNotFound(combo.label()))
    }

    pub fn is_saturated(&self) -> bool {
        self.combos.len() == (1usize << self.m) - 1
    }
}

/// Per-item response probabilities: `c_i` when capable, `g_i` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct DinaParams<T> {
    pub c: Vec<T>,
    pub g: Vec<T>,
}

impl<T: Scalar> DinaParams<T> {
    pub fn new(c: Vec<T>, g: Vec<T>) -> Result<Self> {
        if c.len() != g.len() {
            return Err(Error::DimensionMismatch(format!("c has {} entries, g has {}", c.len(), g.len())));
        }
        Ok(DinaParams { c, g })
    }

    /// No slipping, no guessing.
    pub fn noiseless(m: usize) -> Self {
        DinaParams { c: vec![T::one(); m], g: vec![T::zero(); m] }
    }

    /// Same `c` and `g` for every item.
    pub fn uniform(m: usize, c: T, g: T) -> Self {
        DinaParams { c: vec![c; m], g: vec![g; m] }
    }

    pub fn m(&self) -> usize {
        self.c.len()
    }

    /// `c - g`, elementwise.
    pub fn c_minus_g(&self) -> Vec<T> {
        self.c.iter().zip(&self.g).map(|(&c, &g)| c - g).collect()
    }

    /// Entries lie in `[0, 1]`.
    pub fn check_unit_interval(&self) -> Result<()> {
        let ok = |v: &T| *v >= T::zero() && *v <= T::one();
        if let Some(i) = self.c.iter().position(|v| !ok(v)) {
            return Err(Error::InvalidParams(format!("c[{}] = {} is outside [0, 1]", i + 1, self.c[i])));
        }
        if let Some(i) = self.g.iter().position(|v| !ok(v)) {
            return Err(Error::InvalidParams(format!("g[{}] = {} is outside [0, 1]", i + 1, self.g[i])));
        }
        Ok(())
    }

    /// `c_i != g_i` for every item.
    pub fn check_distinct(&self) -> Result<()> {
        match self.c.iter().zip(&self.g).position(|(c, g)| c == g) {
            Some(i) => Err(Error::InvalidParams(format!(
                "c_i must differ from g_i for every item; item {} has c = g = {}",
                i + 1,
                self.c[i]
            ))),
            None => Ok(()),
        }
    }

    /// Restriction to the listed items (0-based).
    pub fn select(&self, items: &[usize]) -> DinaParams<T> {
        DinaParams {
            c: items.iter().map(|&i| self.c[i]).collect(),
            g: items.iter().map(|&i| self.g[i]).collect(),
        }
    }

    fn check_len(&self, m: usize) -> Result<()> {
        if self.m() != m {
            return Err(Error::DimensionMismatch(format!("parameters for {} items, matrix has {m}", self.m())));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Slip,
    SlipGuess,
    Augmented,
}

/// A labelled T-matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct TMatrix<T: Scalar> {
    pub rows: ComboOrder,
    /// Nonzero profiles labelling the non-guess columns.
    pub cols: Vec<AttributeProfile>,
    pub k: usize,
    pub entries: na::DMatrix<T>,
    pub variant: Variant,
}

impl<T: Scalar> TMatrix<T> {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.rows.combos().iter().map(|c| c.label()).collect();
        if self.variant == Variant::Augmented {
            labels.push("ONES".into());
        }
        labels
    }

    pub fn col_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.cols.len() + 1);
        if self.variant == Variant::Augmented {
            labels.push("GUESS".into());
        }
        labels.extend(self.cols.iter().map(|p| p.label(self.k)));
        labels
    }

    /// Tab-separated dump: header of profile labels, first column of combo labels.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("combo");
        for label in self.col_labels() {
            out.push('\t');
            out.push_str(&label);
        }
        out.push('\n');
        for (r, label) in self.row_labels().into_iter().enumerate() {
            out.push_str(&label);
            for c in 0..self.ncols() {
                let _ = write!(out, "\t{}", self.entries[(r, c)]);
            }
            out.push('\n');
        }
        out
    }
}

fn check_order(q: &QMatrix, order: &ComboOrder) -> Result<()> {
    if order.m() != q.m() {
        return Err(Error::DimensionMismatch(format!("combo order over {} items, Q has {}", order.m(), q.m())));
    }
    Ok(())
}

/// Builds a matrix whose row for combo `S` is the elementwise product of
/// `single(i)` over `i in S`, in ascending item order.
fn product_rows<T: Scalar>(
    q: &QMatrix,
    order: &ComboOrder,
    variant: Variant,
    single: impl Fn(usize, bool) -> T,
) -> TMatrix<T> {
    let cols = AttributeProfile::nonzero_profiles(q.k());
    let mut entries = na::DMatrix::from_element(order.len(), cols.len(), T::zero());
    for (r, combo) in order.combos().iter().enumerate() {
        for (c, &profile) in cols.iter().enumerate() {
            let mut items = combo.items();
            let first = items.next().expect("nonempty combo");
            let mut v = single(first, profile.dominates(q.row(first)));
            for i in items {
                v *= single(i, profile.dominates(q.row(i)));
            }
            entries[(r, c)] = v;
        }
    }
    TMatrix { rows: order.clone(), cols, k: q.k(), entries, variant }
}

/// Plain 0/1 T-matrix.
pub fn build_t<T: Scalar>(q: &QMatrix, order: &ComboOrder) -> Result<TMatrix<T>> {
    check_order(q, order)?;
    Ok(product_rows(q, order, Variant::Plain, |_, capable| if capable { T::one() } else { T::zero() }))
}

fn combo_product<T: Scalar>(values: &[T], combo: ItemCombo) -> T {
    combo.items().fold(T::one(), |acc, i| acc * values[i])
}

/// Slipping T-matrix by diagonal row scaling of the plain matrix.
pub fn build_tc<T: Scalar>(q: &QMatrix, c: &[T], order: &ComboOrder) -> Result<TMatrix<T>> {
    if c.len() != q.m() {
        return Err(Error::DimensionMismatch(format!("c has {} entries, Q has {} items", c.len(), q.m())));
    }
    let mut t = build_t::<T>(q, order)?;
    for (r, &combo) in order.combos().iter().enumerate() {
        let scale = combo_product(c, combo);
        for v in t.entries.row_mut(r).iter_mut() {
            *v = scale * *v;
        }
    }
    t.variant = Variant::Slip;
    Ok(t)
}

/// Slipping T-matrix as elementwise products of the scaled single-item rows.
pub fn build_tc_by_products<T: Scalar>(q: &QMatrix, c: &[T], order: &ComboOrder) -> Result<TMatrix<T>> {
    check_order(q, order)?;
    if c.len() != q.m() {
        return Err(Error::DimensionMismatch(format!("c has {} entries, Q has {} items", c.len(), q.m())));
    }
    Ok(product_rows(q, order, Variant::Slip, |i, capable| if capable { c[i] } else { T::zero() }))
}

/// Slipping-and-guessing T-matrix.
pub fn build_tcg<T: Scalar>(q: &QMatrix, params: &DinaParams<T>, order: &ComboOrder) -> Result<TMatrix<T>> {
    check_order(q, order)?;
    params.check_len(q.m())?;
    let DinaParams { c, g } = params;
    Ok(product_rows(q, order, Variant::SlipGuess, |i, capable| {
        let b = if capable { T::one() } else { T::zero() };
        g[i] + (c[i] - g[i]) * b
    }))
}

/// Probability of answering every item of each combo by guessing alone.
pub fn guess_vector<T: Scalar>(g: &[T], order: &ComboOrder) -> Result<na::DVector<T>> {
    if g.len() != order.m() {
        return Err(Error::DimensionMismatch(format!("g has {} entries, order has {} items", g.len(), order.m())));
    }
    Ok(na::DVector::from_iterator(
        order.len(),
        order.combos().iter().map(|&s| combo_product(g, s)),
    ))
}

/// `[[g, T_cg], [1, 1...1]]`, of size `(|order| + 1) x 2^k`.
pub fn build_t_tilde<T: Scalar>(q: &QMatrix, params: &DinaParams<T>, order: &ComboOrder) -> Result<TMatrix<T>> {
    let tcg = build_tcg(q, params, order)?;
    let gv = guess_vector(&params.g, order)?;
    let (rows, cols) = (tcg.nrows(), tcg.ncols());
    let mut entries = na::DMatrix::from_element(rows + 1, cols + 1, T::one());
    entries.view_mut((0, 0), (rows, 1)).copy_from(&gv);
    entries.view_mut((0, 1), (rows, cols)).copy_from(&tcg.entries);
    Ok(TMatrix { entries, variant: Variant::Augmented, ..tcg })
}

/// Row transform sending the augmented matrix to `(0 | T_{c-g})`.
///
/// Columns follow the combo order, then one column for the all-ones row.
#[derive(Clone, Debug, PartialEq)]
pub struct DMatrix<T: Scalar> {
    pub order: ComboOrder,
    pub entries: na::DMatrix<T>,
}

/// Nonzero entries of the D row for `combo`: `(U, coefficient)` for every
/// `U` subset of `combo`, with `None` standing for the empty set, i.e. the
/// all-ones row. The coefficient is `(-1)^{|S \ U|} prod_{i in S \ U} g_i`.
pub fn d_row_terms<T: Scalar>(g: &[T], combo: ItemCombo) -> Vec<(Option<ItemCombo>, T)> {
    let s = combo.bits();
    let mut terms = Vec::with_capacity(1 << s.count_ones());
    let mut u = s;
    loop {
        let rest = s & !u;
        let mut coeff = T::one();
        for i in (ItemCombo::new(rest).ok()).into_iter().flat_map(ItemCombo::items) {
            coeff *= g[i];
        }
        if rest.count_ones() % 2 == 1 {
            coeff = T::zero() - coeff;
        }
        terms.push((ItemCombo::new(u).ok(), coeff));
        if u == 0 {
            break;
        }
        u = (u - 1) & s;
    }
    terms
}

/// Dense D-matrix over a saturated order.
pub fn build_d<T: Scalar>(g: &[T], order: &ComboOrder) -> Result<DMatrix<T>> {
    if !order.is_saturated() {
        return Err(Error::NonSaturatedOrder);
    }
    if g.len() != order.m() {
        return Err(Error::DimensionMismatch(format!("g has {} entries, order has {} items", g.len(), order.m())));
    }
    let n = order.len();
    let mut entries = na::DMatrix::from_element(n, n + 1, T::zero());
    for (r, &combo) in order.combos().iter().enumerate() {
        for (u, coeff) in d_row_terms(g, combo) {
            let col = match u {
                Some(u) => order.lookup(u)?,
                None => n,
            };
            entries[(r, col)] = coeff;
        }
    }
    Ok(DMatrix { order: order.clone(), entries })
}

/// Rows of `d` labelled by `cover` and by `cover` plus `item` (0-based).
pub fn moment_rows<T: Scalar>(d: &DMatrix<T>, cover: ItemCombo, item: usize) -> Result<(Vec<T>, Vec<T>)> {
    if item >= d.order.m() {
        return Err(Error::ItemOutOfRange { item: item + 1, m: d.order.m() });
    }
    if cover.contains(item) {
        return Err(Error::InvalidParams(format!("item {} is inside its cover {cover}", item + 1)));
    }
    let a = d.order.lookup(cover)?;
    let a_star = d.order.lookup(cover.with(item))?;
    Ok((
        d.entries.row(a).iter().copied().collect(),
        d.entries.row(a_star).iter().copied().collect(),
    ))
}

/// Numeric structure checks on T-matrices.
pub mod properties {
    use super::*;

    /// Reorders the rows of a complete `q` so that item `j` is the unit row
    /// `e_j` for `j < k`; the remaining rows keep their relative order.
    pub fn arrange_complete(q: &QMatrix) -> Option<QMatrix> {
        let mut used = vec![false; q.m()];
        let mut order = Vec::with_capacity(q.m());
        for j in 0..q.k() {
            let i = (0..q.m()).find(|&i| !used[i] && q.row(i) == 1 << j)?;
            used[i] = true;
            order.push(i);
        }
        order.extend((0..q.m()).filter(|&i| !used[i]));
        q.select_rows(&order).ok()
    }

    /// Rows of `t` labelled by combos of the first `k` items, in `t`'s order.
    /// For a saturated order these are `2^k - 1` rows.
    pub fn leading_block<T: Scalar>(t: &TMatrix<T>) -> na::DMatrix<T> {
        let mask = (1u32 << t.k) - 1;
        let rows: Vec<usize> = t
            .rows
            .combos()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.bits() & !mask == 0)
            .map(|(r, _)| r)
            .collect();
        t.entries.select_rows(rows.iter())
    }

    /// Checks the upper block-triangular layout with identity diagonal
    /// blocks, blocks being combo/profile cardinalities. Expects a plain
    /// leading block whose row combos correspond one-to-one with profiles.
    pub fn is_block_upper_unit_triangular<T: Scalar>(t: &TMatrix<T>) -> bool {
        let mask = (1u32 << t.k) - 1;
        let row_combos: Vec<ItemCombo> = t.rows.combos().iter().copied().filter(|c| c.bits() & !mask == 0).collect();
        let block = leading_block(t);
        if block.nrows() != block.ncols() {
            return false;
        }
        for (r, combo) in row_combos.iter().enumerate() {
            for (c, profile) in t.cols.iter().enumerate() {
                let v = block[(r, c)];
                let (rc, pc) = (combo.cardinality(), profile.cardinality());
                let expected_zero = pc < rc || (pc == rc && combo.bits() != u32::from(profile.bits()));
                let expected_one = pc == rc && combo.bits() == u32::from(profile.bits());
                if (expected_zero && v != T::zero()) || (expected_one && v != T::one()) {
                    return false;
                }
            }
        }
        true
    }

    pub fn to_f64<T: Scalar + num_traits::ToPrimitive>(m: &na::DMatrix<T>) -> na::DMatrix<f64> {
        m.map(|v| v.to_f64().unwrap_or(f64::NAN))
    }

    /// Smallest singular value (0 for an empty matrix).
    pub fn min_singular_value(m: &na::DMatrix<f64>) -> f64 {
        if m.is_empty() || m.nrows() < m.ncols() {
            return 0.0;
        }
        let sv = m.clone().svd(false, false).singular_values;
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
