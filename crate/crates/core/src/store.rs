//! Embedding tables and the score functions built on them.
//!
//! Tables keep `f32` values in `AtomicU32` cells so that any number of
//! trainer threads can read and write the same rows without locks. Loads and
//! stores are `Relaxed`: a reader sees either the old or the new value of an
//! element, never a torn one, and nothing else is promised. Callers that need
//! exact results run single-threaded.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("{0} vocabulary is empty")]
    EmptyVocabulary(&'static str),
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("tied item-user scoring needs user_dim == dim (got {user_dim} vs {dim})")]
    TiedDimMismatch { dim: usize, user_dim: usize },
    #[error("table {table} has shape {rows}x{dim}, expected {expected_rows}x{expected_dim}")]
    Shape {
        table: &'static str,
        rows: usize,
        dim: usize,
        expected_rows: usize,
        expected_dim: usize,
    },
    #[error("context is empty")]
    EmptyContext,
}

/// Row-major `rows x dim` matrix of `f32` with lock-free element access.
pub struct Matrix {
    rows: usize,
    dim: usize,
    data: Box<[AtomicU32]>,
}

impl Matrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self::from_fn(rows, dim, |_, _| 0.0)
    }

    pub fn from_fn(rows: usize, dim: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * dim);
        for r in 0..rows {
            for c in 0..dim {
                data.push(AtomicU32::new(f(r, c).to_bits()));
            }
        }
        Self {
            rows,
            dim,
            data: data.into_boxed_slice(),
        }
    }

    /// Builds a matrix from row-major values.
    pub fn from_vec(rows: usize, dim: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), rows * dim, "value count does not match shape");
        Self {
            rows,
            dim,
            data: values.into_iter().map(|v| AtomicU32::new(v.to_bits())).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        f32::from_bits(self.data[row * self.dim + col].load(Ordering::Relaxed))
    }

    #[inline]
    pub fn set(&self, row: usize, col: usize, v: f32) {
        self.data[row * self.dim + col].store(v.to_bits(), Ordering::Relaxed);
    }

    /// Unsynchronized read-modify-write; concurrent adds to the same element
    /// may lose one of the updates.
    #[inline]
    pub fn add(&self, row: usize, col: usize, delta: f32) {
        let cell = &self.data[row * self.dim + col];
        let v = f32::from_bits(cell.load(Ordering::Relaxed)) + delta;
        cell.store(v.to_bits(), Ordering::Relaxed);
    }

    #[inline]
    fn row_cells(&self, row: usize) -> &[AtomicU32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Copies row `row` into `out` widened to `f64`.
    #[inline]
    pub fn read_row(&self, row: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(self.row_cells(row)) {
            *o = f32::from_bits(c.load(Ordering::Relaxed)) as f64;
        }
    }

    pub fn row_vec(&self, row: usize) -> Vec<f32> {
        self.row_cells(row)
            .iter()
            .map(|c| f32::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }

    pub fn write_row(&self, row: usize, values: &[f32]) {
        assert_eq!(values.len(), self.dim);
        for (c, v) in self.row_cells(row).iter().zip(values) {
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    /// `row += scale * delta`, racy per element.
    #[inline]
    pub fn add_scaled(&self, row: usize, scale: f64, delta: &[f64]) {
        for (c, d) in self.row_cells(row).iter().zip(delta) {
            let v = f32::from_bits(c.load(Ordering::Relaxed)) + (scale * d) as f32;
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    /// Dot product of row `row` with an `f64` vector.
    #[inline]
    pub fn dot_row(&self, row: usize, v: &[f64]) -> f64 {
        self.row_cells(row)
            .iter()
            .zip(v)
            .map(|(c, x)| f32::from_bits(c.load(Ordering::Relaxed)) as f64 * x)
            .sum()
    }

    /// Dot product between a row of `self` and a row of `other`, accumulated in `f64`.
    #[inline]
    pub fn dot_rows(&self, row: usize, other: &Matrix, other_row: usize) -> f64 {
        self.row_cells(row)
            .iter()
            .zip(other.row_cells(other_row))
            .map(|(a, b)| {
                f32::from_bits(a.load(Ordering::Relaxed)) as f64
                    * f32::from_bits(b.load(Ordering::Relaxed)) as f64
            })
            .sum()
    }

    /// All values in row-major order.
    pub fn to_vec(&self) -> Vec<f32> {
        self.data
            .iter()
            .map(|c| f32::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }

    pub fn row_norm(&self, row: usize) -> f64 {
        libm::sqrt(self.dot_rows(row, self, row))
    }

    pub fn all_finite(&self) -> bool {
        self.data
            .iter()
            .all(|c| f32::from_bits(c.load(Ordering::Relaxed)).is_finite())
    }

    /// Returns a copy with `extra` appended as new rows.
    pub fn with_appended_rows(&self, extra: &[Vec<f32>]) -> Matrix {
        let mut values = self.to_vec();
        for r in extra {
            assert_eq!(r.len(), self.dim);
            values.extend_from_slice(r);
        }
        Matrix::from_vec(self.rows + extra.len(), self.dim, values)
    }
}

impl Clone for Matrix {
    fn clone(&self) -> Self {
        Matrix::from_vec(self.rows, self.dim, self.to_vec())
    }
}

/// Bitwise equality, so `NaN` payloads and signed zeros count.
impl PartialEq for Matrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.dim == other.dim
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.load(Ordering::Relaxed) == b.load(Ordering::Relaxed))
    }
}

impl core::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.dim)
    }
}

/// Which table scores the user-item preference term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ItemUserTable {
    /// `s(i, u) = <item_out[i], user[u]>`
    #[default]
    Tied,
    /// `s(i, u) = <item_user[i], user[u]>` with a dedicated table.
    Separate,
}

/// Table sizes for [`EmbeddingStore::init`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreShape {
    pub items: usize,
    pub users: usize,
    pub item_tokens: usize,
    pub user_tokens: usize,
    pub dim: usize,
    pub user_dim: usize,
    pub item_user: ItemUserTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    pub item_in: Matrix,
    pub item_out: Matrix,
    pub user: Matrix,
    pub item_user: Option<Matrix>,
    pub word: Matrix,
    pub user_feat: Matrix,
}

impl EmbeddingStore {
    /// Random initialization, uniform on `[-0.5/dim, 0.5/dim]` per table
    /// (user-side tables use `user_dim`).
    pub fn init(shape: StoreShape, seed: u64) -> Result<Self, StoreError> {
        if shape.items == 0 {
            return Err(StoreError::EmptyVocabulary("item"));
        }
        if shape.users == 0 {
            return Err(StoreError::EmptyVocabulary("user"));
        }
        if shape.dim == 0 || shape.user_dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if shape.item_user == ItemUserTable::Tied && shape.dim != shape.user_dim {
            return Err(StoreError::TiedDimMismatch {
                dim: shape.dim,
                user_dim: shape.user_dim,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut table = |rows: usize, dim: usize| {
            let half = 0.5 / dim as f32;
            Matrix::from_fn(rows, dim, |_, _| rng.gen_range(-half..=half))
        };
        let item_in = table(shape.items, shape.dim);
        let item_out = table(shape.items, shape.dim);
        let user = table(shape.users, shape.user_dim);
        let item_user = match shape.item_user {
            ItemUserTable::Tied => None,
            ItemUserTable::Separate => Some(table(shape.items, shape.user_dim)),
        };
        let word = table(shape.item_tokens, shape.dim);
        let user_feat = table(shape.user_tokens, shape.user_dim);
        Ok(Self {
            item_in,
            item_out,
            user,
            item_user,
            word,
            user_feat,
        })
    }

    /// Assembles a store from loaded tables, checking shapes.
    pub fn from_tables(
        item_in: Matrix,
        item_out: Matrix,
        user: Matrix,
        item_user: Option<Matrix>,
        word: Matrix,
        user_feat: Matrix,
    ) -> Result<Self, StoreError> {
        let dim = item_in.dim();
        let user_dim = user.dim();
        let items = item_in.rows();
        let check = |table: &'static str, m: &Matrix, rows: Option<usize>, d: usize| {
            let expected_rows = rows.unwrap_or(m.rows());
            if m.rows() != expected_rows || m.dim() != d {
                Err(StoreError::Shape {
                    table,
                    rows: m.rows(),
                    dim: m.dim(),
                    expected_rows,
                    expected_dim: d,
                })
            } else {
                Ok(())
            }
        };
        check("items_out", &item_out, Some(items), dim)?;
        check("word", &word, None, dim)?;
        check("user_feat", &user_feat, None, user_dim)?;
        match &item_user {
            Some(m) => check("item_users", m, Some(items), user_dim)?,
            None if dim != user_dim => return Err(StoreError::TiedDimMismatch { dim, user_dim }),
            None => {}
        }
        Ok(Self {
            item_in,
            item_out,
            user,
            item_user,
            word,
            user_feat,
        })
    }

    pub fn dim(&self) -> usize {
        self.item_in.dim()
    }

    pub fn user_dim(&self) -> usize {
        self.user.dim()
    }

    pub fn n_items(&self) -> usize {
        self.item_in.rows()
    }

    pub fn n_users(&self) -> usize {
        self.user.rows()
    }

    pub fn item_user_mode(&self) -> ItemUserTable {
        if self.item_user.is_some() {
            ItemUserTable::Separate
        } else {
            ItemUserTable::Tied
        }
    }

    /// Table whose row `i` pairs with user vectors.
    pub fn item_user_table(&self) -> &Matrix {
        self.item_user.as_ref().unwrap_or(&self.item_out)
    }

    /// `s(j, i) = <item_out[j], item_in[i]>`: how strongly `j` complements `i`.
    pub fn score_pair(&self, j: u32, i: u32) -> f64 {
        self.item_out.dot_rows(j as usize, &self.item_in, i as usize)
    }

    /// Mean of the item-in rows of `ctx`, summed left to right.
    pub fn pooled_context(&self, ctx: &[u32]) -> Result<Vec<f64>, StoreError> {
        if ctx.is_empty() {
            return Err(StoreError::EmptyContext);
        }
        let dim = self.dim();
        let mut acc = alloc::vec![0.0; dim];
        let mut row = alloc::vec![0.0; dim];
        for &i in ctx {
            self.item_in.read_row(i as usize, &mut row);
            for (a, r) in acc.iter_mut().zip(&row) {
                *a += r;
            }
        }
        let k = ctx.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(acc)
    }

    /// Mean-pooled sequence score `<item_out[j], mean(item_in[ctx])>`.
    pub fn score_seq(&self, j: u32, ctx: &[u32]) -> Result<f64, StoreError> {
        let pooled = self.pooled_context(ctx)?;
        Ok(self.item_out.dot_row(j as usize, &pooled))
    }

    /// User preference for item `j`.
    pub fn score_user(&self, j: u32, u: u32) -> f64 {
        self.item_user_table()
            .dot_rows(j as usize, &self.user, u as usize)
    }

    /// `s(w, i) = <word[w], item_in[i]>`.
    pub fn score_token(&self, w: u32, i: u32) -> f64 {
        self.word.dot_rows(w as usize, &self.item_in, i as usize)
    }

    /// `s(x, u) = <user_feat[x], user[u]>`.
    pub fn score_ufeat(&self, x: u32, u: u32) -> f64 {
        self.user_feat.dot_rows(x as usize, &self.user, u as usize)
    }

    pub fn all_finite(&self) -> bool {
        self.tables().all(|(_, m)| m.all_finite())
    }

    /// Named tables in snapshot order.
    pub fn tables(&self) -> impl Iterator<Item = (&'static str, &Matrix)> {
        [
            Some(("items_in", &self.item_in)),
            Some(("items_out", &self.item_out)),
            Some(("users", &self.user)),
            self.item_user.as_ref().map(|m| ("item_users", m)),
            Some(("item_tokens", &self.word)),
            Some(("user_tokens", &self.user_feat)),
        ]
        .into_iter()
        .flatten()
    }

    /// Percentile (0..=100) of item-in row norms, nearest-rank.
    pub fn item_in_norm_percentile(&self, pct: f64) -> f64 {
        let mut norms: Vec<f64> = (0..self.n_items()).map(|i| self.item_in.row_norm(i)).collect();
        norms.sort_by(|a, b| a.total_cmp(b));
        let rank = libm::ceil(pct / 100.0 * norms.len() as f64) as usize;
        norms[rank.clamp(1, norms.len()) - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn shape(items: usize, users: usize, dim: usize) -> StoreShape {
        StoreShape {
            items,
            users,
            item_tokens: 2,
            user_tokens: 2,
            dim,
            user_dim: dim,
            item_user: ItemUserTable::Tied,
        }
    }

    fn zero_store(items: usize, dim: usize, mode: ItemUserTable) -> EmbeddingStore {
        let s = StoreShape {
            item_user: mode,
            ..shape(items, 2, dim)
        };
        let st = EmbeddingStore::init(s, 0).unwrap();
        for (_, m) in st.tables() {
            for r in 0..m.rows() {
                m.write_row(r, &vec![0.0; m.dim()]);
            }
        }
        st
    }

    #[test]
    fn init_is_deterministic() {
        let a = EmbeddingStore::init(shape(5, 3, 4), 7).unwrap();
        let b = EmbeddingStore::init(shape(5, 3, 4), 7).unwrap();
        let c = EmbeddingStore::init(shape(5, 3, 4), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_range() {
        let st = EmbeddingStore::init(shape(50, 20, 32), 1).unwrap();
        for (_, m) in st.tables() {
            assert!(m.to_vec().iter().all(|v| v.abs() <= 0.015625));
        }
    }

    #[test]
    fn init_mean_is_centred() {
        // 10^6 draws from U[-a, a]: sd = a / sqrt(3)
        let st = EmbeddingStore::init(shape(15_625, 1, 32), 3).unwrap();
        let vals = st.item_in.to_vec();
        assert_eq!(vals.len(), 500_000);
        let mut all = vals;
        all.extend(st.item_out.to_vec());
        let n = all.len() as f64;
        let mean = all.iter().map(|&v| v as f64).sum::<f64>() / n;
        let sd = (0.5 / 32.0) / 3f64.sqrt();
        assert!(mean.abs() <= 3.0 * sd / n.sqrt(), "mean {mean}");
    }

    #[test]
    fn init_errors() {
        assert_eq!(
            EmbeddingStore::init(shape(0, 3, 4), 0),
            Err(StoreError::EmptyVocabulary("item"))
        );
        assert_eq!(
            EmbeddingStore::init(shape(2, 0, 4), 0),
            Err(StoreError::EmptyVocabulary("user"))
        );
        let s = StoreShape {
            user_dim: 3,
            ..shape(2, 2, 4)
        };
        assert!(matches!(
            EmbeddingStore::init(s, 0),
            Err(StoreError::TiedDimMismatch { .. })
        ));
    }

    #[test]
    fn score_pair_hand_value() {
        let st = zero_store(2, 2, ItemUserTable::Tied);
        st.item_out.write_row(0, &[1.0, 2.0]);
        st.item_in.write_row(1, &[3.0, -1.0]);
        assert_eq!(st.score_pair(0, 1), 1.0);
        assert_eq!(st.score_pair(0, 0), 0.0);
    }

    #[test]
    fn score_pair_asymmetry() {
        let st = zero_store(2, 2, ItemUserTable::Tied);
        // j = 0, i = 1
        st.item_out.write_row(0, &[1.0, 0.0]);
        st.item_in.write_row(0, &[0.0, 1.0]);
        st.item_out.write_row(1, &[1.0, 0.0]);
        st.item_in.write_row(1, &[1.0, 0.0]);
        assert_eq!(st.score_pair(0, 1), 1.0);
        assert_eq!(st.score_pair(1, 0), 0.0);
    }

    #[test]
    fn score_pair_opposite_signs_exist() {
        let st = zero_store(2, 2, ItemUserTable::Tied);
        st.item_out.write_row(0, &[1.0, 0.0]);
        st.item_in.write_row(1, &[1.0, 0.0]);
        st.item_out.write_row(1, &[0.0, -1.0]);
        st.item_in.write_row(0, &[0.0, 1.0]);
        assert!(st.score_pair(0, 1) > 0.0);
        assert!(st.score_pair(1, 0) < 0.0);
    }

    #[test]
    fn score_seq_hand_value() {
        let st = zero_store(3, 2, ItemUserTable::Tied);
        st.item_out.write_row(0, &[1.0, 2.0]);
        st.item_in.write_row(1, &[3.0, -1.0]);
        st.item_in.write_row(2, &[1.0, 1.0]);
        assert_eq!(st.pooled_context(&[1, 2]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(st.score_seq(0, &[1, 2]).unwrap(), 2.0);
        assert_eq!(st.score_seq(0, &[1]).unwrap(), st.score_pair(0, 1));
        assert_eq!(st.score_seq(0, &[1, 1]).unwrap(), st.score_pair(0, 1));
        assert_eq!(st.score_seq(0, &[]), Err(StoreError::EmptyContext));
    }

    #[test]
    fn score_user_tied_and_separate() {
        let st = zero_store(2, 2, ItemUserTable::Tied);
        st.item_out.write_row(0, &[1.0, 2.0]);
        st.user.write_row(0, &[0.0, 1.0]);
        assert_eq!(st.score_user(0, 0), 2.0);
        assert_eq!(st.score_user(0, 1), 0.0);

        let st = zero_store(2, 2, ItemUserTable::Separate);
        st.item_out.write_row(0, &[1.0, 2.0]);
        st.item_user.as_ref().unwrap().write_row(0, &[5.0, 0.0]);
        st.user.write_row(0, &[0.0, 1.0]);
        assert_eq!(st.score_user(0, 0), 0.0);
    }

    #[test]
    fn tied_user_score_shares_item_out_row() {
        let st = EmbeddingStore::init(shape(3, 2, 4), 5).unwrap();
        let before = (st.score_user(1, 0), st.score_pair(1, 2));
        st.item_out.add(1, 0, 0.25);
        assert_ne!(st.score_user(1, 0), before.0);
        assert_ne!(st.score_pair(1, 2), before.1);
    }

    #[test]
    fn token_scores() {
        let st = zero_store(2, 2, ItemUserTable::Tied);
        st.word.write_row(0, &[1.0, 0.0]);
        st.item_in.write_row(0, &[1.0, 0.0]);
        assert_eq!(st.score_token(0, 0), 1.0);
        st.word.write_row(1, &[0.0, 1.0]);
        assert_eq!(st.score_token(1, 0), 0.0);
        st.word.write_row(1, &[2.0, 1.0]);
        st.item_in.write_row(1, &[1.0, -1.0]);
        assert_eq!(st.score_token(1, 1), 1.0);
        st.user_feat.write_row(0, &[2.0, 1.0]);
        st.user.write_row(1, &[1.0, -1.0]);
        assert_eq!(st.score_ufeat(0, 1), 1.0);
    }

    #[test]
    fn norm_percentile() {
        let st = zero_store(4, 1, ItemUserTable::Tied);
        for (i, v) in [1.0f32, 4.0, 2.0, 3.0].iter().enumerate() {
            st.item_in.write_row(i, &[*v]);
        }
        assert_eq!(st.item_in_norm_percentile(95.0), 4.0);
        assert_eq!(st.item_in_norm_percentile(50.0), 2.0);
    }

    #[test]
    fn from_tables_checks_shapes() {
        let st = EmbeddingStore::init(shape(3, 2, 4), 5).unwrap();
        let bad = EmbeddingStore::from_tables(
            st.item_in.clone(),
            Matrix::zeros(2, 4),
            st.user.clone(),
            None,
            st.word.clone(),
            st.user_feat.clone(),
        );
        assert!(matches!(bad, Err(StoreError::Shape { table: "items_out", .. })));
    }
}
