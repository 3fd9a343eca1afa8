//! Core data types: aspect subsets, aspect block layout, and the dataset of
//! AI signals, human signals and targets.
//!
//! Every aspect `j` owns a contiguous column range in the AI matrix `A` and
//! another in the human matrix `H`. The ranges tile both matrices in aspect
//! order, so the layout is fully described by the two width vectors.

mod features;
mod io;

pub use features::{build_features, build_feature_matrix, fit_imputer, FeatureVector, Imputer};
pub use io::{load_dataset, write_dataset, DatasetSchema};

use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of aspect indices, kept sorted and free of duplicates.
///
/// The derived ordering is lexicographic on the sorted index list, which is
/// the tie-break order used by every selection rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Subset(Vec<usize>);

impl Subset {
    /// Builds a subset of `0..aspects`. Input order does not matter; duplicates
    /// and out-of-range indices are rejected.
    pub fn new(mut indices: Vec<usize>, aspects: usize) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidArgument(format!(
                    "duplicate aspect index {} in subset",
                    w[0]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= aspects {
                return Err(Error::InvalidArgument(format!(
                    "aspect index {last} out of range for {aspects} aspects"
                )));
            }
        }
        Ok(Subset(indices))
    }

    pub fn empty() -> Self {
        Subset(Vec::new())
    }

    pub fn full(aspects: usize) -> Self {
        Subset((0..aspects).collect())
    }

    pub fn singleton(j: usize) -> Self {
        Subset(vec![j])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.0.iter().all(|&j| other.contains(j))
    }

    /// Returns `self ∪ {j}`.
    pub fn with(&self, j: usize) -> Subset {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&j) {
            v.insert(pos, j);
        }
        Subset(v)
    }

    pub fn membership(&self, aspects: usize) -> Vec<bool> {
        let mut m = vec![false; aspects];
        for &j in &self.0 {
            m[j] = true;
        }
        m
    }

    /// All subsets of `0..aspects` with exactly `size` elements, in
    /// lexicographic order.
    pub fn all_of_size(aspects: usize, size: usize) -> Vec<Subset> {
        use itertools::Itertools;
        (0..aspects).combinations(size).map(Subset).collect()
    }

    /// All subsets with at most `max_size` elements, ordered by size and then
    /// lexicographically.
    pub fn all_up_to(aspects: usize, max_size: usize) -> Vec<Subset> {
        (0..=max_size.min(aspects))
            .flat_map(|k| Subset::all_of_size(aspects, k))
            .collect()
    }

    /// Validates this subset against an aspect count.
    pub fn check(&self, aspects: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= aspects => Err(Error::InvalidArgument(format!(
                "aspect index {last} out of range for {aspects} aspects"
            ))),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for Subset {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Subset::new(v, usize::MAX)
    }
}

impl From<Subset> for Vec<usize> {
    fn from(s: Subset) -> Self {
        s.0
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, "}}")
    }
}

/// Column layout of the aspect blocks in `A` and `H`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectBlocks {
    a_widths: Vec<usize>,
    h_widths: Vec<usize>,
}

impl AspectBlocks {
    pub fn new(a_widths: Vec<usize>, h_widths: Vec<usize>) -> Result<Self> {
        if a_widths.is_empty() {
            return Err(Error::InvalidArgument("at least one aspect is required".into()));
        }
        if a_widths.len() != h_widths.len() {
            return Err(Error::Dimension {
                context: "aspect block widths",
                expected: a_widths.len(),
                found: h_widths.len(),
            });
        }
        if a_widths.iter().chain(&h_widths).any(|&w| w == 0) {
            return Err(Error::InvalidArgument("aspect blocks must be at least one column wide".into()));
        }
        Ok(AspectBlocks { a_widths, h_widths })
    }

    /// `aspects` blocks of width one in both `A` and `H`.
    pub fn unit(aspects: usize) -> Result<Self> {
        AspectBlocks::new(vec![1; aspects], vec![1; aspects])
    }

    pub fn aspects(&self) -> usize {
        self.a_widths.len()
    }

    pub fn a_widths(&self) -> &[usize] {
        &self.a_widths
    }

    pub fn h_widths(&self) -> &[usize] {
        &self.h_widths
    }

    pub fn a_dim(&self) -> usize {
        self.a_widths.iter().sum()
    }

    pub fn h_dim(&self) -> usize {
        self.h_widths.iter().sum()
    }

    pub fn a_range(&self, j: usize) -> Range<usize> {
        let start: usize = self.a_widths[..j].iter().sum();
        start..start + self.a_widths[j]
    }

    pub fn h_range(&self, j: usize) -> Range<usize> {
        let start: usize = self.h_widths[..j].iter().sum();
        start..start + self.h_widths[j]
    }

    /// Columns of `H` belonging to the aspects in `pi`, in aspect order.
    pub fn h_columns(&self, pi: &Subset) -> Vec<usize> {
        pi.indices().iter().flat_map(|&j| self.h_range(j)).collect()
    }

    /// Aspect owning column `col` of `H`.
    pub fn aspect_of_h_column(&self, col: usize) -> usize {
        let mut acc = 0;
        for (j, &w) in self.h_widths.iter().enumerate() {
            acc += w;
            if col < acc {
                return j;
            }
        }
        panic!("column {col} outside H")
    }
}

/// How the selection context `Z` is derived from the AI signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMap {
    /// `Z = A`.
    #[default]
    Identity,
    /// `Z` is a single constant column; every rule becomes non-adaptive.
    Constant,
}

impl ContextMap {
    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ContextMap::Identity => a.clone(),
            ContextMap::Constant => DMatrix::from_element(a.nrows(), 1, 1.0),
        }
    }

    pub fn apply_row(&self, a_row: &[f64]) -> DVector<f64> {
        match self {
            ContextMap::Identity => DVector::from_column_slice(a_row),
            ContextMap::Constant => DVector::from_element(1, 1.0),
        }
    }
}

/// Per-instance AI signals, human signals, target and optional agreement
/// columns. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    a: DMatrix<f64>,
    h: DMatrix<f64>,
    y: DVector<f64>,
    blocks: AspectBlocks,
    s: Option<DMatrix<f64>>,
    ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        a: DMatrix<f64>,
        h: DMatrix<f64>,
        y: DVector<f64>,
        blocks: AspectBlocks,
        s: Option<DMatrix<f64>>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InsufficientData {
                context: "dataset",
                needed: 1,
                found: 0,
            });
        }
        let dim = |context, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context,
                    expected,
                    found,
                })
            }
        };
        dim("rows of A", n, a.nrows())?;
        dim("rows of H", n, h.nrows())?;
        dim("columns of A", blocks.a_dim(), a.ncols())?;
        dim("columns of H", blocks.h_dim(), h.ncols())?;
        if let Some(s) = &s {
            dim("rows of S", n, s.nrows())?;
            dim("columns of S", 2 * blocks.aspects(), s.ncols())?;
        }
        if let Some(ids) = &ids {
            dim("instance ids", n, ids.len())?;
        }
        check_finite(&a, "a")?;
        check_finite(&h, "h")?;
        check_finite(&DMatrix::from_column_slice(n, 1, y.as_slice()), "y")?;
        if let Some(s) = &s {
            check_finite(s, "s")?;
        }
        Ok(Dataset {
            a,
            h,
            y,
            blocks,
            s,
            ids,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn aspects(&self) -> usize {
        self.blocks.aspects()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn blocks(&self) -> &AspectBlocks {
        &self.blocks
    }

    pub fn agreement(&self) -> Option<&DMatrix<f64>> {
        self.s.as_ref()
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    /// Columns of `H` for the aspects in `pi`.
    pub fn h_subset(&self, pi: &Subset) -> DMatrix<f64> {
        self.h.select_columns(&self.blocks.h_columns(pi))
    }

    /// Regression design `[A, H_pi]` (no constant column).
    pub fn design(&self, pi: &Subset) -> DMatrix<f64> {
        let hp = self.h_subset(pi);
        hstack(&self.a, &hp)
    }

    pub fn context(&self, map: ContextMap) -> DMatrix<f64> {
        map.apply(&self.a)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            a: self.a.select_rows(rows),
            h: self.h.select_rows(rows),
            y: self.y.select_rows(rows),
            blocks: self.blocks.clone(),
            s: self.s.as_ref().map(|s| s.select_rows(rows)),
            ids: self
                .ids
                .as_ref()
                .map(|ids| rows.iter().map(|&r| ids[r].clone()).collect()),
        }
    }

    /// Same instances with a replacement target.
    pub fn with_target(&self, y: DVector<f64>) -> Result<Dataset> {
        Dataset::new(
            self.a.clone(),
            self.h.clone(),
            y,
            self.blocks.clone(),
            self.s.clone(),
            self.ids.clone(),
        )
    }

    /// Same instances with replacement agreement columns.
    pub fn with_agreement(&self, s: DMatrix<f64>) -> Result<Dataset> {
        Dataset::new(
            self.a.clone(),
            self.h.clone(),
            self.y.clone(),
            self.blocks.clone(),
            Some(s),
            self.ids.clone(),
        )
    }
}

fn check_finite(m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: r + 1,
                    column: format!("{prefix}[{c}]"),
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Horizontal concatenation `[left, right]`.
pub(crate) fn hstack(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(left.nrows(), right.nrows());
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols()).copy_from(right);
    out
}
