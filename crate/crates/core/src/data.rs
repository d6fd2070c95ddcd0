//! Ground-truth subspace arrangements, observation patterns and the masked
//! views of a dataset (complete, zero-filled, projected, projected-zero-filled
//! and the two unobserved remainders).
//!
//! Views are derived per anchor, the point currently being expressed. The
//! projected views depend on the anchor's observation pattern, so nothing is
//! cached across anchors.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Maximum entrywise deviation of `BᵀB` from the identity for a basis.
pub const ORTHONORMAL_TOL: f64 = 1e-12;
/// Allowed deviation of a data column's norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("pattern {index} has length {len}, expected ambient dimension {expected}")]
    PatternLengthMismatch { index: usize, len: usize, expected: usize },
    #[error("pattern {index} hides {found} entries, expected {expected} like pattern 0")]
    UnequalMaskCount { index: usize, found: usize, expected: usize },
    #[error("patterns hide {missing} of {ambient} entries; at least one must stay observed")]
    FullMask { missing: usize, ambient: usize },
    #[error("column {index} has norm {norm}, expected unit norm")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("{what}: expected {expected}, found {found}")]
    CountMismatch { what: &'static str, expected: usize, found: usize },
    #[error("basis {index} deviates from orthonormal by {deviation:e}")]
    NotOrthonormal { index: usize, deviation: f64 },
    #[error("subspace {index} has dimension {dim} in ambient dimension {ambient}")]
    InvalidDimension { index: usize, dim: usize, ambient: usize },
    #[error("projected subspace {index} has rank 0 under the anchor's pattern")]
    DegenerateSubspace { index: usize },
    #[error("index {index} out of range for {len} points")]
    OutOfRange { index: usize, len: usize },
    #[error("label {label} has no points to estimate a basis from")]
    EmptyCluster { label: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Orthonormal basis for the range of `m`, keeping singular directions whose
/// singular value exceeds `RANK_TOL` times the largest one. Columns come out in
/// order of decreasing singular value.
pub fn orthonormal_range(m: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let largest = order.first().map(|&i| sv[i]).unwrap_or(0.0);
    if largest <= 0.0 {
        return DMatrix::zeros(rows, 0);
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sv[i] > RANK_TOL * largest)
        .collect();
    DMatrix::from_fn(rows, kept.len(), |r, c| u[(r, kept[c])])
}

/// A union of linear subspaces, each given by an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceArrangement {
    ambient_dim: usize,
    bases: Vec<DMatrix<f64>>,
}

impl SubspaceArrangement {
    pub fn new(ambient_dim: usize, bases: Vec<DMatrix<f64>>) -> Result<Self, DataError> {
        for (index, b) in bases.iter().enumerate() {
            if b.nrows() != ambient_dim {
                return Err(DataError::CountMismatch {
                    what: "basis rows",
                    expected: ambient_dim,
                    found: b.nrows(),
                });
            }
            let dim = b.ncols();
            if dim == 0 || dim >= ambient_dim {
                return Err(DataError::InvalidDimension { index, dim, ambient: ambient_dim });
            }
            let gram = b.transpose() * b;
            let deviation = (gram - DMatrix::<f64>::identity(dim, dim)).amax();
            if deviation > ORTHONORMAL_TOL {
                return Err(DataError::NotOrthonormal { index, deviation });
            }
        }
        Ok(Self { ambient_dim, bases })
    }

    /// Estimates each subspace as the orthonormalized span of its labeled points.
    pub fn from_labeled_points(
        points: &DMatrix<f64>,
        labels: &[usize],
        n_clusters: usize,
    ) -> Result<Self, DataError> {
        let mut bases = Vec::with_capacity(n_clusters);
        for label in 0..n_clusters {
            let cols: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == label).collect();
            if cols.is_empty() {
                return Err(DataError::EmptyCluster { label });
            }
            let members = points.select_columns(cols.iter());
            let basis = orthonormal_range(&members);
            if basis.ncols() == 0 {
                return Err(DataError::DegenerateSubspace { index: label });
            }
            bases.push(basis);
        }
        Self::new(points.nrows(), bases)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    pub fn basis(&self, index: usize) -> &DMatrix<f64> {
        &self.bases[index]
    }

    pub fn bases(&self) -> &[DMatrix<f64>] {
        &self.bases
    }

    /// Orthogonal projector `B Bᵀ` onto subspace `index`.
    pub fn projector(&self, index: usize) -> DMatrix<f64> {
        let b = &self.bases[index];
        b * b.transpose()
    }

    /// Projects every subspace onto the coordinates observed by `pattern`,
    /// re-orthonormalizing and recomputing each dimension by rank.
    pub fn project_onto_pattern(&self, pattern: &ObservationPattern) -> Result<Self, DataError> {
        if pattern.len() != self.ambient_dim {
            return Err(DataError::PatternLengthMismatch {
                index: 0,
                len: pattern.len(),
                expected: self.ambient_dim,
            });
        }
        let mut bases = Vec::with_capacity(self.bases.len());
        for index in 0..self.bases.len() {
            bases.push(self.projected_basis(index, pattern)?);
        }
        // Dimensions may drop, so the result bypasses the 0 < d < D check.
        Ok(Self { ambient_dim: self.ambient_dim, bases })
    }

    /// Orthonormal basis of subspace `index` after masking by `pattern`.
    pub fn projected_basis(
        &self,
        index: usize,
        pattern: &ObservationPattern,
    ) -> Result<DMatrix<f64>, DataError> {
        let mut masked = self.bases[index].clone();
        pattern.mask_matrix_rows(&mut masked);
        let basis = orthonormal_range(&masked);
        if basis.ncols() == 0 {
            return Err(DataError::DegenerateSubspace { index });
        }
        Ok(basis)
    }
}

/// Binary observation pattern: `true` marks an observed coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationPattern(Vec<bool>);

impl ObservationPattern {
    pub fn new(observed: Vec<bool>) -> Self {
        Self(observed)
    }

    pub fn fully_observed(dim: usize) -> Self {
        Self(vec![true; dim])
    }

    /// Pattern of length `dim` with the listed coordinates unobserved.
    pub fn with_missing(dim: usize, missing: &[usize]) -> Self {
        let mut observed = vec![true; dim];
        for &k in missing {
            observed[k] = false;
        }
        Self(observed)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_observed(&self, k: usize) -> bool {
        self.0[k]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn missing_count(&self) -> usize {
        self.0.iter().filter(|&&o| !o).count()
    }

    /// The complementary pattern `1 − ω`.
    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|&o| !o).collect())
    }

    /// `diag(ω) x`.
    pub fn mask(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |k, _| if self.0[k] { x[k] } else { 0.0 })
    }

    /// Applies `diag(ω)` from the left, zeroing unobserved rows in place.
    pub fn mask_matrix_rows(&self, m: &mut DMatrix<f64>) {
        for (k, &observed) in self.0.iter().enumerate() {
            if !observed {
                m.row_mut(k).fill(0.0);
            }
        }
    }
}

/// Which derived matrix a [`DataView`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewTag {
    Complete,
    ZeroFilled,
    Projected,
    ProjectedZeroFilled,
    Unobserved,
    ProjectedUnobserved,
}

impl ViewTag {
    pub const ALL: [ViewTag; 6] = [
        ViewTag::Complete,
        ViewTag::ZeroFilled,
        ViewTag::Projected,
        ViewTag::ProjectedZeroFilled,
        ViewTag::Unobserved,
        ViewTag::ProjectedUnobserved,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewTag::Complete => "complete",
            ViewTag::ZeroFilled => "zf",
            ViewTag::Projected => "projected",
            ViewTag::ProjectedZeroFilled => "pzf",
            ViewTag::Unobserved => "unobserved",
            ViewTag::ProjectedUnobserved => "projected_unobserved",
        }
    }
}

impl fmt::Display for ViewTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViewTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown view `{s}`"))
    }
}

/// A derived `D × N` matrix for one anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct DataView {
    pub tag: ViewTag,
    pub anchor: usize,
    pub matrix: DMatrix<f64>,
}

impl DataView {
    pub fn column(&self, j: usize) -> DVector<f64> {
        self.matrix.column(j).into_owned()
    }
}

/// Unit-norm points with labels and per-point observation patterns, each
/// hiding exactly `missing` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDataset {
    points: DMatrix<f64>,
    labels: Vec<usize>,
    patterns: Vec<ObservationPattern>,
    n_clusters: usize,
    missing: usize,
}

/// Validates and assembles a dataset. Labels must lie in `0..n_clusters` where
/// `n_clusters = max(label) + 1`.
pub fn apply_patterns(
    points: DMatrix<f64>,
    labels: Vec<usize>,
    patterns: Vec<ObservationPattern>,
) -> Result<MaskedDataset, DataError> {
    let (dim, count) = points.shape();
    if labels.len() != count {
        return Err(DataError::CountMismatch { what: "labels", expected: count, found: labels.len() });
    }
    if patterns.len() != count {
        return Err(DataError::CountMismatch {
            what: "patterns",
            expected: count,
            found: patterns.len(),
        });
    }
    for (index, p) in patterns.iter().enumerate() {
        if p.len() != dim {
            return Err(DataError::PatternLengthMismatch { index, len: p.len(), expected: dim });
        }
    }
    let missing = patterns.first().map(|p| p.missing_count()).unwrap_or(0);
    for (index, p) in patterns.iter().enumerate() {
        let found = p.missing_count();
        if found != missing {
            return Err(DataError::UnequalMaskCount { index, found, expected: missing });
        }
    }
    if count > 0 && missing >= dim {
        return Err(DataError::FullMask { missing, ambient: dim });
    }
    for (index, col) in points.column_iter().enumerate() {
        let norm = col.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(DataError::NotUnitNorm { index, norm });
        }
    }
    let n_clusters = labels.iter().max().map(|&l| l + 1).unwrap_or(0);
    Ok(MaskedDataset { points, labels, patterns, n_clusters, missing })
}

impl MaskedDataset {
    pub fn ambient_dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Number of unobserved entries per point (`m`).
    pub fn missing_per_point(&self) -> usize {
        self.missing
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn patterns(&self) -> &[ObservationPattern] {
        &self.patterns
    }

    pub fn pattern(&self, j: usize) -> &ObservationPattern {
        &self.patterns[j]
    }

    /// Indices sharing the anchor's label, anchor excluded, in ascending order.
    pub fn companions(&self, anchor: usize) -> Vec<usize> {
        let label = self.labels[anchor];
        (0..self.len()).filter(|&j| j != anchor && self.labels[j] == label).collect()
    }

    /// Indices with a label different from the anchor's.
    pub fn others(&self, anchor: usize) -> Vec<usize> {
        let label = self.labels[anchor];
        (0..self.len()).filter(|&j| self.labels[j] != label).collect()
    }

    /// Zero-filled data `X̄`: column j is `diag(ω_j) x_j`.
    pub fn zero_filled(&self) -> DMatrix<f64> {
        let mut out = self.points.clone();
        for (j, p) in self.patterns.iter().enumerate() {
            for (k, &observed) in p.as_slice().iter().enumerate() {
                if !observed {
                    out[(k, j)] = 0.0;
                }
            }
        }
        out
    }

    /// Unobserved components `X̃ = X − X̄`.
    pub fn unobserved(&self) -> DMatrix<f64> {
        let mut out = self.points.clone();
        for (j, p) in self.patterns.iter().enumerate() {
            for (k, &observed) in p.as_slice().iter().enumerate() {
                if observed {
                    out[(k, j)] = 0.0;
                }
            }
        }
        out
    }

    /// The requested view for `anchor`.
    pub fn view(&self, tag: ViewTag, anchor: usize) -> Result<DataView, DataError> {
        if anchor >= self.len() {
            return Err(DataError::OutOfRange { index: anchor, len: self.len() });
        }
        let anchor_pattern = &self.patterns[anchor];
        let matrix = match tag {
            ViewTag::Complete => self.points.clone(),
            ViewTag::ZeroFilled => self.zero_filled(),
            ViewTag::Unobserved => self.unobserved(),
            ViewTag::Projected => {
                let mut m = self.points.clone();
                anchor_pattern.mask_matrix_rows(&mut m);
                m
            }
            ViewTag::ProjectedZeroFilled => {
                let mut m = self.zero_filled();
                anchor_pattern.mask_matrix_rows(&mut m);
                m
            }
            ViewTag::ProjectedUnobserved => {
                let mut m = self.unobserved();
                anchor_pattern.mask_matrix_rows(&mut m);
                m
            }
        };
        Ok(DataView { tag, anchor, matrix })
    }

    /// Same points, labels and patterns with columns reordered so that new
    /// column `i` is old column `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: self.points.select_columns(perm.iter()),
            labels: perm.iter().map(|&j| self.labels[j]).collect(),
            patterns: perm.iter().map(|&j| self.patterns[j].clone()).collect(),
            n_clusters: self.n_clusters,
            missing: self.missing,
        }
    }

    /// Writes the plain-text format: a `D N n` header, `D` rows of `N` floats
    /// at 17 significant digits, one row of labels, then `D` rows of `N` 0/1
    /// observation flags.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DataError> {
        let (dim, count) = self.points.shape();
        writeln!(w, "{} {} {}", dim, count, self.n_clusters)?;
        for k in 0..dim {
            let row: Vec<String> = (0..count).map(|j| format!("{:.16e}", self.points[(k, j)])).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        let labels: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        writeln!(w, "{}", labels.join(" "))?;
        for k in 0..dim {
            let row: Vec<&str> = self
                .patterns
                .iter()
                .map(|p| if p.is_observed(k) { "1" } else { "0" })
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, DataError> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let mut next_line = |what: &str| -> Result<(usize, String), DataError> {
            match lines.next() {
                Some((n, Ok(s))) => Ok((n, s)),
                Some((_, Err(e))) => Err(DataError::Io(e)),
                None => Err(DataError::Parse { line: 0, msg: format!("unexpected end of file reading {what}") }),
            }
        };
        let (ln, header) = next_line("header")?;
        let head: Vec<usize> = parse_row(&header, ln)?;
        if head.len() != 3 {
            return Err(DataError::Parse { line: ln, msg: "header must be `D N n`".into() });
        }
        let (dim, count, n_clusters) = (head[0], head[1], head[2]);
        let mut points = DMatrix::zeros(dim, count);
        for k in 0..dim {
            let (ln, s) = next_line("points")?;
            let row: Vec<f64> = parse_row(&s, ln)?;
            check_len(&row, count, ln)?;
            for (j, v) in row.into_iter().enumerate() {
                points[(k, j)] = v;
            }
        }
        let (ln, s) = next_line("labels")?;
        let labels: Vec<usize> = parse_row(&s, ln)?;
        check_len(&labels, count, ln)?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_clusters) {
            return Err(DataError::Parse { line: ln, msg: format!("label {bad} ≥ n = {n_clusters}") });
        }
        let mut observed = vec![vec![true; dim]; count];
        for k in 0..dim {
            let (ln, s) = next_line("patterns")?;
            let row: Vec<u8> = parse_row(&s, ln)?;
            check_len(&row, count, ln)?;
            for (j, v) in row.into_iter().enumerate() {
                observed[j][k] = match v {
                    0 => false,
                    1 => true,
                    _ => return Err(DataError::Parse { line: ln, msg: format!("pattern entry {v} is not 0/1") }),
                };
            }
        }
        let patterns = observed.into_iter().map(ObservationPattern::new).collect();
        let mut ds = apply_patterns(points, labels, patterns)?;
        ds.n_clusters = n_clusters.max(ds.n_clusters);
        Ok(ds)
    }
}

fn parse_row<T: FromStr>(s: &str, line: usize) -> Result<Vec<T>, DataError>
where
    T::Err: fmt::Display,
{
    s.split_whitespace()
        .map(|tok| tok.parse::<T>().map_err(|e| DataError::Parse { line, msg: format!("`{tok}`: {e}") }))
        .collect()
}

fn check_len<T>(row: &[T], expected: usize, line: usize) -> Result<(), DataError> {
    if row.len() != expected {
        return Err(DataError::Parse { line, msg: format!("expected {expected} entries, found {}", row.len()) });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn unit(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v).normalize()
    }

    fn dataset(cols: &[DVector<f64>], labels: Vec<usize>, patterns: Vec<ObservationPattern>) -> MaskedDataset {
        let points = DMatrix::from_columns(cols);
        apply_patterns(points, labels, patterns).unwrap()
    }

    #[test]
    fn single_mask_splits_observed_and_unobserved() {
        let x = DVector::from_vec(vec![0.6, 0.8]);
        let ds = dataset(&[x], vec![0], vec![ObservationPattern::new(vec![true, false])]);
        let zf = ds.view(ViewTag::ZeroFilled, 0).unwrap().column(0);
        let un = ds.view(ViewTag::Unobserved, 0).unwrap().column(0);
        assert_eq!(zf.as_slice(), &[0.6, 0.0]);
        assert_eq!(un.as_slice(), &[0.0, 0.8]);
        assert_eq!(zf.norm(), 0.6);
    }

    #[test]
    fn identity_masks_leave_data_untouched() {
        let cols = [unit(&[1.0, 2.0, 3.0]), unit(&[-1.0, 0.5, 2.0])];
        let ds = dataset(&cols, vec![0, 1], vec![ObservationPattern::fully_observed(3); 2]);
        assert_eq!(ds.missing_per_point(), 0);
        assert_eq!(ds.zero_filled(), *ds.points());
        assert_eq!(ds.unobserved(), DMatrix::zeros(3, 2));
        for tag in ViewTag::ALL {
            let v = ds.view(tag, 1).unwrap();
            match tag {
                ViewTag::Unobserved | ViewTag::ProjectedUnobserved => assert_eq!(v.matrix.amax(), 0.0),
                _ => assert_eq!(v.matrix, *ds.points()),
            }
        }
    }

    #[test]
    fn projected_zero_filled_composes_both_masks() {
        // explicit loops as oracle for diag(ω_anchor)·diag(ω_j)·x
        let mut r = rng::stream(11, 0);
        for _ in 0..50 {
            let a: [f64; 3] = [r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal)];
            let b: [f64; 3] = [r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal)];
            let cols = [unit(&a), unit(&b)];
            let pats = vec![
                ObservationPattern::new(vec![true, true, false]),
                ObservationPattern::new(vec![false, true, true]),
            ];
            let ds = dataset(&cols, vec![0, 0], pats.clone());
            let pzf = ds.view(ViewTag::ProjectedZeroFilled, 0).unwrap();
            for j in 0..2 {
                for k in 0..3 {
                    let mut expect = cols[j][k];
                    if !pats[0].as_slice()[k] {
                        expect = 0.0;
                    }
                    if !pats[j].as_slice()[k] {
                        expect *= 0.0;
                    }
                    assert_eq!(pzf.matrix[(k, j)], expect);
                }
            }
            assert_eq!(pzf.matrix.column(1).as_slice()[0], 0.0);
            assert_eq!(pzf.matrix.column(1).as_slice()[2], 0.0);
        }
    }

    fn random_dataset(seed: u64, dim: usize, count: usize, missing: usize) -> MaskedDataset {
        let mut r = rng::stream(seed, 0);
        let mut cols = Vec::new();
        let mut pats = Vec::new();
        for _ in 0..count {
            let g: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
            cols.push(unit(&g));
            let idx = rand::seq::index::sample(&mut r, dim, missing).into_vec();
            pats.push(ObservationPattern::with_missing(dim, &idx));
        }
        let labels = (0..count).map(|j| j % 2).collect();
        dataset(&cols, labels, pats)
    }

    #[test]
    fn view_identities_hold() {
        let ds = random_dataset(3, 12, 9, 4);
        for anchor in 0..ds.len() {
            let x = ds.view(ViewTag::Complete, anchor).unwrap().matrix;
            let zf = ds.view(ViewTag::ZeroFilled, anchor).unwrap().matrix;
            let un = ds.view(ViewTag::Unobserved, anchor).unwrap().matrix;
            let proj = ds.view(ViewTag::Projected, anchor).unwrap().matrix;
            let pzf = ds.view(ViewTag::ProjectedZeroFilled, anchor).unwrap().matrix;
            let pun = ds.view(ViewTag::ProjectedUnobserved, anchor).unwrap().matrix;
            assert_eq!(&un + &zf, x);
            let mut zf_masked = zf.clone();
            ds.pattern(anchor).mask_matrix_rows(&mut zf_masked);
            assert_eq!(pzf, zf_masked);
            assert_eq!(&proj - &pzf, pun);
            // anchor completeness: its PZF column equals its ZF column
            assert_eq!(pzf.column(anchor), zf.column(anchor));
            // idempotence of the anchor projection
            let mut twice = pzf.clone();
            ds.pattern(anchor).mask_matrix_rows(&mut twice);
            assert_eq!(twice, pzf);
            // Pythagoras
            for j in 0..ds.len() {
                let lhs = x.column(j).norm_squared();
                let rhs = zf.column(j).norm_squared() + un.column(j).norm_squared();
                assert!((lhs - rhs).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pattern_validation_errors() {
        let cols = [unit(&[1.0, 0.0, 0.0]), unit(&[0.0, 1.0, 0.0])];
        let points = DMatrix::from_columns(&cols);
        let short = vec![ObservationPattern::fully_observed(2), ObservationPattern::fully_observed(3)];
        assert!(matches!(
            apply_patterns(points.clone(), vec![0, 0], short),
            Err(DataError::PatternLengthMismatch { index: 0, .. })
        ));
        let unequal = vec![ObservationPattern::with_missing(3, &[0]), ObservationPattern::fully_observed(3)];
        assert!(matches!(
            apply_patterns(points.clone(), vec![0, 0], unequal),
            Err(DataError::UnequalMaskCount { index: 1, .. })
        ));
        let full = vec![ObservationPattern::with_missing(3, &[0, 1, 2]); 2];
        assert!(matches!(apply_patterns(points.clone(), vec![0, 0], full), Err(DataError::FullMask { .. })));
        let scaled = points * 2.0;
        assert!(matches!(
            apply_patterns(scaled, vec![0, 0], vec![ObservationPattern::fully_observed(3); 2]),
            Err(DataError::NotUnitNorm { index: 0, .. })
        ));
    }

    fn projector_of(basis: &DMatrix<f64>) -> DMatrix<f64> {
        basis * basis.transpose()
    }

    #[test]
    fn projection_with_full_pattern_is_identity() {
        let b = DMatrix::from_columns(&[unit(&[1.0, 1.0, 0.0, 0.0]), unit(&[1.0, -1.0, 1.0, 0.0])]);
        let b = orthonormal_range(&b);
        let arr = SubspaceArrangement::new(4, vec![b.clone()]).unwrap();
        let proj = arr.project_onto_pattern(&ObservationPattern::fully_observed(4)).unwrap();
        assert_eq!(proj.dims(), vec![2]);
        assert!((projector_of(proj.basis(0)) - projector_of(&b)).amax() <= 1e-10);
    }

    #[test]
    fn coordinate_kill_drops_dimension() {
        let b = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
        ]);
        let arr = SubspaceArrangement::new(3, vec![b]).unwrap();
        let proj = arr.project_onto_pattern(&ObservationPattern::new(vec![true, false, true])).unwrap();
        assert_eq!(proj.dims(), vec![1]);
        let p = projector_of(proj.basis(0));
        let e1 = DMatrix::from_fn(3, 3, |r, c| if r == 0 && c == 0 { 1.0 } else { 0.0 });
        assert!((p - e1).amax() <= 1e-12);
    }

    #[test]
    fn fully_killed_subspace_is_signalled() {
        let b = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let arr = SubspaceArrangement::new(3, vec![b]).unwrap();
        let err = arr.project_onto_pattern(&ObservationPattern::new(vec![true, false, true])).unwrap_err();
        assert!(matches!(err, DataError::DegenerateSubspace { index: 0 }));
    }

    #[test]
    fn projected_subspace_matches_rank_factorization_oracle() {
        // oracle: range of diag(ω) P_S diag(ω) from its eigen-decomposition
        let mut r = rng::stream(5, 1);
        let g = DMatrix::from_fn(20, 3, |_, _| r.sample(StandardNormal));
        let b = g.qr().q();
        let arr = SubspaceArrangement::new(20, vec![b.clone()]).unwrap();
        let missing = rand::seq::index::sample(&mut r, 20, 5).into_vec();
        let pat = ObservationPattern::with_missing(20, &missing);
        let proj = arr.project_onto_pattern(&pat).unwrap();

        let omega = DMatrix::from_fn(20, 20, |i, j| if i == j && pat.is_observed(i) { 1.0 } else { 0.0 });
        let m = &omega * projector_of(&b) * &omega;
        let eig = m.symmetric_eigen();
        let cols: Vec<DVector<f64>> = (0..20)
            .filter(|&i| eig.eigenvalues[i] > 1e-10)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let oracle = DMatrix::from_columns(&cols);
        assert_eq!(proj.dims(), vec![oracle.ncols()]);
        assert!((projector_of(proj.basis(0)) - projector_of(&oracle)).amax() <= 1e-10);
    }

    #[test]
    fn arrangement_rejects_bad_bases() {
        let not_orth = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            SubspaceArrangement::new(3, vec![not_orth]),
            Err(DataError::NotOrthonormal { .. })
        ));
        let full = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(SubspaceArrangement::new(3, vec![full]), Err(DataError::InvalidDimension { .. })));
    }

    #[test]
    fn text_format_round_trips_bit_exactly() {
        let ds = random_dataset(9, 7, 6, 2);
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let back = MaskedDataset::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("7 6 2\n"));
    }

    #[test]
    fn malformed_text_is_rejected() {
        let bad = "2 1 1\n1.0\n0.0\n0\n1\n2\n";
        assert!(matches!(MaskedDataset::read_from(bad.as_bytes()), Err(DataError::Parse { .. })));
        let short = "2 2 1\n1.0 0.0\n";
        assert!(MaskedDataset::read_from(short.as_bytes()).is_err());
    }

    #[test]
    fn labels_estimate_bases() {
        let ds = random_dataset(2, 5, 4, 0);
        let arr = SubspaceArrangement::from_labeled_points(ds.points(), ds.labels(), 2).unwrap();
        assert_eq!(arr.dims(), vec![2, 2]);
        for j in 0..ds.len() {
            let x = ds.points().column(j).into_owned();
            let p = arr.projector(ds.labels()[j]);
            assert!((&p * &x - &x).amax() <= 1e-12);
        }
    }
}
