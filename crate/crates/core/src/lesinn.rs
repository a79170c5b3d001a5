//! Feature-weighted LeSiNN.
//!
//! An object's score is its nearest-neighbour distance to each of `c`
//! random subsamples of the data, averaged over the subsamples. Distances
//! are weighted squared Euclidean, `sum_k w_k (x_k - y_k)^2`, so the
//! unweighted detector is the special case `w = 1`.
//!
//! When the scored object is itself a row of the dataset its own row is
//! left out of every subsample's minimisation. A subsample consisting only
//! of that row contributes nothing, and the mean is taken over the
//! subsamples that do contribute.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{OdefsError, Result};
use crate::seed;

pub const DEFAULT_SUBSETS: usize = 50;
pub const DEFAULT_SUBSAMPLE_SIZE: usize = 8;

/// Non-negative, finite per-feature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureWeights(Vec<f64>);

impl FeatureWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(k) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(OdefsError::InvalidParameter(format!(
                "feature weight {k} is {} (weights must be finite and >= 0)",
                w[k]
            )));
        }
        Ok(Self(w))
    }

    pub fn ones(d: usize) -> Self {
        Self(vec![1.0; d])
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// 0/1 indicator of `features` over `d` features.
    pub fn indicator(d: usize, features: &[usize]) -> Result<Self> {
        if features.is_empty() {
            return Err(OdefsError::EmptyFeatureSet);
        }
        let mut w = vec![0.0; d];
        for &k in features {
            if k >= d {
                return Err(OdefsError::FeatureOutOfRange { index: k, d });
            }
            w[k] = 1.0;
        }
        Ok(Self(w))
    }

    /// Clips negatives to zero. Non-finite entries are an error.
    pub fn project(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(OdefsError::NonFiniteGradient);
        }
        Ok(Self(w.into_iter().map(|v| v.max(0.0)).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Indices with a strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&k| self.0[k] > 0.0).collect()
    }
}

impl TryFrom<Vec<f64>> for FeatureWeights {
    type Error = OdefsError;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<FeatureWeights> for Vec<f64> {
    fn from(w: FeatureWeights) -> Self {
        w.0
    }
}

/// `sum_k w_k (x_k - y_k)^2`.
pub fn weighted_distance(x: &[f64], y: &[f64], w: &FeatureWeights) -> Result<f64> {
    if x.len() != w.len() || y.len() != w.len() {
        let found = if x.len() != w.len() { x.len() } else { y.len() };
        return Err(OdefsError::DimensionMismatch {
            expected: w.len(),
            found,
        });
    }
    Ok(dense_distance(x, y, w.as_slice()))
}

#[inline]
fn dense_distance(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..w.len() {
        let t = x[k] - y[k];
        acc += w[k] * (t * t);
    }
    acc
}

#[inline]
fn sparse_distance(x: &[f64], y: &[f64], w: &[f64], support: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &k in support {
        let t = x[k] - y[k];
        acc += w[k] * (t * t);
    }
    acc
}

/// Features that can change a distance. Skipping zero weights leaves every
/// partial sum bit-identical, since adding `0.0` is exact.
enum Support {
    Dense,
    Sparse(Vec<usize>),
}

impl Support {
    fn of(w: &[f64]) -> Self {
        let support: Vec<usize> = (0..w.len()).filter(|&k| w[k] != 0.0).collect();
        if support.len() * 2 > w.len() {
            Support::Dense
        } else {
            Support::Sparse(support)
        }
    }

    #[inline]
    fn distance(&self, x: &[f64], y: &[f64], w: &[f64]) -> f64 {
        match self {
            Support::Dense => dense_distance(x, y, w),
            Support::Sparse(s) => sparse_distance(x, y, w, s),
        }
    }

    fn features(&self, d: usize) -> Vec<usize> {
        match self {
            Support::Dense => (0..d).collect(),
            Support::Sparse(s) => s.clone(),
        }
    }
}

#[inline]
fn closer(best: Option<(usize, f64)>, y: usize, dist: f64) -> Option<(usize, f64)> {
    match best {
        Some((bi, bd)) if bd < dist || (bd == dist && bi < y) => Some((bi, bd)),
        _ => Some((y, dist)),
    }
}

/// The object being scored.
#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    /// Row `i` of the dataset; excluded from its own neighbourhoods.
    Object(usize),
    /// An arbitrary point; nothing is excluded.
    Point(&'a [f64]),
}

impl<'a> Query<'a> {
    fn resolve(self, data: &'a Dataset) -> (&'a [f64], Option<usize>) {
        match self {
            Query::Object(i) => (data.row(i), Some(i)),
            Query::Point(x) => {
                assert_eq!(x.len(), data.d(), "query dimension mismatch");
                (x, None)
            }
        }
    }
}

/// The `c` random subsamples of a LeSiNN detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesinnModel {
    subsets: Vec<Vec<usize>>,
    subsample_size: usize,
    seed: u64,
}

impl LesinnModel {
    /// Draws `c` subsamples of `subsample_size` distinct object indices.
    pub fn build(data: &Dataset, c: usize, subsample_size: usize, seed: u64) -> Result<Self> {
        if c == 0 {
            return Err(OdefsError::InvalidParameter(
                "LeSiNN needs at least one subsample".into(),
            ));
        }
        if subsample_size == 0 || subsample_size > data.n() {
            return Err(OdefsError::InvalidParameter(format!(
                "subsample size {subsample_size} must be in 1..={}",
                data.n()
            )));
        }
        let mut rng = seed::rng(seed);
        let subsets = (0..c)
            .map(|_| sample(&mut rng, data.n(), subsample_size).into_vec())
            .collect();
        Ok(Self {
            subsets,
            subsample_size,
            seed,
        })
    }

    /// Wraps explicit subsets, e.g. for hand-built fixtures.
    pub fn from_subsets(subsets: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        if subsets.is_empty() || subsets.iter().any(Vec::is_empty) {
            return Err(OdefsError::InvalidParameter(
                "subsets must be non-empty".into(),
            ));
        }
        if let Some(&bad) = subsets.iter().flatten().find(|&&i| i >= n) {
            return Err(OdefsError::InvalidParameter(format!(
                "subset index {bad} out of range for {n} objects"
            )));
        }
        let subsample_size = subsets[0].len();
        Ok(Self {
            subsets,
            subsample_size,
            seed: 0,
        })
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn c(&self) -> usize {
        self.subsets.len()
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Nearest member of each subset under `w`, ties going to the lowest
    /// object index. `None` when the subset holds only the query itself.
    fn nearest<'s>(
        &'s self,
        data: &'s Dataset,
        x: &'s [f64],
        exclude: Option<usize>,
        w: &'s [f64],
        support: &'s Support,
    ) -> impl Iterator<Item = Option<(usize, f64)>> + 's {
        self.subsets.iter().map(move |subset| {
            let mut best: Option<(usize, f64)> = None;
            for &y in subset {
                if Some(y) == exclude {
                    continue;
                }
                best = closer(best, y, support.distance(x, data.row(y), w));
            }
            best
        })
    }

    /// Mean nearest-neighbour distance of `query` to the subsets.
    pub fn score(&self, data: &Dataset, query: Query<'_>, w: &FeatureWeights) -> f64 {
        assert_eq!(w.len(), data.d(), "weight dimension mismatch");
        let (x, exclude) = query.resolve(data);
        let support = Support::of(w.as_slice());
        let (mut sum, mut count) = (0.0, 0usize);
        for (_, dist) in self
            .nearest(data, x, exclude, w.as_slice(), &support)
            .flatten()
        {
            sum += dist;
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Score using only `features`, i.e. with 0/1 indicator weights.
    pub fn score_subset(&self, data: &Dataset, query: Query<'_>, features: &[usize]) -> Result<f64> {
        let w = FeatureWeights::indicator(data.d(), features)?;
        Ok(self.score(data, query, &w))
    }

    /// Subgradient of [`score`](Self::score) with respect to `w`, holding
    /// each subset's nearest neighbour fixed at the current weights.
    pub fn score_gradient(&self, data: &Dataset, query: Query<'_>, w: &FeatureWeights) -> Vec<f64> {
        let mut grad = vec![0.0; data.d()];
        self.score_with_gradient(data, query, w, &mut grad);
        grad
    }

    /// Returns the score and writes its gradient into `grad`.
    pub fn score_with_gradient(
        &self,
        data: &Dataset,
        query: Query<'_>,
        w: &FeatureWeights,
        grad: &mut [f64],
    ) -> f64 {
        assert_eq!(w.len(), data.d(), "weight dimension mismatch");
        assert_eq!(grad.len(), data.d(), "gradient dimension mismatch");
        let (x, exclude) = query.resolve(data);
        let support = Support::of(w.as_slice());
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (mut sum, mut count) = (0.0, 0usize);
        for (y, dist) in self
            .nearest(data, x, exclude, w.as_slice(), &support)
            .flatten()
        {
            sum += dist;
            count += 1;
            for (g, (a, b)) in grad.iter_mut().zip(x.iter().zip(data.row(y))) {
                let t = a - b;
                *g += t * t;
            }
        }
        if count == 0 {
            return 0.0;
        }
        let inv = 1.0 / count as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        sum / count as f64
    }

    /// [`score_with_gradient`](Self::score_with_gradient) for each of
    /// `objects`, bit for bit, with the gradients stacked row by row in
    /// `grads`. Faster when many objects share the same weights: subset
    /// members are packed feature-major in blocks of [`BLOCK`] so one pass
    /// over the weighted features yields a whole block of distances.
    pub fn score_objects_with_gradient(
        &self,
        data: &Dataset,
        objects: &[usize],
        w: &FeatureWeights,
        grads: &mut [f64],
    ) -> Vec<f64> {
        let d = data.d();
        assert_eq!(w.len(), d, "weight dimension mismatch");
        assert_eq!(grads.len(), objects.len() * d, "gradient buffer size mismatch");
        let support: Vec<usize> = (0..d).filter(|&k| w.as_slice()[k] != 0.0).collect();
        let wc: Vec<f64> = support.iter().map(|&k| w.as_slice()[k]).collect();
        let members: Vec<usize> = self.subsets.iter().flatten().copied().collect();
        let packed = pack_blocks(data, &members, &support);
        let mut dist = vec![0.0; members.len().div_ceil(BLOCK) * BLOCK];
        let mut xc = vec![0.0; support.len()];

        objects
            .iter()
            .zip(grads.chunks_exact_mut(d))
            .map(|(&i, grad)| {
                let x = data.row(i);
                for (slot, &k) in xc.iter_mut().zip(&support) {
                    *slot = x[k];
                }
                block_distances(&xc, &wc, &packed, &mut dist);
                grad.iter_mut().for_each(|g| *g = 0.0);
                let (mut sum, mut count) = (0.0, 0usize);
                let mut offset = 0;
                for subset in &self.subsets {
                    let mut best = None;
                    for (p, &y) in subset.iter().enumerate() {
                        if y != i {
                            best = closer(best, y, dist[offset + p]);
                        }
                    }
                    offset += subset.len();
                    if let Some((y, dist)) = best {
                        sum += dist;
                        count += 1;
                        for (g, (a, b)) in grad.iter_mut().zip(x.iter().zip(data.row(y))) {
                            let t = a - b;
                            *g += t * t;
                        }
                    }
                }
                if count == 0 {
                    return 0.0;
                }
                let inv = 1.0 / count as f64;
                grad.iter_mut().for_each(|g| *g *= inv);
                sum / count as f64
            })
            .collect()
    }

    /// Scores every dataset object. Same values, bit for bit, as calling
    /// [`score`](Self::score) with `Query::Object(i)` for each `i`.
    pub fn score_all(&self, data: &Dataset, w: &FeatureWeights) -> Vec<f64> {
        score_all_columns(self, data, &data.columns(), w)
    }

    pub fn score_all_subset(&self, data: &Dataset, features: &[usize]) -> Result<Vec<f64>> {
        let w = FeatureWeights::indicator(data.d(), features)?;
        Ok(self.score_all(data, &w))
    }
}

/// Members per block in [`LesinnModel::score_objects_with_gradient`].
pub const BLOCK: usize = 8;

/// Rows `members` restricted to `support`, in blocks of [`BLOCK`] rows
/// stored feature-major; the last block is padded with zeros.
fn pack_blocks(data: &Dataset, members: &[usize], support: &[usize]) -> Vec<f64> {
    let s = support.len();
    let blocks = members.len().div_ceil(BLOCK);
    let mut packed = vec![0.0; blocks * BLOCK * s];
    for (r, &y) in members.iter().enumerate() {
        let base = (r / BLOCK) * BLOCK * s + r % BLOCK;
        for (j, &k) in support.iter().enumerate() {
            packed[base + j * BLOCK] = data.value(y, k);
        }
    }
    packed
}

/// Weighted distances from `x` to every packed row. Each distance is a
/// single running sum over the features in order, as in [`sparse_distance`].
fn block_distances(x: &[f64], w: &[f64], packed: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the required CPU feature was detected at runtime.
            return unsafe { block_distances_avx512(x, w, packed, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: as above.
            return unsafe { block_distances_avx2(x, w, packed, out) };
        }
    }
    block_distances_generic(x, w, packed, out)
}

// Wider vectors only change how many lanes run at once; without fused
// multiply-add the arithmetic, and so every result, is the same.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn block_distances_avx512(x: &[f64], w: &[f64], packed: &[f64], out: &mut [f64]) {
    block_distances_generic(x, w, packed, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn block_distances_avx2(x: &[f64], w: &[f64], packed: &[f64], out: &mut [f64]) {
    block_distances_generic(x, w, packed, out)
}

#[inline(always)]
fn block_distances_generic(x: &[f64], w: &[f64], packed: &[f64], out: &mut [f64]) {
    let s = x.len();
    if s == 0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for (block, dst) in packed.chunks_exact(BLOCK * s).zip(out.chunks_exact_mut(BLOCK)) {
        let mut acc = [0.0; BLOCK];
        for ((col, &xk), &wk) in block.chunks_exact(BLOCK).zip(x).zip(w) {
            let col: &[f64; BLOCK] = col.try_into().expect("block column");
            for (a, &y) in acc.iter_mut().zip(col) {
                let t = xk - y;
                *a += wk * (t * t);
            }
        }
        dst.copy_from_slice(&acc);
    }
}

/// `acc[i] += wk * (column[i] - yk)^2` for every object `i`.
fn accumulate_column(acc: &mut [f64], column: &[f64], yk: f64, wk: f64) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            return unsafe { accumulate_column_avx2(acc, column, yk, wk) };
        }
    }
    accumulate_column_generic(acc, column, yk, wk)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn accumulate_column_avx2(acc: &mut [f64], column: &[f64], yk: f64, wk: f64) {
    accumulate_column_generic(acc, column, yk, wk)
}

#[inline(always)]
fn accumulate_column_generic(acc: &mut [f64], column: &[f64], yk: f64, wk: f64) {
    for (a, &xk) in acc.iter_mut().zip(column) {
        let t = xk - yk;
        *a += wk * (t * t);
    }
}

/// Feature-major evaluation: for every subset member, accumulate its
/// distance to all objects one feature column at a time.
fn score_all_columns(
    model: &LesinnModel,
    data: &Dataset,
    columns: &[Vec<f64>],
    w: &FeatureWeights,
) -> Vec<f64> {
    assert_eq!(w.len(), data.d(), "weight dimension mismatch");
    let n = data.n();
    let w = w.as_slice();
    let features = Support::of(w).features(data.d());
    let mut sum = vec![0.0; n];
    let mut count = vec![0u32; n];
    let mut best = vec![0.0; n];
    let mut dist = vec![0.0; n];
    for subset in model.subsets() {
        best.iter_mut().for_each(|b| *b = f64::INFINITY);
        for &y in subset {
            dist.iter_mut().for_each(|v| *v = 0.0);
            for &k in &features {
                accumulate_column(&mut dist, &columns[k], data.value(y, k), w[k]);
            }
            dist[y] = f64::INFINITY;
            for (b, &v) in best.iter_mut().zip(&dist) {
                if v < *b {
                    *b = v;
                }
            }
        }
        for i in 0..n {
            if best[i].is_finite() {
                sum[i] += best[i];
                count[i] += 1;
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// A detector whose scores depend on non-negative feature weights.
///
/// Training only talks to this trait, so another base detector can be
/// plugged in without touching the optimiser.
pub trait WeightedScorer: Sync {
    fn n_objects(&self) -> usize;
    fn n_features(&self) -> usize;
    fn score_object(&self, i: usize, w: &FeatureWeights) -> f64;
    /// Score of object `i`; its (sub)gradient with respect to `w` is
    /// written into `grad`.
    fn score_object_with_gradient(&self, i: usize, w: &FeatureWeights, grad: &mut [f64]) -> f64;
    fn score_all(&self, w: &FeatureWeights) -> Vec<f64>;

    /// Scores of `objects`, with their gradients stacked row by row in
    /// `grads` (length `objects.len() * n_features()`).
    fn score_objects_with_gradient(&self, objects: &[usize], w: &FeatureWeights, grads: &mut [f64]) -> Vec<f64> {
        let d = self.n_features();
        objects
            .iter()
            .zip(grads.chunks_exact_mut(d))
            .map(|(&i, g)| self.score_object_with_gradient(i, w, g))
            .collect()
    }
}

/// A [`LesinnModel`] bound to the dataset it was built over.
pub struct LesinnScorer<'a> {
    model: &'a LesinnModel,
    data: &'a Dataset,
    columns: Vec<Vec<f64>>,
}

impl<'a> LesinnScorer<'a> {
    pub fn new(model: &'a LesinnModel, data: &'a Dataset) -> Self {
        Self {
            model,
            data,
            columns: data.columns(),
        }
    }

    pub fn model(&self) -> &LesinnModel {
        self.model
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }
}

impl WeightedScorer for LesinnScorer<'_> {
    fn n_objects(&self) -> usize {
        self.data.n()
    }

    fn n_features(&self) -> usize {
        self.data.d()
    }

    fn score_object(&self, i: usize, w: &FeatureWeights) -> f64 {
        self.model.score(self.data, Query::Object(i), w)
    }

    fn score_object_with_gradient(&self, i: usize, w: &FeatureWeights, grad: &mut [f64]) -> f64 {
        self.model
            .score_with_gradient(self.data, Query::Object(i), w, grad)
    }

    fn score_all(&self, w: &FeatureWeights) -> Vec<f64> {
        score_all_columns(self.model, self.data, &self.columns, w)
    }

    fn score_objects_with_gradient(&self, objects: &[usize], w: &FeatureWeights, grads: &mut [f64]) -> Vec<f64> {
        self.model
            .score_objects_with_gradient(self.data, objects, w, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ds(rows: &[&[f64]]) -> Dataset {
        Dataset::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), None).unwrap()
    }

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = seed::rng(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        Dataset::from_rows(&rows, None).unwrap()
    }

    #[test]
    fn weighted_distance_examples() {
        let one = FeatureWeights::ones(2);
        assert_eq!(weighted_distance(&[1.0, 2.0], &[0.0, 0.0], &one).unwrap(), 5.0);
        assert_eq!(
            weighted_distance(&[3.0, -2.0], &[1.0, 7.0], &FeatureWeights::zeros(2)).unwrap(),
            0.0
        );
        let w = FeatureWeights::new(vec![2.0, 1.0]).unwrap();
        assert_eq!(weighted_distance(&[1.0, 2.0], &[0.0, 0.0], &w).unwrap(), 6.0);
        assert!(matches!(
            weighted_distance(&[1.0], &[0.0, 0.0], &one),
            Err(OdefsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn feature_weights_reject_negative_and_nan() {
        assert!(FeatureWeights::new(vec![1.0, -0.1]).is_err());
        assert!(FeatureWeights::new(vec![f64::NAN]).is_err());
        assert!(FeatureWeights::indicator(3, &[]).is_err());
        assert!(FeatureWeights::indicator(3, &[3]).is_err());
    }

    #[test]
    fn build_draws_distinct_indices() {
        let data = random_dataset(10, 2, 1);
        let model = LesinnModel::build(&data, 50, 8, 11).unwrap();
        assert_eq!(model.c(), 50);
        for s in model.subsets() {
            assert_eq!(s.len(), 8);
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 8);
            assert!(sorted.iter().all(|&i| i < 10));
        }
        assert_eq!(model, LesinnModel::build(&data, 50, 8, 11).unwrap());
        assert_ne!(model, LesinnModel::build(&data, 50, 8, 12).unwrap());
    }

    #[test]
    fn full_subsample_is_a_permutation() {
        let data = random_dataset(10, 2, 1);
        let model = LesinnModel::build(&data, 5, 10, 3).unwrap();
        for s in model.subsets() {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        }
        assert!(LesinnModel::build(&data, 5, 11, 3).is_err());
        assert!(LesinnModel::build(&data, 0, 2, 3).is_err());
    }

    #[test]
    fn query_point_in_every_subset_scores_zero() {
        let data = ds(&[&[0.0, 0.0], &[1.0, 2.0], &[3.0, 1.0]]);
        let model = LesinnModel::from_subsets(vec![vec![1, 0], vec![1, 2]], 3).unwrap();
        let x = [1.0, 2.0];
        let w = FeatureWeights::ones(2);
        assert_eq!(model.score(&data, Query::Point(&x), &w), 0.0);
        assert_eq!(model.score_gradient(&data, Query::Point(&x), &w), vec![0.0, 0.0]);
    }

    #[test]
    fn single_subset_reduces_to_distance() {
        let data = ds(&[&[0.0, 0.0], &[5.0, 5.0]]);
        let model = LesinnModel::from_subsets(vec![vec![0]], 2).unwrap();
        let x = [1.0, 2.0];
        assert_eq!(model.score(&data, Query::Point(&x), &FeatureWeights::ones(2)), 5.0);
        for w in [vec![1.0, 1.0], vec![0.3, 7.0]] {
            let w = FeatureWeights::new(w).unwrap();
            assert_eq!(model.score_gradient(&data, Query::Point(&x), &w), vec![1.0, 4.0]);
        }
    }

    #[test]
    fn two_subsets_average() {
        // distances 2 and 4 from the origin query
        let data = ds(&[&[1.0, 1.0], &[2.0, 0.0]]);
        let model = LesinnModel::from_subsets(vec![vec![0], vec![1]], 2).unwrap();
        let x = [0.0, 0.0];
        assert_eq!(model.score(&data, Query::Point(&x), &FeatureWeights::ones(2)), 3.0);
    }

    #[test]
    fn own_row_is_excluded() {
        let data = ds(&[&[0.0], &[1.0], &[3.0]]);
        let model = LesinnModel::from_subsets(vec![vec![0, 1], vec![0, 2], vec![0]], 3).unwrap();
        let w = FeatureWeights::ones(1);
        // object 0: nearest others are 1 (d=1) and 2 (d=9); the third subset is only itself
        assert_eq!(model.score(&data, Query::Object(0), &w), 5.0);
        // object 1 sees 0 in every subset
        assert_eq!(model.score(&data, Query::Object(1), &w), 1.0);
        let all = model.score_all(&data, &w);
        assert_eq!(all, vec![5.0, 1.0, 22.0 / 3.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let data = ds(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let model = LesinnModel::from_subsets(vec![vec![2, 1]], 3).unwrap();
        let g = model.score_gradient(&data, Query::Object(0), &FeatureWeights::ones(2));
        assert_eq!(g, vec![1.0, 0.0]);
    }

    #[test]
    fn single_feature_subset() {
        let data = random_dataset(30, 4, 9);
        let model = LesinnModel::build(&data, 6, 5, 2).unwrap();
        let x = [0.2, 0.9, 0.4, 0.1];
        let got = model.score_subset(&data, Query::Point(&x), &[2]).unwrap();
        let want: f64 = model
            .subsets()
            .iter()
            .map(|s| {
                s.iter()
                    .map(|&y| (x[2] - data.value(y, 2)).powi(2))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / 6.0;
        assert_relative_eq!(got, want, epsilon = 1e-15);
        assert!(model.score_subset(&data, Query::Point(&x), &[]).is_err());
    }

    #[test]
    fn full_subset_equals_unweighted() {
        let data = random_dataset(40, 5, 4);
        let model = LesinnModel::build(&data, 10, 8, 5).unwrap();
        for i in 0..data.n() {
            assert_eq!(
                model.score_subset(&data, Query::Object(i), &[0, 1, 2, 3, 4]).unwrap(),
                model.score(&data, Query::Object(i), &FeatureWeights::ones(5))
            );
        }
    }

    #[test]
    fn bulk_scores_match_single_scores_exactly() {
        let data = random_dataset(60, 11, 8);
        let model = LesinnModel::build(&data, 9, 6, 1).unwrap();
        let scorer = LesinnScorer::new(&model, &data);
        let objects: Vec<usize> = (0..data.n()).rev().collect();
        for w in [
            FeatureWeights::ones(11),
            FeatureWeights::new(vec![0.5, 1.0, 2.0, 0.3, 0.7, 1.1, 1.5, 0.2, 0.9, 3.0, 0.1]).unwrap(),
            FeatureWeights::new(vec![0.5, 0.0, 2.0, 0.0, 0.0, 0.0, 1.5, 0.2, 0.9, 0.0, 0.0]).unwrap(),
            FeatureWeights::zeros(11),
        ] {
            let bulk = scorer.score_all(&w);
            let mut grads = vec![0.0; objects.len() * 11];
            let batched = scorer.score_objects_with_gradient(&objects, &w, &mut grads);
            for (a, &i) in objects.iter().enumerate() {
                let mut g = vec![0.0; 11];
                let single = scorer.score_object_with_gradient(i, &w, &mut g);
                assert_eq!(single, scorer.score_object(i, &w));
                assert_eq!(bulk[i], single);
                assert_eq!(batched[a], single);
                assert_eq!(&grads[a * 11..(a + 1) * 11], &g[..]);
            }
        }
    }

    #[test]
    fn linear_in_w_with_one_neighbour() {
        let data = ds(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let model = LesinnModel::from_subsets(vec![vec![0]], 2).unwrap();
        let x = [1.0, 3.0];
        let s = |w: Vec<f64>| model.score(&data, Query::Point(&x), &FeatureWeights::new(w).unwrap());
        assert_eq!(s(vec![2.0, 3.0]), 2.0 * s(vec![1.0, 0.0]) + 3.0 * s(vec![0.0, 1.0]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn subset_score_matches_indicator(seed in any::<u64>(), mask in 1u32..(1 << 6)) {
                let data = random_dataset(25, 6, seed);
                let model = LesinnModel::build(&data, 4, 5, seed ^ 1).unwrap();
                let features: Vec<usize> = (0..6).filter(|k| mask & (1 << k) != 0).collect();
                let w = FeatureWeights::indicator(6, &features).unwrap();
                for i in 0..data.n() {
                    prop_assert_eq!(
                        model.score_subset(&data, Query::Object(i), &features).unwrap(),
                        model.score(&data, Query::Object(i), &w)
                    );
                }
            }

            #[test]
            fn score_monotone_in_each_weight(seed in any::<u64>(), k in 0usize..5, bump in 0.0f64..3.0) {
                let data = random_dataset(20, 5, seed);
                let model = LesinnModel::build(&data, 3, 4, seed).unwrap();
                let base = vec![0.7, 1.0, 0.2, 1.3, 0.5];
                let mut up = base.clone();
                up[k] += bump;
                let (base, up) = (FeatureWeights::new(base).unwrap(), FeatureWeights::new(up).unwrap());
                for i in 0..data.n() {
                    prop_assert!(model.score(&data, Query::Object(i), &up) >= model.score(&data, Query::Object(i), &base));
                }
            }

            #[test]
            fn gradient_matches_finite_differences(seed in any::<u64>()) {
                use rand::Rng;
                let data = random_dataset(30, 4, seed);
                let model = LesinnModel::build(&data, 5, 6, seed.wrapping_add(1)).unwrap();
                let mut rng = seed::rng(seed ^ 0xabc);
                let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..2.0)).collect();
                let i = rng.random_range(0..30);
                let h = 1e-6;
                let wv = FeatureWeights::new(w.clone()).unwrap();
                let analytic = model.score_gradient(&data, Query::Object(i), &wv);
                let assign = |w: &[f64]| -> Vec<Option<usize>> {
                    let w = FeatureWeights::new(w.to_vec()).unwrap();
                    let support = Support::of(w.as_slice());
                    model.nearest(&data, data.row(i), Some(i), w.as_slice(), &support).map(|b| b.map(|(y, _)| y)).collect()
                };
                let base_assign = assign(&w);
                for k in 0..4 {
                    let mut plus = w.clone();
                    plus[k] += h;
                    let mut minus = w.clone();
                    minus[k] -= h;
                    prop_assume!(assign(&plus) == base_assign && assign(&minus) == base_assign);
                    let fd = (model.score(&data, Query::Object(i), &FeatureWeights::new(plus).unwrap())
                        - model.score(&data, Query::Object(i), &FeatureWeights::new(minus).unwrap())) / (2.0 * h);
                    let denom = analytic[k].abs().max(1e-8);
                    prop_assert!((fd - analytic[k]).abs() / denom <= 1e-5, "k={} fd={} an={}", k, fd, analytic[k]);
                }
            }
        }
    }
}
