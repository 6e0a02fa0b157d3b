//! Isolation Forest.
//!
//! Each tree is grown on a subsample of ψ rows drawn without replacement.
//! Internal nodes split on a randomly chosen dimension at a value drawn
//! uniformly between the node's min and max on that dimension. Growth stops
//! at `ceil(log2 ψ)`, at a single point, or when every remaining point is
//! identical. The anomaly score is `2^(-E[h(x)] / c(ψ))`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureMeta, FeatureVector};

pub const MODEL_FORMAT: &str = "wingbeat-iforest";
pub const MODEL_VERSION: u32 = 1;

const EULER_GAMMA: f64 = 0.5772156649;

/// Average path length of an unsuccessful BST search over `n` points.
pub fn c(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

/// Score for a mean path length under normalization constant `c_psi`.
/// A zero constant (ψ ≤ 1) carries no information and scores 0.5.
pub fn score_from_mean_path(mean_path: f64, c_psi: f64) -> f64 {
    if c_psi <= 0.0 {
        0.5
    } else {
        2f64.powf(-mean_path / c_psi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
    /// Expected outlier fraction. Recorded only; scores are never
    /// re-thresholded by it.
    pub contamination: f64,
}

impl Default for IForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: 256,
            seed: 42,
            contamination: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        split_dimension: usize,
        split_value: f64,
        left: usize,
        right: usize,
    },
    External {
        size: usize,
    },
}

/// Arena-allocated tree; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    dim: usize,
    nodes: Vec<Node>,
}

impl IsolationTree {
    /// Builds a tree from explicit nodes, checking that child links are in range.
    pub fn from_nodes(dim: usize, nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree has no nodes".into()));
        }
        for node in &nodes {
            if let Node::Internal {
                split_dimension,
                left,
                right,
                ..
            } = *node
            {
                if split_dimension >= dim || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::InvalidInput("tree node out of range".into()));
                }
            }
        }
        Ok(Self { dim, nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn height(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::External { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Depth of the external node reached by `x`, plus `c(size)` for the
    /// points that were never separated there.
    pub fn path_length(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self.path_length_unchecked(x))
    }

    fn path_length_unchecked(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[i] {
                Node::External { size } => return depth as f64 + c(size),
                Node::Internal {
                    split_dimension,
                    split_value,
                    left,
                    right,
                } => {
                    i = if x[split_dimension] < split_value {
                        left
                    } else {
                        right
                    };
                    depth += 1;
                }
            }
        }
    }

    fn grow(
        data: &[&[f64]],
        sample: &mut [usize],
        height_limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let dim = data[0].len();
        let mut tree = Self {
            dim,
            nodes: Vec::new(),
        };
        tree.grow_node(data, sample, 0, height_limit, rng);
        tree
    }

    fn grow_node(
        &mut self,
        data: &[&[f64]],
        idx: &mut [usize],
        depth: usize,
        height_limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::External { size: idx.len() });
        if depth >= height_limit || idx.len() <= 1 {
            return id;
        }

        let mut candidates = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for d in 0..self.dim {
            let (lo, hi) = idx
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(data[r][d]), hi.max(data[r][d]))
                });
            if lo < hi {
                candidates.push((d, lo, hi));
            }
        }
        if candidates.is_empty() {
            return id;
        }
        let (split_dimension, lo, hi) = candidates[rng.gen_range(0..candidates.len())];
        let split_value = loop {
            let v = rng.gen_range(lo..hi);
            if v > lo {
                break v;
            }
        };

        // partition in place: rows below the split first
        let mut mid = 0;
        for k in 0..idx.len() {
            if data[idx[k]][split_dimension] < split_value {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow_node(data, l, depth + 1, height_limit, rng);
        let right = self.grow_node(data, r, depth + 1, height_limit, rng);
        self.nodes[id] = Node::Internal {
            split_dimension,
            split_value,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    params: IForestParams,
    /// Effective ψ after clamping to the training size.
    subsample_size: usize,
    c_psi: f64,
    height_limit: usize,
    feature_meta: FeatureMeta,
    training_rows: usize,
    trees: Vec<IsolationTree>,
}

impl IsolationForest {
    pub fn fit(train: &FeatureMatrix, params: &IForestParams) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if train.dim() == 0 {
            return Err(Error::InvalidInput("feature dimension is 0".into()));
        }
        if params.n_trees == 0 || params.subsample_size == 0 {
            return Err(Error::InvalidConfig(
                "n_trees and subsample_size must be positive".into(),
            ));
        }
        if !(0.0..=0.5).contains(&params.contamination) {
            return Err(Error::InvalidConfig(
                "contamination must lie in [0, 0.5]".into(),
            ));
        }

        let data: Vec<&[f64]> = train
            .canonical_rows()
            .into_iter()
            .map(|r| r.values.as_slice())
            .collect();
        let n = data.len();
        let psi = params.subsample_size.min(n);
        let height_limit = (psi as f64).log2().ceil() as usize;

        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let mut indices: Vec<usize> = (0..n).collect();
                for i in 0..psi {
                    let j = rng.gen_range(i..n);
                    indices.swap(i, j);
                }
                IsolationTree::grow(&data, &mut indices[..psi], height_limit, &mut rng)
            })
            .collect();

        Ok(Self {
            params: params.clone(),
            subsample_size: psi,
            c_psi: c(psi),
            height_limit,
            feature_meta: train.meta.clone(),
            training_rows: n,
            trees,
        })
    }

    pub fn params(&self) -> &IForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }

    pub fn feature_meta(&self) -> &FeatureMeta {
        &self.feature_meta
    }

    pub fn training_rows(&self) -> usize {
        self.training_rows
    }

    pub fn mean_path_length(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_meta.dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_meta.dim,
                actual: x.len(),
            });
        }
        let total: f64 = self.trees.iter().map(|t| t.path_length_unchecked(x)).sum();
        Ok(total / self.trees.len() as f64)
    }

    /// Anomaly score in (0, 1); higher is more anomalous.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(score_from_mean_path(self.mean_path_length(x)?, self.c_psi))
    }

    pub fn score_vector(&self, x: &FeatureVector) -> Result<f64> {
        self.score(&x.values)
    }

    pub fn score_matrix(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        self.feature_meta.ensure_compatible(&m.meta)?;
        m.rows().iter().map(|r| self.score(&r.values)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::persist::save_model(path.as_ref(), MODEL_FORMAT, MODEL_VERSION, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::persist::load_model(path.as_ref(), MODEL_FORMAT, MODEL_VERSION)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn c_edge_cases_and_reference_values() {
        assert_eq!(c(0), 0.0);
        assert_eq!(c(1), 0.0);
        assert_eq!(c(2), 1.0);
        // 40-digit evaluations of 2(ln(n-1) + 0.5772156649) - 2(n-1)/n
        assert!((c(3) - 1.207_392_357_586_557_3).abs() < 1e-12);
        assert!((c(96) - 8.283_018_446_334_415).abs() < 1e-12);
        assert!((c(256) - 10.244_770_920_116_852).abs() < 1e-12);
    }

    #[test]
    fn single_node_tree_has_zero_path() {
        let tree = IsolationTree::from_nodes(2, vec![Node::External { size: 1 }]).unwrap();
        assert_eq!(tree.path_length(&[5.0, -3.0]).unwrap(), 0.0);
    }

    #[test]
    fn hand_built_tree_paths() {
        let tree = IsolationTree::from_nodes(
            1,
            vec![
                Node::Internal {
                    split_dimension: 0,
                    split_value: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::External { size: 1 },
                Node::Internal {
                    split_dimension: 0,
                    split_value: 0.8,
                    left: 3,
                    right: 4,
                },
                Node::External { size: 3 },
                Node::External { size: 1 },
            ],
        )
        .unwrap();
        assert_eq!(tree.path_length(&[0.2]).unwrap(), 1.0);
        assert_eq!(tree.path_length(&[0.6]).unwrap(), 2.0 + c(3));
        assert_eq!(tree.path_length(&[0.9]).unwrap(), 2.0);
        assert!(matches!(
            tree.path_length(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn score_formula_anchors() {
        assert_eq!(score_from_mean_path(c(96), c(96)), 0.5);
        assert_eq!(score_from_mean_path(c(256), c(256)), 0.5);
        assert!((score_from_mean_path(1e-12, c(256)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_training_point_scores_half() {
        let m = FeatureMatrix::from_values(vec![vec![1.0, 2.0]]).unwrap();
        let f = IsolationForest::fit(&m, &IForestParams::default()).unwrap();
        assert_eq!(f.trees().len(), 100);
        assert!(f
            .trees()
            .iter()
            .all(|t| t.nodes() == [Node::External { size: 1 }]));
        assert_eq!(f.score(&[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(f.score(&[100.0, -7.0]).unwrap(), 0.5);
    }

    fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn full_day_sized_fit() {
        let m = FeatureMatrix::from_values(gaussian(96, 512, 3)).unwrap();
        let f = IsolationForest::fit(&m, &IForestParams::default()).unwrap();
        assert_eq!(f.trees().len(), 100);
        assert_eq!(f.subsample_size(), 96);
        assert_eq!(f.c_psi(), c(96));
        assert_eq!(f.height_limit(), 7);
        assert!(f.trees().iter().all(|t| t.height() <= 7));
    }

    #[test]
    fn same_seed_same_trees() {
        let m = FeatureMatrix::from_values(gaussian(50, 4, 9)).unwrap();
        let p = IForestParams {
            seed: 5,
            ..Default::default()
        };
        assert_eq!(
            IsolationForest::fit(&m, &p).unwrap(),
            IsolationForest::fit(&m, &p).unwrap()
        );
        let q = IForestParams { seed: 6, ..p };
        assert_ne!(
            IsolationForest::fit(&m, &p).unwrap().trees(),
            IsolationForest::fit(&m, &q).unwrap().trees()
        );
    }

    #[test]
    fn duplicate_rows_terminate() {
        let m = FeatureMatrix::from_values(vec![vec![0.5, 0.5]; 40]).unwrap();
        let f = IsolationForest::fit(&m, &IForestParams::default()).unwrap();
        assert!(f.trees().iter().all(|t| t.nodes().len() == 1));
        // mean of 100 copies of c(40) is c(40) up to summation rounding
        assert!((f.score(&[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn splits_lie_strictly_inside_node_range() {
        let rows = gaussian(64, 3, 11);
        let m = FeatureMatrix::from_values(rows.clone()).unwrap();
        let f = IsolationForest::fit(
            &m,
            &IForestParams {
                n_trees: 20,
                ..Default::default()
            },
        )
        .unwrap();
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (
                    lo.min(r[0].min(r[1]).min(r[2])),
                    hi.max(r[0].max(r[1]).max(r[2])),
                )
            });
        for t in f.trees() {
            for n in t.nodes() {
                if let Node::Internal { split_value, .. } = *n {
                    assert!(split_value > lo && split_value < hi);
                }
            }
        }
    }

    #[test]
    fn planted_outlier_ranks_first() {
        let mut rows: Vec<Vec<f64>> = gaussian(100, 2, 21)
            .into_iter()
            .map(|r| r.iter().map(|v| v * 0.5).collect())
            .collect();
        rows.push(vec![10.0, 10.0]);
        let m = FeatureMatrix::from_values(rows.clone()).unwrap();
        let f = IsolationForest::fit(&m, &IForestParams::default()).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| f.score(r).unwrap()).collect();
        let best = (0..scores.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        assert_eq!(best, 100);
    }

    #[test]
    fn empty_and_zero_dim_rejected() {
        let empty = FeatureMatrix::new(FeatureMeta::external(3));
        assert!(matches!(
            IsolationForest::fit(&empty, &IForestParams::default()),
            Err(Error::EmptyTrainingSet)
        ));
        let zero_dim = FeatureMatrix::from_values(vec![vec![]]).unwrap();
        assert!(IsolationForest::fit(&zero_dim, &IForestParams::default()).is_err());
    }

    #[test]
    fn persistence_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("if.json");
        let m = FeatureMatrix::from_values(gaussian(80, 6, 4)).unwrap();
        let f = IsolationForest::fit(&m, &IForestParams::default()).unwrap();
        f.save(&path).unwrap();
        let g = IsolationForest::load(&path).unwrap();
        assert_eq!(f, g);
        for q in gaussian(20, 6, 5) {
            assert_eq!(
                f.score(&q).unwrap().to_bits(),
                g.score(&q).unwrap().to_bits()
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scores_strictly_inside_unit_interval(
            seed in 0u64..1000,
            n in 2usize..60,
            q in proptest::collection::vec(-1e6f64..1e6, 3),
        ) {
            let m = FeatureMatrix::from_values(gaussian(n, 3, seed)).unwrap();
            let f = IsolationForest::fit(&m, &IForestParams { n_trees: 10, seed, ..Default::default() }).unwrap();
            let s = f.score(&q).unwrap();
            prop_assert!(s > 0.0 && s < 1.0, "{}", s);
        }

        #[test]
        fn row_order_does_not_matter(seed in 0u64..1000, rot in 1usize..30) {
            let rows: Vec<FeatureVector> = gaussian(30, 3, seed)
                .into_iter()
                .enumerate()
                .map(|(i, values)| FeatureVector { values, chunk_index: i % 6, clip_id: format!("c{}", i / 6) })
                .collect();
            let mut shuffled = rows.clone();
            shuffled.rotate_left(rot);
            shuffled.swap(0, 7);
            let p = IForestParams { n_trees: 10, seed, ..Default::default() };
            let a = IsolationForest::fit(&FeatureMatrix::from_rows(FeatureMeta::external(3), rows).unwrap(), &p).unwrap();
            let b = IsolationForest::fit(&FeatureMatrix::from_rows(FeatureMeta::external(3), shuffled).unwrap(), &p).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn scores_do_not_decrease_moving_away_from_data() {
        let mut totals = vec![0.0; 6];
        let ladder = [0.0, 0.5, 1.0, 2.0, 5.0, 50.0];
        for seed in 0..20 {
            let rows: Vec<Vec<f64>> = gaussian(64, 1, 100 + seed);
            let top = rows.iter().map(|r| r[0]).fold(f64::NEG_INFINITY, f64::max);
            let m = FeatureMatrix::from_values(rows).unwrap();
            let f = IsolationForest::fit(
                &m,
                &IForestParams {
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            for (t, step) in totals.iter_mut().zip(ladder) {
                *t += f.score(&[top + step]).unwrap() / 20.0;
            }
        }
        for w in totals.windows(2) {
            assert!(w[1] >= w[0], "{totals:?}");
        }
    }
}
