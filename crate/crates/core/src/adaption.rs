//! Few-shot adaption of a trained network to unseen classes.
//!
//! Adaption never sees the exemplar memory: it takes a [`BaseModel`], which
//! carries parameters and the learned class list only.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::baseline::BaselineState;
use crate::error::{Error, Result};
use crate::numkernel::{
    accuracy, loss_and_gradient, sgd_step_in_place, Batch, LossConfig, NetworkSpec, ParamVector,
    Segment, SegmentSet,
};
use crate::seed;

/// Default number of test samples per episode.
pub const DEFAULT_TEST_SIZE: usize = 100;

/// One N-way K-shot problem. Labels in `train` and `test` are remapped so
/// that `source_classes[j]` becomes `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    pub train: Batch,
    pub test: Batch,
    pub source_classes: Vec<usize>,
    /// Seeds the fresh head; drawn with the episode so results do not depend on episode order.
    pub head_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub adapt_steps: usize,
    pub adapt_lr: f64,
    pub head_seed: u64,
    pub loss: LossConfig,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            adapt_steps: 10,
            adapt_lr: 0.1,
            head_seed: 0,
            loss: LossConfig::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.adapt_steps == 0 {
            return Err(Error::Config("adapt_steps must be positive".into()));
        }
        if !(self.adapt_lr > 0.0 && self.adapt_lr.is_finite()) {
            return Err(Error::Config(format!(
                "adapt_lr must be positive, got {}",
                self.adapt_lr
            )));
        }
        self.loss.validate()
    }
}

/// The parts of a trained model that adaption may read.
#[derive(Debug, Clone, Copy)]
pub struct BaseModel<'a> {
    pub spec: &'a NetworkSpec,
    pub params: &'a ParamVector,
    pub learned_classes: &'a [usize],
}

impl<'a> BaseModel<'a> {
    pub fn new(
        spec: &'a NetworkSpec,
        params: &'a ParamVector,
        learned_classes: &'a [usize],
    ) -> Self {
        Self {
            spec,
            params,
            learned_classes,
        }
    }

    /// A view of `state` without its memory. `classes` must outlive the view.
    pub fn of(state: &'a BaselineState, classes: &'a [usize]) -> Self {
        Self::new(&state.spec, &state.params, classes)
    }
}

/// Samples `n_episodes` episodes from `held_out`, whose labels are global class ids.
///
/// Each episode picks `n_way` classes, `k_shot` training samples per class
/// and up to `test_size` disjoint test samples spread evenly over the
/// classes.
pub fn make_episodes(
    held_out: &Batch,
    n_way: usize,
    k_shot: usize,
    n_episodes: usize,
    test_size: usize,
    seed_value: u64,
) -> Result<Vec<Episode>> {
    if n_way < 2 || k_shot == 0 || test_size == 0 {
        return Err(Error::Config(format!(
            "need n_way >= 2, k_shot >= 1 and test_size >= 1, got {n_way}, {k_shot}, {test_size}"
        )));
    }
    if n_episodes == 0 {
        return Err(Error::Config("at least one episode is required".into()));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in held_out.labels().iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < n_way {
        return Err(Error::Config(format!(
            "{} held-out classes, {n_way} needed",
            by_class.len()
        )));
    }
    if let Some((c, rows)) = by_class.iter().find(|(_, rows)| rows.len() <= k_shot) {
        return Err(Error::Config(format!(
            "class {c} has {} samples, {k_shot}-shot episodes need more",
            rows.len()
        )));
    }

    let all_classes: Vec<usize> = by_class.keys().copied().collect();
    let mut rng = seed::rng(seed_value);
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let mut classes = all_classes.clone();
        classes.shuffle(&mut rng);
        classes.truncate(n_way);
        classes.sort_unstable();

        let mut train_rows = Vec::with_capacity(n_way * k_shot);
        let mut train_labels = Vec::with_capacity(n_way * k_shot);
        let mut test_rows = Vec::new();
        let mut test_labels = Vec::new();
        for (j, &c) in classes.iter().enumerate() {
            let mut rows = by_class[&c].clone();
            rows.shuffle(&mut rng);
            let share = test_size / n_way + usize::from(j < test_size % n_way);
            let take_test = share.min(rows.len() - k_shot);
            train_rows.extend_from_slice(&rows[..k_shot]);
            train_labels.extend(core::iter::repeat_n(j, k_shot));
            test_rows.extend_from_slice(&rows[k_shot..k_shot + take_test]);
            test_labels.extend(core::iter::repeat_n(j, take_test));
        }
        episodes.push(Episode {
            n_way,
            k_shot,
            train: Batch::new(held_out.inputs().select_rows(&train_rows), train_labels)?,
            test: Batch::new(held_out.inputs().select_rows(&test_rows), test_labels)?,
            source_classes: classes,
            head_seed: rng.random(),
        });
    }
    Ok(episodes)
}

/// Network shape used for `episode`: the base body with an `n_way` head.
pub fn episode_spec(base: &NetworkSpec, episode: &Episode) -> Result<NetworkSpec> {
    base.with_output_dim(episode.n_way)
}

/// Copies the extractor of `base`, attaches a fresh classifier sized for the
/// episode and runs `adapt_steps` full-batch SGD steps on every layer.
pub fn adapt(base: BaseModel<'_>, episode: &Episode, cfg: &AdaptConfig) -> Result<ParamVector> {
    check_episode(base, episode)?;
    base.params.check_spec(base.spec, "adapt base params")?;
    let spec = episode_spec(base.spec, episode)?;
    let mut params = ParamVector::zeros(&spec);
    params
        .segment_mut(Segment::Extractor)
        .copy_from_slice(base.params.segment(Segment::Extractor));
    let mut rng = seed::rng(seed::derive(cfg.head_seed, episode.head_seed));
    let layers = params.layout().layers().to_vec();
    for slot in layers.iter().filter(|s| s.segment == Segment::Classifier) {
        params.init_layer(slot, &mut rng);
    }
    for _ in 0..cfg.adapt_steps {
        let (_, grad) =
            loss_and_gradient(&spec, &params, &episode.train, &cfg.loss, SegmentSet::NONE)?;
        sgd_step_in_place(&mut params, &grad, cfg.adapt_lr)?;
    }
    Ok(params)
}

fn check_episode(base: BaseModel<'_>, episode: &Episode) -> Result<()> {
    if episode.source_classes.len() != episode.n_way {
        return Err(Error::Contract(
            "episode class list does not match n_way".into(),
        ));
    }
    if let Some(c) = episode
        .source_classes
        .iter()
        .find(|c| base.learned_classes.contains(c))
    {
        return Err(Error::Contract(format!(
            "episode class {c} was learned by the base model"
        )));
    }
    if episode.train.dim() != base.spec.input_dim() {
        return Err(Error::Shape {
            context: "episode input dim",
            expected: base.spec.input_dim(),
            actual: episode.train.dim(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTestResult {
    pub mean: f64,
    /// Accuracy of each episode, in input order.
    pub per_episode: Vec<f64>,
}

/// Adapts to each episode independently and scores its test batch.
pub fn meta_test(
    base: BaseModel<'_>,
    episodes: &[Episode],
    cfg: &AdaptConfig,
) -> Result<MetaTestResult> {
    if episodes.is_empty() {
        return Err(Error::Config("at least one episode is required".into()));
    }
    let per_episode = episodes
        .iter()
        .map(|ep| {
            let params = adapt(base, ep, cfg)?;
            accuracy(&episode_spec(base.spec, ep)?, &params, &ep.test)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_episode.iter().sum::<f64>() / per_episode.len() as f64;
    Ok(MetaTestResult { mean, per_episode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{loss, Matrix};
    use crate::taskstream::{make_synthetic, SyntheticConfig};

    fn held_out() -> Batch {
        let cfg = SyntheticConfig {
            n_tasks: 2,
            k_per_task: 2,
            dim: 8,
            n_per_class: 40,
            spread: 0.05,
            seed: 3,
        };
        let tasks = make_synthetic(&cfg).unwrap();
        Batch::concat(tasks.iter().map(|t| &t.train)).unwrap()
    }

    fn nearest_centroid_accuracy(episode: &Episode) -> f64 {
        let dim = episode.train.dim();
        let mut centroids = Matrix::zeros(episode.n_way, dim);
        let mut counts = alloc::vec![0usize; episode.n_way];
        for (row, &l) in episode
            .train
            .inputs()
            .iter_rows()
            .zip(episode.train.labels())
        {
            for (c, &x) in centroids.row_mut(l).iter_mut().zip(row) {
                *c += x;
            }
            counts[l] += 1;
        }
        for (j, &n) in counts.iter().enumerate() {
            for c in centroids.row_mut(j) {
                *c /= n as f64;
            }
        }
        let hits = episode
            .test
            .inputs()
            .iter_rows()
            .zip(episode.test.labels())
            .filter(|(row, &l)| {
                let dist = |j: usize| -> f64 {
                    centroids
                        .row(j)
                        .iter()
                        .zip(row.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                };
                (0..episode.n_way).min_by(|&a, &b| dist(a).total_cmp(&dist(b))) == Some(l)
            })
            .count();
        hits as f64 / episode.test.len() as f64
    }

    fn spec() -> NetworkSpec {
        NetworkSpec::mlp(8, alloc::vec![16], 4).unwrap()
    }

    #[test]
    fn episode_shapes() {
        let eps = make_episodes(&held_out(), 2, 1, 5, 100, 1).unwrap();
        assert_eq!(eps.len(), 5);
        for ep in &eps {
            assert_eq!(ep.train.len(), 2);
            assert_eq!(ep.train.labels(), &[0, 1]);
            assert_eq!(ep.test.len(), 62);
            assert!(ep.source_classes.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(eps, make_episodes(&held_out(), 2, 1, 5, 100, 1).unwrap());
        let small = make_episodes(&held_out(), 3, 2, 1, 10, 0).unwrap();
        assert_eq!(small[0].test.len(), 10);
    }

    #[test]
    fn episode_errors() {
        let h = held_out();
        assert!(matches!(
            make_episodes(&h, 5, 1, 1, 10, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            make_episodes(&h, 2, 32, 1, 10, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            make_episodes(&h, 2, 1, 0, 10, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_steps_copies_extractor() {
        let spec = spec();
        let params = ParamVector::init(&spec, 5);
        let ep = &make_episodes(&held_out(), 2, 1, 1, 10, 2).unwrap()[0];
        let cfg = AdaptConfig {
            adapt_steps: 0,
            ..Default::default()
        };
        let before = params.clone();
        let a = adapt(BaseModel::new(&spec, &params, &[]), ep, &cfg).unwrap();
        assert!(params.bit_eq(&before));
        let same_bits =
            |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same_bits(
            a.segment(Segment::Extractor),
            params.segment(Segment::Extractor)
        ));
        assert_eq!(a.spec().output_dim(), 2);
        assert!(a.segment(Segment::Classifier).iter().any(|&w| w != 0.0));
    }

    #[test]
    fn adaption_lowers_train_loss() {
        let spec = spec();
        let params = ParamVector::init(&spec, 5);
        let ep = &make_episodes(&held_out(), 2, 3, 1, 10, 2).unwrap()[0];
        let base = BaseModel::new(&spec, &params, &[]);
        let cfg = AdaptConfig {
            adapt_lr: 0.1,
            ..Default::default()
        };
        let start = adapt(
            base,
            ep,
            &AdaptConfig {
                adapt_steps: 0,
                ..cfg.clone()
            },
        )
        .unwrap();
        let end = adapt(base, ep, &cfg).unwrap();
        let espec = episode_spec(&spec, ep).unwrap();
        let l0 = loss(&espec, &start, &ep.train, &cfg.loss).unwrap();
        let l1 = loss(&espec, &end, &ep.train, &cfg.loss).unwrap();
        assert!(l1 <= l0, "{l1} > {l0}");
    }

    #[test]
    fn learned_class_overlap_is_rejected() {
        let spec = spec();
        let params = ParamVector::init(&spec, 5);
        let ep = &make_episodes(&held_out(), 2, 1, 1, 10, 2).unwrap()[0];
        let learned = [ep.source_classes[0]];
        let r = adapt(
            BaseModel::new(&spec, &params, &learned),
            ep,
            &AdaptConfig::default(),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn meta_test_order_independent() {
        let spec = spec();
        let params = ParamVector::init(&spec, 5);
        let eps = make_episodes(&held_out(), 2, 2, 4, 20, 8).unwrap();
        let base = BaseModel::new(&spec, &params, &[]);
        let cfg = AdaptConfig::default();
        let fwd = meta_test(base, &eps, &cfg).unwrap();
        let rev: Vec<Episode> = eps.iter().rev().cloned().collect();
        let mut back = meta_test(base, &rev, &cfg).unwrap().per_episode;
        back.reverse();
        assert_eq!(fwd.per_episode, back);
        let one = meta_test(base, &eps[..1], &cfg).unwrap();
        assert_eq!(one.mean, one.per_episode[0]);
        assert!(meta_test(base, &[], &cfg).is_err());
    }

    #[test]
    fn centroid_oracle_separates_synthetic() {
        let eps = make_episodes(&held_out(), 2, 5, 3, 40, 1).unwrap();
        assert!(eps.iter().all(|e| nearest_centroid_accuracy(e) == 1.0));
    }
}
