//! Training and evaluation harness: stratified splits, minibatch
//! training with best-validation checkpoint selection, the multi-seed
//! protocol with Welch t-tests, and the ablation matrix.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::autodiff::{softmax_cross_entropy, AutodiffError, ParamStore, Tensor};
use crate::dataio::Corpus;
use crate::features::FeatureKind;
use crate::model::{
    backward_graph, classify_forward, forward_graph, init_params, EncoderKind, GraphBatch,
    GraphInstance, ModelError, ModelSpec,
};

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("need at least 10 graphs, got {0}")]
    TooFewGraphs(usize),
    #[error("class {0} absent; cannot stratify")]
    MissingClass(usize),
    #[error("corpus has no {0:?} feature table")]
    MissingFeatures(&'static str),
    #[error("training diverged at epoch {epoch} (last finite loss {last_loss})")]
    Diverged { epoch: usize, last_loss: f64 },
    #[error("evaluation on an empty graph set")]
    EmptyEvaluation,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Optimization and protocol hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seeds: Vec<u64>,
    pub use_sgd: bool,
    /// Worker threads for the per-graph passes inside one batch.
    pub jobs: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr: 0.01,
            weight_decay: 0.001,
            max_epochs: 100,
            patience: 10,
            seeds: vec![0, 1, 2, 3, 4],
            use_sgd: false,
            jobs: 1,
        }
    }
}

/// Which information the model variant is allowed to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    /// Replace preference features with profile features.
    pub drop_endogenous: bool,
    /// Delete all edges before message passing.
    pub drop_exogenous: bool,
    pub fuse_news: bool,
}

impl AblationSpec {
    pub const FULL: Self = Self {
        drop_endogenous: false,
        drop_exogenous: false,
        fuse_news: false,
    };

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Self::FULL),
            "-end" => Some(Self {
                drop_endogenous: true,
                ..Self::FULL
            }),
            "-exo" => Some(Self {
                drop_exogenous: true,
                ..Self::FULL
            }),
            "-end-exo" => Some(Self {
                drop_endogenous: true,
                drop_exogenous: true,
                ..Self::FULL
            }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.drop_endogenous, self.drop_exogenous) {
            (false, false) => "full",
            (true, false) => "-end",
            (false, true) => "-exo",
            (true, true) => "-end-exo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified, seeded 20/10/70 split. Global split sizes are
/// floor(0.2 n) and floor(0.1 n) with the remainder going to test;
/// per-class allocation uses largest remainders.
pub fn split_dataset(labels: &[usize], seed: u64) -> Result<Split> {
    let n = labels.len();
    if n < 10 {
        return Err(TrainError::TooFewGraphs(n));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l.min(1)].push(i);
    }
    for (c, ids) in by_class.iter().enumerate() {
        if ids.is_empty() {
            return Err(TrainError::MissingClass(c));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for ids in &mut by_class {
        ids.shuffle(&mut rng);
    }

    let n_train = (0.2 * n as f64).floor() as usize;
    let n_val = (0.1 * n as f64).floor() as usize;
    let train_alloc = largest_remainder(&by_class, n_train, 0.2);
    let val_alloc = largest_remainder(&by_class, n_val, 0.1);

    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, ids) in by_class.iter().enumerate() {
        let (t, v) = (train_alloc[c], val_alloc[c]);
        split.train.extend(&ids[..t]);
        split.val.extend(&ids[t..t + v]);
        split.test.extend(&ids[t + v..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

fn largest_remainder(by_class: &[Vec<usize>; 2], total: usize, frac: f64) -> [usize; 2] {
    let mut alloc = [0usize; 2];
    let mut rem = [0.0f64; 2];
    let mut used = 0;
    for c in 0..2 {
        let exact = frac * by_class[c].len() as f64;
        alloc[c] = exact.floor() as usize;
        rem[c] = exact - exact.floor();
        used += alloc[c];
    }
    let mut order = [0usize, 1];
    if rem[1] > rem[0] {
        order = [1, 0];
    }
    let mut left = total.saturating_sub(used);
    for &c in &order {
        if left == 0 {
            break;
        }
        if alloc[c] < by_class[c].len() {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub f1: f64,
}

/// Accuracy and binary F1 with fake (label 1) as the positive class.
pub fn metrics_from_predictions(pred: &[usize], truth: &[usize]) -> Result<Metrics> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(TrainError::EmptyEvaluation);
    }
    let mut correct = 0usize;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            correct += 1;
        }
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let acc = correct as f64 / pred.len() as f64;
    let f1 = if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(Metrics { acc, f1 })
}

/// Build model inputs for one variant: pick the feature table and
/// optionally delete edges.
pub fn build_instances(
    corpus: &Corpus,
    kind: FeatureKind,
    drop_exogenous: bool,
) -> Result<Vec<GraphInstance>> {
    if !corpus.features.contains_key(&kind) {
        return Err(TrainError::MissingFeatures(kind.name()));
    }
    Ok(corpus
        .graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let features = corpus
                .graph_features(kind, i)
                .expect("feature table present");
            let adjacency = if drop_exogenous {
                vec![Vec::new(); g.node_count()]
            } else {
                g.adjacency()
            };
            GraphInstance {
                adjacency,
                features,
                label: g.label as usize,
            }
        })
        .collect())
}

/// Predict with the current parameters and score a subset of instances.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ParamStore,
    instances: &[GraphInstance],
    indices: &[usize],
) -> Result<Metrics> {
    if indices.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    let batch = GraphBatch {
        graphs: indices.iter().map(|&i| instances[i].clone()).collect(),
    };
    let (logits, _) = classify_forward(&batch, spec, params)?;
    let pred: Vec<usize> = (0..logits.rows())
        .map(|i| usize::from(logits.at(i, 1) > logits.at(i, 0)))
        .collect();
    let truth: Vec<usize> = indices.iter().map(|&i| instances[i].label).collect();
    metrics_from_predictions(&pred, &truth)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

/// Outcome of one seeded training run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ParamStore,
    pub best_val_acc: f64,
    pub test_metrics: Metrics,
    pub epochs_run: usize,
}

fn epoch_shuffle_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(epoch as u64)
}

/// Run one seeded training job: minibatch updates, best-validation
/// checkpoint selection, test metrics from that checkpoint.
pub fn train_model(
    instances: &[GraphInstance],
    split: &Split,
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainedModel> {
    let mut params = init_params(model_spec, seed);
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_snapshot = params.snapshot();
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;
    let mut last_loss = f64::NAN;

    let pool = (train_spec.jobs > 1).then(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(train_spec.jobs)
            .build()
            .expect("thread pool")
    });

    for epoch in 0..train_spec.max_epochs {
        epochs_run = epoch + 1;
        let mut order = split.train.clone();
        let mut rng = ChaCha20Rng::seed_from_u64(epoch_shuffle_seed(seed, epoch));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(train_spec.batch_size) {
            let loss = train_batch(instances, chunk, model_spec, train_spec, &mut params, &pool)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    last_loss,
                });
            }
            last_loss = loss;
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches.max(1) as f64;

        let val = evaluate(model_spec, &params, instances, &split.val)?;
        on_epoch(&EpochLog {
            epoch,
            train_loss,
            val_acc: val.acc,
        });

        if val.acc > best_val_acc {
            best_val_acc = val.acc;
            best_snapshot = params.snapshot();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= train_spec.patience {
                break;
            }
        }
    }

    params.restore(&best_snapshot)?;
    let test_metrics = evaluate(model_spec, &params, instances, &split.test)?;
    Ok(TrainedModel {
        spec: model_spec.clone(),
        params,
        best_val_acc,
        test_metrics,
        epochs_run,
    })
}

/// One minibatch: forward all graphs, compute the loss gradient, push
/// per-graph gradients back, apply the optimizer step. Per-graph passes
/// may run in parallel; gradient accumulation is a fixed-order fold.
fn train_batch(
    instances: &[GraphInstance],
    ids: &[usize],
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
    params: &mut ParamStore,
    pool: &Option<rayon::ThreadPool>,
) -> Result<f64> {
    let params_ref: &ParamStore = params;
    let forward_results: Vec<crate::model::Result<(Vec<f64>, crate::model::GraphCache)>> =
        match pool {
            Some(p) => p.install(|| {
                ids.par_iter()
                    .map(|&i| forward_graph(&instances[i], model_spec, params_ref))
                    .collect()
            }),
            None => ids
                .iter()
                .map(|&i| forward_graph(&instances[i], model_spec, params_ref))
                .collect(),
        };
    let forwards = forward_results
        .into_iter()
        .collect::<crate::model::Result<Vec<_>>>()?;

    let mut logits = Tensor::zeros(vec![ids.len(), 2]);
    for (i, (row, _)) in forwards.iter().enumerate() {
        logits.row_mut(i).copy_from_slice(row);
    }
    let labels: Vec<usize> = ids.iter().map(|&i| instances[i].label).collect();
    let (loss, grad_logits) = softmax_cross_entropy(&logits, &labels)?;

    let job = |k: usize| {
        let i = ids[k];
        backward_graph(
            &instances[i],
            &forwards[k].1,
            grad_logits.row(k),
            model_spec,
            params_ref,
        )
    };
    let backward_results: Vec<crate::model::Result<BTreeMap<String, Tensor>>> = match pool {
        Some(p) => p.install(|| (0..ids.len()).into_par_iter().map(job).collect()),
        None => (0..ids.len()).map(job).collect(),
    };
    let grads = backward_results
        .into_iter()
        .collect::<crate::model::Result<Vec<_>>>()?;

    // Index-ordered reduction keeps accumulation bitwise deterministic.
    let mut total: BTreeMap<String, Tensor> = BTreeMap::new();
    for per_graph in grads {
        for (name, grad) in per_graph {
            match total.get_mut(&name) {
                Some(acc) => acc.add_assign(&grad)?,
                None => {
                    total.insert(name, grad);
                }
            }
        }
    }
    for (name, grad) in &total {
        params.accumulate_grad(name, grad)?;
    }
    // Bias terms and other never-touched parameters still need a step.
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        if !total.contains_key(&name) {
            let zero = Tensor::zeros(params.value(&name)?.shape().to_vec());
            params.accumulate_grad(&name, &zero)?;
        }
    }
    if train_spec.use_sgd {
        params.sgd_step(train_spec.lr, train_spec.weight_decay)?;
    } else {
        params.adam_step(train_spec.lr, train_spec.weight_decay)?;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub acc: f64,
    pub f1: f64,
}

/// Aggregated multi-seed report, the unit of all emitted results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    pub encoder: String,
    pub features: String,
    pub ablation: String,
    pub per_seed: Vec<SeedResult>,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    /// Two-sided Welch t-test p-value of the accuracy series against a
    /// baseline report, when one was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value_vs_baseline: Option<f64>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Welch two-sample t-test, two-sided. Returns (t, dof, p). Degenerate
/// zero-variance inputs yield p = 1 when the means agree, else p = 0.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    if va + vb == 0.0 {
        return if ma == mb {
            (0.0, f64::NAN, 1.0)
        } else {
            (f64::INFINITY, f64::NAN, 0.0)
        };
    }
    let t = (ma - mb) / (va + vb).sqrt();
    let dof = (va + vb).powi(2)
        / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, dof, p)
}

/// Train once per seed, aggregate, and optionally compare accuracies
/// against a baseline report.
#[allow(clippy::too_many_arguments)]
pub fn run_protocol(
    corpus: &Corpus,
    encoder: EncoderKind,
    features: FeatureKind,
    ablation: &AblationSpec,
    train_spec: &TrainSpec,
    baseline: Option<&RunReport>,
    name: &str,
    mut on_epoch: impl FnMut(u64, &EpochLog),
) -> Result<RunReport> {
    let kind = if ablation.drop_endogenous {
        FeatureKind::Profile
    } else {
        features
    };
    let instances = build_instances(corpus, kind, ablation.drop_exogenous)?;
    let input_dim = corpus.features[&kind].dimension;
    let model_spec = ModelSpec::new(encoder, input_dim, ablation.fuse_news);

    let mut per_seed = Vec::with_capacity(train_spec.seeds.len());
    for &seed in &train_spec.seeds {
        let split = split_dataset(&corpus.labels(), seed)?;
        let trained = train_model(&instances, &split, &model_spec, train_spec, seed, |log| {
            on_epoch(seed, log)
        })?;
        per_seed.push(SeedResult {
            seed,
            acc: trained.test_metrics.acc,
            f1: trained.test_metrics.f1,
        });
    }

    let accs: Vec<f64> = per_seed.iter().map(|r| r.acc).collect();
    let f1s: Vec<f64> = per_seed.iter().map(|r| r.f1).collect();
    let (mean_acc, std_acc) = mean_std(&accs);
    let (mean_f1, std_f1) = mean_std(&f1s);
    let p_value_vs_baseline = baseline.map(|base| {
        let base_accs: Vec<f64> = base.per_seed.iter().map(|r| r.acc).collect();
        welch_t_test(&accs, &base_accs).2
    });

    Ok(RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        name: name.to_string(),
        encoder: encoder.name().to_string(),
        features: kind.name().to_string(),
        ablation: ablation.name().to_string(),
        per_seed,
        mean_acc,
        std_acc,
        mean_f1,
        std_f1,
        p_value_vs_baseline,
    })
}

/// The four framework variants (news fusion off throughout) plus the
/// encoder-by-feature grid.
pub fn ablation_matrix(
    corpus: &Corpus,
    train_spec: &TrainSpec,
    mut on_epoch: impl FnMut(&str, u64, &EpochLog),
) -> Result<Vec<RunReport>> {
    let mut reports = Vec::new();
    for variant in ["full", "-end", "-exo", "-end-exo"] {
        let ablation = AblationSpec::parse(variant).unwrap();
        let name = format!("variant:{variant}");
        let report = run_protocol(
            corpus,
            EncoderKind::Gcn,
            FeatureKind::WordVec,
            &ablation,
            train_spec,
            None,
            &name,
            |seed, log| on_epoch(&name, seed, log),
        )?;
        reports.push(report);
    }
    for encoder in [EncoderKind::Sage, EncoderKind::Gcn] {
        for kind in [FeatureKind::Profile, FeatureKind::WordVec, FeatureKind::External] {
            if !corpus.features.contains_key(&kind) {
                continue;
            }
            let name = format!("grid:{}:{}", encoder.name(), kind.name());
            let report = run_protocol(
                corpus,
                encoder,
                kind,
                &AblationSpec::FULL,
                train_spec,
                None,
                &name,
                |seed, log| on_epoch(&name, seed, log),
            )?;
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Fixed-width text rendering of a set of reports, one row per variant.
pub fn render_report_table(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:<8} {:<9} {:<9} {:>8} {:>8} {:>8} {:>8}\n",
        "name", "encoder", "features", "ablation", "acc", "acc_std", "f1", "f1_std"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<28} {:<8} {:<9} {:<9} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            r.name, r.encoder, r.features, r.ablation, r.mean_acc, r.std_acc, r.mean_f1, r.std_f1
        ));
    }
    out
}
