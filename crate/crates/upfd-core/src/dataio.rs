//! Dataset container: newline-delimited JSON graph topology with sidecar
//! binary feature tables, a manifest tying them together, corpus
//! statistics, and a synthetic cascade generator with planted endogenous
//! (feature-space) and exogenous (tree-shape) class signals.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::cascade::{validate_tree, PropagationGraph};
use crate::features::{FeatureError, FeatureKind, FeatureTable};

#[derive(Error, Debug)]
pub enum DataError {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Format {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("graph {id:?} fails tree validation")]
    InvalidTree { id: String },
    #[error("feature table {kind:?} has {rows} rows but the corpus has {nodes} nodes")]
    FeatureRowMismatch {
        kind: &'static str,
        rows: usize,
        nodes: usize,
    },
    #[error("non-finite feature value in table {0:?}")]
    NonFiniteFeature(&'static str),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("invalid synthetic spec: {0}")]
    BadSyntheticSpec(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DataError + '_ {
    move |e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Manifest document stored as `manifest.json` next to the data files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Relative path of the graph container (NDJSON).
    pub graphs: String,
    /// feature kind name -> relative path of the binary table.
    pub features: BTreeMap<String, String>,
    pub counts: ManifestCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub graphs: usize,
    pub fake: usize,
    pub nodes: usize,
    pub edges: usize,
}

/// One graph line in the NDJSON container.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphLine {
    id: String,
    label: u8,
    n: usize,
    edges: Vec<(usize, usize)>,
    user_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    times: Option<Vec<i64>>,
}

/// A validated in-memory dataset: topology plus aligned feature tables.
/// Feature tables are global; graph i owns rows offsets[i]..offsets[i+1].
#[derive(Debug, Clone)]
pub struct Corpus {
    pub name: String,
    pub graphs: Vec<PropagationGraph>,
    pub offsets: Vec<usize>,
    pub features: BTreeMap<FeatureKind, FeatureTable>,
}

impl Corpus {
    pub fn total_nodes(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn total_edges(&self) -> usize {
        self.graphs.iter().map(|g| g.edges.len()).sum()
    }

    pub fn fake_count(&self) -> usize {
        self.graphs.iter().filter(|g| g.label == 1).count()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label as usize).collect()
    }

    /// Node feature matrix of graph `i` for the given kind.
    pub fn graph_features(&self, kind: FeatureKind, i: usize) -> Option<Tensor> {
        let table = self.features.get(&kind)?;
        let (start, end) = (self.offsets[i], self.offsets[i + 1]);
        let d = table.dimension;
        Some(
            Tensor::new(
                vec![end - start, d],
                table.data[start * d..end * d].to_vec(),
            )
            .expect("slice matches shape"),
        )
    }

    fn recompute_offsets(graphs: &[PropagationGraph]) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(graphs.len() + 1);
        offsets.push(0);
        for g in graphs {
            offsets.push(offsets.last().unwrap() + g.node_count());
        }
        offsets
    }
}

/// Corpus-level statistics in the spirit of published dataset tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub graphs: usize,
    pub fake: usize,
    pub total_nodes: usize,
    pub total_edges: usize,
    pub avg_nodes_per_graph: f64,
    /// depth -> number of graphs with that depth
    pub depth_histogram: BTreeMap<usize, usize>,
    /// max breadth -> number of graphs
    pub breadth_histogram: BTreeMap<usize, usize>,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut depth_histogram = BTreeMap::new();
    let mut breadth_histogram = BTreeMap::new();
    for g in &corpus.graphs {
        let r = validate_tree(g);
        *depth_histogram.entry(r.depth).or_insert(0) += 1;
        *breadth_histogram.entry(r.max_breadth).or_insert(0) += 1;
    }
    let graphs = corpus.graphs.len();
    let total_nodes = corpus.total_nodes();
    CorpusStats {
        graphs,
        fake: corpus.fake_count(),
        total_nodes,
        total_edges: corpus.total_edges(),
        avg_nodes_per_graph: if graphs == 0 {
            0.0
        } else {
            total_nodes as f64 / graphs as f64
        },
        depth_histogram,
        breadth_histogram,
    }
}

/// Load and validate a dataset from its manifest path.
pub fn load_dataset(manifest_path: &Path) -> Result<Corpus, DataError> {
    let text = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DataError::Format {
            path: manifest_path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));

    let graphs_path = dir.join(&manifest.graphs);
    let file = std::fs::File::open(&graphs_path).map_err(io_err(&graphs_path))?;
    let mut graphs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&graphs_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let gl: GraphLine = serde_json::from_str(&line).map_err(|e| DataError::Format {
            path: graphs_path.display().to_string(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        if gl.user_ids.len() != gl.n {
            return Err(DataError::Format {
                path: graphs_path.display().to_string(),
                line: lineno + 1,
                reason: format!("n={} but {} user ids", gl.n, gl.user_ids.len()),
            });
        }
        let g = PropagationGraph {
            graph_id: gl.id,
            label: gl.label,
            node_user_ids: gl.user_ids,
            edges: gl.edges,
            node_times: gl.times,
        };
        if !validate_tree(&g).passes() {
            return Err(DataError::InvalidTree { id: g.graph_id });
        }
        graphs.push(g);
    }

    let offsets = Corpus::recompute_offsets(&graphs);
    let total_nodes = *offsets.last().unwrap();

    let mut features = BTreeMap::new();
    for (kind_name, rel) in &manifest.features {
        let kind = FeatureKind::parse(kind_name).ok_or_else(|| DataError::Format {
            path: manifest_path.display().to_string(),
            line: 0,
            reason: format!("unknown feature kind {kind_name:?}"),
        })?;
        let table = FeatureTable::load(&dir.join(rel))?;
        if table.node_count != total_nodes {
            return Err(DataError::FeatureRowMismatch {
                kind: kind.name(),
                rows: table.node_count,
                nodes: total_nodes,
            });
        }
        if table.data.iter().any(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteFeature(kind.name()));
        }
        features.insert(kind, table);
    }

    Ok(Corpus {
        name: manifest.name,
        graphs,
        offsets,
        features,
    })
}

/// Write a corpus to `dir` and return the manifest path. Output bytes are
/// a pure function of the corpus, so save -> load -> save is idempotent.
pub fn save_dataset(corpus: &Corpus, dir: &Path) -> Result<PathBuf, DataError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let graphs_rel = "graphs.ndjson";
    let graphs_path = dir.join(graphs_rel);
    let mut gf = std::fs::File::create(&graphs_path).map_err(io_err(&graphs_path))?;
    for g in &corpus.graphs {
        let line = GraphLine {
            id: g.graph_id.clone(),
            label: g.label,
            n: g.node_count(),
            edges: g.edges.clone(),
            user_ids: g.node_user_ids.clone(),
            times: g.node_times.clone(),
        };
        let json = serde_json::to_string(&line).expect("graph line serializes");
        writeln!(gf, "{json}").map_err(io_err(&graphs_path))?;
    }

    let mut feature_paths = BTreeMap::new();
    for (kind, table) in &corpus.features {
        let rel = format!("features_{}.bin", kind.name());
        table.save(&dir.join(&rel))?;
        feature_paths.insert(kind.name().to_string(), rel);
    }

    let manifest = DatasetManifest {
        name: corpus.name.clone(),
        graphs: graphs_rel.to_string(),
        features: feature_paths,
        counts: ManifestCounts {
            graphs: corpus.graphs.len(),
            fake: corpus.fake_count(),
            nodes: corpus.total_nodes(),
            edges: corpus.total_edges(),
        },
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json + "\n").map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}

/// Controls for the planted-signal generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_graphs: usize,
    pub fake_fraction: f64,
    pub node_count_mean: f64,
    /// Lognormal dispersion of the node count around its mean.
    pub node_count_dispersion: f64,
    pub feature_dim: usize,
    /// Class-mean separation along a fixed unit direction in feature space.
    pub delta_feat: f64,
    /// Class separation of the preferential-attachment exponent.
    pub delta_struct: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_graphs: 500,
            fake_fraction: 0.5,
            node_count_mean: 30.0,
            node_count_dispersion: 0.3,
            feature_dim: 16,
            delta_feat: 0.0,
            delta_struct: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.num_graphs == 0 {
            return Err(DataError::BadSyntheticSpec("num_graphs must be > 0".into()));
        }
        if !(self.fake_fraction > 0.0 && self.fake_fraction < 1.0) {
            return Err(DataError::BadSyntheticSpec(
                "fake_fraction must lie in (0,1)".into(),
            ));
        }
        if self.delta_feat < 0.0 || self.delta_struct < 0.0 {
            return Err(DataError::BadSyntheticSpec("deltas must be >= 0".into()));
        }
        if self.feature_dim < 2 {
            return Err(DataError::BadSyntheticSpec("feature_dim must be >= 2".into()));
        }
        Ok(())
    }
}

// Generator internals. The planted feature signal rides on coordinate 1;
// coordinate 0 carries a class-independent constant so message passing
// can see degree structure. A shared per-graph noise term keeps the
// pooled feature channel from becoming trivially separable.
const FEATURE_BASELINE: f64 = 1.0;
const GRAPH_NOISE_STD: f64 = 0.7;
const ATTACH_EXPONENT_SCALE: f64 = 1.0;
const STANCE_COPY_SCALE: f64 = 0.2;
const PROFILE_DEGREE_NOISE: f64 = 0.6;
const PROFILE_INVDEG_NOISE: f64 = 0.2;

/// Import a benchmark-style export into the container model: a global
/// edge list (`A.txt`, `src, dst` pairs), a node-to-graph assignment
/// (`graph_indicator.txt`), per-graph labels (`graph_labels.txt`), and
/// any `features_{kind}.bin` tables present in the directory. Edges are
/// re-oriented by a breadth-first walk from each graph's first node so
/// the result satisfies the tree invariants.
pub fn import_benchmark_export(dir: &Path, name: &str) -> Result<Corpus, DataError> {
    let numbers = |file: &str| -> Result<Vec<Vec<i64>>, DataError> {
        let path = dir.join(file);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.split(',')
                    .map(|tok| {
                        tok.trim().parse::<i64>().map_err(|e| DataError::Format {
                            path: path.display().to_string(),
                            line: i + 1,
                            reason: e.to_string(),
                        })
                    })
                    .collect()
            })
            .collect()
    };

    let indicator: Vec<i64> = numbers("graph_indicator.txt")?
        .into_iter()
        .flatten()
        .collect();
    let labels: Vec<i64> = numbers("graph_labels.txt")?.into_iter().flatten().collect();
    let edges_raw = numbers("A.txt")?;
    let base = indicator.iter().copied().min().unwrap_or(0);
    let num_graphs = labels.len();

    // Global node id -> (graph index, local index), locals in file order.
    let mut local = Vec::with_capacity(indicator.len());
    let mut sizes = vec![0usize; num_graphs];
    for &g in &indicator {
        let gi = (g - base) as usize;
        if gi >= num_graphs {
            return Err(DataError::Format {
                path: dir.join("graph_indicator.txt").display().to_string(),
                line: 0,
                reason: format!("graph id {g} out of range for {num_graphs} labels"),
            });
        }
        local.push((gi, sizes[gi]));
        sizes[gi] += 1;
    }

    let mut adjacency: Vec<Vec<Vec<usize>>> =
        sizes.iter().map(|&n| vec![Vec::new(); n]).collect();
    for (i, pair) in edges_raw.iter().enumerate() {
        let [a, b] = pair.as_slice() else {
            return Err(DataError::Format {
                path: dir.join("A.txt").display().to_string(),
                line: i + 1,
                reason: "expected two comma-separated node ids".into(),
            });
        };
        let (ga, la) = local[(*a - base) as usize];
        let (gb, lb) = local[(*b - base) as usize];
        if ga != gb {
            return Err(DataError::Format {
                path: dir.join("A.txt").display().to_string(),
                line: i + 1,
                reason: "edge crosses graph boundary".into(),
            });
        }
        adjacency[ga][la].push(lb);
        adjacency[ga][lb].push(la);
    }

    let mut graphs = Vec::with_capacity(num_graphs);
    for (gi, adj) in adjacency.iter().enumerate() {
        let n = adj.len();
        // BFS orientation from the graph's first node.
        let mut edges = Vec::with_capacity(n.saturating_sub(1));
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        if n > 0 {
            seen[0] = true;
            queue.push_back(0usize);
        }
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    edges.push((v, u));
                    queue.push_back(u);
                }
            }
        }
        let g = PropagationGraph {
            graph_id: format!("{name}-{gi}"),
            label: u8::from(labels[gi] != 0),
            node_user_ids: (0..n).map(|v| format!("g{gi}_n{v}")).collect(),
            edges,
            node_times: None,
        };
        if !validate_tree(&g).passes() {
            return Err(DataError::InvalidTree { id: g.graph_id });
        }
        graphs.push(g);
    }

    let offsets = Corpus::recompute_offsets(&graphs);
    let total = *offsets.last().unwrap_or(&0);
    let mut features = BTreeMap::new();
    for kind in [FeatureKind::Profile, FeatureKind::WordVec, FeatureKind::External] {
        let path = dir.join(format!("features_{}.bin", kind.name()));
        if path.exists() {
            let table = FeatureTable::load(&path)?;
            if table.node_count != total {
                return Err(DataError::FeatureRowMismatch {
                    kind: kind.name(),
                    rows: table.node_count,
                    nodes: total,
                });
            }
            features.insert(kind, table);
        }
    }

    Ok(Corpus {
        name: name.to_string(),
        graphs,
        offsets,
        features,
    })
}

/// Generate a planted-signal corpus. Fully deterministic in the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus, DataError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let num_fake = (spec.num_graphs as f64 * spec.fake_fraction).round() as usize;

    let mut graphs = Vec::with_capacity(spec.num_graphs);
    let mut endo_rows: Vec<f64> = Vec::new();
    let mut profile_rows: Vec<f64> = Vec::new();

    for gi in 0..spec.num_graphs {
        let label: u8 = u8::from(gi < num_fake);
        let class_sign = if label == 1 { 1.0 } else { -1.0 };

        // Node count: lognormal around the mean, at least 2.
        let z: f64 = StandardNormal.sample(&mut rng);
        let n = (spec.node_count_mean
            * (spec.node_count_dispersion * z - 0.5 * spec.node_count_dispersion.powi(2)).exp())
        .round()
        .max(2.0) as usize;

        // Tree shape: sequential attachment with a class-dependent
        // preferential-attachment exponent. Positive exponents breed
        // hubs, negative ones breed chains.
        let alpha = class_sign * spec.delta_struct / 2.0 * ATTACH_EXPONENT_SCALE;
        let mut degree = vec![0usize; n];
        let mut edges = Vec::with_capacity(n - 1);
        for child in 1..n {
            let weights: Vec<f64> = (0..child)
                .map(|j| ((degree[j] + 1) as f64).powf(alpha))
                .collect();
            let total: f64 = weights.iter().sum();
            let mut pick: f64 = rng.random_range(0.0..total);
            let mut parent = child - 1;
            for (j, w) in weights.iter().enumerate() {
                if pick < *w {
                    parent = j;
                    break;
                }
                pick -= w;
            }
            edges.push((parent, child));
            degree[parent] += 1;
            degree[child] += 1;
        }

        // Stance propagation: each retweeter copies its parent's stance
        // with a class-dependent probability. Per-node marginals are
        // uniform over ±1 for both classes, so the signal is only
        // readable through edge-wise agreement.
        let copy_prob = (0.5 + class_sign * spec.delta_struct / 2.0 * STANCE_COPY_SCALE)
            .clamp(0.05, 0.95);
        let mut stance = vec![0.0f64; n];
        stance[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        for child in 1..n {
            let (parent, _) = edges[child - 1];
            let copy: f64 = rng.random_range(0.0..1.0);
            stance[child] = if copy < copy_prob {
                stance[parent]
            } else {
                -stance[parent]
            };
        }

        // Endogenous features.
        let eta_z: f64 = StandardNormal.sample(&mut rng);
        let eta = GRAPH_NOISE_STD * eta_z;
        let shift = class_sign * spec.delta_feat / 2.0 + eta;
        for v in 0..n {
            for j in 0..spec.feature_dim {
                // Coordinate 0 is exactly the baseline: a noisy constant
                // would drown the small degree-dependent aggregation
                // weights that make structure visible to the encoder.
                let value = if j == 0 {
                    FEATURE_BASELINE
                } else if j == 2 && spec.feature_dim > 2 {
                    stance[v]
                } else {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    if j == 1 {
                        noise + shift
                    } else {
                        noise
                    }
                };
                endo_rows.push(value);
            }
        }

        // Profile features: a degree-derived coordinate plus noise, with
        // no direct class term. Any class information enters only through
        // the structural distribution.
        for v in 0..n {
            let mut row = [0.0f64; 10];
            let noise: f64 = StandardNormal.sample(&mut rng);
            row[1] = ((degree[v]) as f64).ln_1p() + PROFILE_DEGREE_NOISE * noise;
            let noise2: f64 = StandardNormal.sample(&mut rng);
            row[2] = 1.0 / degree[v] as f64 + PROFILE_INVDEG_NOISE * noise2;
            for item in row.iter_mut().skip(3) {
                *item = StandardNormal.sample(&mut rng);
            }
            profile_rows.extend_from_slice(&row);
        }

        let node_user_ids: Vec<String> = (0..n)
            .map(|v| {
                if v == 0 {
                    format!("g{gi}_news")
                } else {
                    format!("g{gi}_u{v}")
                }
            })
            .collect();
        graphs.push(PropagationGraph {
            graph_id: format!("syn{gi}"),
            label,
            node_user_ids,
            edges,
            node_times: Some((1..=n as i64).collect()),
        });
    }

    let offsets = Corpus::recompute_offsets(&graphs);
    let total = *offsets.last().unwrap();
    let mut features = BTreeMap::new();
    features.insert(
        FeatureKind::WordVec,
        FeatureTable {
            node_count: total,
            dimension: spec.feature_dim,
            kind: FeatureKind::WordVec,
            data: endo_rows,
        },
    );
    features.insert(
        FeatureKind::Profile,
        FeatureTable {
            node_count: total,
            dimension: 10,
            kind: FeatureKind::Profile,
            data: profile_rows,
        },
    );

    Ok(Corpus {
        name: format!("synthetic-{}", spec.seed),
        graphs,
        offsets,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_graphs_are_valid_trees() {
        let spec = SyntheticSpec {
            num_graphs: 50,
            delta_feat: 1.0,
            delta_struct: 1.5,
            ..Default::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.graphs.len(), 50);
        for g in &corpus.graphs {
            assert!(validate_tree(g).passes(), "graph {}", g.graph_id);
        }
        let stats = corpus_stats(&corpus);
        assert_eq!(stats.total_edges, stats.total_nodes - stats.graphs);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            num_graphs: 20,
            delta_feat: 2.0,
            ..Default::default()
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.graphs, b.graphs);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn synthetic_class_balance() {
        let spec = SyntheticSpec {
            num_graphs: 101,
            fake_fraction: 0.3,
            ..Default::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        assert_eq!(corpus.fake_count(), 30);
    }

    #[test]
    fn zero_delta_means_no_class_signal_in_features() {
        // With both deltas zero, the class-conditional feature means must
        // agree within sampling error (3 sigma of the mean difference).
        let spec = SyntheticSpec {
            num_graphs: 200,
            node_count_mean: 20.0,
            ..Default::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let table = &corpus.features[&FeatureKind::WordVec];
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for (i, g) in corpus.graphs.iter().enumerate() {
            let (s, e) = (corpus.offsets[i], corpus.offsets[i + 1]);
            for r in s..e {
                sums[g.label as usize] += table.row(r)[1];
                counts[g.label as usize] += 1;
            }
        }
        let mean_diff = sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64;
        // Per-node variance along coord 1 is 1 + graph noise; being
        // generous with the shared-noise correlation, bound by 3 sigma of
        // a per-graph-mean estimate.
        let graphs_per_class = 100.0;
        let sigma = (2.0 * (GRAPH_NOISE_STD.powi(2) + 1.0 / 20.0) / graphs_per_class).sqrt();
        assert!(
            mean_diff.abs() < 3.0 * sigma,
            "mean diff {mean_diff} vs sigma {sigma}"
        );
    }

    #[test]
    fn planted_feature_signal_separates_graph_means() {
        // delta_feat = 3: the per-graph mean projection onto the planted
        // direction should classify almost perfectly.
        let spec = SyntheticSpec {
            num_graphs: 300,
            node_count_mean: 20.0,
            delta_feat: 3.0,
            ..Default::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let table = &corpus.features[&FeatureKind::WordVec];
        let mut errors = 0;
        for (i, g) in corpus.graphs.iter().enumerate() {
            let (s, e) = (corpus.offsets[i], corpus.offsets[i + 1]);
            let mean: f64 =
                (s..e).map(|r| table.row(r)[1]).sum::<f64>() / (e - s) as f64;
            let predicted = u8::from(mean > 0.0);
            if predicted != g.label {
                errors += 1;
            }
        }
        // Analytic Bayes error at these settings is ~0.4%; allow 3%.
        assert!(errors as f64 / 300.0 < 0.03, "{errors} errors");
    }

    #[test]
    fn bad_specs_rejected() {
        let mut spec = SyntheticSpec::default();
        spec.fake_fraction = 0.0;
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = SyntheticSpec::default();
        spec.delta_feat = -1.0;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn roundtrip_preserves_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            num_graphs: 30,
            delta_feat: 1.0,
            delta_struct: 1.0,
            ..Default::default()
        };
        let corpus = generate_synthetic(&spec).unwrap();
        let manifest = save_dataset(&corpus, dir.path()).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        assert_eq!(loaded.graphs, corpus.graphs);
        assert_eq!(loaded.offsets, corpus.offsets);
        // feature values survive at f32 precision
        for (kind, table) in &corpus.features {
            let lt = &loaded.features[kind];
            assert_eq!(lt.node_count, table.node_count);
            for (a, b) in table.data.iter().zip(&lt.data) {
                assert_eq!(*a as f32, *b as f32);
            }
        }
        // save -> load -> save is byte-identical
        let dir2 = tempfile::tempdir().unwrap();
        save_dataset(&loaded, dir2.path()).unwrap();
        for file in [
            "graphs.ndjson",
            "features_wordvec.bin",
            "features_profile.bin",
            "manifest.json",
        ] {
            let a = std::fs::read(dir.path().join(file)).unwrap();
            let b = std::fs::read(dir2.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} not byte-identical");
        }
    }

    #[test]
    fn empty_container_loads() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus {
            name: "empty".into(),
            graphs: vec![],
            offsets: vec![0],
            features: BTreeMap::new(),
        };
        let manifest = save_dataset(&corpus, dir.path()).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        assert!(loaded.graphs.is_empty());
        let stats = corpus_stats(&loaded);
        assert_eq!(stats.graphs, 0);
        assert_eq!(stats.total_nodes, 0);
    }

    #[test]
    fn benchmark_export_import_orients_edges() {
        let dir = tempfile::tempdir().unwrap();
        // Two graphs, 1-based ids: a 3-node path (edges given in
        // arbitrary direction) and a 2-node pair.
        std::fs::write(dir.path().join("A.txt"), "2, 1\n2, 3\n5, 4\n").unwrap();
        std::fs::write(dir.path().join("graph_indicator.txt"), "1\n1\n1\n2\n2\n").unwrap();
        std::fs::write(dir.path().join("graph_labels.txt"), "1\n0\n").unwrap();
        let corpus = import_benchmark_export(dir.path(), "bench").unwrap();
        assert_eq!(corpus.graphs.len(), 2);
        assert_eq!(corpus.graphs[0].edges, vec![(0, 1), (1, 2)]);
        assert_eq!(corpus.graphs[0].label, 1);
        assert_eq!(corpus.graphs[1].edges, vec![(0, 1)]);
        assert_eq!(corpus.graphs[1].label, 0);
        assert!(corpus.graphs.iter().all(|g| validate_tree(g).passes()));
    }

    #[test]
    fn benchmark_export_rejects_cross_graph_edges() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("A.txt"), "1, 3\n").unwrap();
        std::fs::write(dir.path().join("graph_indicator.txt"), "1\n1\n2\n").unwrap();
        std::fs::write(dir.path().join("graph_labels.txt"), "0\n1\n").unwrap();
        let err = import_benchmark_export(dir.path(), "bad").unwrap_err();
        assert!(err.to_string().contains("crosses graph boundary"), "{err}");
    }
}
