//! Python bindings for the propagation-graph fake news detector.
//!
//! Exposes the main pipeline stages: text cleaning, propagation-tree
//! construction, synthetic corpus generation, container I/O, corpus
//! statistics, and the seeded training protocol.

use std::collections::HashSet;
use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use upfd_core::cascade::{build_propagation_graph, validate_tree, EngagementRecord, NewsSource};
use upfd_core::dataio::{corpus_stats, generate_synthetic, load_dataset, save_dataset, SyntheticSpec};
use upfd_core::features::FeatureKind;
use upfd_core::model::EncoderKind;
use upfd_core::train::{run_protocol, AblationSpec, RunReport, TrainSpec};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A dataset container held in memory.
#[pyclass]
struct Corpus {
    inner: upfd_core::dataio::Corpus,
}

#[pymethods]
impl Corpus {
    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    fn __len__(&self) -> usize {
        self.inner.graphs.len()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    /// Nodes, edges, and label of graph `i`.
    fn graph<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyDict>> {
        let g = self
            .inner
            .graphs
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("graph index {i} out of range")))?;
        let d = PyDict::new(py);
        d.set_item("id", &g.graph_id)?;
        d.set_item("label", g.label)?;
        d.set_item("n", g.node_count())?;
        d.set_item("edges", g.edges.clone())?;
        d.set_item("user_ids", g.node_user_ids.clone())?;
        d.set_item("times", g.node_times.clone())?;
        Ok(d)
    }

    /// Corpus statistics (graph/node/edge counts and histograms).
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = corpus_stats(&self.inner);
        let d = PyDict::new(py);
        d.set_item("graphs", s.graphs)?;
        d.set_item("fake", s.fake)?;
        d.set_item("total_nodes", s.total_nodes)?;
        d.set_item("total_edges", s.total_edges)?;
        d.set_item("avg_nodes_per_graph", s.avg_nodes_per_graph)?;
        d.set_item("depth_histogram", s.depth_histogram)?;
        d.set_item("breadth_histogram", s.breadth_histogram)?;
        Ok(d)
    }

    /// Write the container to `dir`; returns the manifest path.
    fn save(&self, dir: &str) -> PyResult<String> {
        let manifest = save_dataset(&self.inner, Path::new(dir)).map_err(err)?;
        Ok(manifest.display().to_string())
    }
}

/// Normalize raw post text: strip URLs, @-mentions, and retweet
/// markers, collapse whitespace, lowercase.
#[pyfunction]
fn clean_text(text: &str) -> String {
    upfd_core::features::clean_text(text)
}

/// Build one propagation tree from a news source and its engagement
/// records. `source` needs news_id, source_id, source_followers,
/// publish_time; each record needs user_id, retweet_time,
/// follower_count, and optionally followee_ids.
#[pyfunction]
#[pyo3(signature = (source, records, label = 0))]
fn build_tree<'py>(
    py: Python<'py>,
    source: &Bound<'py, PyDict>,
    records: &Bound<'py, PyList>,
    label: u8,
) -> PyResult<Bound<'py, PyDict>> {
    let get = |d: &Bound<'py, PyDict>, key: &str| -> PyResult<Bound<'py, PyAny>> {
        d.get_item(key)?
            .ok_or_else(|| PyValueError::new_err(format!("missing field '{key}'")))
    };
    let news = NewsSource {
        news_id: get(source, "news_id")?.extract()?,
        source_account_id: get(source, "source_id")?.extract()?,
        source_follower_count: get(source, "source_followers")?.extract()?,
        publish_time: get(source, "publish_time")?.extract()?,
    };
    let mut engagements = Vec::with_capacity(records.len());
    for item in records.iter() {
        let d = item.cast::<PyDict>()?;
        // Accept any sequence of ids, not just a Python set.
        let followee_ids: HashSet<String> = match d.get_item("followee_ids")? {
            Some(v) => v.extract::<Vec<String>>()?.into_iter().collect(),
            None => HashSet::new(),
        };
        engagements.push(EngagementRecord {
            user_id: get(d, "user_id")?.extract()?,
            retweet_time: get(d, "retweet_time")?.extract()?,
            follower_count: get(d, "follower_count")?.extract()?,
            followee_ids,
        });
    }
    let g = build_propagation_graph(&news, &engagements, label).map_err(err)?;
    let report = validate_tree(&g);
    let out = PyDict::new(py);
    out.set_item("id", &g.graph_id)?;
    out.set_item("label", g.label)?;
    out.set_item("n", g.node_count())?;
    out.set_item("edges", g.edges.clone())?;
    out.set_item("user_ids", g.node_user_ids.clone())?;
    out.set_item("times", g.node_times.clone())?;
    out.set_item("depth", report.depth)?;
    out.set_item("max_breadth", report.max_breadth)?;
    Ok(out)
}

/// Generate a planted-signal synthetic corpus.
#[pyfunction]
#[pyo3(signature = (num_graphs = 500, fake_fraction = 0.5, node_count_mean = 30.0,
                    node_count_dispersion = 0.3, feature_dim = 16,
                    delta_feat = 0.0, delta_struct = 0.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synthetic_corpus(
    num_graphs: usize,
    fake_fraction: f64,
    node_count_mean: f64,
    node_count_dispersion: f64,
    feature_dim: usize,
    delta_feat: f64,
    delta_struct: f64,
    seed: u64,
) -> PyResult<Corpus> {
    let spec = SyntheticSpec {
        num_graphs,
        fake_fraction,
        node_count_mean,
        node_count_dispersion,
        feature_dim,
        delta_feat,
        delta_struct,
        seed,
    };
    Ok(Corpus {
        inner: generate_synthetic(&spec).map_err(err)?,
    })
}

/// Load a container from its manifest.json path.
#[pyfunction]
fn load_corpus(manifest_path: &str) -> PyResult<Corpus> {
    Ok(Corpus {
        inner: load_dataset(Path::new(manifest_path)).map_err(err)?,
    })
}

fn report_to_dict<'py>(py: Python<'py>, r: &RunReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("schema_version", r.schema_version)?;
    d.set_item("name", &r.name)?;
    d.set_item("encoder", &r.encoder)?;
    d.set_item("features", &r.features)?;
    d.set_item("ablation", &r.ablation)?;
    let per_seed = PyList::empty(py);
    for s in &r.per_seed {
        let e = PyDict::new(py);
        e.set_item("seed", s.seed)?;
        e.set_item("acc", s.acc)?;
        e.set_item("f1", s.f1)?;
        per_seed.append(e)?;
    }
    d.set_item("per_seed", per_seed)?;
    d.set_item("mean_acc", r.mean_acc)?;
    d.set_item("std_acc", r.std_acc)?;
    d.set_item("mean_f1", r.mean_f1)?;
    d.set_item("std_f1", r.std_f1)?;
    d.set_item("p_value_vs_baseline", r.p_value_vs_baseline)?;
    Ok(d)
}

/// Run the seeded training protocol on a corpus and return the
/// aggregated report as a dict.
#[pyfunction]
#[pyo3(signature = (corpus, encoder = "sage", features = "wordvec", ablation = "full",
                    fuse_news = false, seeds = vec![0, 1, 2, 3, 4], epochs = 100,
                    batch_size = 128, lr = 0.01, weight_decay = 0.001,
                    patience = 10, jobs = 1))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    corpus: &Corpus,
    encoder: &str,
    features: &str,
    ablation: &str,
    fuse_news: bool,
    seeds: Vec<u64>,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    weight_decay: f64,
    patience: usize,
    jobs: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let encoder = match encoder {
        "sage" => EncoderKind::Sage,
        "gcn" => EncoderKind::Gcn,
        other => return Err(PyValueError::new_err(format!("unknown encoder '{other}'"))),
    };
    let kind = FeatureKind::parse(features)
        .ok_or_else(|| PyValueError::new_err(format!("unknown feature kind '{features}'")))?;
    let mut ablation = AblationSpec::parse(ablation)
        .ok_or_else(|| PyValueError::new_err(format!("unknown ablation '{ablation}'")))?;
    ablation.fuse_news = fuse_news;
    let spec = TrainSpec {
        batch_size,
        lr,
        weight_decay,
        max_epochs: epochs,
        patience,
        seeds,
        use_sgd: false,
        jobs,
    };
    let report = run_protocol(
        &corpus.inner,
        encoder,
        kind,
        &ablation,
        &spec,
        None,
        &corpus.inner.name,
        |_, _| {},
    )
    .map_err(err)?;
    report_to_dict(py, &report)
}

#[pymodule]
fn upfd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(build_tree, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
