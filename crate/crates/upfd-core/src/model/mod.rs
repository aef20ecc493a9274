//! Differentiable graph encoders (GraphSAGE-mean and GCN), mean-pool
//! readout, news-embedding fusion, and the two-layer MLP head, with
//! hand-derived reverse-mode gradients.

mod checkpoint;
mod classifier;
mod layers;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use classifier::{
    backward_graph, classify_backward, classify_forward, forward_graph, init_params, GraphCache,
};
pub use layers::{
    fuse, gcn_layer_forward, gcn_norm_adjacency, readout_mean, sage_layer_forward,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tensor};

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("adjacency index {index} out of range for {nodes} nodes")]
    BadAdjacency { index: usize, nodes: usize },
    #[error("empty graph has no readout")]
    EmptyGraph,
    #[error("feature rows {rows} do not match node count {nodes}")]
    FeatureMismatch { rows: usize, nodes: usize },
    #[error("cache does not match the graph/spec it is replayed against")]
    StaleCache,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("checkpoint file {path}: {reason}")]
    BadCheckpoint { path: String, reason: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Sage,
    Gcn,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Sage => "sage",
            EncoderKind::Gcn => "gcn",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sage" => Some(EncoderKind::Sage),
            "gcn" => Some(EncoderKind::Gcn),
            _ => None,
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderKind,
    pub num_gnn_layers: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub mlp_hidden: usize,
    pub fuse_news: bool,
}

impl ModelSpec {
    pub fn new(encoder: EncoderKind, input_dim: usize, fuse_news: bool) -> Self {
        Self {
            encoder,
            num_gnn_layers: 2,
            input_dim,
            hidden_dim: 128,
            mlp_hidden: 128,
            fuse_news,
        }
    }

    /// Width of the fused embedding entering the MLP head.
    pub fn fused_dim(&self) -> usize {
        if self.fuse_news {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }
}

/// One graph prepared for the model: undirected adjacency, node features
/// (row 0 is the news text embedding) and the binary label.
#[derive(Debug, Clone)]
pub struct GraphInstance {
    pub adjacency: Vec<Vec<usize>>,
    pub features: Tensor,
    pub label: usize,
}

/// A minibatch of independent graphs.
#[derive(Debug, Clone, Default)]
pub struct GraphBatch {
    pub graphs: Vec<GraphInstance>,
}

impl GraphBatch {
    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label).collect()
    }
}
