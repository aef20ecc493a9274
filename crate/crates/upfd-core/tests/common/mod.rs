//! Shared test oracles, kept independent of the library's compute paths:
//! naive dense linear algebra, finite differences, and random instance
//! generators.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use upfd_core::autodiff::{ParamStore, Tensor};
use upfd_core::model::{forward_graph, GraphInstance, ModelSpec};

/// Naive triple-loop matmul.
pub fn dense_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    assert_eq!(k, b.rows());
    let mut out = Tensor::zeros(vec![n, m]);
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a.at(i, p) * b.at(p, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Dense mean-aggregation matrix M with M[v,u] = 1/deg(v) for u in N(v).
pub fn dense_mean_agg(adj: &[Vec<usize>]) -> Tensor {
    let n = adj.len();
    let mut m = Tensor::zeros(vec![n, n]);
    for (v, neigh) in adj.iter().enumerate() {
        for &u in neigh {
            m.set(v, u, 1.0 / neigh.len() as f64);
        }
    }
    m
}

/// Dense D^{-1/2}(A+I)D^{-1/2}.
pub fn dense_gcn_norm(adj: &[Vec<usize>]) -> Tensor {
    let n = adj.len();
    let mut a = Tensor::zeros(vec![n, n]);
    for (v, neigh) in adj.iter().enumerate() {
        a.set(v, v, 1.0);
        for &u in neigh {
            a.set(v, u, 1.0);
        }
    }
    let deg: Vec<f64> = (0..n)
        .map(|v| (0..n).map(|u| a.at(v, u)).sum::<f64>())
        .collect();
    let mut out = Tensor::zeros(vec![n, n]);
    for v in 0..n {
        for u in 0..n {
            out.set(v, u, a.at(v, u) / (deg[v] * deg[u]).sqrt());
        }
    }
    out
}

pub fn rand_tensor(shape: Vec<usize>, rng: &mut ChaCha20Rng) -> Tensor {
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Uniform random recursive tree with `n` nodes, as undirected adjacency.
pub fn random_tree(n: usize, rng: &mut ChaCha20Rng) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for child in 1..n {
        let parent = rng.random_range(0..child);
        adj[parent].push(child);
        adj[child].push(parent);
    }
    adj
}

pub fn random_instance(
    n: usize,
    dim: usize,
    rng: &mut ChaCha20Rng,
) -> GraphInstance {
    GraphInstance {
        adjacency: random_tree(n, rng),
        features: rand_tensor(vec![n, dim], rng),
        label: rng.random_range(0..2),
    }
}

/// Loss of the model on one graph as a function of the parameter store,
/// used as the scalar target for finite differences.
pub fn graph_loss(g: &GraphInstance, spec: &ModelSpec, params: &ParamStore) -> f64 {
    let (logits_row, _) = forward_graph(g, spec, params).unwrap();
    let logits = Tensor::new(vec![1, 2], logits_row).unwrap();
    let (loss, _) = upfd_core::autodiff::softmax_cross_entropy(&logits, &[g.label]).unwrap();
    loss
}

/// Central finite difference of `f` w.r.t. element `idx` of parameter
/// `name`, at step `h`.
pub fn central_diff(
    params: &ParamStore,
    name: &str,
    idx: usize,
    h: f64,
    mut f: impl FnMut(&ParamStore) -> f64,
) -> f64 {
    let mut plus = params.clone();
    plus.value_mut(name).unwrap().data_mut()[idx] += h;
    let mut minus = params.clone();
    minus.value_mut(name).unwrap().data_mut()[idx] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}
