use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::autodiff::{
    glorot_uniform, linear_backward, linear_forward, relu, relu_backward, ParamStore, Tensor,
};

use super::layers::{gcn_apply, gcn_norm_adjacency, neighbor_mean_transpose, sage_layer_pre};
use super::{readout_mean, EncoderKind, GraphBatch, GraphInstance, ModelError, ModelSpec, Result};

/// Everything the manual reverse pass needs from one graph's forward.
#[derive(Debug, Clone)]
pub struct GraphCache {
    layer_inputs: Vec<Tensor>,
    layer_pre: Vec<Tensor>,
    /// Neighbor-mean matrices, SAGE only.
    layer_nm: Vec<Tensor>,
    gcn_norm: Option<Vec<Vec<(usize, f64)>>>,
    node_count: usize,
    fused: Tensor,
    mlp_pre1: Tensor,
    mlp_h1: Tensor,
}

/// Glorot-initialized parameter store for `spec`, biases zero, seeded.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamStore {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mut d_in = spec.input_dim;
    for l in 0..spec.num_gnn_layers {
        let d_out = spec.hidden_dim;
        match spec.encoder {
            EncoderKind::Sage => {
                store.register(&format!("enc{l}.w_self"), glorot_uniform(d_in, d_out, &mut rng));
                store.register(
                    &format!("enc{l}.w_neigh"),
                    glorot_uniform(d_in, d_out, &mut rng),
                );
                store.register(&format!("enc{l}.b"), Tensor::zeros(vec![d_out]));
            }
            EncoderKind::Gcn => {
                store.register(&format!("enc{l}.w"), glorot_uniform(d_in, d_out, &mut rng));
                store.register(&format!("enc{l}.b"), Tensor::zeros(vec![d_out]));
            }
        }
        d_in = d_out;
    }
    if spec.fuse_news {
        store.register(
            "news.w",
            glorot_uniform(spec.input_dim, spec.hidden_dim, &mut rng),
        );
        store.register("news.b", Tensor::zeros(vec![spec.hidden_dim]));
    }
    store.register(
        "head.w1",
        glorot_uniform(spec.fused_dim(), spec.mlp_hidden, &mut rng),
    );
    store.register("head.b1", Tensor::zeros(vec![spec.mlp_hidden]));
    store.register("head.w2", glorot_uniform(spec.mlp_hidden, 2, &mut rng));
    store.register("head.b2", Tensor::zeros(vec![2]));
    store
}

/// Forward pass for a single graph, returning its logits row and cache.
pub fn forward_graph(
    g: &GraphInstance,
    spec: &ModelSpec,
    params: &ParamStore,
) -> Result<(Vec<f64>, GraphCache)> {
    let n = g.adjacency.len();
    if g.features.rows() != n {
        return Err(ModelError::FeatureMismatch {
            rows: g.features.rows(),
            nodes: n,
        });
    }
    if n == 0 {
        return Err(ModelError::EmptyGraph);
    }

    let gcn_norm = match spec.encoder {
        EncoderKind::Gcn => Some(gcn_norm_adjacency(&g.adjacency, n)?),
        EncoderKind::Sage => None,
    };

    let mut layer_inputs = Vec::with_capacity(spec.num_gnn_layers);
    let mut layer_pre = Vec::with_capacity(spec.num_gnn_layers);
    let mut layer_nm = Vec::new();
    let mut h = g.features.clone();
    for l in 0..spec.num_gnn_layers {
        let pre = match spec.encoder {
            EncoderKind::Sage => {
                let w_self = params.value(&format!("enc{l}.w_self"))?;
                let w_neigh = params.value(&format!("enc{l}.w_neigh"))?;
                let b = params.value(&format!("enc{l}.b"))?;
                let (nm, pre) = sage_layer_pre(&h, &g.adjacency, w_self, w_neigh, b)?;
                layer_nm.push(nm);
                pre
            }
            EncoderKind::Gcn => {
                let w = params.value(&format!("enc{l}.w"))?;
                let b = params.value(&format!("enc{l}.b"))?;
                let hw = h.matmul(w)?;
                let mut pre = gcn_apply(gcn_norm.as_ref().unwrap(), &hw);
                let cols = pre.cols();
                for i in 0..pre.rows() {
                    let row = pre.row_mut(i);
                    for j in 0..cols {
                        row[j] += b.data()[j];
                    }
                }
                pre
            }
        };
        layer_inputs.push(h);
        h = relu(&pre);
        layer_pre.push(pre);
    }

    let pooled = readout_mean(&h)?;

    let fused_vec = if spec.fuse_news {
        let news = Tensor::new(vec![1, spec.input_dim], g.features.row(0).to_vec())?;
        let proj = linear_forward(&news, params.value("news.w")?, params.value("news.b")?)?;
        super::layers::fuse(&pooled, proj.data(), true)
    } else {
        pooled
    };
    let fused = Tensor::new(vec![1, spec.fused_dim()], fused_vec)?;

    let pre1 = linear_forward(&fused, params.value("head.w1")?, params.value("head.b1")?)?;
    let h1 = relu(&pre1);
    let logits = linear_forward(&h1, params.value("head.w2")?, params.value("head.b2")?)?;

    Ok((
        logits.data().to_vec(),
        GraphCache {
            layer_inputs,
            layer_pre,
            layer_nm,
            gcn_norm,
            node_count: n,
            fused,
            mlp_pre1: pre1,
            mlp_h1: h1,
        },
    ))
}

/// Reverse pass for a single graph: gradients for every parameter given
/// d loss / d logits for this graph's row.
pub fn backward_graph(
    g: &GraphInstance,
    cache: &GraphCache,
    grad_logits_row: &[f64],
    spec: &ModelSpec,
    params: &ParamStore,
) -> Result<BTreeMap<String, Tensor>> {
    if cache.node_count != g.adjacency.len()
        || cache.layer_inputs.len() != spec.num_gnn_layers
        || cache.fused.numel() != spec.fused_dim()
    {
        return Err(ModelError::StaleCache);
    }
    let mut grads = BTreeMap::new();
    let grad_logits = Tensor::new(vec![1, 2], grad_logits_row.to_vec())?;

    // MLP head.
    let (grad_h1, gw2, gb2) =
        linear_backward(&grad_logits, &cache.mlp_h1, params.value("head.w2")?)?;
    grads.insert("head.w2".into(), gw2);
    grads.insert("head.b2".into(), gb2);
    let grad_pre1 = relu_backward(&grad_h1, &cache.mlp_pre1)?;
    let (grad_fused, gw1, gb1) =
        linear_backward(&grad_pre1, &cache.fused, params.value("head.w1")?)?;
    grads.insert("head.w1".into(), gw1);
    grads.insert("head.b1".into(), gb1);

    // Split the fused gradient back into readout and news-projection parts.
    let hd = spec.hidden_dim;
    let grad_pooled = &grad_fused.data()[..hd];
    if spec.fuse_news {
        let grad_proj = Tensor::new(vec![1, hd], grad_fused.data()[hd..].to_vec())?;
        let news = Tensor::new(vec![1, spec.input_dim], g.features.row(0).to_vec())?;
        let (_, gnw, gnb) = linear_backward(&grad_proj, &news, params.value("news.w")?)?;
        grads.insert("news.w".into(), gnw);
        grads.insert("news.b".into(), gnb);
    }

    // Mean readout: every node receives grad_pooled / n.
    let n = cache.node_count;
    let mut grad_h = Tensor::zeros(vec![n, hd]);
    for i in 0..n {
        for (o, &gp) in grad_h.row_mut(i).iter_mut().zip(grad_pooled) {
            *o = gp / n as f64;
        }
    }

    // GNN layers, reversed.
    for l in (0..spec.num_gnn_layers).rev() {
        let grad_pre = relu_backward(&grad_h, &cache.layer_pre[l])?;
        let h_in = &cache.layer_inputs[l];
        match spec.encoder {
            EncoderKind::Sage => {
                let w_self = params.value(&format!("enc{l}.w_self"))?;
                let w_neigh = params.value(&format!("enc{l}.w_neigh"))?;
                let nm = &cache.layer_nm[l];
                let (grad_h_self, gws, gb) = linear_backward(&grad_pre, h_in, w_self)?;
                let gwn = nm.matmul_tn(&grad_pre)?;
                let grad_nm = grad_pre.matmul_nt(w_neigh)?;
                let grad_h_neigh = neighbor_mean_transpose(&grad_nm, &g.adjacency)?;
                grads.insert(format!("enc{l}.w_self"), gws);
                grads.insert(format!("enc{l}.w_neigh"), gwn);
                grads.insert(format!("enc{l}.b"), gb);
                grad_h = grad_h_self;
                grad_h.add_assign(&grad_h_neigh)?;
            }
            EncoderKind::Gcn => {
                let w = params.value(&format!("enc{l}.w"))?;
                // pre = A_norm (H W) + b with A_norm symmetric
                let a_grad = gcn_apply(cache.gcn_norm.as_ref().unwrap(), &grad_pre);
                let gw = h_in.matmul_tn(&a_grad)?;
                let mut gb = vec![0.0; grad_pre.cols()];
                for i in 0..grad_pre.rows() {
                    for (o, v) in gb.iter_mut().zip(grad_pre.row(i)) {
                        *o += v;
                    }
                }
                grads.insert(format!("enc{l}.w"), gw);
                grads.insert(format!("enc{l}.b"), Tensor::vector(gb));
                grad_h = a_grad.matmul_nt(w)?;
            }
        }
    }

    Ok(grads)
}

/// Batched forward: logits[i] is graph i of the batch.
pub fn classify_forward(
    batch: &GraphBatch,
    spec: &ModelSpec,
    params: &ParamStore,
) -> Result<(Tensor, Vec<GraphCache>)> {
    let mut logits = Tensor::zeros(vec![batch.graphs.len(), 2]);
    let mut caches = Vec::with_capacity(batch.graphs.len());
    for (i, g) in batch.graphs.iter().enumerate() {
        let (row, cache) = forward_graph(g, spec, params)?;
        logits.row_mut(i).copy_from_slice(&row);
        caches.push(cache);
    }
    Ok((logits, caches))
}

/// Batched reverse pass; per-graph gradients are summed in index order.
pub fn classify_backward(
    batch: &GraphBatch,
    caches: &[GraphCache],
    grad_logits: &Tensor,
    spec: &ModelSpec,
    params: &ParamStore,
) -> Result<BTreeMap<String, Tensor>> {
    if caches.len() != batch.graphs.len() || grad_logits.rows() != batch.graphs.len() {
        return Err(ModelError::StaleCache);
    }
    let mut total: BTreeMap<String, Tensor> = BTreeMap::new();
    for (i, (g, cache)) in batch.graphs.iter().zip(caches).enumerate() {
        let grads = backward_graph(g, cache, grad_logits.row(i), spec, params)?;
        for (name, grad) in grads {
            match total.get_mut(&name) {
                Some(acc) => acc.add_assign(&grad)?,
                None => {
                    total.insert(name, grad);
                }
            }
        }
    }
    Ok(total)
}
