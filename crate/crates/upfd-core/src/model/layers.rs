use crate::autodiff::{linear_forward, relu, Tensor};

use super::{ModelError, Result};

fn check_adjacency(adj: &[Vec<usize>], n: usize) -> Result<()> {
    for neigh in adj {
        for &u in neigh {
            if u >= n {
                return Err(ModelError::BadAdjacency { index: u, nodes: n });
            }
        }
    }
    Ok(())
}

/// Neighbor-mean matrix product N = M·H computed sparsely; isolated
/// nodes get a zero row.
pub(crate) fn neighbor_mean(h: &Tensor, adj: &[Vec<usize>]) -> Result<Tensor> {
    let n = h.rows();
    check_adjacency(adj, n)?;
    let d = h.cols();
    let mut out = Tensor::zeros(vec![n, d]);
    for (v, neigh) in adj.iter().enumerate() {
        if neigh.is_empty() {
            continue;
        }
        let inv = 1.0 / neigh.len() as f64;
        for &u in neigh {
            let src = h.row(u).to_vec();
            let dst = out.row_mut(v);
            for (o, x) in dst.iter_mut().zip(&src) {
                *o += x * inv;
            }
        }
    }
    Ok(out)
}

/// Transpose application of the neighbor-mean operator: scatters g[v]/deg(v)
/// back onto every neighbor of v.
pub(crate) fn neighbor_mean_transpose(g: &Tensor, adj: &[Vec<usize>]) -> Result<Tensor> {
    let n = g.rows();
    check_adjacency(adj, n)?;
    let d = g.cols();
    let mut out = Tensor::zeros(vec![n, d]);
    for (v, neigh) in adj.iter().enumerate() {
        if neigh.is_empty() {
            continue;
        }
        let inv = 1.0 / neigh.len() as f64;
        let src = g.row(v).to_vec();
        for &u in neigh {
            let dst = out.row_mut(u);
            for (o, x) in dst.iter_mut().zip(&src) {
                *o += x * inv;
            }
        }
    }
    Ok(out)
}

/// h'_v = ReLU(W_self h_v + W_neigh mean_{u in N(v)} h_u + b).
pub fn sage_layer_forward(
    h: &Tensor,
    adj: &[Vec<usize>],
    w_self: &Tensor,
    w_neigh: &Tensor,
    b: &Tensor,
) -> Result<Tensor> {
    let (_, pre) = sage_layer_pre(h, adj, w_self, w_neigh, b)?;
    Ok(relu(&pre))
}

/// Pre-activation and the cached neighbor-mean matrix.
pub(crate) fn sage_layer_pre(
    h: &Tensor,
    adj: &[Vec<usize>],
    w_self: &Tensor,
    w_neigh: &Tensor,
    b: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let nm = neighbor_mean(h, adj)?;
    let mut pre = linear_forward(h, w_self, b)?;
    let neigh_term = nm.matmul(w_neigh)?;
    pre.add_assign(&neigh_term)?;
    Ok((nm, pre))
}

/// Symmetric-normalized adjacency with self loops,
/// D^{-1/2} (A + I) D^{-1/2}, as per-node (neighbor, weight) lists.
pub fn gcn_norm_adjacency(adj: &[Vec<usize>], n: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    check_adjacency(adj, n)?;
    let deg: Vec<f64> = (0..n).map(|v| (adj[v].len() + 1) as f64).collect();
    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        let mut row = Vec::with_capacity(adj[v].len() + 1);
        row.push((v, 1.0 / deg[v]));
        for &u in &adj[v] {
            row.push((u, 1.0 / (deg[v] * deg[u]).sqrt()));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Sparse product of the normalized adjacency with a dense matrix.
pub(crate) fn gcn_apply(norm: &[Vec<(usize, f64)>], h: &Tensor) -> Tensor {
    let n = h.rows();
    let d = h.cols();
    let mut out = Tensor::zeros(vec![n, d]);
    for (v, row) in norm.iter().enumerate() {
        for &(u, w) in row {
            let src = h.row(u).to_vec();
            let dst = out.row_mut(v);
            for (o, x) in dst.iter_mut().zip(&src) {
                *o += w * x;
            }
        }
    }
    out
}

/// H' = ReLU(D^{-1/2}(A+I)D^{-1/2} H W + b).
pub fn gcn_layer_forward(
    h: &Tensor,
    adj: &[Vec<usize>],
    w: &Tensor,
    b: &Tensor,
) -> Result<Tensor> {
    let norm = gcn_norm_adjacency(adj, h.rows())?;
    let hw = h.matmul(w)?;
    let mut pre = gcn_apply(&norm, &hw);
    let cols = pre.cols();
    for i in 0..pre.rows() {
        let row = pre.row_mut(i);
        for j in 0..cols {
            row[j] += b.data()[j];
        }
    }
    Ok(relu(&pre))
}

/// Column-wise mean over all node embeddings.
pub fn readout_mean(h: &Tensor) -> Result<Vec<f64>> {
    let n = h.rows();
    if n == 0 || h.numel() == 0 {
        return Err(ModelError::EmptyGraph);
    }
    let d = h.cols();
    let mut out = vec![0.0; d];
    for i in 0..n {
        for (o, x) in out.iter_mut().zip(h.row(i)) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= n as f64;
    }
    Ok(out)
}

/// Concatenate the graph embedding with the projected news embedding
/// (graph embedding first), or pass the graph embedding through when
/// news fusion is ablated.
pub fn fuse(graph_emb: &[f64], news_proj: &[f64], fuse_news: bool) -> Vec<f64> {
    if fuse_news {
        let mut out = Vec::with_capacity(graph_emb.len() + news_proj.len());
        out.extend_from_slice(graph_emb);
        out.extend_from_slice(news_proj);
        out
    } else {
        graph_emb.to_vec()
    }
}
