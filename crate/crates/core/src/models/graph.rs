//! Graph-convolution recommenders over the user–item bipartite graph.
//!
//! Nodes are laid out users first, then items. Both models score a pair with
//! the logistic of the inner product of the final node embeddings.

use rand::Rng;

use super::loss::{bce, bce_logit_grad};
use super::tensor::{axpy, dot, sigmoid, Gradient, Param};

const LEAKY_SLOPE: f64 = 0.2;

/// Symmetric-normalized bipartite adjacency `D^{-1/2} A D^{-1/2}` in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n_users: usize,
    n_items: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl Adjacency {
    pub fn empty(n_users: usize, n_items: usize) -> Self {
        Self::from_edges(n_users, n_items, std::iter::empty())
    }

    /// Duplicate edges are collapsed.
    pub fn from_edges(
        n_users: usize,
        n_items: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let n = n_users + n_items;
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, i) in edges {
            assert!(u < n_users && i < n_items, "edge ({u},{i}) out of range");
            lists[u].push((n_users + i) as u32);
            lists[n_users + i].push(u as u32);
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        let degree: Vec<f64> = lists.iter().map(|l| l.len() as f64).collect();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (a, l) in lists.iter().enumerate() {
            for &b in l {
                neighbors.push(b);
                weights.push(1.0 / (degree[a] * degree[b as usize]).sqrt());
            }
            offsets.push(neighbors.len());
        }
        Self {
            n_users,
            n_items,
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// `out = Â x` for a row-major `n_nodes × dim` matrix.
    pub fn spmm(&self, x: &[f64], dim: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for a in 0..self.n_nodes() {
            let row = &mut out[a * dim..(a + 1) * dim];
            for k in self.offsets[a]..self.offsets[a + 1] {
                let b = self.neighbors[k] as usize;
                axpy(self.weights[k], &x[b * dim..(b + 1) * dim], row);
            }
        }
    }

    /// Dense copy of Â, for tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for k in self.offsets[a]..self.offsets[a + 1] {
                out[a * n + self.neighbors[k] as usize] = self.weights[k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    LightGcn,
    Ngcf,
}

#[derive(Debug, Clone)]
pub struct GraphModel {
    pub kind: GraphKind,
    pub params: Vec<Param>,
    dim: usize,
    layers: usize,
    adjacency: Adjacency,
    propagated: Option<Vec<f64>>,
}

/// Per-layer intermediates kept for the backward pass.
struct Trace {
    /// E_0 .. E_L, each n_nodes × dim.
    layers: Vec<Vec<f64>>,
    /// NGCF only: Â E_l and the pre-activation Z_l for l < L.
    neigh: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl GraphModel {
    pub fn new<R: Rng + ?Sized>(
        kind: GraphKind,
        n_users: usize,
        n_items: usize,
        dim: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        let mut params = vec![
            Param::uniform(n_users, dim, 0.01, rng),
            Param::uniform(n_items, dim, 0.01, rng),
        ];
        if kind == GraphKind::Ngcf {
            let bound = (6.0 / (2 * dim) as f64).sqrt();
            for _ in 0..layers {
                params.push(Param::uniform(dim, dim, bound, rng));
                params.push(Param::uniform(dim, dim, bound, rng));
                params.push(Param::zeros(1, dim));
            }
        }
        Self {
            kind,
            params,
            dim,
            layers,
            adjacency: Adjacency::empty(n_users, n_items),
            propagated: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn n_users(&self) -> usize {
        self.params[0].rows
    }

    pub fn n_items(&self) -> usize {
        self.params[1].rows
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn set_adjacency(&mut self, adjacency: Adjacency) {
        assert_eq!(adjacency.n_users(), self.n_users());
        assert_eq!(adjacency.n_items(), self.n_items());
        self.adjacency = adjacency;
        self.propagated = None;
    }

    /// Width of a final node embedding.
    pub fn out_dim(&self) -> usize {
        match self.kind {
            GraphKind::LightGcn => self.dim,
            GraphKind::Ngcf => self.dim * (self.layers + 1),
        }
    }

    pub fn invalidate(&mut self) {
        self.propagated = None;
    }

    pub fn is_propagated(&self) -> bool {
        self.propagated.is_some()
    }

    pub fn propagated(&self) -> Option<&[f64]> {
        self.propagated.as_deref()
    }

    /// Materialize final embeddings for the current parameters.
    pub fn propagate(&mut self) -> &[f64] {
        if self.propagated.is_none() {
            let trace = self.forward();
            self.propagated = Some(self.combine(&trace));
        }
        self.propagated.as_deref().unwrap()
    }

    fn layer_zero(&self) -> Vec<f64> {
        let mut e0 = self.params[0].data.clone();
        e0.extend_from_slice(&self.params[1].data);
        e0
    }

    fn forward(&self) -> Trace {
        let n = self.adjacency.n_nodes();
        let d = self.dim;
        let mut trace = Trace {
            layers: vec![self.layer_zero()],
            neigh: Vec::new(),
            pre: Vec::new(),
        };
        for l in 0..self.layers {
            let prev = &trace.layers[l];
            let mut s = vec![0.0; n * d];
            self.adjacency.spmm(prev, d, &mut s);
            match self.kind {
                GraphKind::LightGcn => trace.layers.push(s),
                GraphKind::Ngcf => {
                    let (w1, w2, b) = self.ngcf_weights(l);
                    let mut z = vec![0.0; n * d];
                    let mut x1 = vec![0.0; d];
                    let mut x2 = vec![0.0; d];
                    for a in 0..n {
                        let (sa, ea) = (&s[a * d..(a + 1) * d], &prev[a * d..(a + 1) * d]);
                        for k in 0..d {
                            x1[k] = sa[k] + ea[k];
                            x2[k] = sa[k] * ea[k];
                        }
                        let za = &mut z[a * d..(a + 1) * d];
                        za.copy_from_slice(&b.data);
                        for k in 0..d {
                            axpy(x1[k], w1.row(k), za);
                            axpy(x2[k], w2.row(k), za);
                        }
                    }
                    let next = z.iter().map(|&v| if v > 0.0 { v } else { LEAKY_SLOPE * v }).collect();
                    trace.layers.push(next);
                    trace.neigh.push(s);
                    trace.pre.push(z);
                }
            }
        }
        trace
    }

    fn ngcf_weights(&self, l: usize) -> (&Param, &Param, &Param) {
        let base = 2 + 3 * l;
        (&self.params[base], &self.params[base + 1], &self.params[base + 2])
    }

    fn combine(&self, trace: &Trace) -> Vec<f64> {
        let n = self.adjacency.n_nodes();
        let d = self.dim;
        match self.kind {
            GraphKind::LightGcn => {
                let scale = 1.0 / (self.layers + 1) as f64;
                let mut out = vec![0.0; n * d];
                for layer in &trace.layers {
                    axpy(scale, layer, &mut out);
                }
                out
            }
            GraphKind::Ngcf => {
                let w = self.out_dim();
                let mut out = vec![0.0; n * w];
                for a in 0..n {
                    for (l, layer) in trace.layers.iter().enumerate() {
                        out[a * w + l * d..a * w + (l + 1) * d].copy_from_slice(&layer[a * d..(a + 1) * d]);
                    }
                }
                out
            }
        }
    }

    /// Scores from the cached propagation; `None` if it is stale.
    pub fn predict_pairs(&self, pairs: &[(usize, usize)]) -> Option<Vec<f64>> {
        let fin = self.propagated.as_deref()?;
        let w = self.out_dim();
        let nu = self.n_users();
        Some(
            pairs
                .iter()
                .map(|&(u, i)| {
                    sigmoid(dot(&fin[u * w..(u + 1) * w], &fin[(nu + i) * w..(nu + i + 1) * w]))
                })
                .collect(),
        )
    }

    pub fn score_all_items(&self, user: usize) -> Option<Vec<f64>> {
        let fin = self.propagated.as_deref()?;
        let w = self.out_dim();
        let nu = self.n_users();
        let uvec = &fin[user * w..(user + 1) * w];
        Some(
            (0..self.n_items())
                .map(|i| sigmoid(dot(uvec, &fin[(nu + i) * w..(nu + i + 1) * w])))
                .collect(),
        )
    }

    /// Full propagation, batch-mean loss and exact gradients.
    pub fn loss_and_grad(&self, batch: &[(usize, usize, f64)]) -> (f64, Vec<Option<Gradient>>) {
        let n = self.adjacency.n_nodes();
        let d = self.dim;
        let w = self.out_dim();
        let nu = self.n_users();
        let trace = self.forward();
        let fin = self.combine(&trace);
        let scale = 1.0 / batch.len() as f64;

        let mut g_fin = vec![0.0; n * w];
        let mut loss = 0.0;
        for &(u, i, target) in batch {
            let (ur, ir) = (u * w..(u + 1) * w, (nu + i) * w..(nu + i + 1) * w);
            let s = sigmoid(dot(&fin[ur.clone()], &fin[ir.clone()]));
            loss += bce(s, target);
            let dz = bce_logit_grad(s, target) * scale;
            if dz == 0.0 {
                continue;
            }
            axpy(dz, &fin[ir.clone()], &mut g_fin[ur.clone()]);
            axpy(dz, &fin[ur], &mut g_fin[ir]);
        }

        let mut grads: Vec<Option<Gradient>> = vec![None; self.params.len()];
        let g0 = match self.kind {
            GraphKind::LightGcn => {
                // Â is symmetric, so the adjoint of E_l = Â^l E_0 is Â^l.
                let s = 1.0 / (self.layers + 1) as f64;
                let mut acc: Vec<f64> = g_fin.iter().map(|g| g * s).collect();
                let mut cur = acc.clone();
                let mut next = vec![0.0; n * d];
                for _ in 0..self.layers {
                    self.adjacency.spmm(&cur, d, &mut next);
                    std::mem::swap(&mut cur, &mut next);
                    axpy(1.0, &cur, &mut acc);
                }
                acc
            }
            GraphKind::Ngcf => self.ngcf_backward(&trace, &g_fin, &mut grads),
        };
        let (gu, gi) = g0.split_at(nu * d);
        grads[0] = Some(Gradient::Dense(gu.to_vec()));
        grads[1] = Some(Gradient::Dense(gi.to_vec()));
        (loss * scale, grads)
    }

    fn ngcf_backward(&self, trace: &Trace, g_fin: &[f64], grads: &mut [Option<Gradient>]) -> Vec<f64> {
        let n = self.adjacency.n_nodes();
        let d = self.dim;
        let w = self.out_dim();
        let slice_layer = |l: usize| -> Vec<f64> {
            let mut out = vec![0.0; n * d];
            for a in 0..n {
                out[a * d..(a + 1) * d].copy_from_slice(&g_fin[a * w + l * d..a * w + (l + 1) * d]);
            }
            out
        };

        let mut d_e = slice_layer(self.layers);
        for l in (0..self.layers).rev() {
            let (w1, w2, _) = self.ngcf_weights(l);
            let (e, s, z) = (&trace.layers[l], &trace.neigh[l], &trace.pre[l]);
            let dz: Vec<f64> = d_e
                .iter()
                .zip(z)
                .map(|(&g, &zv)| if zv > 0.0 { g } else { LEAKY_SLOPE * g })
                .collect();
            let mut dw1 = vec![0.0; d * d];
            let mut dw2 = vec![0.0; d * d];
            let mut db = vec![0.0; d];
            let mut d_s = vec![0.0; n * d];
            let mut d_prev = slice_layer(l);
            for a in 0..n {
                let r = a * d..(a + 1) * d;
                let (dza, sa, ea) = (&dz[r.clone()], &s[r.clone()], &e[r.clone()]);
                axpy(1.0, dza, &mut db);
                for k in 0..d {
                    axpy(sa[k] + ea[k], dza, &mut dw1[k * d..(k + 1) * d]);
                    axpy(sa[k] * ea[k], dza, &mut dw2[k * d..(k + 1) * d]);
                    let a1 = dot(dza, w1.row(k));
                    let a2 = dot(dza, w2.row(k));
                    d_s[a * d + k] = a1 + a2 * ea[k];
                    d_prev[a * d + k] += a1 + a2 * sa[k];
                }
            }
            let mut through = vec![0.0; n * d];
            self.adjacency.spmm(&d_s, d, &mut through);
            axpy(1.0, &through, &mut d_prev);
            let base = 2 + 3 * l;
            grads[base] = Some(Gradient::Dense(dw1));
            grads[base + 1] = Some(Gradient::Dense(dw2));
            grads[base + 2] = Some(Gradient::Dense(db));
            d_e = d_prev;
        }
        d_e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_tables(m: &mut GraphModel, users: &[f64], items: &[f64]) {
        m.params[0].data = users.to_vec();
        m.params[1].data = items.to_vec();
        m.invalidate();
    }

    #[test]
    fn lightgcn_single_edge_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = GraphModel::new(GraphKind::LightGcn, 1, 1, 2, 1, &mut rng);
        m.set_adjacency(Adjacency::from_edges(1, 1, [(0, 0)]));
        set_tables(&mut m, &[1.0, 2.0], &[3.0, -4.0]);
        let fin = m.propagate().to_vec();
        assert_eq!(&fin[..2], &[2.0, -1.0]);
        assert_eq!(&fin[2..], &[2.0, -1.0]);
    }

    #[test]
    fn zero_layers_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in [GraphKind::LightGcn, GraphKind::Ngcf] {
            let mut m = GraphModel::new(kind, 2, 3, 4, 0, &mut rng);
            m.set_adjacency(Adjacency::from_edges(2, 3, [(0, 1), (1, 2)]));
            let mut e0 = m.params[0].data.clone();
            e0.extend(&m.params[1].data);
            assert_eq!(m.propagate(), e0.as_slice());
        }
    }

    #[test]
    fn unit_two_cycle_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = GraphModel::new(GraphKind::LightGcn, 1, 1, 3, 3, &mut rng);
        m.set_adjacency(Adjacency::from_edges(1, 1, [(0, 0)]));
        set_tables(&mut m, &[1.0; 3], &[1.0; 3]);
        assert!(m.propagate().iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn isolated_node_keeps_layer_zero_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = GraphModel::new(GraphKind::LightGcn, 2, 1, 2, 1, &mut rng);
        m.set_adjacency(Adjacency::from_edges(2, 1, [(0, 0)]));
        set_tables(&mut m, &[1.0, 1.0, 4.0, 6.0], &[1.0, 1.0]);
        let fin = m.propagate();
        assert_eq!(&fin[2..4], &[2.0, 3.0]);
        assert_eq!(m.adjacency().degree(1), 0);
    }

    #[test]
    fn stale_prediction_is_refused() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = GraphModel::new(GraphKind::Ngcf, 1, 2, 2, 1, &mut rng);
        assert!(m.predict_pairs(&[(0, 0)]).is_none());
        m.propagate();
        assert!(m.predict_pairs(&[(0, 1)]).is_some());
    }
}
