//! Neural matrix factorization: `σ(hᵀ mlp([u, v]))` with ReLU hidden layers.

use rand::Rng;

use super::loss::{bce, bce_logit_grad};
use super::tensor::{axpy, dot, sigmoid, Gradient, Param, RowGrad};
use super::Sample;

pub const USERS: usize = 0;
pub const ITEMS: usize = 1;

#[derive(Debug, Clone)]
pub struct NeuMf {
    pub params: Vec<Param>,
    dim: usize,
    hidden: Vec<usize>,
}

struct Trace {
    /// acts[0] is the concatenated input; acts[k+1] = relu(pre[k]).
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl NeuMf {
    pub fn new<R: Rng + ?Sized>(
        n_users: usize,
        n_items: usize,
        dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        assert!(!hidden.is_empty(), "NeuMF needs at least one hidden layer");
        let mut params = vec![
            Param::uniform(n_users, dim, 0.01, rng),
            Param::uniform(n_items, dim, 0.01, rng),
        ];
        let mut fan_in = 2 * dim;
        for &width in hidden {
            let bound = (6.0 / fan_in as f64).sqrt();
            params.push(Param::uniform(width, fan_in, bound, rng));
            params.push(Param::zeros(1, width));
            fan_in = width;
        }
        let last = *hidden.last().unwrap();
        params.push(Param::uniform(1, last, (6.0 / last as f64).sqrt(), rng));
        Self {
            params,
            dim,
            hidden: hidden.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn n_users(&self) -> usize {
        self.params[USERS].rows
    }

    pub fn n_items(&self) -> usize {
        self.params[ITEMS].rows
    }

    fn weight(&self, k: usize) -> &Param {
        &self.params[2 + 2 * k]
    }

    fn bias(&self, k: usize) -> &Param {
        &self.params[3 + 2 * k]
    }

    fn output(&self) -> &Param {
        self.params.last().unwrap()
    }

    fn new_trace(&self) -> Trace {
        let mut acts = vec![vec![0.0; 2 * self.dim]];
        let mut pre = Vec::new();
        for &w in &self.hidden {
            acts.push(vec![0.0; w]);
            pre.push(vec![0.0; w]);
        }
        Trace { acts, pre }
    }

    fn forward(&self, user: usize, item: usize, tr: &mut Trace) -> f64 {
        let d = self.dim;
        tr.acts[0][..d].copy_from_slice(self.params[USERS].row(user));
        tr.acts[0][d..].copy_from_slice(self.params[ITEMS].row(item));
        for k in 0..self.hidden.len() {
            let (w, b) = (self.weight(k), self.bias(k));
            let (head, tail) = tr.acts.split_at_mut(k + 1);
            let input = &head[k];
            let out = &mut tail[0];
            for o in 0..w.rows {
                let a = dot(w.row(o), input) + b.data[o];
                tr.pre[k][o] = a;
                out[o] = a.max(0.0);
            }
        }
        dot(&self.output().data, tr.acts.last().unwrap())
    }

    pub fn logit(&self, user: usize, item: usize) -> f64 {
        let mut tr = self.new_trace();
        self.forward(user, item, &mut tr)
    }

    pub fn predict_pairs(&self, pairs: &[(usize, usize)]) -> Vec<f64> {
        let mut tr = self.new_trace();
        pairs
            .iter()
            .map(|&(u, i)| sigmoid(self.forward(u, i, &mut tr)))
            .collect()
    }

    /// Mean loss over the batch and exact gradients for every tensor.
    pub fn loss_and_grad(&self, batch: &[(usize, usize, f64)]) -> (f64, Vec<Option<Gradient>>) {
        let d = self.dim;
        let n_layers = self.hidden.len();
        let scale = 1.0 / batch.len() as f64;
        let mut tr = self.new_trace();
        let mut user_g = RowGrad::new(d);
        let mut item_g = RowGrad::new(d);
        let mut dense: Vec<Vec<f64>> = self.params[2..].iter().map(|p| vec![0.0; p.len()]).collect();
        let mut deltas: Vec<Vec<f64>> = tr.acts.iter().map(|a| vec![0.0; a.len()]).collect();
        let mut loss = 0.0;

        for &(u, i, target) in batch {
            let z = self.forward(u, i, &mut tr);
            let s = sigmoid(z);
            loss += bce(s, target);
            let dz = bce_logit_grad(s, target) * scale;
            if dz == 0.0 {
                continue;
            }
            // Output vector.
            axpy(dz, &tr.acts[n_layers], dense.last_mut().unwrap());
            deltas[n_layers].copy_from_slice(&self.output().data);
            deltas[n_layers].iter_mut().for_each(|x| *x *= dz);

            for k in (0..n_layers).rev() {
                let w = self.weight(k);
                let (lower, upper) = deltas.split_at_mut(k + 1);
                let delta = &mut upper[0];
                for (dv, &p) in delta.iter_mut().zip(&tr.pre[k]) {
                    if p <= 0.0 {
                        *dv = 0.0;
                    }
                }
                let prev = &mut lower[k];
                prev.iter_mut().for_each(|x| *x = 0.0);
                let input = &tr.acts[k];
                let (dw, rest) = dense[2 * k..].split_at_mut(1);
                let db = &mut rest[0];
                for o in 0..w.rows {
                    let g = delta[o];
                    if g == 0.0 {
                        continue;
                    }
                    axpy(g, input, &mut dw[0][o * w.cols..(o + 1) * w.cols]);
                    db[o] += g;
                    axpy(g, w.row(o), prev);
                }
            }
            let dx = &deltas[0];
            axpy(1.0, &dx[..d], user_g.row_mut(u));
            axpy(1.0, &dx[d..], item_g.row_mut(i));
        }

        let mut grads = vec![Some(user_g.finish()), Some(item_g.finish())];
        grads.extend(dense.into_iter().map(|g| Some(Gradient::Dense(g))));
        (loss * scale, grads)
    }

    /// Precomputes each item's contribution to the first layer so ranking a
    /// user against the whole catalogue skips the widest matrix product.
    pub fn item_cache(&self) -> NeuMfItemCache {
        let d = self.dim;
        let w0 = self.weight(0);
        let items = &self.params[ITEMS];
        let mut part = vec![0.0; items.rows * w0.rows];
        for i in 0..items.rows {
            let v = items.row(i);
            for o in 0..w0.rows {
                part[i * w0.rows + o] = dot(&w0.row(o)[d..], v);
            }
        }
        NeuMfItemCache {
            width: w0.rows,
            part,
        }
    }

    pub fn score_all_items(&self, user: usize, cache: &NeuMfItemCache) -> Vec<f64> {
        let d = self.dim;
        let w0 = self.weight(0);
        let u = self.params[USERS].row(user);
        let user_part: Vec<f64> = (0..w0.rows)
            .map(|o| dot(&w0.row(o)[..d], u) + self.bias(0).data[o])
            .collect();
        let mut tr = self.new_trace();
        let n_items = self.n_items();
        let mut out = Vec::with_capacity(n_items);
        for i in 0..n_items {
            let ip = &cache.part[i * cache.width..(i + 1) * cache.width];
            for o in 0..cache.width {
                tr.acts[1][o] = (user_part[o] + ip[o]).max(0.0);
            }
            for k in 1..self.hidden.len() {
                let (w, b) = (self.weight(k), self.bias(k));
                let (head, tail) = tr.acts.split_at_mut(k + 1);
                for o in 0..w.rows {
                    tail[0][o] = (dot(w.row(o), &head[k]) + b.data[o]).max(0.0);
                }
            }
            out.push(sigmoid(dot(&self.output().data, tr.acts.last().unwrap())));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct NeuMfItemCache {
    width: usize,
    part: Vec<f64>,
}

pub(crate) fn as_index_batch(batch: &[Sample]) -> Vec<(usize, usize, f64)> {
    batch
        .iter()
        .map(|s| (s.user.index(), s.item.index(), s.target))
        .collect()
}
