use super::{sigmoid, Params, Slot};
use rand::Rng;

/// `y = W x + b`, `W` stored row-major as `[n_out][n_in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: Slot,
    pub b: Slot,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn new(p: &mut Params, name: &str, n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (n_in as f64).sqrt();
        let w = p.add(&format!("{name}.weight"), &[n_out, n_in], scale, rng);
        let b = p.add(&format!("{name}.bias"), &[n_out], 0.0, rng);
        Linear { w, b, n_in, n_out }
    }

    pub fn forward(&self, p: &Params, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in);
        let w = p.get(self.w);
        let mut y = p.get(self.b).to_vec();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * self.n_in..(o + 1) * self.n_in];
            *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        y
    }

    /// Accumulates parameter gradients into `g` and returns `dL/dx`.
    pub fn backward(&self, p: &Params, g: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        let w = p.get(self.w);
        let mut dx = vec![0.0; self.n_in];
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g[self.b.offset + o] += d;
            let base = self.w.offset + o * self.n_in;
            let row = &w[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                g[base + i] += d * x[i];
                dx[i] += d * row[i];
            }
        }
        dx
    }
}

/// Gated recurrent cell.
///
/// ```text
/// r = sig(Wr x + Ur h + b)      z = sig(Wz x + Uz h + b)
/// n = tanh(Wn x + b + r * (Un h + b))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gru {
    pub wx: Linear,
    pub wh: Linear,
    pub hidden: usize,
}

/// Activations kept for the backward pass of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    gh_n: Vec<f64>,
}

impl Gru {
    pub fn new(p: &mut Params, name: &str, n_in: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Gru {
            wx: Linear::new(p, &format!("{name}.input"), n_in, 3 * hidden, rng),
            wh: Linear::new(p, &format!("{name}.hidden"), hidden, 3 * hidden, rng),
            hidden,
        }
    }

    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.hidden]
    }

    pub fn step(&self, p: &Params, x: &[f64], h: &[f64]) -> (Vec<f64>, GruCache) {
        let hs = self.hidden;
        let gx = self.wx.forward(p, x);
        let gh = self.wh.forward(p, h);
        let mut r = vec![0.0; hs];
        let mut z = vec![0.0; hs];
        let mut n = vec![0.0; hs];
        let mut out = vec![0.0; hs];
        for i in 0..hs {
            r[i] = sigmoid(gx[i] + gh[i]);
            z[i] = sigmoid(gx[hs + i] + gh[hs + i]);
            n[i] = (gx[2 * hs + i] + r[i] * gh[2 * hs + i]).tanh();
            out[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
        }
        let gh_n = gh[2 * hs..].to_vec();
        (out, GruCache { x: x.to_vec(), h_prev: h.to_vec(), r, z, n, gh_n })
    }

    /// Backpropagates `dh` (gradient wrt this step's output) and returns
    /// `(dL/dx, dL/dh_prev)`.
    pub fn backward(&self, p: &Params, g: &mut [f64], c: &GruCache, dh: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hs = self.hidden;
        let mut dgx = vec![0.0; 3 * hs];
        let mut dgh = vec![0.0; 3 * hs];
        let mut dh_prev = vec![0.0; hs];
        for i in 0..hs {
            let dn = dh[i] * (1.0 - c.z[i]);
            let dz = dh[i] * (c.h_prev[i] - c.n[i]);
            dh_prev[i] = dh[i] * c.z[i];
            let da_n = dn * (1.0 - c.n[i] * c.n[i]);
            let dr = da_n * c.gh_n[i];
            let da_r = dr * c.r[i] * (1.0 - c.r[i]);
            let da_z = dz * c.z[i] * (1.0 - c.z[i]);
            dgx[i] = da_r;
            dgx[hs + i] = da_z;
            dgx[2 * hs + i] = da_n;
            dgh[i] = da_r;
            dgh[hs + i] = da_z;
            dgh[2 * hs + i] = da_n * c.r[i];
        }
        let dx = self.wx.backward(p, g, &c.x, &dgx);
        let dhh = self.wh.backward(p, g, &c.h_prev, &dgh);
        for i in 0..hs {
            dh_prev[i] += dhh[i];
        }
        (dx, dh_prev)
    }
}

/// Token table; a phrase embeds as the mean of its token vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Embedding {
    pub table: Slot,
    pub n: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(p: &mut Params, name: &str, n: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let table = p.add(&format!("{name}.table"), &[n, dim], 1.0, rng);
        Embedding { table, n, dim }
    }

    pub fn mean(&self, p: &Params, ids: &[usize]) -> Vec<f64> {
        let t = p.get(self.table);
        let mut out = vec![0.0; self.dim];
        if ids.is_empty() {
            return out;
        }
        for &id in ids {
            for (o, v) in out.iter_mut().zip(&t[id * self.dim..(id + 1) * self.dim]) {
                *o += v;
            }
        }
        let k = ids.len() as f64;
        out.iter_mut().for_each(|v| *v /= k);
        out
    }

    pub fn backward_mean(&self, g: &mut [f64], ids: &[usize], dy: &[f64]) {
        if ids.is_empty() {
            return;
        }
        let k = ids.len() as f64;
        for &id in ids {
            let base = self.table.offset + id * self.dim;
            for (j, d) in dy.iter().enumerate() {
                g[base + j] += d / k;
            }
        }
    }
}
