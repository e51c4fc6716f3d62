use super::Params;

/// Scales `g` in place so its L2 norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= s);
    }
    norm
}

/// Gradient descent with classical momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(n: usize, lr: f64, momentum: f64) -> Self {
        Momentum { lr, momentum, velocity: vec![0.0; n] }
    }

    pub fn step(&mut self, p: &mut Params, g: &[f64]) {
        assert_eq!(g.len(), p.data.len(), "gradient length");
        for ((v, w), d) in self.velocity.iter_mut().zip(&mut p.data).zip(g) {
            *v = self.momentum * *v - self.lr * d;
            *w += *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_rest_is_a_no_op() {
        let mut p = Params { data: vec![1.0, -2.0], ..Params::default() };
        let before = p.clone();
        let mut opt = Momentum::new(2, 0.1, 0.9);
        opt.step(&mut p, &[0.0, 0.0]);
        assert_eq!(p, before);
    }

    #[test]
    fn clip_scales_to_bound() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
