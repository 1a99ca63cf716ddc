//! Fully connected residual network with a hand-written backward pass.
//!
//! Activations are stored feature-major: a batch is a `features × batch`
//! matrix, one column per example.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Linear {
    fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-bound, bound).expect("finite bound");
        Linear {
            w: DMatrix::from_fn(fan_out, fan_in, |_, _| dist.sample(rng)),
            b: DVector::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Linear {
            w: DMatrix::zeros(self.w.nrows(), self.w.ncols()),
            b: DVector::zeros(self.b.len()),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.w.nrows(), x.ncols());
        for c in 0..x.ncols() {
            out.column_mut(c).copy_from(&self.b);
        }
        gemm(1.0, &self.w, false, x, false, 1.0, &mut out);
        out
    }
}

/// `c ← alpha · op(a) · op(b) + beta · c` for column-major nalgebra storage.
pub(crate) fn gemm(alpha: f64, a: &DMatrix<f64>, ta: bool, b: &DMatrix<f64>, tb: bool, beta: f64, c: &mut DMatrix<f64>) {
    let (m, k) = if ta { (a.ncols(), a.nrows()) } else { (a.nrows(), a.ncols()) };
    let (k2, n) = if tb { (b.ncols(), b.nrows()) } else { (b.nrows(), b.ncols()) };
    assert_eq!(k, k2, "inner dimensions differ");
    assert_eq!((c.nrows(), c.ncols()), (m, n), "output shape mismatch");
    let (ars, acs) = if ta { (a.nrows() as isize, 1) } else { (1, a.nrows() as isize) };
    let (brs, bcs) = if tb { (b.nrows() as isize, 1) } else { (1, b.nrows() as isize) };
    let crs = 1;
    let ccs = c.nrows() as isize;
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe the column-major buffers of `a`, `b` and
    // `c`, whose shapes were checked above; `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            ars,
            acs,
            b.as_ptr(),
            brs,
            bcs,
            beta,
            c.as_mut_ptr(),
            crs,
            ccs,
        );
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// Input projection, `hidden_layers − 1` residual SiLU blocks, linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer values kept from the forward pass.
pub struct ForwardCache {
    input: DMatrix<f64>,
    pre: Vec<DMatrix<f64>>,
    hidden: Vec<DMatrix<f64>>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        hidden_layers: usize,
        output_dim: usize,
        zero_init_output: bool,
        rng: &mut R,
    ) -> Self {
        assert!(hidden_layers >= 1, "need at least one hidden layer");
        let mut layers = vec![Linear::init(input_dim, hidden_dim, rng)];
        for _ in 1..hidden_layers {
            layers.push(Linear::init(hidden_dim, hidden_dim, rng));
        }
        let mut head = Linear::init(hidden_dim, output_dim, rng);
        if zero_init_output {
            head.w.fill(0.0);
        }
        layers.push(head);
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp { layers: self.layers.iter().map(Linear::zeros_like).collect() }
    }

    /// Parameter buffers in a fixed order (weights then bias, per layer).
    pub fn buffers(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice(), l.b.as_slice()])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_mut_slice(), l.b.as_mut_slice()])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.buffers().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for buf in self.buffers_mut() {
            buf.copy_from_slice(&values[offset..offset + buf.len()]);
            offset += buf.len();
        }
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }

    pub fn forward(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_cached(input).0
    }

    pub fn forward_cached(&self, input: &DMatrix<f64>) -> (DMatrix<f64>, ForwardCache) {
        let n_hidden = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(n_hidden);
        let mut hidden: Vec<DMatrix<f64>> = Vec::with_capacity(n_hidden);
        for (k, layer) in self.layers[..n_hidden].iter().enumerate() {
            let z = layer.apply(if k == 0 { input } else { &hidden[k - 1] });
            let mut h = z.map(silu);
            if k > 0 {
                h += &hidden[k - 1];
            }
            pre.push(z);
            hidden.push(h);
        }
        let out = self.layers[n_hidden].apply(&hidden[n_hidden - 1]);
        (out, ForwardCache { input: input.clone(), pre, hidden })
    }

    /// Parameter gradients given `∂loss/∂output`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &DMatrix<f64>) -> Mlp {
        let n_hidden = self.layers.len() - 1;
        let mut grads = self.zeros_like();

        let head = &self.layers[n_hidden];
        gemm(1.0, d_out, false, &cache.hidden[n_hidden - 1], true, 0.0, &mut grads.layers[n_hidden].w);
        grads.layers[n_hidden].b = d_out.column_sum();
        let mut dh = DMatrix::zeros(head.w.ncols(), d_out.ncols());
        gemm(1.0, &head.w, true, d_out, false, 0.0, &mut dh);

        for k in (0..n_hidden).rev() {
            let dz = dh.zip_map(&cache.pre[k], |g, z| g * silu_grad(z));
            let layer_in = if k == 0 { &cache.input } else { &cache.hidden[k - 1] };
            gemm(1.0, &dz, false, layer_in, true, 0.0, &mut grads.layers[k].w);
            grads.layers[k].b = dz.column_sum();
            if k > 0 {
                // Residual path carries dh through unchanged.
                gemm(1.0, &self.layers[k].w, true, &dz, false, 1.0, &mut dh);
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gemm_matches_nalgebra_for_all_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let a = DMatrix::from_fn(3, 5, |_, _| u.sample(&mut rng));
        let b = DMatrix::from_fn(5, 4, |_, _| u.sample(&mut rng));
        let mut c = DMatrix::zeros(3, 4);
        gemm(1.0, &a, false, &b, false, 0.0, &mut c);
        assert!((&c - &a * &b).amax() < 1e-14);

        let at = a.transpose();
        let bt = b.transpose();
        gemm(1.0, &at, true, &bt, true, 0.0, &mut c);
        assert!((&c - &a * &b).amax() < 1e-14);

        let mut c2 = DMatrix::from_element(3, 4, 1.0);
        gemm(2.0, &at, true, &b, false, 1.0, &mut c2);
        assert!((c2 - (&a * &b * 2.0).add_scalar(1.0)).amax() < 1e-14);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Mlp::new(3, 5, 3, 2, false, &mut rng);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let x = DMatrix::from_fn(3, 4, |_, _| u.sample(&mut rng));
        let target = DMatrix::from_fn(2, 4, |_, _| u.sample(&mut rng));
        let loss = |n: &Mlp| (n.forward(&x) - &target).norm_squared();

        let (out, cache) = net.forward_cached(&x);
        let grads = net.backward(&cache, &((out - &target) * 2.0)).flat();
        let theta = net.flat();
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut p = net.clone();
            let mut t = theta.clone();
            t[k] += h;
            p.set_flat(&t);
            let up = loss(&p);
            t[k] -= 2.0 * h;
            p.set_flat(&t);
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grads[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grads[k]);
        }
    }

    #[test]
    fn zero_init_head_outputs_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(4, 8, 2, 3, true, &mut rng);
        let out = net.forward(&DMatrix::from_element(4, 2, 0.7));
        assert!(out.iter().all(|&v| v == 0.0));
    }
}
