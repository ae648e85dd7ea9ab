use rand::Rng;

use super::{Matrix, NnError, Scalar};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Fully connected network with a flat parameter vector.
///
/// Layout: for each layer `l` with fan-in `n` and fan-out `m`, an `n×m`
/// row-major weight block followed by `m` biases. The forward map of a
/// layer is `x·W + b`, so row `i` of `W` holds the weights leaving input `i`.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    hidden: Activation,
    params: Vec<T>,
    version: u64,
}

// `version` only guards cache reuse, so it takes no part in equality.
impl<T: PartialEq> PartialEq for Mlp<T> {
    fn eq(&self, o: &Self) -> bool {
        self.sizes == o.sizes && self.hidden == o.hidden && self.params == o.params
    }
}

/// Activations recorded by [`Mlp::forward`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// `acts[0]` is the input, `acts[l]` the post-activation output of layer `l`.
    acts: Vec<Matrix<T>>,
    version: u64,
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub input: Matrix<T>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Scalar> Mlp<T> {
    /// All-zero network. Forward output equals the (zero) output bias.
    pub fn zeros(sizes: &[usize], hidden: Activation) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Layout(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self { sizes: sizes.to_vec(), hidden, params: vec![T::zero(); param_count(sizes)], version: 0 })
    }

    /// Uniform fan-in initialization (`U(-g/sqrt(n), g/sqrt(n))`, with `g`
    /// chosen per activation), biases zero. The last layer is further scaled
    /// by `output_scale`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output_scale: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes, hidden)?;
        let gain = match hidden {
            Activation::Tanh => 1.0,
            Activation::Relu => std::f64::consts::SQRT_2,
        };
        let n_layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut bound = gain * (3.0 / fan_in as f64).sqrt();
            if l + 1 == n_layers {
                bound *= output_scale;
            }
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = T::of_f64(rng.random_range(-1.0..=1.0) * bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.params
    }

    pub(crate) fn from_parts(sizes: Vec<usize>, hidden: Activation, params: Vec<T>) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Layout(format!("bad layer sizes {sizes:?}")));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(NnError::DimMismatch { expected, got: params.len(), context: "parameter vector" });
        }
        Ok(Self { sizes, hidden, params, version: 0 })
    }

    /// (weight offset, bias offset) of layer `l`.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let off: usize = self.sizes[..l + 1].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    fn check_input(&self, input: &Matrix<T>) -> Result<(), NnError> {
        if input.cols != self.input_dim() {
            return Err(NnError::DimMismatch {
                expected: self.input_dim(),
                got: input.cols,
                context: "network input width",
            });
        }
        Ok(())
    }

    fn layer(&self, l: usize, x: &Matrix<T>) -> Matrix<T> {
        let (n, m) = (self.sizes[l], self.sizes[l + 1]);
        let (w_off, b_off) = self.offsets(l);
        let bias = &self.params[b_off..b_off + m];
        let mut out = Matrix::zeros(x.rows, m);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(bias);
        }
        T::gemm(
            x.rows,
            n,
            m,
            T::one(),
            &x.data,
            n as isize,
            1,
            &self.params[w_off..w_off + n * m],
            m as isize,
            1,
            T::one(),
            &mut out.data,
            m as isize,
            1,
        );
        if l + 2 < self.sizes.len() {
            match self.hidden {
                Activation::Tanh => out.data.iter_mut().for_each(|v| *v = v.tanh()),
                Activation::Relu => out.data.iter_mut().for_each(|v| {
                    if *v < T::zero() {
                        *v = T::zero()
                    }
                }),
            }
        }
        out
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>, NnError> {
        self.check_input(input)?;
        let mut x = self.layer(0, input);
        for l in 1..self.sizes.len() - 1 {
            x = self.layer(l, &x);
        }
        Ok(x)
    }

    pub fn forward(&self, input: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>), NnError> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.clone());
        for l in 0..self.sizes.len() - 1 {
            let next = self.layer(l, acts.last().unwrap());
            acts.push(next);
        }
        let out = acts.last().unwrap().clone();
        Ok((out, ForwardCache { acts, version: self.version }))
    }

    /// Backpropagate `grad_out` (dL/d output, same shape as the output batch).
    /// Parameter gradients are summed over the batch.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Matrix<T>) -> Result<Gradients<T>, NnError> {
        if cache.version != self.version || cache.acts.len() != self.sizes.len() {
            return Err(NnError::StaleCache);
        }
        let batch = cache.acts[0].rows;
        if grad_out.rows != batch || grad_out.cols != self.output_dim() {
            return Err(NnError::DimMismatch {
                expected: batch * self.output_dim(),
                got: grad_out.rows * grad_out.cols,
                context: "output gradient shape",
            });
        }
        let mut grads = vec![T::zero(); self.params.len()];
        let mut delta = grad_out.clone();
        for l in (0..self.sizes.len() - 1).rev() {
            let (n, m) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.offsets(l);
            let a_prev = &cache.acts[l];
            // dW = a_prevᵀ · delta
            T::gemm(
                n,
                batch,
                m,
                T::one(),
                &a_prev.data,
                1,
                n as isize,
                &delta.data,
                m as isize,
                1,
                T::zero(),
                &mut grads[w_off..w_off + n * m],
                m as isize,
                1,
            );
            let gb = &mut grads[b_off..b_off + m];
            for r in 0..batch {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g = *g + *d;
                }
            }
            // d a_prev = delta · Wᵀ
            let mut d_prev = Matrix::zeros(batch, n);
            T::gemm(
                batch,
                m,
                n,
                T::one(),
                &delta.data,
                m as isize,
                1,
                &self.params[w_off..w_off + n * m],
                1,
                m as isize,
                T::zero(),
                &mut d_prev.data,
                n as isize,
                1,
            );
            if l > 0 {
                match self.hidden {
                    Activation::Tanh => {
                        for (d, a) in d_prev.data.iter_mut().zip(&a_prev.data) {
                            *d = *d * (T::one() - *a * *a);
                        }
                    }
                    Activation::Relu => {
                        for (d, a) in d_prev.data.iter_mut().zip(&a_prev.data) {
                            if *a <= T::zero() {
                                *d = T::zero();
                            }
                        }
                    }
                }
            }
            delta = d_prev;
        }
        Ok(Gradients { params: grads, input: delta })
    }

    /// Same architecture and parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            sizes: self.sizes.clone(),
            hidden: self.hidden,
            params: self.params.iter().map(|p| U::of_f64(p.as_f64())).collect(),
            version: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central finite differences of `L = Σ_out c ⊙ f(x)` against backprop.
    fn fd_check(sizes: &[usize], act: Activation, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net: Mlp<f64> = Mlp::new(sizes, act, 1.0, &mut rng).unwrap();
        // non-zero biases so ReLU kinks are not hit systematically
        for p in net.params_mut().iter_mut() {
            *p += rng.random_range(-0.05..0.05);
        }
        let x = random_batch(3, sizes[0], &mut rng);
        let c = random_batch(3, *sizes.last().unwrap(), &mut rng);
        let loss = |n: &Mlp<f64>| -> f64 {
            let y = n.predict(&x).unwrap();
            y.data.iter().zip(&c.data).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &c).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let n_params = net.param_count();
        // every parameter for small nets, a strided subset for large ones
        let stride = (n_params / 4000).max(1);
        for i in (0..n_params).step_by(stride) {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let lp = loss(&net);
            net.params_mut()[i] = orig - h;
            let lm = loss(&net);
            net.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - g.params[i]).abs() / fd.abs().max(g.params[i].abs()).max(1e-3);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net: Mlp<f64> = Mlp::zeros(&[3, 3], Activation::Tanh).unwrap();
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let mut net: Mlp<f32> = Mlp::zeros(&[4, 5, 2], Activation::Relu).unwrap();
        let n = net.param_count();
        net.params_mut()[n - 2] = 0.25;
        net.params_mut()[n - 1] = -1.5;
        let x = Matrix::from_vec(1, 4, vec![9.0, -3.0, 2.0, 1.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap().data, vec![0.25, -1.5]);
    }

    #[test]
    fn batch_forward_equals_stacked_single_forwards() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net: Mlp<f64> = Mlp::new(&[5, 8, 3], Activation::Tanh, 1.0, &mut rng).unwrap();
        let x = random_batch(2, 5, &mut rng);
        let both = net.predict(&x).unwrap();
        let a = net.predict(&x.select_rows(&[0])).unwrap();
        let b = net.predict(&x.select_rows(&[1])).unwrap();
        assert_eq!(both.data, [a.data, b.data].concat());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net: Mlp<f32> = Mlp::zeros(&[4, 2], Activation::Tanh).unwrap();
        let x = Matrix::zeros(1, 3);
        assert!(matches!(net.predict(&x), Err(NnError::DimMismatch { .. })));
    }

    #[test]
    fn linear_layer_gradient_matches_finite_differences() {
        for seed in 0..5 {
            assert!(fd_check(&[6, 1], Activation::Tanh, seed) < 1e-4);
        }
    }

    #[test]
    fn deep_tanh_and_relu_gradients_match_finite_differences() {
        assert!(fd_check(&[7, 16, 16, 3], Activation::Tanh, 11) < 1e-4);
        assert!(fd_check(&[7, 16, 16, 3], Activation::Relu, 12) < 1e-4);
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net: Mlp<f64> = Mlp::new(&[4, 6, 2], Activation::Relu, 1.0, &mut rng).unwrap();
        let x = random_batch(5, 4, &mut rng);
        let (_, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(5, 2)).unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_gradient_is_sum_of_sample_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net: Mlp<f64> = Mlp::new(&[3, 5, 2], Activation::Tanh, 1.0, &mut rng).unwrap();
        let x = random_batch(4, 3, &mut rng);
        let go = random_batch(4, 2, &mut rng);
        let (_, cache) = net.forward(&x).unwrap();
        let total = net.backward(&cache, &go).unwrap().params;
        let mut summed = vec![0.0; total.len()];
        for r in 0..4 {
            let (_, c) = net.forward(&x.select_rows(&[r])).unwrap();
            let g = net.backward(&c, &go.select_rows(&[r])).unwrap();
            summed.iter_mut().zip(&g.params).for_each(|(s, v)| *s += v);
        }
        for (a, b) in total.iter().zip(&summed) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net: Mlp<f64> = Mlp::zeros(&[2, 2], Activation::Tanh).unwrap();
        let (_, cache) = net.forward(&Matrix::zeros(1, 2)).unwrap();
        net.params_mut()[0] = 1.0;
        assert!(matches!(net.backward(&cache, &Matrix::zeros(1, 2)), Err(NnError::StaleCache)));
    }
}
