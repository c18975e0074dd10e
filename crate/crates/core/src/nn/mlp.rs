use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

impl OutputActivation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::Sigmoid => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(OutputActivation::Identity),
            1 => Some(OutputActivation::Sigmoid),
            _ => None,
        }
    }
}

/// Fully connected network: tanh hidden layers, configurable output activation.
///
/// Parameters live in one flat buffer. Layer `l` stores its weight matrix
/// (`sizes[l+1]` rows by `sizes[l]` columns, row-major) followed by its bias.
/// Gradient buffers share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
}

/// Post-activation values of every layer, input first.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::contract(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
            output,
        })
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>, output: OutputActivation) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        if params.len() != net.params.len() {
            return Err(Error::contract(format!(
                "expected {} parameters for {sizes:?}, got {}",
                net.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("non-finite parameter"));
        }
        net.params = params;
        Ok(net)
    }

    /// Orthogonal initialization with gain `sqrt(2)` on hidden layers and
    /// `final_gain` on the output layer; biases start at zero.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        output: OutputActivation,
        final_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (rows, cols) = (sizes[l + 1], sizes[l]);
            let gain = if l + 1 == layers { final_gain } else { 2f64.sqrt() };
            let w = orthogonal_matrix(rows, cols, rng);
            let (start, _) = net.weight_range(l);
            for (dst, src) in net.params[start..start + rows * cols].iter_mut().zip(w) {
                *dst = gain * src;
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Start offset and length of layer `layer`'s weight matrix.
    pub fn weight_range(&self, layer: usize) -> (usize, usize) {
        (
            self.layer_offset(layer),
            self.sizes[layer] * self.sizes[layer + 1],
        )
    }

    pub fn bias_range(&self, layer: usize) -> (usize, usize) {
        let (w, n) = self.weight_range(layer);
        (w + n, self.sizes[layer + 1])
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let (s, n) = self.weight_range(layer);
        &self.params[s..s + n]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let (s, n) = self.bias_range(layer);
        &self.params[s..s + n]
    }

    pub fn squared_norm(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        for l in 0..self.num_layers() {
            let next = self.layer_forward(l, activations.last().unwrap());
            activations.push(next);
        }
        let out = activations.last().unwrap().clone();
        Ok((out, ForwardCache { activations }))
    }

    /// Forward pass without keeping intermediate activations.
    pub fn infer(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            x = self.layer_forward(l, &x);
        }
        Ok(x)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::contract(format!(
                "input length {} does not match network input {}",
                input.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = self.weights(l);
        let b = self.biases(l);
        let last = l + 1 == self.num_layers();
        (0..n_out)
            .map(|j| {
                let row = &w[j * n_in..(j + 1) * n_in];
                let z = b[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                match (last, self.output) {
                    (false, _) => z.tanh(),
                    (true, OutputActivation::Identity) => z,
                    (true, OutputActivation::Sigmoid) => sigmoid(z),
                }
            })
            .collect()
    }

    pub fn backward(&self, cache: &ForwardCache, output_gradient: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, output_gradient, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        if cache.activations.len() != self.sizes.len()
            || cache
                .activations
                .iter()
                .zip(&self.sizes)
                .any(|(a, &n)| a.len() != n)
        {
            return Err(Error::contract("forward cache does not match network shape"));
        }
        if output_gradient.len() != self.output_size() {
            return Err(Error::contract(format!(
                "output gradient length {} does not match network output {}",
                output_gradient.len(),
                self.output_size()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::contract("gradient buffer does not match parameter count"));
        }

        let layers = self.num_layers();
        // delta = dL/dz for the current layer
        let out = cache.output();
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Identity => output_gradient.to_vec(),
            OutputActivation::Sigmoid => output_gradient
                .iter()
                .zip(out)
                .map(|(g, y)| g * y * (1.0 - y))
                .collect(),
        };
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &cache.activations[l];
            let (ws, _) = self.weight_range(l);
            let (bs, _) = self.bias_range(l);
            for j in 0..n_out {
                let d = delta[j];
                grads[bs + j] += d;
                if d != 0.0 {
                    let row = &mut grads[ws + j * n_in..ws + (j + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            let w = self.weights(l);
            let mut dx = vec![0.0; n_in];
            for j in 0..n_out {
                let d = delta[j];
                if d != 0.0 {
                    for (acc, wij) in dx.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *acc += d * wij;
                    }
                }
            }
            if l > 0 {
                // previous layer is tanh
                for (g, a) in dx.iter_mut().zip(x) {
                    *g *= 1.0 - a * a;
                }
            }
            delta = dx;
        }
        Ok(delta)
    }
}

/// Logistic function; the argument is clamped to ±30 so the result stays
/// strictly inside (0,1).
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-30.0, 30.0);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `rows x cols` matrix with orthonormal rows (rows <= cols) or columns.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for (k, b) in basis.iter().enumerate() {
        for (i, &x) in b.iter().enumerate() {
            if rows <= cols {
                m[k * cols + i] = x;
            } else {
                m[i * cols + k] = x;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], OutputActivation::Identity).unwrap();
        let (y, _) = net.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer_passes_input() {
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let net = Mlp::from_params(&[2, 2], params, OutputActivation::Identity).unwrap();
        let (y, _) = net.forward(&[0.3, -0.7]).unwrap();
        assert_eq!(y, vec![0.3, -0.7]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::orthogonal(&[4, 8, 3], OutputActivation::Identity, 1.0, &mut rng).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap().0, net.forward(&x).unwrap().0);
        assert_eq!(net.forward(&x).unwrap().0, net.infer(&x).unwrap());
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let net = Mlp::zeros(&[3, 2], OutputActivation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Contract(_))));
        let (_, cache) = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!(net.backward(&cache, &[1.0]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::orthogonal(&[3, 5, 2], OutputActivation::Identity, 1.0, &mut rng).unwrap();
        let (_, cache) = net.forward(&[0.5, 0.1, -0.2]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let net = Mlp::from_params(&[3, 2], vec![0.1; 8], OutputActivation::Identity).unwrap();
        let x = [1.0, 2.0, 3.0];
        let (_, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &[1.0, 1.0]).unwrap();
        // d(sum of outputs)/dW[j][i] = x[i]; d/db[j] = 1
        assert_eq!(&g[0..3], &x);
        assert_eq!(&g[3..6], &x);
        assert_eq!(&g[6..8], &[1.0, 1.0]);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = orthogonal_matrix(4, 6, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..6).map(|i| m[a * 6 + i] * m[b * 6 + i]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
        let m = orthogonal_matrix(6, 4, &mut rng);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..6).map(|i| m[i * 4 + a] * m[i * 4 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigmoid_output_stays_open_unit_interval() {
        let net = Mlp::from_params(&[1, 1], vec![50.0, 0.0], OutputActivation::Sigmoid).unwrap();
        for x in [-1.0, 1.0] {
            let y = net.infer(&[x]).unwrap()[0];
            assert!(y > 0.0 && y < 1.0);
        }
    }
}
