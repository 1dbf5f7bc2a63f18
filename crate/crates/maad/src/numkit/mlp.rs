use rand::Rng;

use super::mat::{affine_batch, axpy, dot, grad_affine, grad_input, Mat};
use crate::error::{Error, Result};

/// Fully-connected network with tanh hidden activations and an identity
/// output layer. Weight matrix of layer `l` has one row per output unit, so
/// `z = W·a + b` computes each unit as a dot product over a contiguous row.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Mat>,
    biases: Vec<Vec<f64>>,
}

/// Per-parameter gradient accumulator shaped like an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

/// Activations of a batched forward pass; `layers[0]` is the input batch and
/// `layers[L]` the output.
pub struct BatchActs {
    layers: Vec<Mat>,
}

impl BatchActs {
    pub fn output(&self) -> &Mat {
        self.layers.last().expect("non-empty activations")
    }
}

impl Mlp {
    /// All-zero parameters with the given `[in, hidden.., out]` layer sizes.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::contract(
                "an MLP needs at least input and output sizes",
            ));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::contract("layer sizes must be positive"));
        }
        let weights = (0..sizes.len() - 1)
            .map(|l| Mat::zeros(sizes[l + 1], sizes[l]))
            .collect();
        let biases = (0..sizes.len() - 1)
            .map(|l| vec![0.0; sizes[l + 1]])
            .collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Xavier-uniform initialization; `out_scale` shrinks the output layer
    /// (small initial policy means keep early actions near zero).
    pub fn xavier(sizes: &[usize], rng: &mut impl Rng, out_scale: f64) -> Result<Self> {
        let mut net = Mlp::zeros(sizes)?;
        let n_layers = net.weights.len();
        for (l, w) in net.weights.iter_mut().enumerate() {
            let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt()
                * if l + 1 == n_layers { out_scale } else { 1.0 };
            for v in w.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Mat {
        &mut self.weights[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    /// Forward pass on a single input vector.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::contract(format!(
                "input dimension {} does not match first layer size {}",
                x.len(),
                self.in_dim()
            )));
        }
        let mut a = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = b.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += dot(w.row(o), &a);
            }
            if l != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass on a batch (one sample per row), keeping activations for
    /// [`Mlp::backward_batch`].
    pub fn forward_batch(&self, x: &Mat) -> Result<BatchActs> {
        if x.cols() != self.in_dim() {
            return Err(Error::contract(format!(
                "batch width {} does not match first layer size {}",
                x.cols(),
                self.in_dim()
            )));
        }
        let mut layers = Vec::with_capacity(self.weights.len() + 1);
        layers.push(x.clone());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = affine_batch(layers.last().unwrap(), w, b);
            if l != last {
                z.data_mut().iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(z);
        }
        Ok(BatchActs { layers })
    }

    /// Backpropagates `d_out = ∂L/∂output` (B×out) through the cached
    /// activations, accumulating parameter gradients into `grads` and
    /// returning `∂L/∂input` (B×in).
    pub fn backward_batch(&self, acts: &BatchActs, d_out: &Mat, grads: &mut MlpGrads) -> Mat {
        let last = self.weights.len() - 1;
        let mut dz = d_out.clone();
        for l in (0..self.weights.len()).rev() {
            if l != last {
                // dz currently holds ∂L/∂a_l for a tanh layer
                let a = &acts.layers[l + 1];
                for (v, &av) in dz.data_mut().iter_mut().zip(a.data()) {
                    *v *= 1.0 - av * av;
                }
            }
            grad_affine(
                &dz,
                &acts.layers[l],
                &mut grads.weights[l],
                &mut grads.biases[l],
            );
            dz = grad_input(&dz, &self.weights[l]);
        }
        dz
    }

    /// Value and input gradient of a scalar-output network at `x`, with the
    /// intermediates needed by [`Mlp::backward_input_gradient`].
    pub fn input_gradient(&self, x: &[f64]) -> Result<InputGradCache> {
        if self.out_dim() != 1 {
            return Err(Error::contract("input_gradient requires a scalar output"));
        }
        if x.len() != self.in_dim() {
            return Err(Error::contract("input dimension mismatch"));
        }
        let n = self.weights.len();
        // forward, keeping activations
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        acts.push(x.to_vec());
        for l in 0..n {
            let a = acts.last().unwrap();
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                *zo += dot(w.row(o), a);
            }
            if l != n - 1 {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        let value = acts[n][0];
        // reverse pass: u[l] = dy/dz_{l+1}, g[l] = dy/da_l
        let mut us: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut gs: Vec<Vec<f64>> = vec![Vec::new(); n];
        us[n - 1] = vec![1.0];
        for l in (0..n).rev() {
            if l != n - 1 {
                // u_l = g_l ⊙ (1 − a_l²)
                us[l] = gs[l]
                    .iter()
                    .zip(&acts[l + 1])
                    .map(|(g, a)| g * (1.0 - a * a))
                    .collect();
            }
            // g_{l-1} = W_lᵀ u_l (index l-1 shifted into gs[l-1]; l=0 yields the input grad)
            let w = &self.weights[l];
            let mut g_prev = vec![0.0; w.cols()];
            for (o, &uo) in us[l].iter().enumerate() {
                if uo != 0.0 {
                    axpy(uo, w.row(o), &mut g_prev);
                }
            }
            if l == 0 {
                return Ok(InputGradCache {
                    value,
                    grad: g_prev,
                    acts,
                    us,
                    gs,
                });
            }
            gs[l - 1] = g_prev;
        }
        unreachable!()
    }

    /// Accumulates `∂(v·∇ₓy)/∂θ` into `grads`, where `∇ₓy` is the input
    /// gradient held in `cache` and `v` is a constant vector. This is the
    /// second-order pass needed by gradient penalties.
    pub fn backward_input_gradient(&self, cache: &InputGradCache, v: &[f64], grads: &mut MlpGrads) {
        let n = self.weights.len();
        debug_assert_eq!(v.len(), self.in_dim());
        // Adjoints with respect to the reverse-pass quantities.
        let mut bar_g_prev = v.to_vec(); // bar of g_{l-1} entering stage l
        let mut bar_a: Vec<Vec<f64>> = (0..n).map(|l| vec![0.0; self.sizes[l]]).collect();
        // bar_a[l] is the adjoint of a_l for l = 1..n-1 (inputs a_0 are constants).
        for l in 0..n {
            let w = &self.weights[l];
            let u = &cache.us[l];
            // g_{l-1} = W_lᵀ u_l:  bar_W_l += u_l ⊗ bar_g_{l-1},  bar_u_l = W_l · bar_g_{l-1}
            let mut bar_u = vec![0.0; u.len()];
            for (o, &uo) in u.iter().enumerate() {
                if uo != 0.0 {
                    axpy(uo, &bar_g_prev, grads.weights[l].row_mut(o));
                }
                bar_u[o] = dot(w.row(o), &bar_g_prev);
            }
            if l == n - 1 {
                break; // u of the output layer is the constant 1
            }
            // u_l = g_l ⊙ (1 − a_l²)
            let a = &cache.acts[l + 1];
            let g = &cache.gs[l];
            bar_g_prev = bar_u
                .iter()
                .zip(a)
                .map(|(bu, av)| bu * (1.0 - av * av))
                .collect();
            for (slot, ((bu, gv), av)) in bar_a[l + 1].iter_mut().zip(bar_u.iter().zip(g).zip(a)) {
                *slot += bu * gv * (-2.0 * av);
            }
        }
        // Forward-graph adjoints: a_l = tanh(W_l a_{l-1} + b_l) for hidden layers.
        for l in (1..n).rev() {
            let a = &cache.acts[l];
            let bar_z: Vec<f64> = bar_a[l]
                .iter()
                .zip(a)
                .map(|(ba, av)| ba * (1.0 - av * av))
                .collect();
            let prev = &cache.acts[l - 1];
            for (o, &bz) in bar_z.iter().enumerate() {
                if bz != 0.0 {
                    axpy(bz, prev, grads.weights[l - 1].row_mut(o));
                }
                grads.biases[l - 1][o] += bz;
            }
            if l > 1 {
                let w = &self.weights[l - 1];
                let mut down = vec![0.0; w.cols()];
                for (o, &bz) in bar_z.iter().enumerate() {
                    if bz != 0.0 {
                        axpy(bz, w.row(o), &mut down);
                    }
                }
                for (slot, d) in bar_a[l - 1].iter_mut().zip(down) {
                    *slot += d;
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.data().len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Appends all parameters (layer by layer, weights then bias) to `out`.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
    }

    /// Reads parameters back in [`Mlp::flatten_into`] order; returns the
    /// number of values consumed.
    pub fn assign_from(&mut self, flat: &[f64]) -> usize {
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let wn = w.data().len();
            w.data_mut().copy_from_slice(&flat[k..k + wn]);
            k += wn;
            let bn = b.len();
            b.copy_from_slice(&flat[k..k + bn]);
            k += bn;
        }
        k
    }
}

/// Intermediates of [`Mlp::input_gradient`].
pub struct InputGradCache {
    pub value: f64,
    pub grad: Vec<f64>,
    acts: Vec<Vec<f64>>,
    us: Vec<Vec<f64>>,
    gs: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            weights: net
                .weights
                .iter()
                .map(|w| Mat::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.data_mut().iter_mut().for_each(|v| *v *= s);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_maps_to_zero() {
        let net = Mlp::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.apply(&[0.3, -1.2, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_affine() {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        net.weight_mut(0).set(0, 0, 2.0);
        net.bias_mut(0)[0] = 1.0;
        assert_eq!(net.apply(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn hidden_unit_saturates() {
        let mut net = Mlp::zeros(&[1, 1, 1]).unwrap();
        net.weight_mut(0).set(0, 0, 100.0);
        net.weight_mut(1).set(0, 0, 1.0);
        let y = net.apply(&[1.0]).unwrap()[0];
        assert!(
            (y - 1.0).abs() < 1e-12,
            "tanh(100) should saturate, got {y}"
        );
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.apply(&[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::xavier(&[4, 8, 3], &mut rng, 1.0).unwrap();
        let xs = vec![vec![0.1, -0.2, 0.3, 0.7], vec![1.0, 1.0, -1.0, 0.0]];
        let batch = net.forward_batch(&Mat::from_rows(&xs)).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let single = net.apply(x).unwrap();
            for (a, b) in single.iter().zip(batch.output().row(i)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_weight_grad_is_input() {
        // loss = sum(w·x) for one linear layer => dloss/dw = x
        let net = Mlp::zeros(&[3, 1]).unwrap();
        let x = Mat::from_rows(&[vec![0.5, -2.0, 4.0]]);
        let acts = net.forward_batch(&x).unwrap();
        let mut grads = MlpGrads::zeros_like(&net);
        net.backward_batch(&acts, &Mat::from_rows(&[vec![1.0]]), &mut grads);
        assert_eq!(grads.weights[0].row(0), &[0.5, -2.0, 4.0]);
        assert_eq!(grads.biases[0], vec![1.0]);
    }

    #[test]
    fn constant_loss_has_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::xavier(&[3, 6, 2], &mut rng, 1.0).unwrap();
        let x = Mat::from_rows(&[vec![0.4, 0.1, -0.9]]);
        let acts = net.forward_batch(&x).unwrap();
        let mut grads = MlpGrads::zeros_like(&net);
        net.backward_batch(&acts, &Mat::zeros(1, 2), &mut grads);
        let mut flat = Vec::new();
        grads.flatten_into(&mut flat);
        assert!(flat.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn flatten_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::xavier(&[2, 4, 1], &mut rng, 1.0).unwrap();
        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        assert_eq!(flat.len(), net.param_count());
        let mut other = Mlp::zeros(&[2, 4, 1]).unwrap();
        assert_eq!(other.assign_from(&flat), flat.len());
        let mut flat2 = Vec::new();
        other.flatten_into(&mut flat2);
        assert_eq!(flat, flat2);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::xavier(&[3, 7, 5, 1], &mut rng, 1.0).unwrap();
        let x = vec![0.3, -0.5, 0.8];
        let cache = net.input_gradient(&x).unwrap();
        let h = 1e-6;
        for d in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += h;
            xm[d] -= h;
            let fd = (net.apply(&xp).unwrap()[0] - net.apply(&xm).unwrap()[0]) / (2.0 * h);
            assert!(
                (fd - cache.grad[d]).abs() < 1e-7,
                "input grad mismatch at dim {d}: fd={fd} analytic={}",
                cache.grad[d]
            );
        }
    }

    #[test]
    fn double_backward_matches_finite_differences() {
        // h(θ) = v · ∇ₓ y(x; θ): compare the analytic second-order pass with
        // central differences over every parameter.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::xavier(&[2, 5, 4, 1], &mut rng, 1.0).unwrap();
        let x = vec![0.7, -0.4];
        let v = vec![1.3, -0.2];

        let cache = net.input_gradient(&x).unwrap();
        let mut grads = MlpGrads::zeros_like(&net);
        net.backward_input_gradient(&cache, &v, &mut grads);
        let mut analytic = Vec::new();
        grads.flatten_into(&mut analytic);

        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        let h = 1e-5;
        for k in 0..flat.len() {
            let orig = flat[k];
            flat[k] = orig + h;
            net.assign_from(&flat);
            let gp = net.input_gradient(&x).unwrap().grad;
            flat[k] = orig - h;
            net.assign_from(&flat);
            let gm = net.input_gradient(&x).unwrap().grad;
            flat[k] = orig;
            net.assign_from(&flat);
            let fd = (dot(&v, &gp) - dot(&v, &gm)) / (2.0 * h);
            let scale = fd.abs().max(analytic[k].abs()).max(1.0);
            assert!(
                (fd - analytic[k]).abs() / scale < 1e-4,
                "param {k}: fd={fd} analytic={}",
                analytic[k]
            );
        }
    }
}
