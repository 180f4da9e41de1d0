use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Topology {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
        }
    }

    /// `(fan_in, fan_out)` for each layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input;
        for &h in self.hidden.iter().chain(std::iter::once(&self.output)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the `[fan_in][fan_out]` weight block (input-major).
    w: usize,
    b: usize,
}

/// Fully connected network with ELU hidden layers and a linear output.
///
/// All parameters live in one flat buffer, layer by layer, weights before
/// biases. Weights are stored input-major (`w[i * fan_out + o]` connects
/// input `i` to output `o`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    topology: Topology,
    layers: Vec<LayerSlot>,
    params: Vec<T>,
    generation: u64,
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    generation: u64,
    batch: usize,
    /// Input to each layer (`layers.len()` entries).
    inputs: Vec<Vec<T>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Parameter gradient, shape-congruent with [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub data: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            data: vec![T::zero(); n],
        }
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|g| *g * *g).sum()
    }

    pub fn global_norm(&self) -> T {
        self.sum_squares().sqrt()
    }

    pub fn scale(&mut self, k: T) {
        self.data.iter_mut().for_each(|g| *g *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.is_finite())
    }
}

#[inline]
pub fn elu<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad_from_pre<T: Scalar>(pre: T) -> T {
    if pre >= T::zero() {
        T::one()
    } else {
        pre.exp()
    }
}

/// `y += a * x`
#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    let mut tail = T::zero();
    for (a, b) in xr.iter().zip(yr) {
        tail += *a * *b;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

impl<T: Scalar> Mlp<T> {
    /// Zero-initialized network.
    pub fn zeros(topology: Topology) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in topology.layer_dims() {
            let w = offset;
            let b = w + fan_in * fan_out;
            offset = b + fan_out;
            layers.push(LayerSlot {
                fan_in,
                fan_out,
                w,
                b,
            });
        }
        Self {
            topology,
            layers,
            params: vec![T::zero(); offset],
            generation: 0,
        }
    }

    /// Gaussian init with std `gain / sqrt(fan_in)`; the output layer uses
    /// `output_gain` instead. Biases start at zero.
    pub fn random<R: Rng + ?Sized>(
        topology: Topology,
        gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(topology);
        let last = net.layers.len() - 1;
        for (k, slot) in net.layers.clone().into_iter().enumerate() {
            let g = if k == last { output_gain } else { gain };
            let std = g / (slot.fan_in as f64).sqrt();
            for p in &mut net.params[slot.w..slot.b] {
                let z: f64 = rng.sample(StandardNormal);
                *p = T::lit(std * z);
            }
        }
        net
    }

    pub fn from_params(topology: Topology, params: Vec<T>) -> Result<Self> {
        let mut net = Self::zeros(topology);
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.generation += 1;
        &mut self.params
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// `(weights, biases)` of layer `k`, weights input-major.
    pub fn layer(&self, k: usize) -> (&[T], &[T]) {
        let s = self.layers[k];
        (&self.params[s.w..s.b], &self.params[s.b..s.b + s.fan_out])
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, input: &[T]) -> Result<usize> {
        let d = self.topology.input;
        if input.is_empty() || input.len() % d != 0 {
            return Err(Error::Shape(format!(
                "input length {} is not a positive multiple of {d}",
                input.len()
            )));
        }
        Ok(input.len() / d)
    }

    fn affine(&self, slot: LayerSlot, x: &[T], batch: usize, out: &mut Vec<T>) {
        let (w, b) = (
            &self.params[slot.w..slot.b],
            &self.params[slot.b..slot.b + slot.fan_out],
        );
        out.clear();
        out.reserve(batch * slot.fan_out);
        for row in x.chunks_exact(slot.fan_in) {
            let start = out.len();
            out.extend_from_slice(b);
            let acc = &mut out[start..];
            for (i, &xi) in row.iter().enumerate() {
                if xi != T::zero() {
                    axpy(xi, &w[i * slot.fan_out..(i + 1) * slot.fan_out], acc);
                }
            }
        }
    }

    /// Batched forward pass over `batch x input` row-major data.
    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        let batch = self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (k, &slot) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            self.affine(slot, &x, batch, &mut z);
            inputs.push(std::mem::take(&mut x));
            if k < last {
                x = z.iter().map(|&v| elu(v)).collect();
                pre.push(z);
            } else {
                x = z;
            }
        }
        Ok((
            x,
            ForwardCache {
                generation: self.generation,
                batch,
                inputs,
                pre,
            },
        ))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        let batch = self.check_input(input)?;
        let mut x = input.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (k, &slot) in self.layers.iter().enumerate() {
            self.affine(slot, &x, batch, &mut z);
            if k < last {
                z.iter_mut().for_each(|v| *v = elu(*v));
            }
            std::mem::swap(&mut x, &mut z);
        }
        Ok(x)
    }

    /// Reverse pass. Gradients are summed over the batch.
    pub fn backward(&self, cache: &ForwardCache<T>, output_grad: &[T]) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros(self.params.len());
        self.backward_into(cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but accumulates into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache<T>,
        output_grad: &[T],
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache {
                cache: cache.generation,
                params: self.generation,
            });
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape("cache does not belong to this network".into()));
        }
        if grads.data.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        let batch = cache.batch;
        if output_grad.len() != batch * self.topology.output {
            return Err(Error::Shape(format!(
                "output gradient length {} != {} x {}",
                output_grad.len(),
                batch,
                self.topology.output
            )));
        }

        let mut delta = output_grad.to_vec();
        for k in (0..self.layers.len()).rev() {
            let slot = self.layers[k];
            let x = &cache.inputs[k];
            let w = &self.params[slot.w..slot.b];
            {
                let (gw, gb) =
                    grads.data[slot.w..slot.b + slot.fan_out].split_at_mut(slot.b - slot.w);
                for (xr, dr) in x
                    .chunks_exact(slot.fan_in)
                    .zip(delta.chunks_exact(slot.fan_out))
                {
                    for (gbo, &d) in gb.iter_mut().zip(dr) {
                        *gbo += d;
                    }
                    for (i, &xi) in xr.iter().enumerate() {
                        if xi != T::zero() {
                            axpy(xi, dr, &mut gw[i * slot.fan_out..(i + 1) * slot.fan_out]);
                        }
                    }
                }
            }
            if k == 0 {
                break;
            }
            let pre = &cache.pre[k - 1];
            let mut next = vec![T::zero(); batch * slot.fan_in];
            for ((nr, dr), pr) in next
                .chunks_exact_mut(slot.fan_in)
                .zip(delta.chunks_exact(slot.fan_out))
                .zip(pre.chunks_exact(slot.fan_in))
            {
                for i in 0..slot.fan_in {
                    let g = dot(&w[i * slot.fan_out..(i + 1) * slot.fan_out], dr);
                    nr[i] = g * elu_grad_from_pre(pr[i]);
                }
            }
            delta = next;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f32>::zeros(Topology::new(8, &[16, 16], 2));
        let (out, _) = net.forward(&[1.0; 8]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_positive_inputs() {
        let topo = Topology::new(3, &[], 3);
        let mut params = vec![0.0f64; 12];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_params(topo, params).unwrap();
        let x = [0.5, 1.5, 2.0];
        assert_eq!(net.predict(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::<f32>::zeros(Topology::new(8, &[4], 2));
        assert!(matches!(net.forward(&[0.0; 7]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_output_grad_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::<f32>::random(Topology::new(4, &[8], 2), 1.0, 1.0, &mut rng);
        let (_, cache) = net.forward(&[0.1, -0.2, 0.3, 0.4]).unwrap();
        let g = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_elu_slope_on_positive_side() {
        // f(w) = ELU(w * x) with x = 1, w = 0.5, as a 1-1-1 net with unit output weight.
        let net = Mlp::from_params(Topology::new(1, &[1], 1), vec![0.5f64, 0.0, 1.0, 0.0]).unwrap();
        let (_, cache) = net.forward(&[1.0]).unwrap();
        let g = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.data[0], 1.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::<f32>::random(Topology::new(2, &[3], 1), 1.0, 1.0, &mut rng);
        let (_, cache) = net.forward(&[0.1, 0.2]).unwrap();
        net.params_mut()[0] += 0.1;
        assert!(matches!(
            net.backward(&cache, &[1.0]),
            Err(Error::StaleCache { .. })
        ));
    }

    #[test]
    fn predict_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::<f32>::random(Topology::new(8, &[64, 64], 2), 1.4, 0.01, &mut rng);
        let x: Vec<f32> = (0..8 * 5).map(|i| (i as f32 * 0.37).sin()).collect();
        assert_eq!(net.forward(&x).unwrap().0, net.predict(&x).unwrap());
    }

    #[test]
    fn dot_matches_naive() {
        let x: Vec<f64> = (0..19).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = (0..19).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!((dot(&x, &y) - naive).abs() < 1e-12);
    }
}
