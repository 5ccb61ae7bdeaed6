use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Affine layer, `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Fully connected network: affine maps with SELU between them and a linear
/// output layer. Gradients share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// `inputs[l]` feeds layer `l`; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

const MAGIC: &[u8; 8] = b"SBIMLP\0\0";
const VERSION: u32 = 1;

impl Mlp {
    /// Uniform init on `±sqrt(3 / fan_in)` (unit-variance preserving for
    /// SELU), zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (3.0 / w[0] as f64).sqrt();
                let mut d = Dense::zeros(w[0], w[1]);
                d.weight.mapv_inplace(|_| rng.random_range(-bound..bound));
                d
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view =
            ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Rows of `inputs` are samples.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        let last = self.layers.len() - 1;
        let mut a = inputs.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(selu);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_recorded(&self, inputs: ArrayView2<f64>) -> Result<Tape> {
        self.check_input(inputs.ncols())?;
        let last = self.layers.len() - 1;
        let mut tape_inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut a = inputs.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            tape_inputs.push(a);
            if l < last {
                a = z.mapv(selu);
                pre.push(z);
            } else {
                a = z;
            }
        }
        Ok(Tape {
            inputs: tape_inputs,
            pre,
            output: a,
        })
    }

    /// Gradient of `sum_rows <upstream_row, output_row>` with respect to every
    /// weight and bias.
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Mlp {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                delta.zip_mut_with(&tape.pre[l], |d, z| *d *= selu_grad(*z));
            }
            let weight = delta.t().dot(&tape.inputs[l]);
            let bias = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&self.layers[l].weight);
            }
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Mlp { layers: grads }
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    /// `self + scale * other`, used for gradient accumulation.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn write(&self, w: &mut Writer) {
        w.magic(MAGIC, VERSION);
        let sizes = self.sizes();
        w.u32(sizes.len() as u32);
        for s in &sizes {
            w.u32(*s as u32);
        }
        for layer in &self.layers {
            w.f64s(layer.weight.as_slice().expect("standard layout"));
            w.f64s(layer.bias.as_slice().unwrap());
        }
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        let version = r.magic(MAGIC)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported network version {version}")));
        }
        let n = r.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Format(format!("bad layer count {n}")));
        }
        let sizes = (0..n)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(n - 1);
        for w in sizes.windows(2) {
            let weight =
                Array2::from_shape_vec((w[1], w[0]), r.f64s(w[0] * w[1])?).map_err(|e| Error::Format(e.to_string()))?;
            let bias = Array1::from(r.f64s(w[1])?);
            layers.push(Dense { weight, bias });
        }
        Ok(Self { layers })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let net = Self::read(&mut r)?;
        r.finish()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use ndarray::Array2;

    /// Straightforward scalar re-implementation used as an oracle.
    fn naive_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs()];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut s = layer.bias[o];
                for (i, ai) in a.iter().enumerate() {
                    s += layer.weight[[o, i]] * ai;
                }
                *zo = if l + 1 < net.layers.len() { selu(s) } else { s };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::new(&[3, 8, 2], &mut RngStream::new(0)).zeros_like();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(selu(0.0), 0.0);
    }

    #[test]
    fn matches_naive_forward() {
        let mut rng = RngStream::new(1);
        let net = Mlp::new(&[5, 16, 16, 3], &mut rng);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let fast = net.forward(&x).unwrap();
            let slow = naive_forward(&net, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let net = Mlp::new(&[3, 4, 1], &mut RngStream::new(0));
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    /// Scalar loss sum_rows <c, out_row> for a fixed random c.
    fn loss(net: &Mlp, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
        (net.forward_batch(x.view()).unwrap() * c).sum()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = RngStream::new(2);
        let net = Mlp::new(&[4, 6, 5, 3], &mut rng);
        let x = Array2::from_shape_fn((7, 4), |_| rng.random_range(-2.0..2.0));
        let c = Array2::from_shape_fn((7, 3), |_| rng.random_range(-1.0..1.0));
        let tape = net.forward_recorded(x.view()).unwrap();
        let grad = net.backward(&tape, c.view());
        let h = 1e-5;
        for l in 0..net.layers.len() {
            for idx in 0..net.layers[l].weight.len() {
                let (r, col) = (idx / net.layers[l].inputs(), idx % net.layers[l].inputs());
                let mut p = net.clone();
                p.layers[l].weight[[r, col]] += h;
                let mut m = net.clone();
                m.layers[l].weight[[r, col]] -= h;
                let fd = (loss(&p, &x, &c) - loss(&m, &x, &c)) / (2.0 * h);
                let an = grad.layers[l].weight[[r, col]];
                assert!(
                    (an - fd).abs() / (an.abs() + 1e-8) < 1e-4 || (an - fd).abs() < 1e-9,
                    "layer {l} w[{r},{col}]: {an} vs {fd}"
                );
            }
            for o in 0..net.layers[l].outputs() {
                let mut p = net.clone();
                p.layers[l].bias[o] += h;
                let mut m = net.clone();
                m.layers[l].bias[o] -= h;
                let fd = (loss(&p, &x, &c) - loss(&m, &x, &c)) / (2.0 * h);
                let an = grad.layers[l].bias[o];
                assert!((an - fd).abs() / (an.abs() + 1e-8) < 1e-4 || (an - fd).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_upstream_and_linearity() {
        let mut rng = RngStream::new(3);
        let net = Mlp::new(&[2, 4, 2], &mut rng);
        let x = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
        let tape = net.forward_recorded(x.view()).unwrap();
        let zero = net.backward(&tape, Array2::zeros((3, 2)).view());
        assert!(zero.layers.iter().all(|l| l.weight.iter().all(|v| *v == 0.0)));
        let c1 = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
        let c2 = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
        let g1 = net.backward(&tape, c1.view());
        let g2 = net.backward(&tape, c2.view());
        let g12 = net.backward(&tape, (&c1 + &c2).view());
        let mut sum = g1.clone();
        sum.add_scaled(&g2, 1.0);
        for (a, b) in sum.layers.iter().zip(&g12.layers) {
            for (u, v) in a.weight.iter().zip(b.weight.iter()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bytes_round_trip_is_exact() {
        let net = Mlp::new(&[3, 7, 2], &mut RngStream::new(4));
        let back = Mlp::from_bytes(&net.to_bytes()).unwrap();
        assert_eq!(net, back);
    }
}
