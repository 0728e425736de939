use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dynamics, Tape, Var, Vjp};
use crate::error::{Error, Result};
use crate::kernels;

/// Fully connected tanh network used as a vector field.
///
/// `widths = [d, h_1, …, h_k, d]`. The time is appended to the state, so the
/// first layer takes `d + 1` inputs. Hidden layers apply `tanh`; the last
/// layer is linear.
///
/// Parameters are stored layer by layer: the weight matrix row-major
/// (`out × in`), then the bias (`out`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpDynamics {
    widths: Vec<usize>,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
}

impl MlpDynamics {
    pub fn new(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {widths:?}")));
        }
        if widths[0] != widths[widths.len() - 1] {
            return Err(Error::Shape(format!(
                "output width {} differs from state width {}",
                widths[widths.len() - 1],
                widths[0]
            )));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for l in 0..widths.len() - 1 {
            let inputs = widths[l] + usize::from(l == 0);
            let outputs = widths[l + 1];
            let weight = offset;
            let bias = weight + inputs * outputs;
            offset = bias + outputs;
            layers.push(Layer { inputs, outputs, weight, bias });
        }
        Ok(MlpDynamics { widths: widths.to_vec(), layers })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Uniform `±1/√fan_in` weights and small biases from a seeded stream.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.param_dim()];
        for layer in &self.layers {
            let scale = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut theta[layer.weight..layer.bias] {
                *w = rng.gen_range(-scale..scale);
            }
            for b in &mut theta[layer.bias..layer.bias + layer.outputs] {
                *b = rng.gen_range(-0.1..0.1);
            }
        }
        theta
    }

    /// Offsets of the weight block and bias block of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        (self.layers[l].weight, self.layers[l].bias)
    }
}

impl Dynamics for MlpDynamics {
    fn state_dim(&self) -> usize {
        self.widths[0]
    }

    fn param_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias + l.outputs)
    }

    fn eval(&self, x: &[f64], t: f64, theta: &[f64]) -> Vec<f64> {
        let mut h = kernels::concat_time(x, t);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = kernels::affine(
                &theta[layer.weight..layer.bias],
                Some(&theta[layer.bias..layer.bias + layer.outputs]),
                &h,
                layer.outputs,
            );
            h = if l == last { z } else { kernels::tanh(&z) };
        }
        h
    }

    fn vjp(&self, x: &[f64], t: f64, theta: &[f64], cotangent: &[f64]) -> Vjp {
        let mut tape = Tape::new(None);
        let theta_v = tape.param(theta);
        let x_v = tape.input(x);
        let out = self.record_native(&mut tape, x_v, t, theta_v).expect("mlp records natively");
        let mut g = tape
            .backward(out, cotangent, &[x_v, theta_v])
            .expect("fresh tape with matching seed");
        let gtheta = g.pop().unwrap_or_default();
        let gx = g.pop().unwrap_or_default();
        Vjp { gx, gtheta }
    }

    fn record_native<'a>(&'a self, tape: &mut Tape<'a>, x: Var, t: f64, theta: Var) -> Option<Var> {
        let mut h = tape.concat_time(x, t);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = tape.affine(theta, layer.weight, Some(layer.bias), h, layer.outputs);
            h = if l == last { z } else { tape.tanh(z) };
        }
        Some(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{tape_eval, vjp_fd_error};

    #[test]
    fn identity_network_applies_tanh() {
        let net = MlpDynamics::new(&[2, 2, 2]).unwrap();
        // first layer: [I | 0] with zero bias, readout I with zero bias
        let theta = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(net.param_dim(), theta.len());
        let y = net.eval(&[1.0, 2.0], 0.3, &theta);
        assert_eq!(y, vec![1.0f64.tanh(), 2.0f64.tanh()]);
        let rec = tape_eval(&net, &[1.0, 2.0], 0.3, &theta, None).unwrap();
        assert_eq!(rec.value(), y.as_slice());
    }

    #[test]
    fn layout_is_layer_major() {
        let net = MlpDynamics::new(&[4, 16, 4]).unwrap();
        assert_eq!(net.layer_offsets(0), (0, 80));
        assert_eq!(net.layer_offsets(1), (96, 160));
        assert_eq!(net.param_dim(), 164);
    }

    #[test]
    fn rejects_mismatched_widths() {
        assert!(MlpDynamics::new(&[3, 8, 2]).is_err());
        assert!(MlpDynamics::new(&[3]).is_err());
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let net = MlpDynamics::new(&[3, 8, 8, 3]).unwrap();
        let theta = net.init_params(11);
        let err = vjp_fd_error(&net, &[0.3, -0.7, 1.1], 0.4, &theta, &[1.0, -2.0, 0.5], 1e-6);
        assert!(err < 1e-6, "{err}");
    }
}
