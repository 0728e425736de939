//! A vector-valued Wengert list.
//!
//! Each node stores its forward value; the reverse sweep walks the nodes
//! once from the seeded output back to the leaves. Parameters enter as
//! borrowed leaves and are not counted as retained scalars, since they are
//! model storage rather than activations.

use crate::accounting::MemoryMeter;
use crate::error::{Error, Result};

use super::Dynamics;
use crate::kernels;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Input,
    Param(&'a [f64]),
    /// `base + h Σ c_j v_j`
    Combine { base: Var, h: f64, terms: Vec<(f64, Var)> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    ConcatTime(Var),
    /// `W x (+ b)` with `W` (row-major) and `b` read from a parameter leaf.
    Affine { params: Var, weight: usize, bias: Option<usize>, input: Var },
    /// A dynamics evaluation differentiated through its own closed-form VJP.
    Opaque { dynamics: &'a dyn Dynamics, x: Var, t: f64, theta: Var },
}

struct Node<'a> {
    op: Op<'a>,
    value: Vec<f64>,
}

pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    live: usize,
    meter: Option<MemoryMeter>,
    consumed: bool,
}

impl<'a> Default for Tape<'a> {
    fn default() -> Self {
        Self::new(None)
    }
}

impl<'a> Tape<'a> {
    pub fn new(meter: Option<MemoryMeter>) -> Self {
        Tape { nodes: Vec::new(), live: 0, meter, consumed: false }
    }

    /// Scalars currently held by this tape.
    pub fn live_scalar_count(&self) -> usize {
        self.live
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(p) => p,
            _ => &node.value,
        }
    }

    fn push(&mut self, op: Op<'a>, value: Vec<f64>) -> Var {
        let n = value.len();
        self.live += n;
        if let Some(m) = &self.meter {
            m.alloc(n);
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: &[f64]) -> Var {
        self.push(Op::Input, value.to_vec())
    }

    pub fn param(&mut self, value: &'a [f64]) -> Var {
        self.push(Op::Param(value), Vec::new())
    }

    pub fn combine(&mut self, base: Var, h: f64, terms: &[(f64, Var)]) -> Var {
        let value = kernels::combine(
            self.value(base),
            h,
            terms.iter().map(|&(c, v)| (c, self.value(v))),
        );
        self.push(Op::Combine { base, h, terms: terms.to_vec() }, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push(Op::Add(a, b), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        self.push(Op::Mul(a, b), value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).iter().map(|x| c * x).collect();
        self.push(Op::Scale(a, c), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = kernels::tanh(self.value(a));
        self.push(Op::Tanh(a), value)
    }

    pub fn concat_time(&mut self, x: Var, t: f64) -> Var {
        let value = kernels::concat_time(self.value(x), t);
        self.push(Op::ConcatTime(x), value)
    }

    /// `rows × input.len()` weights at `params[weight..]`, optional bias at
    /// `params[bias..bias + rows]`.
    pub fn affine(&mut self, params: Var, weight: usize, bias: Option<usize>, input: Var, rows: usize) -> Var {
        let p = self.value(params);
        let x = self.value(input);
        let cols = x.len();
        let w = &p[weight..weight + rows * cols];
        let b = bias.map(|o| &p[o..o + rows]);
        let value = kernels::affine(w, b, x, rows);
        self.push(Op::Affine { params, weight, bias, input }, value)
    }

    /// Records `f(x, t, θ)`, natively when the dynamics supports it and as a
    /// single opaque node otherwise.
    pub fn record_dynamics(&mut self, dynamics: &'a dyn Dynamics, x: Var, t: f64, theta: Var) -> Var {
        match dynamics.record_native(self, x, t, theta) {
            Some(v) => v,
            None => {
                let value = dynamics.eval(self.value(x), t, self.value(theta));
                self.push(Op::Opaque { dynamics, x, t, theta }, value)
            }
        }
    }

    /// Position to return to with [`Tape::truncate`].
    pub fn mark(&self) -> usize {
        self.nodes.len()
    }

    /// Drops every node recorded after `mark`.
    pub fn truncate(&mut self, mark: usize) {
        let freed: usize = self.nodes[mark..].iter().map(|n| n.value.len()).sum();
        self.nodes.truncate(mark);
        self.release(freed);
    }

    fn release(&mut self, scalars: usize) {
        self.live -= scalars;
        if let Some(m) = &self.meter {
            m.free(scalars);
        }
    }

    /// Seeds `output` with `seed`, sweeps once in reverse, and returns the
    /// adjoints of `wrt`. The tape is discarded afterwards.
    pub fn backward(&mut self, output: Var, seed: &[f64], wrt: &[Var]) -> Result<Vec<Vec<f64>>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if seed.len() != self.value(output).len() {
            return Err(Error::Shape(format!(
                "seed of length {} for output of length {}",
                seed.len(),
                self.value(output).len()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(seed.to_vec());

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input | Op::Param(_) => {
                    adj[idx] = Some(g);
                }
                Op::Combine { base, h, terms } => {
                    accumulate(&mut adj, *base, g.len(), |k| g[k]);
                    for &(c, v) in terms {
                        let w = h * c;
                        accumulate(&mut adj, v, g.len(), |k| w * g[k]);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.len(), |k| g[k]);
                    accumulate(&mut adj, *b, g.len(), |k| g[k]);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    accumulate(&mut adj, *a, g.len(), |k| g[k] * vb[k]);
                    accumulate(&mut adj, *b, g.len(), |k| g[k] * va[k]);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adj, *a, g.len(), |k| c * g[k]);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    accumulate(&mut adj, *a, g.len(), |k| g[k] * (1.0 - y[k] * y[k]));
                }
                Op::ConcatTime(x) => {
                    let d = g.len() - 1;
                    accumulate(&mut adj, *x, d, |k| g[k]);
                }
                Op::Affine { params, weight, bias, input } => {
                    let x = self.value(*input);
                    let p = self.value(*params);
                    let (rows, cols) = (g.len(), x.len());
                    let w = &p[*weight..*weight + rows * cols];
                    accumulate(&mut adj, *input, cols, |c| {
                        let mut s = 0.0;
                        for r in 0..rows {
                            s += w[r * cols + c] * g[r];
                        }
                        s
                    });
                    let slot = adj[params.0].get_or_insert_with(|| vec![0.0; p.len()]);
                    for r in 0..rows {
                        let row = &mut slot[*weight + r * cols..*weight + (r + 1) * cols];
                        for (s, xc) in row.iter_mut().zip(x) {
                            *s += g[r] * xc;
                        }
                    }
                    if let Some(b) = bias {
                        for r in 0..rows {
                            slot[b + r] += g[r];
                        }
                    }
                }
                Op::Opaque { dynamics, x, t, theta } => {
                    let vjp = dynamics.vjp(self.value(*x), *t, self.value(*theta), &g);
                    accumulate(&mut adj, *x, vjp.gx.len(), |k| vjp.gx[k]);
                    accumulate(&mut adj, *theta, vjp.gtheta.len(), |k| vjp.gtheta[k]);
                }
            }
        }

        let out = wrt
            .iter()
            .map(|v| adj[v.0].take().unwrap_or_else(|| vec![0.0; self.value(*v).len()]))
            .collect();
        self.discard();
        Ok(out)
    }

    /// Frees every node; further reverse sweeps fail with `TapeConsumed`.
    pub fn discard(&mut self) {
        let freed = self.live;
        self.nodes.clear();
        self.release(freed);
        self.consumed = true;
    }
}

impl Drop for Tape<'_> {
    fn drop(&mut self) {
        if self.live > 0 {
            self.release(self.live);
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl Fn(usize) -> f64) {
    match &mut adj[v.0] {
        Some(acc) => {
            for (k, a) in acc.iter_mut().enumerate().take(len) {
                *a += f(k);
            }
        }
        slot @ None => {
            *slot = Some((0..len).map(f).collect());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_and_scale_gradients() {
        let mut tape = Tape::new(None);
        let x = tape.input(&[1.0, 2.0]);
        let k = tape.scale(x, 3.0);
        let y = tape.combine(x, 0.5, &[(2.0, k)]);
        // y = x + 0.5 * 2 * 3x = 4x
        assert_eq!(tape.value(y), &[4.0, 8.0]);
        let g = tape.backward(y, &[1.0, -1.0], &[x]).unwrap();
        assert_eq!(g[0], vec![4.0, -4.0]);
    }

    #[test]
    fn reuse_after_backward_fails() {
        let mut tape = Tape::new(None);
        let x = tape.input(&[1.0]);
        let y = tape.tanh(x);
        tape.backward(y, &[1.0], &[x]).unwrap();
        assert!(matches!(tape.backward(y, &[1.0], &[x]), Err(Error::TapeConsumed)));
    }

    #[test]
    fn meter_round_trip_through_truncate_and_discard() {
        let meter = MemoryMeter::new();
        meter.alloc(7);
        {
            let mut tape = Tape::new(Some(meter.clone()));
            let x = tape.input(&[1.0, 2.0, 3.0]);
            let mark = tape.mark();
            let y = tape.mul(x, x);
            let _ = tape.add(y, x);
            assert_eq!(meter.live(), 7 + 9);
            tape.truncate(mark);
            assert_eq!(meter.live(), 7 + 3);
            let z = tape.tanh(x);
            tape.backward(z, &[1.0; 3], &[x]).unwrap();
            assert_eq!(meter.live(), 7);
        }
        assert_eq!(meter.live(), 7);
        assert_eq!(meter.peak(), 16);
    }

    #[test]
    fn affine_gradients_match_transpose() {
        let params = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5, -0.5];
        let mut tape = Tape::new(None);
        let p = tape.param(&params);
        let x = tape.input(&[1.0, -1.0, 2.0]);
        let y = tape.affine(p, 0, Some(6), x, 2);
        assert_eq!(tape.value(y), &[1.0 - 2.0 + 6.0 + 0.5, 4.0 - 5.0 + 12.0 - 0.5]);
        let g = tape.backward(y, &[1.0, 2.0], &[x, p]).unwrap();
        assert_eq!(g[0], vec![1.0 + 8.0, 2.0 + 10.0, 3.0 + 12.0]);
        assert_eq!(g[1], vec![1.0, -1.0, 2.0, 2.0, -2.0, 4.0, 1.0, 2.0]);
    }
}
