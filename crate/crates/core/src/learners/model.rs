//! Policy/value models over one-hot states with hand-written backprop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GalaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Logits `|S| x |A|` followed by values `|S|`.
    #[default]
    Tabular,
    /// Affine heads over one-hot features.
    Linear,
    /// Shared `tanh` hidden layer of width `hidden` feeding both heads.
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueModel {
    spec: ModelSpec,
    states: usize,
    actions: usize,
}

/// Forward pass of one state; `hidden` is empty unless the model has one.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub value: f64,
    pub hidden: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// `H(p) = -sum p log p`.
pub fn entropy(logits: &[f64]) -> f64 {
    let lp = log_softmax(logits);
    -lp.iter().map(|&l| l.exp() * l).sum::<f64>()
}

impl PolicyValueModel {
    pub fn new(spec: ModelSpec, states: usize, actions: usize) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(GalaError::invalid("model needs at least one state and action"));
        }
        if let ModelSpec::Mlp { hidden: 0 } = spec {
            return Err(GalaError::config("learner.model.hidden", "must be positive"));
        }
        Ok(PolicyValueModel {
            spec,
            states,
            actions,
        })
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    pub fn dim(&self) -> usize {
        let (s, a) = (self.states, self.actions);
        match self.spec {
            ModelSpec::Tabular => s * a + s,
            ModelSpec::Linear => a * s + a + s + 1,
            ModelSpec::Mlp { hidden: h } => h * s + h + a * h + a + h + 1,
        }
    }

    /// Deterministic initial parameters; tabular models start at zero.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, a) = (self.states, self.actions);
        let mut uniform = |n: usize, fan_in: usize, out: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            out.extend((0..n).map(|_| rng.gen_range(-bound..bound)));
        };
        let mut x = Vec::with_capacity(self.dim());
        match self.spec {
            ModelSpec::Tabular => x.resize(self.dim(), 0.0),
            ModelSpec::Linear => {
                uniform(a * s, s, &mut x);
                x.resize(x.len() + a, 0.0);
                uniform(s, s, &mut x);
                x.push(0.0);
            }
            ModelSpec::Mlp { hidden: h } => {
                uniform(h * s, 1, &mut x);
                x.resize(x.len() + h, 0.0);
                uniform(a * h, h, &mut x);
                x.resize(x.len() + a, 0.0);
                uniform(h, h, &mut x);
                x.push(0.0);
            }
        }
        x
    }

    pub fn forward(&self, x: &[f64], s: usize) -> Forward {
        debug_assert_eq!(x.len(), self.dim());
        let (ns, a) = (self.states, self.actions);
        match self.spec {
            ModelSpec::Tabular => Forward {
                logits: x[s * a..(s + 1) * a].to_vec(),
                value: x[ns * a + s],
                hidden: Vec::new(),
            },
            ModelSpec::Linear => {
                let bias = &x[a * ns..a * ns + a];
                let logits = (0..a).map(|k| x[k * ns + s] + bias[k]).collect();
                let off = a * ns + a;
                Forward {
                    logits,
                    value: x[off + s] + x[off + ns],
                    hidden: Vec::new(),
                }
            }
            ModelSpec::Mlp { hidden: h } => {
                let b1 = h * ns;
                let hidden: Vec<f64> = (0..h).map(|j| (x[j * ns + s] + x[b1 + j]).tanh()).collect();
                let wp = b1 + h;
                let bp = wp + a * h;
                let logits = (0..a)
                    .map(|k| {
                        let row = &x[wp + k * h..wp + (k + 1) * h];
                        row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>() + x[bp + k]
                    })
                    .collect();
                let wv = bp + a;
                let value = x[wv..wv + h].iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>()
                    + x[wv + h];
                Forward {
                    logits,
                    value,
                    hidden,
                }
            }
        }
    }

    /// Accumulates `d loss / d x` given the loss gradient w.r.t. the logits
    /// and the value at state `s`.
    pub fn backward(&self, x: &[f64], s: usize, fwd: &Forward, dlogits: &[f64], dvalue: f64, grad: &mut [f64]) {
        let (ns, a) = (self.states, self.actions);
        match self.spec {
            ModelSpec::Tabular => {
                for k in 0..a {
                    grad[s * a + k] += dlogits[k];
                }
                grad[ns * a + s] += dvalue;
            }
            ModelSpec::Linear => {
                for k in 0..a {
                    grad[k * ns + s] += dlogits[k];
                    grad[a * ns + k] += dlogits[k];
                }
                let off = a * ns + a;
                grad[off + s] += dvalue;
                grad[off + ns] += dvalue;
            }
            ModelSpec::Mlp { hidden: h } => {
                let b1 = h * ns;
                let wp = b1 + h;
                let bp = wp + a * h;
                let wv = bp + a;
                let mut dh = vec![0.0; h];
                for k in 0..a {
                    let g = dlogits[k];
                    if g != 0.0 {
                        for j in 0..h {
                            grad[wp + k * h + j] += g * fwd.hidden[j];
                            dh[j] += g * x[wp + k * h + j];
                        }
                    }
                    grad[bp + k] += g;
                }
                for j in 0..h {
                    grad[wv + j] += dvalue * fwd.hidden[j];
                    dh[j] += dvalue * x[wv + j];
                }
                grad[wv + h] += dvalue;
                for j in 0..h {
                    let dpre = dh[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
                    grad[j * ns + s] += dpre;
                    grad[b1 + j] += dpre;
                }
            }
        }
    }

    /// Greedy action with ties broken by the lowest index.
    pub fn greedy_action(&self, x: &[f64], s: usize) -> usize {
        let logits = self.forward(x, s).logits;
        let mut best = 0;
        for (k, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = k;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1000.0, -3.0, 2.5, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((entropy(&[0.0; 4]) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dims_and_init() {
        let m = PolicyValueModel::new(ModelSpec::Tabular, 5, 2).unwrap();
        assert_eq!(m.dim(), 15);
        assert!(m.init(3).iter().all(|&v| v == 0.0));
        let m = PolicyValueModel::new(ModelSpec::Mlp { hidden: 8 }, 16, 4).unwrap();
        assert_eq!(m.dim(), 8 * 16 + 8 + 32 + 4 + 8 + 1);
        assert_eq!(m.init(7), m.init(7));
        assert_eq!(m.init(7).len(), m.dim());
    }

    #[test]
    fn greedy_ties_lowest_index() {
        let m = PolicyValueModel::new(ModelSpec::Tabular, 2, 3).unwrap();
        let mut x = m.init(0);
        assert_eq!(m.greedy_action(&x, 0), 0);
        x[4] = 1.0;
        x[5] = 1.0;
        assert_eq!(m.greedy_action(&x, 1), 1);
    }
}
