use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::OptimizerKind;
use crate::error::{Error, Result};

/// Linear warmup to `base` over `warmup` steps, then constant.
/// `step` counts from 1.
pub fn learning_rate(base: f64, step: u64, warmup: u64) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * step as f64 / warmup as f64
    }
}

pub fn global_norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `g` in place so its norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let n = global_norm(g);
    if n > max_norm {
        let s = max_norm / n;
        g.iter_mut().for_each(|x| *x *= s);
    }
    n
}

/// Optimizer state carried across steps, epochs and rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    /// Optimizer steps taken so far.
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: OptimizerKind,
    step: u64,
    len: usize,
}

const MAGIC: &[u8; 8] = b"DQOOPT01";

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Self {
        let n = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => num_params,
        };
        Optimizer {
            kind,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// One update with learning rate `lr`; advances the step counter.
    pub fn update(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.iter_mut().zip(grad) {
                    *t -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for i in 0..theta.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    theta[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            kind: self.kind,
            step: self.step,
            len: self.m.len(),
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 16 * self.m.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self.m.iter().chain(&self.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |d: &str| Error::format("optimizer state", d.to_string());
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic header"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let h: Header =
            serde_json::from_slice(bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated"))?)
                .map_err(|e| bad(&e.to_string()))?;
        let rest = &bytes[12 + hlen..];
        if rest.len() != 16 * h.len {
            return Err(bad("payload has the wrong length"));
        }
        let vals: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Optimizer {
            kind: h.kind,
            step: h.step,
            m: vals[..h.len].to_vec(),
            v: vals[h.len..].to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_linear_then_constant() {
        assert_eq!(learning_rate(1e-6, 75, 150), 1e-6 * 75.0 / 150.0);
        assert_eq!(learning_rate(1e-6, 1, 150), 1e-6 / 150.0);
        assert_eq!(learning_rate(1e-6, 150, 150), 1e-6);
        assert_eq!(learning_rate(1e-6, 10_000, 150), 1e-6);
        assert_eq!(learning_rate(1e-6, 1, 0), 1e-6);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![30.0, 40.0];
        assert_eq!(clip_global_norm(&mut g, 10.0), 50.0);
        assert!((global_norm(&g) - 10.0).abs() < 1e-12);
        let mut small = vec![0.3, 0.4];
        clip_global_norm(&mut small, 10.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }

    #[test]
    fn updates_and_state_round_trip() {
        let mut sgd = Optimizer::new(OptimizerKind::Sgd, 2);
        let mut t = vec![1.0, 1.0];
        sgd.update(&mut t, &[1.0, -2.0], 0.1);
        assert_eq!(t, vec![0.9, 1.2]);

        let mut adam = Optimizer::new(OptimizerKind::adam(), 2);
        let mut t = vec![0.0, 0.0];
        adam.update(&mut t, &[0.5, -3.0], 0.01);
        // First Adam step moves each coordinate by ≈ lr·sign(g).
        assert!((t[0] + 0.01).abs() < 1e-6 && (t[1] - 0.01).abs() < 1e-6);
        let back = Optimizer::from_bytes(&adam.to_bytes()).unwrap();
        assert_eq!(back, adam);
        assert_eq!(back.to_bytes(), adam.to_bytes());
    }
}
