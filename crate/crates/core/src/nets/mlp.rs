use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LogitModel;
use crate::numkit::LogitVec;

const CHECKPOINT_HEADER: &str = "logitshift-mlp 1";

/// Head shapes used by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Linear,
    Mlp1,
    Mlp2,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Linear, Arch::Mlp1, Arch::Mlp2];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Linear => "linear",
            Arch::Mlp1 => "mlp1",
            Arch::Mlp2 => "mlp2",
        }
    }

    pub fn dims(self, input: usize, hidden: usize, classes: usize) -> Vec<usize> {
        match self {
            Arch::Linear => vec![input, classes],
            Arch::Mlp1 => vec![input, hidden, classes],
            Arch::Mlp2 => vec![input, hidden, hidden, classes],
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown architecture `{s}` (expected linear, mlp1 or mlp2)"
                ))
            })
    }
}

/// Fully connected network with rectifier hidden layers and a linear output.
///
/// Parameters live in one flat buffer, layer by layer: the `out × in`
/// weight matrix in row-major order, then the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of one forward pass, kept for backpropagation.
pub(crate) struct Tape {
    /// Input of every layer, post-activation; `acts[0]` is `x`.
    acts: Vec<Vec<f64>>,
    pub(crate) logits: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl MlpModel {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * (w[0] + 1) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        Self::check_dims(dims)?;
        if params.len() != param_count(dims) {
            return Err(Error::DimensionMismatch {
                expected: param_count(dims),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "invalid layer sizes {dims:?}"
            )));
        }
        if dims[dims.len() - 1] < 2 {
            return Err(Error::InvalidArgument(
                "a classifier needs at least two outputs".into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn forward_tape(&self, x: &[f64]) -> Result<Tape> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let n_layers = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(n_layers);
        let mut cur = x.to_vec();
        let mut off = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[off..off + fan_out * fan_in];
            let biases = &self.params[off + fan_out * fan_in..off + fan_out * (fan_in + 1)];
            off += fan_out * (fan_in + 1);
            let mut next: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(biases)
                .map(|(row, b)| b + row.iter().zip(&cur).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            acts.push(std::mem::replace(&mut cur, next));
        }
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network logits"));
        }
        Ok(Tape { acts, logits: cur })
    }

    /// Adds `∂L/∂θ` into `grad`, given `∂L/∂logits` for the pass in `tape`.
    pub(crate) fn backward(&self, tape: &Tape, dlogits: &[f64], grad: &mut [f64]) {
        let mut delta = dlogits.to_vec();
        let mut end = self.params.len();
        for l in (0..self.dims.len() - 1).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let start = end - fan_out * (fan_in + 1);
            let input = &tape.acts[l];
            let (gw, gb) = grad[start..end].split_at_mut(fan_out * fan_in);
            for (o, d) in delta.iter().enumerate() {
                gb[o] += d;
                for (g, a) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let weights = &self.params[start..start + fan_out * fan_in];
                let mut prev = vec![0.0; fan_in];
                for (row, d) in weights.chunks_exact(fan_in).zip(&delta) {
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
            end = start;
        }
    }

    /// Versioned plain-text checkpoint: sizes, then per layer one line per
    /// weight row and one line of biases.
    pub fn to_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_HEADER}\ndims");
        for d in &self.dims {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
        let mut off = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            out.push_str(&format!("layer {l} {fan_out} {fan_in}\n"));
            let line = |vals: &[f64]| {
                vals.iter()
                    .map(|v| format!("{v:?}"))
                    .collect::<Vec<_>>()
                    .join(" ")
                    + "\n"
            };
            for row in self.params[off..off + fan_out * fan_in].chunks_exact(fan_in) {
                out.push_str(&line(row));
            }
            out.push_str(&line(
                &self.params[off + fan_out * fan_in..off + fan_out * (fan_in + 1)],
            ));
            off += fan_out * (fan_in + 1);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let err = |m: String| Error::parse("network checkpoint", m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(CHECKPOINT_HEADER) {
            return Err(err(format!("expected header `{CHECKPOINT_HEADER}`")));
        }
        let dims_line = lines
            .next()
            .ok_or_else(|| err("missing dims line".into()))?;
        let mut it = dims_line.split_whitespace();
        if it.next() != Some("dims") {
            return Err(err("expected `dims`".into()));
        }
        let dims: Vec<usize> = it
            .map(|t| t.parse().map_err(|_| err(format!("bad layer size `{t}`"))))
            .collect::<Result<_>>()?;
        Self::check_dims(&dims)?;
        let floats = |line: Option<&str>, n: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| err("truncated checkpoint".into()))?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if v.len() != n {
                return Err(err(format!("expected {n} values, found {}", v.len())));
            }
            Ok(v)
        };
        let mut params = Vec::with_capacity(param_count(&dims));
        for (l, w) in dims.windows(2).enumerate() {
            let expected = format!("layer {l} {} {}", w[1], w[0]);
            if lines.next().map(str::trim) != Some(expected.as_str()) {
                return Err(err(format!("expected `{expected}`")));
            }
            for _ in 0..w[1] {
                params.extend(floats(lines.next(), w[0])?);
            }
            params.extend(floats(lines.next(), w[1])?);
        }
        if lines.next().is_some() {
            return Err(err("trailing content".into()));
        }
        Self::from_params(&dims, params)
    }
}

impl LogitModel for MlpModel {
    fn n_classes(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    fn logits(&self, x: &[f64]) -> Result<LogitVec> {
        LogitVec::new(self.forward_tape(x)?.logits)
    }
}
