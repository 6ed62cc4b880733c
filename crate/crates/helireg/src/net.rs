//! The solution operator: a fully connected tanh network mapping
//! `(w1, w2, Omega)` to the three steady-state quantities
//! `(pi_phi, pi_theta, c_b)`, with exact Lie-derivative evaluation through
//! forward-mode jets and JSON serialization.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet2, Real};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Default architecture: input (w1, w2, Omega), hidden [32, 256, 256, 32],
/// three outputs.
pub const DEFAULT_LAYER_DIMS: [usize; 6] = [3, 32, 256, 256, 32, 3];

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("unsupported schema_version {0}, expected {MODEL_SCHEMA_VERSION}")]
    Schema(u32),
    #[error("unsupported activation {0:?}, expected \"tanh\"")]
    Activation(String),
    #[error("dimension mismatch in {field}: expected {expected}, got {got}")]
    Dimension {
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("invalid normalization: {0}")]
    Normalization(String),
}

/// Input scaling recorded with the model so inference is self-contained:
/// `w` components are divided by `w_scale`, the frequency by `omega_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub w_scale: f64,
    pub omega_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            w_scale: 6.0,
            omega_scale: 1.0,
        }
    }
}

/// The three steady-state quantities at one exosystem state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOutput {
    pub pi_phi: f64,
    pub pi_theta: f64,
    pub c_b: f64,
}

impl NetOutput {
    pub fn to_array(&self) -> [f64; 3] {
        [self.pi_phi, self.pi_theta, self.c_b]
    }
}

/// Network outputs together with their first and second Lie derivatives
/// along the exosystem vector field (the `Omega` input is held fixed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieBundle {
    pub out: NetOutput,
    pub l1: [f64; 3],
    pub l2: [f64; 3],
}

/// Layered weights and biases of the solution operator.
///
/// Weight matrices are stored row-major, `dims[k+1] x dims[k]` per layer.
/// Immutable after construction; training works on a private flattened copy.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    normalization: Normalization,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases, deterministic per seed, default
    /// architecture and normalization.
    pub fn init(seed: u64) -> Self {
        Self::init_with(&DEFAULT_LAYER_DIMS, Normalization::default(), seed)
    }

    pub fn init_with(dims: &[usize], normalization: Normalization, seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output layers");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..limit))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            layer_dims: dims.to_vec(),
            weights,
            biases,
            normalization,
        }
    }

    /// All-zero parameters (useful as a degenerate baseline).
    pub fn zeros(dims: &[usize], normalization: Normalization) -> Self {
        let weights = (0..dims.len() - 1)
            .map(|k| vec![0.0; dims[k] * dims[k + 1]])
            .collect();
        let biases = (0..dims.len() - 1).map(|k| vec![0.0; dims[k + 1]]).collect();
        Self {
            layer_dims: dims.to_vec(),
            weights,
            biases,
            normalization,
        }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Canonical flattening: per layer, weights (row-major) then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for k in 0..self.weights.len() {
            flat.extend_from_slice(&self.weights[k]);
            flat.extend_from_slice(&self.biases[k]);
        }
        flat
    }

    /// Rebuild from the canonical flattening.
    pub fn from_flat(dims: &[usize], normalization: Normalization, flat: &[f64]) -> Self {
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for k in 0..dims.len() - 1 {
            let nw = dims[k] * dims[k + 1];
            weights.push(flat[off..off + nw].to_vec());
            off += nw;
            biases.push(flat[off..off + dims[k + 1]].to_vec());
            off += dims[k + 1];
        }
        assert_eq!(off, flat.len(), "flat parameter length mismatch");
        Self {
            layer_dims: dims.to_vec(),
            weights,
            biases,
            normalization,
        }
    }

    /// Evaluate the operator at an exosystem state and frequency.
    pub fn forward(&self, w1: f64, w2: f64, omega: f64) -> NetOutput {
        let n = self.normalization;
        let x = [w1 / n.w_scale, w2 / n.w_scale, omega / n.omega_scale];
        let view = ParamsView::from_params(self);
        let y = eval_plain(&view, &self.layer_dims, x);
        NetOutput {
            pi_phi: y[0],
            pi_theta: y[1],
            c_b: y[2],
        }
    }

    /// Outputs with first and second Lie derivatives along the exosystem
    /// field `S w`, computed by jet propagation (no finite differencing).
    ///
    /// The jets are seeded with `v = S w` in both first-order slots and
    /// `S(S w)` in the cross slot, so `d12` is directly
    /// `(Sw)ᵀ H (Sw) + ∇N · S(Sw)`.
    pub fn lie_bundle(&self, w1: f64, w2: f64, omega: f64) -> LieBundle {
        let n = self.normalization;
        let s = n.w_scale;
        let v = [omega * w2, -omega * w1];
        let acc = [-omega * omega * w1, -omega * omega * w2];
        let x = [
            Jet2::new(w1 / s, v[0] / s, acc[0] / s),
            Jet2::new(w2 / s, v[1] / s, acc[1] / s),
            Jet2::constant(omega / n.omega_scale),
        ];
        let view = ParamsView::from_params(self);
        let y = eval_jet(&view, &self.layer_dims, x);
        LieBundle {
            out: NetOutput {
                pi_phi: y[0].value,
                pi_theta: y[1].value,
                c_b: y[2].value,
            },
            l1: [y[0].d, y[1].d, y[2].d],
            l2: [y[0].dd, y[1].dd, y[2].dd],
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            layer_dims: self.layer_dims.clone(),
            activation: "tanh".to_string(),
            normalization: self.normalization,
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| ModelError::Malformed(e.to_string()))?;
        let mut f = std::fs::File::create(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        f.write_all(json.as_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        f.write_all(b"\n").map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ModelError::Schema(file.schema_version));
        }
        if file.activation != "tanh" {
            return Err(ModelError::Activation(file.activation));
        }
        if file.layer_dims.len() < 2 {
            return Err(ModelError::Dimension {
                field: "layer_dims".into(),
                expected: 2,
                got: file.layer_dims.len(),
            });
        }
        let n_layers = file.layer_dims.len() - 1;
        if file.weights.len() != n_layers {
            return Err(ModelError::Dimension {
                field: "weights".into(),
                expected: n_layers,
                got: file.weights.len(),
            });
        }
        if file.biases.len() != n_layers {
            return Err(ModelError::Dimension {
                field: "biases".into(),
                expected: n_layers,
                got: file.biases.len(),
            });
        }
        for k in 0..n_layers {
            let expect_w = file.layer_dims[k] * file.layer_dims[k + 1];
            if file.weights[k].len() != expect_w {
                return Err(ModelError::Dimension {
                    field: format!("weights[{k}]"),
                    expected: expect_w,
                    got: file.weights[k].len(),
                });
            }
            if file.biases[k].len() != file.layer_dims[k + 1] {
                return Err(ModelError::Dimension {
                    field: format!("biases[{k}]"),
                    expected: file.layer_dims[k + 1],
                    got: file.biases[k].len(),
                });
            }
        }
        if !(file.normalization.w_scale > 0.0) || !(file.normalization.omega_scale > 0.0) {
            return Err(ModelError::Normalization(format!(
                "scales must be positive, got w_scale={} omega_scale={}",
                file.normalization.w_scale, file.normalization.omega_scale
            )));
        }
        Ok(Self {
            layer_dims: file.layer_dims,
            weights: file.weights,
            biases: file.biases,
            normalization: file.normalization,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    layer_dims: Vec<usize>,
    activation: String,
    normalization: Normalization,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Borrowed per-layer parameter slices in a generic scalar type, so the same
/// evaluation code runs on plain floats and on tape variables.
pub(crate) struct ParamsView<'a, B> {
    pub weights: Vec<&'a [B]>,
    pub biases: Vec<&'a [B]>,
}

impl<'a> ParamsView<'a, f64> {
    pub fn from_params(p: &'a MlpParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| w.as_slice()).collect(),
            biases: p.biases.iter().map(|b| b.as_slice()).collect(),
        }
    }
}

impl<'a, B> ParamsView<'a, B> {
    /// Slice a canonical flattening (weights then biases per layer).
    pub fn from_flat(dims: &[usize], flat: &'a [B]) -> Self {
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        let mut off = 0;
        for k in 0..dims.len() - 1 {
            let nw = dims[k] * dims[k + 1];
            weights.push(&flat[off..off + nw]);
            off += nw;
            biases.push(&flat[off..off + dims[k + 1]]);
            off += dims[k + 1];
        }
        Self { weights, biases }
    }
}

/// Plain forward pass over any scalar kind.
pub(crate) fn eval_plain<B: Real>(view: &ParamsView<'_, B>, dims: &[usize], x: [B; 3]) -> [B; 3] {
    debug_assert_eq!(dims[0], 3);
    let n_layers = dims.len() - 1;
    let mut act: Vec<B> = x.to_vec();
    let mut next: Vec<B> = Vec::new();
    for layer in 0..n_layers {
        let din = dims[layer];
        let dout = dims[layer + 1];
        let w = view.weights[layer];
        let b = view.biases[layer];
        next.clear();
        for j in 0..dout {
            let row = &w[j * din..(j + 1) * din];
            let mut acc = act[0] * row[0];
            for i in 1..din {
                acc = act[i].mul_add(row[i], acc);
            }
            acc = acc + b[j];
            if layer + 1 < n_layers {
                acc = acc.tanh();
            }
            next.push(acc);
        }
        std::mem::swap(&mut act, &mut next);
    }
    [act[0], act[1], act[2]]
}

/// Jet forward pass: propagates value, two first-order input seeds and the
/// second-order component in one pass.
///
/// Written with explicit per-component accumulation so that the
/// weight-times-jet products use the cheap scalar path (four base
/// multiplications per weight instead of a full jet product).
pub(crate) fn eval_jet<B: Real>(
    view: &ParamsView<'_, B>,
    dims: &[usize],
    x: [Jet2<B>; 3],
) -> [Jet2<B>; 3] {
    debug_assert_eq!(dims[0], 3);
    let n_layers = dims.len() - 1;
    let mut act: Vec<Jet2<B>> = x.to_vec();
    let mut next: Vec<Jet2<B>> = Vec::new();
    for layer in 0..n_layers {
        let din = dims[layer];
        let dout = dims[layer + 1];
        let w = view.weights[layer];
        let b = view.biases[layer];
        next.clear();
        for j in 0..dout {
            let row = &w[j * din..(j + 1) * din];
            let mut acc = act[0].scale_by(row[0]);
            for i in 1..din {
                acc = act[i].mul_add_scaled(row[i], acc);
            }
            acc.value = acc.value + b[j];
            if layer + 1 < n_layers {
                acc = acc.tanh();
            }
            next.push(acc);
        }
        std::mem::swap(&mut act, &mut next);
    }
    [act[0], act[1], act[2]]
}
