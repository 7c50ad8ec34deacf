//! Golden fixed-point MLP forward pass.
//!
//! Dot products are computed with native wide integers and passed through
//! the same quantize/ReLU policy as the engine, so engine outputs can be
//! checked bit-for-bit.

use thiserror::Error;

use crate::bitmac::{FixedWord, MacParams};
use crate::npesim::quantize_relu;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("model needs an input layer and at least one computing layer")]
    TooFewLayers,
    #[error("weight matrix {index} is {got_inputs}x{got_outputs}, expected {want_inputs}x{want_outputs}")]
    WeightShape {
        index: usize,
        got_inputs: usize,
        got_outputs: usize,
        want_inputs: usize,
        want_outputs: usize,
    },
    #[error("input vector has {got} features, layer expects {want}")]
    InputLength { got: usize, want: usize },
}

/// Dense weight matrix of one layer, row-major by input neuron:
/// `at(i, u)` is the weight on the edge from input `i` to neuron `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    inputs: usize,
    outputs: usize,
    data: Vec<i16>,
}

impl WeightMatrix {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            data: vec![0; inputs * outputs],
        }
    }

    pub fn from_rows(inputs: usize, outputs: usize, data: Vec<i16>) -> Self {
        assert_eq!(data.len(), inputs * outputs, "weight data length mismatch");
        Self {
            inputs,
            outputs,
            data,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn at(&self, input: usize, output: usize) -> i16 {
        self.data[input * self.outputs + output]
    }

    pub fn set(&mut self, input: usize, output: usize, w: i16) {
        self.data[input * self.outputs + output] = w;
    }

    pub fn rows(&self) -> &[i16] {
        &self.data
    }
}

/// A multi-layer perceptron: layer sizes plus one weight matrix per
/// consecutive layer pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    weights: Vec<WeightMatrix>,
}

impl MlpModel {
    pub fn new(layer_sizes: Vec<usize>, weights: Vec<WeightMatrix>) -> Result<Self, ModelError> {
        if layer_sizes.len() < 2 {
            return Err(ModelError::TooFewLayers);
        }
        if weights.len() != layer_sizes.len() - 1 {
            return Err(ModelError::WeightShape {
                index: weights.len(),
                got_inputs: 0,
                got_outputs: 0,
                want_inputs: layer_sizes[0],
                want_outputs: layer_sizes[1],
            });
        }
        for (l, w) in weights.iter().enumerate() {
            if w.inputs() != layer_sizes[l] || w.outputs() != layer_sizes[l + 1] {
                return Err(ModelError::WeightShape {
                    index: l,
                    got_inputs: w.inputs(),
                    got_outputs: w.outputs(),
                    want_inputs: layer_sizes[l],
                    want_outputs: layer_sizes[l + 1],
                });
            }
        }
        Ok(Self {
            layer_sizes,
            weights,
        })
    }

    /// Model with all-zero weights.
    pub fn zeroed(layer_sizes: &[usize]) -> Result<Self, ModelError> {
        let weights = layer_sizes
            .windows(2)
            .map(|w| WeightMatrix::zeros(w[0], w[1]))
            .collect();
        Self::new(layer_sizes.to_vec(), weights)
    }

    /// Model with seeded uniform random weights in `[lo, hi]`.
    pub fn random(layer_sizes: &[usize], seed: u64, lo: i16, hi: i16) -> Result<Self, ModelError> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let weights = layer_sizes
            .windows(2)
            .map(|w| {
                let data = (0..w[0] * w[1])
                    .map(|_| rng.gen_range(lo..=hi))
                    .collect();
                WeightMatrix::from_rows(w[0], w[1], data)
            })
            .collect();
        Self::new(layer_sizes.to_vec(), weights)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[WeightMatrix] {
        &self.weights
    }

    pub fn weight_layer(&self, l: usize) -> &WeightMatrix {
        &self.weights[l]
    }

    /// Number of computing layers (weight matrices).
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Write the model as one weight file per layer (`layer00.tcdw`,
    /// `layer01.tcdw`, ...), creating the directory if needed.
    pub fn save_dir(&self, dir: &std::path::Path) -> Result<(), crate::npesim::NpeError> {
        std::fs::create_dir_all(dir)?;
        for (l, weights) in self.weights.iter().enumerate() {
            let mut file = std::fs::File::create(dir.join(format!("layer{l:02}.tcdw")))?;
            crate::npesim::format::write_weights(&mut file, weights)?;
        }
        Ok(())
    }

    /// Load a model saved by [`MlpModel::save_dir`]; layer sizes are
    /// recovered from the matrix dimensions.
    pub fn load_dir(dir: &std::path::Path) -> Result<Self, crate::npesim::NpeError> {
        let mut weights = Vec::new();
        for l in 0.. {
            let path = dir.join(format!("layer{l:02}.tcdw"));
            if !path.exists() {
                break;
            }
            let mut file = std::fs::File::open(path)?;
            weights.push(crate::npesim::format::read_weights(&mut file)?);
        }
        if weights.is_empty() {
            return Err(crate::npesim::NpeError::Io(format!(
                "no layer files in {}",
                dir.display()
            )));
        }
        let mut layer_sizes = vec![weights[0].inputs()];
        layer_sizes.extend(weights.iter().map(WeightMatrix::outputs));
        Self::new(layer_sizes, weights).map_err(|e| crate::npesim::NpeError::Io(e.to_string()))
    }
}

/// Seeded uniform random feature vectors.
pub fn random_inputs(batches: usize, length: usize, seed: u64, lo: i16, hi: i16) -> Vec<Vec<i16>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..batches)
        .map(|_| (0..length).map(|_| rng.gen_range(lo..=hi)).collect())
        .collect()
}

/// Exact signed sum of products, embedded two's complement in the default
/// accumulator width.
pub fn exact_dot(pairs: &[(FixedWord, FixedWord)]) -> u64 {
    let mut acc: i64 = 0;
    for &(a, b) in pairs {
        acc = acc.wrapping_add((a.raw() as i64) * (b.raw() as i64));
    }
    (acc as u64) & MacParams::default().mask()
}

/// [`exact_dot`] for arbitrary accumulator widths.
pub fn exact_dot_wrapped(pairs: &[(i32, i32)], acc_bits: u32) -> u64 {
    let mut acc: i64 = 0;
    for &(a, b) in pairs {
        acc = acc.wrapping_add((a as i64) * (b as i64));
    }
    (acc as u64) & ((1u64 << acc_bits) - 1)
}

/// Raw (pre-activation) accumulator of one neuron over one input vector.
fn neuron_acc(inputs: &[i16], weights: &WeightMatrix, neuron: usize) -> u64 {
    let mut acc: i64 = 0;
    for (i, &x) in inputs.iter().enumerate() {
        acc = acc.wrapping_add((x as i64) * (weights.at(i, neuron) as i64));
    }
    (acc as u64) & MacParams::default().mask()
}

/// Per-layer outputs of a golden forward pass, one batch per outer index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardPass {
    per_layer: Vec<Vec<Vec<i16>>>,
}

impl ForwardPass {
    /// Outputs of computing layer `l` (0-based), indexed `[batch][neuron]`.
    pub fn layer(&self, l: usize) -> &[Vec<i16>] {
        &self.per_layer[l]
    }

    /// Final layer outputs, indexed `[batch][neuron]`.
    pub fn outputs(&self) -> &[Vec<i16>] {
        self.per_layer.last().expect("at least one layer")
    }

    pub fn layers(&self) -> usize {
        self.per_layer.len()
    }
}

/// Golden forward pass: every neuron is `quantize_relu(exact_dot(...))`.
///
/// The output layer passes through the same activation policy as hidden
/// layers, mirroring a hardware path that routes every neuron through the
/// activation unit.
pub fn mlp_forward(
    model: &MlpModel,
    input_batches: &[Vec<i16>],
    fraction_bits: u32,
) -> Result<ForwardPass, ModelError> {
    for batch in input_batches {
        if batch.len() != model.layer_sizes[0] {
            return Err(ModelError::InputLength {
                got: batch.len(),
                want: model.layer_sizes[0],
            });
        }
    }
    let mut current: Vec<Vec<i16>> = input_batches.to_vec();
    let mut per_layer = Vec::with_capacity(model.depth());
    for weights in &model.weights {
        let next: Vec<Vec<i16>> = current
            .iter()
            .map(|features| {
                (0..weights.outputs())
                    .map(|u| quantize_relu(neuron_acc(features, weights, u), fraction_bits).raw())
                    .collect()
            })
            .collect();
        per_layer.push(next.clone());
        current = next;
    }
    Ok(ForwardPass { per_layer })
}
