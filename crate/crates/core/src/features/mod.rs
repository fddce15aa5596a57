//! Forward-only VGG-16-shaped feature network with FC-1 and FC-2 taps.
//!
//! Five convolution blocks of 3×3 same-padded convolutions with ReLU, each
//! followed by a 2×2 max pool, then the FC-1 → FC-2 → FC-3 head. FC-3 and
//! the softmax are part of the plan but never evaluated; [`forward`] returns
//! the rectified FC-1 and FC-2 activations.
//!
//! Weights are either drawn from a seeded He-normal scheme (see
//! [`build_network_for`]) or loaded from a `TLWT` file (see [`load_weights`]).
//! All arithmetic is f64; weights are held at f32 precision so that a saved
//! and reloaded network is bit-identical.

mod io;
pub mod layers;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::rgb_planes;

pub use io::{load_weights, save_weights, WEIGHTS_MAGIC};
pub use layers::{conv3x3_same, dense, max_pool2, Activation, ConvLayer, DenseLayer};

/// Side of the square network input.
pub const INPUT_SIZE: usize = 224;
/// Width of both feature taps.
pub const FEATURE_DIM: usize = 4096;

const VGG16_BLOCKS: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
const VGG16_HEAD: [usize; 3] = [4096, 4096, 1000];

/// Layer plan: `(conv_count, filter_count)` per block, and the three FC widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub blocks: Vec<(usize, usize)>,
    pub head: [usize; 3],
}

impl NetworkSpec {
    /// The VGG-16 plan.
    pub fn vgg16() -> Self {
        Self {
            blocks: VGG16_BLOCKS.to_vec(),
            head: VGG16_HEAD,
        }
    }

    /// The VGG-16 plan with every filter count divided by `divisor`.
    ///
    /// The head keeps its 4096-wide taps. `vgg16_narrow(1)` is [`Self::vgg16`].
    /// Narrow plans exist for desk-scale runs; the full plan costs about 15
    /// GFLOP per image.
    pub fn vgg16_narrow(divisor: usize) -> Result<Self> {
        if divisor == 0 || 64 % divisor != 0 {
            return Err(Error::Config(format!(
                "width divisor {divisor} must divide 64"
            )));
        }
        Ok(Self {
            blocks: VGG16_BLOCKS.iter().map(|&(n, f)| (n, f / divisor)).collect(),
            head: VGG16_HEAD,
        })
    }

    /// The divisor `d` with `self == vgg16_narrow(d)`, if any.
    pub fn width_divisor(&self) -> Option<usize> {
        let first = self.blocks.first()?.1;
        if first == 0 || 64 % first != 0 {
            return None;
        }
        let d = 64 / first;
        (Self::vgg16_narrow(d).ok()? == *self).then_some(d)
    }

    pub fn filter_counts(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.1).collect()
    }

    /// `(height, width, channels)` after each block's pool.
    pub fn block_output_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut side = INPUT_SIZE;
        self.blocks
            .iter()
            .map(|&(_, f)| {
                side /= 2;
                (side, side, f)
            })
            .collect()
    }

    /// Length of the flattened last pooled activation feeding FC-1.
    pub fn flatten_len(&self) -> usize {
        self.block_output_shapes()
            .last()
            .map_or(INPUT_SIZE * INPUT_SIZE * 3, |&(h, w, c)| h * w * c)
    }

    /// `(block, index_in_block, in_channels, out_channels)` for every conv.
    pub fn conv_plan(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut plan = Vec::new();
        let mut cin = 3;
        for (b, &(count, filters)) in self.blocks.iter().enumerate() {
            for i in 0..count {
                plan.push((b, i, cin, filters));
                cin = filters;
            }
        }
        plan
    }

    /// `(inputs, outputs)` for FC-1, FC-2, FC-3.
    pub fn dense_plan(&self) -> [(usize, usize); 3] {
        [
            (self.flatten_len(), self.head[0]),
            (self.head[0], self.head[1]),
            (self.head[1], self.head[2]),
        ]
    }
}

/// Which fully connected layer a feature vector is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tap {
    Fc1,
    Fc2,
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tap::Fc1 => "fc1",
            Tap::Fc2 => "fc2",
        })
    }
}

impl FromStr for Tap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fc1" | "fc-1" => Ok(Tap::Fc1),
            "fc2" | "fc-2" => Ok(Tap::Fc2),
            other => Err(Error::Config(format!("unknown tap {other:?} (expected fc1 or fc2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub tap: Tap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightProvenance {
    SeededRandom { seed: u64 },
    LoadedFile(PathBuf),
}

impl fmt::Display for WeightProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightProvenance::SeededRandom { seed } => write!(f, "random:{seed}"),
            WeightProvenance::LoadedFile(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Per-layer tensors. `convs[b]` holds block `b`'s convolutions in order;
/// `dense` holds FC-1, FC-2 and FC-3.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub convs: Vec<Vec<ConvLayer>>,
    pub dense: Vec<DenseLayer>,
    pub provenance: WeightProvenance,
}

/// One named tensor in file order, values at f32 precision.
pub(crate) struct TensorView<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: TensorData<'a>,
}

pub(crate) enum TensorData<'a> {
    F64(&'a [f64]),
    F32(&'a [f32]),
}

impl TensorData<'_> {
    pub fn iter(&self) -> Box<dyn Iterator<Item = f32> + '_> {
        match self {
            TensorData::F64(v) => Box::new(v.iter().map(|&x| x as f32)),
            TensorData::F32(v) => Box::new(v.iter().copied()),
        }
    }
}

pub(crate) fn conv_name(block: usize, index: usize) -> String {
    format!("block{}_conv{}", block + 1, index + 1)
}

pub(crate) fn dense_name(index: usize) -> String {
    format!("fc{}", index + 1)
}

impl NetworkWeights {
    /// The plan these tensors realise.
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            blocks: self
                .convs
                .iter()
                .map(|b| (b.len(), b.last().map_or(0, |l| l.out_channels)))
                .collect(),
            head: [0, 1, 2].map(|i| self.dense.get(i).map_or(0, |l| l.outputs)),
        }
    }

    /// Errors unless every tensor has the shape `spec` prescribes and all
    /// values are finite.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let plan = spec.conv_plan();
        let convs: Vec<&ConvLayer> = self.convs.iter().flatten().collect();
        let blocks_ok = self.convs.len() == spec.blocks.len()
            && self.convs.iter().zip(&spec.blocks).all(|(b, s)| b.len() == s.0);
        if !blocks_ok || convs.len() != plan.len() || self.dense.len() != 3 {
            return Err(Error::DimensionMismatch("weights do not follow the layer plan".into()));
        }
        for (layer, &(b, i, cin, cout)) in convs.iter().zip(&plan) {
            if layer.in_channels != cin
                || layer.out_channels != cout
                || layer.weight.len() != cin * cout * 9
                || layer.bias.len() != cout
            {
                return Err(Error::DimensionMismatch(format!(
                    "{} has shape {}×{}, expected {cout}×{cin}",
                    conv_name(b, i),
                    layer.out_channels,
                    layer.in_channels
                )));
            }
        }
        for (i, (layer, &(inputs, outputs))) in self.dense.iter().zip(&spec.dense_plan()).enumerate() {
            if layer.inputs != inputs
                || layer.outputs != outputs
                || layer.weight.len() != inputs * outputs
                || layer.bias.len() != outputs
            {
                return Err(Error::DimensionMismatch(format!(
                    "{} has shape {}×{}, expected {outputs}×{inputs}",
                    dense_name(i),
                    layer.outputs,
                    layer.inputs
                )));
            }
        }
        let finite = convs
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
            && self
                .dense
                .iter()
                .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Numeric("non-finite network weight".into()));
        }
        Ok(())
    }

    pub(crate) fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        for (b, block) in self.convs.iter().enumerate() {
            for (i, l) in block.iter().enumerate() {
                let name = conv_name(b, i);
                out.push(TensorView {
                    name: format!("{name}.weight"),
                    dims: vec![l.out_channels, l.in_channels, 3, 3],
                    values: TensorData::F64(&l.weight),
                });
                out.push(TensorView {
                    name: format!("{name}.bias"),
                    dims: vec![l.out_channels],
                    values: TensorData::F64(&l.bias),
                });
            }
        }
        for (i, l) in self.dense.iter().enumerate() {
            let name = dense_name(i);
            out.push(TensorView {
                name: format!("{name}.weight"),
                dims: vec![l.outputs, l.inputs],
                values: TensorData::F32(&l.weight),
            });
            out.push(TensorView {
                name: format!("{name}.bias"),
                dims: vec![l.outputs],
                values: TensorData::F64(&l.bias),
            });
        }
        out
    }

    /// SHA-256 over tensor names, shapes and f32 little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tensors() {
            h.update(t.name.as_bytes());
            for d in &t.dims {
                h.update((*d as u32).to_le_bytes());
            }
            let mut buf = Vec::with_capacity(1 << 16);
            for v in t.values.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
                if buf.len() >= 1 << 16 {
                    h.update(&buf);
                    buf.clear();
                }
            }
            h.update(&buf);
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seeded weights for the full VGG-16 plan.
pub fn build_network(seed: u64) -> (NetworkSpec, NetworkWeights) {
    let spec = NetworkSpec::vgg16();
    let weights = build_network_for(&spec, seed);
    (spec, weights)
}

/// Seeded weights for any plan.
///
/// Weight tensor `t` (numbered in file order, skipping biases) is filled
/// from ChaCha8 seeded with `seed` on stream `t`, each value drawn from
/// `N(0, 2 / fan_in)` and rounded to f32. `fan_in` is `9·in_channels` for a
/// convolution and `inputs` for a dense layer. Biases are zero.
pub fn build_network_for(spec: &NetworkSpec, seed: u64) -> NetworkWeights {
    let draw = |stream: u64, n: usize, fan_in: usize| -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let std = (2.0 / fan_in as f64).sqrt();
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * std) as f32
            })
            .collect()
    };
    let mut stream = 0u64;
    let mut convs: Vec<Vec<ConvLayer>> = spec.blocks.iter().map(|_| Vec::new()).collect();
    for (b, _, cin, cout) in spec.conv_plan() {
        let weight = draw(stream, cin * cout * 9, cin * 9).into_iter().map(f64::from).collect();
        stream += 1;
        convs[b].push(ConvLayer {
            in_channels: cin,
            out_channels: cout,
            weight,
            bias: vec![0.0; cout],
        });
    }
    let dense = spec
        .dense_plan()
        .iter()
        .map(|&(inputs, outputs)| {
            let weight = draw(stream, inputs * outputs, inputs);
            stream += 1;
            DenseLayer {
                inputs,
                outputs,
                weight,
                bias: vec![0.0; outputs],
            }
        })
        .collect();
    NetworkWeights {
        convs,
        dense,
        provenance: WeightProvenance::SeededRandom { seed },
    }
}

/// Bilinear resample to 224×224, channel values scaled to `[0, 1]`.
pub fn resize_to_input(image: &RgbImage) -> Result<Activation> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let mut data = Vec::with_capacity(3 * INPUT_SIZE * INPUT_SIZE);
    for plane in rgb_planes(image) {
        data.extend(plane.resize_bilinear(INPUT_SIZE, INPUT_SIZE).into_vec());
    }
    Ok(Activation {
        channels: 3,
        height: INPUT_SIZE,
        width: INPUT_SIZE,
        data,
    })
}

/// Activations recorded by [`forward_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `(height, width, channels)` after each block's pool.
    pub block_shapes: Vec<(usize, usize, usize)>,
    pub fc1: FeatureVector,
    pub fc2: FeatureVector,
}

/// Both taps from one pass.
pub fn forward(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    image: &Activation,
) -> Result<(FeatureVector, FeatureVector)> {
    let t = forward_traced(spec, weights, image)?;
    Ok((t.fc1, t.fc2))
}

/// Like [`forward`], also recording each block's output shape.
pub fn forward_traced(spec: &NetworkSpec, weights: &NetworkWeights, image: &Activation) -> Result<ForwardTrace> {
    if image.channels != 3 || image.height != INPUT_SIZE || image.width != INPUT_SIZE {
        return Err(Error::DimensionMismatch(format!(
            "network input is {}×{}×{}, expected {INPUT_SIZE}×{INPUT_SIZE}×3",
            image.height, image.width, image.channels
        )));
    }
    if image.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network input".into()));
    }
    if weights.convs.len() != spec.blocks.len() || weights.dense.len() != 3 {
        return Err(Error::DimensionMismatch("weights do not follow the layer plan".into()));
    }
    let mut x = image.clone();
    let mut block_shapes = Vec::with_capacity(spec.blocks.len());
    for block in &weights.convs {
        for layer in block {
            x = conv3x3_same(&x, layer, true);
        }
        x = max_pool2(&x);
        block_shapes.push(x.shape());
    }
    let fc1 = dense(&x.data, &weights.dense[0], true);
    let fc2 = dense(&fc1, &weights.dense[1], true);
    if fc1.iter().chain(&fc2).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite activation".into()));
    }
    Ok(ForwardTrace {
        block_shapes,
        fc1: FeatureVector { values: fc1, tap: Tap::Fc1 },
        fc2: FeatureVector { values: fc2, tap: Tap::Fc2 },
    })
}

/// Resizes and forwards every image in parallel; output order follows input
/// order.
pub fn extract_features(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    images: &[RgbImage],
    tap: Tap,
) -> Result<Vec<FeatureVector>> {
    weights.check(spec)?;
    images
        .par_iter()
        .map(|img| {
            let (fc1, fc2) = forward(spec, weights, &resize_to_input(img)?)?;
            Ok(match tap {
                Tap::Fc1 => fc1,
                Tap::Fc2 => fc2,
            })
        })
        .collect()
}
