//! Inference for the fixed two-block 3D convolutional network.
//!
//! Each block is `conv(2×2×2, stride 1, same) → ReLU → maxpool(2, stride 2)`, taking a 64³ input
//! to 10×32³ and then 10×16³. Together with the raw input this yields 21 activation maps.
//! The dense and softmax layers are carried in the weights file but never executed.
//!
//! Weights file layout: one line of compact JSON (the header) terminated by `\n`, followed by the
//! little-endian f32 payload in the order conv1 filters, conv1 biases, conv2 filters, conv2 biases,
//! then the dense and softmax tensors when present. Filters are indexed
//! `[out][in][dz][dy][dx]` (x fastest).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Modality, RoiMask, Volume3D, CNN_INPUT_SIZE};

pub const WEIGHTS_VERSION: u32 = 1;
pub const CONV_CHANNELS: usize = 10;
pub const KERNEL: usize = 2;
pub const FC_UNITS: usize = 128;
pub const N_CLASSES: usize = 2;
/// Raw input plus ten maps from each convolutional block.
pub const N_MAPS: usize = 1 + 2 * CONV_CHANNELS;

/// Channel-major stack of 3D grids, each grid x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    channels: usize,
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(channels: usize, dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected = channels * dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "tensor data has {} values, {channels}x{dims:?} needs {expected}",
                data.len()
            )));
        }
        Ok(Self { channels, dims, data })
    }

    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Self { channels, dims, data: vec![0.0; channels * dims.iter().product::<usize>()] }
    }

    pub fn from_volume(v: &Volume3D) -> Self {
        Self { channels: 1, dims: v.dims(), data: v.data().to_vec() }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn voxels_per_channel(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.voxels_per_channel();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, x: usize, y: usize, z: usize) -> f64 {
        let [nx, ny, _] = self.dims;
        self.data[c * self.voxels_per_channel() + (z * ny + y) * nx + x]
    }

    fn channel_volume(&self, c: usize, spacing: f64) -> Volume3D {
        Volume3D::new(self.dims, [spacing; 3], self.channel(c).to_vec(), Modality::DERIVED)
            .expect("activation values are finite")
    }
}

/// A cubic-kernel convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    /// `[out][in][dz][dy][dx]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(out_channels: usize, in_channels: usize, kernel: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let n = out_channels * in_channels * kernel.pow(3);
        if kernel == 0 || weights.len() != n || bias.len() != out_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv layer {out_channels}x{in_channels}x{kernel}^3 needs {n} weights and {out_channels} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { out_channels, in_channels, kernel, weights, bias })
    }

    #[inline]
    pub fn weight(&self, o: usize, c: usize, dx: usize, dy: usize, dz: usize) -> f64 {
        let k = self.kernel;
        self.weights[(((o * self.in_channels + c) * k + dz) * k + dy) * k + dx]
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Dense layer stored for completeness; never evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub out_features: usize,
    pub in_features: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnWeights {
    pub layer1: ConvLayer,
    pub layer2: ConvLayer,
    pub fc: Option<DenseLayer>,
    pub softmax: Option<DenseLayer>,
    pub provenance: String,
    pub version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

// ---------------------------------------------------------------------------
// Weights I/O

#[derive(Debug, Serialize, Deserialize)]
struct TensorShape {
    weight: Vec<usize>,
    bias: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerShapes {
    conv1: TensorShape,
    conv2: TensorShape,
    fc: Option<TensorShape>,
    softmax: Option<TensorShape>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsHeader {
    version: u32,
    provenance: String,
    layers: LayerShapes,
}

fn conv_shape(out: usize, inp: usize) -> TensorShape {
    TensorShape { weight: vec![out, inp, KERNEL, KERNEL, KERNEL], bias: vec![out] }
}

fn fc_in_features() -> usize {
    let side = CNN_INPUT_SIZE / 4;
    CONV_CHANNELS * side * side * side
}

fn check_shape(name: &str, got: &TensorShape, want: &TensorShape) -> Result<()> {
    if got.weight != want.weight || got.bias != want.bias {
        return Err(Error::MalformedWeights(format!(
            "{name} shape {:?}/{:?}, expected {:?}/{:?}",
            got.weight, got.bias, want.weight, want.bias
        )));
    }
    Ok(())
}

struct PayloadReader<'a> {
    values: &'a [f64],
    pos: usize,
}

impl PayloadReader<'_> {
    fn take(&mut self, n: usize) -> Vec<f64> {
        let out = self.values[self.pos..self.pos + n].to_vec();
        self.pos += n;
        out
    }
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<CnnWeights> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_weights(&fs::read(path)?)
}

pub fn parse_weights(bytes: &[u8]) -> Result<CnnWeights> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedWeights("missing header line".into()))?;
    let header: WeightsHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::MalformedWeights(format!("header: {e}")))?;
    if header.version != WEIGHTS_VERSION {
        return Err(Error::MalformedWeights(format!("unsupported version {}", header.version)));
    }
    let l = &header.layers;
    check_shape("conv1", &l.conv1, &conv_shape(CONV_CHANNELS, 1))?;
    check_shape("conv2", &l.conv2, &conv_shape(CONV_CHANNELS, CONV_CHANNELS))?;
    let fc_want = TensorShape { weight: vec![FC_UNITS, fc_in_features()], bias: vec![FC_UNITS] };
    let sm_want = TensorShape { weight: vec![N_CLASSES, FC_UNITS], bias: vec![N_CLASSES] };
    if let Some(fc) = &l.fc {
        check_shape("fc", fc, &fc_want)?;
    }
    if let Some(sm) = &l.softmax {
        check_shape("softmax", sm, &sm_want)?;
    }

    let count = |s: &TensorShape| s.weight.iter().product::<usize>() + s.bias.iter().product::<usize>();
    let expected = count(&l.conv1)
        + count(&l.conv2)
        + l.fc.as_ref().map_or(0, count)
        + l.softmax.as_ref().map_or(0, count);
    let payload = &bytes[nl + 1..];
    if payload.len() != expected * 4 {
        return Err(Error::MalformedWeights(format!(
            "payload holds {} bytes, header declares {expected} f32 values",
            payload.len()
        )));
    }
    let mut values = Vec::with_capacity(expected);
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        if !v.is_finite() {
            return Err(Error::NonFiniteWeights(i));
        }
        values.push(v as f64);
    }

    let mut r = PayloadReader { values: &values, pos: 0 };
    let w1 = r.take(CONV_CHANNELS * KERNEL.pow(3));
    let b1 = r.take(CONV_CHANNELS);
    let w2 = r.take(CONV_CHANNELS * CONV_CHANNELS * KERNEL.pow(3));
    let b2 = r.take(CONV_CHANNELS);
    let mut dense = |present: bool, out: usize, inp: usize| {
        present.then(|| DenseLayer { out_features: out, in_features: inp, weights: r.take(out * inp), bias: r.take(out) })
    };
    let fc = dense(l.fc.is_some(), FC_UNITS, fc_in_features());
    let softmax = dense(l.softmax.is_some(), N_CLASSES, FC_UNITS);

    Ok(CnnWeights {
        layer1: ConvLayer::new(CONV_CHANNELS, 1, KERNEL, w1, b1)?,
        layer2: ConvLayer::new(CONV_CHANNELS, CONV_CHANNELS, KERNEL, w2, b2)?,
        fc,
        softmax,
        provenance: header.provenance,
        version: header.version,
    })
}

pub fn weights_to_bytes(w: &CnnWeights) -> Result<Vec<u8>> {
    let dense_shape = |d: &DenseLayer| TensorShape { weight: vec![d.out_features, d.in_features], bias: vec![d.out_features] };
    let header = WeightsHeader {
        version: w.version,
        provenance: w.provenance.clone(),
        layers: LayerShapes {
            conv1: conv_shape(w.layer1.out_channels, w.layer1.in_channels),
            conv2: conv_shape(w.layer2.out_channels, w.layer2.in_channels),
            fc: w.fc.as_ref().map(dense_shape),
            softmax: w.softmax.as_ref().map(dense_shape),
        },
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    let mut push = |vals: &[f64]| bytes.extend(vals.iter().flat_map(|&v| (v as f32).to_le_bytes()));
    push(&w.layer1.weights);
    push(&w.layer1.bias);
    push(&w.layer2.weights);
    push(&w.layer2.bias);
    for d in [&w.fc, &w.softmax].into_iter().flatten() {
        push(&d.weights);
        push(&d.bias);
    }
    Ok(bytes)
}

pub fn save_weights(w: &CnnWeights, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, weights_to_bytes(w)?)?;
    Ok(())
}

/// Deterministic stand-in weights: every value uniform on the open interval (-0.5, 0.5), drawn from
/// ChaCha8 seeded with `seed`, in payload order. No dense/softmax tensors are generated.
pub fn generate_test_weights(seed: u64) -> CnnWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| loop {
                let u: f32 = rng.random();
                if u != 0.0 {
                    break (u - 0.5) as f64;
                }
            })
            .collect()
    };
    let w1 = draw(CONV_CHANNELS * KERNEL.pow(3));
    let b1 = draw(CONV_CHANNELS);
    let w2 = draw(CONV_CHANNELS * CONV_CHANNELS * KERNEL.pow(3));
    let b2 = draw(CONV_CHANNELS);
    CnnWeights {
        layer1: ConvLayer::new(CONV_CHANNELS, 1, KERNEL, w1, b1).expect("static shape"),
        layer2: ConvLayer::new(CONV_CHANNELS, CONV_CHANNELS, KERNEL, w2, b2).expect("static shape"),
        fc: None,
        softmax: None,
        provenance: format!("chacha8-uniform(-0.5,0.5) seed={seed}"),
        version: WEIGHTS_VERSION,
    }
}

impl CnnWeights {
    pub fn n_conv_params(&self) -> usize {
        self.layer1.n_params() + self.layer2.n_params()
    }
}

// ---------------------------------------------------------------------------
// Operators

fn output_geometry(n: usize, k: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => (n >= k).then(|| ((n - k) / stride + 1, 0)),
        Padding::Same => {
            let out = n.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(n);
            Some((out, total / 2))
        }
    }
}

/// Range of output indices `o` for which `o*stride + d - pad` lands inside `[0, n)`.
fn valid_range(out: usize, n: usize, d: usize, pad: usize, stride: usize) -> std::ops::Range<usize> {
    let lo = pad.saturating_sub(d).div_ceil(stride);
    let hi_in = (n - 1 + pad) as isize - d as isize;
    if hi_in < 0 {
        return 0..0;
    }
    let hi = (hi_in as usize / stride + 1).min(out);
    lo.min(hi)..hi
}

/// Cross-correlation `out[o,p] = b_o + Σ w[o,c,d] · in[c, p·stride + d − pad]` with zero padding.
/// `Same` padding yields `ceil(n / stride)` outputs per axis with the extra padding placed after.
pub fn conv3d(input: &Tensor4, layer: &ConvLayer, stride: usize, padding: Padding) -> Result<Tensor4> {
    if input.channels != layer.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, filters expect {}",
            input.channels, layer.in_channels
        )));
    }
    if stride == 0 {
        return Err(Error::ShapeMismatch("stride must be positive".into()));
    }
    let k = layer.kernel;
    let mut out_dims = [0usize; 3];
    let mut pad = [0usize; 3];
    for a in 0..3 {
        let (o, p) = output_geometry(input.dims[a], k, stride, padding).ok_or_else(|| {
            Error::ShapeMismatch(format!("kernel {k} larger than input extent {}", input.dims[a]))
        })?;
        out_dims[a] = o;
        pad[a] = p;
    }
    let [nx, ny, _] = input.dims;
    let [ox, oy, oz] = out_dims;
    let per_out = ox * oy * oz;

    let channels: Vec<Vec<f64>> = (0..layer.out_channels)
        .into_par_iter()
        .map(|o| {
            let mut acc = vec![layer.bias[o]; per_out];
            for c in 0..layer.in_channels {
                let src = input.channel(c);
                for dz in 0..k {
                    let rz = valid_range(oz, input.dims[2], dz, pad[2], stride);
                    for dy in 0..k {
                        let ry = valid_range(oy, ny, dy, pad[1], stride);
                        for dx in 0..k {
                            let rx = valid_range(ox, nx, dx, pad[0], stride);
                            let w = layer.weight(o, c, dx, dy, dz);
                            if w == 0.0 {
                                continue;
                            }
                            for z in rz.clone() {
                                let iz = z * stride + dz - pad[2];
                                for y in ry.clone() {
                                    let iy = y * stride + dy - pad[1];
                                    let src_row = (iz * ny + iy) * nx;
                                    let dst_row = (z * oy + y) * ox;
                                    for x in rx.clone() {
                                        let ix = x * stride + dx - pad[0];
                                        acc[dst_row + x] += w * src[src_row + ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    Tensor4::new(layer.out_channels, out_dims, channels.concat())
}

/// 2×2×2 max pooling with stride 2.
pub fn maxpool3d(input: &Tensor4) -> Result<Tensor4> {
    if input.dims.iter().any(|d| d % 2 != 0) {
        return Err(Error::IndivisibleDims(input.dims));
    }
    let [nx, ny, _] = input.dims;
    let out_dims = input.dims.map(|d| d / 2);
    let [ox, oy, oz] = out_dims;
    let mut data = Vec::with_capacity(input.channels * ox * oy * oz);
    for c in 0..input.channels {
        let src = input.channel(c);
        for z in 0..oz {
            for y in 0..oy {
                for x in 0..ox {
                    let mut m = f64::NEG_INFINITY;
                    for dz in 0..2 {
                        for dy in 0..2 {
                            let row = ((2 * z + dz) * ny + 2 * y + dy) * nx + 2 * x;
                            m = m.max(src[row]).max(src[row + 1]);
                        }
                    }
                    data.push(m);
                }
            }
        }
    }
    Tensor4::new(input.channels, out_dims, data)
}

pub fn relu(input: &Tensor4) -> Tensor4 {
    Tensor4 { data: input.data.iter().map(|&x| x.max(0.0)).collect(), ..input.clone() }
}

/// A coarse voxel is in the ROI iff any of its 2×2×2 children is.
pub fn downsample_mask(mask: &RoiMask) -> Result<RoiMask> {
    let dims = mask.dims();
    if dims.iter().any(|d| d % 2 != 0) {
        return Err(Error::IndivisibleDims(dims));
    }
    let out = dims.map(|d| d / 2);
    let mut coarse = RoiMask::empty(out);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if mask.contains(x, y, z) {
                    coarse.set(x / 2, y / 2, z / 2, true);
                }
            }
        }
    }
    Ok(coarse)
}

/// The 21 activation maps of one forward pass and their ROI masks.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    pub input_map: Volume3D,
    pub layer1_maps: Vec<Volume3D>,
    pub layer2_maps: Vec<Volume3D>,
    /// Masks at 64³, 32³ and 16³.
    pub masks: [RoiMask; 3],
}

impl ActivationSet {
    pub fn len(&self) -> usize {
        1 + self.layer1_maps.len() + self.layer2_maps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Map `i` (0 = input, 1..=10 = block 1, 11..=20 = block 2) with its resolution-matched mask.
    pub fn map(&self, i: usize) -> Option<(&Volume3D, &RoiMask)> {
        let n1 = self.layer1_maps.len();
        match i {
            0 => Some((&self.input_map, &self.masks[0])),
            i if i <= n1 => Some((&self.layer1_maps[i - 1], &self.masks[1])),
            i => self.layer2_maps.get(i - 1 - n1).map(|m| (m, &self.masks[2])),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Volume3D, &RoiMask)> + '_ {
        (0..self.len()).filter_map(move |i| self.map(i))
    }
}

/// Runs both convolutional blocks. Dropout is the identity at inference.
pub fn forward(input64: &Volume3D, mask64: &RoiMask, w: &CnnWeights) -> Result<ActivationSet> {
    let n = CNN_INPUT_SIZE;
    if input64.dims() != [n; 3] || mask64.dims() != [n; 3] {
        return Err(Error::ShapeMismatch(format!(
            "network input must be {n}^3, got volume {:?} and mask {:?}",
            input64.dims(),
            mask64.dims()
        )));
    }
    let x0 = Tensor4::from_volume(input64);
    let block1 = maxpool3d(&relu(&conv3d(&x0, &w.layer1, 1, Padding::Same)?))?;
    let block2 = maxpool3d(&relu(&conv3d(&block1, &w.layer2, 1, Padding::Same)?))?;
    let mask32 = downsample_mask(mask64)?;
    let mask16 = downsample_mask(&mask32)?;
    Ok(ActivationSet {
        input_map: input64.clone(),
        layer1_maps: (0..block1.channels).map(|c| block1.channel_volume(c, 2.0)).collect(),
        layer2_maps: (0..block2.channels).map(|c| block2.channel_volume(c, 4.0)).collect(),
        masks: [mask64.clone(), mask32, mask16],
    })
}
