//! Convolution, pooling and dense layers on CHW activations.

/// Channel-major activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Activation {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// 3×3 convolution, stride 1, zero "same" padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][3][3]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Fully connected layer, `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`, row-major. Stored in single precision to halve the
    /// footprint of the wide head; products are accumulated in f64.
    pub weight: Vec<f32>,
    pub bias: Vec<f64>,
}

/// Output pixels per im2col tile; bounds scratch memory to
/// `in_channels · 9 · TILE` values.
const TILE: usize = 2048;

/// Convolution via row-tiled im2col and a GEMM. The tiling is fixed, so the
/// floating-point reduction order is fixed too.
pub fn conv3x3_same(input: &Activation, layer: &ConvLayer, relu: bool) -> Activation {
    assert_eq!(input.channels, layer.in_channels, "conv input channels");
    let (h, w) = (input.height, input.width);
    let k = layer.in_channels * 9;
    let mut out = Activation::zeros(layer.out_channels, h, w);
    let rows_per_tile = (TILE / w.max(1)).max(1);
    let mut cols = vec![0.0; k * rows_per_tile * w];
    let mut prod = vec![0.0; layer.out_channels * rows_per_tile * w];

    let mut y0 = 0;
    while y0 < h {
        let rows = rows_per_tile.min(h - y0);
        let n = rows * w;
        // cols[(ci·9 + ky·3 + kx), p] for p over the tile's pixels.
        for ci in 0..layer.in_channels {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = (ci * 9 + ky * 3 + kx) * n;
                    for ty in 0..rows {
                        let sy = (y0 + ty) as isize + ky as isize - 1;
                        let dst = &mut cols[row + ty * w..row + (ty + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            dst.fill(0.0);
                            continue;
                        }
                        let src_row = &input.data[(ci * h + sy as usize) * w..][..w];
                        for (x, d) in dst.iter_mut().enumerate() {
                            let sx = x as isize + kx as isize - 1;
                            *d = if sx < 0 || sx >= w as isize {
                                0.0
                            } else {
                                src_row[sx as usize]
                            };
                        }
                    }
                }
            }
        }
        // prod (out × n) = weight (out × k) · cols (k × n)
        unsafe {
            matrixmultiply::dgemm(
                layer.out_channels,
                k,
                n,
                1.0,
                layer.weight.as_ptr(),
                k as isize,
                1,
                cols.as_ptr(),
                n as isize,
                1,
                0.0,
                prod.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        for co in 0..layer.out_channels {
            let b = layer.bias[co];
            let dst = &mut out.data[(co * h + y0) * w..][..n];
            for (d, &p) in dst.iter_mut().zip(&prod[co * n..(co + 1) * n]) {
                let v = p + b;
                *d = if relu { v.max(0.0) } else { v };
            }
        }
        y0 += rows;
    }
    out
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn max_pool2(input: &Activation) -> Activation {
    let (oh, ow) = (input.height / 2, input.width / 2);
    let mut out = Activation::zeros(input.channels, oh, ow);
    for c in 0..input.channels {
        for y in 0..oh {
            for x in 0..ow {
                let m = input
                    .get(c, 2 * y, 2 * x)
                    .max(input.get(c, 2 * y, 2 * x + 1))
                    .max(input.get(c, 2 * y + 1, 2 * x))
                    .max(input.get(c, 2 * y + 1, 2 * x + 1));
                out.data[(c * oh + y) * ow + x] = m;
            }
        }
    }
    out
}

/// `W x + b`, optionally rectified. Each output is a sequential dot product.
pub fn dense(input: &[f64], layer: &DenseLayer, relu: bool) -> Vec<f64> {
    assert_eq!(input.len(), layer.inputs, "dense input length");
    layer
        .weight
        .chunks_exact(layer.inputs)
        .zip(&layer.bias)
        .map(|(row, b)| {
            let v = row.iter().zip(input).map(|(&w, x)| w as f64 * x).sum::<f64>() + b;
            if relu {
                v.max(0.0)
            } else {
                v
            }
        })
        .collect()
}
