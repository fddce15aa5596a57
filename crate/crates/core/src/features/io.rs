//! The `TLWT` weight file.
//!
//! ```text
//! magic    "TLWT"
//! version  u16 = 1
//! count    u16            number of tensors
//! count × {
//!   name   u32 length + UTF-8 bytes, e.g. "block3_conv2.weight", "fc1.bias"
//!   rank   u32
//!   dims   rank × u32     conv weights [out, in, 3, 3]; dense weights [out, in]
//!   data   f32 × Π dims   row-major
//! }
//! ```
//!
//! All integers and floats are little-endian. Tensors may appear in any
//! order; every conv of the plan and all three dense layers must be present
//! with both weight and bias, and nothing else.

use std::collections::BTreeMap;
use std::path::Path;

use super::{conv_name, dense_name, ConvLayer, DenseLayer, NetworkWeights, WeightProvenance};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TLWT";
const VERSION: u16 = 1;

pub fn save_weights(path: impl AsRef<Path>, weights: &NetworkWeights) -> Result<()> {
    let path = path.as_ref();
    let tensors = weights.tensors();
    let mut w = Writer::new(WEIGHTS_MAGIC);
    w.u16(VERSION).u16(tensors.len() as u16);
    for t in &tensors {
        w.str_u32(&t.name).u32(t.dims.len() as u32);
        for &d in &t.dims {
            w.u32(d as u32);
        }
        w.f32s(t.values.iter());
    }
    write_file(path, &w.finish())
}

/// Reads and shape-validates a weight file.
///
/// The tensors must realise the VGG-16 plan or one of its narrow variants.
pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights> {
    let path = path.as_ref();
    let buf = read_file(path)?;
    let mut r = Reader::new(path, &buf, WEIGHTS_MAGIC)?;
    let version = r.u16()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let count = r.u16()? as usize;
    let mut tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
    for _ in 0..count {
        let name = r.str_u32()?;
        let rank = r.u32()? as usize;
        if rank > 4 {
            return Err(r.err(format!("{name}: rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = len.ok_or_else(|| r.err(format!("{name}: size overflow")))?;
        let data = r.f32s(len)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(r.err(format!("{name}: non-finite value")));
        }
        if tensors.insert(name.clone(), (dims, data)).is_some() {
            return Err(r.err(format!("duplicate tensor {name}")));
        }
    }
    r.finish()?;

    let shape_err = |reason: String| Error::format(path, reason);
    type Tensors = BTreeMap<String, (Vec<usize>, Vec<f32>)>;
    let take = |tensors: &mut Tensors, name: String, want: &[Option<usize>]| -> Result<(Vec<usize>, Vec<f32>)> {
        let (dims, data) = tensors
            .remove(&name)
            .ok_or_else(|| shape_err(format!("missing tensor {name}")))?;
        let ok = dims.len() == want.len() && dims.iter().zip(want).all(|(d, w)| w.map_or(true, |w| w == *d));
        if !ok {
            return Err(shape_err(format!("{name}: unexpected shape {dims:?}")));
        }
        Ok((dims, data))
    };

    let mut convs = Vec::new();
    let mut cin = 3;
    for b in 0.. {
        if !tensors.contains_key(&format!("{}.weight", conv_name(b, 0))) {
            break;
        }
        let mut block = Vec::new();
        for i in 0.. {
            let name = conv_name(b, i);
            if !tensors.contains_key(&format!("{name}.weight")) {
                break;
            }
            let (dims, weight) = take(&mut tensors, format!("{name}.weight"), &[None, Some(cin), Some(3), Some(3)])?;
            let cout = dims[0];
            let (_, bias) = take(&mut tensors, format!("{name}.bias"), &[Some(cout)])?;
            block.push(ConvLayer {
                in_channels: cin,
                out_channels: cout,
                weight: weight.into_iter().map(f64::from).collect(),
                bias: bias.into_iter().map(f64::from).collect(),
            });
            cin = cout;
        }
        convs.push(block);
    }
    let mut dense = Vec::new();
    for i in 0..3 {
        let name = dense_name(i);
        let (dims, weight) = take(&mut tensors, format!("{name}.weight"), &[None, None])?;
        let (_, bias) = take(&mut tensors, format!("{name}.bias"), &[Some(dims[0])])?;
        dense.push(DenseLayer {
            inputs: dims[1],
            outputs: dims[0],
            weight,
            bias: bias.into_iter().map(f64::from).collect(),
        });
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(shape_err(format!("unexpected tensor {extra}")));
    }

    let weights = NetworkWeights {
        convs,
        dense,
        provenance: WeightProvenance::LoadedFile(path.to_path_buf()),
    };
    let spec = weights.spec();
    if spec.width_divisor().is_none() {
        return Err(shape_err(format!(
            "layer plan {:?} / {:?} is not VGG-16 shaped",
            spec.blocks, spec.head
        )));
    }
    weights
        .check(&spec)
        .map_err(|e| shape_err(e.to_string()))?;
    Ok(weights)
}
