//! Checkpoint layout: magic `INDZCKPT`, version `u32`, config length `u32`
//! and UTF-8 JSON config echo, then `d`, `s`, latent width (`u32` each) and
//! the layers: encoder (count `u32` + layers), mean head, log-variance head,
//! decoder (count + layers). A layer is `in` `u32`, `out` `u32`, activation
//! tag `u8` (0 identity, 1 ReLU), `out × in` weights and `out` biases as `f64`.

use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use indzsl_core::ivae::IvaeParameters;
use indzsl_core::nnkernel::{Activation, DenseLayer, Matrix, Mlp};

use super::{put_header, read_file, write_file, ByteReader};
use crate::error::FormatResult;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INDZCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// JSON echo of the configuration that produced the parameters.
    pub config_json: String,
    pub params: IvaeParameters,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.write_u32::<LittleEndian>(u32::try_from(v).expect("checkpoint size fits u32"))
        .expect("write to Vec");
}

fn put_layer(buf: &mut Vec<u8>, layer: &DenseLayer) {
    put_u32(buf, layer.in_dim());
    put_u32(buf, layer.out_dim());
    buf.push(layer.activation.tag());
    for &v in layer.weight.as_slice().iter().chain(&layer.bias) {
        buf.write_f64::<LittleEndian>(v).expect("write to Vec");
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let p = &ckpt.params;
    let mut buf = Vec::new();
    put_header(&mut buf, CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    put_u32(&mut buf, ckpt.config_json.len());
    buf.extend_from_slice(ckpt.config_json.as_bytes());
    put_u32(&mut buf, p.feature_dim);
    put_u32(&mut buf, p.semantic_dim);
    put_u32(&mut buf, p.latent_dim);
    put_u32(&mut buf, p.encoder.layers.len());
    p.encoder.layers.iter().for_each(|l| put_layer(&mut buf, l));
    put_layer(&mut buf, &p.mu_head);
    put_layer(&mut buf, &p.log_var_head);
    put_u32(&mut buf, p.decoder.layers.len());
    p.decoder.layers.iter().for_each(|l| put_layer(&mut buf, l));
    buf
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> FormatResult<()> {
    write_file(path, &encode_checkpoint(ckpt))
}

fn take_layer(r: &mut ByteReader<'_>) -> FormatResult<DenseLayer> {
    let input = r.u32("layer input width")? as usize;
    let output = r.u32("layer output width")? as usize;
    let tag = r.u8("activation tag")?;
    let activation = Activation::from_tag(tag).ok_or_else(|| r.invalid(format!("unknown activation tag {tag}")))?;
    let n = input
        .checked_mul(output)
        .ok_or_else(|| r.invalid("layer size overflows"))?;
    let weight = Matrix::from_vec(output, input, r.f64s(n, "layer weights")?)?;
    let bias = r.f64s(output, "layer biases")?;
    Ok(DenseLayer::new(weight, bias, activation)?)
}

fn take_mlp(r: &mut ByteReader<'_>) -> FormatResult<Mlp> {
    let count = r.u32("layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        layers.push(take_layer(r)?);
    }
    Mlp::new(layers).map_err(|e| r.invalid(e.to_string()))
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> FormatResult<Checkpoint> {
    let mut r = ByteReader::new(path, bytes);
    r.header(CHECKPOINT_MAGIC, "checkpoint", CHECKPOINT_VERSION)?;
    let len = r.u32("config length")? as usize;
    let config_json =
        String::from_utf8(r.bytes(len, "config echo")?).map_err(|_| r.invalid("config echo is not UTF-8"))?;
    let feature_dim = r.u32("feature dimension")? as usize;
    let semantic_dim = r.u32("semantic dimension")? as usize;
    let latent_dim = r.u32("latent dimension")? as usize;
    let encoder = take_mlp(&mut r)?;
    let mu_head = take_layer(&mut r)?;
    let log_var_head = take_layer(&mut r)?;
    let decoder = take_mlp(&mut r)?;
    r.finish()?;
    let params = IvaeParameters {
        encoder,
        mu_head,
        log_var_head,
        decoder,
        feature_dim,
        semantic_dim,
        latent_dim,
    };
    params.validate().map_err(|e| r.invalid(e.to_string()))?;
    Ok(Checkpoint { config_json, params })
}

pub fn read_checkpoint(path: &Path) -> FormatResult<Checkpoint> {
    decode_checkpoint(path, &read_file(path)?)
}
