//! Binary classifier checkpoints: a one-line JSON header describing the
//! network, followed by the raw parameter arrays as little-endian f64.
//! Round-trips are bit-exact.

use super::mlp::MlpParams;
use crate::FORMAT_VERSION;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Read, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Lifted signature the classifier scores, e.g. "P2_0(sat, target)".
    pub signature: String,
    pub seed: u64,
    pub delta: Vec<i8>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: String,
    record: String,
    signature: String,
    seed: u64,
    delta: Vec<i8>,
    layer_sizes: Vec<usize>,
    activation: String,
    input_norm: bool,
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_checkpoint(
    w: &mut impl Write,
    params: &MlpParams,
    meta: &CheckpointMeta,
) -> io::Result<()> {
    let header = Header {
        version: FORMAT_VERSION.to_string(),
        record: "classifier".to_string(),
        signature: meta.signature.clone(),
        seed: meta.seed,
        delta: meta.delta.clone(),
        layer_sizes: params.layer_sizes.clone(),
        activation: params.activation.clone(),
        input_norm: params.input_norm.is_some(),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n")?;
    for layer in 0..params.weights.len() {
        write_f64s(w, &params.weights[layer])?;
        write_f64s(w, &params.biases[layer])?;
    }
    if let Some((mean, std)) = &params.input_norm {
        write_f64s(w, mean)?;
        write_f64s(w, std)?;
    }
    Ok(())
}

pub fn load_checkpoint(r: &mut impl BufRead) -> io::Result<(MlpParams, CheckpointMeta)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if header.version != FORMAT_VERSION || header.record != "classifier" {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unsupported checkpoint header: {}", line.trim_end()),
        ));
    }
    if header.layer_sizes.len() < 2 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "checkpoint has fewer than two layers",
        ));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in header.layer_sizes.windows(2) {
        let (n_in, n_out) = (pair[0], pair[1]);
        weights.push(read_f64s(r, n_out * n_in)?);
        biases.push(read_f64s(r, n_out)?);
    }
    let input_norm = if header.input_norm {
        let dim = header.layer_sizes[0];
        Some((read_f64s(r, dim)?, read_f64s(r, dim)?))
    } else {
        None
    };
    let params = MlpParams {
        layer_sizes: header.layer_sizes,
        weights,
        biases,
        activation: header.activation,
        input_norm,
    };
    let meta = CheckpointMeta {
        signature: header.signature,
        seed: header.seed,
        delta: header.delta,
    };
    Ok((params, meta))
}
