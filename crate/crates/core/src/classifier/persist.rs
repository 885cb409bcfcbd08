//! Versioned binary and lossless text encodings of a [`ConstraintNet`].
//!
//! Binary layout (little endian): magic `PUCLNET\0`, `u32` version, `u32`
//! layer count `L`, `L + 1` `u32` widths, `f64` negative slope, input shift
//! and scale (`f64` each, input width long), then per layer the row-major
//! weight block followed by the biases.

use std::io::{Read, Write};

use super::net::{ConstraintNet, Layer};
use crate::error::{PuclError, Result};

const MAGIC: &[u8; 8] = b"PUCLNET\0";
const VERSION: u32 = 1;
const TEXT_HEADER: &str = "pucl-net v1";

pub fn write_binary<W: Write>(net: &ConstraintNet, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for width in net.widths() {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    w.write_all(&net.negative_slope().to_le_bytes())?;
    for v in net.input_shift().iter().chain(net.input_scale()) {
        w.write_all(&v.to_le_bytes())?;
    }
    for layer in net.layers() {
        for v in layer.weights.iter().chain(&layer.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<ConstraintNet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(PuclError::Format("not a constraint-net file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(PuclError::Format(format!(
            "unsupported net version {version}"
        )));
    }
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(PuclError::Format(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let widths = (0..=n_layers)
        .map(|_| read_u32(&mut r).map(|w| w as usize))
        .collect::<Result<Vec<_>>>()?;
    let slope = read_f64s(&mut r, 1)?[0];
    let shift = read_f64s(&mut r, widths[0])?;
    let scale = read_f64s(&mut r, widths[0])?;
    let layers = widths
        .windows(2)
        .map(|w| {
            Ok(Layer {
                inputs: w[0],
                outputs: w[1],
                weights: read_f64s(&mut r, w[0] * w[1])?,
                biases: read_f64s(&mut r, w[1])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut net = ConstraintNet::from_layers(layers, slope)?;
    net.set_input_normalization(shift, scale)?;
    Ok(net)
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Text form; `{:?}` formatting of `f64` is shortest round-trip, so parsing
/// it back is bit-exact.
pub fn to_text(net: &ConstraintNet) -> String {
    let mut s = String::new();
    s.push_str(TEXT_HEADER);
    s.push('\n');
    let widths: Vec<String> = net.widths().iter().map(|w| w.to_string()).collect();
    s.push_str(&format!("widths {}\n", widths.join(" ")));
    s.push_str(&format!("negative_slope {:?}\n", net.negative_slope()));
    s.push_str(&format!("input_shift {}\n", join(net.input_shift())));
    s.push_str(&format!("input_scale {}\n", join(net.input_scale())));
    for (i, layer) in net.layers().iter().enumerate() {
        s.push_str(&format!("layer {i} weights\n"));
        for row in layer.weights.chunks_exact(layer.inputs) {
            s.push_str(&join(row));
            s.push('\n');
        }
        s.push_str(&format!("layer {i} biases\n"));
        s.push_str(&join(&layer.biases));
        s.push('\n');
    }
    s
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| PuclError::Format(format!("bad number `{t}`: {e}")))
        })
        .collect()
}

fn keyed<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| PuclError::Format(format!("missing `{key}` line")))?;
    line.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| PuclError::Format(format!("expected `{key}`, found `{line}`")))
}

pub fn from_text(text: &str) -> Result<ConstraintNet> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TEXT_HEADER) {
        return Err(PuclError::Format("missing net text header".into()));
    }
    let widths = keyed(lines.next(), "widths")?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| PuclError::Format(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 {
        return Err(PuclError::Format("need at least two widths".into()));
    }
    let slope = parse_floats(keyed(lines.next(), "negative_slope")?)?
        .first()
        .copied()
        .ok_or_else(|| PuclError::Format("missing slope".into()))?;
    let shift = parse_floats(keyed(lines.next(), "input_shift")?)?;
    let scale = parse_floats(keyed(lines.next(), "input_scale")?)?;
    let mut layers = Vec::new();
    for (i, w) in widths.windows(2).enumerate() {
        keyed(lines.next(), &format!("layer {i} weights"))?;
        let mut weights = Vec::with_capacity(w[0] * w[1]);
        for _ in 0..w[1] {
            let row = parse_floats(
                lines
                    .next()
                    .ok_or_else(|| PuclError::Format("truncated weights".into()))?,
            )?;
            if row.len() != w[0] {
                return Err(PuclError::Format(format!(
                    "layer {i}: row of length {}",
                    row.len()
                )));
            }
            weights.extend(row);
        }
        keyed(lines.next(), &format!("layer {i} biases"))?;
        let biases = parse_floats(
            lines
                .next()
                .ok_or_else(|| PuclError::Format("truncated biases".into()))?,
        )?;
        layers.push(Layer {
            inputs: w[0],
            outputs: w[1],
            weights,
            biases,
        });
    }
    let mut net = ConstraintNet::from_layers(layers, slope)?;
    net.set_input_normalization(shift, scale)?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::net::NetSpec;
    use crate::rng::{Seeds, Stream};

    fn net() -> ConstraintNet {
        let mut rng = Seeds::new(42).stream(Stream::Init);
        let mut n = ConstraintNet::new(
            3,
            &NetSpec {
                hidden: vec![5, 4],
                negative_slope: 0.01,
            },
            &mut rng,
        )
        .unwrap();
        n.set_input_normalization(vec![0.1, -0.2, 1.0 / 3.0], vec![1.0, 2.5, 0.7])
            .unwrap();
        n
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let n = net();
        let mut buf = Vec::new();
        write_binary(&n, &mut buf).unwrap();
        assert_eq!(read_binary(buf.as_slice()).unwrap(), n);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let n = net();
        let text = to_text(&n);
        assert_eq!(from_text(&text).unwrap(), n);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(read_binary(&b"NOTANET!\x01\0\0\0"[..]).is_err());
        assert!(from_text("hello").is_err());
    }
}
