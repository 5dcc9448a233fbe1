//! Model checkpoints: a little-endian binary format that round-trips
//! networks bitwise.
//!
//! Layout:
//!
//! ```text
//! magic           4 bytes        "UNLF"
//! version         u32            currently 1
//! input shape     3 x u32        channels, height, width
//! num_classes     u32
//! layer_count     u32
//! layers          layer_count x  u32 record length, then the record:
//!                                u8 tag + tag-specific u32 fields
//! parameters      f64 arrays     weight then bias per parameterized layer,
//!                                in layer order, row-major
//! ```
//!
//! Tags: 0 Conv2d(in, out, kernel, stride, padding), 1 ReLU,
//! 2 MaxPool2d(size), 3 Flatten, 4 Linear(in, out).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{LayerSpec, Network};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"UNLF";
pub const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn layer_record(layer: &LayerSpec) -> Vec<u8> {
    let mut rec = Vec::new();
    match layer {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            rec.push(0u8);
            for v in [in_channels, out_channels, kernel, stride, padding] {
                rec.extend_from_slice(&(*v as u32).to_le_bytes());
            }
        }
        LayerSpec::Relu => rec.push(1u8),
        LayerSpec::MaxPool2d { size } => {
            rec.push(2u8);
            rec.extend_from_slice(&(*size as u32).to_le_bytes());
        }
        LayerSpec::Flatten => rec.push(3u8),
        LayerSpec::Linear {
            in_features,
            out_features,
        } => {
            rec.push(4u8);
            rec.extend_from_slice(&(*in_features as u32).to_le_bytes());
            rec.extend_from_slice(&(*out_features as u32).to_le_bytes());
        }
    }
    rec
}

/// Serialize an initialized network to `path`.
pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    if !net.is_initialized() {
        return Err(Error::Uninitialized);
    }
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    let (c, h, wd) = net.input_shape();
    for v in [c, h, wd, net.num_classes(), net.layers().len()] {
        write_u32(&mut w, v as u32)?;
    }
    for layer in net.layers() {
        let rec = layer_record(layer);
        write_u32(&mut w, rec.len() as u32)?;
        w.write_all(&rec)?;
    }
    for slot in 0..net.num_param_slots() {
        let t = net.param_slot(slot).expect("initialized network");
        for v in t.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct CheckpointReader<'a> {
    reader: BufReader<File>,
    path: &'a str,
}

impl<'a> CheckpointReader<'a> {
    fn read_exact(&mut self, buf: &mut [u8], field: &str) -> Result<()> {
        self.reader.read_exact(buf).map_err(|e| {
            Error::format(self.path, field, format!("truncated or unreadable ({e})"))
        })
    }

    fn read_u32(&mut self, field: &str) -> Result<u32> {
        let mut buf = [0u8; 4];
        self.read_exact(&mut buf, field)?;
        Ok(u32::from_le_bytes(buf))
    }

    fn read_f64s(&mut self, count: usize, field: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; count * 8];
        self.read_exact(&mut bytes, field)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn parse_layer(rec: &[u8], path: &str, idx: usize) -> Result<LayerSpec> {
    let field = format!("layer {idx} record");
    let bad = |msg: &str| Error::format(path, field.clone(), msg.to_string());
    let tag = *rec.first().ok_or_else(|| bad("empty record"))?;
    let fields: Vec<u32> = rec[1..]
        .chunks(4)
        .map(|c| {
            c.try_into()
                .map(u32::from_le_bytes)
                .map_err(|_| bad("misaligned field bytes"))
        })
        .collect::<Result<_>>()?;
    let expect_len = |n: usize| {
        if fields.len() == n {
            Ok(())
        } else {
            Err(bad(&format!("expected {n} fields, got {}", fields.len())))
        }
    };
    match tag {
        0 => {
            expect_len(5)?;
            Ok(LayerSpec::Conv2d {
                in_channels: fields[0] as usize,
                out_channels: fields[1] as usize,
                kernel: fields[2] as usize,
                stride: fields[3] as usize,
                padding: fields[4] as usize,
            })
        }
        1 => {
            expect_len(0)?;
            Ok(LayerSpec::Relu)
        }
        2 => {
            expect_len(1)?;
            Ok(LayerSpec::MaxPool2d {
                size: fields[0] as usize,
            })
        }
        3 => {
            expect_len(0)?;
            Ok(LayerSpec::Flatten)
        }
        4 => {
            expect_len(2)?;
            Ok(LayerSpec::Linear {
                in_features: fields[0] as usize,
                out_features: fields[1] as usize,
            })
        }
        other => Err(bad(&format!("unknown layer tag {other}"))),
    }
}

/// Load a checkpoint, reconstructing the architecture from the header.
/// Any malformed input fails without returning a partial network.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path_str = path.as_ref().display().to_string();
    let mut r = CheckpointReader {
        reader: BufReader::new(File::open(path.as_ref())?),
        path: &path_str,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format(
            &path_str,
            "magic",
            format!("expected {MAGIC:?}, got {magic:?}"),
        ));
    }
    let version = r.read_u32("version")?;
    if version != VERSION {
        return Err(Error::format(
            &path_str,
            "version",
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let c = r.read_u32("input channels")? as usize;
    let h = r.read_u32("input height")? as usize;
    let w = r.read_u32("input width")? as usize;
    let num_classes = r.read_u32("num_classes")? as usize;
    let layer_count = r.read_u32("layer count")? as usize;
    if layer_count == 0 || layer_count > 1024 {
        return Err(Error::format(
            &path_str,
            "layer count",
            format!("implausible value {layer_count}"),
        ));
    }

    let mut layers = Vec::with_capacity(layer_count);
    for idx in 0..layer_count {
        let len = r.read_u32(&format!("layer {idx} record length"))? as usize;
        if len == 0 || len > 64 {
            return Err(Error::format(
                &path_str,
                format!("layer {idx} record length"),
                format!("implausible value {len}"),
            ));
        }
        let mut rec = vec![0u8; len];
        r.read_exact(&mut rec, &format!("layer {idx} record"))?;
        layers.push(parse_layer(&rec, &path_str, idx)?);
    }

    let mut net = Network::from_layers(layers, (c, h, w), num_classes)
        .map_err(|e| Error::format(&path_str, "architecture", e.to_string()))?;
    // Allocating via init gives correctly shaped slots; values are replaced below.
    net.init_random(crate::seed::RngSeed(0));

    for slot in 0..net.num_param_slots() {
        let name = net.param_slot_name(slot);
        let shape = net.param_slot(slot).unwrap().shape().to_vec();
        let count: usize = shape.iter().product();
        let values = r.read_f64s(count, &format!("{name} data"))?;
        *net.param_slot_mut(slot).unwrap() = Tensor::new(shape, values)?;
    }

    let mut trailing = [0u8; 1];
    match r.reader.read(&mut trailing) {
        Ok(0) => Ok(net),
        Ok(_) => Err(Error::format(&path_str, "trailer", "trailing data after parameters")),
        Err(e) => Err(e.into()),
    }
}

/// Load a checkpoint and verify it matches the architecture of `expected`.
pub fn load_checkpoint_matching(path: impl AsRef<Path>, expected: &Network) -> Result<Network> {
    let net = load_checkpoint(path.as_ref())?;
    if !net.same_architecture(expected) {
        return Err(Error::format(
            path.as_ref().display().to_string(),
            "architecture",
            format!(
                "checkpoint layers {:?} do not match expected layers {:?}",
                net.layers(),
                expected.layers()
            ),
        ));
    }
    Ok(net)
}
