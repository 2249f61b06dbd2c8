//! Binary little-endian PLY for point clouds.
//!
//! Written files carry exactly `x y z` as `float` and `red green blue` as
//! `uchar` (colour · 255, rounded). The reader also accepts extra vertex
//! properties and any property order, as long as those six are present.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::types::PointCloud;

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "PLY",
        reason: reason.into(),
    }
}

pub fn color_to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ply<W: Write>(cloud: &PointCloud, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )?;
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        for v in p.iter() {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
        out.write_all(&[color_to_u8(c[0]), color_to_u8(c[1]), color_to_u8(c[2])])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_ply_file(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    write_ply(cloud, std::fs::File::create(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

/// Reads a binary little-endian PLY. Every point gets source index 0, since
/// the format does not carry provenance.
pub fn read_ply<R: Read>(input: R) -> Result<PointCloud> {
    let mut input = BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |input: &mut BufReader<R>| -> Result<String> {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(format_err("unexpected end of header"));
        }
        Ok(line.trim_end().to_string())
    };

    if next_line(&mut input)? != "ply" {
        return Err(format_err("missing magic"));
    }
    let mut vertex_count = None;
    let mut props: Vec<(String, ScalarType)> = Vec::new();
    let mut in_vertex = false;
    loop {
        let l = next_line(&mut input)?;
        let tokens: Vec<&str> = l.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(format_err(format!("unsupported format {fmt}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    vertex_count = Some(
                        count
                            .parse::<usize>()
                            .map_err(|_| format_err(format!("bad vertex count {count}")))?,
                    );
                } else if vertex_count.is_none() {
                    return Err(format_err("vertex element must come first"));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(format_err("list properties on vertices are not supported"));
            }
            ["property", ty, name] if in_vertex => {
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| format_err(format!("unknown property type {ty}")))?;
                props.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            _ => return Err(format_err(format!("unexpected header line `{l}`"))),
        }
    }
    let count = vertex_count.ok_or_else(|| format_err("no vertex element"))?;
    let find = |name: &str| {
        props
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| format_err(format!("missing property {name}")))
    };
    let wanted = [
        find("x")?,
        find("y")?,
        find("z")?,
        find("red")?,
        find("green")?,
        find("blue")?,
    ];
    let mut offsets = Vec::with_capacity(props.len());
    let mut stride = 0;
    for (_, ty) in &props {
        offsets.push(stride);
        stride += ty.size();
    }

    let mut cloud = PointCloud::with_capacity(count);
    let mut record = vec![0u8; stride];
    for i in 0..count {
        input
            .read_exact(&mut record)
            .map_err(|_| format_err(format!("truncated at vertex {i} of {count}")))?;
        let field = |k: usize| {
            let idx = wanted[k];
            props[idx].1.read(&record[offsets[idx]..])
        };
        let pos = Vector3::new(field(0), field(1), field(2));
        if pos.iter().any(|v| !v.is_finite()) {
            return Err(format_err(format!("non-finite position at vertex {i}")));
        }
        let color = [field(3) / 255.0, field(4) / 255.0, field(5) / 255.0];
        cloud.push(pos, color, 0);
    }
    Ok(cloud)
}

pub fn read_ply_file(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    read_ply(std::fs::File::open(path)?)
}
