//! Binary little-endian splat PLY, the interchange layout used by common
//! splat viewers and editors.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::splat::{SplatCloud, SplatParams, MAX_SH_DEGREE, SH_COEFFS};

/// Vertex properties in file order, all `float`.
pub const PLY_PROPERTIES: [&str; 62] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "f_rest_0", "f_rest_1",
    "f_rest_2", "f_rest_3", "f_rest_4", "f_rest_5", "f_rest_6", "f_rest_7", "f_rest_8",
    "f_rest_9", "f_rest_10", "f_rest_11", "f_rest_12", "f_rest_13", "f_rest_14", "f_rest_15",
    "f_rest_16", "f_rest_17", "f_rest_18", "f_rest_19", "f_rest_20", "f_rest_21", "f_rest_22",
    "f_rest_23", "f_rest_24", "f_rest_25", "f_rest_26", "f_rest_27", "f_rest_28", "f_rest_29",
    "f_rest_30", "f_rest_31", "f_rest_32", "f_rest_33", "f_rest_34", "f_rest_35", "f_rest_36",
    "f_rest_37", "f_rest_38", "f_rest_39", "f_rest_40", "f_rest_41", "f_rest_42", "f_rest_43",
    "f_rest_44", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

const DEGREE_COMMENT: &str = "active_sh_degree";

pub fn encode_splat_ply(cloud: &SplatCloud) -> Vec<u8> {
    let n = cloud.len();
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    let _ = writeln!(header, "comment {} {}", DEGREE_COMMENT, cloud.active_sh_degree);
    let _ = writeln!(header, "element vertex {}", n);
    for name in PLY_PROPERTIES {
        let _ = writeln!(header, "property float {}", name);
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    out.reserve(n * PLY_PROPERTIES.len() * 4);
    let p = &cloud.params;
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for i in 0..n {
        p.positions[i].iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        p.sh_dc[i].iter().for_each(|&v| put(v));
        p.sh_rest[i].iter().for_each(|&v| put(v));
        put(p.opacity_logits[i]);
        p.log_scales[i].iter().for_each(|&v| put(v));
        p.rotations[i].iter().for_each(|&v| put(v));
    }
    out
}

pub fn write_splat_ply(cloud: &SplatCloud, path: &Path) -> Result<()> {
    write_atomic(path, &encode_splat_ply(cloud))
}

#[derive(Debug, Clone, Copy)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

struct Property {
    name: String,
    ty: ScalarType,
    offset: usize,
}

fn ply_err(msg: impl Into<String>) -> Error {
    Error::Ply(msg.into())
}

/// Decodes a splat PLY; returns the cloud plus warnings about skipped
/// properties.
pub fn decode_splat_ply(bytes: &[u8]) -> Result<(SplatCloud, Vec<String>)> {
    // Header is ASCII up to and including "end_header\n".
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| ply_err("missing end_header"))?;
    let mut body_start = end + END.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) != Some(&b'\n') {
        return Err(ply_err("end_header must be followed by a newline"));
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| ply_err("header is not ASCII"))?;

    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(ply_err("wrong magic: expected 'ply'"));
    }

    let mut format_ok = false;
    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<Property> = Vec::new();
    let mut stride = 0;
    let mut degree_hint: Option<usize> = None;
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["format", fmt, _version] => {
                if *fmt == "ascii" {
                    return Err(ply_err("ASCII PLY is not supported"));
                }
                if *fmt != "binary_little_endian" {
                    return Err(ply_err(format!("unsupported format {}", fmt)));
                }
                format_ok = true;
            }
            ["comment", key, value] if *key == DEGREE_COMMENT => {
                degree_hint = value.parse().ok().filter(|d| *d <= MAX_SH_DEGREE);
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| ply_err(format!("bad element count {:?}", count)))?;
                if *name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(ply_err("duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex = true;
                } else {
                    if vertex_count.is_none() {
                        return Err(ply_err(format!("element {} precedes vertex", name)));
                    }
                    if count != 0 {
                        return Err(ply_err(format!("unsupported non-empty element {}", name)));
                    }
                    in_vertex = false;
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(ply_err("list properties are not supported on vertices"));
                }
            }
            ["property", ty, name] => {
                if in_vertex {
                    let ty = ScalarType::parse(ty)
                        .ok_or_else(|| ply_err(format!("unknown property type {}", ty)))?;
                    props.push(Property {
                        name: name.to_string(),
                        ty,
                        offset: stride,
                    });
                    stride += ty.size();
                }
            }
            _ => return Err(ply_err(format!("unrecognized header line {:?}", line))),
        }
    }
    if !format_ok {
        return Err(ply_err("missing format line"));
    }
    let n = vertex_count.ok_or_else(|| ply_err("missing vertex element"))?;

    let find = |name: &str| -> Option<&Property> { props.iter().find(|p| p.name == name) };
    let require = |name: &str| -> Result<&Property> {
        let p = find(name).ok_or_else(|| Error::MissingProperty(name.to_string()))?;
        match p.ty {
            ScalarType::F32 => Ok(p),
            _ => Err(ply_err(format!("property {} must be float", name))),
        }
    };
    let pos = [require("x")?, require("y")?, require("z")?];
    let dc = [require("f_dc_0")?, require("f_dc_1")?, require("f_dc_2")?];
    let opacity = require("opacity")?;
    let scale = [require("scale_0")?, require("scale_1")?, require("scale_2")?];
    let rot = [require("rot_0")?, require("rot_1")?, require("rot_2")?, require("rot_3")?];

    let rest_count = props.iter().filter(|p| p.name.starts_with("f_rest_")).count();
    let per_channel = rest_count / 3;
    let file_degree = match rest_count {
        0 => 0,
        9 => 1,
        24 => 2,
        45 => 3,
        _ => return Err(ply_err(format!("unsupported f_rest count {}", rest_count))),
    };
    let mut rest = Vec::with_capacity(rest_count);
    for k in 0..rest_count {
        rest.push(require(&format!("f_rest_{}", k))?);
    }

    let warnings: Vec<String> = props
        .iter()
        .filter(|p| !PLY_PROPERTIES.contains(&p.name.as_str()))
        .map(|p| format!("skipping unknown vertex property {}", p.name))
        .collect();

    let needed = n
        .checked_mul(stride)
        .ok_or_else(|| ply_err("vertex payload size overflows"))?;
    let body = &bytes[body_start..];
    if body.len() < needed {
        return Err(ply_err(format!(
            "truncated vertex data: need {} bytes, have {}",
            needed,
            body.len()
        )));
    }

    let mut params = SplatParams::zeros(n);
    for i in 0..n {
        let rec = &body[i * stride..(i + 1) * stride];
        let f = |p: &Property| -> f64 {
            let b = &rec[p.offset..p.offset + 4];
            f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64
        };
        params.positions[i] = pos.map(f);
        params.sh_dc[i] = dc.map(f);
        params.opacity_logits[i] = f(opacity);
        params.log_scales[i] = scale.map(f);
        params.rotations[i] = rot.map(f);
        for ch in 0..3 {
            for k in 0..per_channel {
                params.sh_rest[i][ch * (SH_COEFFS - 1) + k] = f(rest[ch * per_channel + k]);
            }
        }
    }
    let degree = degree_hint.map_or(file_degree, |d| d.min(file_degree));
    Ok((SplatCloud::new(params, degree), warnings))
}

pub fn read_splat_ply(path: &Path) -> Result<SplatCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (cloud, warnings) = decode_splat_ply(&bytes)?;
    for w in warnings {
        log::warn!("{}: {}", path.display(), w);
    }
    Ok(cloud)
}
