//! Point-cloud files: plain XYZ text and PLY (ASCII or binary little endian).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
    PlyBinary,
}

impl CloudFormat {
    /// `.xyz` is XYZ text, `.ply` is binary PLY; anything else is rejected.
    pub fn for_writing(path: &Path) -> Result<Self> {
        match extension(path).as_deref() {
            Some("xyz") => Ok(CloudFormat::Xyz),
            Some("ply") => Ok(CloudFormat::PlyBinary),
            _ => Err(Error::invalid(format!(
                "cannot infer point-cloud format of {}",
                path.display()
            ))),
        }
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

fn parse_error(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

/// Formats `v` with 9 significant digits, trailing zeros trimmed.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-5..=15).contains(&magnitude) {
        return format!("{v:.8e}");
    }
    let decimals = (8 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::Xyz => parse_xyz(path, &bytes),
        CloudFormat::PlyAscii | CloudFormat::PlyBinary => parse_ply(path, &bytes),
    }
}

/// Reads `.xyz` as XYZ text and `.ply` in whichever PLY encoding its header
/// declares.
pub fn read_cloud_auto(path: &Path) -> Result<PointCloud> {
    let format = match extension(path).as_deref() {
        Some("xyz") | Some("txt") => CloudFormat::Xyz,
        Some("ply") => CloudFormat::PlyBinary,
        _ => {
            return Err(Error::invalid(format!(
                "cannot infer point-cloud format of {}",
                path.display()
            )))
        }
    };
    read_cloud(path, format)
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = encode_cloud(cloud, format);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_cloud(cloud: &PointCloud, format: CloudFormat) -> Vec<u8> {
    let mut out = Vec::new();
    match format {
        CloudFormat::Xyz => {
            for p in cloud {
                writeln!(out, "{} {} {}", format_sig9(p[0]), format_sig9(p[1]), format_sig9(p[2])).unwrap();
            }
        }
        CloudFormat::PlyAscii | CloudFormat::PlyBinary => {
            let kind = if format == CloudFormat::PlyAscii {
                "ascii"
            } else {
                "binary_little_endian"
            };
            write!(
                out,
                "ply\nformat {kind} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
                cloud.len()
            )
            .unwrap();
            for p in cloud {
                if format == CloudFormat::PlyAscii {
                    writeln!(out, "{} {} {}", format_sig9(p[0]), format_sig9(p[1]), format_sig9(p[2])).unwrap();
                } else {
                    for c in p {
                        out.extend_from_slice(&(*c as f32).to_le_bytes());
                    }
                }
            }
        }
    }
    out
}

pub fn parse_xyz(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_error(path, format!("byte {}", e.valid_up_to()), "invalid UTF-8"))?;
    let mut points = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = format!("line {}", n + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_error(
                path,
                loc,
                format!("expected 3 values, found {}", fields.len()),
            ));
        }
        let mut p = [0.0; 3];
        for (slot, f) in p.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| parse_error(path, loc.clone(), format!("invalid number {f:?}")))?;
        }
        if !p.iter().all(|c| c.is_finite()) {
            return Err(parse_error(path, loc, "non-finite coordinate"));
        }
        points.push(p);
    }
    PointCloud::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug)]
struct PlyHeader {
    encoding: Encoding,
    vertex_count: usize,
    vertex_props: Vec<(String, Scalar)>,
    /// Elements declared before the vertex element; their data must be skipped.
    leading_elements: bool,
    body_offset: usize,
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<PlyHeader> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut vertex: Option<usize> = None;
    let mut vertex_props = Vec::new();
    let mut current_is_vertex = false;
    let mut leading_elements = false;
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            let missing = if encoding.is_none() {
                "format"
            } else if vertex.is_none() {
                "element vertex"
            } else {
                "end_header"
            };
            return Err(parse_error(
                path,
                format!("byte {}", bytes.len()),
                format!("truncated header: missing `{missing}`"),
            ));
        };
        line_no += 1;
        let loc = format!("header line {line_no}");
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| parse_error(path, loc.clone(), "invalid UTF-8 in header"))?
            .trim_end_matches('\r')
            .trim();
        offset += nl + 1;
        if line_no == 1 {
            if line != "ply" {
                return Err(parse_error(path, loc, "missing `ply` magic"));
            }
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                encoding = Some(match words.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    other => {
                        return Err(parse_error(path, loc, format!("unsupported format {other:?}")));
                    }
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = words.next().unwrap_or_default();
                let count: usize = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_error(path, loc.clone(), "element without a valid count"))?;
                current_is_vertex = name == "vertex";
                if current_is_vertex {
                    vertex = Some(count);
                } else if vertex.is_none() && count > 0 {
                    leading_elements = true;
                }
            }
            Some("property") => {
                if current_is_vertex {
                    let ty = words.next().unwrap_or_default();
                    let scalar = Scalar::parse(ty).ok_or_else(|| {
                        parse_error(path, loc.clone(), format!("unsupported vertex property type {ty:?}"))
                    })?;
                    let name = words
                        .next()
                        .ok_or_else(|| parse_error(path, loc.clone(), "property without a name"))?;
                    vertex_props.push((name.to_string(), scalar));
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_error(path, loc, format!("unexpected header keyword {other:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_error(path, "header", "missing `format`"))?;
    let vertex_count = vertex.ok_or_else(|| parse_error(path, "header", "missing `element vertex`"))?;
    if leading_elements {
        return Err(parse_error(
            path,
            "header",
            "elements before `vertex` are not supported",
        ));
    }
    for axis in ["x", "y", "z"] {
        if !vertex_props.iter().any(|(n, _)| n == axis) {
            return Err(parse_error(
                path,
                "header",
                format!("vertex element has no `{axis}` property"),
            ));
        }
    }
    Ok(PlyHeader {
        encoding,
        vertex_count,
        vertex_props,
        leading_elements,
        body_offset: offset,
    })
}

pub fn parse_ply(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(path, bytes)?;
    debug_assert!(!header.leading_elements);
    let slot = |axis: &str| header.vertex_props.iter().position(|(n, _)| n == axis).unwrap();
    let (ix, iy, iz) = (slot("x"), slot("y"), slot("z"));
    let body = &bytes[header.body_offset..];
    let mut points: Vec<Point3> = Vec::with_capacity(header.vertex_count);
    match header.encoding {
        Encoding::BinaryLe => {
            let offsets: Vec<usize> = header
                .vertex_props
                .iter()
                .scan(0, |acc, (_, s)| {
                    let o = *acc;
                    *acc += s.size();
                    Some(o)
                })
                .collect();
            let stride: usize = header.vertex_props.iter().map(|(_, s)| s.size()).sum();
            for v in 0..header.vertex_count {
                let start = v * stride;
                if start + stride > body.len() {
                    return Err(parse_error(
                        path,
                        format!("byte {}", header.body_offset + body.len()),
                        format!("data ends at vertex {v} of {}", header.vertex_count),
                    ));
                }
                let rec = &body[start..start + stride];
                let read = |i: usize| header.vertex_props[i].1.read_le(&rec[offsets[i]..]);
                points.push([read(ix), read(iy), read(iz)]);
            }
        }
        Encoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| parse_error(path, "body", "invalid UTF-8"))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for v in 0..header.vertex_count {
                let loc = format!("vertex {v}");
                let line = lines.next().ok_or_else(|| {
                    parse_error(
                        path,
                        loc.clone(),
                        format!("data ends at vertex {v} of {}", header.vertex_count),
                    )
                })?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() < header.vertex_props.len() {
                    return Err(parse_error(path, loc, "too few values"));
                }
                let read = |i: usize| {
                    fields[i]
                        .parse::<f64>()
                        .map_err(|_| parse_error(path, loc.clone(), format!("invalid number {:?}", fields[i])))
                };
                points.push([read(ix)?, read(iy)?, read(iz)?]);
            }
        }
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(parse_error(path, format!("vertex {i}"), "non-finite coordinate"));
    }
    PointCloud::new(points)
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub case_id: String,
    /// Paths relative to the dataset directory.
    pub scene_path: PathBuf,
    pub scan_path: PathBuf,
    pub seed: u64,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Tab-separated rows `case-id, scene-path, scan-path, seed`, one per case.
pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.case_id,
            e.scene_path.display(),
            e.scan_path.display(),
            e.seed
        ));
    }
    s
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("line {}", n + 1);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(parse_error(
                path,
                loc,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let seed = cols[3]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, loc, format!("invalid seed {:?}", cols[3])))?;
        out.push(ManifestEntry {
            case_id: cols[0].to_string(),
            scene_path: PathBuf::from(cols[1]),
            scan_path: PathBuf::from(cols[2]),
            seed,
        });
    }
    Ok(out)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_manifest(&path, &text)
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, format_manifest(entries)).map_err(|e| Error::io(&path, e))
}
