//! Point-cloud files (PLY, XYZ text) and replay directories of RGB-D frames.
//!
//! PLY vertices are written as `x y z [nx ny nz] [red green blue]` with
//! double positions and normals and uchar colors. Colors are stored in
//! 8 bits, so they round-trip exactly only when they are multiples of 1/255.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{ColorImage, DepthImage, Frame, FrameSource, Intrinsics};
use crate::cloud::{PointCloud, Rgb};
use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudFormat {
    PlyAscii,
    PlyBinary,
    Xyz,
}

impl CloudFormat {
    /// `.xyz` selects XYZ text; anything else is binary PLY.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("xyz") => CloudFormat::Xyz,
            _ => CloudFormat::PlyBinary,
        }
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Serializes a cloud into the given format.
pub fn encode_cloud(cloud: &PointCloud, format: CloudFormat) -> Result<Vec<u8>> {
    cloud.validate()?;
    let mut out = Vec::new();
    match format {
        CloudFormat::Xyz => {
            let mut cols = vec!["x", "y", "z"];
            if cloud.normals.is_some() {
                cols.extend(["nx", "ny", "nz"]);
            }
            if cloud.colors.is_some() {
                cols.extend(["red", "green", "blue"]);
            }
            out.extend(format!("# {}\n", cols.join(" ")).bytes());
            for i in 0..cloud.len() {
                let mut line = vec_fields(cloud.points[i]);
                if let Some(n) = &cloud.normals {
                    line.extend(vec_fields(n[i]));
                }
                if let Some(c) = &cloud.colors {
                    line.extend(c[i].iter().map(|v| to_u8(*v).to_string()));
                }
                out.extend(line.join(" ").bytes());
                out.push(b'\n');
            }
        }
        CloudFormat::PlyAscii | CloudFormat::PlyBinary => {
            let binary = format == CloudFormat::PlyBinary;
            let mut header = format!(
                "ply\nformat {} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
                if binary { "binary_little_endian" } else { "ascii" },
                cloud.len()
            );
            if cloud.normals.is_some() {
                header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
            }
            if cloud.colors.is_some() {
                header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
            }
            header.push_str("end_header\n");
            out.extend(header.bytes());
            for i in 0..cloud.len() {
                let mut reals = cloud.points[i].to_array().to_vec();
                if let Some(n) = &cloud.normals {
                    reals.extend(n[i].to_array());
                }
                let bytes: Option<[u8; 3]> = cloud.colors.as_ref().map(|c| c[i].map(to_u8));
                if binary {
                    for r in reals {
                        out.extend(r.to_le_bytes());
                    }
                    if let Some(b) = bytes {
                        out.extend(b);
                    }
                } else {
                    let mut line: Vec<String> = reals.iter().map(|r| format!("{r:?}")).collect();
                    if let Some(b) = bytes {
                        line.extend(b.iter().map(|v| v.to_string()));
                    }
                    out.extend(line.join(" ").bytes());
                    out.push(b'\n');
                }
            }
        }
    }
    Ok(out)
}

fn vec_fields(v: Vec3) -> Vec<String> {
    // Debug formatting of f64 is shortest-round-trip
    v.to_array().iter().map(|r| format!("{r:?}")).collect()
}

/// Writes a cloud; the parent directory must exist.
pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = encode_cloud(cloud, format)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Reads a PLY (ASCII or binary little-endian) or XYZ file, detected from
/// its first bytes.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cloud(&bytes, path)
}

/// Parses cloud file contents; `path` is used only in error messages.
pub fn decode_cloud(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    if bytes.starts_with(b"ply") {
        decode_ply(bytes, path)
    } else {
        decode_xyz(bytes, path)
    }
}

fn decode_xyz(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(path, format!("not UTF-8: {e}")))?;
    let mut columns: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if columns.is_none() && rows.is_empty() {
                columns = Some(rest.split_whitespace().map(str::to_owned).collect());
            }
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))?;
        rows.push(vals);
        let width = rows[0].len();
        if rows.last().map(Vec::len) != Some(width) {
            return Err(parse_err(
                path,
                format!("line {}: expected {width} values", lineno + 1),
            ));
        }
    }
    let width = rows.first().map_or(3, Vec::len);
    let columns = match columns {
        Some(c) if c.len() == width => c,
        _ => match width {
            3 => vec!["x", "y", "z"],
            6 => vec!["x", "y", "z", "nx", "ny", "nz"],
            w => return Err(parse_err(path, format!("cannot infer the meaning of {w} columns"))),
        }
        .into_iter()
        .map(str::to_owned)
        .collect(),
    };
    let layout = VertexLayout::from_names(columns.iter().map(String::as_str), path)?;
    let mut acc = CloudBuilder::new(&layout, rows.len());
    for row in &rows {
        acc.push(&layout, row);
    }
    acc.finish()
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
    fn parse(name: &str) -> Option<Scalar> {
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
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Where each recognized vertex attribute sits in a row of values.
#[derive(Debug, Default)]
struct VertexLayout {
    position: [usize; 3],
    normal: Option<[usize; 3]>,
    color: Option<[usize; 3]>,
    /// Colors stored as integers are scaled from 0..=255.
    color_is_byte: bool,
}

impl VertexLayout {
    fn from_names<'a>(names: impl Iterator<Item = &'a str>, path: &Path) -> Result<Self> {
        Self::from_typed(names.map(|n| (n, Scalar::U8)), path)
    }

    fn from_typed<'a>(names: impl Iterator<Item = (&'a str, Scalar)>, path: &Path) -> Result<Self> {
        let mut slot: [[Option<usize>; 3]; 3] = [[None; 3]; 3];
        let mut color_ty = Scalar::U8;
        for (i, (name, ty)) in names.enumerate() {
            let (group, k) = match name {
                "x" => (0, 0),
                "y" => (0, 1),
                "z" => (0, 2),
                "nx" => (1, 0),
                "ny" => (1, 1),
                "nz" => (1, 2),
                "red" | "r" => (2, 0),
                "green" | "g" => (2, 1),
                "blue" | "b" => (2, 2),
                other => {
                    log::warn!("{}: skipping unknown vertex property `{other}`", path.display());
                    continue;
                }
            };
            if group == 2 {
                color_ty = ty;
            }
            slot[group][k] = Some(i);
        }
        let full = |g: [Option<usize>; 3]| -> Option<[usize; 3]> { Some([g[0]?, g[1]?, g[2]?]) };
        let position = full(slot[0]).ok_or_else(|| parse_err(path, "vertices need x, y and z"))?;
        for (g, what) in [(1, "normal"), (2, "color")] {
            let present = slot[g].iter().filter(|s| s.is_some()).count();
            if present != 0 && present != 3 {
                log::warn!("{}: ignoring partial {what} properties", path.display());
            }
        }
        Ok(Self {
            position,
            normal: full(slot[1]),
            color: full(slot[2]),
            color_is_byte: !matches!(color_ty, Scalar::F32 | Scalar::F64),
        })
    }
}

struct CloudBuilder {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    colors: Option<Vec<Rgb>>,
}

impl CloudBuilder {
    fn new(layout: &VertexLayout, n: usize) -> Self {
        Self {
            points: Vec::with_capacity(n),
            normals: layout.normal.map(|_| Vec::with_capacity(n)),
            colors: layout.color.map(|_| Vec::with_capacity(n)),
        }
    }

    fn push(&mut self, layout: &VertexLayout, row: &[f64]) {
        let pick = |ix: [usize; 3]| Vec3::new(row[ix[0]], row[ix[1]], row[ix[2]]);
        self.points.push(pick(layout.position));
        if let (Some(ix), Some(n)) = (layout.normal, self.normals.as_mut()) {
            n.push(pick(ix));
        }
        if let (Some(ix), Some(c)) = (layout.color, self.colors.as_mut()) {
            let scale = if layout.color_is_byte { 255.0 } else { 1.0 };
            c.push(ix.map(|i| row[i] / scale));
        }
    }

    fn finish(self) -> Result<PointCloud> {
        PointCloud::new(self.points, self.colors, self.normals)
    }
}

fn decode_ply(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    // header lines are ASCII up to and including "end_header\n"
    let mut pos = 0;
    let mut lineno = 0;
    let mut binary = false;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(path, format!("line {}: header has no end_header", lineno + 1)))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| parse_err(path, format!("line {}: header is not ASCII", lineno + 1)))?
            .trim_end_matches('\r')
            .trim();
        pos += end + 1;
        lineno += 1;
        let bad = |msg: &str| parse_err(path, format!("line {lineno}: {msg}: `{line}`"));
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["ply"] if lineno == 1 => {}
            _ if lineno == 1 => return Err(bad("missing ply magic")),
            ["format", "ascii", "1.0"] => binary = false,
            ["format", "binary_little_endian", "1.0"] => binary = true,
            ["format", ..] => return Err(bad("unsupported format")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, _name] => {
                let p = Property::List {
                    count: Scalar::parse(count).ok_or_else(|| bad("unknown list count type"))?,
                    item: Scalar::parse(item).ok_or_else(|| bad("unknown list item type"))?,
                };
                elements.last_mut().ok_or_else(|| bad("property before element"))?.properties.push(p);
            }
            ["property", ty, name] => {
                let p = Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| bad("unknown property type"))?,
                };
                elements.last_mut().ok_or_else(|| bad("property before element"))?.properties.push(p);
            }
            ["end_header"] => break,
            _ => return Err(bad("unrecognized header line")),
        }
    }

    let vertex_ix = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, "no vertex element"))?;
    let vertex = &elements[vertex_ix];
    if vertex.properties.iter().any(|p| matches!(p, Property::List { .. })) {
        return Err(parse_err(path, "list properties on vertices are not supported"));
    }
    let layout = VertexLayout::from_typed(
        vertex.properties.iter().map(|p| match p {
            Property::Scalar { name, ty } => (name.as_str(), *ty),
            Property::List { .. } => unreachable!("rejected above"),
        }),
        path,
    )?;
    let mut acc = CloudBuilder::new(&layout, vertex.count);

    if binary {
        let mut row = Vec::new();
        let need = |pos: usize, n: usize| -> Result<()> {
            if pos + n > bytes.len() {
                Err(parse_err(
                    path,
                    format!("byte offset {pos}: body truncated, {} bytes remain", bytes.len() - pos),
                ))
            } else {
                Ok(())
            }
        };
        for (ei, el) in elements.iter().enumerate() {
            for _ in 0..el.count {
                row.clear();
                for p in &el.properties {
                    match p {
                        Property::Scalar { ty, .. } => {
                            need(pos, ty.size())?;
                            row.push(ty.read_le(&bytes[pos..]));
                            pos += ty.size();
                        }
                        Property::List { count, item } => {
                            need(pos, count.size())?;
                            let n = count.read_le(&bytes[pos..]) as usize;
                            pos += count.size();
                            need(pos, n * item.size())?;
                            pos += n * item.size();
                        }
                    }
                }
                if ei == vertex_ix {
                    acc.push(&layout, &row);
                }
            }
        }
        if pos != bytes.len() {
            log::warn!("{}: {} trailing bytes after body", path.display(), bytes.len() - pos);
        }
    } else {
        let text = std::str::from_utf8(&bytes[pos..])
            .map_err(|e| parse_err(path, format!("byte offset {}: body is not UTF-8", pos + e.valid_up_to())))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        for (ei, el) in elements.iter().enumerate() {
            for _ in 0..el.count {
                let (i, line) = lines.next().ok_or_else(|| {
                    parse_err(
                        path,
                        format!("byte offset {}: body truncated in element `{}`", bytes.len(), el.name),
                    )
                })?;
                let body_line = lineno + i + 1;
                if ei != vertex_ix {
                    continue;
                }
                let row = line
                    .split_whitespace()
                    .map(str::parse::<f64>)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| parse_err(path, format!("line {body_line}: {e}")))?;
                if row.len() != el.properties.len() {
                    return Err(parse_err(
                        path,
                        format!("line {body_line}: expected {} values, got {}", el.properties.len(), row.len()),
                    ));
                }
                acc.push(&layout, &row);
            }
        }
    }
    acc.finish()
}

/// Replay directory: `frames/NNNN.color.png`, `frames/NNNN.depth.png`
/// (16-bit millimeters, 0 = invalid), `frames/intrinsics.json` and
/// `frames/pose.json`. All frames share one camera pose.
pub fn frames_dir(root: &Path) -> PathBuf {
    root.join("frames")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push(b'\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        parse_err(path, format!("at `{}`: {}", e.path(), e.inner()))
    })
}

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_png(path: &Path, w: usize, h: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(data).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

/// Depth in meters to 16-bit millimeters; out-of-range depths become 0.
pub fn depth_to_mm(d: f64) -> u16 {
    let mm = (d * 1000.0).round();
    if d > 0.0 && mm >= 1.0 && mm <= u16::MAX as f64 {
        mm as u16
    } else {
        0
    }
}

/// Writes frames as a replay directory under `root`.
pub fn write_replay(root: &Path, frames: &[Frame]) -> Result<()> {
    let first = frames.first().ok_or_else(|| Error::invalid("no frames to write"))?;
    let dir = frames_dir(root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        f.validate()?;
        if f.intrinsics != first.intrinsics || f.camera_pose != first.camera_pose {
            return Err(Error::invalid(format!(
                "frame {i} has a different camera than frame 0; a replay directory holds one camera"
            )));
        }
        let (w, h) = (f.intrinsics.width, f.intrinsics.height);
        let color: Vec<u8> = f.color.data.iter().flatten().copied().collect();
        write_png(&dir.join(format!("{i:04}.color.png")), w, h, png::ColorType::Rgb, png::BitDepth::Eight, &color)?;
        // PNG stores 16-bit samples big-endian
        let depth: Vec<u8> = f.depth.data.iter().flat_map(|d| depth_to_mm(*d).to_be_bytes()).collect();
        write_png(
            &dir.join(format!("{i:04}.depth.png")),
            w,
            h,
            png::ColorType::Grayscale,
            png::BitDepth::Sixteen,
            &depth,
        )?;
    }
    write_json(&dir.join("intrinsics.json"), &first.intrinsics)?;
    write_json(&dir.join("pose.json"), &first.camera_pose)
}

fn read_png(path: &Path) -> Result<(png::OutputInfo, Vec<u8>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

/// Frames of a replay directory, yielded in index order.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    dir: PathBuf,
    intrinsics: Intrinsics,
    pose: RigidTransform,
    next: usize,
}

impl ReplaySource {
    pub fn open(root: &Path) -> Result<Self> {
        let dir = frames_dir(root);
        let intrinsics: Intrinsics = read_json(&dir.join("intrinsics.json"))?;
        intrinsics.validate()?;
        let pose: RigidTransform = read_json(&dir.join("pose.json"))?;
        Ok(Self {
            dir,
            intrinsics,
            pose,
            next: 0,
        })
    }

    /// Number of consecutive frames present from index 0.
    pub fn len(&self) -> usize {
        (0..).take_while(|i| self.dir.join(format!("{i:04}.depth.png")).exists()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn read(&self, i: usize) -> Result<Frame> {
        let k = self.intrinsics;
        let (w, h) = (k.width, k.height);
        let depth_path = self.dir.join(format!("{i:04}.depth.png"));
        let (info, raw) = read_png(&depth_path)?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
            return Err(image_err(&depth_path, "depth must be 16-bit grayscale"));
        }
        if (info.width as usize, info.height as usize) != (w, h) {
            return Err(image_err(&depth_path, format!("size {}x{} differs from intrinsics {w}x{h}", info.width, info.height)));
        }
        let mut depth = DepthImage::new(w, h);
        for (d, b) in depth.data.iter_mut().zip(raw.chunks_exact(2)) {
            *d = u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0;
        }
        let color_path = self.dir.join(format!("{i:04}.color.png"));
        let mut color = ColorImage::new(w, h);
        if color_path.exists() {
            let (info, raw) = read_png(&color_path)?;
            if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
                return Err(image_err(&color_path, "color must be 8-bit RGB"));
            }
            if (info.width as usize, info.height as usize) != (w, h) {
                return Err(image_err(&color_path, "size differs from intrinsics"));
            }
            for (c, b) in color.data.iter_mut().zip(raw.chunks_exact(3)) {
                *c = [b[0], b[1], b[2]];
            }
        }
        Ok(Frame {
            color,
            depth,
            intrinsics: k,
            camera_pose: self.pose,
        })
    }
}

impl FrameSource for ReplaySource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        if !self.dir.join(format!("{:04}.depth.png", self.next)).exists() {
            return Ok(None);
        }
        let f = self.read(self.next)?;
        self.next += 1;
        Ok(Some(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_frame, scenes, NoiseSpec};
    use proptest::prelude::*;

    fn sample_cloud(n: usize, normals: bool, colors: bool) -> PointCloud {
        let points: Vec<Vec3> = (0..n)
            .map(|i| Vec3::new(i as f64 * 0.1 + 1e-17, -(i as f64).sqrt() / 3.0, 1.0 / (i as f64 + 3.0)))
            .collect();
        let mut c = PointCloud::from_points(points);
        if normals {
            c.normals = Some((0..n).map(|i| Vec3::new(0.0, (i as f64).sin(), (i as f64).cos())).collect());
        }
        if colors {
            c.colors = Some((0..n).map(|i| [(i % 256) as f64 / 255.0, 1.0, 0.0]).collect());
        }
        c
    }

    fn round_trip(c: &PointCloud, f: CloudFormat) -> PointCloud {
        let bytes = encode_cloud(c, f).unwrap();
        decode_cloud(&bytes, Path::new("mem")).unwrap()
    }

    #[test]
    fn all_formats_round_trip_exactly() {
        for f in [CloudFormat::PlyAscii, CloudFormat::PlyBinary, CloudFormat::Xyz] {
            for (normals, colors) in [(false, false), (true, false), (false, true), (true, true)] {
                let c = sample_cloud(50, normals, colors);
                assert_eq!(round_trip(&c, f), c, "{f:?} normals={normals} colors={colors}");
            }
        }
    }

    #[test]
    fn ascii_ply_with_three_vertices() {
        let text = "ply\nformat ascii 1.0\ncomment hand written\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty float intensity\nend_header\n0 0 0 1\n1 0 0 1\n0 1 0.5 1\n";
        let c = decode_cloud(text.as_bytes(), Path::new("t.ply")).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points[2], Vec3::new(0.0, 1.0, 0.5));
        assert!(c.normals.is_none() && c.colors.is_none());
    }

    #[test]
    fn truncated_binary_body_reports_offset() {
        let c = sample_cloud(10, false, false);
        let mut bytes = encode_cloud(&c, CloudFormat::PlyBinary).unwrap();
        let header_len = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        bytes.truncate(header_len + 9 * 24);
        let msg = decode_cloud(&bytes, Path::new("t.ply")).unwrap_err().to_string();
        // the tenth vertex starts right after nine 24-byte records
        assert!(msg.contains(&format!("byte offset {}", header_len + 9 * 24)), "{msg}");
    }

    #[test]
    fn truncated_ascii_body_is_an_error() {
        let text = "ply\nformat ascii 1.0\nelement vertex 10\nproperty double x\nproperty double y\nproperty double z\nend_header\n".to_string()
            + &"0 0 0\n".repeat(9);
        let msg = decode_cloud(text.as_bytes(), Path::new("t.ply")).unwrap_err().to_string();
        assert!(msg.contains("byte offset"), "{msg}");
    }

    #[test]
    fn malformed_header_reports_line() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\nend_header\n0\n";
        let msg = decode_cloud(text.as_bytes(), Path::new("t.ply")).unwrap_err().to_string();
        assert!(msg.contains("line 4"), "{msg}");
        let text = "ply\nformat binary_big_endian 1.0\nend_header\n";
        let msg = decode_cloud(text.as_bytes(), Path::new("t.ply")).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn binary_skips_other_elements_and_lists() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for (p, c) in [([1.5f32, 2.0, 3.0], [255u8, 0, 51]), ([0.0, -1.0, 0.25], [0, 0, 0])] {
            for v in p {
                bytes.extend(v.to_le_bytes());
            }
            bytes.extend(c);
        }
        bytes.push(3);
        for i in [0i32, 1, 1] {
            bytes.extend(i.to_le_bytes());
        }
        let c = decode_cloud(&bytes, Path::new("t.ply")).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.5, 2.0, 3.0), Vec3::new(0.0, -1.0, 0.25)]);
        assert_eq!(c.colors.unwrap()[0], [1.0, 0.0, 0.2]);
    }

    #[test]
    fn xyz_without_header_infers_columns() {
        let c = decode_cloud(b"0 0 1\n1 2 3\n", Path::new("a.xyz")).unwrap();
        assert_eq!(c.len(), 2);
        let c = decode_cloud(b"0 0 1 0 0 1\n", Path::new("a.xyz")).unwrap();
        assert_eq!(c.normals.unwrap()[0], Vec3::Z);
        assert!(decode_cloud(b"0 0 1\n1 2\n", Path::new("a.xyz")).is_err());
    }

    #[test]
    fn files_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample_cloud(20, true, true);
        for (name, f) in [("a.ply", CloudFormat::PlyBinary), ("b.ply", CloudFormat::PlyAscii), ("c.xyz", CloudFormat::Xyz)] {
            let p = dir.path().join(name);
            write_cloud(&c, &p, f).unwrap();
            assert_eq!(read_cloud(&p).unwrap(), c);
        }
        let err = write_cloud(&c, &dir.path().join("missing/x.ply"), CloudFormat::PlyBinary).unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }

    #[test]
    fn replay_directory_round_trip() {
        let s = scenes::sphere();
        let frames: Vec<Frame> = (0..3)
            .map(|i| render_frame(&s.scene, &s.camera, &NoiseSpec { dropout_prob: 0.2, ..NoiseSpec::none() }, 5, i).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        write_replay(dir.path(), &frames).unwrap();
        let mut src = ReplaySource::open(dir.path()).unwrap();
        assert_eq!(src.len(), 3);
        for f in &frames {
            let g = src.next_frame().unwrap().unwrap();
            assert_eq!(g.color, f.color);
            assert_eq!(g.intrinsics, f.intrinsics);
            assert_eq!(g.camera_pose, f.camera_pose);
            for (a, b) in g.depth.data.iter().zip(&f.depth.data) {
                assert!((a - b).abs() <= 0.0005 + 1e-12, "{a} vs {b}");
            }
        }
        assert!(src.next_frame().unwrap().is_none());
    }

    proptest! {
        #[test]
        fn binary_ply_is_lossless(
            pts in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 0..40),
        ) {
            let c = PointCloud::from_points(pts.into_iter().map(Vec3::from).collect());
            prop_assert_eq!(round_trip(&c, CloudFormat::PlyBinary), c.clone());
            prop_assert_eq!(round_trip(&c, CloudFormat::PlyAscii), c);
        }
    }
}
