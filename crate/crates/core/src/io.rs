//! PLY (ASCII and binary little-endian) and XYZ point cloud files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cloud::{Point3, PointClass, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinary,
    Xyz,
}

impl CloudFormat {
    /// Format implied by the file extension. PLY output is binary unless
    /// `ascii` is set.
    pub fn from_path(path: &Path, ascii: bool) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("ply") if ascii => Ok(CloudFormat::PlyAscii),
            Some("ply") => Ok(CloudFormat::PlyBinary),
            Some("xyz") => Ok(CloudFormat::Xyz),
            _ => Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
            }),
        }
    }
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let format = CloudFormat::from_path(path, false)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let cloud = match format {
        CloudFormat::Xyz => parse_xyz(&bytes, path)?,
        _ => parse_ply(&bytes, path)?,
    };
    if let Some(i) = cloud.points.iter().position(|p| !p.is_finite()) {
        return Err(parse_err(path, format!("vertex {i}"), "non-finite coordinate"));
    }
    Ok(cloud)
}

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    if cloud.is_empty() {
        return Err(Error::EmptyWrite);
    }
    cloud.validate()?;
    let bytes = match format {
        CloudFormat::Xyz => encode_xyz(cloud),
        CloudFormat::PlyAscii => encode_ply(cloud, false),
        CloudFormat::PlyBinary => encode_ply(cloud, true),
    };
    write_atomic(path, &bytes)
}

/// Writes through a temporary file in the target directory, then renames it
/// over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".wpd-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn parse_err(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
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

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { ty: Scalar, name: String },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    /// Byte offset of the first data byte.
    body: usize,
    /// Line number of the first data line.
    body_line: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(parse_err(path, format!("line {}", line_no + 1), "header is not terminated by end_header"));
        };
        let raw = &bytes[pos..pos + len];
        pos += len + 1;
        line_no += 1;
        let loc = format!("line {line_no}");
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(path, loc.clone(), "header is not valid text"))?
            .trim_end_matches('\r')
            .trim();
        let mut tok = line.split_whitespace();
        let head = tok.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(parse_err(path, loc, "missing 'ply' magic"));
            }
            continue;
        }
        match head {
            "format" => {
                encoding = Some(match tok.next() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    Some(other) => {
                        return Err(parse_err(
                            path,
                            loc,
                            format!("unsupported encoding {other:?}, expected ascii or binary_little_endian"),
                        ))
                    }
                    None => return Err(parse_err(path, loc, "format line without encoding")),
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = tok.next().ok_or_else(|| parse_err(path, loc.clone(), "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(path, loc.clone(), "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, loc.clone(), "property before any element"))?;
                let ty = tok.next().unwrap_or("");
                let prop = if ty == "list" {
                    let c = tok.next().and_then(Scalar::parse);
                    let i = tok.next().and_then(Scalar::parse);
                    match (c, i, tok.next()) {
                        (Some(count), Some(item), Some(_)) => Property::List { count, item },
                        _ => return Err(parse_err(path, loc, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| parse_err(path, loc.clone(), format!("unknown property type {ty:?}")))?;
                    let name = tok.next().ok_or_else(|| parse_err(path, loc.clone(), "property without name"))?;
                    Property::Scalar {
                        ty,
                        name: name.to_string(),
                    }
                };
                el.props.push(prop);
            }
            "end_header" => break,
            other => return Err(parse_err(path, loc, format!("unexpected header keyword {other:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(path, "header", "missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

/// Where each wanted vertex attribute sits in a vertex record.
#[derive(Default)]
struct Slots {
    xyz: [Option<usize>; 3],
    normal: [Option<usize>; 3],
    color: [Option<usize>; 3],
    class: Option<usize>,
}

impl Slots {
    fn locate(el: &Element, path: &Path) -> Result<Slots> {
        let mut s = Slots::default();
        for (k, p) in el.props.iter().enumerate() {
            let Property::Scalar { name, .. } = p else {
                continue;
            };
            let slot = match name.as_str() {
                "x" => &mut s.xyz[0],
                "y" => &mut s.xyz[1],
                "z" => &mut s.xyz[2],
                "nx" => &mut s.normal[0],
                "ny" => &mut s.normal[1],
                "nz" => &mut s.normal[2],
                "red" => &mut s.color[0],
                "green" => &mut s.color[1],
                "blue" => &mut s.color[2],
                "class" => {
                    s.class = Some(k);
                    continue;
                }
                _ => continue,
            };
            *slot = Some(k);
        }
        if s.xyz.iter().any(Option::is_none) {
            return Err(parse_err(path, "header", "vertex element lacks x, y and z properties"));
        }
        Ok(s)
    }
}

struct VertexSink {
    slots: Slots,
    has_normals: bool,
    has_colors: bool,
    color_is_float: bool,
    cloud: PointCloud,
}

impl VertexSink {
    fn new(el: &Element, path: &Path) -> Result<Self> {
        let slots = Slots::locate(el, path)?;
        let has_normals = slots.normal.iter().all(Option::is_some);
        let has_colors = slots.color.iter().all(Option::is_some);
        let color_is_float = has_colors
            && matches!(&el.props[slots.color[0].unwrap()], Property::Scalar { ty, .. } if ty.is_float());
        let n = el.count;
        let cloud = PointCloud {
            points: Vec::with_capacity(n),
            normals: has_normals.then(|| Vec::with_capacity(n)),
            colors: has_colors.then(|| Vec::with_capacity(n)),
            classes: slots.class.map(|_| Vec::with_capacity(n)),
        };
        Ok(VertexSink {
            slots,
            has_normals,
            has_colors,
            color_is_float,
            cloud,
        })
    }

    fn push(&mut self, values: &[f64], path: &Path, loc: impl Fn() -> String) -> Result<()> {
        let get = |k: Option<usize>| values[k.unwrap()];
        let s = &self.slots;
        self.cloud
            .points
            .push(Point3::new(get(s.xyz[0]), get(s.xyz[1]), get(s.xyz[2])));
        if self.has_normals {
            let n = Point3::new(get(s.normal[0]), get(s.normal[1]), get(s.normal[2]));
            self.cloud.normals.as_mut().unwrap().push(n);
        }
        if self.has_colors {
            let scale = if self.color_is_float { 255.0 } else { 1.0 };
            let c = s.color.map(|k| (get(k) * scale).round().clamp(0.0, 255.0) as u8);
            self.cloud.colors.as_mut().unwrap().push(c);
        }
        if let Some(k) = s.class {
            let v = values[k];
            let class = (v.fract() == 0.0 && (0.0..=255.0).contains(&v))
                .then(|| PointClass::from_label(v as u8))
                .flatten()
                .ok_or_else(|| parse_err(path, loc(), format!("class must be 0 or 1, found {v}")))?;
            self.cloud.classes.as_mut().unwrap().push(class);
        }
        Ok(())
    }
}

fn parse_ply(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let header = parse_header(bytes, path)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(path, "header", "no vertex element"))?;
    let vertex = &header.elements[vi];
    let mut sink = VertexSink::new(vertex, path)?;
    match header.encoding {
        Encoding::Ascii => read_ascii(bytes, &header, vi, &mut sink, path)?,
        Encoding::BinaryLe => read_binary(bytes, &header, vi, &mut sink, path)?,
    }
    Ok(sink.cloud)
}

fn read_ascii(bytes: &[u8], header: &Header, vi: usize, sink: &mut VertexSink, path: &Path) -> Result<()> {
    let text = std::str::from_utf8(&bytes[header.body..])
        .map_err(|_| parse_err(path, format!("line {}", header.body_line), "ASCII body is not valid text"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header.body_line + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    for el in &header.elements[..vi] {
        for _ in 0..el.count {
            if lines.next().is_none() {
                return Err(parse_err(path, "end of file", format!("element {} is truncated", el.name)));
            }
        }
    }
    let vertex = &header.elements[vi];
    let mut values = Vec::with_capacity(vertex.props.len());
    for v in 0..vertex.count {
        let Some((line_no, line)) = lines.next() else {
            return Err(parse_err(
                path,
                "end of file",
                format!("header declares {} vertices but the file contains {v}", vertex.count),
            ));
        };
        let loc = || format!("line {line_no}");
        values.clear();
        let mut tok = line.split_whitespace();
        for p in &vertex.props {
            match p {
                Property::Scalar { name, .. } => {
                    let t = tok
                        .next()
                        .ok_or_else(|| parse_err(path, loc(), format!("missing value for {name}")))?;
                    let x: f64 = t
                        .parse()
                        .map_err(|_| parse_err(path, loc(), format!("invalid number {t:?} for {name}")))?;
                    values.push(x);
                }
                Property::List { .. } => {
                    let c: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(path, loc(), "invalid list count"))?;
                    for _ in 0..c {
                        tok.next().ok_or_else(|| parse_err(path, loc(), "list is truncated"))?;
                    }
                    values.push(0.0);
                }
            }
        }
        if tok.next().is_some() {
            return Err(parse_err(path, loc(), "too many values in vertex row"));
        }
        sink.push(&values, path, loc)?;
    }
    Ok(())
}

fn read_binary(bytes: &[u8], header: &Header, vi: usize, sink: &mut VertexSink, path: &Path) -> Result<()> {
    let mut pos = header.body;
    let take = |pos: &mut usize, n: usize, what: &dyn Fn() -> String| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(parse_err(path, format!("byte {}", *pos), what()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    for el in &header.elements[..vi] {
        for _ in 0..el.count {
            for p in &el.props {
                let what = || format!("element {} is truncated", el.name);
                match *p {
                    Property::Scalar { ty, .. } => {
                        take(&mut pos, ty.size(), &what)?;
                    }
                    Property::List { count, item } => {
                        let c = count.read_le(take(&mut pos, count.size(), &what)?);
                        if !(c >= 0.0) {
                            return Err(parse_err(path, format!("byte {pos}"), "negative list count"));
                        }
                        take(&mut pos, c as usize * item.size(), &what)?;
                    }
                }
            }
        }
    }
    let vertex = &header.elements[vi];
    let mut values = Vec::with_capacity(vertex.props.len());
    for v in 0..vertex.count {
        let start = pos;
        let short = || format!("header declares {} vertices but the file contains {v}", vertex.count);
        values.clear();
        for p in &vertex.props {
            match *p {
                Property::Scalar { ty, .. } => values.push(ty.read_le(take(&mut pos, ty.size(), &short)?)),
                Property::List { count, item } => {
                    let c = count.read_le(take(&mut pos, count.size(), &short)?);
                    if !(c >= 0.0) {
                        return Err(parse_err(path, format!("byte {pos}"), "negative list count"));
                    }
                    take(&mut pos, c as usize * item.size(), &short)?;
                    values.push(0.0);
                }
            }
        }
        sink.push(&values, path, || format!("byte {start}"))?;
    }
    Ok(())
}

fn encode_ply(cloud: &PointCloud, binary: bool) -> Vec<u8> {
    let mut h = String::from("ply\n");
    h.push_str(if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    });
    h.push_str(&format!("element vertex {}\n", cloud.len()));
    for a in ["x", "y", "z"] {
        h.push_str(&format!("property double {a}\n"));
    }
    if cloud.normals.is_some() {
        for a in ["nx", "ny", "nz"] {
            h.push_str(&format!("property double {a}\n"));
        }
    }
    if cloud.colors.is_some() {
        for a in ["red", "green", "blue"] {
            h.push_str(&format!("property uchar {a}\n"));
        }
    }
    if cloud.classes.is_some() {
        h.push_str("property uchar class\n");
    }
    h.push_str("end_header\n");

    let mut out = h.into_bytes();
    for i in 0..cloud.len() {
        let mut reals = cloud.points[i].to_array().to_vec();
        if let Some(n) = &cloud.normals {
            reals.extend(n[i].to_array());
        }
        let mut bytes: Vec<u8> = cloud.colors.as_ref().map_or(Vec::new(), |c| c[i].to_vec());
        if let Some(c) = &cloud.classes {
            bytes.push(c[i].label());
        }
        if binary {
            for r in reals {
                out.extend_from_slice(&r.to_le_bytes());
            }
            out.extend_from_slice(&bytes);
        } else {
            let row: Vec<String> = reals
                .iter()
                .map(|r| r.to_string())
                .chain(bytes.iter().map(|b| b.to_string()))
                .collect();
            out.extend_from_slice(row.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

fn parse_xyz(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes).map_err(|_| parse_err(path, "file", "not valid text"))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loc = || format!("line {}", i + 1);
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(path, loc(), format!("invalid number {t:?}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(parse_err(
                path,
                loc(),
                format!("expected 3 or 6 columns, found {}", vals.len()),
            ));
        }
        match columns {
            None => columns = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(parse_err(
                    path,
                    loc(),
                    format!("expected {c} columns like the first row, found {}", vals.len()),
                ))
            }
            _ => {}
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 6 {
            normals.push(Point3::new(vals[3], vals[4], vals[5]));
        }
    }
    Ok(PointCloud {
        points,
        normals: (columns == Some(6)).then_some(normals),
        ..Default::default()
    })
}

fn encode_xyz(cloud: &PointCloud) -> Vec<u8> {
    let mut out = String::with_capacity(cloud.len() * 48);
    for (i, p) in cloud.points.iter().enumerate() {
        out.push_str(&format!("{} {} {}", p.x, p.y, p.z));
        if let Some(n) = &cloud.normals {
            out.push_str(&format!(" {} {} {}", n[i].x, n[i].y, n[i].z));
        }
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn write_text(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn sample() -> PointCloud {
        let mut c = synth::sphere(57, 1.3, 4);
        c.normals = Some(c.points.iter().map(|p| p.normalized().unwrap()).collect());
        c.colors = Some((0..57).map(|i| [i as u8, 255 - i as u8, 7]).collect());
        c.classes = Some(
            (0..57)
                .map(|i| if i % 3 == 0 { PointClass::Edge } else { PointClass::Normal })
                .collect(),
        );
        c
    }

    #[test]
    fn ascii_ply_three_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(
            dir.path(),
            "a.ply",
            "ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 2 3\n-1 0.5 2\n",
        );
        let c = read_cloud(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points[1], Point3::new(1.0, 2.0, 3.0));
        assert_eq!(c.points[2], Point3::new(-1.0, 0.5, 2.0));
        assert!(c.normals.is_none() && c.colors.is_none() && c.classes.is_none());
    }

    #[test]
    fn xyz_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(dir.path(), "a.xyz", "1.0 2.0 3.0\n");
        assert_eq!(read_cloud(&p).unwrap().points, vec![Point3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn xyz_with_normals_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(dir.path(), "n.xyz", "# c\n0 0 0 0 0 1\n\n1 1 1 0 1 0\n");
        let c = read_cloud(&p).unwrap();
        assert_eq!(c.normals.unwrap()[1], Point3::new(0.0, 1.0, 0.0));
        let bad = write_text(dir.path(), "b.xyz", "0 0 0\n1 1\n");
        let e = read_cloud(&bad).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let mixed = write_text(dir.path(), "m.xyz", "0 0 0\n1 1 1 0 0 1\n");
        assert!(read_cloud(&mixed).unwrap_err().to_string().contains("line 2"));
        let nan = write_text(dir.path(), "x.xyz", "0 0 abc\n");
        assert!(read_cloud(&nan).unwrap_err().to_string().contains("\"abc\""));
    }

    #[test]
    fn vertex_shortfall_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(
            dir.path(),
            "s.ply",
            "ply\nformat ascii 1.0\nelement vertex 5\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n1 0 0\n2 0 0\n3 0 0\n",
        );
        let e = read_cloud(&p).unwrap_err().to_string();
        assert!(e.contains("declares 5 vertices but the file contains 4"), "{e}");

        let mut c = PointCloud::from_points(vec![Point3::ZERO; 5]);
        c.points[1].x = 1.0;
        let b = dir.path().join("b.ply");
        write_cloud(&c, &b, CloudFormat::PlyBinary).unwrap();
        let bytes = fs::read(&b).unwrap();
        fs::write(&b, &bytes[..bytes.len() - 24]).unwrap();
        let e = read_cloud(&b).unwrap_err().to_string();
        assert!(e.contains("declares 5 vertices but the file contains 4"), "{e}");
        assert!(e.contains("byte"), "{e}");
    }

    #[test]
    fn malformed_rows_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(
            dir.path(),
            "m.ply",
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n1 zz 0\n",
        );
        let e = read_cloud(&p).unwrap_err();
        assert!(matches!(e, Error::Parse { ref location, .. } if location == "line 9"), "{e}");
        let h = write_text(dir.path(), "h.ply", "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nend_header\n0\n");
        assert!(read_cloud(&h).unwrap_err().to_string().contains("lacks x, y and z"));
        let be = write_text(dir.path(), "be.ply", "ply\nformat binary_big_endian 1.0\nend_header\n");
        assert!(read_cloud(&be).unwrap_err().to_string().contains("binary_big_endian"));
        let nomagic = write_text(dir.path(), "x.ply", "plx\n");
        assert!(read_cloud(&nomagic).unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn unsupported_extension() {
        let e = read_cloud("cloud.las").unwrap_err().to_string();
        assert!(e.contains(".ply") && e.contains(".xyz"), "{e}");
    }

    #[test]
    fn binary_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample();
        let p = dir.path().join("c.ply");
        write_cloud(&c, &p, CloudFormat::PlyBinary).unwrap();
        let back = read_cloud(&p).unwrap();
        assert_eq!(back, c);
        for (a, b) in back.points.iter().zip(&c.points) {
            assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
        }
    }

    #[test]
    fn ascii_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample();
        let p = dir.path().join("c.ply");
        write_cloud(&c, &p, CloudFormat::PlyAscii).unwrap();
        assert_eq!(read_cloud(&p).unwrap(), c);
        let x = dir.path().join("c.xyz");
        write_cloud(&c, &x, CloudFormat::Xyz).unwrap();
        let back = read_cloud(&x).unwrap();
        assert_eq!(back.points, c.points);
        assert_eq!(back.normals, c.normals);
    }

    #[test]
    fn classes_become_a_property() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.ply");
        write_cloud(&sample(), &p, CloudFormat::PlyAscii).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("property uchar class\n"));
    }

    #[test]
    fn empty_write_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let e = write_cloud(&PointCloud::default(), dir.path().join("e.ply"), CloudFormat::PlyBinary).unwrap_err();
        assert_eq!(e.to_string(), "refusing to write empty cloud");
    }

    #[test]
    fn skips_faces_before_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement face 1\nproperty list uchar int vertex_indices\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n".to_vec();
        bytes.push(3);
        for i in 0..3i32 {
            bytes.extend(i.to_le_bytes());
        }
        for v in 0..2 {
            for a in [1.5f32, 2.5, v as f32] {
                bytes.extend(a.to_le_bytes());
            }
            bytes.extend([10, 20, 30]);
        }
        let p = dir.path().join("f.ply");
        fs::write(&p, bytes).unwrap();
        let c = read_cloud(&p).unwrap();
        assert_eq!(c.points[1], Point3::new(1.5, 2.5, 1.0));
        assert_eq!(c.colors.unwrap()[0], [10, 20, 30]);
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.xyz");
        fs::write(&p, "old contents that are longer than the new ones\n").unwrap();
        write_atomic(&p, b"1 2 3\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "1 2 3\n");
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
