//! OBJ, PLY and XYZ readers/writers plus per-vertex label files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mesh::{PointCloud, Shape, SurfaceMesh, Vec3, DEFAULT_K_NEIGHBORS};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFormat {
    Obj,
    Ply,
    Xyz,
}

impl ShapeFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("obj") => Ok(ShapeFormat::Obj),
            Some("ply") => Ok(ShapeFormat::Ply),
            Some("xyz") | Some("txt") | Some("pts") => Ok(ShapeFormat::Xyz),
            _ => Err(Error::Unsupported(format!(
                "cannot infer shape format from {}",
                path.display()
            ))),
        }
    }
}

impl FromStr for ShapeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(ShapeFormat::Obj),
            "ply" => Ok(ShapeFormat::Ply),
            "xyz" => Ok(ShapeFormat::Xyz),
            other => Err(Error::Unsupported(format!("shape format '{other}'"))),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Load a shape, logging any non-fatal warnings (such as fan-triangulated quads).
pub fn load_shape(path: &Path, format: Option<ShapeFormat>) -> Result<Shape> {
    let format = match format {
        Some(f) => f,
        None => ShapeFormat::from_path(path)?,
    };
    let reader = open(path)?;
    let (shape, warnings) = match format {
        ShapeFormat::Obj => {
            let (mesh, w) = read_obj(reader)?;
            (Shape::mesh(mesh), w)
        }
        ShapeFormat::Ply => read_ply(reader)?,
        ShapeFormat::Xyz => (Shape::cloud(read_xyz(reader)?), Vec::new()),
    };
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(shape)
}

pub fn save_shape(shape: &Shape, path: &Path, format: Option<ShapeFormat>) -> Result<()> {
    let format = match format {
        Some(f) => f,
        None => ShapeFormat::from_path(path)?,
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match (format, shape.as_mesh(), shape.as_cloud()) {
        (ShapeFormat::Obj, Some(mesh), _) => write_obj(mesh, &mut w),
        (ShapeFormat::Obj, None, Some(c)) => write_obj(
            &SurfaceMesh {
                positions: c.positions.clone(),
                faces: Vec::new(),
            },
            &mut w,
        ),
        (ShapeFormat::Ply, _, _) => write_ply(shape, &mut w),
        (ShapeFormat::Xyz, _, _) => {
            let normals = shape.as_cloud().and_then(|c| c.normals.as_deref());
            write_xyz(shape.positions(), normals, &mut w)
        }
        _ => unreachable!("a shape is either a mesh or a cloud"),
    };
    res.and_then(|_| w.flush().map_err(|e| Error::io(path, e)))
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("expected a number, found '{tok}'"),
    })
}

/// Parse an ASCII OBJ. Quads are fan-triangulated (with a warning); larger polygons are errors.
pub fn read_obj<R: BufRead>(reader: R) -> Result<(SurfaceMesh, Vec<String>)> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let coords: Vec<&str> = toks.collect();
                if coords.len() < 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "vertex record needs three coordinates".into(),
                    });
                }
                positions.push(Vec3::new(
                    parse_f64(coords[0], lineno)?,
                    parse_f64(coords[1], lineno)?,
                    parse_f64(coords[2], lineno)?,
                ));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in toks {
                    let head = tok.split('/').next().unwrap_or("");
                    let raw: i64 = head.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad face index '{tok}'"),
                    })?;
                    let index = if raw > 0 {
                        raw - 1
                    } else if raw < 0 {
                        positions.len() as i64 + raw
                    } else {
                        -1
                    };
                    if index < 0 || index as usize >= positions.len() {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("face index {raw} out of range"),
                        });
                    }
                    poly.push(index as usize);
                }
                match poly.len() {
                    3 => faces.push([poly[0], poly[1], poly[2]]),
                    4 => {
                        warnings.push(format!("line {lineno}: quad fan-triangulated"));
                        faces.push([poly[0], poly[1], poly[2]]);
                        faces.push([poly[0], poly[2], poly[3]]);
                    }
                    n => {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("unsupported polygon with {n} vertices"),
                        })
                    }
                }
            }
            _ => {}
        }
    }
    let mesh = SurfaceMesh::new(positions, faces)?;
    Ok((mesh, warnings))
}

pub fn write_obj<W: Write>(mesh: &SurfaceMesh, w: &mut W) -> Result<()> {
    let werr = |e| Error::io("<obj>", e);
    for p in &mesh.positions {
        // `{:?}` on f64 prints the shortest representation that round-trips.
        writeln!(w, "v {:?} {:?} {:?}", p.x, p.y, p.z).map_err(werr)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).map_err(werr)?;
    }
    Ok(())
}

/// Whitespace-separated rows of three (positions) or six (positions + normals) floats.
pub fn read_xyz<R: BufRead>(reader: R) -> Result<PointCloud> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() || toks[0].starts_with('#') {
            continue;
        }
        if toks.len() != 3 && toks.len() != 6 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 or 6 columns, found {}", toks.len()),
            });
        }
        match columns {
            None => columns = Some(toks.len()),
            Some(c) if c != toks.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "inconsistent column count".into(),
                })
            }
            _ => {}
        }
        let vals: Vec<f64> = toks
            .iter()
            .map(|t| parse_f64(t, lineno))
            .collect::<Result<_>>()?;
        positions.push(Vec3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 6 {
            let n = Vec3::new(vals[3], vals[4], vals[5]);
            let len = n.norm();
            if len == 0.0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "zero-length normal".into(),
                });
            }
            normals.push(n / len);
        }
    }
    let k = DEFAULT_K_NEIGHBORS.min(positions.len().saturating_sub(1)).max(1);
    let normals = (columns == Some(6)).then_some(normals);
    PointCloud::new(positions, normals, k)
}

pub fn write_xyz<W: Write>(positions: &[Vec3], normals: Option<&[Vec3]>, w: &mut W) -> Result<()> {
    let werr = |e| Error::io("<xyz>", e);
    for (i, p) in positions.iter().enumerate() {
        match normals {
            Some(n) => writeln!(
                w,
                "{:?} {:?} {:?} {:?} {:?} {:?}",
                p.x, p.y, p.z, n[i].x, n[i].y, n[i].z
            ),
            None => writeln!(w, "{:?} {:?} {:?}", p.x, p.y, p.z),
        }
        .map_err(werr)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
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

    fn read_le<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        macro_rules! rd {
            ($t:ty, $n:expr) => {{
                let mut buf = [0u8; $n];
                r.read_exact(&mut buf)?;
                <$t>::from_le_bytes(buf) as f64
            }};
        }
        Ok(match self {
            Scalar::I8 => rd!(i8, 1),
            Scalar::U8 => rd!(u8, 1),
            Scalar::I16 => rd!(i16, 2),
            Scalar::U16 => rd!(u16, 2),
            Scalar::I32 => rd!(i32, 4),
            Scalar::U32 => rd!(u32, 4),
            Scalar::F32 => rd!(f32, 4),
            Scalar::F64 => rd!(f64, 8),
        })
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Parse ASCII or binary little-endian PLY. Faces make a mesh; otherwise a point cloud
/// (with normals when `nx ny nz` are present).
pub fn read_ply<R: BufRead>(mut reader: R) -> Result<(Shape, Vec<String>)> {
    let mut line = String::new();
    let mut lineno = 0usize;
    let mut binary = false;
    let mut elements: Vec<Element> = Vec::new();
    let read_line = |reader: &mut R, line: &mut String, lineno: &mut usize| -> Result<()> {
        line.clear();
        *lineno += 1;
        let n = reader.read_line(line).map_err(|e| Error::Parse {
            line: *lineno,
            message: e.to_string(),
        })?;
        if n == 0 {
            return Err(Error::Parse {
                line: *lineno,
                message: "unexpected end of PLY header".into(),
            });
        }
        Ok(())
    };
    read_line(&mut reader, &mut line, &mut lineno)?;
    if line.trim() != "ply" {
        return Err(Error::Parse {
            line: 1,
            message: "missing 'ply' magic".into(),
        });
    }
    loop {
        read_line(&mut reader, &mut line, &mut lineno)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => binary = false,
            ["format", "binary_little_endian", _] => binary = true,
            ["format", other, _] => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unsupported PLY format '{other}'"),
                })
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad element count '{count}'"),
                })?,
                props: Vec::new(),
            }),
            ["property", "list", cty, ity, name] => {
                let (c, i) = match (Scalar::parse(cty), Scalar::parse(ity)) {
                    (Some(c), Some(i)) => (c, i),
                    _ => {
                        return Err(Error::Parse {
                            line: lineno,
                            message: "bad list property types".into(),
                        })
                    }
                };
                let el = elements.last_mut().ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "property before element".into(),
                })?;
                el.props.push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let s = Scalar::parse(ty).ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("unknown property type '{ty}'"),
                })?;
                let el = elements.last_mut().ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "property before element".into(),
                })?;
                el.props.push(Property::Scalar(name.to_string(), s));
            }
            ["end_header"] => break,
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unrecognized header line '{}'", line.trim()),
                })
            }
        }
    }

    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals = false;
    let mut faces = Vec::new();
    let mut warnings = Vec::new();
    let mut ascii_tokens: Vec<String> = Vec::new();
    let mut ascii_pos = 0usize;
    if !binary {
        let mut rest = String::new();
        reader.read_to_string(&mut rest).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        ascii_tokens = rest.split_whitespace().map(str::to_string).collect();
    }
    let mut next = |reader: &mut R, ty: Scalar| -> Result<f64> {
        if binary {
            ty.read_le(reader).map_err(|e| Error::Parse {
                line: lineno,
                message: format!("binary body truncated: {e}"),
            })
        } else {
            let tok = ascii_tokens.get(ascii_pos).ok_or_else(|| Error::Parse {
                line: lineno,
                message: "ASCII body truncated".into(),
            })?;
            ascii_pos += 1;
            parse_f64(tok, lineno)
        }
    };

    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut nrm = [0.0; 3];
            let mut poly: Vec<usize> = Vec::new();
            for prop in &el.props {
                match prop {
                    Property::Scalar(name, ty) => {
                        let v = next(&mut reader, *ty)?;
                        match name.as_str() {
                            "x" => xyz[0] = v,
                            "y" => xyz[1] = v,
                            "z" => xyz[2] = v,
                            "nx" => nrm[0] = v,
                            "ny" => nrm[1] = v,
                            "nz" => nrm[2] = v,
                            _ => {}
                        }
                    }
                    Property::List(name, cty, ity) => {
                        let n = next(&mut reader, *cty)? as usize;
                        let mut vals = Vec::with_capacity(n);
                        for _ in 0..n {
                            vals.push(next(&mut reader, *ity)?);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            poly = vals.into_iter().map(|v| v as usize).collect();
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                    normals.push(Vec3::new(nrm[0], nrm[1], nrm[2]));
                }
                "face" => match poly.len() {
                    3 => faces.push([poly[0], poly[1], poly[2]]),
                    4 => {
                        warnings.push(format!("face {}: quad fan-triangulated", faces.len()));
                        faces.push([poly[0], poly[1], poly[2]]);
                        faces.push([poly[0], poly[2], poly[3]]);
                    }
                    n => {
                        return Err(Error::Unsupported(format!(
                            "PLY polygon with {n} vertices"
                        )))
                    }
                },
                _ => {}
            }
        }
        if el.name == "vertex" {
            has_normals = el
                .props
                .iter()
                .any(|p| matches!(p, Property::Scalar(n, _) if n == "nx"));
        }
    }

    let has_faces = elements.iter().any(|e| e.name == "face" && e.count > 0);
    let shape = if has_faces {
        Shape::mesh(SurfaceMesh::new(positions, faces)?)
    } else {
        let normals = if has_normals {
            Some(
                normals
                    .into_iter()
                    .map(|n| {
                        let len = n.norm();
                        if len > 0.0 {
                            n / len
                        } else {
                            n
                        }
                    })
                    .collect(),
            )
        } else {
            None
        };
        let k = DEFAULT_K_NEIGHBORS.min(positions.len().saturating_sub(1)).max(1);
        Shape::cloud(PointCloud::new(positions, normals, k)?)
    };
    Ok((shape, warnings))
}

/// Binary little-endian PLY with double-precision coordinates.
pub fn write_ply<W: Write>(shape: &Shape, w: &mut W) -> Result<()> {
    let werr = |e| Error::io("<ply>", e);
    let positions = shape.positions();
    let normals = shape.as_cloud().and_then(|c| c.normals.as_deref());
    let faces: &[[usize; 3]] = shape.as_mesh().map(|m| m.faces.as_slice()).unwrap_or(&[]);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header += &format!("element vertex {}\n", positions.len());
    header += "property double x\nproperty double y\nproperty double z\n";
    if normals.is_some() {
        header += "property double nx\nproperty double ny\nproperty double nz\n";
    }
    if shape.as_mesh().is_some() {
        header += &format!("element face {}\n", faces.len());
        header += "property list uchar int vertex_indices\n";
    }
    header += "end_header\n";
    w.write_all(header.as_bytes()).map_err(werr)?;
    for (i, p) in positions.iter().enumerate() {
        for c in p.iter() {
            w.write_all(&c.to_le_bytes()).map_err(werr)?;
        }
        if let Some(n) = normals {
            for c in n[i].iter() {
                w.write_all(&c.to_le_bytes()).map_err(werr)?;
            }
        }
    }
    for f in faces {
        w.write_all(&[3u8]).map_err(werr)?;
        for &v in f {
            w.write_all(&(v as i32).to_le_bytes()).map_err(werr)?;
        }
    }
    Ok(())
}

/// One non-negative integer per line, aligned with vertex order.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(t.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("bad label '{t}'"),
        })?);
    }
    Ok(out)
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn minimal_obj() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        let (mesh, warnings) = read_obj(Cursor::new(src)).unwrap();
        assert_eq!(mesh.positions.len(), 3);
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn quad_is_fan_triangulated_with_warning() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let (mesh, warnings) = read_obj(Cursor::new(src)).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn pentagon_is_rejected() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 2 0\nf 1 2 3 4 5\n";
        assert!(matches!(read_obj(Cursor::new(src)), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn obj_parse_error_reports_line() {
        let src = "v 0 0 0\nv 1 zero 0\n";
        match read_obj(Cursor::new(src)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn obj_slash_and_negative_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2//2 -1\n";
        let (mesh, _) = read_obj(Cursor::new(src)).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn xyz_rows() {
        let src = "0 0 0\n1 0 0\n0 1 0\n0 0 1\n";
        let cloud = read_xyz(Cursor::new(src)).unwrap();
        assert_eq!(cloud.positions.len(), 4);
        assert!(cloud.normals.is_none());
        let src6 = "0 0 0 0 0 2\n1 0 0 0 0 1\n";
        let cloud = read_xyz(Cursor::new(src6)).unwrap();
        assert_eq!(cloud.normals.unwrap()[0], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn ascii_ply_mesh_and_cloud() {
        let src = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
        let (shape, _) = read_ply(Cursor::new(src)).unwrap();
        assert_eq!(shape.as_mesh().unwrap().faces, vec![[0, 1, 2]]);

        let src = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nproperty double nx\nproperty double ny\nproperty double nz\nend_header\n0 0 0 0 0 1\n1 0 0 0 1 0\n";
        let (shape, _) = read_ply(Cursor::new(src)).unwrap();
        let cloud = shape.as_cloud().unwrap();
        assert_eq!(cloud.normals.as_ref().unwrap()[1], Vec3::new(0.0, 1.0, 0.0));
    }
}
