//! On-disk operator cache: `manifest.json` plus raw little-endian arrays.
//!
//! | file          | layout                                                          |
//! |---------------|-----------------------------------------------------------------|
//! | `L.csr`       | indptr `i64 x (V+1)`, indices `i64 x nnz`, values `f64 x nnz`    |
//! | `mass.f64`    | `f64 x V`                                                       |
//! | `evals.f64`   | `f64 x k`                                                       |
//! | `evecs.f64`   | `f64 x V x k`, row-major                                        |
//! | `grad.csr`    | indptr, indices as above, values as interleaved `(re, im)` f64   |
//! | `frames.f64`  | `f64 x V x 9`: `e1`, `e2`, `n` per row                          |
//! | `normals.f64` | `f64 x V x 3`                                                   |

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AssemblyStats, DiagonalMass, GeometryOperators, TangentFrames};
use crate::geometry::Vec3;
use crate::sparse::{ComplexCsr, CsrMatrix};
use crate::spectral::EigenBasis;
use crate::{Error, Result};

pub const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayDescriptor {
    pub file: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub schema_version: u32,
    pub shape_hash: String,
    pub n_vertices: usize,
    pub n_faces: usize,
    pub k: usize,
    pub k_neighbors: usize,
    pub oriented: bool,
    pub stats: AssemblyStats,
    pub arrays: Vec<ArrayDescriptor>,
}

/// What a consumer expects of a cache: the shape it was built from and its parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheKey {
    pub shape_hash: String,
    pub k: usize,
    pub k_neighbors: usize,
}

fn f64_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

fn i64_bytes(values: &[usize]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as i64).to_le_bytes()).collect()
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_operators(ops: &GeometryOperators, dir: &Path) -> Result<CacheManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let v = ops.n_vertices();
    let k = ops.k();
    let mut arrays = Vec::new();
    let mut emit = |name: &str, dtype: &str, shape: Vec<usize>, bytes: Vec<u8>| -> Result<()> {
        write(dir, name, &bytes)?;
        arrays.push(ArrayDescriptor {
            file: name.to_string(),
            dtype: dtype.to_string(),
            shape,
            bytes: bytes.len(),
        });
        Ok(())
    };

    let l = &ops.laplacian;
    let mut bytes = i64_bytes(&l.indptr);
    bytes.extend(i64_bytes(&l.indices));
    bytes.extend(f64_bytes(l.values.iter().copied()));
    emit("L.csr", "csr<i64,f64>", vec![v, v, l.nnz()], bytes)?;

    emit("mass.f64", "f64", vec![v], f64_bytes(ops.mass.0.iter().copied()))?;
    emit("evals.f64", "f64", vec![k], f64_bytes(ops.basis.values.iter().copied()))?;
    let vecs = &ops.basis.vectors;
    emit(
        "evecs.f64",
        "f64",
        vec![v, k],
        f64_bytes((0..v).flat_map(|r| (0..k).map(move |c| vecs[(r, c)]))),
    )?;

    let g = &ops.gradient;
    let mut bytes = i64_bytes(&g.indptr);
    bytes.extend(i64_bytes(&g.indices));
    bytes.extend(f64_bytes(g.re.iter().zip(&g.im).flat_map(|(&a, &b)| [a, b])));
    emit("grad.csr", "csr<i64,c128>", vec![v, v, g.nnz()], bytes)?;

    let fr = &ops.frames;
    emit(
        "frames.f64",
        "f64",
        vec![v, 9],
        f64_bytes((0..v).flat_map(|i| {
            fr.e1[i]
                .iter()
                .chain(fr.e2[i].iter())
                .chain(fr.normals[i].iter())
                .copied()
                .collect::<Vec<_>>()
        })),
    )?;
    emit(
        "normals.f64",
        "f64",
        vec![v, 3],
        f64_bytes(fr.normals.iter().flat_map(|n| [n.x, n.y, n.z])),
    )?;

    let manifest = CacheManifest {
        schema_version: CACHE_SCHEMA_VERSION,
        shape_hash: ops.shape_hash.clone(),
        n_vertices: v,
        n_faces: ops.n_faces,
        k,
        k_neighbors: ops.k_neighbors,
        oriented: ops.oriented,
        stats: ops.stats,
        arrays,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write(dir, "manifest.json", json.as_bytes())?;
    Ok(manifest)
}

struct Reader {
    bytes: Vec<u8>,
    pos: usize,
    name: String,
}

impl Reader {
    fn open(dir: &Path, name: &str, expected: usize) -> Result<Self> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != expected {
            return Err(Error::Corrupt(format!(
                "{name}: expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        Ok(Reader {
            bytes,
            pos: 0,
            name: name.to_string(),
        })
    }

    fn chunk(&mut self) -> Result<[u8; 8]> {
        let end = self.pos + 8;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Corrupt(format!("{} truncated", self.name)))?;
        self.pos = end;
        Ok(slice.try_into().expect("eight bytes"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.chunk().map(f64::from_le_bytes)).collect()
    }

    fn indices(&mut self, n: usize, bound: usize) -> Result<Vec<usize>> {
        (0..n)
            .map(|_| {
                let v = i64::from_le_bytes(self.chunk()?);
                if v < 0 || v as usize > bound {
                    return Err(Error::Corrupt(format!("{}: index {v} out of range", self.name)));
                }
                Ok(v as usize)
            })
            .collect()
    }
}

fn descriptor<'a>(m: &'a CacheManifest, file: &str) -> Result<&'a ArrayDescriptor> {
    m.arrays
        .iter()
        .find(|a| a.file == file)
        .ok_or_else(|| Error::Corrupt(format!("manifest lacks {file}")))
}

fn read_csr_parts(dir: &Path, m: &CacheManifest, file: &str, complex: bool) -> Result<(Vec<usize>, Vec<usize>, Vec<f64>)> {
    let d = descriptor(m, file)?;
    let v = m.n_vertices;
    if d.shape.len() != 3 || d.shape[0] != v || d.shape[1] != v {
        return Err(Error::Corrupt(format!("{file}: dimension mismatch {:?}", d.shape)));
    }
    let nnz = d.shape[2];
    let width = if complex { 2 } else { 1 };
    let mut r = Reader::open(dir, file, 8 * (v + 1 + nnz + width * nnz))?;
    let indptr = r.indices(v + 1, nnz)?;
    let indices = r.indices(nnz, v)?;
    if indptr[v] != nnz || indices.iter().any(|&c| c >= v) || indptr.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Corrupt(format!("{file}: inconsistent CSR structure")));
    }
    let values = r.f64s(width * nnz)?;
    Ok((indptr, indices, values))
}

/// Load a cache, rejecting it when the manifest disagrees with `expected`.
pub fn load_operators(dir: &Path, expected: Option<&CacheKey>) -> Result<GeometryOperators> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: CacheManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Corrupt(format!("manifest.json: {e}")))?;
    if m.schema_version != CACHE_SCHEMA_VERSION {
        return Err(Error::StaleCache(format!(
            "schema version {} (expected {CACHE_SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    if let Some(key) = expected {
        if key.shape_hash != m.shape_hash {
            return Err(Error::StaleCache(format!(
                "shape hash {} does not match the requested shape {}",
                m.shape_hash, key.shape_hash
            )));
        }
        if key.k != m.k {
            return Err(Error::StaleCache(format!("cache has k = {}, requested k = {}", m.k, key.k)));
        }
        if key.k_neighbors != m.k_neighbors {
            return Err(Error::StaleCache(format!(
                "cache has k_neighbors = {}, requested {}",
                m.k_neighbors, key.k_neighbors
            )));
        }
    }
    let v = m.n_vertices;
    let k = m.k;

    let (indptr, indices, values) = read_csr_parts(dir, &m, "L.csr", false)?;
    let laplacian = CsrMatrix {
        nrows: v,
        ncols: v,
        indptr,
        indices,
        values,
    };
    let (indptr, indices, inter) = read_csr_parts(dir, &m, "grad.csr", true)?;
    let gradient = ComplexCsr {
        nrows: v,
        ncols: v,
        indptr,
        indices,
        re: inter.iter().step_by(2).copied().collect(),
        im: inter.iter().skip(1).step_by(2).copied().collect(),
    };
    let mass = Reader::open(dir, "mass.f64", 8 * v)?.f64s(v)?;
    let values = Reader::open(dir, "evals.f64", 8 * k)?.f64s(k)?;
    let flat = Reader::open(dir, "evecs.f64", 8 * v * k)?.f64s(v * k)?;
    let vectors = DMatrix::from_row_slice(v, k, &flat);
    let fr = Reader::open(dir, "frames.f64", 8 * v * 9)?.f64s(v * 9)?;
    let at = |i: usize, o: usize| Vec3::new(fr[9 * i + o], fr[9 * i + o + 1], fr[9 * i + o + 2]);
    let frames = TangentFrames {
        e1: (0..v).map(|i| at(i, 0)).collect(),
        e2: (0..v).map(|i| at(i, 3)).collect(),
        normals: (0..v).map(|i| at(i, 6)).collect(),
    };
    // normals.f64 duplicates the frame normals for external consumers; check agreement.
    let normals = Reader::open(dir, "normals.f64", 8 * v * 3)?.f64s(v * 3)?;
    if (0..v).any(|i| frames.normals[i] != Vec3::new(normals[3 * i], normals[3 * i + 1], normals[3 * i + 2])) {
        return Err(Error::Corrupt("normals.f64 disagrees with frames.f64".into()));
    }
    Ok(GeometryOperators {
        laplacian,
        mass: DiagonalMass(mass),
        frames,
        gradient,
        basis: EigenBasis { values, vectors },
        oriented: m.oriented,
        n_faces: m.n_faces,
        k_neighbors: m.k_neighbors,
        shape_hash: m.shape_hash,
        stats: m.stats,
    })
}
