//! Surface data types and the tools that create, load, normalize and resample them.

mod io;
mod mesh;
mod sampling;
mod synthetic;

pub use io::{
    load_labels, load_shape, read_obj, read_ply, read_xyz, save_labels, save_shape, write_obj,
    write_ply, write_xyz, ShapeFormat,
};
pub use mesh::{
    normalize_positions, normalize_shape, Discretization, Normalization, PointCloud, Shape,
    SurfaceMesh, Vec3, DEFAULT_K_NEIGHBORS,
};
pub use sampling::{midpoint_refine, sample_point_cloud, SampledCloud};
pub use synthetic::{
    flat_grid, icosphere, BumpySphere, BumpySphereParams, BumpSpec, MirroredPair,
    MirroredPairParams,
};
