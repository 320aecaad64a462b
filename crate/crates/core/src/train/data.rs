use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::{load_labels, load_shape, normalize_shape, Shape};
use crate::net::{Head, NetworkConfig, OutputLocation};
use crate::operators::{load_operators, shape_hash, GeometryOperators};
use crate::parallel::parallel_map;
use crate::{Error, Result};

/// What the targets of a sample label.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    VertexSegmentation,
    FaceSegmentation,
    Classification,
}

impl Task {
    pub fn of(config: &NetworkConfig) -> Task {
        match (config.head, config.outputs) {
            (Head::GlobalMeanSoftmax, _) => Task::Classification,
            (_, OutputLocation::Faces) => Task::FaceSegmentation,
            (_, OutputLocation::Vertices) => Task::VertexSegmentation,
        }
    }

    /// Number of targets a shape carries for this task.
    pub fn n_targets(self, shape: &Shape) -> usize {
        match self {
            Task::VertexSegmentation => shape.n_vertices(),
            Task::FaceSegmentation => shape.n_faces(),
            Task::Classification => 1,
        }
    }
}

/// One shape with its precomputed operators and targets.
#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub shape: Shape,
    pub ops: GeometryOperators,
    pub targets: Vec<usize>,
}

impl Sample {
    /// Targets are taken from the shape: vertex labels for segmentation, the class label otherwise.
    pub fn from_shape(name: impl Into<String>, shape: Shape, ops: GeometryOperators, task: Task) -> Result<Self> {
        let name = name.into();
        let targets = match task {
            Task::VertexSegmentation => shape.vertex_labels.clone(),
            Task::Classification => shape.class_label.map(|c| vec![c]),
            Task::FaceSegmentation => None,
        }
        .ok_or_else(|| Error::InvalidInput(format!("shape {name} carries no labels for {task:?}")))?;
        Ok(Sample { name, shape, ops, targets })
    }

    pub(crate) fn check(&self, config: &NetworkConfig) -> Result<()> {
        let task = Task::of(config);
        let n = task.n_targets(&self.shape);
        if self.targets.len() != n {
            return Err(Error::InvalidInput(format!(
                "{}: {} targets for {task:?}, expected {n}",
                self.name,
                self.targets.len()
            )));
        }
        if let Some(&bad) = self.targets.iter().find(|&&t| t >= config.n_out) {
            return Err(Error::InvalidInput(format!(
                "{}: label {bad} out of range for {} classes",
                self.name, config.n_out
            )));
        }
        if self.ops.n_vertices() != self.shape.n_vertices() {
            return Err(Error::InvalidInput(format!(
                "{}: operators cover {} vertices, shape has {}",
                self.name,
                self.ops.n_vertices(),
                self.shape.n_vertices()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Dataset { samples }
    }

    /// Compute operators with `k` eigenpairs for every shape, in parallel.
    pub fn build(shapes: Vec<(String, Shape)>, k: usize, task: Task) -> Result<Self> {
        let ops = parallel_map(&shapes, |(_, s)| GeometryOperators::compute(s, k));
        let samples = shapes
            .into_iter()
            .zip(ops)
            .map(|((name, shape), ops)| Sample::from_shape(name, shape, ops?, task))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A dataset file entry; relative paths resolve against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub shape: PathBuf,
    /// Operator cache directory; defaults to the shape path with `.ops` appended.
    #[serde(default)]
    pub cache: Option<PathBuf>,
    /// One integer label per vertex (or face, for face outputs).
    #[serde(default)]
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub class: Option<usize>,
}

impl DatasetEntry {
    pub fn default_cache_dir(shape: &Path) -> PathBuf {
        let mut s = shape.as_os_str().to_owned();
        s.push(".ops");
        PathBuf::from(s)
    }
}

/// Load shapes, labels and cached operators. Shapes are normalized to the unit sphere
/// exactly as `precompute` does, so cache hashes line up.
pub fn load_dataset(entries: &[DatasetEntry], base: &Path, config: &NetworkConfig) -> Result<Dataset> {
    let task = Task::of(config);
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let loaded = parallel_map(entries, |e| -> Result<Sample> {
        let shape_path = resolve(&e.shape);
        let mut shape = load_shape(&shape_path, None)?;
        normalize_shape(&mut shape)?;
        let dir = e
            .cache
            .as_deref()
            .map(resolve)
            .unwrap_or_else(|| DatasetEntry::default_cache_dir(&shape_path));
        if !dir.join("manifest.json").exists() {
            return Err(Error::MissingCache { shape: shape_path, dir });
        }
        let ops = load_operators(&dir, None)?;
        let hash = shape_hash(&shape);
        if ops.shape_hash != hash {
            return Err(Error::StaleCache(format!(
                "{} was computed for a different shape; rerun precompute for {}",
                dir.display(),
                shape_path.display()
            )));
        }
        let ops = match ops.k().cmp(&config.k) {
            std::cmp::Ordering::Less => {
                return Err(Error::StaleCache(format!(
                    "{} holds k = {} eigenpairs but the network needs k = {}; rerun precompute with --k {}",
                    dir.display(),
                    ops.k(),
                    config.k,
                    config.k
                )))
            }
            std::cmp::Ordering::Equal => ops,
            std::cmp::Ordering::Greater => ops.truncated(config.k)?,
        };
        let targets = if let Some(l) = &e.labels {
            load_labels(&resolve(l))?
        } else if let Some(c) = e.class {
            vec![c]
        } else {
            match task {
                Task::VertexSegmentation => shape.vertex_labels.clone(),
                Task::Classification => shape.class_label.map(|c| vec![c]),
                Task::FaceSegmentation => None,
            }
            .ok_or_else(|| Error::InvalidInput(format!("{}: no labels given", shape_path.display())))?
        };
        let sample = Sample {
            name: e.shape.display().to_string(),
            shape,
            ops,
            targets,
        };
        sample.check(config)?;
        Ok(sample)
    });
    Ok(Dataset::new(loaded.into_iter().collect::<Result<Vec<_>>>()?))
}
