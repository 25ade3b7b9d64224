use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::train::Split;

use super::idx::read_idx_pair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    SyntheticBlobs,
    IdxPair,
}

/// A loaded dataset: a training split and an optional held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub kind: DatasetKind,
    pub num_classes: usize,
    pub train: Split,
    pub test: Option<Split>,
}

impl DatasetHandle {
    pub fn input_dim(&self) -> usize {
        self.train.dim()
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    pub fn test_len(&self) -> usize {
        self.test.as_ref().map_or(0, Split::len)
    }
}

/// Gaussian blobs: class centers are standard normal in the first
/// `informative` coordinates and zero elsewhere; every example adds
/// `N(0, spread²)` noise to all coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
    /// Coordinates carrying class signal; 0 means all of them.
    pub informative: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 16,
            dim: 32,
            per_class: 128,
            test_per_class: 16,
            spread: 1.0,
            informative: 0,
            seed: 0,
        }
    }
}

/// Balanced isotropic blobs without a held-out split.
pub fn generate_synthetic(
    classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<DatasetHandle> {
    generate_blobs(&SyntheticSpec {
        classes,
        dim,
        per_class,
        test_per_class: 0,
        spread,
        informative: 0,
        seed,
    })
}

pub fn generate_blobs(spec: &SyntheticSpec) -> Result<DatasetHandle> {
    if spec.classes == 0 || spec.dim == 0 || spec.per_class == 0 {
        return Err(Error::InvalidArgument(
            "classes, dim and per_class must be at least 1".into(),
        ));
    }
    if !(spec.spread > 0.0 && spec.spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "spread must be positive, got {}",
            spec.spread
        )));
    }
    if spec.informative > spec.dim {
        return Err(Error::InvalidArgument(format!(
            "{} informative coordinates exceed dim {}",
            spec.informative, spec.dim
        )));
    }
    let informative = if spec.informative == 0 {
        spec.dim
    } else {
        spec.informative
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.dim)
                .map(|d| {
                    if d < informative {
                        unit.sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let noise = Normal::new(0.0, spec.spread).expect("checked spread");
    let draw = |per_class: usize, stream: u64| -> Result<Option<Split>> {
        if per_class == 0 {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream);
        let mut features = Vec::with_capacity(spec.classes * per_class * spec.dim);
        let mut labels = Vec::with_capacity(spec.classes * per_class);
        for i in 0..spec.classes * per_class {
            let c = i % spec.classes;
            features.extend(centers[c].iter().map(|&v| v + noise.sample(&mut rng)));
            labels.push(c);
        }
        Split::new(spec.dim, features, labels).map(Some)
    };
    let train = draw(spec.per_class, 1)?.expect("per_class checked");
    let test = draw(spec.test_per_class, 2)?;
    Ok(DatasetHandle {
        kind: DatasetKind::SyntheticBlobs,
        num_classes: spec.classes,
        train,
        test,
    })
}

/// Loads one IDX image/label pair as a training split.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<DatasetHandle> {
    let (dim, pixels, labels) = read_idx_pair(images_path, labels_path)?;
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Ok(DatasetHandle {
        kind: DatasetKind::IdxPair,
        num_classes,
        train: Split::new(dim, pixels, labels)?,
        test: None,
    })
}

/// Loads `train-images-idx3-ubyte`/`train-labels-idx1-ubyte` from `dir`,
/// plus the `t10k-*` pair as the held-out split when present.
pub fn load_idx_dir(dir: &Path) -> Result<DatasetHandle> {
    let file = |name: &str| -> PathBuf { dir.join(name) };
    let mut handle = load_idx(
        &file("train-images-idx3-ubyte"),
        &file("train-labels-idx1-ubyte"),
    )?;
    let (ti, tl) = (
        file("t10k-images-idx3-ubyte"),
        file("t10k-labels-idx1-ubyte"),
    );
    if ti.exists() && tl.exists() {
        let test = load_idx(&ti, &tl)?;
        if test.input_dim() != handle.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "test images have {} pixels, training images {}",
                test.input_dim(),
                handle.input_dim()
            )));
        }
        handle.num_classes = handle.num_classes.max(test.num_classes);
        handle.test = Some(test.train);
    }
    Ok(handle)
}
