//! Datasets: IDX (MNIST) and CIFAR-10 binary loaders, synthetic blobs and
//! spirals, class-balanced subsampling and the `--data` spec string.

mod cifar;
mod idx;
mod synth;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cifar::{load_cifar_bin, parse_cifar_bin, CIFAR_MEAN, CIFAR_RECORD, CIFAR_STD};
pub use idx::{load_idx, parse_idx, IdxFile, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synth::{gen_blobs, gen_spirals};

use crate::error::{PrancError, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor<f32>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Consecutive index batches covering the set in order.
    pub fn batches(&self, size: usize) -> Vec<Vec<usize>> {
        let idx: Vec<usize> = (0..self.len()).collect();
        idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// `per_class` samples of every class, chosen by a seeded shuffle and
    /// returned in their original order.
    pub fn balanced_subset(&self, per_class: usize, seed: u64) -> Result<Dataset> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut taken = vec![0usize; self.classes];
        let mut chosen = Vec::with_capacity(per_class * self.classes);
        for i in order {
            let c = self.labels[i];
            if taken[c] < per_class {
                taken[c] += 1;
                chosen.push(i);
            }
        }
        if let Some(c) = taken.iter().position(|&t| t < per_class) {
            return Err(PrancError::DataFormat(format!(
                "class {c} has only {} samples, {per_class} requested",
                taken[c]
            )));
        }
        chosen.sort_unstable();
        Ok(self.subset(&chosen))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

fn find_file(dir: &Path, stems: &[&str]) -> Result<PathBuf> {
    for stem in stems {
        for candidate in [dir.join(stem), dir.join(format!("{stem}.gz"))] {
            if candidate.is_file() {
                return Ok(candidate);
            }
        }
    }
    Err(PrancError::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("none of {stems:?} found in {}", dir.display()),
    )))
}

/// Pairs an IDX image file with its label file.
pub fn load_idx_pair(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (count, rows, cols, pixels) = match load_idx(images)? {
        IdxFile::Images {
            count,
            rows,
            cols,
            pixels,
        } => (count, rows, cols, pixels),
        IdxFile::Labels(_) => return Err(PrancError::DataFormat("expected an image file".into())),
    };
    let labels = match load_idx(labels)? {
        IdxFile::Labels(l) => l,
        IdxFile::Images { .. } => return Err(PrancError::DataFormat("expected a label file".into())),
    };
    if labels.len() != count {
        return Err(PrancError::DataFormat(format!(
            "{count} images but {} labels",
            labels.len()
        )));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m as usize + 1).max(10);
    Ok(Dataset {
        inputs: Tensor::new(vec![count, 1, rows, cols], pixels)?,
        labels: labels.into_iter().map(usize::from).collect(),
        classes,
    })
}

/// Class-balanced MNIST subset from the standard IDX file names in `dir`.
pub fn mnist_subset(dir: impl AsRef<Path>, train_per_class: usize, test_per_class: usize, seed: u64) -> Result<Split> {
    let dir = dir.as_ref();
    let train = load_idx_pair(
        find_file(dir, &["train-images-idx3-ubyte", "train-images.idx3-ubyte"])?,
        find_file(dir, &["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"])?,
    )?;
    let test = load_idx_pair(
        find_file(dir, &["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"])?,
        find_file(dir, &["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"])?,
    )?;
    Ok(Split {
        train: train.balanced_subset(train_per_class, seed)?,
        test: test.balanced_subset(test_per_class, seed ^ TEST_SALT)?,
    })
}

fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut shape = None;
    for p in parts {
        shape.get_or_insert_with(|| p.inputs.shape()[1..].to_vec());
        labels.extend(p.labels);
        inputs.extend(p.inputs.into_data());
    }
    let mut full = vec![labels.len()];
    full.extend(shape.ok_or(PrancError::EmptyData("no CIFAR batches"))?);
    Ok(Dataset {
        inputs: Tensor::new(full, inputs)?,
        labels,
        classes: 10,
    })
}

/// Class-balanced CIFAR-10 subset from `data_batch_*.bin` / `test_batch.bin`.
pub fn cifar10_subset(dir: impl AsRef<Path>, train_per_class: usize, test_per_class: usize, seed: u64) -> Result<Split> {
    let dir = dir.as_ref();
    let mut parts = Vec::new();
    for i in 1..=5 {
        let stem = format!("data_batch_{i}.bin");
        if let Ok(path) = find_file(dir, &[stem.as_str()]) {
            parts.push(load_cifar_bin(path)?);
        }
    }
    let train = concat(parts)?;
    let test = load_cifar_bin(find_file(dir, &["test_batch.bin"])?)?;
    Ok(Split {
        train: train.balanced_subset(train_per_class, seed)?,
        test: test.balanced_subset(test_per_class, seed ^ TEST_SALT)?,
    })
}

const TEST_SALT: u64 = 0x7e57_7e57_7e57_7e57;

/// Parsed `--data` argument: `kind[:key=value,...]`.
///
/// * `blobs:classes=3,train=200,test=100,spread=0.35,seed=0` (counts per class)
/// * `spirals:train=200,test=100,noise=0.05,seed=0`
/// * `mnist:dir=PATH,train=100,test=50,seed=0`
/// * `cifar10:dir=PATH,train=100,test=50,seed=0`
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub kind: String,
    pub params: BTreeMap<String, String>,
}

impl DataSpec {
    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| PrancError::InvalidConfig(format!("data option {key}={v:?} is malformed"))),
        }
    }

    fn dir(&self) -> Result<PathBuf> {
        self.params
            .get("dir")
            .map(PathBuf::from)
            .ok_or_else(|| PrancError::InvalidConfig(format!("{} needs dir=PATH", self.kind)))
    }

    pub fn load(&self) -> Result<Split> {
        let seed: u64 = self.get("seed", 0)?;
        match self.kind.as_str() {
            "blobs" => {
                let classes = self.get("classes", 3)?;
                let spread = self.get("spread", 0.35)?;
                Ok(Split {
                    train: gen_blobs(classes, self.get("train", 200)?, spread, seed),
                    test: gen_blobs(classes, self.get("test", 100)?, spread, seed ^ TEST_SALT),
                })
            }
            "spirals" | "two-spirals" => {
                let noise = self.get("noise", 0.05)?;
                Ok(Split {
                    train: gen_spirals(self.get("train", 200)?, noise, seed),
                    test: gen_spirals(self.get("test", 100)?, noise, seed ^ TEST_SALT),
                })
            }
            "mnist" | "mnist-subset" => mnist_subset(self.dir()?, self.get("train", 100)?, self.get("test", 50)?, seed),
            "cifar10" | "cifar10-subset" => {
                cifar10_subset(self.dir()?, self.get("train", 100)?, self.get("test", 50)?, seed)
            }
            other => Err(PrancError::InvalidConfig(format!("unknown dataset {other:?}"))),
        }
    }
}

impl std::str::FromStr for DataSpec {
    type Err = PrancError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params = BTreeMap::new();
        for pair in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| PrancError::InvalidConfig(format!("data option {pair:?} is not key=value")))?;
            params.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self {
            kind: kind.trim().to_string(),
            params,
        })
    }
}
