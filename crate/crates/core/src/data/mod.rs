//! Dataset loading, pixel normalization, label encoding, stratified splits,
//! and batching.
//!
//! A dataset directory holds one subdirectory per class —
//! `root/{admin,intruder,no_human}/*.ppm` — of binary P6 images.

mod augment;
mod ppm;
mod resize;

pub use augment::{augment, derive_seed, hflip, sample_stream, AugmentConfig};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
pub use resize::resize_bilinear;

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Class order is fixed: directory name and label index.
pub const CLASS_NAMES: [&str; 3] = ["admin", "intruder", "no_human"];

/// A labeled image. `image` is `[H, W, 3]` with raw values in `[0, 255]`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Bilinearly resizes every sample to `h x w`.
    pub fn resize_all(&mut self, h: usize, w: usize) -> Result<()> {
        for s in &mut self.samples {
            s.image = resize_bilinear(&s.image, h, w)?;
        }
        Ok(())
    }

    /// A new dataset containing the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// A non-fatal problem hit while loading (skipped file, malformed image).
#[derive(Debug, Clone)]
pub struct LoadWarning {
    pub path: std::path::PathBuf,
    pub message: String,
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

/// Loads `root/{admin,intruder,no_human}/*.ppm`. Files are visited in sorted
/// order per class. Malformed or non-PPM files become warnings and loading
/// continues; a missing or empty class directory is fatal.
pub fn load_dataset(root: &Path) -> Result<(Dataset, Vec<LoadWarning>)> {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for (label, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::Dataset(format!(
                "missing class directory {}",
                dir.display()
            )));
        }
        let mut entries: Vec<_> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        let before = samples.len();
        for path in entries {
            if path.extension().and_then(|e| e.to_str()) != Some("ppm") {
                warnings.push(LoadWarning {
                    path,
                    message: "skipped: not a .ppm file".into(),
                });
                continue;
            }
            match read_ppm(&path) {
                Ok(image) => samples.push(Sample { image, label }),
                Err(e) => warnings.push(LoadWarning {
                    path,
                    message: e.to_string(),
                }),
            }
        }
        if samples.len() == before {
            return Err(Error::Dataset(format!(
                "class {class:?} has no loadable images in {}",
                dir.display()
            )));
        }
    }
    Ok((
        Dataset {
            samples,
            num_classes: CLASS_NAMES.len(),
        },
        warnings,
    ))
}

/// `X / 127 - 1`, exactly as specified. Maps `{0, 127, 254}` to
/// `{-1, 0, 1}` exactly; the full range lands in `[-1, 255/127 - 1]`
/// (the upper end is ~1.0079, not 1).
pub fn normalize(image: &Tensor) -> Result<Tensor> {
    if image.data().iter().any(|&v| !(0.0..=255.0).contains(&v)) {
        return Err(Error::Range(
            "normalize input must lie in [0, 255]".into(),
        ));
    }
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = *v / 127.0 - 1.0;
    }
    Ok(out)
}

/// Inverse of [`normalize`]: `(x + 1) * 127`.
pub fn denormalize(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for v in out.data_mut() {
        *v = (*v + 1.0) * 127.0;
    }
    out
}

/// One-hot vector of length `k`.
pub fn one_hot(label: usize, k: usize) -> Result<Tensor> {
    if label >= k {
        return Err(Error::Range(format!("label {label} out of range for {k} classes")));
    }
    let mut t = Tensor::zeros(&[k]);
    t.data_mut()[label] = 1.0;
    Ok(t)
}

/// Stratified split fractions. Per class, counts follow the largest-remainder
/// rule, so every class matches the global fractions within one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train_fraction, self.val_fraction, self.test_fraction];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::Config(format!("split fractions out of [0,1]: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` into three buckets.
fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remainder = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if remainder == 0 {
            break;
        }
        counts[i] += 1;
        remainder -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Stratified (train, val, test) index lists.
pub fn split(dataset: &Dataset, config: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    config.validate()?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for class in 0..dataset.num_classes {
        let mut idx: Vec<usize> = dataset
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        // Per-class shuffle keyed off the split seed and the class index.
        fisher_yates(&mut idx, config.seed.wrapping_add(class as u64));
        let [n_train, n_val, _] = apportion(
            idx.len(),
            [config.train_fraction, config.val_fraction, config.test_fraction],
        );
        train.extend(&idx[..n_train]);
        val.extend(&idx[n_train..n_train + n_val]);
        test.extend(&idx[n_train + n_val..]);
    }
    Ok((train, val, test))
}

/// In-place seeded Fisher–Yates shuffle.
pub fn fisher_yates<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Shuffled batch iterator: stacks raw images into `[N, H, W, 3]` and one-hot
/// labels into `[N, K]`. The final partial batch is included. All images must
/// share one size (resize first).
pub fn batches(
    dataset: &Dataset,
    batch_size: usize,
    shuffle_seed: u64,
) -> impl Iterator<Item = (Tensor, Tensor)> + '_ {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    fisher_yates(&mut order, shuffle_seed);
    let chunks: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    chunks
        .into_iter()
        .map(move |chunk| stack_batch(dataset, &chunk).expect("uniform image sizes"))
}

/// Stacks the given samples into `([N,H,W,3], [N,K])` tensors.
pub fn stack_batch(dataset: &Dataset, indices: &[usize]) -> Result<(Tensor, Tensor)> {
    stack_images(
        indices.iter().map(|&i| {
            let s = &dataset.samples[i];
            (&s.image, s.label)
        }),
        indices.len(),
        dataset.num_classes,
    )
}

/// Stacks `(image, label)` pairs into batch tensors.
pub fn stack_images<'a>(
    pairs: impl Iterator<Item = (&'a Tensor, usize)>,
    n: usize,
    k: usize,
) -> Result<(Tensor, Tensor)> {
    let mut images: Vec<f32> = Vec::new();
    let mut labels = vec![0.0f32; n * k];
    let mut dims: Option<Vec<usize>> = None;
    for (row, (img, label)) in pairs.enumerate() {
        match &dims {
            None => dims = Some(img.dims().to_vec()),
            Some(d) if d.as_slice() == img.dims() => {}
            Some(d) => {
                return Err(Error::Shape(format!(
                    "batch mixes image shapes {:?} and {}",
                    d,
                    img.shape()
                )))
            }
        }
        images.extend_from_slice(img.data());
        if label >= k {
            return Err(Error::Range(format!("label {label} out of range for {k} classes")));
        }
        labels[row * k + label] = 1.0;
    }
    let d = dims.ok_or_else(|| Error::Shape("cannot stack an empty batch".into()))?;
    let mut batch_dims = vec![n];
    batch_dims.extend(&d);
    Ok((
        Tensor::new(&batch_dims, images)?,
        Tensor::new(&[n, k], labels)?,
    ))
}
