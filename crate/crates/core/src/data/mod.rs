//! Dataset handling: containers, forget/remain partitioning, batch
//! iteration, and synthetic generators for fast CI runs.

pub mod cifar;
pub mod idx;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::RngSeed;
use crate::tensor::Tensor;

/// Labeled image collection with pixel values in [0, 1].
///
/// Immutable after construction. The access counter tracks how many samples
/// have been handed out through [`Dataset::gather`]; training and evaluation
/// go through it, so tests can assert which stages touched which data.
#[derive(Debug)]
pub struct Dataset {
    name: String,
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    access_count: AtomicU64,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            name: self.name.clone(),
            images: self.images.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            access_count: AtomicU64::new(0),
        }
    }
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let (n, _, _, _) = images.dims4("Dataset::new images")?;
        if n != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "Dataset::new labels".into(),
                expected: vec![n],
                actual: vec![labels.len()],
            });
        }
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        for &v in images.values() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "pixel value {v} outside [0, 1]"
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            images,
            labels,
            num_classes,
            access_count: AtomicU64::new(0),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Dataset {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Per-sample shape as (channels, height, width).
    pub fn input_shape(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Samples read through [`Dataset::gather`] since the last reset.
    pub fn access_count(&self) -> u64 {
        self.access_count.load(Ordering::Relaxed)
    }

    pub fn reset_access_count(&self) {
        self.access_count.store(0, Ordering::Relaxed);
    }

    /// Assemble a batch tensor for the given sample indices, recording the
    /// access.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let (_, c, h, w) = self.images.dims4("gather")?;
        let sample = c * h * w;
        let mut values = Vec::with_capacity(indices.len() * sample);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!(
                    "sample index {i} out of range for {} samples",
                    self.len()
                )));
            }
            values.extend_from_slice(&self.images.values()[i * sample..(i + 1) * sample]);
            labels.push(self.labels[i]);
        }
        self.access_count
            .fetch_add(indices.len() as u64, Ordering::Relaxed);
        Ok((Tensor::new(vec![indices.len(), c, h, w], values)?, labels))
    }

    /// New dataset holding the given samples, preserving their order.
    /// This is a structural operation and does not count as data access.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Dataset> {
        let (_, c, h, w) = self.images.dims4("subset")?;
        let sample = c * h * w;
        let mut values = Vec::with_capacity(indices.len() * sample);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!(
                    "sample index {i} out of range for {} samples",
                    self.len()
                )));
            }
            values.extend_from_slice(&self.images.values()[i * sample..(i + 1) * sample]);
            labels.push(self.labels[i]);
        }
        Dataset::new(
            name,
            Tensor::new(vec![indices.len(), c, h, w], values)?,
            labels,
            self.num_classes,
        )
    }

    /// First `n` samples (or all of them when fewer exist).
    pub fn take(&self, n: usize, name: impl Into<String>) -> Result<Dataset> {
        let indices: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&indices, name)
    }
}

/// Which part of the data to forget.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ForgetSpec {
    /// Forget every sample of the listed classes.
    ByClass { classes: BTreeSet<usize> },
    /// Forget a seeded uniform sample of the given fraction of the data.
    ByFraction { fraction: f64, seed: RngSeed },
}

// Hand-written so unknown keys inside the section are rejected; serde's
// deny_unknown_fields does not apply to internally tagged enums.
impl<'de> Deserialize<'de> for ForgetSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as DeError;
        let map = serde_json::Map::deserialize(deserializer)?;
        let mode = map
            .get("mode")
            .and_then(|v| v.as_str())
            .ok_or_else(|| DeError::custom("forget section requires a string `mode` key"))?;
        let known: &[&str] = match mode {
            "by_class" => &["mode", "classes"],
            "by_fraction" => &["mode", "fraction", "seed"],
            other => {
                return Err(DeError::custom(format!(
                    "unknown forget mode `{other}`, expected `by_class` or `by_fraction`"
                )))
            }
        };
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                return Err(DeError::custom(format!(
                    "unknown key `{key}` in forget section for mode `{mode}`"
                )));
            }
        }
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| DeError::custom(format!("forget mode `{mode}` requires key `{k}`")))
        };
        match mode {
            "by_class" => {
                let classes: BTreeSet<usize> =
                    serde_json::from_value(get("classes")?).map_err(DeError::custom)?;
                Ok(ForgetSpec::ByClass { classes })
            }
            _ => {
                let fraction: f64 =
                    serde_json::from_value(get("fraction")?).map_err(DeError::custom)?;
                let seed: RngSeed =
                    serde_json::from_value(get("seed")?).map_err(DeError::custom)?;
                Ok(ForgetSpec::ByFraction { fraction, seed })
            }
        }
    }
}

impl ForgetSpec {
    pub fn by_class(classes: impl IntoIterator<Item = usize>) -> Self {
        ForgetSpec::ByClass {
            classes: classes.into_iter().collect(),
        }
    }

    /// Classes whose test accuracy counts as "forgotten" in reports.
    /// Fraction-based forgetting spans all classes, so the set is empty.
    pub fn forgotten_classes(&self) -> BTreeSet<usize> {
        match self {
            ForgetSpec::ByClass { classes } => classes.clone(),
            ForgetSpec::ByFraction { .. } => BTreeSet::new(),
        }
    }
}

/// Disjoint split of a dataset into forget and remain parts.
///
/// Original sample order is preserved on both sides, and the recorded index
/// sets partition `0..N` exactly.
#[derive(Debug, Clone)]
pub struct ForgetPartition {
    pub forget: Dataset,
    pub remain: Dataset,
    pub forget_indices: Vec<usize>,
    pub remain_indices: Vec<usize>,
}

/// Split `ds` according to `spec`.
pub fn partition_forget(ds: &Dataset, spec: &ForgetSpec) -> Result<ForgetPartition> {
    let forget_indices: Vec<usize> = match spec {
        ForgetSpec::ByClass { classes } => {
            if classes.is_empty() {
                return Err(Error::invalid("forget classes must be nonempty"));
            }
            if let Some(&bad) = classes.iter().find(|&&c| c >= ds.num_classes()) {
                return Err(Error::invalid(format!(
                    "forget class {bad} out of range for {} classes",
                    ds.num_classes()
                )));
            }
            ds.labels()
                .iter()
                .enumerate()
                .filter(|(_, l)| classes.contains(l))
                .map(|(i, _)| i)
                .collect()
        }
        ForgetSpec::ByFraction { fraction, seed } => {
            if !fraction.is_finite() || *fraction <= 0.0 || *fraction >= 1.0 {
                return Err(Error::invalid(format!(
                    "forget fraction must be in (0, 1), got {fraction}"
                )));
            }
            let n = ds.len();
            let k = ((*fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed.rng());
            let mut chosen: Vec<usize> = order.into_iter().take(k).collect();
            chosen.sort_unstable();
            chosen
        }
    };

    if forget_indices.len() == ds.len() {
        return Err(Error::invalid(
            "forget spec selects every sample; remaining set would be empty",
        ));
    }
    let forget_set: BTreeSet<usize> = forget_indices.iter().copied().collect();
    let remain_indices: Vec<usize> = (0..ds.len()).filter(|i| !forget_set.contains(i)).collect();

    Ok(ForgetPartition {
        forget: ds.subset(&forget_indices, format!("{}:forget", ds.name()))?,
        remain: ds.subset(&remain_indices, format!("{}:remain", ds.name()))?,
        forget_indices,
        remain_indices,
    })
}

/// One training batch.
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Iterator over one epoch of batches.
///
/// Every sample appears exactly once; the final short batch is kept. The
/// shuffled order is a pure function of (seed, epoch).
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

pub fn batch_iter(ds: &Dataset, batch_size: usize, shuffle: bool, seed: RngSeed) -> BatchIter<'_> {
    batch_iter_epoch(ds, batch_size, shuffle, seed, 0)
}

pub fn batch_iter_epoch(
    ds: &Dataset,
    batch_size: usize,
    shuffle: bool,
    seed: RngSeed,
    epoch: usize,
) -> BatchIter<'_> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    if shuffle {
        order.shuffle(&mut seed.rng_for_epoch(epoch));
    }
    BatchIter {
        ds,
        order,
        batch_size,
        pos: 0,
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let (images, labels) = self
            .ds
            .gather(&indices)
            .expect("batch indices are in range");
        Some(Batch {
            images,
            labels,
            indices,
        })
    }
}

fn sample_noisy(template: &[f64], noise: &Normal<f64>, rng: &mut impl Rng) -> Vec<f64> {
    template
        .iter()
        .map(|&t| (t + noise.sample(rng)).clamp(0.0, 1.0))
        .collect()
}

/// Quadrant-bit template: each of the four image quadrants is bright or dark
/// according to one bit of the class id. Any two classes below 16 differ in
/// at least a quarter of the pixels.
fn blob_template(class: usize, side: usize) -> Vec<f64> {
    let mut template = vec![0.15; side * side];
    let (half_r, half_c) = (side / 2, side / 2);
    for r in 0..side {
        for c in 0..side {
            let quadrant = usize::from(r >= half_r) * 2 + usize::from(c >= half_c);
            let mut bit = (class >> quadrant) & 1 == 1;
            if class >= 16 {
                // Beyond 4 bits, flip a deterministic pseudo-random mask.
                bit ^= crate::seed::fnv1a64(&[class as u8, r as u8, c as u8]) & 1 == 1;
            }
            if bit {
                template[r * side + c] = 0.85;
            }
        }
    }
    template
}

/// Gaussian-noise dataset around class-specific block templates; linearly
/// separable by construction, intended as a fast CI substitute.
pub fn synth_blobs(
    num_classes: usize,
    per_class: usize,
    image_side: usize,
    seed: RngSeed,
) -> Result<Dataset> {
    if num_classes == 0 || per_class == 0 || image_side == 0 {
        return Err(Error::invalid(
            "synth_blobs requires positive num_classes, per_class, and image_side",
        ));
    }
    let mut rng = seed.rng();
    let noise = Normal::new(0.0, 0.1).expect("valid sigma");
    let n = num_classes * per_class;
    let mut values = Vec::with_capacity(n * image_side * image_side);
    let mut labels = Vec::with_capacity(n);
    for class in 0..num_classes {
        let template = blob_template(class, image_side);
        for _ in 0..per_class {
            values.extend(sample_noisy(&template, &noise, &mut rng));
            labels.push(class);
        }
    }
    Dataset::new(
        "synth_blobs",
        Tensor::new(vec![n, 1, image_side, image_side], values)?,
        labels,
        num_classes,
    )
}

/// Seven-segment digit glyphs for classes 0-9, drawn on a 28x28 canvas.
const SEGMENTS: [[bool; 7]; 10] = [
    // top, top-left, top-right, middle, bottom-left, bottom-right, bottom
    [true, true, true, false, true, true, true],    // 0
    [false, false, true, false, false, true, false], // 1
    [true, false, true, true, true, false, true],   // 2
    [true, false, true, true, false, true, true],   // 3
    [false, true, true, true, false, true, false],  // 4
    [true, true, false, true, false, true, true],   // 5
    [true, true, false, true, true, true, true],    // 6
    [true, false, true, false, false, true, false], // 7
    [true, true, true, true, true, true, true],     // 8
    [true, true, true, true, false, true, true],    // 9
];

fn draw_segment(canvas: &mut [f64], side: usize, seg: usize, dr: i64, dc: i64, intensity: f64) {
    // Digit box roughly rows 4..24, cols 8..20 before jitter.
    let (r0, r1, c0, c1) = (4i64, 24i64, 8i64, 20i64);
    let rm = (r0 + r1) / 2;
    let thick = 2i64;
    let (rows, cols): ((i64, i64), (i64, i64)) = match seg {
        0 => ((r0, r0 + thick), (c0, c1)),           // top
        1 => ((r0, rm), (c0, c0 + thick)),           // top-left
        2 => ((r0, rm), (c1 - thick, c1)),           // top-right
        3 => ((rm - 1, rm + 1), (c0, c1)),           // middle
        4 => ((rm, r1), (c0, c0 + thick)),           // bottom-left
        5 => ((rm, r1), (c1 - thick, c1)),           // bottom-right
        _ => ((r1 - thick, r1), (c0, c1)),           // bottom
    };
    for r in rows.0..rows.1 {
        for c in cols.0..cols.1 {
            let (rr, cc) = (r + dr, c + dc);
            if (0..side as i64).contains(&rr) && (0..side as i64).contains(&cc) {
                canvas[rr as usize * side + cc as usize] = intensity;
            }
        }
    }
}

/// Procedural 28x28 ten-class digit dataset: jittered seven-segment glyphs
/// with stroke dropout and background noise. Harder than [`synth_blobs`],
/// graded enough that scratch training improves over several epochs.
pub fn synth_digits(per_class: usize, seed: RngSeed) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::invalid("synth_digits requires positive per_class"));
    }
    let side = 28;
    let num_classes = 10;
    let mut rng = seed.rng();
    let noise = Normal::new(0.0, 0.12).expect("valid sigma");
    let n = num_classes * per_class;
    let mut values = Vec::with_capacity(n * side * side);
    let mut labels = Vec::with_capacity(n);

    for class in 0..num_classes {
        for _ in 0..per_class {
            let mut canvas = vec![0.0f64; side * side];
            let dr = rng.gen_range(-4i64..=4);
            let dc = rng.gen_range(-5i64..=5);
            let intensity = 0.6 + 0.4 * rng.gen::<f64>();
            for (seg, &on) in SEGMENTS[class].iter().enumerate() {
                if on {
                    draw_segment(&mut canvas, side, seg, dr, dc, intensity);
                }
            }
            for v in canvas.iter_mut() {
                // Pixel dropout plus additive noise keeps the task from
                // saturating in a single epoch.
                if *v > 0.0 && rng.gen::<f64>() < 0.15 {
                    *v = 0.0;
                }
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
            values.extend(canvas);
            labels.push(class);
        }
    }
    Dataset::new(
        "synth_digits",
        Tensor::new(vec![n, 1, side, side], values)?,
        labels,
        num_classes,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset() -> Dataset {
        // 10 samples, labels 0..=4 twice.
        let n = 10;
        let values = vec![0.5; n * 4];
        let labels: Vec<usize> = (0..n).map(|i| i % 5).collect();
        Dataset::new(
            "tiny",
            Tensor::new(vec![n, 1, 2, 2], values).unwrap(),
            labels,
            5,
        )
        .unwrap()
    }

    #[test]
    fn dataset_validates_inputs() {
        let images = Tensor::new(vec![2, 1, 1, 1], vec![0.0, 2.0]);
        assert!(Dataset::new("bad", images.unwrap(), vec![0, 0], 2).is_err());
        let images = Tensor::new(vec![2, 1, 1, 1], vec![0.0, 1.0]).unwrap();
        assert!(Dataset::new("bad", images.clone(), vec![0, 5], 2).is_err());
        assert!(Dataset::new("bad", images, vec![0], 2).is_err());
    }

    #[test]
    fn synth_blobs_shape_and_determinism() {
        let a = synth_blobs(10, 20, 8, RngSeed(3)).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a.input_shape(), (1, 8, 8));
        assert_eq!(a.num_classes(), 10);

        let b = synth_blobs(10, 20, 8, RngSeed(3)).unwrap();
        assert_eq!(a.images(), b.images());
        assert_eq!(a.labels(), b.labels());

        let c = synth_blobs(10, 20, 8, RngSeed(4)).unwrap();
        assert_ne!(a.images(), c.images());
    }

    #[test]
    fn blob_templates_differ_on_quarter_of_pixels() {
        for a in 0..10 {
            for b in (a + 1)..10 {
                let (ta, tb) = (blob_template(a, 8), blob_template(b, 8));
                let diff = ta.iter().zip(&tb).filter(|(x, y)| x != y).count();
                assert!(
                    diff * 4 >= ta.len(),
                    "classes {a} and {b} differ on {diff}/{} pixels",
                    ta.len()
                );
            }
        }
    }

    #[test]
    fn synth_digits_is_deterministic() {
        let a = synth_digits(3, RngSeed(11)).unwrap();
        let b = synth_digits(3, RngSeed(11)).unwrap();
        assert_eq!(a.images(), b.images());
        assert_eq!(a.len(), 30);
        assert_eq!(a.input_shape(), (1, 28, 28));
    }

    #[test]
    fn partition_by_class_is_exact() {
        let ds = tiny_dataset();
        let part = partition_forget(&ds, &ForgetSpec::by_class([3])).unwrap();
        assert_eq!(part.forget.len(), 2);
        assert_eq!(part.remain.len(), 8);
        assert!(part.forget.labels().iter().all(|&l| l == 3));
        assert!(part.remain.labels().iter().all(|&l| l != 3));

        // Disjoint and exhaustive by original index.
        let mut all: Vec<usize> = part
            .forget_indices
            .iter()
            .chain(&part.remain_indices)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn partition_rejects_degenerate_specs() {
        let ds = tiny_dataset();
        assert!(partition_forget(&ds, &ForgetSpec::by_class([7])).is_err());
        assert!(partition_forget(&ds, &ForgetSpec::by_class([0, 1, 2, 3, 4])).is_err());
        assert!(partition_forget(&ds, &ForgetSpec::by_class([])).is_err());
        for bad in [0.0, 1.0, -0.5, 1.5] {
            assert!(partition_forget(
                &ds,
                &ForgetSpec::ByFraction {
                    fraction: bad,
                    seed: RngSeed(0)
                }
            )
            .is_err());
        }
    }

    #[test]
    fn partition_by_fraction_is_seeded() {
        let ds = tiny_dataset();
        let spec = ForgetSpec::ByFraction {
            fraction: 0.3,
            seed: RngSeed(5),
        };
        let a = partition_forget(&ds, &spec).unwrap();
        let b = partition_forget(&ds, &spec).unwrap();
        assert_eq!(a.forget_indices, b.forget_indices);
        assert_eq!(a.forget.len(), 3);

        let other = partition_forget(
            &ds,
            &ForgetSpec::ByFraction {
                fraction: 0.3,
                seed: RngSeed(6),
            },
        )
        .unwrap();
        assert_eq!(other.forget.len(), 3);
    }

    #[test]
    fn batches_cover_every_sample_once() {
        let ds = tiny_dataset();
        let sizes: Vec<usize> = batch_iter(&ds, 4, false, RngSeed(0))
            .map(|b| b.labels.len())
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);

        let mut seen: Vec<usize> = batch_iter(&ds, 3, true, RngSeed(1))
            .flat_map(|b| b.indices)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn unshuffled_batches_keep_original_order() {
        let ds = tiny_dataset();
        let order: Vec<usize> = batch_iter(&ds, 3, false, RngSeed(9))
            .flat_map(|b| b.indices)
            .collect();
        assert_eq!(order, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn shuffle_depends_on_seed_and_epoch_only() {
        let ds = tiny_dataset();
        let collect = |seed: u64, epoch: usize| -> Vec<usize> {
            batch_iter_epoch(&ds, 4, true, RngSeed(seed), epoch)
                .flat_map(|b| b.indices)
                .collect()
        };
        assert_eq!(collect(1, 0), collect(1, 0));
        assert_ne!(collect(1, 0), collect(1, 1));
        assert_ne!(collect(1, 0), collect(2, 0));
    }

    #[test]
    fn access_counter_tracks_gathers() {
        let ds = tiny_dataset();
        assert_eq!(ds.access_count(), 0);
        for _ in batch_iter(&ds, 4, false, RngSeed(0)) {}
        assert_eq!(ds.access_count(), 10);
        let _ = ds.subset(&[0, 1], "sub").unwrap();
        assert_eq!(ds.access_count(), 10, "subset must not count as access");
        ds.reset_access_count();
        assert_eq!(ds.access_count(), 0);
    }

    #[test]
    fn forget_spec_json_roundtrip_and_unknown_keys() {
        let spec: ForgetSpec =
            serde_json::from_str(r#"{"mode":"by_class","classes":[3,7]}"#).unwrap();
        assert_eq!(spec, ForgetSpec::by_class([3, 7]));

        let frac: ForgetSpec =
            serde_json::from_str(r#"{"mode":"by_fraction","fraction":0.1,"seed":9}"#).unwrap();
        assert!(matches!(frac, ForgetSpec::ByFraction { .. }));

        let err = serde_json::from_str::<ForgetSpec>(
            r#"{"mode":"by_class","classes":[1],"extra":true}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }
}
