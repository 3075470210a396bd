//! Synthetic lesion corpus: faint textured discs on correlated noise, with
//! attention maps of tunable fidelity.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestRecord};
use super::preprocess::preprocess;
use super::sample::AugmentedSample;
use super::split::split_stratified;
use crate::error::{bail, Result};
use crate::rng;
use crate::tensor::write_tensor;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub size: usize,
    pub count: usize,
    /// Lesion radius range in pixels, `[min, max]`.
    pub radius: [f64; 2],
    /// Lesion intensity above the background, in units of background std.
    pub contrast: f64,
    /// Background texture std.
    pub noise: f64,
    /// Correlation length of the background texture (Gaussian sigma, px).
    pub texture_scale: f64,
    /// 1 = the map is a clean blob on the lesion, 0 = pure noise.
    pub fidelity: f64,
    pub positive_fraction: f64,
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            size: 64,
            count: 512,
            radius: [3.0, 6.0],
            contrast: 1.2,
            noise: 1.0,
            texture_scale: 1.0,
            fidelity: 0.9,
            positive_fraction: 0.5,
            split: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let [r0, r1] = self.radius;
        if self.size < 8 {
            bail!(Config, "synthetic image size {} is below 8", self.size);
        }
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            bail!(Config, "lesion radius range {:?} is degenerate", self.radius);
        }
        if 2.0 * (r1 + 1.0) >= self.size as f64 {
            bail!(Config, "lesion radius {r1} does not fit a {}px image", self.size);
        }
        if !(self.contrast.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            bail!(Config, "contrast {} / noise {} must be finite, noise non-negative", self.contrast, self.noise);
        }
        if !(0.0..=self.size as f64 / 4.0).contains(&self.texture_scale) {
            bail!(Config, "texture scale {} outside [0, size / 4]", self.texture_scale);
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            bail!(Config, "map fidelity {} outside [0, 1]", self.fidelity);
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) || self.count == 0 {
            bail!(Config, "need count > 0 and positive_fraction in [0, 1]");
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        (self.count as f64 * self.positive_fraction).round() as usize
    }
}

/// Where the lesion is (positives) or where the decoy blob sits (negatives).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lesion {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Lesion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.cx).powi(2) + (y - self.cy).powi(2) <= self.radius * self.radius
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub id: String,
    pub label: usize,
    /// `[1, 1, size, size]`, raw intensities.
    pub image: Tensor<f32>,
    /// `[1, 1, size, size]` in `[0, 1]`.
    pub map: Tensor<f32>,
    pub lesion: Lesion,
}

pub fn sample_id(i: usize) -> String {
    format!("s{i:05}")
}

/// Class labels for the whole corpus, balanced exactly and shuffled.
pub fn labels(cfg: &SyntheticConfig) -> Vec<usize> {
    let mut l: Vec<usize> = (0..cfg.count).map(|i| usize::from(i < cfg.positives())).collect();
    l.shuffle(&mut rng::stream(cfg.seed, "labels", 0));
    l
}

/// Renders sample `i`. Image and map come from separate streams so the image
/// does not depend on the map fidelity.
pub fn render(cfg: &SyntheticConfig, i: usize, label: usize) -> SyntheticSample {
    let s = cfg.size;
    let mut img_rng = rng::stream(cfg.seed, "image", i as u64);
    let [r0, r1] = cfg.radius;
    let radius = if r1 > r0 { img_rng.gen_range(r0..r1) } else { r0 };
    let lo = radius + 1.0;
    let hi = s as f64 - 2.0 - radius;
    let lesion = Lesion { cx: img_rng.gen_range(lo..hi), cy: img_rng.gen_range(lo..hi), radius };

    let background = smooth_noise(s, cfg.texture_scale, &mut img_rng);
    let texture = smooth_noise(s, 1.0, &mut img_rng);
    let mut image = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            let k = y * s + x;
            let mut v = cfg.noise * background[k];
            if label == 1 {
                let d = ((x as f64 - lesion.cx).powi(2) + (y as f64 - lesion.cy).powi(2)).sqrt();
                let mask = (radius - d + 0.5).clamp(0.0, 1.0);
                v += mask * cfg.contrast * (1.0 + 0.3 * texture[k]);
            }
            image.push(v as f32);
        }
    }

    let mut map_rng = rng::stream(cfg.seed, "map", i as u64);
    let two_s2 = 2.0 * radius * radius;
    let mut map: Vec<f64> = (0..s * s)
        .map(|k| {
            let (y, x) = ((k / s) as f64, (k % s) as f64);
            let blob = (-((x - lesion.cx).powi(2) + (y - lesion.cy).powi(2)) / two_s2).exp();
            let u: f64 = map_rng.gen();
            cfg.fidelity * blob + (1.0 - cfg.fidelity) * u
        })
        .collect();
    let lo = map.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    map.iter_mut().for_each(|v| *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 });

    SyntheticSample {
        id: sample_id(i),
        label,
        image: Tensor::from_vec([1, 1, s, s], image).unwrap(),
        map: Tensor::from_vec([1, 1, s, s], map.into_iter().map(|v| v as f32).collect()).unwrap(),
        lesion,
    }
}

/// Unit-variance Gaussian noise blurred with a Gaussian of std `sigma`.
fn smooth_noise<R: Rng>(s: usize, sigma: f64, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..s * s).map(|_| rng.sample(StandardNormal)).collect();
    if sigma > 0.0 {
        let r = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let clamp = |i: isize| i.clamp(0, s as isize - 1) as usize;
        let mut tmp = vec![0.0; s * s];
        for y in 0..s {
            for x in 0..s {
                tmp[y * s + x] = (-r..=r).map(|d| kernel[(d + r) as usize] * v[y * s + clamp(x as isize + d)]).sum();
            }
        }
        for y in 0..s {
            for x in 0..s {
                v[y * s + x] = (-r..=r).map(|d| kernel[(d + r) as usize] * tmp[clamp(y as isize + d) * s + x]).sum();
            }
        }
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
    v.iter().map(|x| (x - mean) / std).collect()
}

/// Renders the whole corpus in memory.
pub fn generate_in_memory(cfg: &SyntheticConfig) -> Result<Vec<SyntheticSample>> {
    cfg.validate()?;
    Ok(labels(cfg).into_iter().enumerate().map(|(i, l)| render(cfg, i, l)).collect())
}

/// Writes `images/`, `maps/` (PHT1), `manifest.csv` and the generator's
/// ground truth `lesions.csv` under `dir`.
pub fn generate_synthetic(cfg: &SyntheticConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("maps"))?;
    let mut records = Vec::with_capacity(cfg.count);
    let mut truth = String::from("id,label,cx,cy,radius\n");
    for (i, label) in labels(cfg).into_iter().enumerate() {
        let s = render(cfg, i, label);
        let image = format!("images/{}.pht", s.id);
        let map = format!("maps/{}.pht", s.id);
        write_tensor(&dir.join(&image), &s.image)?;
        write_tensor(&dir.join(&map), &s.map)?;
        truth.push_str(&format!("{},{},{},{},{}\n", s.id, label, s.lesion.cx, s.lesion.cy, s.lesion.radius));
        records.push(ManifestRecord { id: s.id, image, map: Some(map), label, patient: None, split: None });
    }
    split_stratified(&mut records, cfg.split, false, cfg.seed)?;
    let manifest = Manifest::new(records);
    manifest.write(&dir.join("manifest.csv"))?;
    fs::File::create(dir.join("lesions.csv"))?.write_all(truth.as_bytes())?;
    Ok(manifest)
}

/// The corpus as preprocessed samples grouped by split, without touching
/// disk. Splits match what [`generate_synthetic`] writes.
pub fn corpus_splits(cfg: &SyntheticConfig) -> Result<[Vec<AugmentedSample>; 3]> {
    let samples = generate_in_memory(cfg)?;
    let mut records: Vec<ManifestRecord> = samples
        .iter()
        .map(|s| ManifestRecord { id: s.id.clone(), image: String::new(), map: None, label: s.label, patient: None, split: None })
        .collect();
    split_stratified(&mut records, cfg.split, false, cfg.seed)?;
    let mut out: [Vec<AugmentedSample>; 3] = Default::default();
    for (s, r) in samples.into_iter().zip(&records) {
        let split = r.split.expect("every record is assigned");
        let image = preprocess(&s.image, cfg.size)?;
        out[split as usize].push(AugmentedSample::new(image, s.map, s.label, s.id, None)?);
    }
    Ok(out)
}

/// Reads `lesions.csv` back as `(id, label, lesion)` rows.
pub fn read_lesions(path: &Path) -> Result<Vec<(String, usize, Lesion)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| crate::error::Error::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<(String, usize, f64, f64, f64)>() {
        let (id, label, cx, cy, radius) = row.map_err(|e| crate::error::Error::Input(format!("{}: {e}", path.display())))?;
        out.push((id, label, Lesion { cx, cy, radius }));
    }
    Ok(out)
}
