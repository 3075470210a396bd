//! WebAssembly bindings for the demo page in `www/`. Errors cross the
//! boundary as strings so the functions stay callable from native tests.

use phnet_core::data::synthetic::{render, SyntheticConfig};
use phnet_core::data::AugmentParams;
use phnet_core::hypercomplex::{kron_sum, natural_algebra};
use phnet_core::metrics::roc_auc;
use phnet_core::rng;
use phnet_core::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

/// Row-major grid of values with its extent.
#[wasm_bindgen(getter_with_clone)]
#[derive(Clone, Debug)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// The `[Cout·k, Cin·k]` unrolled PHC weight for the natural algebra of
/// dimension `n` with random filters. Blocks of the Kronecker structure show
/// up as repeated, sign-flipped tiles.
#[wasm_bindgen]
pub fn phc_weight(n: usize, in_channels: usize, out_channels: usize, kernel: usize, seed: u64) -> Result<Grid, String> {
    if n == 0 || kernel == 0 || in_channels == 0 || out_channels == 0 || in_channels % n != 0 || out_channels % n != 0 {
        return Err("channels must be positive multiples of n".into());
    }
    let mut r = rng::stream(seed, "demo.phc", 0);
    let algebra = natural_algebra::<f32>(n).unwrap_or_else(|| Tensor::randn([n, n, n, 1], &mut r));
    let filters = Tensor::<f32>::randn([out_channels, in_channels / n, kernel, kernel], &mut r);
    let w = kron_sum(&algebra, &filters, n).map_err(|e| e.to_string())?;
    let (width, height) = (in_channels * kernel, out_channels * kernel);
    let mut values = vec![0.0; width * height];
    for o in 0..out_channels {
        for i in 0..in_channels {
            for u in 0..kernel {
                for v in 0..kernel {
                    values[(o * kernel + u) * width + i * kernel + v] = w.at(o, i, u, v);
                }
            }
        }
    }
    Ok(Grid { width, height, values })
}

/// One synthetic sample after a chosen augmentation, with the transformed
/// lesion center so the page can mark where image and map must agree.
#[wasm_bindgen(getter_with_clone)]
#[derive(Clone, Debug)]
pub struct DemoSample {
    pub size: usize,
    pub label: usize,
    pub image: Vec<f32>,
    pub map: Vec<f32>,
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn synthetic_sample(
    seed: u64,
    index: usize,
    positive: bool,
    contrast: f64,
    fidelity: f64,
    hflip: bool,
    vflip: bool,
    angle_deg: f64,
) -> Result<DemoSample, String> {
    let cfg = SyntheticConfig { seed, contrast, fidelity, ..SyntheticConfig::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    let s = render(&cfg, index, usize::from(positive));
    let stacked = Tensor::concat_channels(&[&s.image, &s.map]).map_err(|e| e.to_string())?;
    let t = AugmentParams { hflip, vflip, angle_deg };
    let out = t.apply(&stacked);
    let n = cfg.size * cfg.size;
    let (cx, cy) = t.forward_point(s.lesion.cx, s.lesion.cy, cfg.size, cfg.size);
    Ok(DemoSample {
        size: cfg.size,
        label: s.label,
        image: out.data()[..n].to_vec(),
        map: out.data()[n..].to_vec(),
        center_x: cx,
        center_y: cy,
        radius: s.lesion.radius,
    })
}

#[wasm_bindgen(getter_with_clone)]
#[derive(Clone, Debug)]
pub struct RocDemo {
    pub auc: f64,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// ROC of scores drawn from two unit normals `separation` apart.
#[wasm_bindgen]
pub fn roc_demo(separation: f64, per_class: usize, seed: u64) -> Result<RocDemo, String> {
    if per_class == 0 {
        return Err("need at least one sample per class".into());
    }
    let mut r = rng::stream(seed, "demo.roc", 0);
    let mut scores = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for label in [0usize, 1] {
        for _ in 0..per_class {
            let z: f64 = r.sample(StandardNormal);
            scores.push(z + separation * label as f64);
            labels.push(label);
        }
    }
    let roc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
    Ok(RocDemo {
        auc: roc.auc,
        fpr: roc.points.iter().map(|p| p.fpr).collect(),
        tpr: roc.points.iter().map(|p| p.tpr).collect(),
    })
}
