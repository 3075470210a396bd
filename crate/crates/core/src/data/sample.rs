use crate::error::{bail, Result};
use crate::tensor::Tensor;

/// One image with its attention map, treated downstream as a single
/// multi-channel input.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    /// `[1, C, H, W]` with `C ∈ {1, 3}`, standardized.
    pub image: Tensor<f32>,
    /// `[1, 1, H, W]` with values in `[0, 1]`.
    pub attn_map: Tensor<f32>,
    /// 0 = negative/benign, 1 = positive/malignant.
    pub label: usize,
    pub id: String,
    pub patient_id: Option<String>,
}

impl AugmentedSample {
    pub fn new(
        image: Tensor<f32>,
        attn_map: Tensor<f32>,
        label: usize,
        id: impl Into<String>,
        patient_id: Option<String>,
    ) -> Result<Self> {
        let sample = AugmentedSample { image, attn_map, label, id: id.into(), patient_id };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        let (i, m) = (self.image.shape(), self.attn_map.shape());
        if i.n() != 1 || m.n() != 1 || m.c() != 1 {
            bail!(Dimension, "sample {}: image {i} / map {m} must be single samples with a 1-channel map", self.id);
        }
        if !matches!(i.c(), 1 | 3) {
            bail!(Dimension, "sample {}: image has {} channels (expected 1 or 3)", self.id, i.c());
        }
        if i.h() != m.h() || i.w() != m.w() {
            bail!(Dimension, "sample {}: image {i} and map {m} differ spatially", self.id);
        }
        if self.attn_map.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            bail!(Input, "sample {}: attention map leaves [0, 1]", self.id);
        }
        if self.label > 1 {
            bail!(Input, "sample {}: label {} is not binary", self.id, self.label);
        }
        Ok(())
    }

    /// Same sample with the attention map replaced by zeros.
    pub fn with_zero_map(&self) -> Self {
        AugmentedSample { attn_map: Tensor::zeros(self.attn_map.shape()), ..self.clone() }
    }
}

/// Image channels first, attention map last: `[1, C + 1, H, W]`.
pub fn stack_input(sample: &AugmentedSample) -> Result<Tensor<f32>> {
    let (i, m) = (sample.image.shape(), sample.attn_map.shape());
    if i.h() != m.h() || i.w() != m.w() || m.c() != 1 {
        bail!(Dimension, "cannot stack image {i} with map {m}");
    }
    Tensor::concat_channels(&[&sample.image, &sample.attn_map])
}

/// Splits a stacked input back into image channels and the map.
pub fn unstack_input(stacked: &Tensor<f32>) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let c = stacked.shape().c();
    if c < 2 {
        bail!(Dimension, "stacked input {} has no map channel", stacked.shape());
    }
    Ok((stacked.channel_slice(0..c - 1)?, stacked.channel_slice(c - 1..c)?))
}
