use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DepthRepr", into = "String")]
pub enum Depth {
    Resnet18,
    Resnet50,
    /// Two-stage test-scale network.
    Mini,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DepthRepr {
    Int(u32),
    Str(String),
}

impl TryFrom<DepthRepr> for Depth {
    type Error = Error;

    fn try_from(r: DepthRepr) -> Result<Self> {
        match r {
            DepthRepr::Int(d) => d.to_string().parse(),
            DepthRepr::Str(s) => s.parse(),
        }
    }
}

impl FromStr for Depth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "18" | "resnet18" => Ok(Depth::Resnet18),
            "50" | "resnet50" => Ok(Depth::Resnet50),
            "mini" => Ok(Depth::Mini),
            other => bail!(Config, "unknown depth {other:?} (expected 18, 50 or mini)"),
        }
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Depth::Resnet18 => "18",
            Depth::Resnet50 => "50",
            Depth::Mini => "mini",
        })
    }
}

impl From<Depth> for String {
    fn from(d: Depth) -> String {
        d.to_string()
    }
}

impl Depth {
    pub fn uses_bottleneck(self) -> bool {
        self == Depth::Resnet50
    }

    /// Standard widths rounded to the nearest positive multiple of `n`.
    pub fn default_widths(self, n: usize) -> Vec<usize> {
        let base: &[usize] = match self {
            Depth::Resnet18 | Depth::Resnet50 => &[64, 128, 256, 512],
            Depth::Mini => &[16, 32],
        };
        let n = n.max(1);
        base.iter().map(|&w| ((w + n / 2) / n).max(1) * n).collect()
    }

    fn default_blocks(self) -> Vec<usize> {
        match self {
            Depth::Resnet18 => vec![2, 2, 2, 2],
            Depth::Resnet50 => vec![3, 4, 6, 3],
            Depth::Mini => vec![1, 1],
        }
    }
}

pub const BOTTLENECK_EXPANSION: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemSpec {
    pub kernel: usize,
    pub stride: usize,
    pub max_pool: bool,
}

impl Default for StemSpec {
    /// 7×7 stride-2 convolution followed by a 3×3 stride-2 max pool.
    fn default() -> Self {
        StemSpec { kernel: 7, stride: 2, max_pool: true }
    }
}

/// Declarative description of a (PH)ResNet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub depth: Depth,
    /// Algebra dimension; 1 builds the real-valued network.
    pub n: usize,
    pub in_channels: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    /// Per-stage base widths; empty means the depth's default.
    #[serde(default)]
    pub stage_widths: Vec<usize>,
    /// Blocks per stage; empty means the depth's default.
    #[serde(default)]
    pub blocks_per_stage: Vec<usize>,
    #[serde(default)]
    pub stem: StemSpec,
}

fn default_classes() -> usize {
    2
}

impl ModelSpec {
    pub fn new(depth: Depth, n: usize, in_channels: usize) -> Self {
        ModelSpec {
            depth,
            n,
            in_channels,
            num_classes: 2,
            stage_widths: depth.default_widths(n),
            blocks_per_stage: depth.default_blocks(),
            stem: StemSpec::default(),
        }
    }

    pub fn resnet18(n: usize, in_channels: usize) -> Self {
        Self::new(Depth::Resnet18, n, in_channels)
    }

    pub fn resnet50(n: usize, in_channels: usize) -> Self {
        Self::new(Depth::Resnet50, n, in_channels)
    }

    pub fn mini(n: usize, in_channels: usize) -> Self {
        Self::new(Depth::Mini, n, in_channels)
    }

    /// Fills empty widths/blocks with the depth defaults.
    pub fn resolved(mut self) -> Self {
        if self.stage_widths.is_empty() {
            self.stage_widths = self.depth.default_widths(self.n);
        }
        if self.blocks_per_stage.is_empty() {
            self.blocks_per_stage = self.depth.default_blocks();
        }
        self
    }

    pub fn expansion(&self) -> usize {
        if self.depth.uses_bottleneck() {
            BOTTLENECK_EXPANSION
        } else {
            1
        }
    }

    /// Channels entering the classification head.
    pub fn feature_channels(&self) -> usize {
        self.stage_widths.last().copied().unwrap_or(0) * self.expansion()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 || n > crate::hypercomplex::phc::MAX_ALGEBRA_DIM {
            bail!(Config, "algebra dimension n = {n} is not supported");
        }
        if self.in_channels == 0 || self.in_channels % n != 0 {
            bail!(
                Config,
                "in_channels = {} is not divisible by n = {n}",
                self.in_channels
            );
        }
        if self.num_classes < 2 {
            bail!(Config, "need at least two classes");
        }
        if self.stage_widths.is_empty() || self.stage_widths.len() != self.blocks_per_stage.len() {
            bail!(
                Config,
                "{} stage widths for {} stages",
                self.stage_widths.len(),
                self.blocks_per_stage.len()
            );
        }
        if let Some(w) = self.stage_widths.iter().find(|&&w| w == 0 || w % n != 0) {
            bail!(Config, "stage width {w} is not a positive multiple of n = {n}");
        }
        if self.blocks_per_stage.iter().any(|&b| b == 0) {
            bail!(Config, "every stage needs at least one block");
        }
        if self.depth == Depth::Mini {
            let blocks: usize = self.blocks_per_stage.iter().sum();
            if blocks > 4 || self.stage_widths.iter().any(|&w| w > 64) {
                bail!(Config, "mini networks allow at most 4 blocks of width <= 64");
            }
        }
        if self.stem.kernel == 0 || self.stem.stride == 0 {
            bail!(Config, "stem kernel and stride must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_parses_from_numbers_and_names() {
        let spec: ModelSpec = serde_json::from_str(r#"{"depth": 18, "n": 2, "in_channels": 2}"#).unwrap();
        assert_eq!(spec.depth, Depth::Resnet18);
        assert_eq!(spec.clone().resolved(), ModelSpec::resnet18(2, 2));
        let spec: ModelSpec = serde_json::from_str(r#"{"depth": "mini", "n": 1, "in_channels": 3}"#).unwrap();
        assert_eq!(spec.depth, Depth::Mini);
        assert!(serde_json::from_str::<ModelSpec>(r#"{"depth": 34, "n": 1, "in_channels": 3}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let spec = ModelSpec::resnet50(4, 4);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::resnet18(2, 3).validate().is_err());
        let odd = ModelSpec::resnet50(3, 3);
        assert_eq!(odd.stage_widths, vec![63, 129, 255, 513]);
        assert!(odd.validate().is_ok());
        assert!(ModelSpec::mini(2, 2).validate().is_ok());
        let mut big = ModelSpec::mini(2, 2);
        big.stage_widths = vec![16, 128];
        assert!(big.validate().is_err());
    }
}
