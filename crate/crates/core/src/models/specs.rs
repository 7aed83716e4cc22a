//! Declarative architecture specs. Each spec validates itself and renders a
//! canonical descriptor string whose FNV-1a hash guards checkpoints against
//! being loaded into a differently shaped network.

use crate::error::{Error, Result};
use std::path::PathBuf;

/// Five conv stages of 3x3/pad-1 convolutions, each followed by a 2x2
/// stride-2 max pool, then two FC layers of width `fc_dim` with ReLU and
/// dropout, then an FC classifier added by the builders.
#[derive(Debug, Clone)]
pub struct MiniVggSpec {
    /// (num_convs, out_channels) per stage; always exactly 5 stages so a
    /// branch split depth k in 1..=5 is meaningful.
    pub stages: Vec<(usize, usize)>,
    pub fc_dim: usize,
    pub in_channels: usize,
    pub input_hw: (usize, usize),
    pub dropout_p: f64,
}

impl Default for MiniVggSpec {
    fn default() -> Self {
        MiniVggSpec {
            stages: vec![(1, 8), (1, 16), (2, 32), (2, 64), (2, 64)],
            fc_dim: 128,
            in_channels: 3,
            input_hw: (64, 64),
            dropout_p: 0.5,
        }
    }
}

impl MiniVggSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stages.len() != 5 {
            return Err(Error::InvalidConfig(format!(
                "backbone needs exactly 5 conv stages, got {}",
                self.stages.len()
            )));
        }
        for (i, &(n, c)) in self.stages.iter().enumerate() {
            if n == 0 || c == 0 {
                return Err(Error::InvalidConfig(format!(
                    "stage {} has zero convs or channels",
                    i + 1
                )));
            }
        }
        if self.fc_dim == 0 || self.in_channels == 0 {
            return Err(Error::InvalidConfig("zero fc_dim or in_channels".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig(format!(
                "dropout_p {} outside [0,1)",
                self.dropout_p
            )));
        }
        self.spatial_after_stages()?;
        Ok(())
    }

    /// Spatial size after all five pool layers. The 3x3/pad-1 convolutions
    /// preserve size; each pool floors a halving and needs input >= 2.
    pub fn spatial_after_stages(&self) -> Result<(usize, usize)> {
        let (mut h, mut w) = self.input_hw;
        for (i, _) in self.stages.iter().enumerate() {
            if h < 2 || w < 2 {
                return Err(Error::InvalidConfig(format!(
                    "spatial collapse: stage {} pool sees {h}x{w} (input {}x{} too small \
                     for 5 halvings)",
                    i + 1,
                    self.input_hw.0,
                    self.input_hw.1
                )));
            }
            h /= 2;
            w /= 2;
        }
        Ok((h, w))
    }

    /// Flattened feature width entering the first FC layer.
    pub fn flat_dim(&self) -> Result<usize> {
        let (h, w) = self.spatial_after_stages()?;
        Ok(self.stages[4].1 * h * w)
    }

    pub fn descriptor(&self) -> String {
        let stages: Vec<String> = self
            .stages
            .iter()
            .map(|(n, c)| format!("{n}x{c}"))
            .collect();
        format!(
            "in={}x{}x{};stages={};fc={};drop={}",
            self.in_channels,
            self.input_hw.0,
            self.input_hw.1,
            stages.join(","),
            self.fc_dim,
            self.dropout_p
        )
    }
}

/// The style classifier: two convolutions (the second globally average
/// pooled), two dropout-regularized FC layers, and a style classifier.
#[derive(Debug, Clone)]
pub struct SwitchNetSpec {
    pub c1: usize,
    pub k1: usize,
    pub s1: usize,
    pub pad1: usize,
    pub c2: usize,
    pub fc_dim: usize,
    pub dropout_p: f64,
    pub in_channels: usize,
    pub num_styles: usize,
}

impl Default for SwitchNetSpec {
    fn default() -> Self {
        SwitchNetSpec {
            c1: 16,
            k1: 5,
            s1: 2,
            pad1: 2,
            c2: 32,
            fc_dim: 64,
            dropout_p: 0.5,
            in_channels: 3,
            num_styles: 2,
        }
    }
}

impl SwitchNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c1 == 0 || self.c2 == 0 || self.fc_dim == 0 || self.k1 == 0 || self.s1 == 0 {
            return Err(Error::InvalidConfig("switch spec has a zero dimension".into()));
        }
        if self.num_styles < 2 {
            return Err(Error::InvalidConfig(format!(
                "switch classifies between at least 2 styles, got {}",
                self.num_styles
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidConfig("switch dropout_p outside [0,1)".into()));
        }
        Ok(())
    }

    pub fn descriptor(&self) -> String {
        format!(
            "arch=switch;in={};conv1={}x{}s{}p{};conv2={}x3p1;fc={};drop={};styles={}",
            self.in_channels,
            self.c1,
            self.k1,
            self.s1,
            self.pad1,
            self.c2,
            self.fc_dim,
            self.dropout_p,
            self.num_styles
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorMode {
    /// Route by ground-truth style labels (ablation mode).
    Oracle,
    /// Route by the Switch classifier's predictions.
    Predicted,
}

impl SelectorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectorMode::Oracle => "oracle",
            SelectorMode::Predicted => "predicted",
        }
    }
}

/// Switched network: the first k conv stages are replicated per style into
/// router branches; stages k+1..5 and the FC head are shared.
#[derive(Debug, Clone)]
pub struct SwiDeNSpec {
    pub k: usize,
    /// Number of style branches. The experiments use 2 (Photo, Art); 1 is
    /// accepted so the single-branch network can be compared against the
    /// baseline, to which it must be exactly equivalent.
    pub num_styles: usize,
    pub backbone: MiniVggSpec,
    pub num_classes: usize,
    pub selector_mode: SelectorMode,
    pub switch_checkpoint: Option<PathBuf>,
    /// Learning-rate multiplier on the Art branch parameters. The full-scale
    /// recipe boosts the Art branch by 4; from-scratch desk runs keep 1, where
    /// a boosted branch diverges and drags the shared stages down with it.
    pub art_lr_scale: f64,
}

impl SwiDeNSpec {
    pub fn new(k: usize, num_styles: usize, backbone: MiniVggSpec, num_classes: usize) -> Self {
        SwiDeNSpec {
            k,
            num_styles,
            backbone,
            num_classes,
            selector_mode: SelectorMode::Oracle,
            switch_checkpoint: None,
            art_lr_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if !(1..=5).contains(&self.k) {
            return Err(Error::InvalidConfig(format!(
                "branch depth k must be in 1..=5, got {}",
                self.k
            )));
        }
        if self.num_styles == 0 {
            return Err(Error::InvalidConfig("num_styles must be at least 1".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if self.selector_mode == SelectorMode::Predicted && self.switch_checkpoint.is_none() {
            return Err(Error::InvalidConfig(
                "selector_mode=predicted requires a switch checkpoint".into(),
            ));
        }
        if !(self.art_lr_scale > 0.0 && self.art_lr_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "art_lr_scale must be positive, got {}",
                self.art_lr_scale
            )));
        }
        Ok(())
    }

    pub fn descriptor(&self) -> String {
        format!(
            "arch=swiden;k={};styles={};{};classes={}",
            self.k,
            self.num_styles,
            self.backbone.descriptor(),
            self.num_classes
        )
    }
}

/// Gradient reversal network: shared backbone, a label head, and a domain
/// head behind a GRL. Both losses are minimized; the GRL scales the domain
/// gradient by -lambda as it enters the shared layers.
#[derive(Debug, Clone)]
pub struct GrnSpec {
    pub lambda: f64,
    pub backbone: MiniVggSpec,
    pub num_classes: usize,
    pub num_styles: usize,
}

impl GrnSpec {
    pub fn new(lambda: f64, backbone: MiniVggSpec, num_classes: usize, num_styles: usize) -> Self {
        GrnSpec {
            lambda,
            backbone,
            num_classes,
            num_styles,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.num_classes == 0 || self.num_styles < 2 {
            return Err(Error::InvalidConfig(
                "grn needs num_classes >= 1 and num_styles >= 2".into(),
            ));
        }
        Ok(())
    }

    pub fn descriptor(&self) -> String {
        format!(
            "arch=grn;lambda={};styles={};{};classes={}",
            self.lambda,
            self.num_styles,
            self.backbone.descriptor(),
            self.num_classes
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_backbone_leaves_2x2_at_64_input() {
        let spec = MiniVggSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.spatial_after_stages().unwrap(), (2, 2));
        assert_eq!(spec.flat_dim().unwrap(), 64 * 4);
    }

    #[test]
    fn small_input_collapses_spatially() {
        let spec = MiniVggSpec {
            input_hw: (8, 8),
            ..MiniVggSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn backbone_requires_five_stages() {
        let spec = MiniVggSpec {
            stages: vec![(1, 8), (1, 16)],
            ..MiniVggSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn swiden_k_bounds_and_predicted_mode_checkpoint() {
        let bb = MiniVggSpec::default();
        assert!(SwiDeNSpec::new(0, 2, bb.clone(), 10).validate().is_err());
        assert!(SwiDeNSpec::new(6, 2, bb.clone(), 10).validate().is_err());
        assert!(SwiDeNSpec::new(4, 2, bb.clone(), 10).validate().is_ok());
        let mut spec = SwiDeNSpec::new(4, 2, bb, 10);
        spec.selector_mode = SelectorMode::Predicted;
        assert!(spec.validate().is_err());
        spec.switch_checkpoint = Some("switch.swck".into());
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn descriptors_distinguish_architectures() {
        let bb = MiniVggSpec::default();
        let a = SwiDeNSpec::new(3, 2, bb.clone(), 10).descriptor();
        let b = SwiDeNSpec::new(4, 2, bb.clone(), 10).descriptor();
        let c = GrnSpec::new(2.0, bb, 10, 2).descriptor();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert!(c.contains("lambda=2"));
    }

    #[test]
    fn grn_rejects_negative_lambda() {
        let bb = MiniVggSpec::default();
        assert!(GrnSpec::new(-1.0, bb.clone(), 10, 2).validate().is_err());
        assert!(GrnSpec::new(0.0, bb, 10, 2).validate().is_ok());
    }
}
