//! Builders for the four architectures. All weights are He-normal
//! (sigma = sqrt(2/fan_in)) with zero biases, drawn from the caller's rng
//! in a fixed order: conv stages shallow to deep, then FC layers, then any
//! auxiliary head. Branch copies replay the same rng state so every branch
//! starts bit-identical, and a single-branch switched network consumes
//! exactly the stream the baseline does.

use super::specs::{GrnSpec, MiniVggSpec, SwiDeNSpec, SwitchNetSpec};
use super::{ArchKind, Network};
use crate::error::Result;
use crate::layers::{
    Conv2d, Dropout, Fc, Flatten, GlobalAvgPool, Grl, Layer, MaxPool2d, Relu, RouterLayer,
    Sequential,
};
use crate::rng::Rng;

/// Style index conventionally assigned to Art (Photo is 0).
pub const ART_STYLE_INDEX: usize = 1;

/// One conv stage: `num_convs` 3x3/pad-1 convolutions with ReLU, then a
/// 2x2/stride-2 max pool. Returns the stage's output channel count.
fn push_stage(
    layers: &mut Vec<Box<dyn Layer>>,
    prefix: &str,
    stage_no: usize,
    num_convs: usize,
    mut in_c: usize,
    out_c: usize,
    rng: &mut Rng,
) -> usize {
    for j in 1..=num_convs {
        let name = format!("{prefix}stage{stage_no}.conv{j}");
        layers.push(Box::new(Conv2d::new(&name, in_c, out_c, 3, 1, 1, rng)));
        layers.push(Box::new(Relu::new(format!("{name}.relu"))));
        in_c = out_c;
    }
    layers.push(Box::new(MaxPool2d::new(
        format!("{prefix}stage{stage_no}.pool"),
        2,
        2,
    )));
    out_c
}

/// Conv stages `from..=to` (1-based) of the backbone.
fn push_stages(
    layers: &mut Vec<Box<dyn Layer>>,
    prefix: &str,
    spec: &MiniVggSpec,
    from: usize,
    to: usize,
    rng: &mut Rng,
) {
    let mut in_c = if from == 1 {
        spec.in_channels
    } else {
        spec.stages[from - 2].1
    };
    for s in from..=to {
        let (n, c) = spec.stages[s - 1];
        in_c = push_stage(layers, prefix, s, n, in_c, c, rng);
    }
}

/// Flatten + fc6/fc7 with ReLU and dropout, the shared classifier neck.
fn push_fc_neck(layers: &mut Vec<Box<dyn Layer>>, spec: &MiniVggSpec, rng: &mut Rng) -> Result<()> {
    let flat = spec.flat_dim()?;
    layers.push(Box::new(Flatten::new("head.flatten")));
    layers.push(Box::new(Fc::new("head.fc6", flat, spec.fc_dim, rng)));
    layers.push(Box::new(Relu::new("head.fc6.relu")));
    layers.push(Box::new(Dropout::new("head.fc6.drop", spec.dropout_p)));
    layers.push(Box::new(Fc::new("head.fc7", spec.fc_dim, spec.fc_dim, rng)));
    layers.push(Box::new(Relu::new("head.fc7.relu")));
    layers.push(Box::new(Dropout::new("head.fc7.drop", spec.dropout_p)));
    Ok(())
}

pub fn build_baseline(spec: &MiniVggSpec, num_classes: usize, rng: &mut Rng) -> Result<Network> {
    spec.validate()?;
    let mut layers: Vec<Box<dyn Layer>> = vec![];
    push_stages(&mut layers, "", spec, 1, 5, rng);
    push_fc_neck(&mut layers, spec, rng)?;
    let trunk = Sequential::new("trunk", layers);
    let label_head = Sequential::new(
        "label_head",
        vec![Box::new(Fc::new("head.cls", spec.fc_dim, num_classes, rng)) as Box<dyn Layer>],
    );
    Ok(Network {
        kind: ArchKind::Baseline,
        spec_string: format!("arch=baseline;{};classes={num_classes}", spec.descriptor()),
        router: None,
        trunk,
        label_head,
        style_head: None,
        style_grad_scale: 1.0,
    })
}

pub fn build_swiden(spec: &SwiDeNSpec, rng: &mut Rng) -> Result<Network> {
    spec.validate()?;
    let bb = &spec.backbone;

    // Every branch replays the same rng state, so branches start
    // bit-identical and the stream advances exactly once overall.
    let branch_start = rng.clone();
    let mut branches = Vec::with_capacity(spec.num_styles);
    let mut after_branch = rng.clone();
    for s in 0..spec.num_styles {
        let mut branch_rng = branch_start.clone();
        let mut layers: Vec<Box<dyn Layer>> = vec![];
        push_stages(&mut layers, &format!("branch{s}."), bb, 1, spec.k, &mut branch_rng);
        let mut branch = Sequential::new(format!("branch{s}"), layers);
        if s == ART_STYLE_INDEX {
            for p in branch.params_mut() {
                p.lr_scale = spec.art_lr_scale;
            }
        }
        branches.push(branch);
        after_branch = branch_rng;
    }
    *rng = after_branch;

    let mut layers: Vec<Box<dyn Layer>> = vec![];
    if spec.k < 5 {
        push_stages(&mut layers, "shared.", bb, spec.k + 1, 5, rng);
    }
    push_fc_neck(&mut layers, bb, rng)?;
    let trunk = Sequential::new("trunk", layers);
    let label_head = Sequential::new(
        "label_head",
        vec![Box::new(Fc::new("head.cls", bb.fc_dim, spec.num_classes, rng)) as Box<dyn Layer>],
    );
    Ok(Network {
        kind: ArchKind::Swiden {
            k: spec.k,
            num_styles: spec.num_styles,
        },
        spec_string: spec.descriptor(),
        router: Some(RouterLayer::new("router", branches)),
        trunk,
        label_head,
        style_head: None,
        style_grad_scale: 1.0,
    })
}

pub fn build_grn(spec: &GrnSpec, rng: &mut Rng) -> Result<Network> {
    spec.validate()?;
    let bb = &spec.backbone;
    let mut layers: Vec<Box<dyn Layer>> = vec![];
    push_stages(&mut layers, "", bb, 1, 5, rng);
    push_fc_neck(&mut layers, bb, rng)?;
    let trunk = Sequential::new("trunk", layers);
    let label_head = Sequential::new(
        "label_head",
        vec![Box::new(Fc::new("head.cls", bb.fc_dim, spec.num_classes, rng)) as Box<dyn Layer>],
    );
    // Domain head params draw after the label head so adding the head never
    // shifts the backbone's init stream.
    let style_head = Sequential::new(
        "style_head",
        vec![
            Box::new(Grl::new("domain.grl", spec.lambda)) as Box<dyn Layer>,
            Box::new(Fc::new("domain.fc1", bb.fc_dim, bb.fc_dim, rng)),
            Box::new(Relu::new("domain.fc1.relu")),
            Box::new(Fc::new("domain.cls", bb.fc_dim, spec.num_styles, rng)),
        ],
    );
    Ok(Network {
        kind: ArchKind::Grn {
            lambda: spec.lambda,
        },
        spec_string: spec.descriptor(),
        router: None,
        trunk,
        label_head,
        style_head: Some(style_head),
        style_grad_scale: 1.0,
    })
}

pub fn build_switch_net(spec: &SwitchNetSpec, rng: &mut Rng) -> Result<Network> {
    spec.validate()?;
    let trunk = Sequential::new(
        "trunk",
        vec![
            Box::new(Conv2d::new(
                "conv1",
                spec.in_channels,
                spec.c1,
                spec.k1,
                spec.s1,
                spec.pad1,
                rng,
            )) as Box<dyn Layer>,
            Box::new(Relu::new("conv1.relu")),
            Box::new(MaxPool2d::new("pool1", 2, 2)),
            Box::new(Conv2d::new("conv2", spec.c1, spec.c2, 3, 1, 1, rng)),
            Box::new(Relu::new("conv2.relu")),
            Box::new(GlobalAvgPool::new("gap")),
            Box::new(Fc::new("fc1", spec.c2, spec.fc_dim, rng)),
            Box::new(Relu::new("fc1.relu")),
            Box::new(Dropout::new("fc1.drop", spec.dropout_p)),
            Box::new(Fc::new("fc2", spec.fc_dim, spec.fc_dim, rng)),
            Box::new(Relu::new("fc2.relu")),
            Box::new(Dropout::new("fc2.drop", spec.dropout_p)),
        ],
    );
    let label_head = Sequential::new(
        "label_head",
        vec![Box::new(Fc::new("cls", spec.fc_dim, spec.num_styles, rng)) as Box<dyn Layer>],
    );
    Ok(Network {
        kind: ArchKind::Switch,
        spec_string: spec.descriptor(),
        router: None,
        trunk,
        label_head,
        style_head: None,
        style_grad_scale: 1.0,
    })
}
