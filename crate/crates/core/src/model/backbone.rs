//! Convolutional feature extractors with their classifier layers removed.
//!
//! Variable names follow the torchvision state-dict layout so exported
//! ImageNet weights load without renaming.

use candle_core::{Module, ModuleT, Result, Tensor};
use candle_nn::{batch_norm, conv2d, BatchNorm, BatchNormConfig, Conv2d, Conv2dConfig, VarBuilder};

/// Conv (no bias) + batch norm + ReLU, with independent kernel and padding
/// per axis.
#[derive(Debug, Clone)]
struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm,
    pad: (usize, usize),
}

impl ConvBn {
    fn new(
        vb: VarBuilder,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        pad: (usize, usize),
        stride: usize,
    ) -> Result<Self> {
        let weight = vb.pp("conv").get_with_hints(
            (c_out, c_in, kernel.0, kernel.1),
            "weight",
            candle_nn::init::DEFAULT_KAIMING_NORMAL,
        )?;
        let square_pad = if pad.0 == pad.1 { pad.0 } else { 0 };
        let cfg = Conv2dConfig {
            padding: square_pad,
            stride,
            ..Default::default()
        };
        let conv = Conv2d::new(weight, None, cfg);
        let bn_cfg = BatchNormConfig {
            eps: 1e-3,
            ..Default::default()
        };
        let bn = batch_norm(c_out, bn_cfg, vb.pp("bn"))?;
        let pad = if pad.0 == pad.1 { (0, 0) } else { pad };
        Ok(Self { conv, bn, pad })
    }

    fn square(vb: VarBuilder, c_in: usize, c_out: usize, k: usize, pad: usize, stride: usize) -> Result<Self> {
        Self::new(vb, c_in, c_out, (k, k), (pad, pad), stride)
    }
}

impl ModuleT for ConvBn {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        let xs = match self.pad {
            (0, 0) => xs.clone(),
            (ph, pw) => xs.pad_with_zeros(2, ph, ph)?.pad_with_zeros(3, pw, pw)?,
        };
        xs.apply(&self.conv)?.apply_t(&self.bn, train)?.relu()
    }
}

/// 3x3, stride 1, padding 1 average pool counting the zero padding.
fn avg_pool_3x3_same(xs: &Tensor) -> Result<Tensor> {
    xs.pad_with_zeros(2, 1, 1)?
        .pad_with_zeros(3, 1, 1)?
        .avg_pool2d_with_stride(3, 1)
}

fn max_pool_3x3_s2(xs: &Tensor) -> Result<Tensor> {
    xs.max_pool2d_with_stride(3, 2)
}

#[derive(Debug, Clone)]
struct InceptionA {
    b1: ConvBn,
    b5: [ConvBn; 2],
    b3: [ConvBn; 3],
    pool: ConvBn,
}

impl InceptionA {
    fn new(vb: VarBuilder, c_in: usize, c_pool: usize) -> Result<Self> {
        Ok(Self {
            b1: ConvBn::square(vb.pp("branch1x1"), c_in, 64, 1, 0, 1)?,
            b5: [
                ConvBn::square(vb.pp("branch5x5_1"), c_in, 48, 1, 0, 1)?,
                ConvBn::square(vb.pp("branch5x5_2"), 48, 64, 5, 2, 1)?,
            ],
            b3: [
                ConvBn::square(vb.pp("branch3x3dbl_1"), c_in, 64, 1, 0, 1)?,
                ConvBn::square(vb.pp("branch3x3dbl_2"), 64, 96, 3, 1, 1)?,
                ConvBn::square(vb.pp("branch3x3dbl_3"), 96, 96, 3, 1, 1)?,
            ],
            pool: ConvBn::square(vb.pp("branch_pool"), c_in, c_pool, 1, 0, 1)?,
        })
    }
}

fn chain(xs: &Tensor, layers: &[ConvBn], train: bool) -> Result<Tensor> {
    layers.iter().try_fold(xs.clone(), |acc, l| acc.apply_t(l, train))
}

impl ModuleT for InceptionA {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        let b1 = xs.apply_t(&self.b1, train)?;
        let b5 = chain(xs, &self.b5, train)?;
        let b3 = chain(xs, &self.b3, train)?;
        let bp = avg_pool_3x3_same(xs)?.apply_t(&self.pool, train)?;
        Tensor::cat(&[b1, b5, b3, bp], 1)
    }
}

#[derive(Debug, Clone)]
struct InceptionB {
    b3: ConvBn,
    b3dbl: [ConvBn; 3],
}

impl InceptionB {
    fn new(vb: VarBuilder, c_in: usize) -> Result<Self> {
        Ok(Self {
            b3: ConvBn::square(vb.pp("branch3x3"), c_in, 384, 3, 0, 2)?,
            b3dbl: [
                ConvBn::square(vb.pp("branch3x3dbl_1"), c_in, 64, 1, 0, 1)?,
                ConvBn::square(vb.pp("branch3x3dbl_2"), 64, 96, 3, 1, 1)?,
                ConvBn::square(vb.pp("branch3x3dbl_3"), 96, 96, 3, 0, 2)?,
            ],
        })
    }
}

impl ModuleT for InceptionB {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        let b3 = xs.apply_t(&self.b3, train)?;
        let b3dbl = chain(xs, &self.b3dbl, train)?;
        let bp = max_pool_3x3_s2(xs)?;
        Tensor::cat(&[b3, b3dbl, bp], 1)
    }
}

#[derive(Debug, Clone)]
struct InceptionC {
    b1: ConvBn,
    b7: [ConvBn; 3],
    b7dbl: [ConvBn; 5],
    pool: ConvBn,
}

impl InceptionC {
    fn new(vb: VarBuilder, c_in: usize, c7: usize) -> Result<Self> {
        let row = |vb: VarBuilder, i, o| ConvBn::new(vb, i, o, (1, 7), (0, 3), 1);
        let col = |vb: VarBuilder, i, o| ConvBn::new(vb, i, o, (7, 1), (3, 0), 1);
        Ok(Self {
            b1: ConvBn::square(vb.pp("branch1x1"), c_in, 192, 1, 0, 1)?,
            b7: [
                ConvBn::square(vb.pp("branch7x7_1"), c_in, c7, 1, 0, 1)?,
                row(vb.pp("branch7x7_2"), c7, c7)?,
                col(vb.pp("branch7x7_3"), c7, 192)?,
            ],
            b7dbl: [
                ConvBn::square(vb.pp("branch7x7dbl_1"), c_in, c7, 1, 0, 1)?,
                col(vb.pp("branch7x7dbl_2"), c7, c7)?,
                row(vb.pp("branch7x7dbl_3"), c7, c7)?,
                col(vb.pp("branch7x7dbl_4"), c7, c7)?,
                row(vb.pp("branch7x7dbl_5"), c7, 192)?,
            ],
            pool: ConvBn::square(vb.pp("branch_pool"), c_in, 192, 1, 0, 1)?,
        })
    }
}

impl ModuleT for InceptionC {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        let b1 = xs.apply_t(&self.b1, train)?;
        let b7 = chain(xs, &self.b7, train)?;
        let b7dbl = chain(xs, &self.b7dbl, train)?;
        let bp = avg_pool_3x3_same(xs)?.apply_t(&self.pool, train)?;
        Tensor::cat(&[b1, b7, b7dbl, bp], 1)
    }
}

#[derive(Debug, Clone)]
struct InceptionD {
    b3: [ConvBn; 2],
    b7x3: [ConvBn; 4],
}

impl InceptionD {
    fn new(vb: VarBuilder, c_in: usize) -> Result<Self> {
        Ok(Self {
            b3: [
                ConvBn::square(vb.pp("branch3x3_1"), c_in, 192, 1, 0, 1)?,
                ConvBn::square(vb.pp("branch3x3_2"), 192, 320, 3, 0, 2)?,
            ],
            b7x3: [
                ConvBn::square(vb.pp("branch7x7x3_1"), c_in, 192, 1, 0, 1)?,
                ConvBn::new(vb.pp("branch7x7x3_2"), 192, 192, (1, 7), (0, 3), 1)?,
                ConvBn::new(vb.pp("branch7x7x3_3"), 192, 192, (7, 1), (3, 0), 1)?,
                ConvBn::square(vb.pp("branch7x7x3_4"), 192, 192, 3, 0, 2)?,
            ],
        })
    }
}

impl ModuleT for InceptionD {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        let b3 = chain(xs, &self.b3, train)?;
        let b7x3 = chain(xs, &self.b7x3, train)?;
        let bp = max_pool_3x3_s2(xs)?;
        Tensor::cat(&[b3, b7x3, bp], 1)
    }
}

#[derive(Debug, Clone)]
struct InceptionE {
    b1: ConvBn,
    b3_1: ConvBn,
    b3_2a: ConvBn,
    b3_2b: ConvBn,
    b3dbl_1: ConvBn,
    b3dbl_2: ConvBn,
    b3dbl_3a: ConvBn,
    b3dbl_3b: ConvBn,
    pool: ConvBn,
}

impl InceptionE {
    fn new(vb: VarBuilder, c_in: usize) -> Result<Self> {
        Ok(Self {
            b1: ConvBn::square(vb.pp("branch1x1"), c_in, 320, 1, 0, 1)?,
            b3_1: ConvBn::square(vb.pp("branch3x3_1"), c_in, 384, 1, 0, 1)?,
            b3_2a: ConvBn::new(vb.pp("branch3x3_2a"), 384, 384, (1, 3), (0, 1), 1)?,
            b3_2b: ConvBn::new(vb.pp("branch3x3_2b"), 384, 384, (3, 1), (1, 0), 1)?,
            b3dbl_1: ConvBn::square(vb.pp("branch3x3dbl_1"), c_in, 448, 1, 0, 1)?,
            b3dbl_2: ConvBn::square(vb.pp("branch3x3dbl_2"), 448, 384, 3, 1, 1)?,
            b3dbl_3a: ConvBn::new(vb.pp("branch3x3dbl_3a"), 384, 384, (1, 3), (0, 1), 1)?,
            b3dbl_3b: ConvBn::new(vb.pp("branch3x3dbl_3b"), 384, 384, (3, 1), (1, 0), 1)?,
            pool: ConvBn::square(vb.pp("branch_pool"), c_in, 192, 1, 0, 1)?,
        })
    }
}

impl ModuleT for InceptionE {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        let b1 = xs.apply_t(&self.b1, train)?;
        let b3 = xs.apply_t(&self.b3_1, train)?;
        let b3 = Tensor::cat(&[b3.apply_t(&self.b3_2a, train)?, b3.apply_t(&self.b3_2b, train)?], 1)?;
        let d = xs.apply_t(&self.b3dbl_1, train)?.apply_t(&self.b3dbl_2, train)?;
        let d = Tensor::cat(&[d.apply_t(&self.b3dbl_3a, train)?, d.apply_t(&self.b3dbl_3b, train)?], 1)?;
        let bp = avg_pool_3x3_same(xs)?.apply_t(&self.pool, train)?;
        Tensor::cat(&[b1, b3, d, bp], 1)
    }
}

#[derive(Debug, Clone)]
enum InceptionBlock {
    A(InceptionA),
    B(InceptionB),
    C(InceptionC),
    D(InceptionD),
    E(InceptionE),
}

impl ModuleT for InceptionBlock {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            InceptionBlock::A(m) => m.forward_t(xs, train),
            InceptionBlock::B(m) => m.forward_t(xs, train),
            InceptionBlock::C(m) => m.forward_t(xs, train),
            InceptionBlock::D(m) => m.forward_t(xs, train),
            InceptionBlock::E(m) => m.forward_t(xs, train),
        }
    }
}

/// Inception-v3 up to the last mixed block; 2048 channels at 8x8 for a
/// 299x299 input.
#[derive(Debug, Clone)]
pub struct InceptionV3 {
    stem_a: [ConvBn; 3],
    stem_b: [ConvBn; 2],
    blocks: Vec<InceptionBlock>,
}

impl InceptionV3 {
    pub const FEATURES: usize = 2048;

    pub fn new(vb: VarBuilder) -> Result<Self> {
        use InceptionBlock::*;
        Ok(Self {
            stem_a: [
                ConvBn::square(vb.pp("Conv2d_1a_3x3"), 3, 32, 3, 0, 2)?,
                ConvBn::square(vb.pp("Conv2d_2a_3x3"), 32, 32, 3, 0, 1)?,
                ConvBn::square(vb.pp("Conv2d_2b_3x3"), 32, 64, 3, 1, 1)?,
            ],
            stem_b: [
                ConvBn::square(vb.pp("Conv2d_3b_1x1"), 64, 80, 1, 0, 1)?,
                ConvBn::square(vb.pp("Conv2d_4a_3x3"), 80, 192, 3, 0, 1)?,
            ],
            blocks: vec![
                A(InceptionA::new(vb.pp("Mixed_5b"), 192, 32)?),
                A(InceptionA::new(vb.pp("Mixed_5c"), 256, 64)?),
                A(InceptionA::new(vb.pp("Mixed_5d"), 288, 64)?),
                B(InceptionB::new(vb.pp("Mixed_6a"), 288)?),
                C(InceptionC::new(vb.pp("Mixed_6b"), 768, 128)?),
                C(InceptionC::new(vb.pp("Mixed_6c"), 768, 160)?),
                C(InceptionC::new(vb.pp("Mixed_6d"), 768, 160)?),
                C(InceptionC::new(vb.pp("Mixed_6e"), 768, 192)?),
                D(InceptionD::new(vb.pp("Mixed_7a"), 768)?),
                E(InceptionE::new(vb.pp("Mixed_7b"), 1280)?),
                E(InceptionE::new(vb.pp("Mixed_7c"), 2048)?),
            ],
        })
    }
}

impl ModuleT for InceptionV3 {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        let xs = chain(xs, &self.stem_a, train)?;
        let xs = max_pool_3x3_s2(&xs)?;
        let xs = chain(&xs, &self.stem_b, train)?;
        let xs = max_pool_3x3_s2(&xs)?;
        self.blocks.iter().try_fold(xs, |acc, b| acc.apply_t(b, train))
    }
}

/// Convolutional part of VGG-19 (the `features` module); 512 channels at
/// 7x7 for a 224x224 input.
#[derive(Debug, Clone)]
pub struct Vgg19 {
    stages: Vec<Vec<Conv2d>>,
}

impl Vgg19 {
    pub const FEATURES: usize = 512;

    pub fn new(vb: VarBuilder) -> Result<Self> {
        const STAGES: [(usize, usize, usize); 5] = [(3, 64, 2), (64, 128, 2), (128, 256, 4), (256, 512, 4), (512, 512, 4)];
        let cfg = Conv2dConfig {
            padding: 1,
            ..Default::default()
        };
        let features = vb.pp("features");
        let mut index = 0;
        let mut stages = Vec::new();
        for (c_in, c_out, convs) in STAGES {
            let mut layers = Vec::new();
            for i in 0..convs {
                let input = if i == 0 { c_in } else { c_out };
                layers.push(conv2d(input, c_out, 3, cfg, features.pp(index.to_string()))?);
                // conv, relu
                index += 2;
            }
            // max pool
            index += 1;
            stages.push(layers);
        }
        Ok(Self { stages })
    }
}

impl Module for Vgg19 {
    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let mut xs = xs.clone();
        for stage in &self.stages {
            for conv in stage {
                xs = xs.apply(conv)?.relu()?;
            }
            xs = xs.max_pool2d_with_stride(2, 2)?;
        }
        Ok(xs)
    }
}

/// Small randomly initialized convnet used for tests and smoke runs.
#[derive(Debug, Clone)]
pub struct ToyNet {
    convs: [Conv2d; 3],
}

impl ToyNet {
    pub const FEATURES: usize = 32;

    pub fn new(vb: VarBuilder) -> Result<Self> {
        let cfg = Conv2dConfig {
            padding: 1,
            ..Default::default()
        };
        Ok(Self {
            convs: [
                conv2d(3, 8, 3, cfg, vb.pp("conv1"))?,
                conv2d(8, 16, 3, cfg, vb.pp("conv2"))?,
                conv2d(16, Self::FEATURES, 3, cfg, vb.pp("conv3"))?,
            ],
        })
    }
}

impl Module for ToyNet {
    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let xs = xs.apply(&self.convs[0])?.relu()?.max_pool2d(2)?;
        let xs = xs.apply(&self.convs[1])?.relu()?.max_pool2d(2)?;
        xs.apply(&self.convs[2])?.relu()
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Backbone {
    InceptionV3(InceptionV3),
    Vgg19(Vgg19),
    Toy(ToyNet),
}

impl ModuleT for Backbone {
    fn forward_t(&self, xs: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            Backbone::InceptionV3(m) => m.forward_t(xs, train),
            Backbone::Vgg19(m) => m.forward(xs),
            Backbone::Toy(m) => m.forward(xs),
        }
    }
}
