//! Convolution blocks of the encoder.
//!
//! A block is conv → ReLU → conv → ReLU → instance norm → conv → ReLU. The
//! dense variant (CB) strides on its third convolution; the separable
//! variant (DSCB) keeps stride 1 everywhere and adds its input back.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::CB_STRIDES;
use crate::model::params::ParamStore;
use crate::tensor::ops::{self, Conv2dSpec, INSTANCE_NORM_EPS};
use crate::tensor::{Element, NdArray, Tensor};

#[derive(Debug, Clone)]
pub(crate) struct Conv {
    weight: usize,
    bias: usize,
    spec: Conv2dSpec,
}

impl Conv {
    pub(crate) fn build<E: Element, R: Rng + ?Sized>(
        store: &mut ParamStore<E>,
        rng: &mut R,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
    ) -> Self {
        let fan_in = cin * kernel.0 * kernel.1;
        let weight = store.register_fan_in_uniform(format!("{name}.weight"), &[cout, cin, kernel.0, kernel.1], fan_in, rng);
        let bias = store.register(format!("{name}.bias"), NdArray::zeros([cout]));
        Self { weight, bias, spec: Conv2dSpec::new(stride, (kernel.0 / 2, kernel.1 / 2)) }
    }

    pub(crate) fn forward<E: Element>(&self, x: &Tensor<E>, p: &[Tensor<E>]) -> Result<Tensor<E>> {
        ops::conv2d(x, &p[self.weight], Some(&p[self.bias]), self.spec)
    }
}

#[derive(Debug, Clone)]
struct SeparableConv {
    depthwise: usize,
    pointwise: usize,
    bias: usize,
    spec: Conv2dSpec,
}

impl SeparableConv {
    fn build<E: Element, R: Rng + ?Sized>(store: &mut ParamStore<E>, rng: &mut R, name: &str, channels: usize) -> Self {
        let depthwise = store.register_fan_in_uniform(format!("{name}.depthwise"), &[channels, 1, 3, 3], 9, rng);
        let pointwise =
            store.register_fan_in_uniform(format!("{name}.pointwise"), &[channels, channels, 1, 1], channels, rng);
        let bias = store.register(format!("{name}.bias"), NdArray::zeros([channels]));
        Self { depthwise, pointwise, bias, spec: Conv2dSpec::new((1, 1), (1, 1)) }
    }

    fn forward<E: Element>(&self, x: &Tensor<E>, p: &[Tensor<E>]) -> Result<Tensor<E>> {
        ops::depthwise_separable_conv(x, &p[self.depthwise], &p[self.pointwise], Some(&p[self.bias]), self.spec)
    }
}

#[derive(Debug, Clone)]
enum BlockConv {
    Dense(Conv),
    Separable(SeparableConv),
}

impl BlockConv {
    fn forward<E: Element>(&self, x: &Tensor<E>, p: &[Tensor<E>]) -> Result<Tensor<E>> {
        match self {
            BlockConv::Dense(c) => c.forward(x, p),
            BlockConv::Separable(c) => c.forward(x, p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Convolution block `CB_index`, `index` in `1..=6`.
    Convolution { index: usize },
    DepthwiseSeparable,
}

/// Dropout variant chosen for one block on one training pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutKind {
    Elementwise,
    Channel,
}

/// Training-time regularization state threaded through a forward pass.
pub struct ForwardCtx<'a, R: Rng + ?Sized> {
    pub training: bool,
    pub rng: Option<&'a mut R>,
    pub elem_p: f64,
    pub chan_p: f64,
}

impl<'a, R: Rng + ?Sized> ForwardCtx<'a, R> {
    pub fn eval() -> Self {
        Self { training: false, rng: None, elem_p: 0.0, chan_p: 0.0 }
    }

    pub fn train(rng: &'a mut R, elem_p: f64, chan_p: f64) -> Self {
        Self { training: true, rng: Some(rng), elem_p, chan_p }
    }

    /// Mix dropout: one of the three insertion points, element-wise or
    /// channel-wise with equal probability.
    fn draw(&mut self) -> Option<(usize, DropoutKind)> {
        if !self.training {
            return None;
        }
        let rng = self.rng.as_deref_mut()?;
        let point = rng.random_range(0..3);
        let kind = if rng.random_bool(0.5) { DropoutKind::Elementwise } else { DropoutKind::Channel };
        Some((point, kind))
    }

    fn apply<E: Element>(&mut self, x: Tensor<E>, kind: DropoutKind) -> Result<Tensor<E>> {
        let rng = self.rng.as_deref_mut().expect("training context has an rng");
        match kind {
            DropoutKind::Elementwise => ops::dropout_elementwise(&x, self.elem_p, true, rng),
            DropoutKind::Channel => ops::dropout_channel(&x, self.chan_p, true, rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    kind: BlockKind,
    convs: [BlockConv; 3],
    gamma: usize,
    beta: usize,
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn is_residual(&self) -> bool {
        self.kind == BlockKind::DepthwiseSeparable
    }

    pub fn forward<E: Element, R: Rng + ?Sized>(
        &self,
        x: &Tensor<E>,
        params: &[Tensor<E>],
        ctx: &mut ForwardCtx<'_, R>,
    ) -> Result<Tensor<E>> {
        let dmd = ctx.draw();
        let mut h = x.clone();
        for (point, conv) in self.convs.iter().enumerate() {
            if point == 2 {
                h = ops::instance_norm(&h, &params[self.gamma], &params[self.beta], INSTANCE_NORM_EPS)?;
            }
            h = ops::relu(&conv.forward(&h, params)?);
            if let Some((p, kind)) = dmd {
                if p == point {
                    h = ctx.apply(h, kind)?;
                }
            }
        }
        if self.is_residual() {
            h = ops::add(&h, x)?;
        }
        Ok(h)
    }
}

fn register_norm<E: Element>(store: &mut ParamStore<E>, name: &str, channels: usize) -> (usize, usize) {
    let gamma = store.register(format!("{name}.norm.gamma"), NdArray::ones([channels]));
    let beta = store.register(format!("{name}.norm.beta"), NdArray::zeros([channels]));
    (gamma, beta)
}

/// Convolution block `CB_index` (`1..=6`); the third convolution uses the
/// fixed stride schedule.
pub fn build_cb<E: Element, R: Rng + ?Sized>(
    store: &mut ParamStore<E>,
    rng: &mut R,
    index: usize,
    cin: usize,
    cout: usize,
) -> Result<Block> {
    if !(1..=6).contains(&index) {
        return Err(Error::InvalidArgument(format!("convolution block index {index} outside 1..=6")));
    }
    let name = format!("encoder.cb{index}");
    let c1 = Conv::build(store, rng, &format!("{name}.conv1"), cin, cout, (3, 3), (1, 1));
    let c2 = Conv::build(store, rng, &format!("{name}.conv2"), cout, cout, (3, 3), (1, 1));
    let (gamma, beta) = register_norm(store, &name, cout);
    let c3 = Conv::build(store, rng, &format!("{name}.conv3"), cout, cout, (3, 3), CB_STRIDES[index - 1]);
    Ok(Block {
        kind: BlockKind::Convolution { index },
        convs: [BlockConv::Dense(c1), BlockConv::Dense(c2), BlockConv::Dense(c3)],
        gamma,
        beta,
    })
}

/// Residual depthwise-separable block number `ordinal` (1-based).
pub fn build_dscb<E: Element, R: Rng + ?Sized>(
    store: &mut ParamStore<E>,
    rng: &mut R,
    ordinal: usize,
    channels: usize,
) -> Result<Block> {
    if channels == 0 {
        return Err(Error::InvalidArgument("separable block needs at least one channel".into()));
    }
    let name = format!("encoder.dscb{ordinal}");
    let c1 = SeparableConv::build(store, rng, &format!("{name}.conv1"), channels);
    let c2 = SeparableConv::build(store, rng, &format!("{name}.conv2"), channels);
    let (gamma, beta) = register_norm(store, &name, channels);
    let c3 = SeparableConv::build(store, rng, &format!("{name}.conv3"), channels);
    Ok(Block {
        kind: BlockKind::DepthwiseSeparable,
        convs: [BlockConv::Separable(c1), BlockConv::Separable(c2), BlockConv::Separable(c3)],
        gamma,
        beta,
    })
}
