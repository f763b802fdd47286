use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::blocks::{build_cb, build_dscb, Block, Conv, ForwardCtx};
use crate::model::config::{Architecture, ModelConfig, REDUCTION};
use crate::model::params::ParamStore;
use crate::tensor::ops;
use crate::tensor::{no_grad, Element, NdArray, Tensor};

/// Character scores for every lattice position.
///
/// `grid` is `[n, N+1, rows, cols]`; `flat` is its row-concatenated view
/// `[n, rows·cols, N+1]` where frame `t` is grid cell `(t / cols, t % cols)`.
#[derive(Debug, Clone)]
pub struct PredictionLattice<E: Element> {
    pub grid: Tensor<E>,
    pub flat: Tensor<E>,
    pub valid_lengths: Vec<usize>,
}

impl<E: Element> PredictionLattice<E> {
    pub fn batch(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn num_classes(&self) -> usize {
        self.grid.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.grid.shape()[2]
    }

    pub fn cols(&self) -> usize {
        self.grid.shape()[3]
    }

    pub fn frames(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Scores of sample `i` as `frames × classes`, row-major.
    pub fn sample_scores(&self, i: usize) -> &[E] {
        let len = self.frames() * self.num_classes();
        &self.flat.value().data()[i * len..(i + 1) * len]
    }
}

/// Encoder plus prediction head.
#[derive(Debug, Clone)]
pub struct SpanModel<E: Element> {
    architecture: Architecture,
    config: ModelConfig,
    params: ParamStore<E>,
    blocks: Vec<Block>,
    decoder: Conv,
}

impl<E: Element> SpanModel<E> {
    /// Builds a freshly initialized network; weights depend only on `seed`.
    pub fn new(architecture: Architecture, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let mut blocks = Vec::with_capacity(6 + config.dscb_count);
        let mut cin = config.input_channels;
        for (i, &cout) in config.cb_channels.iter().enumerate() {
            blocks.push(build_cb(&mut params, &mut rng, i + 1, cin, cout)?);
            cin = cout;
        }
        for i in 0..config.dscb_count {
            blocks.push(build_dscb(&mut params, &mut rng, i + 1, config.dscb_channels)?);
        }
        let decoder = Conv::build(
            &mut params,
            &mut rng,
            "decoder",
            config.feature_channels(),
            config.num_classes(),
            config.decoder_kernel,
            (1, 1),
        );
        Ok(Self { architecture, config, params, blocks, decoder })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    /// Same weights behind the other prediction head. Both heads have the
    /// same parameter layout.
    pub fn with_architecture(mut self, architecture: Architecture) -> Self {
        self.architecture = architecture;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<E> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<E> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn cast<F: Element>(&self) -> SpanModel<F> {
        SpanModel {
            architecture: self.architecture,
            config: self.config.clone(),
            params: self.params.cast(),
            blocks: self.blocks.clone(),
            decoder: self.decoder.clone(),
        }
    }

    fn check_input(&self, x: &Tensor<E>) -> Result<[usize; 4]> {
        let [n, c, h, w] = x.value().dims4("encoder")?;
        if c != self.config.input_channels {
            return Err(Error::shape(
                "encoder",
                format!("input has {c} channels, model expects {}", self.config.input_channels),
            ));
        }
        if h == 0 || w == 0 || h % REDUCTION.0 != 0 || w % REDUCTION.1 != 0 {
            return Err(Error::IndivisibleInput { height: h, width: w });
        }
        Ok([n, c, h, w])
    }

    /// `[n, C, H, W] -> [n, F, H/32, W/8]`.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        x: &Tensor<E>,
        params: &[Tensor<E>],
        ctx: &mut ForwardCtx<'_, R>,
    ) -> Result<Tensor<E>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(&h, params, ctx)?;
        }
        Ok(h)
    }

    /// Decoder on features: `[n, F, h, w] -> [n, N+1, h, w]`.
    pub fn decode(&self, features: &Tensor<E>, params: &[Tensor<E>]) -> Result<Tensor<E>> {
        let [_, c, ..] = features.value().dims4("decoder")?;
        if c != self.config.feature_channels() {
            return Err(Error::shape(
                "decoder",
                format!("features have {c} channels, expected {}", self.config.feature_channels()),
            ));
        }
        self.decoder.forward(features, params)
    }

    /// Full forward pass with explicitly bound parameters (see
    /// [`ParamStore::bind`]).
    pub fn forward_with<R: Rng + ?Sized>(
        &self,
        x: &Tensor<E>,
        params: &[Tensor<E>],
        ctx: &mut ForwardCtx<'_, R>,
    ) -> Result<PredictionLattice<E>> {
        let features = self.encode(x, params, ctx)?;
        let head_input = match self.architecture {
            Architecture::Span => features,
            Architecture::PoolLine => ops::adaptive_max_pool_vertical(&features)?,
        };
        let grid = self.decode(&head_input, params)?;
        let flat = ops::collapse_rows(&grid)?;
        let [n, _, rows, cols] = grid.value().dims4("lattice")?;
        Ok(PredictionLattice { grid, flat, valid_lengths: vec![rows * cols; n] })
    }

    /// Deterministic inference pass (no dropout, no graph).
    pub fn predict(&self, x: &NdArray<E>) -> Result<PredictionLattice<E>> {
        let _guard = no_grad();
        let params = self.params.bind(false);
        self.forward_with(&Tensor::constant(x.clone()), &params, &mut ForwardCtx::<ChaCha8Rng>::eval())
    }
}

/// Closed-form parameter count of a configuration.
pub fn parameter_census(config: &ModelConfig) -> usize {
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k + cout;
    let mut total = 0;
    let mut cin = config.input_channels;
    for &c in &config.cb_channels {
        total += conv(cin, c, 9) + conv(c, c, 9) + conv(c, c, 9) + 2 * c;
        cin = c;
    }
    let d = config.dscb_channels;
    total += config.dscb_count * (3 * (d * 9 + d * d + d) + 2 * d);
    let (kh, kw) = config.decoder_kernel;
    total += conv(config.feature_channels(), config.num_classes(), kh * kw);
    total
}
