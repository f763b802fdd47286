use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stride of the third convolution of each convolution block `CB_1..CB_6`.
pub const CB_STRIDES: [(usize, usize); 6] = [(1, 1), (2, 2), (2, 2), (2, 2), (2, 1), (2, 1)];

/// Overall encoder reduction `(vertical, horizontal)`.
pub const REDUCTION: (usize, usize) = (32, 8);

/// Which head sits on top of the shared encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// 2D lattice prediction followed by row concatenation.
    Span,
    /// Vertical adaptive max pooling before the prediction layer (line
    /// images only).
    PoolLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub cb_channels: [usize; 6],
    pub dscb_count: usize,
    pub dscb_channels: usize,
    pub decoder_kernel: (usize, usize),
    pub dropout_elem_p: f64,
    pub dropout_chan_p: f64,
    /// `N`; the decoder predicts `N + 1` classes.
    pub charset_size: usize,
}

impl ModelConfig {
    /// Full-size network: 32–512 channels and four separable blocks.
    pub fn full(charset_size: usize) -> Self {
        Self {
            input_channels: 3,
            cb_channels: [32, 64, 128, 256, 512, 512],
            dscb_count: 4,
            dscb_channels: 512,
            decoder_kernel: (5, 5),
            dropout_elem_p: 0.5,
            dropout_chan_p: 0.25,
            charset_size,
        }
    }

    /// Desk-scale network: 16–128 channels and one separable block.
    pub fn reduced(charset_size: usize) -> Self {
        Self {
            cb_channels: [16, 32, 64, 128, 128, 128],
            dscb_count: 1,
            dscb_channels: 128,
            ..Self::full(charset_size)
        }
    }

    pub fn feature_channels(&self) -> usize {
        self.cb_channels[5]
    }

    pub fn num_classes(&self) -> usize {
        self.charset_size + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_channels == 0 || self.cb_channels.contains(&0) {
            return fail("channel counts must be positive".into());
        }
        if self.dscb_count > 0 && self.dscb_channels != self.cb_channels[5] {
            return fail(format!(
                "separable blocks need {} channels to match CB_6 for the residual sum, got {}",
                self.cb_channels[5], self.dscb_channels
            ));
        }
        let (kh, kw) = self.decoder_kernel;
        if kh % 2 == 0 || kw % 2 == 0 {
            return fail(format!("decoder kernel {kh}x{kw} must be odd to preserve extents"));
        }
        for p in [self.dropout_elem_p, self.dropout_chan_p] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("dropout probability {p} outside [0, 1)"));
            }
        }
        if self.charset_size == 0 {
            return fail("charset must have at least one symbol".into());
        }
        Ok(())
    }
}

/// Analytic receptive field of one output cell along the vertical axis,
/// in input pixels, for the given architecture.
pub fn vertical_receptive_field(config: &ModelConfig) -> usize {
    let mut field = 1;
    let mut jump = 1;
    let mut layer = |kernel: usize, stride: usize| {
        field += (kernel - 1) * jump;
        jump *= stride;
    };
    for &(sv, _) in &CB_STRIDES {
        layer(3, 1);
        layer(3, 1);
        layer(3, sv);
    }
    for _ in 0..config.dscb_count {
        for _ in 0..3 {
            layer(3, 1);
        }
    }
    layer(config.decoder_kernel.0, 1);
    field
}
