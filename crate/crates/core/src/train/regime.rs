use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::Architecture;

/// The five training regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Encoder + vertical max pooling trained on line images.
    #[serde(rename = "pool-line-r")]
    PoolLineR,
    /// The paragraph network trained on line images.
    #[serde(rename = "span-line-ra")]
    SpanLineRA,
    /// The paragraph network trained on paragraphs from random weights.
    #[serde(rename = "span-scratch")]
    SpanScratch,
    /// Paragraph training initialized from a pool-line-r checkpoint.
    #[serde(rename = "span-pt-r")]
    SpanPtR,
    /// Paragraph training initialized from a span-line-ra checkpoint.
    #[serde(rename = "span-pt-ra")]
    SpanPtRA,
}

impl Regime {
    pub const ALL: [Regime; 5] = [Regime::PoolLineR, Regime::SpanLineRA, Regime::SpanScratch, Regime::SpanPtR, Regime::SpanPtRA];

    pub fn name(self) -> &'static str {
        match self {
            Regime::PoolLineR => "pool-line-r",
            Regime::SpanLineRA => "span-line-ra",
            Regime::SpanScratch => "span-scratch",
            Regime::SpanPtR => "span-pt-r",
            Regime::SpanPtRA => "span-pt-ra",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Regime::name).join(", ")
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Regime::PoolLineR => Architecture::PoolLine,
            _ => Architecture::Span,
        }
    }

    pub fn line_level(self) -> bool {
        matches!(self, Regime::PoolLineR | Regime::SpanLineRA)
    }

    pub fn requires_init(self) -> bool {
        matches!(self, Regime::SpanPtR | Regime::SpanPtRA)
    }

    /// Architecture the initialization checkpoint is expected to have.
    pub fn init_architecture(self) -> Option<Architecture> {
        match self {
            Regime::SpanPtR => Some(Architecture::PoolLine),
            Regime::SpanPtRA => Some(Architecture::Span),
            _ => None,
        }
    }

    /// 16 for line images, 4 for paragraphs.
    pub fn default_batch_size(self) -> usize {
        if self.line_level() {
            16
        } else {
            4
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown regime {s:?}; valid regimes: {}", Self::valid_names()))
    }
}
