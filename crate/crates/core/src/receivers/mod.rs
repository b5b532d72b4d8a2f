//! Receiver pipelines: separate detection + turbo decoding, the joint
//! detection/decoding BCJR receiver, and its learned-metric variant.

mod detector;
pub mod metrics;
mod pipeline;

use serde::{Deserialize, Serialize};

use crate::bcjr::{MaxStarMode, TerminalPolicy};
use crate::error::{Error, Result};
use crate::trellis::{build_channel_trellis, build_joint_trellis, build_rsc_trellis, RscSpec, Trellis};

pub use detector::{detect_symbols, detector_lattice, SoftSymbols};
pub use metrics::{
    AnalyticBranchModel, BranchModel, DecoderSide, NeighborPriors, JOINT_TRANSITIONS,
};
pub use pipeline::{
    joint_receive, joint_receive_nn, receive, separate_receive, turbo_decode, DecodeOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverMode {
    /// BCJR symbol detector followed by a standard turbo decoder.
    Separate,
    /// Joint detection and decoding with channel-model branch metrics.
    Joint,
    /// Joint detection and decoding with learned branch metrics.
    JointNn,
}

impl ReceiverMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Separate => "separate",
            Self::Joint => "joint",
            Self::JointNn => "joint-nn",
        }
    }
}

impl std::fmt::Display for ReceiverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ReceiverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separate" => Ok(Self::Separate),
            "joint" => Ok(Self::Joint),
            "joint-nn" => Ok(Self::JointNn),
            _ => Err(Error::InvalidInput(format!("unknown receiver mode '{s}'"))),
        }
    }
}

/// What is removed from a decoder's total LLR before it is handed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrinsicPolicy {
    /// `Le = L - La`
    PriorOnly,
    /// `Le = L - La - Lc`, with `Lc` the memoryless systematic channel LLR.
    PriorAndSystematic,
}

/// What the separate detector hands to the turbo decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorOutput {
    /// `tanh(L / 2)`
    #[default]
    PosteriorMean,
    /// `sign(L)`
    HardDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    pub iterations: usize,
    pub mode: ReceiverMode,
    pub max_star: MaxStarMode,
    pub terminal: TerminalPolicy,
    pub extrinsic: ExtrinsicPolicy,
    /// Replace the uniform marginalization of neighbour symbols in the joint
    /// metrics with soft estimates from the previous decoder passes.
    pub neighbor_priors: bool,
    /// Interface of the separate baseline.
    pub detector_output: DetectorOutput,
}

impl ReceiverConfig {
    pub fn new(mode: ReceiverMode) -> Self {
        Self {
            iterations: 6,
            mode,
            max_star: MaxStarMode::Exact,
            terminal: TerminalPolicy::Uniform,
            extrinsic: match mode {
                ReceiverMode::Separate => ExtrinsicPolicy::PriorAndSystematic,
                ReceiverMode::Joint | ReceiverMode::JointNn => ExtrinsicPolicy::PriorOnly,
            },
            neighbor_priors: false,
            detector_output: DetectorOutput::PosteriorMean,
        }
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iteration count must be >= 1".into()));
        }
        Ok(())
    }
}

/// The three trellises a receiver needs.
#[derive(Debug, Clone)]
pub struct Trellises {
    pub rsc: Trellis,
    pub channel: Trellis,
    pub joint: Trellis,
}

impl Trellises {
    pub fn new(spec: &RscSpec, channel_length: usize) -> Result<Self> {
        let rsc = build_rsc_trellis(spec)?;
        let joint = build_joint_trellis(&rsc)?;
        Ok(Self {
            channel: build_channel_trellis(channel_length)?,
            rsc,
            joint,
        })
    }

    /// Default RSC code with a channel trellis of the given length.
    pub fn standard(channel_length: usize) -> Result<Self> {
        Self::new(&RscSpec::default_turbo(), channel_length)
    }
}
