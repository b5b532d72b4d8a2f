//! Iterative turbo-style message passing shared by all receivers.

use crate::bcjr::{known_state, llr_by, run_bcjr, BcjrConfig, BranchMetricLattice};
use crate::error::{Error, Result};
use crate::trellis::{bpsk, Emission, Trellis, TrellisKind};
use crate::txchain::{demux_views, ChannelModel, Interleaver, ReceivedSignal};

use super::detector::detect_symbols;
use super::metrics::{
    add_apriori, dec1_channel_lattice, dec2_channel_lattice, model_channel_lattice, BranchModel,
    DecoderSide, NeighborPriors,
};
use super::{DetectorOutput, ExtrinsicPolicy, ReceiverConfig, ReceiverMode, Trellises};

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Final a posteriori LLRs of the message bits (natural order).
    pub llr: Vec<f64>,
    /// Hard decisions, `1` where `llr >= 0`.
    pub bits: Vec<u8>,
    /// Decoder-1 total LLRs from the last iteration.
    pub dec1_llr: Vec<f64>,
    /// Final-decision LLRs after each iteration.
    pub iteration_llr: Vec<Vec<f64>>,
}

type ChannelFn<'a> = dyn Fn(DecoderSide, Option<&NeighborPriors>) -> Result<BranchMetricLattice<f64>> + 'a;

struct Schedule<'a> {
    trellis: &'a Trellis,
    interleaver: &'a Interleaver,
    cfg: &'a ReceiverConfig,
    /// Memoryless systematic LLRs in each decoder's own time order.
    systematic: Option<[Vec<f64>; 2]>,
}

/// Parity symbol emitted by a transition, for trellises that carry one.
fn parity_positive(trellis: &Trellis, id: usize) -> Option<bool> {
    match &trellis.transitions()[id].emitted {
        Emission::Code { parity, .. } => Some(*parity == 1),
        Emission::Joint(c) => Some(c.xp > 0),
        Emission::Window(_) => None,
    }
}

struct DecoderRun {
    total: Vec<f64>,
    extrinsic: Vec<f64>,
    parity: Option<Vec<f64>>,
}

impl Schedule<'_> {
    fn run_decoder(
        &self,
        channel: &BranchMetricLattice<f64>,
        la: &[f64],
        side: DecoderSide,
        want_parity: bool,
    ) -> Result<DecoderRun> {
        let t = self.trellis;
        let ns = t.num_states();
        let mut g = channel.clone();
        add_apriori(&mut g, t, la);
        let bc = BcjrConfig::with_mode(self.cfg.max_star);
        let res = run_bcjr(t, &g, &known_state(ns, 0), &self.cfg.terminal.vector(ns), &bc)?;
        let sys = match (&self.systematic, self.cfg.extrinsic) {
            (Some(s), ExtrinsicPolicy::PriorAndSystematic) => Some(&s[side.index() - 1]),
            _ => None,
        };
        let extrinsic = res
            .llr
            .iter()
            .enumerate()
            .map(|(k, &l)| l - la[k] - sys.map_or(0.0, |s| s[k]))
            .collect();
        let parity = if want_parity {
            Some(llr_by(t, &g, &res.alpha, &res.beta, self.cfg.max_star, |id| {
                parity_positive(t, id)
            })?)
        } else {
            None
        };
        Ok(DecoderRun {
            total: res.llr,
            extrinsic,
            parity,
        })
    }

    fn iterate(&self, channel: &ChannelFn<'_>) -> Result<DecodeOutput> {
        self.cfg.validate()?;
        let k = self.interleaver.len();
        let adaptive = self.cfg.neighbor_priors;
        let mut priors = adaptive.then(|| NeighborPriors::uniform(k));
        let mut lat1 = channel(DecoderSide::First, priors.as_ref())?;
        let mut lat2 = channel(DecoderSide::Second, priors.as_ref())?;
        let mut le2_nat = vec![0.0; k];
        let mut iteration_llr = Vec::with_capacity(self.cfg.iterations);
        let mut dec1_llr = Vec::new();
        for it in 0..self.cfg.iterations {
            if adaptive && it > 0 {
                lat1 = channel(DecoderSide::First, priors.as_ref())?;
            }
            let d1 = self.run_decoder(&lat1, &le2_nat, DecoderSide::First, adaptive)?;
            if let Some(p) = priors.as_mut() {
                p.xs.clone_from(&d1.total);
                p.xp1 = d1.parity.clone().unwrap_or_default();
                lat2 = channel(DecoderSide::Second, Some(p))?;
            }
            let la2 = self.interleaver.interleave(&d1.extrinsic);
            let d2 = self.run_decoder(&lat2, &la2, DecoderSide::Second, adaptive)?;
            if let Some(p) = priors.as_mut() {
                p.xp2 = d2.parity.clone().unwrap_or_default();
            }
            le2_nat = self.interleaver.deinterleave(&d2.extrinsic);
            iteration_llr.push(self.interleaver.deinterleave(&d2.total));
            dec1_llr = d1.total;
        }
        let llr = iteration_llr.last().cloned().unwrap_or_default();
        if llr.iter().any(|l| l.is_nan()) {
            return Err(Error::NonFiniteInput);
        }
        let bits = llr.iter().map(|&l| u8::from(l >= 0.0)).collect();
        Ok(DecodeOutput {
            llr,
            bits,
            dec1_llr,
            iteration_llr,
        })
    }
}

fn check_trellis(t: &Trellis, kind: TrellisKind) -> Result<()> {
    if t.kind() != kind {
        return Err(Error::InvalidInput(format!(
            "expected a {kind:?} trellis, got {:?}",
            t.kind()
        )));
    }
    Ok(())
}

/// Turbo decoder over soft symbol estimates `xhat` (multiplexed order) with
/// `Gamma = -((xhat_s - x_s)^2 + (xhat_p - x_p)^2) / 2 sigma^2 + u La / 2`.
pub fn turbo_decode(
    xhat: &[f64],
    noise_variance: f64,
    rsc: &Trellis,
    interleaver: &Interleaver,
    cfg: &ReceiverConfig,
) -> Result<DecodeOutput> {
    check_trellis(rsc, TrellisKind::Rsc)?;
    let k = interleaver.len();
    if xhat.len() != 3 * k {
        return Err(Error::LengthMismatch {
            what: "soft symbols vs 3K",
            expected: 3 * k,
            actual: xhat.len(),
        });
    }
    if noise_variance.is_nan() || noise_variance <= 0.0 {
        return Err(Error::InvalidInput("noise variance must be positive".into()));
    }
    let inv_2s2 = 0.5 / noise_variance;
    let sys_nat: Vec<f64> = (0..k).map(|i| xhat[3 * i]).collect();
    let sys_dec2 = interleaver.interleave(&sys_nat);
    let lattice = |sys: &[f64], parity_offset: usize| {
        BranchMetricLattice::from_fn(k, rsc.num_transitions(), |step, id| {
            let Emission::Code { systematic, parity } = rsc.transitions()[id].emitted else {
                unreachable!("rsc trellis emits code bits")
            };
            let ds = sys[step] - f64::from(bpsk(systematic));
            let dp = xhat[3 * step + parity_offset] - f64::from(bpsk(parity));
            -(ds * ds + dp * dp) * inv_2s2
        })
    };
    let lat1 = lattice(&sys_nat, 1);
    let lat2 = lattice(&sys_dec2, 2);
    let lc = 2.0 / noise_variance;
    let sched = Schedule {
        trellis: rsc,
        interleaver,
        cfg,
        systematic: Some([
            sys_nat.iter().map(|v| lc * v).collect(),
            sys_dec2.iter().map(|v| lc * v).collect(),
        ]),
    };
    sched.iterate(&|side, _| {
        Ok(match side {
            DecoderSide::First => lat1.clone(),
            DecoderSide::Second => lat2.clone(),
        })
    })
}

/// BCJR symbol detection followed by turbo decoding of the posterior means.
pub fn separate_receive(
    y: &ReceivedSignal,
    ch: &ChannelModel,
    trellises: &Trellises,
    interleaver: &Interleaver,
    cfg: &ReceiverConfig,
) -> Result<DecodeOutput> {
    let soft = detect_symbols(y, &trellises.channel, ch, cfg.max_star)?;
    let xhat = match cfg.detector_output {
        DetectorOutput::PosteriorMean => soft.xhat,
        DetectorOutput::HardDecision => soft.llr.iter().map(|&l| if l >= 0.0 { 1.0 } else { -1.0 }).collect(),
    };
    turbo_decode(&xhat, ch.noise_variance, &trellises.rsc, interleaver, cfg)
}

/// Joint detection and decoding with channel-model branch metrics.
pub fn joint_receive(
    y: &ReceivedSignal,
    ch: &ChannelModel,
    trellises: &Trellises,
    interleaver: &Interleaver,
    cfg: &ReceiverConfig,
) -> Result<DecodeOutput> {
    let t = &trellises.joint;
    check_trellis(t, TrellisKind::Joint)?;
    let (view1, view2) = demux_views(y, interleaver)?;
    let lc = 2.0 * ch.tap(0) / ch.noise_variance;
    let sched = Schedule {
        trellis: t,
        interleaver,
        cfg,
        systematic: Some([
            view1.iter().map(|s| lc * s.y[0]).collect(),
            view2.iter().map(|s| lc * s.y[0]).collect(),
        ]),
    };
    sched.iterate(&|side, priors| match side {
        DecoderSide::First => dec1_channel_lattice(&view1, ch, t, cfg.max_star, priors),
        DecoderSide::Second => dec2_channel_lattice(&view2, ch, t, interleaver, cfg.max_star, priors),
    })
}

/// Joint detection and decoding with learned branch probabilities.
///
/// The models see only the received samples, so their outputs are computed
/// once per codeword and reused across iterations. Neighbour priors do not
/// apply to this receiver.
pub fn joint_receive_nn(
    y: &ReceivedSignal,
    models: [&dyn BranchModel; 2],
    trellises: &Trellises,
    interleaver: &Interleaver,
    cfg: &ReceiverConfig,
) -> Result<DecodeOutput> {
    let t = &trellises.joint;
    check_trellis(t, TrellisKind::Joint)?;
    if cfg.extrinsic == ExtrinsicPolicy::PriorAndSystematic {
        return Err(Error::InvalidInput(
            "the learned receiver has no channel knowledge to form a systematic LLR".into(),
        ));
    }
    let (view1, view2) = demux_views(y, interleaver)?;
    let lat1 = model_channel_lattice(&view1, models[0])?;
    let lat2 = model_channel_lattice(&view2, models[1])?;
    let cfg = ReceiverConfig {
        neighbor_priors: false,
        ..*cfg
    };
    let sched = Schedule {
        trellis: t,
        interleaver,
        cfg: &cfg,
        systematic: None,
    };
    sched.iterate(&|side, _| {
        Ok(match side {
            DecoderSide::First => lat1.clone(),
            DecoderSide::Second => lat2.clone(),
        })
    })
}

/// Dispatches on `cfg.mode`. `models` is required for [`ReceiverMode::JointNn`].
pub fn receive(
    y: &ReceivedSignal,
    ch: &ChannelModel,
    models: Option<[&dyn BranchModel; 2]>,
    trellises: &Trellises,
    interleaver: &Interleaver,
    cfg: &ReceiverConfig,
) -> Result<DecodeOutput> {
    match cfg.mode {
        ReceiverMode::Separate => separate_receive(y, ch, trellises, interleaver, cfg),
        ReceiverMode::Joint => joint_receive(y, ch, trellises, interleaver, cfg),
        ReceiverMode::JointNn => {
            let m = models.ok_or(Error::MissingModel(1))?;
            joint_receive_nn(y, m, trellises, interleaver, cfg)
        }
    }
}
