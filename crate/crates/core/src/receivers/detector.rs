//! Trellis-based MAP symbol detection over the ISI channel.

use crate::bcjr::{known_state, run_bcjr, uniform, BcjrConfig, BranchMetricLattice, MaxStarMode};
use crate::error::{Error, Result};
use crate::trellis::{Emission, Trellis, TrellisKind};
use crate::txchain::{ChannelModel, ReceivedSignal};

/// Detector output: per-symbol LLRs and posterior-mean symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSymbols {
    pub llr: Vec<f64>,
    /// `tanh(llr / 2)`, always within `[-1, 1]`.
    pub xhat: Vec<f64>,
}

/// `Gamma_k = -(y_k - sum_i h_i x_{k-i})^2 / 2 sigma^2`, dropping `x_{k-i}` for `k < i`.
pub fn detector_lattice(
    y: &ReceivedSignal,
    trellis: &Trellis,
    ch: &ChannelModel,
) -> Result<BranchMetricLattice<f64>> {
    if trellis.kind() != TrellisKind::Channel || trellis.state_bits() < ch.len() {
        return Err(Error::InvalidInput(format!(
            "detector needs a channel trellis of length >= {}",
            ch.len()
        )));
    }
    let inv_2s2 = 0.5 / ch.noise_variance;
    let nt = trellis.num_transitions();
    let mut lat = BranchMetricLattice::absent(y.y.len(), nt);
    for (k, &yk) in y.y.iter().enumerate() {
        let row = lat.row_mut(k);
        for (id, t) in trellis.transitions().iter().enumerate() {
            let Emission::Window(w) = &t.emitted else {
                unreachable!("channel trellis emits windows")
            };
            let mean: f64 = w
                .iter()
                .enumerate()
                .take(ch.len().min(k + 1))
                .map(|(i, &x)| ch.taps[i] * f64::from(x))
                .sum();
            let d = yk - mean;
            row[id] = -d * d * inv_2s2;
        }
    }
    Ok(lat)
}

/// Runs BCJR over the whole received stream and returns soft symbols.
pub fn detect_symbols(
    y: &ReceivedSignal,
    trellis: &Trellis,
    ch: &ChannelModel,
    mode: MaxStarMode,
) -> Result<SoftSymbols> {
    let lat = detector_lattice(y, trellis, ch)?;
    let ns = trellis.num_states();
    let llr = run_bcjr(
        trellis,
        &lat,
        &known_state(ns, 0),
        &uniform(ns),
        &BcjrConfig::with_mode(mode),
    )?
    .llr;
    let xhat = llr.iter().map(|l| (0.5 * l).tanh()).collect();
    Ok(SoftSymbols { llr, xhat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trellis::{bpsk, build_channel_trellis};
    use crate::txchain::apply_channel;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_detection_recovers_symbols() {
        let t = build_channel_trellis(3).unwrap();
        let ch = ChannelModel::exponential(1.0, 3, 1e-6).unwrap();
        let x: Vec<i8> = crate::txchain::gen_message(90, 3)
            .unwrap()
            .into_iter()
            .map(bpsk)
            .collect();
        let y = apply_channel(&x, &ch, 1);
        let soft = detect_symbols(&y, &t, &ch, MaxStarMode::Exact).unwrap();
        for (xh, &xi) in soft.xhat.iter().zip(&x) {
            assert_eq!(xh.signum(), f64::from(xi));
            assert!(xh.abs() <= 1.0);
        }
    }

    #[test]
    fn memoryless_channel_gives_closed_form() {
        let t = build_channel_trellis(1).unwrap();
        let ch = ChannelModel::with_taps(vec![1.0], 0.8).unwrap();
        let y = ReceivedSignal {
            y: vec![0.3, -1.1, 2.0, 0.05, -0.4, 0.9],
        };
        let soft = detect_symbols(&y, &t, &ch, MaxStarMode::Exact).unwrap();
        for (l, yk) in soft.llr.iter().zip(&y.y) {
            assert_abs_diff_eq!(*l, 2.0 * yk / 0.8, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_short_trellis() {
        let t = build_channel_trellis(2).unwrap();
        let ch = ChannelModel::exponential(1.0, 3, 1.0).unwrap();
        let y = ReceivedSignal { y: vec![0.0; 3] };
        assert!(detect_symbols(&y, &t, &ch, MaxStarMode::Exact).is_err());
    }
}
