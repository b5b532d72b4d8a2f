//! Transmit chain: message bits, rate-1/3 turbo encoding, BPSK mapping,
//! multiplexing and the ISI + AWGN channel.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRole};
use crate::trellis::{bpsk, Symbol, Trellis};

/// Noise variance for a given SNR in dB, with unit symbol energy.
pub fn snr_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// ISI tap vector plus AWGN variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub taps: Vec<f64>,
    pub decay_rate: Option<f64>,
    pub noise_variance: f64,
}

impl ChannelModel {
    /// Exponentially decaying profile `h_i = exp(-gamma * i)`, `i < len`.
    pub fn exponential(decay_rate: f64, len: usize, noise_variance: f64) -> Result<Self> {
        let taps = (0..len).map(|i| (-decay_rate * i as f64).exp()).collect();
        let mut ch = Self::with_taps(taps, noise_variance)?;
        ch.decay_rate = Some(decay_rate);
        Ok(ch)
    }

    pub fn with_taps(taps: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidInput("channel needs at least one tap".into()));
        }
        if !noise_variance.is_finite() || noise_variance <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("channel taps must be finite".into()));
        }
        Ok(Self {
            taps,
            decay_rate: None,
            noise_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Tap `i`, zero beyond the channel length.
    #[inline]
    pub fn tap(&self, i: usize) -> f64 {
        self.taps.get(i).copied().unwrap_or(0.0)
    }

    /// Same taps, different noise variance.
    pub fn at_sigma2(&self, noise_variance: f64) -> Result<Self> {
        let mut ch = Self::with_taps(self.taps.clone(), noise_variance)?;
        ch.decay_rate = self.decay_rate;
        Ok(ch)
    }

    /// Noiseless convolution; symbols before index 0 contribute nothing.
    pub fn convolve(&self, x: &[Symbol]) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                self.taps
                    .iter()
                    .enumerate()
                    .take(k + 1)
                    .map(|(i, h)| h * f64::from(x[k - i]))
                    .sum()
            })
            .collect()
    }
}

/// Random permutation shared by transmitter and receiver.
///
/// `interleave(x)[k] = x[forward[k]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interleaver {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Interleaver {
    pub fn from_permutation(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty permutation".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (k, &p) in forward.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(Error::InvalidInput("not a permutation".into()));
            }
            inverse[p] = k;
        }
        Ok(Self { forward, inverse })
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::from_permutation((0..k).collect())
    }

    /// Uniformly random permutation of `0..k`.
    pub fn random(k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("interleaver size must be >= 1".into()));
        }
        let mut rng = stream(seed, 0, StreamRole::Interleaver);
        let mut forward: Vec<usize> = (0..k).collect();
        forward.shuffle(&mut rng);
        Self::from_permutation(forward)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `pi(k)`.
    #[inline]
    pub fn pi(&self, k: usize) -> usize {
        self.forward[k]
    }

    #[inline]
    pub fn pi_inv(&self, k: usize) -> usize {
        self.inverse[k]
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.len(), "interleaver length");
        self.forward.iter().map(|&p| x[p]).collect()
    }

    pub fn deinterleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.len(), "interleaver length");
        self.inverse.iter().map(|&q| x[q]).collect()
    }
}

pub fn random_bits<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<u8> {
    (0..k).map(|_| rng.random_range(0..2u8)).collect()
}

/// `k` uniform message bits reproducible from `seed`.
pub fn gen_message(k: usize, seed: u64) -> Result<Vec<u8>> {
    if k == 0 {
        return Err(Error::InvalidInput("message length must be >= 1".into()));
    }
    Ok(random_bits(k, &mut stream(seed, 0, StreamRole::Message)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurboCodeword {
    pub xs: Vec<Symbol>,
    pub xp1: Vec<Symbol>,
    pub xp2: Vec<Symbol>,
}

impl TurboCodeword {
    pub fn k(&self) -> usize {
        self.xs.len()
    }

    /// `[xs_0, xp1_0, xp2_0, xs_1, ...]`.
    pub fn multiplexed(&self) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(3 * self.k());
        for k in 0..self.k() {
            out.extend_from_slice(&[self.xs[k], self.xp1[k], self.xp2[k]]);
        }
        out
    }

    pub fn demultiplex(x: &[Symbol]) -> Result<Self> {
        if x.is_empty() || !x.len().is_multiple_of(3) {
            return Err(Error::InvalidInput(format!(
                "stream length {} is not a positive multiple of 3",
                x.len()
            )));
        }
        let pick = |o: usize| x.iter().skip(o).step_by(3).copied().collect();
        Ok(Self {
            xs: pick(0),
            xp1: pick(1),
            xp2: pick(2),
        })
    }
}

/// Rate-1/3 unterminated turbo encoding with BPSK mapping.
pub fn turbo_encode(u: &[u8], rsc: &Trellis, interleaver: &Interleaver) -> Result<TurboCodeword> {
    if u.len() != interleaver.len() {
        return Err(Error::LengthMismatch {
            what: "message vs interleaver",
            expected: interleaver.len(),
            actual: u.len(),
        });
    }
    let (p1, _) = rsc.encode(u, 0)?;
    let (p2, _) = rsc.encode(&interleaver.interleave(u), 0)?;
    Ok(TurboCodeword {
        xs: u.iter().map(|&b| bpsk(b)).collect(),
        xp1: p1.into_iter().map(bpsk).collect(),
        xp2: p2.into_iter().map(bpsk).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub y: Vec<f64>,
}

impl ReceivedSignal {
    pub fn k(&self) -> usize {
        self.y.len() / 3
    }
}

/// `y_k = sum_i h_i x_{k-i} + w_k` with noise drawn from `rng`.
pub fn apply_channel_with<R: Rng + ?Sized>(
    x: &[Symbol],
    ch: &ChannelModel,
    rng: &mut R,
) -> ReceivedSignal {
    let sigma = ch.noise_variance.sqrt();
    let mut y = ch.convolve(x);
    for v in &mut y {
        let w: f64 = rng.sample(StandardNormal);
        *v += sigma * w;
    }
    ReceivedSignal { y }
}

pub fn apply_channel(x: &[Symbol], ch: &ChannelModel, seed: u64) -> ReceivedSignal {
    apply_channel_with(x, ch, &mut stream(seed, 0, StreamRole::ChannelNoise))
}

/// One decoder input: two received samples and their transmit-stream indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewStep {
    pub y: [f64; 2],
    pub index: [usize; 2],
}

/// Splits `y` into the decoder-1 view `(y^s_k, y^p1_k)` and the decoder-2 view
/// `(y^s_{pi(k)}, y^p2_k)`.
pub fn demux_views(
    y: &ReceivedSignal,
    interleaver: &Interleaver,
) -> Result<(Vec<ViewStep>, Vec<ViewStep>)> {
    if y.y.is_empty() || !y.y.len().is_multiple_of(3) {
        return Err(Error::InvalidInput(format!(
            "received length {} is not a positive multiple of 3",
            y.y.len()
        )));
    }
    let k = y.k();
    if k != interleaver.len() {
        return Err(Error::LengthMismatch {
            what: "received blocks vs interleaver",
            expected: interleaver.len(),
            actual: k,
        });
    }
    let view1 = (0..k)
        .map(|i| ViewStep {
            y: [y.y[3 * i], y.y[3 * i + 1]],
            index: [3 * i, 3 * i + 1],
        })
        .collect();
    let view2 = (0..k)
        .map(|i| {
            let p = interleaver.pi(i);
            ViewStep {
                y: [y.y[3 * p], y.y[3 * i + 2]],
                index: [3 * p, 3 * i + 2],
            }
        })
        .collect();
    Ok((view1, view2))
}

/// Rebuilds the received stream from the two views.
pub fn reassemble_views(view1: &[ViewStep], view2: &[ViewStep]) -> ReceivedSignal {
    let mut y = vec![0.0; 3 * view1.len()];
    for v in view1.iter().chain(view2) {
        for j in 0..2 {
            y[v.index[j]] = v.y[j];
        }
    }
    ReceivedSignal { y }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trellis::{build_rsc_trellis, RscSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rsc() -> Trellis {
        build_rsc_trellis(&RscSpec::default_turbo()).unwrap()
    }

    #[test]
    fn message_is_reproducible_and_balanced() {
        assert_eq!(gen_message(100, 5).unwrap(), gen_message(100, 5).unwrap());
        assert_eq!(gen_message(100, 5).unwrap().len(), 100);
        assert!(gen_message(0, 5).is_err());
        let bits = gen_message(100_000, 11).unwrap();
        let mean = bits.iter().map(|&b| f64::from(b)).sum::<f64>() / bits.len() as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
    }

    #[test]
    fn encoder_examples() {
        let il = Interleaver::identity(3).unwrap();
        let cw = turbo_encode(&[1, 1, 0], &rsc(), &il).unwrap();
        assert_eq!(cw.xp1, vec![1, -1, -1]);
        assert_eq!(cw.multiplexed().len(), 9);

        let il = Interleaver::random(50, 3).unwrap();
        let cw = turbo_encode(&[0; 50], &rsc(), &il).unwrap();
        assert!(cw.multiplexed().iter().all(|&s| s == -1));
        assert!(turbo_encode(&[0; 49], &rsc(), &il).is_err());
    }

    #[test]
    fn multiplex_order() {
        let cw = TurboCodeword {
            xs: vec![1, -1],
            xp1: vec![-1, -1],
            xp2: vec![1, 1],
        };
        assert_eq!(cw.multiplexed(), vec![1, -1, 1, -1, -1, 1]);
        assert_eq!(TurboCodeword::demultiplex(&cw.multiplexed()).unwrap(), cw);
        assert!(TurboCodeword::demultiplex(&[1, 1]).is_err());
    }

    #[test]
    fn channel_examples() {
        let ch = ChannelModel::exponential(1.0, 3, 1e-30).unwrap();
        assert_abs_diff_eq!(ch.taps[1], 0.36788, epsilon = 1e-5);
        assert_abs_diff_eq!(ch.taps[2], 0.13534, epsilon = 1e-5);
        assert_eq!(ch.taps[1], (-1f64).exp());
        let y = apply_channel(&[1, -1, 1], &ch, 0).y;
        let expect = [1.0, -0.63212, 0.76746];
        for (a, b) in y.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-5);
        }
        let ident = ChannelModel::with_taps(vec![1.0], 1e-30).unwrap();
        let y = apply_channel(&[1, -1, -1, 1], &ident, 4).y;
        for (a, b) in y.iter().zip([1.0, -1.0, -1.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert!(ChannelModel::with_taps(vec![1.0], 0.0).is_err());
        assert!(ChannelModel::with_taps(vec![], 1.0).is_err());
    }

    #[test]
    fn noise_has_requested_variance() {
        let ch = ChannelModel::with_taps(vec![1.0], 0.5).unwrap();
        let x = vec![1i8; 100_000];
        let y = apply_channel(&x, &ch, 9).y;
        let var = y.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((var - 0.5).abs() < 0.01, "{var}");
    }

    #[test]
    fn snr_mapping() {
        assert_eq!(snr_to_sigma2(0.0), 1.0);
        assert_abs_diff_eq!(snr_to_sigma2(10.0), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(snr_to_sigma2(-6.0), 3.98107, epsilon = 1e-5);
    }

    #[test]
    fn interleaver_roundtrip_and_determinism() {
        let il = Interleaver::random(37, 1).unwrap();
        let x: Vec<u32> = (100..137).collect();
        assert_eq!(il.deinterleave(&il.interleave(&x)), x);
        assert_eq!(il, Interleaver::random(37, 1).unwrap());
        assert!(Interleaver::from_permutation(vec![0, 0]).is_err());
        assert!(Interleaver::random(0, 1).is_err());
    }

    #[test]
    fn interleaver_first_entry_uniform() {
        // chi-square with 9 degrees of freedom; 1% critical value 21.666
        let k = 10;
        let n = 10_000;
        let mut counts = [0usize; 10];
        for seed in 0..n {
            counts[Interleaver::random(k, seed as u64).unwrap().pi(0)] += 1;
        }
        let e = n as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 21.666, "chi2 {chi2}");
    }

    #[test]
    fn views() {
        let y = ReceivedSignal {
            y: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        let (v1, v2) = demux_views(&y, &Interleaver::identity(2).unwrap()).unwrap();
        assert_eq!(v1.iter().map(|v| v.y).collect::<Vec<_>>(), vec![[1.0, 2.0], [4.0, 5.0]]);
        assert_eq!(v2.iter().map(|v| v.y).collect::<Vec<_>>(), vec![[1.0, 3.0], [4.0, 6.0]]);
        assert_eq!(reassemble_views(&v1, &v2), y);

        let rev = Interleaver::from_permutation(vec![1, 0]).unwrap();
        let (v1, v2) = demux_views(&y, &rev).unwrap();
        assert_eq!(v2[0].y[0], 4.0);
        assert_eq!(v2[1].y[0], 1.0);
        assert_eq!(reassemble_views(&v1, &v2), y);

        let bad = ReceivedSignal { y: vec![0.0; 5] };
        assert!(demux_views(&bad, &Interleaver::identity(2).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn encoding_is_linear(a in proptest::collection::vec(0u8..2, 24),
                              b in proptest::collection::vec(0u8..2, 24),
                              seed in any::<u64>()) {
            let il = Interleaver::random(24, seed).unwrap();
            let t = rsc();
            let c: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let bits = |cw: TurboCodeword| -> Vec<u8> {
                cw.multiplexed().into_iter().map(crate::trellis::bit_of).collect()
            };
            let ea = bits(turbo_encode(&a, &t, &il).unwrap());
            let eb = bits(turbo_encode(&b, &t, &il).unwrap());
            let ec = bits(turbo_encode(&c, &t, &il).unwrap());
            let xor: Vec<u8> = ea.iter().zip(&eb).map(|(x, y)| x ^ y).collect();
            prop_assert_eq!(ec, xor);
        }

        #[test]
        fn noiseless_channel_is_convolution(x in proptest::collection::vec(prop_oneof![Just(-1i8), Just(1i8)], 1..40),
                                            taps in proptest::collection::vec(-2.0f64..2.0, 1..5)) {
            let ch = ChannelModel::with_taps(taps.clone(), 1e-300).unwrap();
            let y = ch.convolve(&x);
            // direct full convolution, truncated to the block
            let mut full = vec![0.0; x.len() + taps.len()];
            for (i, &xi) in x.iter().enumerate() {
                for (j, &h) in taps.iter().enumerate() {
                    full[i + j] += h * f64::from(xi);
                }
            }
            for k in 0..x.len() {
                prop_assert!((y[k] - full[k]).abs() < 1e-12);
            }
        }
    }
}
