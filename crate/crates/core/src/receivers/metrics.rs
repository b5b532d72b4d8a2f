//! Channel branch metrics on the joint encoder+channel trellis.
//!
//! Each constituent decoder sees two received samples per step. Transmitted
//! symbols that influence those samples through ISI but are not determined by
//! the decoder's trellis transition are marginalized over `{-1, +1}`.

use crate::bcjr::{max_star, BranchMetricLattice, MaxStarMode};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trellis::{Symbol, Trellis, TrellisKind};
use crate::txchain::{ChannelModel, Interleaver, ViewStep};

/// Number of transitions of the 8-state joint trellis.
pub const JOINT_TRANSITIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderSide {
    First,
    Second,
}

impl DecoderSide {
    pub fn index(self) -> usize {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(Error::InvalidInput(format!("decoder index {i} (expected 1 or 2)"))),
        }
    }
}

/// Soft knowledge about the marginalized neighbour symbols, as LLRs
/// (`ln P(+1)/P(-1)`) in natural (transmit) time order.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborPriors {
    pub xs: Vec<f64>,
    pub xp1: Vec<f64>,
    pub xp2: Vec<f64>,
}

impl NeighborPriors {
    pub fn uniform(k: usize) -> Self {
        Self {
            xs: vec![0.0; k],
            xp1: vec![0.0; k],
            xp2: vec![0.0; k],
        }
    }
}

/// `ln P(x)` for a binary symbol with LLR `llr`.
#[inline]
fn log_prior(x: f64, llr: f64) -> f64 {
    // -ln(1 + e^{-x L})
    let z = -x * llr;
    if z > 0.0 {
        -(z + (-z).exp().ln_1p())
    } else {
        -z.exp().ln_1p()
    }
}

/// One unknown neighbour: its tap coefficient and optional prior LLR.
#[derive(Debug, Clone, Copy)]
struct Unknown {
    coef: f64,
    prior: Option<f64>,
}

/// `max*` over the unknowns of `-(y - known - sum coef*x)^2 / 2 sigma^2 (+ ln P(x))`.
fn marginal_obs(y: f64, known: f64, unknowns: &[Unknown], inv_2s2: f64, mode: MaxStarMode) -> f64 {
    let n = unknowns.len();
    let mut acc = f64::LOG_ZERO;
    for combo in 0..(1usize << n) {
        let mut mean = known;
        let mut lp = 0.0;
        for (j, u) in unknowns.iter().enumerate() {
            let x = if (combo >> j) & 1 == 1 { 1.0 } else { -1.0 };
            mean += u.coef * x;
            if let Some(l) = u.prior {
                lp += log_prior(x, l);
            }
        }
        let d = y - mean;
        acc = max_star(acc, -d * d * inv_2s2 + lp, mode);
    }
    acc
}

fn check_joint(trellis: &Trellis, ch: &ChannelModel) -> Result<()> {
    if trellis.kind() != TrellisKind::Joint || trellis.num_transitions() != JOINT_TRANSITIONS {
        return Err(Error::InvalidInput("joint metrics require the 8-state joint trellis".into()));
    }
    if ch.len() > 3 {
        return Err(Error::InvalidInput(format!(
            "joint trellis covers channels of length <= 3, got {}",
            ch.len()
        )));
    }
    Ok(())
}

#[inline]
fn sym(s: Symbol) -> f64 {
    f64::from(s)
}

/// Decoder-1 channel log-metrics for one step (no a priori term).
///
/// For step `k` the samples are `y^s_k` (stream index `3k`) and `y^p1_k`
/// (`3k+1`); the unknown neighbour is `x^p2_{k-1}` at stream index `3k-1`.
pub fn dec1_step_metrics(
    step: &ViewStep,
    ch: &ChannelModel,
    trellis: &Trellis,
    mode: MaxStarMode,
    prior_xp2_prev: Option<f64>,
) -> [f64; JOINT_TRANSITIONS] {
    let [ys, yp] = step.y;
    let first = step.index[0] == 0;
    let (h0, h1, h2) = (ch.tap(0), ch.tap(1), ch.tap(2));
    let inv_2s2 = 0.5 / ch.noise_variance;
    // the unknown enters y^s through h1 and y^p1 through h2
    let has_v = !first && ch.len() >= 2;
    let mut out = [0.0; JOINT_TRANSITIONS];
    for (id, slot) in out.iter_mut().enumerate() {
        let c = trellis.joint_context(id).expect("joint trellis");
        let xs = sym(c.xs);
        let base_s = h0 * xs + if first { 0.0 } else { h2 * sym(c.xp_prev) };
        let base_p = h0 * sym(c.xp) + h1 * xs;
        *slot = if has_v {
            let mut acc = f64::LOG_ZERO;
            for v in [-1.0, 1.0] {
                let ds = ys - base_s - h1 * v;
                let dp = yp - base_p - h2 * v;
                let mut m = -(ds * ds + dp * dp) * inv_2s2;
                if let Some(l) = prior_xp2_prev {
                    m += log_prior(v, l);
                }
                acc = max_star(acc, m, mode);
            }
            acc
        } else {
            let ds = ys - base_s;
            let dp = yp - base_p;
            -(ds * ds + dp * dp) * inv_2s2
        };
    }
    out
}

/// Priors used by decoder 2 for its four neighbour symbols.
#[derive(Debug, Clone, Copy, Default)]
pub struct Dec2StepPriors {
    /// `x^p2_{pi(k)-1}`, `x^p1_{pi(k)-1}`
    pub sys_neighbors: [Option<f64>; 2],
    /// `x^p1_k`, `x^s_k`
    pub parity_neighbors: [Option<f64>; 2],
}

/// Decoder-2 channel log-metrics for one step (no a priori term).
///
/// The samples are `y^s_{pi(k)}` (stream index `3 pi(k)`) and `y^p2_k`
/// (`3k+2`). The systematic sample's neighbours `x^p2_{pi(k)-1}`,
/// `x^p1_{pi(k)-1}` and the parity sample's neighbours `x^p1_k`, `x^s_k` are
/// marginalized independently per observation.
pub fn dec2_step_metrics(
    step: &ViewStep,
    ch: &ChannelModel,
    trellis: &Trellis,
    mode: MaxStarMode,
    priors: &Dec2StepPriors,
) -> [f64; JOINT_TRANSITIONS] {
    let [ys, yp] = step.y;
    let first = step.index[0] == 0;
    let (h0, h1, h2) = (ch.tap(0), ch.tap(1), ch.tap(2));
    let inv_2s2 = 0.5 / ch.noise_variance;

    let mut sys_unknowns = Vec::with_capacity(2);
    if !first {
        for (i, coef) in [h1, h2].into_iter().enumerate() {
            if ch.len() > i + 1 {
                sys_unknowns.push(Unknown {
                    coef,
                    prior: priors.sys_neighbors[i],
                });
            }
        }
    }
    let mut par_unknowns = Vec::with_capacity(2);
    for (i, coef) in [h1, h2].into_iter().enumerate() {
        if ch.len() > i + 1 {
            par_unknowns.push(Unknown {
                coef,
                prior: priors.parity_neighbors[i],
            });
        }
    }

    // both observation terms depend on the transition only through u' and x^p2
    let mut sys_term = [0.0; 2];
    for (b, slot) in sys_term.iter_mut().enumerate() {
        let x = if b == 1 { 1.0 } else { -1.0 };
        *slot = marginal_obs(ys, h0 * x, &sys_unknowns, inv_2s2, mode);
    }
    let mut par_term = [0.0; 2];
    for (b, slot) in par_term.iter_mut().enumerate() {
        let x = if b == 1 { 1.0 } else { -1.0 };
        *slot = marginal_obs(yp, h0 * x, &par_unknowns, inv_2s2, mode);
    }

    let mut out = [0.0; JOINT_TRANSITIONS];
    for (id, slot) in out.iter_mut().enumerate() {
        let c = trellis.joint_context(id).expect("joint trellis");
        *slot = sys_term[usize::from(c.xs > 0)] + par_term[usize::from(c.xp > 0)];
    }
    out
}

fn check_view(view: &[ViewStep], la: &[f64]) -> Result<()> {
    if view.len() != la.len() {
        return Err(Error::LengthMismatch {
            what: "a priori LLRs vs view",
            expected: view.len(),
            actual: la.len(),
        });
    }
    Ok(())
}

/// Adds `u * La_k / 2` (u in {-1, +1}) to every present transition.
pub fn add_apriori<F: Real>(lattice: &mut BranchMetricLattice<F>, trellis: &Trellis, la: &[F]) {
    let half = F::cst(0.5);
    for (k, &l) in la.iter().enumerate().take(lattice.steps()) {
        let row = lattice.row_mut(k);
        for (id, g) in row.iter_mut().enumerate() {
            if g.is_log_zero() {
                continue;
            }
            let input = trellis.transitions()[id].input;
            if input == 1 {
                *g += half * l;
            } else {
                *g -= half * l;
            }
        }
    }
}

/// Decoder-1 channel lattice with optional neighbour priors.
pub fn dec1_channel_lattice(
    view1: &[ViewStep],
    ch: &ChannelModel,
    trellis: &Trellis,
    mode: MaxStarMode,
    priors: Option<&NeighborPriors>,
) -> Result<BranchMetricLattice<f64>> {
    check_joint(trellis, ch)?;
    let mut lat = BranchMetricLattice::absent(view1.len(), JOINT_TRANSITIONS);
    for (k, step) in view1.iter().enumerate() {
        let prior = priors.filter(|_| k > 0).map(|p| p.xp2[k - 1]);
        lat.row_mut(k)
            .copy_from_slice(&dec1_step_metrics(step, ch, trellis, mode, prior));
    }
    Ok(lat)
}

/// Decoder-2 channel lattice with optional neighbour priors.
pub fn dec2_channel_lattice(
    view2: &[ViewStep],
    ch: &ChannelModel,
    trellis: &Trellis,
    interleaver: &Interleaver,
    mode: MaxStarMode,
    priors: Option<&NeighborPriors>,
) -> Result<BranchMetricLattice<f64>> {
    check_joint(trellis, ch)?;
    if view2.len() != interleaver.len() {
        return Err(Error::LengthMismatch {
            what: "decoder-2 view vs interleaver",
            expected: interleaver.len(),
            actual: view2.len(),
        });
    }
    let mut lat = BranchMetricLattice::absent(view2.len(), JOINT_TRANSITIONS);
    for (k, step) in view2.iter().enumerate() {
        let p = match priors {
            None => Dec2StepPriors::default(),
            Some(pr) => {
                let pk = interleaver.pi(k);
                let sys_neighbors = if pk > 0 {
                    [Some(pr.xp2[pk - 1]), Some(pr.xp1[pk - 1])]
                } else {
                    [None, None]
                };
                Dec2StepPriors {
                    sys_neighbors,
                    parity_neighbors: [Some(pr.xp1[k]), Some(pr.xs[k])],
                }
            }
        };
        lat.row_mut(k)
            .copy_from_slice(&dec2_step_metrics(step, ch, trellis, mode, &p));
    }
    Ok(lat)
}

/// Decoder-1 branch metrics including the a priori term.
pub fn joint_metrics_dec1(
    view1: &[ViewStep],
    ch: &ChannelModel,
    la: &[f64],
    trellis: &Trellis,
    mode: MaxStarMode,
) -> Result<BranchMetricLattice<f64>> {
    check_view(view1, la)?;
    let mut lat = dec1_channel_lattice(view1, ch, trellis, mode, None)?;
    add_apriori(&mut lat, trellis, la);
    Ok(lat)
}

/// Decoder-2 branch metrics including the a priori term.
pub fn joint_metrics_dec2(
    view2: &[ViewStep],
    ch: &ChannelModel,
    la: &[f64],
    trellis: &Trellis,
    interleaver: &Interleaver,
    mode: MaxStarMode,
) -> Result<BranchMetricLattice<f64>> {
    check_view(view2, la)?;
    let mut lat = dec2_channel_lattice(view2, ch, trellis, interleaver, mode, None)?;
    add_apriori(&mut lat, trellis, la);
    Ok(lat)
}

/// Source of `P(y_k | s', s)` for the 16 joint transitions, up to a per-step
/// positive factor.
pub trait BranchModel: Sync {
    fn branch_probs(&self, step: &ViewStep) -> Result<[f64; JOINT_TRANSITIONS]>;
}

/// Normalizes log-metrics into a probability vector.
pub fn normalize_log_probs(logs: &[f64; JOINT_TRANSITIONS]) -> [f64; JOINT_TRANSITIONS] {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; JOINT_TRANSITIONS];
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logs) {
        *o = (l - m).exp();
        total += *o;
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

/// Closed-form `P(y_k | s', s)` from channel knowledge, normalized over the
/// 16 transitions. This is the training label of the learned metric.
#[derive(Debug, Clone)]
pub struct AnalyticBranchModel {
    pub channel: ChannelModel,
    pub side: DecoderSide,
    trellis: Trellis,
}

impl AnalyticBranchModel {
    pub fn new(channel: ChannelModel, side: DecoderSide, trellis: &Trellis) -> Result<Self> {
        check_joint(trellis, &channel)?;
        Ok(Self {
            channel,
            side,
            trellis: trellis.clone(),
        })
    }
}

impl BranchModel for AnalyticBranchModel {
    fn branch_probs(&self, step: &ViewStep) -> Result<[f64; JOINT_TRANSITIONS]> {
        let logs = match self.side {
            DecoderSide::First => {
                dec1_step_metrics(step, &self.channel, &self.trellis, MaxStarMode::Exact, None)
            }
            DecoderSide::Second => dec2_step_metrics(
                step,
                &self.channel,
                &self.trellis,
                MaxStarMode::Exact,
                &Dec2StepPriors::default(),
            ),
        };
        Ok(normalize_log_probs(&logs))
    }
}

/// Smallest probability passed to `ln` when turning model outputs into metrics.
pub const PROB_FLOOR: f64 = 1e-30;

/// Channel lattice `ln max(P, floor)` from a branch model.
pub fn model_channel_lattice(
    view: &[ViewStep],
    model: &dyn BranchModel,
) -> Result<BranchMetricLattice<f64>> {
    let mut lat = BranchMetricLattice::absent(view.len(), JOINT_TRANSITIONS);
    for (k, step) in view.iter().enumerate() {
        let p = model.branch_probs(step)?;
        for (g, &pi) in lat.row_mut(k).iter_mut().zip(&p) {
            *g = pi.max(PROB_FLOOR).ln();
        }
    }
    Ok(lat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trellis::{build_joint_trellis, build_rsc_trellis, RscSpec};
    use approx::assert_abs_diff_eq;

    fn joint() -> Trellis {
        build_joint_trellis(&build_rsc_trellis(&RscSpec::default_turbo()).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_channel_has_no_marginalization() {
        let t = joint();
        let ch = ChannelModel::with_taps(vec![1.0], 0.7).unwrap();
        let step = ViewStep {
            y: [0.3, -1.2],
            index: [6, 7],
        };
        let m1 = dec1_step_metrics(&step, &ch, &t, MaxStarMode::Exact, None);
        let m2 = dec2_step_metrics(&step, &ch, &t, MaxStarMode::Exact, &Dec2StepPriors::default());
        for id in 0..16 {
            let c = t.joint_context(id).unwrap();
            let expect = -((0.3 - sym(c.xs)).powi(2) + (-1.2 - sym(c.xp)).powi(2)) / (2.0 * 0.7);
            assert_abs_diff_eq!(m1[id], expect, epsilon = 1e-12);
            assert_abs_diff_eq!(m2[id], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn equidistant_branches_add_ln2() {
        let t = joint();
        let ch = ChannelModel::with_taps(vec![1.0, 0.5, 0.25], 2.0).unwrap();
        let id = 5;
        let c = t.joint_context(id).unwrap();
        // centre each sample between its two v hypotheses
        let ys = sym(c.xs) + 0.25 * sym(c.xp_prev);
        let yp = sym(c.xp) + 0.5 * sym(c.xs);
        let step = ViewStep {
            y: [ys, yp],
            index: [3, 4],
        };
        let m = dec1_step_metrics(&step, &ch, &t, MaxStarMode::Exact, None);
        let common = -(0.5f64.powi(2) + 0.25f64.powi(2)) / (2.0 * 2.0);
        assert_abs_diff_eq!(m[id], common + 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn first_step_drops_isi() {
        let t = joint();
        let ch = ChannelModel::with_taps(vec![1.0, 0.5, 0.25], 1.0).unwrap();
        let step = ViewStep {
            y: [0.9, 0.1],
            index: [0, 1],
        };
        let m = dec1_step_metrics(&step, &ch, &t, MaxStarMode::Exact, None);
        for (id, &v) in m.iter().enumerate() {
            let c = t.joint_context(id).unwrap();
            let expect = -((0.9 - sym(c.xs)).powi(2) + (0.1 - sym(c.xp) - 0.5 * sym(c.xs)).powi(2)) / 2.0;
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_noise_leaves_only_apriori_differences() {
        let t = joint();
        let ch = ChannelModel::with_taps(vec![1.0, 0.37, 0.14], 1e12).unwrap();
        let il = Interleaver::identity(3).unwrap();
        let view: Vec<ViewStep> = (0..3)
            .map(|k| ViewStep {
                y: [0.4, -0.8],
                index: [3 * k, 3 * k + 2],
            })
            .collect();
        let la = [1.5, -0.4, 2.0];
        let lat = joint_metrics_dec2(&view, &ch, &la, &t, &il, MaxStarMode::Exact).unwrap();
        for k in 0..3 {
            let base = lat.get(k, 0) + la[k] / 2.0;
            for id in 0..16 {
                let u = if id % 2 == 1 { 1.0 } else { -1.0 };
                assert_abs_diff_eq!(lat.get(k, id) - u * la[k] / 2.0, base, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn analytic_probabilities_are_normalized() {
        let t = joint();
        let ch = ChannelModel::exponential(1.0, 3, 1.0).unwrap();
        for side in [DecoderSide::First, DecoderSide::Second] {
            let m = AnalyticBranchModel::new(ch.clone(), side, &t).unwrap();
            let p = m
                .branch_probs(&ViewStep {
                    y: [1.3, -0.2],
                    index: [9, 11],
                })
                .unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn log_prior_is_a_distribution() {
        for l in [-30.0, -2.0, 0.0, 0.5, 40.0] {
            let s = log_prior(1.0, l).exp() + log_prior(-1.0, l).exp();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(log_prior(1.0, l) - log_prior(-1.0, l), l, epsilon = 1e-9);
        }
    }

    #[test]
    fn rejects_long_channels_and_wrong_trellis() {
        let t = joint();
        let ch = ChannelModel::with_taps(vec![1.0, 0.5, 0.2, 0.1], 1.0).unwrap();
        assert!(dec1_channel_lattice(&[], &ch, &t, MaxStarMode::Exact, None).is_err());
        let rsc = build_rsc_trellis(&RscSpec::default_turbo()).unwrap();
        let ch = ChannelModel::with_taps(vec![1.0], 1.0).unwrap();
        assert!(dec1_channel_lattice(&[], &ch, &rsc, MaxStarMode::Exact, None).is_err());
        let view = [ViewStep {
            y: [0.0, 0.0],
            index: [0, 1],
        }];
        assert!(joint_metrics_dec1(&view, &ch, &[0.0, 0.0], &t, MaxStarMode::Exact).is_err());
    }
}
