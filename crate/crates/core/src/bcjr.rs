//! Log-domain BCJR (forward-backward) on an arbitrary [`Trellis`].
//!
//! Forward values `A_k(s)`, backward values `B_k(s)` and per-step branch
//! metrics `Gamma_k(s', s)` are natural logarithms of the probability-domain
//! quantities. Impossible events are stored as [`Real::LOG_ZERO`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::trellis::Trellis;

/// Jacobian logarithm variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxStarMode {
    /// `max(a, b) + ln(1 + e^{-|a-b|})`
    #[default]
    Exact,
    /// `max(a, b)`
    MaxLog,
}

/// `ln(e^a + e^b)` (exact) or `max(a, b)`.
#[inline]
pub fn max_star<F: Real>(a: F, b: F, mode: MaxStarMode) -> F {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    match mode {
        MaxStarMode::MaxLog => hi,
        MaxStarMode::Exact => {
            let d = hi - lo;
            // also catches lo = -inf (d = inf) and hi = lo = -inf (d = NaN)
            if d < F::cst(50.0) {
                hi + (-d).exp().ln_1p()
            } else {
                hi
            }
        }
    }
}

/// Folds [`max_star`] over an iterator; `LOG_ZERO` for an empty one.
pub fn max_star_all<F: Real>(values: impl IntoIterator<Item = F>, mode: MaxStarMode) -> F {
    values
        .into_iter()
        .fold(F::LOG_ZERO, |acc, v| max_star(acc, v, mode))
}

/// Boundary condition for the backward recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalPolicy {
    /// Every final state equally likely (unterminated trellis).
    #[default]
    Uniform,
    /// Trellis known to end in state 0.
    ZeroState,
}

impl TerminalPolicy {
    pub fn vector<F: Real>(self, num_states: usize) -> Vec<F> {
        match self {
            Self::Uniform => uniform(num_states),
            Self::ZeroState => known_state(num_states, 0),
        }
    }
}

/// Log vector with all mass on `state`.
pub fn known_state<F: Real>(num_states: usize, state: usize) -> Vec<F> {
    let mut v = vec![F::LOG_ZERO; num_states];
    v[state] = F::zero();
    v
}

pub fn uniform<F: Real>(num_states: usize) -> Vec<F> {
    vec![F::zero(); num_states]
}

/// `Gamma_k(t)` for steps `k` and transition ids `t = state * inputs + input`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMetricLattice<F> {
    steps: usize,
    num_transitions: usize,
    gamma: Vec<F>,
}

impl<F: Real> BranchMetricLattice<F> {
    /// Lattice with every transition absent.
    pub fn absent(steps: usize, num_transitions: usize) -> Self {
        Self {
            steps,
            num_transitions,
            gamma: vec![F::LOG_ZERO; steps * num_transitions],
        }
    }

    pub fn from_fn(steps: usize, num_transitions: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut gamma = Vec::with_capacity(steps * num_transitions);
        for k in 0..steps {
            for t in 0..num_transitions {
                gamma.push(f(k, t));
            }
        }
        Self {
            steps,
            num_transitions,
            gamma,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_transitions(&self) -> usize {
        self.num_transitions
    }

    #[inline]
    pub fn get(&self, step: usize, t: usize) -> F {
        self.gamma[step * self.num_transitions + t]
    }

    #[inline]
    pub fn set(&mut self, step: usize, t: usize, v: F) {
        self.gamma[step * self.num_transitions + t] = v;
    }

    #[inline]
    pub fn row(&self, step: usize) -> &[F] {
        &self.gamma[step * self.num_transitions..(step + 1) * self.num_transitions]
    }

    #[inline]
    pub fn row_mut(&mut self, step: usize) -> &mut [F] {
        &mut self.gamma[step * self.num_transitions..(step + 1) * self.num_transitions]
    }

    /// Adds `c` to every present transition at `step`.
    pub fn add_step_constant(&mut self, step: usize, c: F) {
        for g in self.row_mut(step) {
            if !g.is_log_zero() {
                *g += c;
            }
        }
    }
}

/// Per-step log table (`steps + 1` rows of `num_states`).
#[derive(Debug, Clone, PartialEq)]
pub struct LogTable<F> {
    num_states: usize,
    data: Vec<F>,
}

impl<F: Real> LogTable<F> {
    fn new(rows: usize, num_states: usize) -> Self {
        Self {
            num_states,
            data: vec![F::LOG_ZERO; rows * num_states],
        }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.num_states
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[F] {
        &self.data[k * self.num_states..(k + 1) * self.num_states]
    }

    #[inline]
    fn row_mut(&mut self, k: usize) -> &mut [F] {
        &mut self.data[k * self.num_states..(k + 1) * self.num_states]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BcjrConfig {
    pub mode: MaxStarMode,
    /// Subtract the per-step maximum from `A` and `B`.
    pub normalize: bool,
}

impl Default for BcjrConfig {
    fn default() -> Self {
        Self {
            mode: MaxStarMode::Exact,
            normalize: true,
        }
    }
}

impl BcjrConfig {
    pub fn with_mode(mode: MaxStarMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcjrResult<F> {
    /// `A_k`, row `k` is the forward value before step `k` (row 0 = init).
    pub alpha: LogTable<F>,
    /// `B_k`, row `K` is the terminal vector.
    pub beta: LogTable<F>,
    /// `L(u_k)`, positive favours input 1.
    pub llr: Vec<F>,
}

fn check_shapes<F: Real>(trellis: &Trellis, gamma: &BranchMetricLattice<F>, boundary: &[F]) -> Result<()> {
    if gamma.num_transitions() != trellis.num_transitions() {
        return Err(Error::LengthMismatch {
            what: "lattice transitions",
            expected: trellis.num_transitions(),
            actual: gamma.num_transitions(),
        });
    }
    if boundary.len() != trellis.num_states() {
        return Err(Error::LengthMismatch {
            what: "boundary vector",
            expected: trellis.num_states(),
            actual: boundary.len(),
        });
    }
    Ok(())
}

fn ensure_reachable<F: Real>(row: &[F], step: usize) -> Result<()> {
    let m = row.iter().copied().fold(F::LOG_ZERO, F::max);
    if m.is_log_zero() {
        return Err(Error::DegenerateLattice {
            step,
            reason: "no state has finite probability",
        });
    }
    Ok(())
}

/// Forward recursion `A_{k+1}(s) = max*_{s'} (A_k(s') + Gamma_k(s', s))`.
pub fn forward<F: Real>(
    trellis: &Trellis,
    gamma: &BranchMetricLattice<F>,
    init: &[F],
    cfg: &BcjrConfig,
) -> Result<LogTable<F>> {
    check_shapes(trellis, gamma, init)?;
    let k_steps = gamma.steps();
    let mut a = LogTable::new(k_steps + 1, trellis.num_states());
    a.row_mut(0).copy_from_slice(init);
    ensure_reachable(a.row_mut(0), 0)?;
    for k in 0..k_steps {
        let g = gamma.row(k);
        let (prev, next) = a.data.split_at_mut((k + 1) * a.num_states);
        let prev = &prev[k * trellis.num_states()..];
        let next = &mut next[..trellis.num_states()];
        for (id, t) in trellis.transitions().iter().enumerate() {
            let v = prev[t.from] + g[id];
            next[t.next] = max_star(next[t.next], v, cfg.mode);
        }
        finish_row(next, k, cfg)?;
    }
    Ok(a)
}

fn finish_row<F: Real>(row: &mut [F], step: usize, cfg: &BcjrConfig) -> Result<()> {
    ensure_reachable(row, step)?;
    if cfg.normalize {
        let m = row.iter().copied().fold(F::LOG_ZERO, F::max);
        for v in row.iter_mut() {
            if v.is_log_zero() {
                *v = F::LOG_ZERO;
            } else {
                *v -= m;
            }
        }
    }
    Ok(())
}

/// Backward recursion `B_k(s') = max*_s (B_{k+1}(s) + Gamma_k(s', s))`.
pub fn backward<F: Real>(
    trellis: &Trellis,
    gamma: &BranchMetricLattice<F>,
    terminal: &[F],
    cfg: &BcjrConfig,
) -> Result<LogTable<F>> {
    check_shapes(trellis, gamma, terminal)?;
    let k_steps = gamma.steps();
    let ns = trellis.num_states();
    let mut b = LogTable::new(k_steps + 1, ns);
    b.row_mut(k_steps).copy_from_slice(terminal);
    ensure_reachable(b.row_mut(k_steps), k_steps)?;
    for k in (0..k_steps).rev() {
        let g = gamma.row(k);
        let (cur, later) = b.data.split_at_mut((k + 1) * ns);
        let cur = &mut cur[k * ns..];
        let later = &later[..ns];
        for (id, t) in trellis.transitions().iter().enumerate() {
            let v = later[t.next] + g[id];
            cur[t.from] = max_star(cur[t.from], v, cfg.mode);
        }
        finish_row(cur, k, cfg)?;
    }
    Ok(b)
}

/// Log-ratio between the transitions where `partition(id)` is `Some(true)` and
/// `Some(false)`; `None` transitions are ignored.
pub fn llr_by<F: Real>(
    trellis: &Trellis,
    gamma: &BranchMetricLattice<F>,
    alpha: &LogTable<F>,
    beta: &LogTable<F>,
    mode: MaxStarMode,
    partition: impl Fn(usize) -> Option<bool>,
) -> Result<Vec<F>> {
    let k_steps = gamma.steps();
    if alpha.rows() != k_steps + 1 || beta.rows() != k_steps + 1 {
        return Err(Error::LengthMismatch {
            what: "forward/backward rows",
            expected: k_steps + 1,
            actual: alpha.rows().min(beta.rows()),
        });
    }
    let mut out = Vec::with_capacity(k_steps);
    for k in 0..k_steps {
        let g = gamma.row(k);
        let a = alpha.row(k);
        let b = beta.row(k + 1);
        let mut plus = F::LOG_ZERO;
        let mut minus = F::LOG_ZERO;
        for (id, t) in trellis.transitions().iter().enumerate() {
            let v = a[t.from] + g[id] + b[t.next];
            match partition(id) {
                Some(true) => plus = max_star(plus, v, mode),
                Some(false) => minus = max_star(minus, v, mode),
                None => {}
            }
        }
        if plus.is_log_zero() || minus.is_log_zero() {
            return Err(Error::DegenerateLattice {
                step: k,
                reason: "one side of the input partition is impossible",
            });
        }
        out.push(plus - minus);
    }
    Ok(out)
}

/// `L(u_k)` with `S+` = transitions driven by input 1.
pub fn llr<F: Real>(
    trellis: &Trellis,
    gamma: &BranchMetricLattice<F>,
    alpha: &LogTable<F>,
    beta: &LogTable<F>,
    mode: MaxStarMode,
) -> Result<Vec<F>> {
    let inputs = trellis.num_inputs();
    llr_by(trellis, gamma, alpha, beta, mode, |id| Some(id % inputs == 1))
}

pub fn run_bcjr<F: Real>(
    trellis: &Trellis,
    gamma: &BranchMetricLattice<F>,
    init: &[F],
    terminal: &[F],
    cfg: &BcjrConfig,
) -> Result<BcjrResult<F>> {
    let alpha = forward(trellis, gamma, init, cfg)?;
    let beta = backward(trellis, gamma, terminal, cfg)?;
    let llr = llr(trellis, gamma, &alpha, &beta, cfg.mode)?;
    Ok(BcjrResult { alpha, beta, llr })
}

/// Largest block length accepted by [`brute_force_posterior`].
pub const MAX_ENUMERATION_STEPS: usize = 20;

/// Exact LLRs by enumerating every input sequence from every initial state.
///
/// Path log-weights are `init(s_0) + sum_k Gamma_k + terminal(s_K)`; each LLR is
/// the log of the ratio of summed path probabilities, computed with a plain
/// shifted exponential sum.
pub fn brute_force_posterior<F: Real>(
    trellis: &Trellis,
    gamma: &BranchMetricLattice<F>,
    init: &[F],
    terminal: &[F],
) -> Result<Vec<F>> {
    check_shapes(trellis, gamma, init)?;
    check_shapes(trellis, gamma, terminal)?;
    let k_steps = gamma.steps();
    if k_steps > MAX_ENUMERATION_STEPS {
        return Err(Error::EnumerationTooLarge {
            steps: k_steps,
            max: MAX_ENUMERATION_STEPS,
        });
    }
    let inputs = trellis.num_inputs();
    // (weight, input sequence) for every path
    let mut paths: Vec<(F, u32)> = Vec::new();
    for (s0, &w0) in init.iter().enumerate() {
        if w0.is_log_zero() {
            continue;
        }
        for seq in 0..(1u32 << k_steps) {
            let mut s = s0;
            let mut w = w0;
            for k in 0..k_steps {
                let u = ((seq >> k) & 1) as usize;
                let id = s * inputs + u;
                w += gamma.get(k, id);
                s = trellis.transitions()[id].next;
            }
            w += terminal[s];
            paths.push((w, seq));
        }
    }
    let log_sum = |bit: u32, k: usize| -> F {
        let sel = || paths.iter().filter(move |(_, seq)| (seq >> k) & 1 == bit);
        let m = sel().map(|p| p.0).fold(F::neg_infinity(), F::max);
        let s: F = sel().map(|p| (p.0 - m).exp()).sum();
        m + s.ln()
    };
    Ok((0..k_steps).map(|k| log_sum(1, k) - log_sum(0, k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trellis::{build_channel_trellis, build_rsc_trellis, RscSpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rsc() -> Trellis {
        build_rsc_trellis(&RscSpec::default_turbo()).unwrap()
    }

    fn random_lattice(rng: &mut impl Rng, steps: usize, nt: usize, scale: f64) -> BranchMetricLattice<f64> {
        BranchMetricLattice::from_fn(steps, nt, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn max_star_values() {
        assert_eq!(max_star(0.0, f64::LOG_ZERO, MaxStarMode::Exact), 0.0);
        assert_eq!(max_star(0.0, f64::NEG_INFINITY, MaxStarMode::Exact), 0.0);
        assert_eq!(max_star(2.5, 2.5, MaxStarMode::Exact), 2.5 + 2f64.ln());
        assert_abs_diff_eq!(max_star(1.0, 0.0, MaxStarMode::Exact), 1.31326, epsilon = 1e-5);
        assert_eq!(max_star(1.0, 0.0, MaxStarMode::MaxLog), 1.0);
        assert_eq!(
            max_star(f64::NEG_INFINITY, f64::NEG_INFINITY, MaxStarMode::Exact),
            f64::NEG_INFINITY
        );
        assert_abs_diff_eq!(max_star(1.0f32, 0.0, MaxStarMode::Exact), 1.31326, epsilon = 1e-5);
    }

    #[test]
    fn single_step_forward() {
        let t = rsc();
        let g = BranchMetricLattice::from_fn(1, 8, |_, _| 0.0);
        let a = forward(&t, &g, &known_state(4, 0), &BcjrConfig::default()).unwrap();
        // from 00 only 00 and 10 are reachable
        assert_eq!(a.row(1), &[0.0, f64::LOG_ZERO, 0.0, f64::LOG_ZERO]);
    }

    fn prob_forward(t: &Trellis, g: &BranchMetricLattice<f64>, init: &[f64]) -> Vec<Vec<f64>> {
        let mut rows = vec![init.iter().map(|v| v.exp()).collect::<Vec<_>>()];
        for k in 0..g.steps() {
            let mut next = vec![0.0; t.num_states()];
            for (id, tr) in t.transitions().iter().enumerate() {
                next[tr.next] += rows[k][tr.from] * g.get(k, id).exp();
            }
            rows.push(next);
        }
        rows
    }

    fn prob_backward(t: &Trellis, g: &BranchMetricLattice<f64>, term: &[f64]) -> Vec<Vec<f64>> {
        let k_steps = g.steps();
        let mut rows = vec![vec![0.0; t.num_states()]; k_steps + 1];
        rows[k_steps] = term.iter().map(|v| v.exp()).collect();
        for k in (0..k_steps).rev() {
            for (id, tr) in t.transitions().iter().enumerate() {
                rows[k][tr.from] += rows[k + 1][tr.next] * g.get(k, id).exp();
            }
        }
        rows
    }

    fn assert_proportional(log_row: &[f64], prob_row: &[f64]) {
        let mut ratio = None;
        for (l, p) in log_row.iter().zip(prob_row) {
            if *p == 0.0 {
                assert!(l.is_log_zero());
                continue;
            }
            let r = l.exp() / p;
            match ratio {
                None => ratio = Some(r),
                Some(r0) => assert!((r / r0 - 1.0).abs() < 1e-10, "{r} vs {r0}"),
            }
        }
    }

    #[test]
    fn recursions_match_probability_domain() {
        let t = rsc();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_lattice(&mut rng, 6, 8, 2.0);
        let init = known_state(4, 0);
        let term = uniform(4);
        let cfg = BcjrConfig::default();
        let a = forward(&t, &g, &init, &cfg).unwrap();
        let b = backward(&t, &g, &term, &cfg).unwrap();
        let pa = prob_forward(&t, &g, &init);
        let pb = prob_backward(&t, &g, &term);
        for k in 0..=6 {
            assert_proportional(a.row(k), &pa[k]);
            assert_proportional(b.row(k), &pb[k]);
            let max = a.row(k).iter().copied().fold(f64::LOG_ZERO, f64::max);
            assert_eq!(max, 0.0);
        }
    }

    #[test]
    fn uniform_backward() {
        let t = rsc();
        let g = BranchMetricLattice::from_fn(5, 8, |_, _| 0.0);
        let b = backward(&t, &g, &uniform(4), &BcjrConfig::default()).unwrap();
        for k in 0..=5 {
            assert!(b.row(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_state_terminal_on_terminated_code() {
        let t = rsc();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_lattice(&mut rng, 6, 8, 1.0);
        let term = TerminalPolicy::ZeroState.vector::<f64>(4);
        let res = run_bcjr(&t, &g, &known_state(4, 0), &term, &BcjrConfig::default()).unwrap();
        let bf = brute_force_posterior(&t, &g, &known_state(4, 0), &term).unwrap();
        for (a, b) in res.llr.iter().zip(&bf) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let pb = prob_backward(&t, &g, &term);
        assert_eq!(pb[6], vec![1.0, 0.0, 0.0, 0.0]);
        assert!(res.beta.row(6)[1..].iter().all(|v| v.is_log_zero()));
    }

    #[test]
    fn single_step_llr() {
        let t = rsc();
        let (a, b) = (0.7, -1.3);
        let g = BranchMetricLattice::from_fn(1, 8, |_, id| match id {
            0 => b,
            1 => a,
            _ => f64::LOG_ZERO,
        });
        let res = run_bcjr(&t, &g, &known_state(4, 0), &uniform(4), &BcjrConfig::default()).unwrap();
        assert_abs_diff_eq!(res.llr[0], a - b, epsilon = 1e-12);
    }

    #[test]
    fn matches_enumeration_and_is_shift_invariant() {
        let t = rsc();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let steps = 1 + trial % 8;
            let g = random_lattice(&mut rng, steps, 8, 3.0);
            let init = known_state(4, 0);
            let res = run_bcjr(&t, &g, &init, &uniform(4), &BcjrConfig::default()).unwrap();
            let bf = brute_force_posterior(&t, &g, &init, &uniform(4)).unwrap();
            for (x, y) in res.llr.iter().zip(&bf) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
            let mut shifted = g.clone();
            for k in 0..steps {
                shifted.add_step_constant(k, rng.random_range(-50.0..50.0));
            }
            let res2 = run_bcjr(&t, &shifted, &init, &uniform(4), &BcjrConfig::default()).unwrap();
            for (x, y) in res.llr.iter().zip(&res2.llr) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
            let raw = BcjrConfig {
                normalize: false,
                ..BcjrConfig::default()
            };
            let res3 = run_bcjr(&t, &g, &init, &uniform(4), &raw).unwrap();
            for (x, y) in res.llr.iter().zip(&res3.llr) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn max_log_agrees_when_maximizers_dominate() {
        // Weights -40 * 2^j over distinct j make every partial path sum unique,
        // so each max* compares values at least 40 apart.
        use rand::seq::SliceRandom;
        let t = build_channel_trellis(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let steps = 3;
        let mut order: Vec<i32> = (0..(steps * 8) as i32).collect();
        order.shuffle(&mut rng);
        let g = BranchMetricLattice::from_fn(steps, 8, |k, id| -40.0 * 2f64.powi(order[k * 8 + id]));
        let init = known_state(4, 0);
        let exact = run_bcjr(&t, &g, &init, &uniform(4), &BcjrConfig::default()).unwrap();
        let approx = run_bcjr(&t, &g, &init, &uniform(4), &BcjrConfig::with_mode(MaxStarMode::MaxLog)).unwrap();
        for (x, y) in exact.llr.iter().zip(&approx.llr) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn brute_force_edge_cases() {
        let t = rsc();
        let g = BranchMetricLattice::from_fn(4, 8, |_, _| 0.0f64);
        let bf = brute_force_posterior(&t, &g, &known_state(4, 0), &uniform(4)).unwrap();
        assert!(bf.iter().all(|v| v.abs() < 1e-12));

        // single admissible path u = 1, 0, 1
        let path = [1u8, 0, 1];
        let mut g = BranchMetricLattice::<f64>::absent(3, 8);
        let mut s = 0;
        for (k, &u) in path.iter().enumerate() {
            g.set(k, s * 2 + u as usize, 0.0);
            s = t.next(s, u);
        }
        let bf = brute_force_posterior(&t, &g, &known_state(4, 0), &uniform(4)).unwrap();
        for (v, &u) in bf.iter().zip(&path) {
            assert!(v.is_finite());
            assert_eq!(*v > 0.0, u == 1);
        }
        assert!(matches!(
            run_bcjr(&t, &g, &known_state(4, 0), &uniform(4), &BcjrConfig::default()),
            Err(Error::DegenerateLattice { .. })
        ));

        let big = BranchMetricLattice::<f64>::from_fn(21, 8, |_, _| 0.0);
        assert!(matches!(
            brute_force_posterior(&t, &big, &known_state(4, 0), &uniform(4)),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn unreachable_lattice_is_an_error() {
        let t = rsc();
        let g = BranchMetricLattice::<f64>::absent(3, 8);
        assert!(matches!(
            forward(&t, &g, &known_state(4, 0), &BcjrConfig::default()),
            Err(Error::DegenerateLattice { step: 0, .. })
        ));
    }

    #[test]
    fn single_precision_engine() {
        let t = rsc();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g64 = random_lattice(&mut rng, 6, 8, 2.0);
        let g32 = BranchMetricLattice::from_fn(6, 8, |k, id| g64.get(k, id) as f32);
        let r64 = run_bcjr(&t, &g64, &known_state(4, 0), &uniform(4), &BcjrConfig::default()).unwrap();
        let r32 = run_bcjr(&t, &g32, &known_state(4, 0), &uniform(4), &BcjrConfig::default()).unwrap();
        for (a, b) in r64.llr.iter().zip(&r32.llr) {
            assert_abs_diff_eq!(*a, f64::from(*b), epsilon = 1e-4);
        }
    }
}
