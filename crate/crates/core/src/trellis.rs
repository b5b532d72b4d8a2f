//! State machines for the RSC encoder, the finite-memory ISI channel and the
//! joint encoder+channel receiver.
//!
//! State bit-string conventions:
//!
//! * RSC: register contents, newest register first (MSB = most recent).
//! * Channel: transmitted symbols oldest first, newest last, `-1 -> 0`,
//!   `+1 -> 1`. A transition shifts the new symbol in at the right.
//! * Joint: two RSC state bits followed by the input bit of the previous step,
//!   i.e. `s_k = (s_{k-1}^RSC, u_k)`.
//!
//! Transition ids are `state * num_inputs + input` throughout.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// BPSK symbol, `0 -> -1`, `1 -> +1`.
pub type Symbol = i8;

#[inline]
pub fn bpsk(bit: u8) -> Symbol {
    if bit == 0 {
        -1
    } else {
        1
    }
}

#[inline]
pub fn bit_of(sym: Symbol) -> u8 {
    u8::from(sym > 0)
}

/// Single-parity recursive systematic convolutional encoder description.
///
/// Tap vectors list coefficients of `D^0 .. D^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RscSpec {
    pub memory_order: usize,
    pub feedforward_taps: Vec<u8>,
    pub feedback_taps: Vec<u8>,
}

impl RscSpec {
    /// `[1, (1 + D^2) / (1 + D + D^2)]`, memory 2.
    pub fn default_turbo() -> Self {
        Self {
            memory_order: 2,
            feedforward_taps: vec![1, 0, 1],
            feedback_taps: vec![1, 1, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.memory_order;
        if m == 0 || m > 16 {
            return Err(Error::InvalidTrellis(format!("memory order {m} out of range 1..=16")));
        }
        if self.feedforward_taps.len() != m + 1 || self.feedback_taps.len() != m + 1 {
            return Err(Error::InvalidTrellis(format!(
                "tap vectors must have length {} (memory order + 1)",
                m + 1
            )));
        }
        if self.feedforward_taps.iter().chain(&self.feedback_taps).any(|&t| t > 1) {
            return Err(Error::InvalidTrellis("taps must be 0 or 1".into()));
        }
        if self.feedback_taps[0] != 1 {
            return Err(Error::InvalidTrellis("feedback D^0 coefficient must be set".into()));
        }
        Ok(())
    }
}

/// Symbols emitted by one joint-trellis transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointTransitionContext {
    /// Systematic symbol at step k.
    pub xs: Symbol,
    /// Parity symbol at step k.
    pub xp: Symbol,
    /// Same-encoder parity symbol at step k-1.
    pub xp_prev: Symbol,
}

/// What a transition emits, depending on the trellis kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Emission {
    /// Encoder output bits (0/1).
    Code { systematic: u8, parity: u8 },
    /// Channel symbol window `(x_k, x_{k-1}, ..., x_{k-L+1})`.
    Window(Vec<Symbol>),
    Joint(JointTransitionContext),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub input: u8,
    pub next: usize,
    pub emitted: Emission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrellisKind {
    Rsc,
    Channel,
    Joint,
}

/// Immutable, total state-transition table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trellis {
    kind: TrellisKind,
    num_states: usize,
    num_inputs: usize,
    state_bits: usize,
    transitions: Vec<Transition>,
}

impl Trellis {
    fn from_parts(
        kind: TrellisKind,
        num_states: usize,
        state_bits: usize,
        transitions: Vec<Transition>,
    ) -> Result<Self> {
        let t = Self {
            kind,
            num_states,
            num_inputs: 2,
            state_bits,
            transitions,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn kind(&self) -> TrellisKind {
        self.kind
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn state_bits(&self) -> usize {
        self.state_bits
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    #[inline]
    pub fn transition(&self, state: usize, input: u8) -> &Transition {
        &self.transitions[state * self.num_inputs + input as usize]
    }

    #[inline]
    pub fn next(&self, state: usize, input: u8) -> usize {
        self.transition(state, input).next
    }

    /// Parity bit of an RSC transition; `None` for other kinds.
    pub fn parity(&self, state: usize, input: u8) -> Option<u8> {
        match self.transition(state, input).emitted {
            Emission::Code { parity, .. } => Some(parity),
            _ => None,
        }
    }

    pub fn joint_context(&self, id: usize) -> Option<JointTransitionContext> {
        match self.transitions[id].emitted {
            Emission::Joint(ctx) => Some(ctx),
            _ => None,
        }
    }

    pub fn state_label(&self, state: usize) -> String {
        format!("{:0width$b}", state, width = self.state_bits)
    }

    /// Checks totality, index ranges and (for RSC) the in-degree of every state.
    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.transitions.len() != self.num_states * self.num_inputs {
            return Err(Error::InvalidTrellis("transition table is not total".into()));
        }
        for (id, t) in self.transitions.iter().enumerate() {
            if t.from * self.num_inputs + t.input as usize != id {
                return Err(Error::InvalidTrellis(format!("transition {id} is out of order")));
            }
            if t.next >= self.num_states {
                return Err(Error::InvalidTrellis(format!(
                    "transition {id} targets state {} >= {}",
                    t.next, self.num_states
                )));
            }
        }
        if self.kind == TrellisKind::Rsc {
            let indeg = self.in_degrees();
            if let Some(s) = indeg.iter().position(|&d| d != self.num_inputs) {
                return Err(Error::InvalidTrellis(format!(
                    "RSC state {s} has {} incoming transitions",
                    indeg[s]
                )));
            }
        }
        Ok(())
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut indeg = vec![0; self.num_states];
        for t in &self.transitions {
            indeg[t.next] += 1;
        }
        indeg
    }

    /// States reachable from `start` within `steps` transitions.
    pub fn reachable_from(&self, start: usize, steps: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_states];
        seen[start] = true;
        let mut frontier = vec![start];
        for _ in 0..steps {
            let mut next = Vec::new();
            for &s in &frontier {
                for u in 0..self.num_inputs as u8 {
                    let n = self.next(s, u);
                    if !seen[n] {
                        seen[n] = true;
                        next.push(n);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        seen
    }

    /// Runs an RSC trellis over `bits` from `start`, returning parity bits and the final state.
    pub fn encode(&self, bits: &[u8], start: usize) -> Result<(Vec<u8>, usize)> {
        if self.kind != TrellisKind::Rsc {
            return Err(Error::InvalidInput("encode requires an RSC trellis".into()));
        }
        let mut state = start;
        let mut parity = Vec::with_capacity(bits.len());
        for &u in bits {
            if u > 1 {
                return Err(Error::InvalidInput(format!("bit value {u}")));
            }
            let t = self.transition(state, u);
            if let Emission::Code { parity: p, .. } = t.emitted {
                parity.push(p);
            }
            state = t.next;
        }
        Ok((parity, state))
    }
}

/// Builds the RSC trellis; state = register tuple, newest register first.
pub fn build_rsc_trellis(spec: &RscSpec) -> Result<Trellis> {
    spec.validate()?;
    let m = spec.memory_order;
    let num_states = 1usize << m;
    let mut transitions = Vec::with_capacity(num_states * 2);
    for state in 0..num_states {
        // regs[i] holds the register at delay D^{i+1}; the newest is the MSB.
        let regs: Vec<u8> = (0..m).map(|i| ((state >> (m - 1 - i)) & 1) as u8).collect();
        for u in 0..2u8 {
            let mut a = u;
            for i in 1..=m {
                a ^= spec.feedback_taps[i] & regs[i - 1];
            }
            let mut parity = spec.feedforward_taps[0] & a;
            for i in 1..=m {
                parity ^= spec.feedforward_taps[i] & regs[i - 1];
            }
            let next = ((a as usize) << (m - 1)) | (state >> 1);
            transitions.push(Transition {
                from: state,
                input: u,
                next,
                emitted: Emission::Code { systematic: u, parity },
            });
        }
    }
    Trellis::from_parts(TrellisKind::Rsc, num_states, m, transitions)
}

/// Builds the `2^L`-state channel trellis; state bits list symbols oldest first.
pub fn build_channel_trellis(channel_length: usize) -> Result<Trellis> {
    if channel_length == 0 || channel_length > 16 {
        return Err(Error::InvalidTrellis(format!(
            "channel length {channel_length} out of range 1..=16"
        )));
    }
    let bits = channel_length;
    let num_states = 1usize << bits;
    let mask = num_states - 1;
    let mut transitions = Vec::with_capacity(num_states * 2);
    for state in 0..num_states {
        for u in 0..2u8 {
            let next = ((state << 1) | u as usize) & mask;
            // window[0] = x_k, window[i] = x_{k-i} = bit (i-1) of the previous state
            let mut window = Vec::with_capacity(channel_length);
            window.push(bpsk(u));
            for i in 1..channel_length {
                window.push(bpsk(((state >> (i - 1)) & 1) as u8));
            }
            transitions.push(Transition {
                from: state,
                input: u,
                next,
                emitted: Emission::Window(window),
            });
        }
    }
    Trellis::from_parts(TrellisKind::Channel, num_states, bits, transitions)
}

/// Builds the 8-state joint trellis from a 4-state RSC trellis.
pub fn build_joint_trellis(rsc: &Trellis) -> Result<Trellis> {
    if rsc.kind() != TrellisKind::Rsc || rsc.num_states() != 4 {
        return Err(Error::InvalidTrellis(
            "joint trellis requires a 4-state RSC trellis".into(),
        ));
    }
    let num_states = 8;
    let mut transitions = Vec::with_capacity(16);
    for state in 0..num_states {
        let r = state >> 1;
        let u_prev = (state & 1) as u8;
        let r_now = rsc.next(r, u_prev);
        let p_prev = rsc.parity(r, u_prev).expect("RSC trellis");
        for u in 0..2u8 {
            let p = rsc.parity(r_now, u).expect("RSC trellis");
            transitions.push(Transition {
                from: state,
                input: u,
                next: (r_now << 1) | u as usize,
                emitted: Emission::Joint(JointTransitionContext {
                    xs: bpsk(u),
                    xp: bpsk(p),
                    xp_prev: bpsk(p_prev),
                }),
            });
        }
    }
    Trellis::from_parts(TrellisKind::Joint, num_states, 3, transitions)
}

fn sym_char(s: Symbol) -> &'static str {
    if s > 0 {
        "+1"
    } else {
        "-1"
    }
}

/// Deterministic text rendering of all transitions, ordered by (state, input).
pub fn dump_tables(trellis: &Trellis) -> String {
    let mut out = String::new();
    match trellis.kind() {
        TrellisKind::Rsc => {
            out.push_str("# RSC encoder; state = registers, newest first\n");
            out.push_str("s_prev  u  s_next  xs xp\n");
        }
        TrellisKind::Channel => {
            out.push_str("# finite-memory channel; state = symbols oldest first (-1 -> 0, +1 -> 1)\n");
            out.push_str("s_prev  x_k  s_next  window(x_k, x_k-1, ...)\n");
        }
        TrellisKind::Joint => {
            out.push_str("# RSC encoder + finite-memory channel; state = (RSC state, u_prev)\n");
            out.push_str("s_prev  u  s_next  xs xp xp_prev\n");
        }
    }
    for t in trellis.transitions() {
        let from = trellis.state_label(t.from);
        let next = trellis.state_label(t.next);
        match &t.emitted {
            Emission::Code { systematic, parity } => {
                let _ = writeln!(out, "{from:<6}  {}  {next:<6}  {systematic}  {parity}", t.input);
            }
            Emission::Window(w) => {
                let win: Vec<&str> = w.iter().map(|&s| sym_char(s)).collect();
                let _ = writeln!(
                    out,
                    "{from:<6}  {}   {next:<6}  ({})",
                    sym_char(bpsk(t.input)),
                    win.join(", ")
                );
            }
            Emission::Joint(c) => {
                let _ = writeln!(
                    out,
                    "{from:<6}  {}  {next:<6}  {} {} {}",
                    t.input,
                    sym_char(c.xs),
                    sym_char(c.xp),
                    sym_char(c.xp_prev)
                );
            }
        }
    }
    out
}
