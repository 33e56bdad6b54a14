//! The heterogeneous agent graph: sensory nets, motor units (M-net + Q-net),
//! and the double-buffered message board that delivers every message exactly
//! one tick after it is sent.
//!
//! Wiring per motor unit `i`:
//! - inputs: all incoming messages (one per sensory agent plus one per other
//!   motor unit), concatenated with the one-hot of the unit's previous action;
//! - the M-net emits one message to every *other* motor unit;
//! - the Q-net emits one value per action in a single pass.
//!
//! There is no stream from a motor unit's M-net to its own Q-net.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, Tape};

/// Sizes of the agent graph. Defaults match the two-arm juggling setup:
/// three sensory agents (left arm, eye, right arm), two motor units with
/// five actions each, messages of width 5, ten hidden units per net.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CortexConfig {
    pub n_s: usize,
    pub n_m: usize,
    pub d_m: usize,
    pub obs_dims: Vec<usize>,
    pub action_counts: Vec<usize>,
    pub hidden_width: usize,
}

impl Default for CortexConfig {
    fn default() -> Self {
        CortexConfig {
            n_s: 3,
            n_m: 2,
            d_m: 5,
            obs_dims: vec![2, 4, 2],
            action_counts: vec![5, 5],
            hidden_width: 10,
        }
    }
}

impl CortexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_m < 1 {
            return Err(Error::Config("n_m must be >= 1".into()));
        }
        if self.d_m < 1 {
            return Err(Error::Config("d_m must be >= 1".into()));
        }
        if self.hidden_width < 1 {
            return Err(Error::Config("hidden_width must be >= 1".into()));
        }
        if self.obs_dims.len() != self.n_s {
            return Err(Error::Config(format!(
                "obs_dims has {} entries but n_s = {}",
                self.obs_dims.len(),
                self.n_s
            )));
        }
        if self.action_counts.len() != self.n_m {
            return Err(Error::Config(format!(
                "action_counts has {} entries but n_m = {}",
                self.action_counts.len(),
                self.n_m
            )));
        }
        if self.obs_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("observation dims must be >= 1".into()));
        }
        if self.action_counts.iter().any(|&a| a == 0) {
            return Err(Error::Config("action counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Every sensory net emits one message per motor unit.
    pub fn s_out_dim(&self) -> usize {
        self.n_m * self.d_m
    }

    /// Incoming message width for motor unit `i`: one stream per sensory
    /// agent plus one per other motor unit.
    pub fn incoming_dim(&self) -> usize {
        (self.n_s + self.n_m - 1) * self.d_m
    }

    /// Full input width of motor unit `i`'s M-net and Q-net.
    pub fn motor_in_dim(&self, i: usize) -> usize {
        self.incoming_dim() + self.action_counts[i]
    }

    /// M-net output width: one message per other motor unit.
    pub fn m_out_dim(&self) -> usize {
        (self.n_m - 1) * self.d_m
    }

    /// The no-op action index for motor unit `i` (always the last action).
    pub fn noop_action(&self, i: usize) -> usize {
        self.action_counts[i] - 1
    }
}

/// Total directed message streams: `n_s * n_m` sensory-to-motor plus
/// `n_m * (n_m - 1)` motor-to-motor.
pub fn stream_count(n_s: usize, n_m: usize) -> usize {
    assert!(n_m >= 1, "stream_count requires n_m >= 1");
    n_m * (n_m + n_s - 1)
}

/// A message source: sensory agent or motor unit, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Sensory(usize),
    Motor(usize),
}

/// One directed channel of width `d_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub source: Source,
    pub dest: usize,
}

/// Double-buffered message store. Reads during a tick come exclusively from
/// the previous-tick buffer; writes go to the current-tick buffer; the
/// buffers swap at the end of the tick.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBoard {
    n_s: usize,
    n_m: usize,
    d_m: usize,
    prev: Vec<f64>,
    cur: Vec<f64>,
}

impl MessageBoard {
    pub fn new(n_s: usize, n_m: usize, d_m: usize) -> MessageBoard {
        let len = stream_count(n_s, n_m) * d_m;
        MessageBoard {
            n_s,
            n_m,
            d_m,
            prev: vec![0.0; len],
            cur: vec![0.0; len],
        }
    }

    pub fn zero(&mut self) {
        self.prev.fill(0.0);
        self.cur.fill(0.0);
    }

    /// Flat offset of one stream's slot. Sensory streams first (grouped by
    /// source), then motor streams (grouped by source, destinations in
    /// ascending order skipping the source itself).
    fn stream_offset(&self, id: StreamId) -> usize {
        let slot = match id.source {
            Source::Sensory(s) => {
                assert!(s < self.n_s && id.dest < self.n_m, "bad sensory stream {id:?}");
                s * self.n_m + id.dest
            }
            Source::Motor(m) => {
                assert!(m < self.n_m && id.dest < self.n_m && m != id.dest, "bad motor stream {id:?}");
                let within = if id.dest < m { id.dest } else { id.dest - 1 };
                self.n_s * self.n_m + m * (self.n_m - 1) + within
            }
        };
        slot * self.d_m
    }

    pub fn write_current(&mut self, id: StreamId, msg: &[f64]) {
        assert_eq!(msg.len(), self.d_m, "message width {} != d_m {}", msg.len(), self.d_m);
        let off = self.stream_offset(id);
        self.cur[off..off + self.d_m].copy_from_slice(msg);
    }

    pub fn read_previous(&self, id: StreamId) -> &[f64] {
        let off = self.stream_offset(id);
        &self.prev[off..off + self.d_m]
    }

    /// Appends motor unit `dest`'s incoming messages from the previous tick:
    /// sensory sources in index order, then other motor sources in index
    /// order.
    pub fn gather_incoming_previous(&self, dest: usize, out: &mut Vec<f64>) {
        for s in 0..self.n_s {
            out.extend_from_slice(self.read_previous(StreamId {
                source: Source::Sensory(s),
                dest,
            }));
        }
        for m in 0..self.n_m {
            if m != dest {
                out.extend_from_slice(self.read_previous(StreamId {
                    source: Source::Motor(m),
                    dest,
                }));
            }
        }
    }

    fn swap(&mut self) {
        std::mem::swap(&mut self.prev, &mut self.cur);
    }
}

/// Forward tapes of every network for one tick, in declaration order.
#[derive(Debug, Clone)]
pub struct TickTapes {
    pub sensory: Vec<Tape>,
    pub m_nets: Vec<Tape>,
    pub q_nets: Vec<Tape>,
}

/// Everything one tick produced, including the frozen inputs needed to
/// rebuild its computation graph later.
#[derive(Debug, Clone)]
pub struct TickTrace {
    /// Per-motor-unit Q-value vectors.
    pub q_values: Vec<Vec<f64>>,
    /// Observations fed to the sensory nets this tick.
    pub sensory_inputs: Vec<Vec<f64>>,
    /// Input vector shared by each motor unit's M-net and Q-net: stale
    /// incoming messages concatenated with the one-hot previous action.
    pub motor_inputs: Vec<Vec<f64>>,
    /// Previous-action indices encoded into `motor_inputs`.
    pub prev_actions: Vec<usize>,
    pub tapes: TickTapes,
}

/// The full agent graph plus its transient state (message board and
/// previous actions). Single-threaded: `tick` mutates the board. Distinct
/// instances are independent.
#[derive(Debug, Clone, PartialEq)]
pub struct CortexState {
    config: CortexConfig,
    sensory_nets: Vec<Mlp>,
    m_nets: Vec<Mlp>,
    q_nets: Vec<Mlp>,
    board: MessageBoard,
    prev_actions: Vec<usize>,
}

impl CortexState {
    /// Builds all networks from one seed stream, zero-fills the board, and
    /// sets every previous action to the no-op index.
    pub fn build(config: CortexConfig, seed: u64) -> Result<CortexState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CortexState::build_with_rng(config, &mut rng)
    }

    pub fn build_with_rng<R: Rng + ?Sized>(config: CortexConfig, rng: &mut R) -> Result<CortexState> {
        config.validate()?;
        let hidden = [config.hidden_width];

        // Message outputs are rectified like every other non-Q layer; this
        // also keeps the M-net <-> M-net feedback loop from amplifying
        // message magnitudes without bound as training grows the weights.
        let mut sensory_nets = Vec::with_capacity(config.n_s);
        for i in 0..config.n_s {
            sensory_nets.push(Mlp::init_with_output_activation(
                config.obs_dims[i],
                &hidden,
                config.s_out_dim(),
                Activation::Relu,
                rng,
            )?);
        }
        // With a single motor unit there is nobody to message, so no M-nets.
        let mut m_nets = Vec::new();
        if config.n_m > 1 {
            for i in 0..config.n_m {
                m_nets.push(Mlp::init_with_output_activation(
                    config.motor_in_dim(i),
                    &hidden,
                    config.m_out_dim(),
                    Activation::Relu,
                    rng,
                )?);
            }
        }
        let mut q_nets = Vec::with_capacity(config.n_m);
        for i in 0..config.n_m {
            q_nets.push(Mlp::init_with_rng(
                config.motor_in_dim(i),
                &hidden,
                config.action_counts[i],
                rng,
            )?);
        }

        let board = MessageBoard::new(config.n_s, config.n_m, config.d_m);
        let prev_actions = (0..config.n_m).map(|i| config.noop_action(i)).collect();
        Ok(CortexState {
            config,
            sensory_nets,
            m_nets,
            q_nets,
            board,
            prev_actions,
        })
    }

    /// Reassembles a cortex from deserialized networks (checkpoint loading).
    /// The board starts zeroed and previous actions at no-op.
    pub fn from_parts(
        config: CortexConfig,
        sensory_nets: Vec<Mlp>,
        m_nets: Vec<Mlp>,
        q_nets: Vec<Mlp>,
    ) -> Result<CortexState> {
        config.validate()?;
        let expect_m = if config.n_m > 1 { config.n_m } else { 0 };
        if sensory_nets.len() != config.n_s || m_nets.len() != expect_m || q_nets.len() != config.n_m {
            return Err(Error::Config(format!(
                "network counts ({}, {}, {}) do not match config ({}, {expect_m}, {})",
                sensory_nets.len(),
                m_nets.len(),
                q_nets.len(),
                config.n_s,
                config.n_m
            )));
        }
        for (i, net) in sensory_nets.iter().enumerate() {
            if net.input_dim() != config.obs_dims[i] || net.output_dim() != config.s_out_dim() {
                return Err(Error::Config(format!("sensory net {i} has wrong shape")));
            }
        }
        for (i, net) in m_nets.iter().enumerate() {
            if net.input_dim() != config.motor_in_dim(i) || net.output_dim() != config.m_out_dim() {
                return Err(Error::Config(format!("M-net {i} has wrong shape")));
            }
        }
        for (i, net) in q_nets.iter().enumerate() {
            if net.input_dim() != config.motor_in_dim(i) || net.output_dim() != config.action_counts[i] {
                return Err(Error::Config(format!("Q-net {i} has wrong shape")));
            }
        }
        let board = MessageBoard::new(config.n_s, config.n_m, config.d_m);
        let prev_actions = (0..config.n_m).map(|i| config.noop_action(i)).collect();
        Ok(CortexState {
            config,
            sensory_nets,
            m_nets,
            q_nets,
            board,
            prev_actions,
        })
    }

    pub fn config(&self) -> &CortexConfig {
        &self.config
    }

    pub fn sensory_nets(&self) -> &[Mlp] {
        &self.sensory_nets
    }

    pub fn m_nets(&self) -> &[Mlp] {
        &self.m_nets
    }

    pub fn q_nets(&self) -> &[Mlp] {
        &self.q_nets
    }

    pub fn sensory_nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.sensory_nets
    }

    pub fn m_nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.m_nets
    }

    pub fn q_nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.q_nets
    }

    pub fn board(&self) -> &MessageBoard {
        &self.board
    }

    pub fn prev_actions(&self) -> &[usize] {
        &self.prev_actions
    }

    /// Clears the message board and resets previous actions to no-op;
    /// network parameters are untouched. Called at the start of a session.
    pub fn reset_transient(&mut self) {
        self.board.zero();
        for (i, a) in self.prev_actions.iter_mut().enumerate() {
            *a = self.config.noop_action(i);
        }
    }

    /// Records the action just taken by motor unit `agent`; the next tick's
    /// one-hot inputs reflect it.
    pub fn set_prev_action(&mut self, agent: usize, action: usize) {
        assert!(agent < self.config.n_m, "motor index {agent} out of range");
        assert!(
            action < self.config.action_counts[agent],
            "action {action} out of range for motor unit {agent} ({} actions)",
            self.config.action_counts[agent]
        );
        self.prev_actions[agent] = action;
    }

    fn one_hot(&self, agent: usize, out: &mut Vec<f64>) {
        let n = self.config.action_counts[agent];
        let a = self.prev_actions[agent];
        for k in 0..n {
            out.push(if k == a { 1.0 } else { 0.0 });
        }
    }

    /// Advances the cortex one time step.
    ///
    /// Sensory nets consume this tick's observations and post their messages;
    /// each motor unit's M-net and Q-net consume only messages posted on the
    /// *previous* tick plus the one-hot previous action. Q-values at tick `t`
    /// are therefore independent of observations at tick `t`. The buffers
    /// swap before returning.
    pub fn tick(&mut self, observations: &[Vec<f64>]) -> TickTrace {
        let cfg = &self.config;
        assert_eq!(
            observations.len(),
            cfg.n_s,
            "expected {} observations, got {}",
            cfg.n_s,
            observations.len()
        );
        for (i, o) in observations.iter().enumerate() {
            assert_eq!(
                o.len(),
                cfg.obs_dims[i],
                "observation {i} has dim {}, expected {}",
                o.len(),
                cfg.obs_dims[i]
            );
        }

        let d_m = cfg.d_m;
        let mut s_tapes = Vec::with_capacity(cfg.n_s);
        for (i, obs) in observations.iter().enumerate() {
            let (out, tape) = self.sensory_nets[i].forward(obs);
            for dest in 0..cfg.n_m {
                self.board.write_current(
                    StreamId {
                        source: Source::Sensory(i),
                        dest,
                    },
                    &out[dest * d_m..(dest + 1) * d_m],
                );
            }
            s_tapes.push(tape);
        }

        let mut motor_inputs = Vec::with_capacity(cfg.n_m);
        let mut m_tapes = Vec::new();
        let mut q_tapes = Vec::with_capacity(cfg.n_m);
        let mut q_values = Vec::with_capacity(cfg.n_m);
        for i in 0..cfg.n_m {
            let mut input = Vec::with_capacity(cfg.motor_in_dim(i));
            self.board.gather_incoming_previous(i, &mut input);
            self.one_hot(i, &mut input);

            if !self.m_nets.is_empty() {
                let (out, tape) = self.m_nets[i].forward(&input);
                let mut block = 0;
                for dest in 0..cfg.n_m {
                    if dest == i {
                        continue;
                    }
                    self.board.write_current(
                        StreamId {
                            source: Source::Motor(i),
                            dest,
                        },
                        &out[block * d_m..(block + 1) * d_m],
                    );
                    block += 1;
                }
                m_tapes.push(tape);
            }

            let (q, q_tape) = self.q_nets[i].forward(&input);
            q_values.push(q);
            q_tapes.push(q_tape);
            motor_inputs.push(input);
        }

        self.board.swap();

        TickTrace {
            q_values,
            sensory_inputs: observations.to_vec(),
            motor_inputs,
            prev_actions: self.prev_actions.clone(),
            tapes: TickTapes {
                sensory: s_tapes,
                m_nets: m_tapes,
                q_nets: q_tapes,
            },
        }
    }

    /// Assembles motor unit `dest`'s input vector directly from network
    /// outputs instead of the board: used when rebuilding a past tick's
    /// graph from frozen inputs.
    ///
    /// `s_outs[j]` must be the full output of sensory net `j`; `m_outs[j]`
    /// the full output of M-net `j`. Layout matches `tick`.
    pub fn assemble_motor_input(
        &self,
        s_outs: &[Vec<f64>],
        m_outs: &[Vec<f64>],
        dest: usize,
        prev_action: usize,
    ) -> Vec<f64> {
        let cfg = &self.config;
        let d_m = cfg.d_m;
        let mut input = Vec::with_capacity(cfg.motor_in_dim(dest));
        for out in s_outs {
            input.extend_from_slice(&out[dest * d_m..(dest + 1) * d_m]);
        }
        for (j, out) in m_outs.iter().enumerate() {
            if j == dest {
                continue;
            }
            let within = if dest < j { dest } else { dest - 1 };
            input.extend_from_slice(&out[within * d_m..(within + 1) * d_m]);
        }
        let n = cfg.action_counts[dest];
        assert!(prev_action < n, "prev action {prev_action} out of range");
        for k in 0..n {
            input.push(if k == prev_action { 1.0 } else { 0.0 });
        }
        input
    }
}
