//! Action selection, TD-target construction, the one-step training graph,
//! and the session/epoch loop.
//!
//! Training is semi-gradient TD: each step's target is a frozen scalar built
//! from the recorded reward and next-tick Q-values. The training graph is
//! rebuilt from frozen inputs (observations and stale messages treated as
//! constants) with the *current* parameters, and one SGD step updates every
//! network simultaneously.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cortex::{CortexConfig, CortexState};
use crate::env::{self, ArmAction, EnvParams, TrajectoryRow};
use crate::error::{Error, Result};
use crate::nn::Gradients;
use crate::stats::EpochRecord;

/// Controller mode; also labels epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exploratory,
    Greedy,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Exploratory => write!(f, "exploratory"),
            Mode::Greedy => write!(f, "greedy"),
        }
    }
}

/// Training hyperparameters.
///
/// The defaults were settled empirically on the full ten-instance protocol:
/// rewards of +/-50 make the TD loss diverge for learning rates much above
/// 1e-3, while rates below ~1e-4 never suppress movements within 5000
/// sessions. `learn_in_greedy = false` treats greedy epochs as evaluation
/// snapshots of the policy trained in the exploratory epochs; enabling it
/// trains on argmax-generated transitions as well.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub epoch_len: usize,
    pub total_sessions: usize,
    /// Train during greedy epochs too, not just exploratory ones.
    pub learn_in_greedy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 4e-4,
            gamma: 0.5,
            temperature: 1.0,
            epoch_len: 100,
            total_sessions: 5000,
            learn_in_greedy: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "0 < gamma < 1 must hold, got {}",
                self.gamma
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be a positive real, got {}", self.lr)));
        }
        if self.epoch_len == 0 || self.total_sessions == 0 {
            return Err(Error::Config(
                "epoch_len and total_sessions must be >= 1".into(),
            ));
        }
        if self.total_sessions % self.epoch_len != 0 {
            return Err(Error::Config(format!(
                "epoch_len ({}) must divide total_sessions ({})",
                self.epoch_len, self.total_sessions
            )));
        }
        Ok(())
    }
}

/// Samples an action from softmax(q / temperature) in exploratory mode, or
/// takes the lowest-index maximizer in greedy mode.
pub fn select_action<R: Rng + ?Sized>(
    q: &[f64],
    mode: Mode,
    temperature: f64,
    rng: &mut R,
) -> Result<usize> {
    assert!(!q.is_empty(), "action-value vector is empty");
    assert!(temperature > 0.0, "temperature must be > 0");
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!(
            "non-finite Q-values during action selection: {q:?}"
        )));
    }
    match mode {
        Mode::Greedy => {
            let mut best = 0;
            for (i, &v) in q.iter().enumerate() {
                if v > q[best] {
                    best = i;
                }
            }
            Ok(best)
        }
        Mode::Exploratory => {
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = q.iter().map(|&v| ((v - max) / temperature).exp()).collect();
            let total: f64 = weights.iter().sum();
            let u = rng.random_range(0.0..total);
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return Ok(i);
                }
            }
            Ok(q.len() - 1)
        }
    }
}

/// TD target: the reward alone on terminal transitions, otherwise
/// `reward + gamma * max(q_next)`.
pub fn td_target(reward: f64, q_next: &[f64], gamma: f64, done: bool) -> f64 {
    if done {
        return reward;
    }
    assert!(!q_next.is_empty(), "non-terminal target needs next-tick Q-values");
    let max = q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    reward + gamma * max
}

/// Frozen inputs of the tick that produced the messages the Q-nets under
/// training consumed. Absent on a session's first transition, where the
/// Q-nets read the reset (all-zero) board.
#[derive(Debug, Clone)]
pub struct UpstreamInputs {
    /// Observation per sensory agent at tick t-1.
    pub sensory_inputs: Vec<Vec<f64>>,
    /// Full M-net input per motor unit at tick t-1: tick t-2 messages plus
    /// the one-hot of action t-2, all constants.
    pub motor_inputs: Vec<Vec<f64>>,
}

/// Everything needed to rebuild one training step's computation graph and
/// loss without touching the environment.
#[derive(Debug, Clone)]
pub struct TransitionTape {
    pub upstream: Option<UpstreamInputs>,
    /// a^[t-1] per motor unit, one-hot encoded into the Q-net inputs.
    pub prev_actions: Vec<usize>,
    /// Actions a^[t] chosen at this tick.
    pub actions: Vec<usize>,
    /// Global reward R^[t].
    pub reward: f64,
    pub done: bool,
    /// Next-tick Q-value vectors, frozen at capture time; empty when done.
    pub q_next: Vec<Vec<f64>>,
}

/// Per-network gradients of one transition's summed loss.
#[derive(Debug, Clone)]
pub struct CortexGradients {
    /// Empty when the transition has no upstream tick.
    pub sensory: Vec<Gradients>,
    /// Empty when the transition has no upstream tick or there is a single
    /// motor unit.
    pub m_nets: Vec<Gradients>,
    pub q_nets: Vec<Gradients>,
}

struct RebuiltForward {
    s_outs: Vec<Vec<f64>>,
    m_outs: Vec<Vec<f64>>,
    s_tapes: Vec<crate::nn::Tape>,
    m_tapes: Vec<crate::nn::Tape>,
}

/// Re-runs the tick t-1 networks on the tape's frozen inputs. Without an
/// upstream tick the message inputs are the reset zeros.
fn rebuild_upstream(cortex: &CortexState, tape: &TransitionTape) -> RebuiltForward {
    let cfg = cortex.config();
    match &tape.upstream {
        Some(up) => {
            assert_eq!(up.sensory_inputs.len(), cfg.n_s, "tape sensory input count mismatch");
            assert_eq!(
                up.motor_inputs.len(),
                cortex.m_nets().len(),
                "tape motor input count mismatch"
            );
            let mut s_outs = Vec::with_capacity(cfg.n_s);
            let mut s_tapes = Vec::with_capacity(cfg.n_s);
            for (net, x) in cortex.sensory_nets().iter().zip(&up.sensory_inputs) {
                let (y, t) = net.forward(x);
                s_outs.push(y);
                s_tapes.push(t);
            }
            let mut m_outs = Vec::with_capacity(cortex.m_nets().len());
            let mut m_tapes = Vec::with_capacity(cortex.m_nets().len());
            for (net, x) in cortex.m_nets().iter().zip(&up.motor_inputs) {
                let (y, t) = net.forward(x);
                m_outs.push(y);
                m_tapes.push(t);
            }
            RebuiltForward {
                s_outs,
                m_outs,
                s_tapes,
                m_tapes,
            }
        }
        None => RebuiltForward {
            s_outs: vec![vec![0.0; cfg.s_out_dim()]; cfg.n_s],
            m_outs: vec![vec![0.0; cfg.m_out_dim()]; cortex.m_nets().len()],
            s_tapes: Vec::new(),
            m_tapes: Vec::new(),
        },
    }
}

/// Per-motor-unit squared TD errors of one transition, rebuilt from the tape
/// with the current parameters. Forward-only; used by tests as an oracle
/// surface.
pub fn transition_losses(cortex: &CortexState, tape: &TransitionTape, gamma: f64) -> Result<Vec<f64>> {
    let rebuilt = rebuild_upstream(cortex, tape);
    let n_m = cortex.config().n_m;
    let mut losses = Vec::with_capacity(n_m);
    for i in 0..n_m {
        let q_in = cortex.assemble_motor_input(&rebuilt.s_outs, &rebuilt.m_outs, i, tape.prev_actions[i]);
        let (q, _) = cortex.q_nets()[i].forward(&q_in);
        let target = td_target(tape.reward, q_next_of(tape, i), gamma, tape.done);
        let err = q[tape.actions[i]] - target;
        losses.push(err * err);
    }
    Ok(losses)
}

fn q_next_of<'a>(tape: &'a TransitionTape, i: usize) -> &'a [f64] {
    if tape.done {
        &[]
    } else {
        &tape.q_next[i]
    }
}

/// Gradients of the summed per-unit losses with respect to every network,
/// with the TD targets held constant. Gradients flow from each Q-net through
/// its input messages into every sensory net and every other unit's M-net.
pub fn transition_gradients(
    cortex: &CortexState,
    tape: &TransitionTape,
    gamma: f64,
) -> Result<(Vec<f64>, CortexGradients)> {
    let cfg = cortex.config().clone();
    let n_m = cfg.n_m;
    let d_m = cfg.d_m;
    assert_eq!(tape.prev_actions.len(), n_m, "tape prev_actions count mismatch");
    assert_eq!(tape.actions.len(), n_m, "tape actions count mismatch");
    if !tape.done {
        assert_eq!(tape.q_next.len(), n_m, "tape q_next count mismatch");
    }

    let rebuilt = rebuild_upstream(cortex, tape);
    let has_upstream = tape.upstream.is_some();

    let mut s_cots = vec![vec![0.0; cfg.s_out_dim()]; cfg.n_s];
    let mut m_cots = vec![vec![0.0; cfg.m_out_dim()]; rebuilt.m_outs.len()];
    let mut q_grads = Vec::with_capacity(n_m);
    let mut losses = Vec::with_capacity(n_m);

    for i in 0..n_m {
        let q_in = cortex.assemble_motor_input(&rebuilt.s_outs, &rebuilt.m_outs, i, tape.prev_actions[i]);
        let (q, q_tape) = cortex.q_nets()[i].forward(&q_in);
        let target = td_target(tape.reward, q_next_of(tape, i), gamma, tape.done);
        let a = tape.actions[i];
        assert!(a < q.len(), "tape action {a} out of range for unit {i}");
        let err = q[a] - target;
        let loss = err * err;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite TD loss for motor unit {i} (q = {}, target = {target})",
                q[a]
            )));
        }
        losses.push(loss);

        let mut d_q = vec![0.0; q.len()];
        d_q[a] = 2.0 * err;
        let (grad, d_in) = cortex.q_nets()[i].backward(&q_tape, &d_q);
        q_grads.push(grad);

        if has_upstream {
            // Route the input cotangent back onto the producing networks;
            // the trailing one-hot block is a constant and is dropped.
            let mut off = 0;
            for s_cot in s_cots.iter_mut() {
                for k in 0..d_m {
                    s_cot[i * d_m + k] += d_in[off + k];
                }
                off += d_m;
            }
            for (j, m_cot) in m_cots.iter_mut().enumerate() {
                if j == i {
                    continue;
                }
                let within = if i < j { i } else { i - 1 };
                for k in 0..d_m {
                    m_cot[within * d_m + k] += d_in[off + k];
                }
                off += d_m;
            }
        }
    }

    let mut sensory = Vec::new();
    let mut m_nets = Vec::new();
    if has_upstream {
        for (s, net) in cortex.sensory_nets().iter().enumerate() {
            let (grad, _) = net.backward(&rebuilt.s_tapes[s], &s_cots[s]);
            sensory.push(grad);
        }
        for (j, net) in cortex.m_nets().iter().enumerate() {
            let (grad, _) = net.backward(&rebuilt.m_tapes[j], &m_cots[j]);
            m_nets.push(grad);
        }
    }

    Ok((
        losses,
        CortexGradients {
            sensory,
            m_nets,
            q_nets: q_grads,
        },
    ))
}

/// One semi-gradient TD step: rebuilds the transition's graph, computes all
/// gradients, then updates every network simultaneously. Returns the
/// per-motor-unit losses measured before the update.
pub fn train_step(
    cortex: &mut CortexState,
    tape: &TransitionTape,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    let (losses, grads) = transition_gradients(cortex, tape, config.gamma)?;
    let lr = config.lr;
    for (i, g) in grads.sensory.iter().enumerate() {
        cortex.sensory_nets_mut()[i].sgd_apply(g, lr)?;
    }
    for (i, g) in grads.m_nets.iter().enumerate() {
        cortex.m_nets_mut()[i].sgd_apply(g, lr)?;
    }
    for (i, g) in grads.q_nets.iter().enumerate() {
        cortex.q_nets_mut()[i].sgd_apply(g, lr)?;
    }
    Ok(losses)
}

/// How a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionEnd {
    Floor,
    StepCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub bounces: u64,
    pub steps: usize,
    /// Movement counts per arm, left then right.
    pub moves: [u64; 2],
    pub total_reward: f64,
    pub ended_by: SessionEnd,
}

struct PendingTransition {
    upstream: Option<UpstreamInputs>,
    prev_actions: Vec<usize>,
    actions: Vec<usize>,
    reward: f64,
}

/// Runs one session: reset, then tick / act / step / learn until the ball
/// hits the floor or the step cap. Learning happens in exploratory mode
/// always and in greedy mode when `learn_in_greedy` is set; each transition
/// trains once its next-tick Q-values are known (immediately, on terminal
/// transitions).
pub fn run_session<R: Rng + ?Sized>(
    cortex: &mut CortexState,
    env_params: &EnvParams,
    config: &TrainConfig,
    mode: Mode,
    rng: &mut R,
    mut trajectory: Option<&mut Vec<TrajectoryRow>>,
) -> Result<SessionResult> {
    let n_m = cortex.config().n_m;
    assert_eq!(n_m, 2, "the juggling task drives exactly two motor units");
    assert!(
        cortex.config().action_counts.iter().all(|&c| c == ArmAction::COUNT),
        "motor units must use the five-way arm action space"
    );

    cortex.reset_transient();
    let mut state = env::reset(env_params, rng);
    let learning = mode == Mode::Exploratory || config.learn_in_greedy;

    let mut pending: Option<PendingTransition> = None;
    let mut upstream: Option<UpstreamInputs> = None;
    let mut bounces = 0u64;
    let mut moves = [0u64; 2];
    let mut total_reward = 0.0;

    let ended_by = loop {
        let obs = env::observe(&state);
        let trace = cortex.tick(&obs);

        if let Some(p) = pending.take() {
            let tape = TransitionTape {
                upstream: p.upstream,
                prev_actions: p.prev_actions,
                actions: p.actions,
                reward: p.reward,
                done: false,
                q_next: trace.q_values.clone(),
            };
            if learning {
                train_step(cortex, &tape, config)?;
            }
        }

        let mut actions = Vec::with_capacity(n_m);
        for q in &trace.q_values {
            actions.push(select_action(q, mode, config.temperature, rng)?);
        }
        for (i, &a) in actions.iter().enumerate() {
            cortex.set_prev_action(i, a);
        }

        let arm_actions = [ArmAction::from_index(actions[0]), ArmAction::from_index(actions[1])];
        let outcome = env::step(env_params, &mut state, arm_actions, rng);
        total_reward += outcome.reward;
        if outcome.bounced {
            bounces += 1;
        }
        for (count, moved) in moves.iter_mut().zip(outcome.moves) {
            if moved {
                *count += 1;
            }
        }
        if let Some(rows) = trajectory.as_deref_mut() {
            rows.push(TrajectoryRow {
                step: state.step_idx - 1,
                ball_x: state.ball_pos.x,
                ball_y: state.ball_pos.y,
                ball_vx: state.ball_vel.x,
                ball_vy: state.ball_vel.y,
                larm_x: state.arm_pos[0].x,
                larm_y: state.arm_pos[0].y,
                rarm_x: state.arm_pos[1].x,
                rarm_y: state.arm_pos[1].y,
                action_l: actions[0],
                action_r: actions[1],
                reward: outcome.reward,
                bounced: outcome.bounced,
                done: outcome.done,
            });
        }

        if outcome.done {
            let tape = TransitionTape {
                upstream: upstream.take(),
                prev_actions: trace.prev_actions,
                actions,
                reward: outcome.reward,
                done: true,
                q_next: Vec::new(),
            };
            if learning {
                train_step(cortex, &tape, config)?;
            }
            break if state.ball_pos.y <= 0.0 {
                SessionEnd::Floor
            } else {
                SessionEnd::StepCap
            };
        }

        pending = Some(PendingTransition {
            upstream: upstream.take(),
            prev_actions: trace.prev_actions,
            actions,
            reward: outcome.reward,
        });
        upstream = Some(UpstreamInputs {
            sensory_inputs: trace.sensory_inputs,
            motor_inputs: trace.motor_inputs,
        });
    };

    Ok(SessionResult {
        bounces,
        steps: state.step_idx,
        moves,
        total_reward,
        ended_by,
    })
}

/// Epoch controller modes, alternating exploratory-first.
pub fn epoch_schedule(total_sessions: usize, epoch_len: usize) -> Vec<Mode> {
    assert!(epoch_len > 0 && total_sessions % epoch_len == 0, "epoch_len must divide total_sessions");
    (0..total_sessions / epoch_len)
        .map(|e| if e % 2 == 0 { Mode::Exploratory } else { Mode::Greedy })
        .collect()
}

/// One instance's complete training output. Epoch records carry instance 0;
/// the harness relabels them.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub cortex: CortexState,
    pub sessions: Vec<SessionResult>,
    pub epochs: Vec<EpochRecord>,
}

/// Trains one model instance: `total_sessions / epoch_len` epochs of
/// alternating exploratory and greedy sessions. Deterministic per seed.
pub fn run_training(
    config: &TrainConfig,
    env_params: &EnvParams,
    cortex_config: &CortexConfig,
    seed: u64,
    mut trajectory: Option<&mut Vec<TrajectoryRow>>,
) -> Result<TrainingRun> {
    config.validate()?;
    env_params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cortex = CortexState::build_with_rng(cortex_config.clone(), &mut rng)?;

    let schedule = epoch_schedule(config.total_sessions, config.epoch_len);
    let mut sessions = Vec::with_capacity(config.total_sessions);
    let mut epochs = Vec::with_capacity(schedule.len());
    for (epoch_idx, &mode) in schedule.iter().enumerate() {
        let mut bounces = 0u64;
        let mut left_moves = 0u64;
        let mut right_moves = 0u64;
        for session_idx in 0..config.epoch_len {
            let result = run_session(
                &mut cortex,
                env_params,
                config,
                mode,
                &mut rng,
                trajectory.as_deref_mut(),
            )
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!(
                    "epoch {epoch_idx} session {session_idx}: {msg}"
                )),
                other => other,
            })?;
            bounces += result.bounces;
            left_moves += result.moves[0];
            right_moves += result.moves[1];
            sessions.push(result);
        }
        epochs.push(EpochRecord {
            instance: 0,
            epoch: epoch_idx,
            epoch_type: mode,
            bounces,
            left_moves,
            right_moves,
            sessions: config.epoch_len as u32,
        });
    }

    Ok(TrainingRun {
        cortex,
        sessions,
        epochs,
    })
}
