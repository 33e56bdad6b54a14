//! The 2D juggling environment: a ballistic ball, two paddle-arms on a
//! five-action grid, perfectly elastic paddle bounces with a Gaussian
//! horizontal impulse, wall deflection, and a floor reset.
//!
//! One control step covers `control_dt` seconds, integrated in ten substeps
//! with per-substep event checks so the ball cannot tunnel through a paddle.
//! All rewards are global scalars shared by both arms.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substeps per control step. At ~6 m/s a 0.1 s control step moves the ball
/// 0.6 m, which would skip a 0.3 m paddle; a tenth of that cannot.
const SUBSTEPS: usize = 10;

/// Lower clamp for arm height, keeping paddles off the floor.
pub const ARM_MIN_Y: f64 = 0.15;

/// Physical constants and reward schedule. Defaults: arms at 1 m, ball
/// dropped from 3 m, 30 cm paddles, 2 m box, 15 cm moves, 0.1 s control
/// steps, rewards -50 floor / +50 bounce / -0.5 per arm movement.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvParams {
    pub gravity: f64,
    pub box_half_width: f64,
    pub arm_start_height: f64,
    pub drop_height: f64,
    pub paddle_half_width: f64,
    pub move_step: f64,
    pub control_dt: f64,
    pub impulse_sigma: f64,
    pub reward_floor: f64,
    pub reward_bounce: f64,
    pub reward_move: f64,
    pub max_steps_per_session: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            gravity: 9.81,
            box_half_width: 1.0,
            arm_start_height: 1.0,
            drop_height: 3.0,
            paddle_half_width: 0.15,
            move_step: 0.15,
            control_dt: 0.1,
            impulse_sigma: 0.3,
            reward_floor: -50.0,
            reward_bounce: 50.0,
            reward_move: -0.5,
            max_steps_per_session: 2000,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        if self.gravity <= 0.0 {
            return Err(Error::Config("gravity must be > 0".into()));
        }
        if !(self.drop_height > self.arm_start_height && self.arm_start_height > 0.0) {
            return Err(Error::Config(
                "drop_height > arm_start_height > 0 must hold".into(),
            ));
        }
        if self.paddle_half_width <= 0.0 {
            return Err(Error::Config("paddle_half_width must be > 0".into()));
        }
        if self.control_dt <= 0.0 {
            return Err(Error::Config("control_dt must be > 0".into()));
        }
        if self.box_half_width <= 0.0 {
            return Err(Error::Config("box_half_width must be > 0".into()));
        }
        if self.move_step <= 0.0 {
            return Err(Error::Config("move_step must be > 0".into()));
        }
        if self.impulse_sigma < 0.0 {
            return Err(Error::Config("impulse_sigma must be >= 0".into()));
        }
        if self.max_steps_per_session == 0 {
            return Err(Error::Config("max_steps_per_session must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }
}

/// One arm's five-way action grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmAction {
    Left,
    Right,
    Up,
    Down,
    Noop,
}

impl ArmAction {
    pub const COUNT: usize = 5;
    pub const ALL: [ArmAction; 5] = [
        ArmAction::Left,
        ArmAction::Right,
        ArmAction::Up,
        ArmAction::Down,
        ArmAction::Noop,
    ];

    /// Action indices as fed to the networks; no-op is last.
    pub fn from_index(idx: usize) -> ArmAction {
        Self::ALL[idx]
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).expect("listed")
    }

    pub fn is_move(self) -> bool {
        self != ArmAction::Noop
    }
}

/// Full simulation state. `arm_pos[0]` is the left arm.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub ball_pos: Vec2,
    pub ball_vel: Vec2,
    pub arm_pos: [Vec2; 2],
    pub step_idx: usize,
    pub done: bool,
}

/// What one control step produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Global scalar shared by both arms.
    pub reward: f64,
    pub bounced: bool,
    pub hit_wall: bool,
    pub done: bool,
    pub moves: [bool; 2],
}

/// One row of the optional trajectory dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub ball_x: f64,
    pub ball_y: f64,
    pub ball_vx: f64,
    pub ball_vy: f64,
    pub larm_x: f64,
    pub larm_y: f64,
    pub rarm_x: f64,
    pub rarm_y: f64,
    pub action_l: usize,
    pub action_r: usize,
    pub reward: f64,
    pub bounced: bool,
    pub done: bool,
}

/// Drops the ball from rest at a uniform-random x between the arm rest
/// positions; arms start at (-0.5, arm_start_height) and (+0.5, ...).
pub fn reset<R: Rng + ?Sized>(params: &EnvParams, rng: &mut R) -> EnvState {
    let x0 = rng.random_range(-0.5..0.5);
    EnvState {
        ball_pos: Vec2::new(x0, params.drop_height),
        ball_vel: Vec2::new(0.0, 0.0),
        arm_pos: [
            Vec2::new(-0.5, params.arm_start_height),
            Vec2::new(0.5, params.arm_start_height),
        ],
        step_idx: 0,
        done: false,
    }
}

/// Shifts an arm one `move_step` along the chosen axis, clamped to the box
/// horizontally and to `[ARM_MIN_Y, drop_height]` vertically. No-op is the
/// identity.
pub fn apply_arm_action(params: &EnvParams, pos: Vec2, action: ArmAction) -> Vec2 {
    let mut p = pos;
    match action {
        ArmAction::Left => p.x -= params.move_step,
        ArmAction::Right => p.x += params.move_step,
        ArmAction::Up => p.y += params.move_step,
        ArmAction::Down => p.y -= params.move_step,
        ArmAction::Noop => {}
    }
    p.x = p.x.clamp(-params.box_half_width, params.box_half_width);
    p.y = p.y.clamp(ARM_MIN_Y, params.drop_height);
    p
}

/// Advances one control step: arms move, then the ball integrates
/// ballistically with per-substep paddle/wall/floor event checks.
///
/// Reward = bounce term + floor term + per-movement penalty. At most one
/// paddle bounce per control step is credited.
pub fn step<R: Rng + ?Sized>(
    params: &EnvParams,
    state: &mut EnvState,
    actions: [ArmAction; 2],
    rng: &mut R,
) -> StepOutcome {
    assert!(!state.done, "step called on a finished session; reset first");

    // An arm "moved" only if its position actually changed; an action fully
    // absorbed by the boundary clamps neither incurs the movement penalty
    // nor counts toward the dominance statistic.
    let mut moves = [false; 2];
    for (i, &action) in actions.iter().enumerate() {
        let before = state.arm_pos[i];
        state.arm_pos[i] = apply_arm_action(params, before, action);
        moves[i] = state.arm_pos[i] != before;
    }

    let impulse = Normal::new(0.0, params.impulse_sigma).expect("sigma validated non-negative");
    let h = params.control_dt / SUBSTEPS as f64;
    let w = params.box_half_width;
    let mut bounced = false;
    let mut hit_wall = false;
    let mut floor = false;

    for _ in 0..SUBSTEPS {
        let g = params.gravity;
        let y0 = state.ball_pos.y;
        let vy0 = state.ball_vel.y;
        let x0 = state.ball_pos.x;
        let vx0 = state.ball_vel.x;

        // Exact ballistic advance over the substep.
        let mut y_end = y0 + vy0 * h - 0.5 * g * h * h;
        let mut vy_end = vy0 - g * h;
        let mut x_end = x0 + vx0 * h;

        // Earliest descending crossing of a paddle plane with horizontal
        // overlap at the crossing instant. Reflecting the velocity exactly at
        // the plane keeps vertical energy (vy^2 + 2 g y) conserved to
        // rounding; the Gaussian impulse touches x only.
        let mut hit: Option<(f64, usize)> = None;
        for (i, arm) in state.arm_pos.iter().enumerate() {
            if y0 >= arm.y && y_end <= arm.y {
                // Descending root of y0 + vy0 t - g t^2 / 2 = arm.y.
                let disc = vy0 * vy0 + 2.0 * g * (y0 - arm.y);
                let tau = ((vy0 + disc.sqrt()) / g).clamp(0.0, h);
                let x_at = x0 + vx0 * tau;
                if (x_at - arm.x).abs() <= params.paddle_half_width
                    && hit.is_none_or(|(t, _)| tau < t)
                {
                    hit = Some((tau, i));
                }
            }
        }
        if let Some((tau, i)) = hit {
            let arm_y = state.arm_pos[i].y;
            let vy_reflected = g * tau - vy0; // = -vy(tau) >= 0
            let dvx = impulse.sample(rng);
            let rest = h - tau;
            x_end = x0 + vx0 * tau + (vx0 + dvx) * rest;
            y_end = arm_y + vy_reflected * rest - 0.5 * g * rest * rest;
            vy_end = vy_reflected - g * rest;
            state.ball_vel.x = vx0 + dvx;
            bounced = true;
        }
        state.ball_pos.x = x_end;
        state.ball_pos.y = y_end;
        state.ball_vel.y = vy_end;

        if state.ball_pos.x > w {
            state.ball_pos.x = 2.0 * w - state.ball_pos.x;
            state.ball_vel.x = -state.ball_vel.x;
            hit_wall = true;
        } else if state.ball_pos.x < -w {
            state.ball_pos.x = -2.0 * w - state.ball_pos.x;
            state.ball_vel.x = -state.ball_vel.x;
            hit_wall = true;
        }
        debug_assert!(state.ball_pos.x.abs() <= w, "wall reflection left the box");

        if state.ball_pos.y <= 0.0 {
            floor = true;
            break;
        }
    }

    state.step_idx += 1;
    state.done = floor || state.step_idx >= params.max_steps_per_session;

    let n_moves = moves.iter().filter(|m| **m).count() as f64;
    let reward = params.reward_bounce * f64::from(bounced as u8)
        + params.reward_floor * f64::from(floor as u8)
        + params.reward_move * n_moves;

    StepOutcome {
        reward,
        bounced,
        hit_wall,
        done: state.done,
        moves,
    }
}

/// Observation vectors in sensory-agent order: left arm (x, y), eye
/// (ball x, y, vx, vy), right arm (x, y). Raw physical units.
pub fn observe(state: &EnvState) -> Vec<Vec<f64>> {
    vec![
        vec![state.arm_pos[0].x, state.arm_pos[0].y],
        vec![
            state.ball_pos.x,
            state.ball_pos.y,
            state.ball_vel.x,
            state.ball_vel.y,
        ],
        vec![state.arm_pos[1].x, state.arm_pos[1].y],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn reset_places_ball_and_arms() {
        let params = EnvParams::default();
        let state = reset(&params, &mut rng(0));
        assert_eq!(state.ball_pos.y, 3.0);
        assert_eq!(state.ball_vel, Vec2::new(0.0, 0.0));
        assert_eq!(state.arm_pos[0], Vec2::new(-0.5, 1.0));
        assert_eq!(state.arm_pos[1], Vec2::new(0.5, 1.0));
        assert!(state.ball_pos.x >= -0.5 && state.ball_pos.x < 0.5);
        assert_eq!(state.step_idx, 0);
        assert!(!state.done);
    }

    #[test]
    fn reset_is_deterministic_per_seed() {
        let params = EnvParams::default();
        assert_eq!(reset(&params, &mut rng(5)), reset(&params, &mut rng(5)));
    }

    #[test]
    fn reset_drop_x_is_centered() {
        let params = EnvParams::default();
        let mut r = rng(11);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| reset(&params, &mut r).ball_pos.x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "drop-x mean {mean} is off-center");
    }

    #[test]
    fn arm_actions_move_and_clamp() {
        let params = EnvParams::default();
        let p = apply_arm_action(&params, Vec2::new(0.0, 1.0), ArmAction::Left);
        assert_eq!(p, Vec2::new(-0.15, 1.0));
        let p = apply_arm_action(&params, Vec2::new(0.0, 1.0), ArmAction::Noop);
        assert_eq!(p, Vec2::new(0.0, 1.0));
        let p = apply_arm_action(&params, Vec2::new(-0.95, 1.0), ArmAction::Left);
        assert_eq!(p, Vec2::new(-1.0, 1.0));
        let p = apply_arm_action(&params, Vec2::new(0.3, 0.2), ArmAction::Down);
        assert_eq!(p, Vec2::new(0.3, ARM_MIN_Y));
        let p = apply_arm_action(&params, Vec2::new(0.3, 2.95), ArmAction::Up);
        assert_eq!(p, Vec2::new(0.3, 3.0));
    }

    fn mid_flight_state() -> EnvState {
        EnvState {
            ball_pos: Vec2::new(0.0, 2.0),
            ball_vel: Vec2::new(0.0, 0.0),
            arm_pos: [Vec2::new(-0.5, 1.0), Vec2::new(0.5, 1.0)],
            step_idx: 0,
            done: false,
        }
    }

    #[test]
    fn paddle_bounce_awards_contact_and_preserves_speed() {
        let params = EnvParams {
            impulse_sigma: 0.0, // isolate the elastic reflection
            ..EnvParams::default()
        };
        let mut state = EnvState {
            ball_pos: Vec2::new(0.0, 1.01),
            ball_vel: Vec2::new(0.0, -6.26),
            arm_pos: [Vec2::new(0.0, 1.0), Vec2::new(0.5, 1.0)],
            step_idx: 0,
            done: false,
        };
        let e_before = state.ball_vel.y * state.ball_vel.y + 2.0 * params.gravity * state.ball_pos.y;
        let out = step(&params, &mut state, [ArmAction::Noop, ArmAction::Noop], &mut rng(0));
        assert!(out.bounced);
        assert_eq!(out.reward, 50.0);
        assert!(state.ball_vel.y > 5.0, "ball should be rising after the bounce");
        // Speed at the paddle plane right after reflection was the incoming
        // ~6.26 m/s; energy pins it despite gravity acting within the step.
        let e_after = state.ball_vel.y * state.ball_vel.y + 2.0 * params.gravity * state.ball_pos.y;
        assert!((e_before - e_after).abs() < 1e-9);
        let vy_at_paddle = (e_after - 2.0 * params.gravity * 1.0).sqrt();
        assert!((vy_at_paddle - 6.26).abs() < 0.15, "paddle-plane speed {vy_at_paddle}");
    }

    #[test]
    fn bounce_preserves_vertical_speed_exactly() {
        // |vy| momentarily before vs after the reflection is identical; across
        // a whole control step gravity acts symmetrically, so compare speeds
        // at the same height via energy: vy^2 + 2g y is invariant.
        let params = EnvParams::default();
        let mut state = EnvState {
            ball_pos: Vec2::new(0.0, 1.05),
            ball_vel: Vec2::new(0.0, -6.26),
            arm_pos: [Vec2::new(0.0, 1.0), Vec2::new(0.5, 1.0)],
            step_idx: 0,
            done: false,
        };
        let e_before = state.ball_vel.y * state.ball_vel.y + 2.0 * params.gravity * state.ball_pos.y;
        let out = step(&params, &mut state, [ArmAction::Noop, ArmAction::Noop], &mut rng(3));
        assert!(out.bounced);
        let e_after = state.ball_vel.y * state.ball_vel.y + 2.0 * params.gravity * state.ball_pos.y;
        assert!(
            (e_before - e_after).abs() < 1e-9,
            "vertical energy changed across bounce: {e_before} vs {e_after}"
        );
    }

    #[test]
    fn floor_hit_penalizes_and_finishes() {
        let params = EnvParams::default();
        let mut state = EnvState {
            ball_pos: Vec2::new(0.7, 0.05),
            ball_vel: Vec2::new(0.0, -2.0),
            arm_pos: [Vec2::new(-0.5, 1.0), Vec2::new(0.5, 1.0)],
            step_idx: 0,
            done: false,
        };
        let out = step(&params, &mut state, [ArmAction::Noop, ArmAction::Noop], &mut rng(0));
        assert!(out.done);
        assert_eq!(out.reward, -50.0);
        assert!(state.done);
    }

    #[test]
    #[should_panic(expected = "finished session")]
    fn step_after_done_is_rejected() {
        let params = EnvParams::default();
        let mut state = mid_flight_state();
        state.done = true;
        step(&params, &mut state, [ArmAction::Noop, ArmAction::Noop], &mut rng(0));
    }

    #[test]
    fn movement_penalty_counts_moving_arms() {
        let params = EnvParams::default();
        let mut state = mid_flight_state();
        let out = step(&params, &mut state, [ArmAction::Up, ArmAction::Noop], &mut rng(0));
        assert_eq!(out.reward, -0.5);
        assert_eq!(out.moves, [true, false]);

        let mut state = mid_flight_state();
        let out = step(&params, &mut state, [ArmAction::Up, ArmAction::Left], &mut rng(0));
        assert_eq!(out.reward, -1.0);
    }

    #[test]
    fn pure_ballistic_step_has_zero_reward() {
        let params = EnvParams::default();
        let mut state = mid_flight_state();
        let out = step(&params, &mut state, [ArmAction::Noop, ArmAction::Noop], &mut rng(0));
        assert_eq!(out.reward, 0.0);
        assert!(!out.bounced && !out.done);
        // One control step of free fall: dv = -g * dt.
        assert!((state.ball_vel.y + params.gravity * params.control_dt).abs() < 1e-12);
    }

    #[test]
    fn free_fall_floor_time_matches_kinematics() {
        // Arms moved far aside: first y <= 0 at sqrt(2 * 3 / g) within one
        // control step.
        let params = EnvParams::default();
        let mut state = EnvState {
            ball_pos: Vec2::new(0.0, 3.0),
            ball_vel: Vec2::new(0.0, 0.0),
            arm_pos: [Vec2::new(-1.0, ARM_MIN_Y), Vec2::new(1.0, ARM_MIN_Y)],
            step_idx: 0,
            done: false,
        };
        let mut steps = 0;
        let mut r = rng(0);
        while !state.done {
            let out = step(&params, &mut state, [ArmAction::Noop, ArmAction::Noop], &mut r);
            steps += 1;
            if out.done {
                break;
            }
        }
        let t = steps as f64 * params.control_dt;
        let expected = (2.0 * params.drop_height / params.gravity).sqrt();
        assert!(
            (t - expected).abs() <= params.control_dt,
            "floor time {t} vs expected {expected}"
        );
    }

    #[test]
    fn wall_deflection_reflects_ball() {
        let params = EnvParams::default();
        let mut state = EnvState {
            ball_pos: Vec2::new(0.95, 2.0),
            ball_vel: Vec2::new(2.0, 0.0),
            arm_pos: [Vec2::new(-0.5, 1.0), Vec2::new(0.5, 1.0)],
            step_idx: 0,
            done: false,
        };
        let out = step(&params, &mut state, [ArmAction::Noop, ArmAction::Noop], &mut rng(0));
        assert!(out.hit_wall);
        assert!(state.ball_pos.x.abs() <= params.box_half_width);
        assert!(state.ball_vel.x < 0.0, "vx should reverse at the wall");
        assert_eq!(out.reward, 0.0, "wall contact carries no reward");
    }

    #[test]
    fn random_steps_stay_contained_and_account_exactly() {
        let params = EnvParams::default();
        let mut r = rng(77);
        let mut total_steps = 0usize;
        while total_steps < 50_000 {
            let mut state = reset(&params, &mut r);
            while !state.done && total_steps < 50_000 {
                let actions = [
                    ArmAction::from_index(r.random_range(0..5)),
                    ArmAction::from_index(r.random_range(0..5)),
                ];
                let out = step(&params, &mut state, actions, &mut r);
                total_steps += 1;

                assert!(state.ball_pos.x.abs() <= params.box_half_width);
                for arm in state.arm_pos {
                    assert!(arm.x.abs() <= params.box_half_width);
                    assert!(arm.y >= ARM_MIN_Y && arm.y <= params.drop_height);
                }
                // Reward decomposes exactly into its three terms.
                let n_moves = out.moves.iter().filter(|m| **m).count() as f64;
                let floor_hit = out.done && state.ball_pos.y <= 0.0;
                let expect = params.reward_bounce * f64::from(out.bounced as u8)
                    + params.reward_floor * f64::from(floor_hit as u8)
                    + params.reward_move * n_moves;
                assert_eq!(out.reward, expect);
                assert!(out.reward.is_finite());
            }
        }
    }

    #[test]
    fn step_is_deterministic_per_rng_state() {
        let params = EnvParams::default();
        let mut s1 = mid_flight_state();
        let mut s2 = mid_flight_state();
        let mut r1 = rng(13);
        let mut r2 = rng(13);
        for _ in 0..50 {
            if s1.done {
                break;
            }
            let o1 = step(&params, &mut s1, [ArmAction::Left, ArmAction::Up], &mut r1);
            let o2 = step(&params, &mut s2, [ArmAction::Left, ArmAction::Up], &mut r2);
            assert_eq!(o1, o2);
            assert_eq!(s1, s2);
        }
    }

    #[test]
    fn observe_reports_arms_and_ball() {
        let params = EnvParams::default();
        let state = reset(&params, &mut rng(4));
        let obs = observe(&state);
        assert_eq!(obs[0], vec![-0.5, 1.0]);
        assert_eq!(obs[1], vec![state.ball_pos.x, 3.0, 0.0, 0.0]);
        assert_eq!(obs[2], vec![0.5, 1.0]);
        assert_eq!(observe(&state), obs, "observe must be pure");
    }
}
