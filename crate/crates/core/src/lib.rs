//! A multi-agent model of sensorimotor control trained on a 2D
//! ball-juggling task.
//!
//! The agent graph consists of sensory agents (left arm, eye, right arm)
//! and motor units (an M-net that emits messages plus a Q-net that values
//! actions), exchanging fixed-width messages that arrive one control step
//! after they are sent. Q-nets are trained online by semi-gradient
//! temporal-difference learning, with gradients flowing back through the
//! message-producing networks of the previous step while their own inputs
//! are held constant.
//!
//! Module map:
//! - [`nn`]: dense networks, backprop, SGD, finite-difference oracle
//! - [`cortex`]: the agent graph and the delayed message board
//! - [`env`]: the juggling environment
//! - [`trainer`]: action selection, TD training step, session/epoch loop
//! - [`stats`]: dominance fractions, pooled t-tests, Student-t CDF
//! - [`checkpoint`]: binary model files
//! - [`config`], [`harness`], [`plot`]: the operator surface

pub mod checkpoint;
pub mod config;
pub mod cortex;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod plot;
pub mod stats;
pub mod trainer;

pub use config::{load_config, parse_config, RunConfig};
pub use cortex::{stream_count, CortexConfig, CortexState};
pub use env::{ArmAction, EnvParams, EnvState, StepOutcome};
pub use error::{Error, Result};
pub use nn::{fd_gradient, Activation, Gradients, Mlp, Tape};
pub use stats::{dominance_fraction, pooled_t_test, student_t_cdf, EpochRecord, TTestResult};
pub use trainer::{
    run_session, run_training, select_action, td_target, train_step, Mode, SessionResult,
    TrainConfig, TransitionTape,
};
