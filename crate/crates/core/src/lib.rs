//! Hierarchical diffusion motion planning in which the corruption process is
//! a task-conditioned Gaussian obtained by conditioning a constant-velocity
//! Gaussian-process prior on sparse key states.
//!
//! The crate is organized bottom-up:
//!
//! - [`gp_prior`]: the unconditioned trajectory prior `N(μ̃, K̃)`.
//! - [`structured_prior`]: conditioning on key states, gain caching, sampling
//!   and the Mahalanobis norm.
//! - [`diffusion`]: schedules and the biased, non-isotropic forward/reverse
//!   kernels.
//! - [`denoiser`]: the residual MLP denoiser, its loss and training loop.
//! - [`maze`]: occupancy maps, expert data and task sampling.
//! - [`hierarchy`]: key-state extraction, the upper-level waypoint model and
//!   the full planner with its four ablation variants.
//! - [`evaluation`]: success and velocity-consistency metrics, the ablation
//!   harness.

pub mod config;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod gp_prior;
pub mod hierarchy;
mod linalg;
pub mod maze;
pub mod rng;
pub mod structured_prior;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::Trajectory;
