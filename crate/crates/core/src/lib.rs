//! Diffeomorphism-invariant dissimilarity (DID) between sampled signals.
//!
//! `did(f, g)` asks how well every masked region of the reference `f` can be
//! matched, in distribution of output values, by some reweighting of the
//! target `g`. It is computed in closed form from two kernel integral
//! operators, discretized by quadrature over the samples and compressed with
//! Nystrom landmarks on the input domain and the output (color) space.
//!
//! Modules:
//! - [`kernels`]: Gaussian/Laplace kernels, Gram matrices, jittered Cholesky.
//! - [`signal`]: sampled signals, images, Blackman/uniform masks, patches.
//! - [`nystrom`]: landmark selection.
//! - [`did`](mod@did): the estimator, power iteration and witness functions.
//! - [`warp`]: random smooth warps, rotation, RMSE.
//! - [`oracle`]: dense reference computations and random-regime baselines.
//! - [`experiment`]: warping, rotation and regularization sweeps with CSV output.

pub mod did;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod nystrom;
pub mod oracle;
pub mod par;
pub mod scene;
pub mod signal;
pub mod warp;

pub use crate::did::{did, did_with_factors, DidConfig, DidResult, LandmarkFactors, PreparedPair};
pub use crate::error::{DidError, Result};
pub use crate::kernels::{KernelFamily, KernelSpec, PointSet};
pub use crate::signal::{MaskKind, SampledSignal};
