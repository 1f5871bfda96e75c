//! Quantum graph neural network power control for device-to-device (D2D) interference
//! networks.
//!
//! The crate generates D2D interference channels, decomposes the interference graph
//! into sampled star subgraphs, and runs message passing with parameterized quantum
//! circuits on a dense statevector simulator. Models are trained without labels by
//! maximizing the weighted sum rate, and compared against a classical message-passing
//! GNN, scalar WMMSE, and an exhaustive grid-search oracle.
//!
//! Module map:
//! - [`channel`]: geometry, fading channels, SINR and weighted sum rate.
//! - [`wmmse`]: iterative WMMSE baseline and grid-search oracle.
//! - [`graph`]: interference graph features and star decomposition.
//! - [`qsim`]: statevector simulator with parameter-shift gradients.
//! - [`qgnn`]: quantum graph convolutional layers and the power decoder.
//! - [`gcn`]: classical max-aggregation message-passing baseline.
//! - [`train`]: unsupervised Adam training loop and reports.
//! - [`dataset`], [`checkpoint`], [`config`], [`cli`]: files and the command surface.

// Validation writes `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        let tol: f64 = $tol;
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod channel;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod qgnn;
pub mod qsim;
pub mod seed;
pub mod train;
pub mod wmmse;

pub use channel::{ChannelRealization, LinkBudget, PowerVector, Scenario};
pub use error::{Error, Result};
