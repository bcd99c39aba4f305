//! Joint design of terminal precoders, relay forwarding matrices and MMSE
//! decoders for two-way amplify-and-forward MIMO relay networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: ascending-ordered SVD/EVD, pseudoinverse and Hermitian solves.
//! - [`channel`]: system configuration, Rayleigh channels, noise and QPSK symbols.
//! - [`system`]: the two-slot signal chain and exact/high-SNR sum-MSE.
//! - [`power`]: the scalar power-allocation problem behind the closed form.
//! - [`design`]: the closed-form design itself.
//! - [`baseline`]: an alternating-minimization reference design.
//! - [`harness`]: seeded Monte Carlo BER sweeps.
//! - [`io`]: JSON/CSV/config-file formats shared with the CLI.
//! - [`selftest`]: fast invariant checks run by `twr selftest`.

pub mod baseline;
pub mod channel;
pub mod design;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod power;
pub mod selftest;
pub mod system;

pub use channel::{ChannelRealization, SystemConfig, Terminal};
pub use design::{design, DesignSolution};
pub use error::{Error, Result};
pub use linalg::{CMat, C64};
