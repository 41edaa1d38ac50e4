//! Simulation toolkit for an entanglement-based shuffle-model differential
//! privacy protocol over prime-dimensional qudits.
//!
//! Each of `n` clients randomizes a value with κ-ary randomized response and
//! writes it as a phase `Z^y` onto its share of a GHZ state. After a Fourier
//! transform and a computational basis measurement every client reports a
//! uniformly random digit; the digits sum to minus the total of the randomized
//! values mod `d`, so the server learns the aggregate and nothing else.
//!
//! The crate provides two quantum backends:
//!
//! * [`statevec`]: exact dense amplitudes, exponential in `n`, used as the
//!   oracle for correctness and privacy checks.
//! * [`tableau`]: a stabilizer tableau over `Z_d` for odd prime `d`,
//!   polynomial in `n`.
//!
//! plus the classical randomizer ([`dp`]), the protocol orchestration
//! ([`protocol`]), the qudit surface-code algebra ([`surface_code`]) and a few
//! statistical helpers ([`stats`]).

pub mod arith;
pub mod dp;
pub mod error;
pub mod protocol;
pub mod rng;
pub mod statevec;
pub mod stats;
pub mod surface_code;
pub mod tableau;

pub use error::{Error, Result};
