//! Joint optimization of random-linear-network-coding bucket sizes and
//! time-division scheduling for delay-sensitive receivers on packet erasure
//! broadcast channels, plus a Monte-Carlo coding simulator that checks the
//! analytic delay formulas.
//!
//! * [`model`]: instances, solutions, validation, JSON config.
//! * [`delay`]: closed-form single-receiver analytics.
//! * [`posy`]: monomial / posynomial / signomial algebra and the log-space convex form.
//! * [`gp`]: barrier-method geometric-program solver.
//! * [`programs`]: single-AP max-min GP, multi-AP signomial program, successive condensation.
//! * [`sim`]: GF(256) RLNC coding and the slotted broadcast simulator.
//! * [`experiments`]: trade-off curves and the adaptive vs fixed bucket-size sweep.
//! * [`cli`]: the `bucketopt` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod delay;
pub mod experiments;
pub mod export;
pub mod gp;
pub mod model;
pub mod posy;
pub mod programs;
pub mod sim;
