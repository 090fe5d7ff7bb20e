//! Macroscopic urban traffic network simulation with closed-loop, distributed
//! hybrid signal control.
//!
//! The crate is organised bottom-up:
//!
//! - [`network`]: topology plus cell-transmission link dynamics and
//!   signal-gated, saturation-flow-bounded intersection transfers.
//! - [`estimation`]: moving-average branching (turning) ratio estimation.
//! - [`congestion`]: per-link congestion forecasting, level identification
//!   and region-growing partitioning of the link graph.
//! - [`control`]: pre-timed, SCATS-like, rollout-optimized and hybrid signal
//!   control.
//! - [`coordination`]: staged handling of fixed-plan regions and
//!   Lagrangian-price reconciliation of boundary flows between optimized
//!   regions.
//! - [`harness`]: scenario files, the closed-loop experiment runner and the
//!   metrics CSV.
//!
//! Data-parallel loops (candidate rollouts, region solves, per-link
//! forecasting, per-strategy experiments) go through [`par`], which uses
//! rayon when the `parallel` feature is enabled and plain iteration otherwise.

// Negated float comparisons in validation also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod congestion;
pub mod control;
pub mod coordination;
pub mod estimation;
pub mod harness;
pub mod network;
pub mod par;
