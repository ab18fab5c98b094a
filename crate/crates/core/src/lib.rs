//! Examination assembly from a tagged problem bank.
//!
//! * [`bank`]: problems, metadata, on-disk format and usage history.
//! * [`selector`]: exact-target uniform sampling of exam drafts.
//! * [`session`]: the iterative pin/rerun/accept loop and its transcript.
//! * [`composer`]: LaTeX rendering of examination and solutions documents.

pub mod bank;
pub mod composer;
pub mod rng;
pub mod selector;
pub mod session;
mod wire;

pub use bank::{Bank, BankError, Problem};
pub use selector::{Blueprint, DecisionVector, ExamDraft, SelectionError, SlotChoice};
