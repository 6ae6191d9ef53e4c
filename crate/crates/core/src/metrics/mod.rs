//! Evaluation suite for binary window-state predictions. "Open" is the
//! positive class throughout.

mod agreement;
mod behavior;
mod confusion;
mod roc;

pub use agreement::adjusted_rand_index;
pub use behavior::{
    behavior_summary, duration_stats, ActionCount, BehaviorSummary, DurationStats, Quartiles,
    Sequence, SequenceKind,
};
pub use confusion::{confusion, rates, ConfusionMatrix, Rates};
pub use roc::{mann_whitney_auc, roc, Roc};
