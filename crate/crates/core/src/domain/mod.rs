//! Milestones, journey records and the data rules around them.

mod attribution;
mod milestone;
mod prep;
mod records;
mod validate;

pub use attribution::attribute_labels;
pub use milestone::{LabelRule, LabelVector, Milestone};
pub use prep::{
    attribute_dataset, drop_post_booking_impressions, empirical_task_weight,
    filter_training_searches, guest_bucket, split_by_guest, FilterReport,
};
pub use records::{
    Dataset, ImpressionRecord, JourneyRecord, Outcome, Schema, SearchRecord, DAYS_AHEAD,
    NUM_PREVIOUS_SEARCHES,
};
pub use validate::{validate_dataset, ValidationReport, Violation};
