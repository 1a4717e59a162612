//! Published JSON Schemas (draft 2020-12) for every response body.

pub const CASE_RECORD: &str = include_str!("../schemas/case_record.json");
pub const CASE_LIST: &str = include_str!("../schemas/case_list.json");
pub const ACTIVITY: &str = include_str!("../schemas/activity.json");
pub const OPERATIONS: &str = include_str!("../schemas/operations.json");
pub const OPERATION_DETAIL: &str = include_str!("../schemas/operation_detail.json");
pub const SIGNALS: &str = include_str!("../schemas/signals.json");
pub const ERROR: &str = include_str!("../schemas/error.json");

/// (name, document) pairs.
pub const ALL: [(&str, &str); 7] = [
    ("case_record", CASE_RECORD),
    ("case_list", CASE_LIST),
    ("activity", ACTIVITY),
    ("operations", OPERATIONS),
    ("operation_detail", OPERATION_DETAIL),
    ("signals", SIGNALS),
    ("error", ERROR),
];
