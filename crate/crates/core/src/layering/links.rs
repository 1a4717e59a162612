use std::collections::BTreeSet;

use super::{ActionRef, Plan};

/// Minimum token-set Jaccard similarity for two action descriptions in
/// consecutive plans to count as "the same action, revised".
pub const UPDATE_LINK_THRESHOLD: f64 = 0.6;

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize_description(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Jaccard similarity of the whitespace token sets of two normalized strings.
/// Two empty strings are identical (1.0).
pub fn jaccard(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<&str> = a.split_whitespace().collect();
    let tb: BTreeSet<&str> = b.split_whitespace().collect();
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// Links each action of plan `i` to its counterpart in plan `i + 1`.
///
/// An identical normalized description sets `carried_to`; otherwise the most
/// similar action at or above [`UPDATE_LINK_THRESHOLD`] sets `update_link`.
/// Ties resolve to the lowest index.
pub fn link_plan_updates(plans: &mut [Plan]) {
    for i in 0..plans.len().saturating_sub(1) {
        let next: Vec<(usize, String)> = plans[i + 1]
            .actions
            .iter()
            .map(|a| (a.index, normalize_description(&a.description)))
            .collect();
        let to_plan = plans[i + 1].index;
        for action in &mut plans[i].actions {
            action.update_link = None;
            action.carried_to = None;
            let mine = normalize_description(&action.description);
            if let Some((k, _)) = next.iter().find(|(_, d)| *d == mine) {
                action.carried_to = Some(ActionRef {
                    to_plan,
                    to_action: *k,
                });
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (k, d) in &next {
                let s = jaccard(&mine, d);
                if s >= UPDATE_LINK_THRESHOLD && best.is_none_or(|(_, b)| s > b) {
                    best = Some((*k, s));
                }
            }
            action.update_link = best.map(|(k, _)| ActionRef {
                to_plan,
                to_action: k,
            });
        }
    }
}
