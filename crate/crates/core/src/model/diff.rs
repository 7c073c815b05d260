use super::{Strategy, TaskId};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PositionChange {
    pub index: usize,
    pub before: Option<TaskId>,
    pub after: Option<TaskId>,
}

/// Task-level difference between two plans.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanDiff {
    /// Number of leading tasks that are identical, ids included.
    pub shared_prefix: usize,
    /// Ids only in the second plan, in its order.
    pub added: Vec<TaskId>,
    /// Ids only in the first plan, in its order.
    pub removed: Vec<TaskId>,
    /// Ids in both plans whose task definitions differ, in first-plan order.
    pub changed: Vec<TaskId>,
    /// Positions past the shared prefix where the plans disagree.
    pub positional: Vec<PositionChange>,
}

impl PlanDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty()
            && self.removed.is_empty()
            && self.changed.is_empty()
            && self.positional.is_empty()
    }
}

pub fn diff_plans(a: &Strategy, b: &Strategy) -> PlanDiff {
    let shared_prefix = a
        .tasks
        .iter()
        .zip(&b.tasks)
        .take_while(|(x, y)| x == y)
        .count();

    let in_b: HashMap<_, _> = b.tasks.iter().map(|t| (&t.id, t)).collect();
    let in_a: HashMap<_, _> = a.tasks.iter().map(|t| (&t.id, t)).collect();

    let mut diff = PlanDiff {
        shared_prefix,
        ..PlanDiff::default()
    };
    for task in &a.tasks {
        match in_b.get(&task.id) {
            None => diff.removed.push(task.id.clone()),
            Some(other) if *other != task => diff.changed.push(task.id.clone()),
            Some(_) => {}
        }
    }
    for task in &b.tasks {
        if !in_a.contains_key(&task.id) {
            diff.added.push(task.id.clone());
        }
    }
    for index in shared_prefix..a.tasks.len().max(b.tasks.len()) {
        let before = a.tasks.get(index);
        let after = b.tasks.get(index);
        if before != after {
            diff.positional.push(PositionChange {
                index,
                before: before.map(|t| t.id.clone()),
                after: after.map(|t| t.id.clone()),
            });
        }
    }
    diff
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identical_plans_have_empty_diff() {
        let s = fixtures::novel_strategy();
        let d = diff_plans(&s, &s);
        assert!(d.is_empty());
        assert_eq!(d.shared_prefix, s.tasks.len());
    }

    #[test]
    fn merging_last_two_steps() {
        let base = fixtures::novel_strategy();
        let merged = fixtures::novel_strategy_merged_ending();
        let d = diff_plans(&base, &merged);
        let n = base.tasks.len();
        assert_eq!(d.removed, vec![base.tasks[n - 1].id.clone()]);
        assert_eq!(d.changed, vec![base.tasks[n - 2].id.clone()]);
        assert!(d.added.is_empty());
        assert_eq!(d.shared_prefix, n - 2);
    }

    #[test]
    fn disjoint_ids_are_all_added_and_removed() {
        let a = fixtures::chain_strategy(3);
        let mut b = a.clone();
        for t in &mut b.tasks {
            t.id = TaskId::new(format!("other-{}", t.id));
        }
        let d = diff_plans(&a, &b);
        assert_eq!(d.shared_prefix, 0);
        assert_eq!(d.removed.len(), 3);
        assert_eq!(d.added.len(), 3);
        assert!(d.changed.is_empty());
    }
}
