//! The 12-condition counterbalancing of task pair, task order and system
//! order used to assign study participants.

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    A,
    B,
    C,
}

impl Task {
    pub fn topic(self) -> &'static str {
        match self {
            Task::A => "Spending less time on phone",
            Task::B => "Spending more time outdoors",
            Task::C => "Taking care of your mind",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskPair {
    AB,
    BC,
    AC,
}

impl TaskPair {
    pub fn tasks(self) -> (Task, Task) {
        match self {
            TaskPair::AB => (Task::A, Task::B),
            TaskPair::BC => (Task::B, Task::C),
            TaskPair::AC => (Task::A, Task::C),
        }
    }
}

/// The tool used in a study session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum System {
    /// The two-stage brainstorm/refine tool.
    StructuredSystem,
    /// A linear chat interface.
    ChatBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibdCondition {
    pub condition_id: u8,
    pub task_pair: TaskPair,
    pub task_order: (Task, Task),
    pub system_order: (System, System),
}

const S: System = System::StructuredSystem;
const C: System = System::ChatBaseline;

const fn row(
    condition_id: u8,
    task_pair: TaskPair,
    task_order: (Task, Task),
    system_order: (System, System),
) -> BibdCondition {
    BibdCondition {
        condition_id,
        task_pair,
        task_order,
        system_order,
    }
}

const TABLE: [BibdCondition; 12] = [
    row(1, TaskPair::AB, (Task::A, Task::B), (S, C)),
    row(2, TaskPair::AB, (Task::A, Task::B), (C, S)),
    row(3, TaskPair::AB, (Task::B, Task::A), (S, C)),
    row(4, TaskPair::AB, (Task::B, Task::A), (C, S)),
    row(5, TaskPair::BC, (Task::B, Task::C), (S, C)),
    row(6, TaskPair::BC, (Task::B, Task::C), (C, S)),
    row(7, TaskPair::BC, (Task::C, Task::B), (S, C)),
    row(8, TaskPair::BC, (Task::C, Task::B), (C, S)),
    row(9, TaskPair::AC, (Task::A, Task::C), (S, C)),
    row(10, TaskPair::AC, (Task::A, Task::C), (C, S)),
    row(11, TaskPair::AC, (Task::C, Task::A), (S, C)),
    row(12, TaskPair::AC, (Task::C, Task::A), (C, S)),
];

pub fn bibd_table() -> &'static [BibdCondition; 12] {
    &TABLE
}

pub fn bibd_condition(index: u8) -> Result<BibdCondition, EvalError> {
    match index {
        1..=12 => Ok(TABLE[index as usize - 1]),
        _ => Err(EvalError::Range {
            what: "condition index",
            value: index as f64,
            min: 1.0,
            max: 12.0,
        }),
    }
}

/// Condition for the `k`-th enrolled participant (0-based), cycling through
/// the table so every condition is used equally often.
pub fn assign_participant(k: usize) -> BibdCondition {
    TABLE[k % TABLE.len()]
}
