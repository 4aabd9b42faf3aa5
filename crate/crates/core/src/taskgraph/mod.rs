//! The directed task graph: step generation from an overall task prompt,
//! reversibility edges between adjacent steps, and the fixed transition
//! matrix derived from graph structure.

pub mod io;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{ChatSession, ProviderError};

#[derive(Debug, Error)]
pub enum GraphError {
    /// A graph file (or constructed graph) violates the schema; the pointer
    /// names the offending JSON location.
    #[error("schema violation at {pointer}: {detail}")]
    SchemaViolation { pointer: String, detail: String },
    /// The generation could not be read as steps or as a yes/no answer.
    #[error("unparsable reply: {0}")]
    UnparsableReply(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),
}

/// One task step: the hidden state value of the filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intention {
    pub id: usize,
    pub description: String,
    #[serde(rename = "objects")]
    pub required_objects: Vec<String>,
}

impl Intention {
    pub fn new(id: usize, description: impl Into<String>, objects: Vec<String>) -> Self {
        Self {
            id,
            description: description.into(),
            required_objects: objects,
        }
    }
}

/// Directed graph of intentions. Vertices are task steps; edges are feasible
/// orders between steps. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskGraph {
    /// The overall task prompt the graph was built for.
    pub task: String,
    intentions: Vec<Intention>,
    edges: BTreeSet<(usize, usize)>,
    start_ids: BTreeSet<usize>,
}

impl TaskGraph {
    /// Validates ids, edges, the start set, and reachability.
    pub fn new(
        task: impl Into<String>,
        intentions: Vec<Intention>,
        edges: BTreeSet<(usize, usize)>,
        start_ids: BTreeSet<usize>,
    ) -> Result<Self, GraphError> {
        let graph = Self {
            task: task.into(),
            intentions,
            edges,
            start_ids,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Builds a graph deriving the start set from in-degree: starts are the
    /// nodes with no incoming edge from a distinct node.
    pub fn with_derived_starts(
        task: impl Into<String>,
        intentions: Vec<Intention>,
        edges: BTreeSet<(usize, usize)>,
    ) -> Result<Self, GraphError> {
        let n = intentions.len();
        let mut has_incoming = vec![false; n];
        for &(_, to) in &edges {
            if to < n {
                has_incoming[to] = true;
            }
        }
        let start_ids: BTreeSet<usize> = (0..n).filter(|&i| !has_incoming[i]).collect();
        Self::new(task, intentions, edges, start_ids)
    }

    fn validate(&self) -> Result<(), GraphError> {
        let n = self.intentions.len();
        if n == 0 {
            return Err(GraphError::SchemaViolation {
                pointer: "/intentions".into(),
                detail: "a task graph needs at least one intention".into(),
            });
        }
        for (i, intent) in self.intentions.iter().enumerate() {
            if intent.id != i {
                return Err(GraphError::SchemaViolation {
                    pointer: format!("/intentions/{i}/id"),
                    detail: format!("ids must be contiguous from 0; found {}", intent.id),
                });
            }
            if intent.description.trim().is_empty() {
                return Err(GraphError::SchemaViolation {
                    pointer: format!("/intentions/{i}/description"),
                    detail: "description must be non-empty".into(),
                });
            }
        }
        for (k, &(from, to)) in self.edges.iter().enumerate() {
            if from >= n || to >= n {
                return Err(GraphError::SchemaViolation {
                    pointer: format!("/edges/{k}"),
                    detail: format!("edge ({from}, {to}) points outside 0..{n}"),
                });
            }
            if from == to {
                return Err(GraphError::SchemaViolation {
                    pointer: format!("/edges/{k}"),
                    detail: "self-edges are not stored; self-transition is the filter's job".into(),
                });
            }
        }
        if self.start_ids.is_empty() {
            return Err(GraphError::SchemaViolation {
                pointer: "/start_ids".into(),
                detail: "the start set must be non-empty".into(),
            });
        }
        if let Some(&bad) = self.start_ids.iter().find(|&&s| s >= n) {
            return Err(GraphError::SchemaViolation {
                pointer: "/start_ids".into(),
                detail: format!("start id {bad} points outside 0..{n}"),
            });
        }
        // Every non-start node must be reachable from some start node.
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = self.start_ids.iter().copied().collect();
        for &s in &self.start_ids {
            seen[s] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &(from, to) in &self.edges {
                if from == u && !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        if let Some(unreachable) = seen.iter().position(|&s| !s) {
            return Err(GraphError::SchemaViolation {
                pointer: format!("/intentions/{unreachable}"),
                detail: "node unreachable from the start set".into(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.intentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intentions.is_empty()
    }

    pub fn intentions(&self) -> &[Intention] {
        &self.intentions
    }

    pub fn intention(&self, id: usize) -> Option<&Intention> {
        self.intentions.get(id)
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn start_ids(&self) -> &BTreeSet<usize> {
        &self.start_ids
    }

    /// Successor ids of `id`, ascending.
    pub fn successors(&self, id: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(from, _)| *from == id)
            .map(|&(_, to)| to)
            .collect()
    }

    /// Exactly the `(current, next)` pairs the estimator must price each
    /// step: every self-pair plus every edge.
    pub fn transition_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<(usize, usize)> = (0..self.len()).map(|i| (i, i)).collect();
        pairs.extend(self.edges.iter().copied());
        pairs
    }
}

/// Row-stochastic matrix over intentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    const ROW_SUM_TOLERANCE: f64 = 1e-9;

    /// Validates shape, non-negativity, and row sums (within 1e-9).
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
                return Err(GraphError::InvalidMatrix(format!(
                    "row {i} has invalid entry {bad}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > Self::ROW_SUM_TOLERANCE {
                return Err(GraphError::InvalidMatrix(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// True when every positive entry lies on the diagonal or an edge.
    pub fn respects(&self, graph: &TaskGraph) -> bool {
        self.rows.iter().enumerate().all(|(i, row)| {
            row.iter()
                .enumerate()
                .all(|(j, &v)| v == 0.0 || i == j || graph.edges().contains(&(i, j)))
        })
    }
}

/// Transition model using graph structure alone: `p_stay` on the diagonal
/// and the remainder split uniformly over successors. Nodes without
/// successors are absorbing.
pub fn fixed_transition_matrix(graph: &TaskGraph, p_stay: f64) -> TransitionMatrix {
    debug_assert!(p_stay > 0.0 && p_stay <= 1.0, "p_stay must lie in (0, 1]");
    let n = graph.len();
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        let successors = graph.successors(i);
        if successors.is_empty() {
            row[i] = 1.0;
        } else {
            row[i] = p_stay;
            let share = (1.0 - p_stay) / successors.len() as f64;
            for j in successors {
                row[j] = share;
            }
        }
    }
    TransitionMatrix::new(rows).expect("constructed rows are stochastic")
}

/// Steps parsed out of a generation, with any unknown-object warnings.
#[derive(Debug)]
pub struct GeneratedSteps {
    pub steps: Vec<Intention>,
    pub warnings: Vec<String>,
}

const STEP_FORMAT_PREAMBLE: &str = "You plan the steps of a task. Reply with one line per step, \
formatted exactly as 'STEP: <step description> | OBJECTS: <comma-separated objects>'. \
Use only objects from the available list where possible.";

fn step_generation_prompt(task: &str, objects: &[String]) -> String {
    format!(
        "{STEP_FORMAT_PREAMBLE}\nThe overall task is: {task}\nAvailable objects: {}",
        objects.join(", ")
    )
}

fn parse_steps(reply: &str) -> Vec<(String, Vec<String>)> {
    static LINE: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = LINE.get_or_init(|| {
        regex::Regex::new(r"^STEP:\s*(.+?)\s*\|\s*OBJECTS:\s*(.*)$").expect("valid regex")
    });
    reply
        .lines()
        .filter_map(|line| {
            let caps = re.captures(line.trim())?;
            let description = caps[1].to_string();
            let objects = caps[2]
                .split(',')
                .map(|o| o.trim().to_string())
                .filter(|o| !o.is_empty())
                .collect();
            Some((description, objects))
        })
        .collect()
}

/// Queries the generator for an ordered list of task steps with their
/// required objects. Objects outside the available list are kept but
/// flagged with a warning.
pub fn generate_steps(
    task: &str,
    objects: &[String],
    session: &ChatSession,
) -> Result<GeneratedSteps, GraphError> {
    let prompt = step_generation_prompt(task, objects);
    let retries = session.spec().max_retries;
    for _ in 0..=retries {
        let parsed = session.call("step-generation", &prompt, |raw| {
            let steps = parse_steps(raw);
            if steps.is_empty() {
                (serde_json::Value::Null, None)
            } else {
                (serde_json::json!(steps), Some(steps))
            }
        })?;
        if let Some(parsed) = parsed {
            let mut warnings = Vec::new();
            let steps = parsed
                .into_iter()
                .enumerate()
                .map(|(id, (description, step_objects))| {
                    for obj in &step_objects {
                        if !objects.contains(obj) {
                            let w = format!(
                                "step {id} ({description:?}) needs {obj:?}, \
                                 which is not among the available objects"
                            );
                            log::warn!("{w}");
                            warnings.push(w);
                        }
                    }
                    Intention::new(id, description, step_objects)
                })
                .collect();
            return Ok(GeneratedSteps { steps, warnings });
        }
    }
    Err(GraphError::UnparsableReply(
        "no 'STEP: ... | OBJECTS: ...' lines found".into(),
    ))
}

fn reversibility_prompt(a: &Intention, b: &Intention) -> String {
    format!(
        "Can the order of the adjacent steps \"{}\" and \"{}\" be reversed \
         without affecting the outcome of the task? Answer yes or no.",
        a.description, b.description
    )
}

fn parse_yes_no(reply: &str) -> Option<bool> {
    static WORD: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = WORD.get_or_init(|| regex::Regex::new(r"(?i)\b(yes|no)\b").expect("valid regex"));
    re.captures(reply).map(|c| c[1].eq_ignore_ascii_case("yes"))
}

/// Builds the task graph from a step chain: chain edges `i -> i+1`, plus the
/// reverse edge for each adjacent pair the oracle judges reversible. The
/// start set is step 0, joined by step 1 when the first pair is reversible.
///
/// Reversibility is asked only for adjacent pairs, and no bypass edges are
/// synthesized beyond the reverse edge; both orders of a reversible pair
/// remain traversable through it.
pub fn add_reversibility_edges(
    task: &str,
    chain: Vec<Intention>,
    session: &ChatSession,
) -> Result<TaskGraph, GraphError> {
    let mut edges = BTreeSet::new();
    for i in 0..chain.len().saturating_sub(1) {
        edges.insert((i, i + 1));
    }
    let mut start_ids = BTreeSet::new();
    start_ids.insert(0);

    for i in 0..chain.len().saturating_sub(1) {
        let prompt = reversibility_prompt(&chain[i], &chain[i + 1]);
        let retries = session.spec().max_retries;
        let mut answer = None;
        for _ in 0..=retries {
            let parsed = session.call("reversibility", &prompt, |raw| match parse_yes_no(raw) {
                Some(v) => (serde_json::json!(v), Some(v)),
                None => (serde_json::Value::Null, None),
            })?;
            if parsed.is_some() {
                answer = parsed;
                break;
            }
        }
        let reversible = answer.ok_or_else(|| {
            GraphError::UnparsableReply(format!(
                "reversibility answer for pair ({i}, {}) contains neither yes nor no",
                i + 1
            ))
        })?;
        if reversible {
            edges.insert((i + 1, i));
            if i == 0 {
                start_ids.insert(1);
            }
        }
    }

    TaskGraph::new(task, chain, edges, start_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{GeneratorSpec, Matcher, MockRule, ResponseMode, ScriptedMock};
    use std::sync::Arc;

    pub(crate) fn salad_chain() -> Vec<Intention> {
        vec![
            Intention::new(0, "slice tomatoes", vec!["tomato".into(), "knife".into()]),
            Intention::new(
                1,
                "slice cucumbers",
                vec!["cucumber".into(), "knife".into()],
            ),
            Intention::new(
                2,
                "put tomatoes and cucumbers in a bowl",
                vec!["bowl".into()],
            ),
            Intention::new(
                3,
                "put salad dressing on tomatoes and cucumbers",
                vec!["dressing".into()],
            ),
            Intention::new(
                4,
                "stir and mix the salad with a spoon",
                vec!["spoon".into()],
            ),
        ]
    }

    pub(crate) fn salad_graph() -> TaskGraph {
        let edges: BTreeSet<(usize, usize)> = [(0, 1), (1, 0), (1, 2), (2, 3), (3, 4)]
            .into_iter()
            .collect();
        TaskGraph::new(
            "make a salad",
            salad_chain(),
            edges,
            [0usize, 1].into_iter().collect(),
        )
        .unwrap()
    }

    fn session(mock: ScriptedMock) -> ChatSession {
        ChatSession::new(Arc::new(mock), GeneratorSpec::default())
    }

    #[test]
    fn generate_steps_parses_the_salad_plan() {
        let reply = "STEP: slice tomatoes | OBJECTS: tomato, knife\n\
                     STEP: slice cucumbers | OBJECTS: cucumber, knife\n\
                     STEP: put tomatoes and cucumbers in a bowl | OBJECTS: bowl\n\
                     STEP: put salad dressing on tomatoes and cucumbers | OBJECTS: dressing\n\
                     STEP: stir and mix the salad with a spoon | OBJECTS: spoon";
        let objects: Vec<String> = ["tomato", "knife", "cucumber", "bowl", "dressing", "spoon"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = generate_steps(
            "make a salad",
            &objects,
            &session(ScriptedMock::single("overall task", reply)),
        )
        .unwrap();
        assert_eq!(out.steps, salad_chain());
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn generate_steps_minimal_and_unknown_object_cases() {
        let out = generate_steps(
            "boil water",
            &["kettle".to_string()],
            &session(ScriptedMock::single(
                "overall task",
                "STEP: boil water | OBJECTS: kettle",
            )),
        )
        .unwrap();
        assert_eq!(out.steps.len(), 1);

        let out = generate_steps(
            "chop",
            &["board".to_string()],
            &session(ScriptedMock::single(
                "overall task",
                "STEP: chop | OBJECTS: knife",
            )),
        )
        .unwrap();
        assert_eq!(out.steps[0].required_objects, vec!["knife"]);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("knife"));
    }

    #[test]
    fn generate_steps_rejects_unusable_generations() {
        let err = generate_steps(
            "task",
            &[],
            &session(ScriptedMock::single("overall task", "no structure here")),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::UnparsableReply(_)));
    }

    #[test]
    fn reversibility_yes_adds_reverse_edge_and_start() {
        let mock = ScriptedMock::new(
            vec![
                MockRule {
                    matcher: Matcher::Substring(
                        "\"slice tomatoes\" and \"slice cucumbers\"".into(),
                    ),
                    mode: ResponseMode::Cycle(vec!["Yes, they can.".into()]),
                },
                MockRule {
                    matcher: Matcher::Substring("Answer yes or no".into()),
                    mode: ResponseMode::Cycle(vec!["No.".into()]),
                },
            ],
            0,
        )
        .unwrap();
        let graph = add_reversibility_edges("make a salad", salad_chain(), &session(mock)).unwrap();
        let expected: BTreeSet<(usize, usize)> = [(0, 1), (1, 0), (1, 2), (2, 3), (3, 4)]
            .into_iter()
            .collect();
        assert_eq!(graph.edges(), &expected);
        let starts: Vec<usize> = graph.start_ids().iter().copied().collect();
        assert_eq!(starts, vec![0, 1]);
    }

    #[test]
    fn all_no_answers_yield_a_simple_chain() {
        let chain = vec![
            Intention::new(0, "first", vec![]),
            Intention::new(1, "second", vec![]),
        ];
        let graph = add_reversibility_edges(
            "two steps",
            chain,
            &session(ScriptedMock::single("Answer yes or no", "no")),
        )
        .unwrap();
        assert_eq!(graph.edges().len(), 1);
        assert!(graph.edges().contains(&(0, 1)));
        assert_eq!(
            graph.start_ids().iter().copied().collect::<Vec<_>>(),
            vec![0]
        );
    }

    #[test]
    fn two_step_reversible_pair_is_symmetric() {
        let chain = vec![
            Intention::new(0, "first", vec![]),
            Intention::new(1, "second", vec![]),
        ];
        let graph = add_reversibility_edges(
            "two steps",
            chain,
            &session(ScriptedMock::single("Answer yes or no", "yes")),
        )
        .unwrap();
        let expected: BTreeSet<(usize, usize)> = [(0, 1), (1, 0)].into_iter().collect();
        assert_eq!(graph.edges(), &expected);
        assert_eq!(
            graph.start_ids().iter().copied().collect::<Vec<_>>(),
            vec![0, 1]
        );
    }

    #[test]
    fn ambiguous_reversibility_answer_is_unparsable() {
        // "know" must not read as "no".
        let err = add_reversibility_edges(
            "two steps",
            vec![
                Intention::new(0, "first", vec![]),
                Intention::new(1, "second", vec![]),
            ],
            &session(ScriptedMock::single("Answer yes or no", "I do not know")),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::UnparsableReply(_)));
    }

    #[test]
    fn fixed_matrix_on_a_chain() {
        let chain = TaskGraph::new(
            "chain",
            vec![
                Intention::new(0, "A", vec![]),
                Intention::new(1, "B", vec![]),
                Intention::new(2, "C", vec![]),
            ],
            [(0, 1), (1, 2)].into_iter().collect(),
            [0].into_iter().collect(),
        )
        .unwrap();
        let m = fixed_transition_matrix(&chain, 0.6);
        assert_eq!(
            m.rows(),
            &[
                vec![0.6, 0.4, 0.0],
                vec![0.0, 0.6, 0.4],
                vec![0.0, 0.0, 1.0],
            ]
        );
        assert!(m.respects(&chain));
    }

    #[test]
    fn fixed_matrix_edge_cases() {
        let single = TaskGraph::new(
            "one",
            vec![Intention::new(0, "only", vec![])],
            BTreeSet::new(),
            [0].into_iter().collect(),
        )
        .unwrap();
        assert_eq!(fixed_transition_matrix(&single, 0.6).rows(), &[vec![1.0]]);

        let fork = TaskGraph::new(
            "fork",
            vec![
                Intention::new(0, "root", vec![]),
                Intention::new(1, "left", vec![]),
                Intention::new(2, "right", vec![]),
            ],
            [(0, 1), (0, 2)].into_iter().collect(),
            [0].into_iter().collect(),
        )
        .unwrap();
        let m = fixed_transition_matrix(&fork, 0.5);
        assert_eq!(m.row(0), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn transition_pairs_enumerates_self_pairs_and_edges() {
        let two = TaskGraph::new(
            "two",
            vec![
                Intention::new(0, "A", vec![]),
                Intention::new(1, "B", vec![]),
            ],
            [(0, 1)].into_iter().collect(),
            [0].into_iter().collect(),
        )
        .unwrap();
        assert_eq!(two.transition_pairs(), vec![(0, 0), (1, 1), (0, 1)]);

        assert_eq!(salad_graph().transition_pairs().len(), 10);

        let single = TaskGraph::new(
            "one",
            vec![Intention::new(0, "A", vec![])],
            BTreeSet::new(),
            [0].into_iter().collect(),
        )
        .unwrap();
        assert_eq!(single.transition_pairs(), vec![(0, 0)]);
    }

    #[test]
    fn graph_invariants_are_enforced() {
        // Edge to an unknown id.
        let err = TaskGraph::new(
            "bad",
            vec![Intention::new(0, "A", vec![])],
            [(0, 99)].into_iter().collect(),
            [0].into_iter().collect(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::SchemaViolation { .. }));

        // Unreachable node.
        let err = TaskGraph::new(
            "island",
            vec![
                Intention::new(0, "A", vec![]),
                Intention::new(1, "B", vec![]),
            ],
            BTreeSet::new(),
            [0].into_iter().collect(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::SchemaViolation { .. }));

        // Self-edge.
        let err = TaskGraph::new(
            "selfy",
            vec![Intention::new(0, "A", vec![])],
            [(0, 0)].into_iter().collect(),
            [0].into_iter().collect(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::SchemaViolation { .. }));
    }

    #[test]
    fn derived_starts_are_the_in_degree_zero_nodes() {
        let graph = TaskGraph::with_derived_starts(
            "chain",
            vec![
                Intention::new(0, "A", vec![]),
                Intention::new(1, "B", vec![]),
            ],
            [(0, 1)].into_iter().collect(),
        )
        .unwrap();
        assert_eq!(
            graph.start_ids().iter().copied().collect::<Vec<_>>(),
            vec![0]
        );
    }
}
