//! Task-graph JSON persistence.
//!
//! Schema: `{"task": str, "intentions": [{"id": int, "description": str,
//! "objects": [str]}], "edges": [[from, to]], "start_ids": [int]}`.
//! Parse errors carry the JSON-pointer path of the offending element.

use std::collections::BTreeSet;

use serde_json::Value;

use super::{GraphError, Intention, TaskGraph};

fn violation(pointer: impl Into<String>, detail: impl Into<String>) -> GraphError {
    GraphError::SchemaViolation {
        pointer: pointer.into(),
        detail: detail.into(),
    }
}

fn field<'v>(obj: &'v Value, pointer: &str, key: &str) -> Result<&'v Value, GraphError> {
    obj.get(key)
        .ok_or_else(|| violation(format!("{pointer}/{key}"), "missing field"))
}

fn as_usize(v: &Value, pointer: &str) -> Result<usize, GraphError> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| violation(pointer, "expected a non-negative integer"))
}

#[derive(serde::Serialize)]
struct GraphFile<'a> {
    task: &'a str,
    intentions: Vec<IntentionFile<'a>>,
    edges: Vec<[usize; 2]>,
    start_ids: Vec<usize>,
}

#[derive(serde::Serialize)]
struct IntentionFile<'a> {
    id: usize,
    description: &'a str,
    objects: &'a [String],
}

impl TaskGraph {
    /// Serializes to the task-graph JSON schema (pretty-printed, trailing
    /// newline).
    pub fn to_json_string(&self) -> String {
        let file = GraphFile {
            task: &self.task,
            intentions: self
                .intentions()
                .iter()
                .map(|i| IntentionFile {
                    id: i.id,
                    description: &i.description,
                    objects: &i.required_objects,
                })
                .collect(),
            edges: self.edges().iter().map(|&(f, t)| [f, t]).collect(),
            start_ids: self.start_ids().iter().copied().collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("graph serializes");
        out.push('\n');
        out
    }

    /// Parses and validates the task-graph JSON schema.
    pub fn from_json_str(contents: &str) -> Result<Self, GraphError> {
        let root: Value = serde_json::from_str(contents)
            .map_err(|e| violation("/", format!("not valid JSON: {e}")))?;
        if !root.is_object() {
            return Err(violation("/", "expected a JSON object"));
        }

        let task = field(&root, "", "task")?
            .as_str()
            .ok_or_else(|| violation("/task", "expected a string"))?
            .to_string();

        let intentions_value = field(&root, "", "intentions")?
            .as_array()
            .ok_or_else(|| violation("/intentions", "expected an array"))?;
        let mut intentions = Vec::with_capacity(intentions_value.len());
        for (i, item) in intentions_value.iter().enumerate() {
            let pointer = format!("/intentions/{i}");
            if !item.is_object() {
                return Err(violation(pointer, "expected an object"));
            }
            let id = as_usize(field(item, &pointer, "id")?, &format!("{pointer}/id"))?;
            let description = field(item, &pointer, "description")?
                .as_str()
                .ok_or_else(|| violation(format!("{pointer}/description"), "expected a string"))?
                .to_string();
            let objects_value = field(item, &pointer, "objects")?
                .as_array()
                .ok_or_else(|| violation(format!("{pointer}/objects"), "expected an array"))?;
            let mut objects = Vec::with_capacity(objects_value.len());
            for (j, obj) in objects_value.iter().enumerate() {
                objects.push(
                    obj.as_str()
                        .ok_or_else(|| {
                            violation(format!("{pointer}/objects/{j}"), "expected a string")
                        })?
                        .to_string(),
                );
            }
            intentions.push(Intention::new(id, description, objects));
        }

        let edges_value = field(&root, "", "edges")?
            .as_array()
            .ok_or_else(|| violation("/edges", "expected an array"))?;
        let mut edges = BTreeSet::new();
        let n = intentions.len();
        for (k, edge) in edges_value.iter().enumerate() {
            let pointer = format!("/edges/{k}");
            let pair = edge
                .as_array()
                .ok_or_else(|| violation(&pointer, "expected a [from, to] pair"))?;
            if pair.len() != 2 {
                return Err(violation(&pointer, "expected exactly two endpoints"));
            }
            let from = as_usize(&pair[0], &format!("{pointer}/0"))?;
            let to = as_usize(&pair[1], &format!("{pointer}/1"))?;
            if from >= n || to >= n {
                return Err(violation(
                    &pointer,
                    format!("edge ({from}, {to}) points outside 0..{n}"),
                ));
            }
            edges.insert((from, to));
        }

        let starts_value = field(&root, "", "start_ids")?
            .as_array()
            .ok_or_else(|| violation("/start_ids", "expected an array"))?;
        let mut start_ids = BTreeSet::new();
        for (k, start) in starts_value.iter().enumerate() {
            start_ids.insert(as_usize(start, &format!("/start_ids/{k}"))?);
        }

        TaskGraph::new(task, intentions, edges, start_ids)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), GraphError> {
        std::fs::write(path, self.to_json_string())
            .map_err(|e| violation("/", format!("cannot write graph file: {e}")))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, GraphError> {
        let contents = std::fs::read_to_string(&path)
            .map_err(|e| violation("/", format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&contents)
    }
}
