//! `lit build-graph`: task prompt + object list -> task-graph JSON.

use std::path::Path;

use lit_core::taskgraph::{add_reversibility_edges, generate_steps};

use crate::config::RunConfig;
use crate::CliError;

pub fn run(cfg: &RunConfig, task: &str, objects: &Path, out: &Path) -> Result<(), CliError> {
    let contents = std::fs::read_to_string(objects).map_err(|e| {
        CliError::Usage(format!(
            "cannot read objects file {}: {e}",
            objects.display()
        ))
    })?;
    let objects: Vec<String> = contents
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();

    let runtime = cfg.build_runtime()?;
    let generated = generate_steps(task, &objects, &runtime.session).map_err(CliError::from)?;
    for warning in &generated.warnings {
        eprintln!("warning: {warning}");
    }
    let graph =
        add_reversibility_edges(task, generated.steps, &runtime.session).map_err(CliError::from)?;
    graph
        .save(out)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out.display())))?;
    println!(
        "built task graph: {} steps, {} edges, starts {:?} -> {}",
        graph.len(),
        graph.edges().len(),
        graph.start_ids(),
        out.display()
    );
    Ok(())
}
