//! `lit track`: replay a measurement stream through the filter, writing the
//! trace as JSONL and the per-step posteriors as CSV.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use lit_core::planner::{commit, DeliveryState, Planner};
use lit_core::taskgraph::TaskGraph;
use lit_core::tracker::{
    parse_measurements_jsonl, Measurement, TrackRecord, Tracker, TrackerConfig,
};

use crate::config::RunConfig;
use crate::CliError;

pub struct TrackArgs<'a> {
    pub graph: &'a Path,
    pub measurements: &'a str,
    pub out_trace: &'a Path,
    pub out_csv: &'a Path,
    pub recommend: bool,
    pub confirm: bool,
}

fn read_measurements(source: &str) -> Result<Vec<Measurement>, CliError> {
    let contents = if source == "-" {
        let mut buf = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin().lock(), &mut buf)
            .map_err(|e| CliError::Usage(format!("cannot read measurements from stdin: {e}")))?;
        buf
    } else {
        std::fs::read_to_string(source)
            .map_err(|e| CliError::Usage(format!("cannot read measurements file {source}: {e}")))?
    };
    parse_measurements_jsonl(&contents).map_err(|e| CliError::Usage(e.to_string()))
}

/// Per-step posterior CSV: `step` column plus one column per intention.
pub fn write_posteriors_csv(path: &Path, n: usize, trace: &[TrackRecord]) -> Result<(), CliError> {
    let mut out = String::from("step");
    for j in 0..n {
        out.push_str(&format!(",intention_{j}"));
    }
    out.push('\n');
    for (step, record) in trace.iter().enumerate() {
        out.push_str(&step.to_string());
        for p in &record.posterior {
            out.push_str(&format!(",{p}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Trace JSONL: one record per step, then one closing summary line holding
/// the argmax sequence and the measurement timestamps at which the argmax
/// changed.
pub fn write_trace_jsonl(path: &Path, trace: &[TrackRecord]) -> Result<(), CliError> {
    let mut out = String::new();
    for record in trace {
        out.push_str(&serde_json::to_string(record).expect("record serializes"));
        out.push('\n');
    }
    let argmax: Vec<usize> = trace.iter().map(|r| r.argmax_id).collect();
    let mut transitions = Vec::new();
    for (step, record) in trace.iter().enumerate() {
        if step == 0 || trace[step - 1].argmax_id != record.argmax_id {
            transitions.push(serde_json::json!({
                "step": step,
                "t": record.measurement.timestamp,
                "to": record.argmax_id,
            }));
        }
    }
    out.push_str(
        &serde_json::to_string(&serde_json::json!({
            "summary": { "argmax_sequence": argmax, "transitions": transitions }
        }))
        .expect("summary serializes"),
    );
    out.push('\n');
    std::fs::write(path, out)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn run(cfg: &RunConfig, args: &TrackArgs) -> Result<(), CliError> {
    if args.confirm && args.measurements == "-" {
        return Err(CliError::Usage(
            "--confirm reads acknowledgments from stdin, so measurements must come from a file"
                .into(),
        ));
    }
    let graph = Arc::new(TaskGraph::load(args.graph).map_err(|e| CliError::Usage(e.to_string()))?);
    let measurements = read_measurements(args.measurements)?;

    let runtime = cfg.build_runtime()?;
    let metric = cfg.metric(&cfg.metrics[0], runtime.embedding_provider(cfg)?)?;
    let tracker_cfg: TrackerConfig = cfg.tracker_config()?;
    let mut tracker = Tracker::from_oracles(
        graph.clone(),
        tracker_cfg,
        runtime.estimator.clone(),
        metric,
        cfg.likelihood_map()?,
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let planner = Planner::new(cfg.confidence_threshold);
    let mut delivery = DeliveryState::new();
    let stdout = std::io::stdout();
    let stdin = std::io::stdin();

    let total = measurements.len();
    let mut failure: Option<CliError> = None;
    for m in measurements {
        if let Err(e) = tracker.step(m) {
            // Flush whatever was tracked before aborting the stream.
            failure = Some(CliError::Runtime(format!("tracking aborted: {e}")));
            break;
        }
        if args.recommend {
            if let Some((next_id, prob)) = tracker.predict_next().map_err(CliError::from)? {
                let actions = planner.recommend(next_id, prob, &graph, &mut delivery);
                for action in actions {
                    let line = serde_json::to_string(&action).expect("action serializes");
                    writeln!(stdout.lock(), "{line}")
                        .map_err(|e| CliError::Runtime(e.to_string()))?;
                    let acknowledged = if args.confirm {
                        let mut reply = String::new();
                        stdin
                            .lock()
                            .read_line(&mut reply)
                            .map_err(|e| CliError::Runtime(e.to_string()))?;
                        let reply = reply.trim();
                        reply.is_empty()
                            || reply.eq_ignore_ascii_case("ok")
                            || reply == action.object
                    } else {
                        true
                    };
                    if acknowledged {
                        commit(&action, &mut delivery)
                            .map_err(|e| CliError::Runtime(e.to_string()))?;
                    }
                }
            }
        }
    }

    write_trace_jsonl(args.out_trace, tracker.trace())?;
    write_posteriors_csv(args.out_csv, graph.len(), tracker.trace())?;
    if let Some(e) = failure {
        eprintln!(
            "partial trace flushed: {} of {total} steps",
            tracker.trace().len()
        );
        return Err(e);
    }

    let argmax: Vec<usize> = tracker.trace().iter().map(|r| r.argmax_id).collect();
    println!(
        "tracked {} steps ({} oracle calls); argmax sequence {:?}; trace -> {}, posteriors -> {}",
        tracker.trace().len(),
        runtime.transcript.len(),
        argmax,
        args.out_trace.display(),
        args.out_csv.display()
    );
    Ok(())
}
