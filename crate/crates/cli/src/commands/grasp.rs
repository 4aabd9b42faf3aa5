//! `lit grasp`: top-down grasp pose from a CSV of x,y points.

use std::path::Path;

use lit_core::scene::pca_grasp;

use crate::CliError;

fn parse_points_csv(contents: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let mut points = Vec::new();
    for (idx, line) in contents.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        // A leading "x,y" header row is tolerated.
        if idx == 0 && line.eq_ignore_ascii_case("x,y") {
            continue;
        }
        let mut fields = line.split(',');
        let parse = |f: Option<&str>| -> Option<f64> { f.and_then(|v| v.trim().parse().ok()) };
        let (x, y) = (parse(fields.next()), parse(fields.next()));
        match (x, y, fields.next()) {
            (Some(x), Some(y), None) => points.push((x, y)),
            _ => {
                return Err(CliError::Usage(format!(
                    "line {} of the points CSV is not 'x,y': {line:?}",
                    idx + 1
                )))
            }
        }
    }
    Ok(points)
}

pub fn run(points_path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let contents = std::fs::read_to_string(points_path).map_err(|e| {
        CliError::Usage(format!(
            "cannot read points file {}: {e}",
            points_path.display()
        ))
    })?;
    let points = parse_points_csv(&contents)?;
    let pose = pca_grasp(&points).map_err(|e| CliError::Usage(e.to_string()))?;
    let json = serde_json::to_string_pretty(&pose).expect("pose serializes");
    match out {
        Some(path) => std::fs::write(path, format!("{json}\n"))
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    Ok(())
}
