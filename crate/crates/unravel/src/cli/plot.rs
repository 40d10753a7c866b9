//! Self-contained gnuplot command files for each task's output.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::Task;
use super::run::RunError;

/// Write a gnuplot script next to `data_path` for the given task name.
/// The script references only the emitted data columns.
pub fn emit_plot_script(data_path: &Path, task: &str) -> Result<PathBuf, RunError> {
    let task = Task::from_name(task).ok_or_else(|| {
        super::config::ConfigError::Invalid(format!("unknown task `{task}`"))
    })?;
    if !data_path.exists() {
        return Err(RunError::Io(format!(
            "data file {} does not exist",
            data_path.display()
        )));
    }
    let script_path = data_path.with_extension("gp");
    let data_name = data_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key outside\n");
    s.push_str("set grid\n");
    match task {
        Task::Trajectories => {
            let headers = csv_headers(data_path)?;
            let ycol = pick_column(&headers, &["pop_e", "pop1"]).unwrap_or(2);
            let events = data_path.with_extension("").with_extension("events.csv");
            let events_name = events
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            s.push_str("set xlabel 'time'\n");
            s.push_str("set ylabel 'excited population'\n");
            s.push_str(&format!(
                "plot '{data_name}' using 1:{ycol} with lines title '{}'",
                headers.get(ycol - 1).cloned().unwrap_or_default()
            ));
            if events.exists() {
                s.push_str(&format!(
                    ", \\\n     '{events_name}' using 2:(0.0) with points pt 7 ps 0.6 title 'counts'"
                ));
            }
            s.push('\n');
        }
        Task::Master | Task::Homodyne | Task::Waiting => {
            let headers = csv_headers(data_path)?;
            s.push_str("set xlabel 'time'\n");
            let mut terms = Vec::new();
            for (i, name) in headers.iter().enumerate().skip(1) {
                if name.starts_with("se_") || name == "current_se" {
                    continue;
                }
                terms.push(format!(
                    "'{data_name}' using 1:{} with lines title '{}'",
                    i + 1,
                    name
                ));
            }
            s.push_str(&format!("plot {}\n", terms.join(", \\\n     ")));
        }
        Task::Correlate => {
            s.push_str("set xlabel 'lag'\n");
            s.push_str("set ylabel 'correlation'\n");
            s.push_str(&format!(
                "plot '{data_name}' using 1:2 with lines title 're', \\\n     '{data_name}' using 1:3 with lines title 'im'\n"
            ));
        }
        Task::Counting => {
            // The distribution lives in JSON; inline the bars so the script
            // stays self-contained.
            let text = fs::read_to_string(data_path)?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| RunError::Io(e.to_string()))?;
            let probs = doc
                .get("probabilities")
                .and_then(|v| v.as_array())
                .ok_or_else(|| RunError::Io("counting data lacks probabilities".into()))?;
            s.push_str("set xlabel 'm'\n");
            s.push_str("set ylabel 'P_m'\n");
            s.push_str("set boxwidth 0.8\n");
            s.push_str("set style fill solid 0.5\n");
            s.push_str("plot '-' using 1:2 with boxes title 'P_m'\n");
            for (m, p) in probs.iter().enumerate() {
                s.push_str(&format!("{} {}\n", m, p.as_f64().unwrap_or(0.0)));
            }
            s.push_str("e\n");
        }
    }
    fs::write(&script_path, s)?;
    Ok(script_path)
}

fn csv_headers(path: &Path) -> Result<Vec<String>, RunError> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    Ok(first.split(',').map(|s| s.to_string()).collect())
}

/// 1-based gnuplot column index of the first matching header.
fn pick_column(headers: &[String], names: &[&str]) -> Option<usize> {
    for name in names {
        if let Some(pos) = headers.iter().position(|h| h == name) {
            return Some(pos + 1);
        }
    }
    None
}
