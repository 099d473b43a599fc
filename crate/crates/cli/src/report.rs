//! Merges run manifests into one self-contained HTML summary.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use bergman_core::localize::UniformityVerdict;
use thiserror::Error;

use crate::output::{fmt, OutputDir, RunManifest, Table};

#[derive(Debug, Error)]
#[error("missing report inputs: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
pub struct MissingOutputs(pub Vec<PathBuf>);

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

/// Loads every manifest and checks that all files it lists exist.
fn load(manifests: &[PathBuf]) -> anyhow::Result<Vec<Run>> {
    let mut missing = Vec::new();
    let mut runs = Vec::new();
    for path in manifests {
        if !path.exists() {
            missing.push(path.clone());
            continue;
        }
        let manifest = RunManifest::load(path)?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        for f in &manifest.outputs {
            if !dir.join(&f.path).exists() {
                missing.push(dir.join(&f.path));
            }
        }
        runs.push(Run { dir, manifest });
    }
    if !missing.is_empty() {
        return Err(MissingOutputs(missing).into());
    }
    Ok(runs)
}

fn html_table(t: &Table, max_rows: usize) -> String {
    let mut s = String::from("<table>\n<tr>");
    for h in &t.header {
        let _ = write!(s, "<th>{}</th>", esc(h));
    }
    s.push_str("</tr>\n");
    for row in t.rows.iter().take(max_rows) {
        s.push_str("<tr>");
        for c in row {
            let _ = write!(s, "<td>{}</td>", esc(c));
        }
        s.push_str("</tr>\n");
    }
    s.push_str("</table>\n");
    if t.rows.len() > max_rows {
        let _ = writeln!(s, "<p>{} more rows in the merged CSV.</p>", t.rows.len() - max_rows);
    }
    s
}

const MAX_ROWS: usize = 50;

/// Writes `summary.html` and one merged CSV per table name (with a leading
/// `run` column) into `out`.
pub fn emit_report(manifests: &[PathBuf], out: &mut OutputDir) -> anyhow::Result<()> {
    let runs = load(manifests)?;
    let mut html = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>bergman-localize summary</title>\n\
         <style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin:1em 0}\
         td,th{border:1px solid #999;padding:2px 6px;font-size:12px}</style>\n</head>\n<body>\n\
         <h1>bergman-localize summary</h1>\n",
    );
    if runs.is_empty() {
        html.push_str("<p>No runs.</p>\n");
    }

    let mut merged: Vec<(String, Table)> = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        let m = &run.manifest;
        let _ = writeln!(html, "<h2>Run {r}: {}</h2>", esc(&m.command));
        let _ = writeln!(html, "<p>config sha256 {} &middot; tool {}</p>", m.config_sha256, esc(&m.tool_version));
        let failed: Vec<_> = m.tasks.iter().filter(|t| t.status != "ok").collect();
        let _ = writeln!(html, "<p>{} tasks, {} not ok</p>", m.tasks.len(), failed.len());
        for t in failed {
            let _ = writeln!(html, "<p>{}: {}</p>", esc(&t.name), esc(&t.status));
        }
        for f in &m.outputs {
            let path = run.dir.join(&f.path);
            if f.path.ends_with(".csv") {
                let table = Table::read(&path)?;
                let _ = writeln!(html, "<h3>{}</h3>", esc(&f.path));
                html.push_str(&html_table(&table, MAX_ROWS));
                let slot = match merged.iter().position(|(n, _)| *n == f.path) {
                    Some(i) => i,
                    None => {
                        let mut h = vec!["run".to_string()];
                        h.extend(table.header.iter().cloned());
                        merged.push((f.path.clone(), Table::new(&h)));
                        merged.len() - 1
                    }
                };
                let dst = &mut merged[slot].1;
                if dst.header[1..] != table.header[..] {
                    anyhow::bail!("{} has a header that differs from earlier runs", path.display());
                }
                for row in table.rows {
                    let mut full = vec![r.to_string()];
                    full.extend(row);
                    dst.push(full);
                }
            } else if f.path.ends_with(".svg") {
                let _ = writeln!(html, "<h3>{}</h3>", esc(&f.path));
                html.push_str(&fs::read_to_string(&path)?);
            } else if f.path == "uniformity.json" {
                let verdicts: Vec<UniformityVerdict> = serde_json::from_slice(&fs::read(&path)?)?;
                let mut t = Table::new(&["epsilon", "theta_min", "theta_max", "pairs", "failed_pairs", "verdict"]);
                for v in &verdicts {
                    t.push(vec![
                        fmt(v.epsilon),
                        fmt(v.theta_min),
                        fmt(v.theta_max),
                        v.pairs.len().to_string(),
                        v.pairs.iter().filter(|p| p.theta.is_none()).count().to_string(),
                        if v.pass { "pass" } else { "fail" }.to_string(),
                    ]);
                }
                html.push_str("<h3>uniformity</h3>\n");
                html.push_str(&html_table(&t, MAX_ROWS));
            }
        }
    }
    html.push_str("</body>\n</html>\n");
    for (name, table) in &merged {
        out.write_csv(&format!("merged_{name}"), table)?;
    }
    out.write("summary.html", html.as_bytes())?;
    Ok(())
}
