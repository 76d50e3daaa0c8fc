//! Markdown and CSV tables comparing filtered and reconstructed probes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::evaluate::MetricsRow;
use super::stages::Ctx;
use crate::compositor::{CoverageClass, Placement};
use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportBundle {
    pub markdown: String,
    /// File name to CSV text.
    pub tables: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

const FILTERED: &str = "filtered";
const RECONSTRUCTED: &str = "reconstructed";

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{:.2}", 100.0 * x))
}

/// Change from filtered to reconstructed, in percentage points.
pub fn delta_points(filtered: Option<f64>, reconstructed: Option<f64>) -> String {
    match (filtered, reconstructed) {
        (Some(f), Some(r)) => {
            let d = 100.0 * (r - f);
            if d == 0.0 {
                "0.00".into()
            } else {
                format!("{d:+.2}")
            }
        }
        _ => "NA".into(),
    }
}

type Metric = (String, Box<dyn Fn(&MetricsRow) -> Option<f64>>);

fn metrics_of(rows: &[MetricsRow]) -> Vec<Metric> {
    let mut m: Vec<Metric> = vec![
        ("FTE".into(), Box::new(|r: &MetricsRow| Some(r.fte))),
        ("EER".into(), Box::new(|r: &MetricsRow| r.eer)),
    ];
    if let Some(first) = rows.first() {
        for (i, (t, _)) in first.fnmr.iter().enumerate() {
            m.push((
                format!("FNMR @ FMR {}%", 100.0 * t),
                Box::new(move |r: &MetricsRow| r.fnmr.get(i).and_then(|x| x.1)),
            ));
        }
    }
    m
}

/// Renders the tables of one engine's metrics.
pub fn render_report(rows: &[MetricsRow]) -> ReportBundle {
    let mut warnings = Vec::new();
    let mut md = String::from("# Selfie filter removal report\n\n");
    let mut tables = BTreeMap::new();
    let conditions: Vec<&str> = {
        let mut c: Vec<&str> = rows.iter().map(|r| r.condition.as_str()).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let compare = conditions.contains(&FILTERED) && conditions.contains(&RECONSTRUCTED);
    if !compare {
        let w = format!(
            "only {:?} present; the change column needs both filtered and reconstructed",
            conditions
        );
        warnings.push(w.clone());
        writeln!(md, "> **Warning:** {w}.\n").unwrap();
    }
    let shown: Vec<&str> = if compare {
        vec![FILTERED, RECONSTRUCTED]
    } else {
        conditions.iter().copied().filter(|c| *c != "baseline").collect()
    };
    let find = |cond: &str, kind: &str, group: &str| {
        rows.iter()
            .find(|r| r.condition == cond && r.group_kind == kind && r.group == group)
    };
    let metrics = metrics_of(rows);

    md.push_str("## Overall\n\n| Condition | Probes |");
    for (name, _) in &metrics {
        write!(md, " {name} (%) |").unwrap();
    }
    md.push_str("\n|---|---|");
    md.push_str(&"---|".repeat(metrics.len()));
    md.push('\n');
    for cond in &conditions {
        if let Some(r) = find(cond, "all", "all") {
            write!(md, "| {cond} | {} |", r.n_probes).unwrap();
            for (_, get) in &metrics {
                write!(md, " {} |", pct(get(r))).unwrap();
            }
            md.push('\n');
        }
    }

    let mut footer = Vec::new();
    let kinds: [(&str, &str, Vec<&str>); 2] = [
        ("coverage", "Coverage", CoverageClass::ALL.iter().map(|c| c.as_str()).collect()),
        ("placement", "Placement", Placement::ALL.iter().map(|p| p.as_str()).collect()),
    ];
    for (kind, title, groups) in kinds {
        let present: Vec<&str> = groups
            .iter()
            .copied()
            .filter(|g| shown.iter().any(|c| find(c, kind, g).is_some()))
            .collect();
        for g in groups.iter().filter(|g| !present.contains(g)) {
            footer.push(format!("no probes in {kind} class `{g}`; row omitted"));
        }
        let mut csv = String::from("group,metric");
        for c in &shown {
            write!(csv, ",{c}").unwrap();
        }
        if compare {
            csv.push_str(",delta");
        }
        csv.push('\n');
        for (name, get) in &metrics {
            writeln!(md, "\n## {name} by {}\n", title.to_lowercase()).unwrap();
            write!(md, "| {title} |").unwrap();
            for c in &shown {
                write!(md, " {c} (%) |").unwrap();
            }
            if compare {
                md.push_str(" Δ (points) |");
            }
            md.push_str("\n|---|");
            md.push_str(&"---|".repeat(shown.len() + compare as usize));
            md.push('\n');
            for g in &present {
                let vals: Vec<Option<f64>> = shown.iter().map(|c| find(c, kind, g).and_then(|r| get(r))).collect();
                write!(md, "| {g} |").unwrap();
                write!(csv, "{g},{name}").unwrap();
                for v in &vals {
                    write!(md, " {} |", pct(*v)).unwrap();
                    write!(csv, ",{}", pct(*v)).unwrap();
                }
                if compare {
                    let d = delta_points(vals[0], vals[1]);
                    write!(md, " {d} |").unwrap();
                    write!(csv, ",{d}").unwrap();
                }
                md.push('\n');
                csv.push('\n');
            }
        }
        tables.insert(format!("by_{kind}.csv"), csv);
    }
    if !footer.is_empty() {
        md.push_str("\n---\n\n");
        for f in &footer {
            writeln!(md, "- {f}").unwrap();
        }
    }
    ReportBundle {
        markdown: md,
        tables,
        warnings,
    }
}

/// Reads `metrics.csv` under `metrics_root` and renders it.
pub fn report(metrics_root: &Path) -> Result<ReportBundle> {
    let path = metrics_root.join("metrics.csv");
    if !path.exists() {
        return Err(Error::NoData(format!("{} not found", path.display())));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let rows = MetricsRow::parse_csv(&text)?;
    if rows.is_empty() {
        return Err(Error::NoData(format!("{} has no rows", path.display())));
    }
    Ok(render_report(&rows))
}

pub(crate) fn build(ctx: &Ctx) -> Result<()> {
    let eval = ctx.root.join("evaluate");
    let bundle = report(&eval)?;
    for w in &bundle.warnings {
        log::warn!("report: {w}");
    }
    io::write_text(&ctx.out.join("report.md"), &bundle.markdown)?;
    for (name, csv) in &bundle.tables {
        io::write_text(&ctx.out.join(name), csv)?;
    }
    let det = std::fs::read(eval.join("det.csv")).map_err(|e| Error::io(eval.join("det.csv"), e))?;
    std::fs::write(ctx.out.join("det.csv"), det).map_err(|e| Error::io(ctx.out.join("det.csv"), e))
}
