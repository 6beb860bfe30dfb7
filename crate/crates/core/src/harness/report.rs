//! Report rendering as JSON, TSV and markdown tables.
//!
//! Numbers in JSON and TSV use the shortest representation that parses back
//! to the same `f64`; undefined statistics are `null` in JSON and `NA` in
//! TSV and markdown.

use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AttackReport, BatteryReport, BatteryRow, Error, ProbeReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Battery(BatteryReport),
    Probes(ProbeReport),
    Attack(AttackReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Tsv,
    Markdown,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Tsv => "tsv",
            ReportFormat::Markdown => "markdown",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Input(format!("unknown report format `{other}`"))),
        }
    }
}

const BATTERY_COLUMNS: [&str; 8] = [
    "variant",
    "mean",
    "sd",
    "pct_within_1sd",
    "pearson",
    "spearman",
    "pct_better",
    "p_value",
];

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn fixed(x: Option<f64>, places: usize) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.places$}"))
}

fn clean(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

pub fn emit_report(report: &Report, format: ReportFormat) -> Vec<u8> {
    let text = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports hold only finite numbers and strings");
            s.push('\n');
            s
        }
        ReportFormat::Tsv => tsv(report),
        ReportFormat::Markdown => markdown(report),
    };
    text.into_bytes()
}

fn tsv(report: &Report) -> String {
    let mut out = String::new();
    match report {
        Report::Battery(b) => {
            out.push_str(&BATTERY_COLUMNS.join("\t"));
            out.push('\n');
            for r in &b.rows {
                let cells = [
                    clean(&r.variant),
                    num(Some(r.mean)),
                    num(r.sd),
                    num(r.pct_within_1sd),
                    num(r.pearson),
                    num(r.spearman),
                    num(r.pct_better),
                    num(r.p_value),
                ];
                out.push_str(&cells.join("\t"));
                out.push('\n');
            }
        }
        Report::Probes(p) => {
            out.push_str("probe\tideal_score\tmean\tsd\n");
            for r in &p.rows {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", clean(&r.probe), r.ideal_score, r.mean, num(r.sd));
            }
        }
        Report::Attack(a) => {
            out.push_str(
                "record\toriginal_score\ttarget_score\tann_best_id\tann_best_score\tann_best_text\t\
                 brute_best_id\tbrute_best_score\tbrute_best_text\n",
            );
            for r in &a.rows {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.record,
                    r.original_score,
                    r.target_score,
                    r.ann_best_id,
                    r.ann_best_score,
                    clean(&r.ann_best_text),
                    r.brute_best_id,
                    r.brute_best_score,
                    clean(&r.brute_best_text)
                );
            }
        }
    }
    out
}

fn markdown(report: &Report) -> String {
    let mut out = String::new();
    match report {
        Report::Battery(b) => {
            out.push_str("| Variant | mean | SD | %1SD | Pearson | Spearman | %better |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for r in &b.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    r.variant.replace('|', "\\|"),
                    fixed(Some(r.mean), 3),
                    fixed(r.sd, 3),
                    fixed(r.pct_within_1sd, 2),
                    fixed(r.pearson, 3),
                    fixed(r.spearman, 3),
                    fixed(r.pct_better, 2)
                );
            }
        }
        Report::Probes(p) => {
            out.push_str("| Probe | mean | SD | ideal |\n|---|---|---|---|\n");
            for r in &p.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} |",
                    r.probe,
                    fixed(Some(r.mean), 3),
                    fixed(r.sd, 3),
                    r.ideal_score
                );
            }
        }
        Report::Attack(a) => {
            out.push_str("| Responses | mean | SD | max | min | increment |\n|---|---|---|---|---|---|\n");
            let g = &a.aggregate;
            for (label, col, inc) in [
                ("Original", &g.original, None),
                ("ANN realized", &g.ann, Some(g.ann_increment)),
                ("Brute force", &g.brute_force, Some(g.brute_force_increment)),
            ] {
                let _ = writeln!(
                    out,
                    "| {label} | {} | {} | {} | {} | {} |",
                    fixed(Some(col.mean), 3),
                    fixed(col.sd, 3),
                    fixed(Some(col.max), 3),
                    fixed(Some(col.min), 3),
                    inc.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
                );
            }
        }
    }
    out
}

fn parse_cell(cell: &str, line: usize) -> Result<Option<f64>, Error> {
    if cell == "NA" {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| Error::Report {
        line,
        message: format!("`{cell}` is not a number"),
    })
}

/// Reads the rows of a battery TSV back.
pub fn parse_battery_tsv(text: &str) -> Result<Vec<BatteryRow>, Error> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.split('\t').eq(BATTERY_COLUMNS) => {}
        _ => {
            return Err(Error::Report {
                line: 1,
                message: "missing battery header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != BATTERY_COLUMNS.len() {
            return Err(Error::Report {
                line: lineno,
                message: format!("expected {} columns, found {}", BATTERY_COLUMNS.len(), cells.len()),
            });
        }
        let v: Vec<Option<f64>> = cells[1..]
            .iter()
            .map(|c| parse_cell(c, lineno))
            .collect::<Result<_, _>>()?;
        rows.push(BatteryRow {
            variant: cells[0].to_string(),
            mean: v[0].ok_or(Error::Report {
                line: lineno,
                message: "mean is NA".into(),
            })?,
            sd: v[1],
            pct_within_1sd: v[2],
            pearson: v[3],
            spearman: v[4],
            pct_better: v[5],
            p_value: v[6],
        });
    }
    Ok(rows)
}
