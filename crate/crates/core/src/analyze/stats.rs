use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::SessionData;
use crate::domain::{Condition, RoleKind};
use crate::error::{AnalyzeError, Result};
use crate::session::Scale;

/// Rendered for cells the layout leaves out: AI perception outside Treatment.
pub const ABSENT: &str = "--";

pub const INFERENCE_NOTE: &str = "Note: descriptive statistics only. Inferential analysis (robust mixed-effects \
regression, post-hoc comparisons) is not computed; export the CSV and fit it in a statistics package.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Group {
    Senior,
    Junior,
    All,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Senior, Group::Junior, Group::All];

    fn admits(self, role: RoleKind) -> bool {
        match self {
            Group::Senior => role == RoleKind::Senior,
            Group::Junior => role == RoleKind::Junior,
            Group::All => true,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Senior => "Senior",
            Group::Junior => "Junior",
            Group::All => "All",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ConditionColumn {
    Baseline,
    Treatment,
    All,
}

impl ConditionColumn {
    pub const ALL: [ConditionColumn; 3] = [ConditionColumn::Baseline, ConditionColumn::Treatment, ConditionColumn::All];

    fn admits(self, c: Condition) -> bool {
        match self {
            ConditionColumn::Baseline => c == Condition::Baseline,
            ConditionColumn::Treatment => c == Condition::Treatment,
            ConditionColumn::All => true,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConditionColumn::Baseline => "Baseline",
            ConditionColumn::Treatment => "Treatment",
            ConditionColumn::All => "All",
        }
    }
}

/// Mean and sample standard deviation; `sd` needs at least two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl CellStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
        Self { n, mean, sd: sample_sd(values) }
    }
}

/// Standard deviation with the n-1 denominator.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

/// Group x metric x condition cells over per-response scale scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateStats {
    cells: BTreeMap<(Group, Scale, ConditionColumn), CellStats>,
}

impl AggregateStats {
    pub fn cell(&self, group: Group, scale: Scale, condition: ConditionColumn) -> Option<&CellStats> {
        self.cells.get(&(group, scale, condition))
    }

    /// Whether the layout prints "--" instead of numbers here.
    pub fn is_absent(scale: Scale, condition: ConditionColumn) -> bool {
        scale == Scale::AiPerception && condition != ConditionColumn::Treatment
    }
}

/// Each response contributes one score per scale, the mean of its items.
/// Role comes from the manifest, condition from the manifest's order for
/// the response's task. "All" cells pool the raw scores.
pub fn aggregate(sessions: &[SessionData]) -> Result<AggregateStats> {
    let mut rows: Vec<(String, RoleKind, Condition, BTreeMap<Scale, f64>)> = Vec::new();
    for s in sessions {
        for r in &s.responses {
            let orphan = || AnalyzeError::OrphanResponse {
                session: r.session_id.to_string(),
                participant: r.participant_id.to_string(),
            };
            if r.session_id != s.manifest.session_id {
                return Err(orphan().into());
            }
            let entry = s.manifest.participant(&r.participant_id).ok_or_else(orphan)?;
            let condition = *s.manifest.condition_order.get(r.task_index).ok_or_else(orphan)?;
            let scores = Scale::ALL
                .iter()
                .filter_map(|&scale| r.scales.scale_mean(scale).map(|m| (scale, m)))
                .collect();
            rows.push((r.response_id(), entry.role.kind(), condition, scores));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let mut cells = BTreeMap::new();
    for group in Group::ALL {
        for scale in Scale::ALL {
            for column in ConditionColumn::ALL {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|(_, role, cond, _)| group.admits(*role) && column.admits(*cond))
                    .filter_map(|(_, _, _, scores)| scores.get(&scale).copied())
                    .collect();
                cells.insert((group, scale, column), CellStats::from_values(&values));
            }
        }
    }
    Ok(AggregateStats { cells })
}

fn fmt_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// The two printed values of one cell, honoring absent and empty cells.
fn cell_pair(stats: &AggregateStats, group: Group, scale: Scale, column: ConditionColumn) -> [String; 2] {
    if AggregateStats::is_absent(scale, column) {
        return [ABSENT.into(), ABSENT.into()];
    }
    let cell = stats.cell(group, scale, column).copied().unwrap_or(CellStats {
        n: 0,
        mean: None,
        sd: None,
    });
    [fmt_num(cell.mean), fmt_num(cell.sd)]
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per group, two columns (mean, sd) per metric and condition.
pub fn format_csv(stats: &AggregateStats) -> String {
    let mut header = vec!["group".to_string()];
    for scale in Scale::ALL {
        for column in ConditionColumn::ALL {
            let c = column.label().to_lowercase();
            header.push(format!("{}_{c}_mean", scale.name()));
            header.push(format!("{}_{c}_sd", scale.name()));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for group in Group::ALL {
        let mut row = vec![group.label().to_string()];
        for scale in Scale::ALL {
            for column in ConditionColumn::ALL {
                row.extend(cell_pair(stats, group, scale, column));
            }
        }
        out.push_str(&row.iter().map(|s| csv_escape(s)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Aligned text rendering: metric titles, condition names, then mu/sigma
/// headers over three group rows.
pub fn format_table(stats: &AggregateStats) -> String {
    const W: usize = 5;
    let cond_w = 2 * W + 1;
    let metric_w = 3 * cond_w + 2;
    let label_w = 7;
    let mut lines = vec![String::new(); 3];
    let _ = write!(lines[0], "{:label_w$}", "");
    let _ = write!(lines[1], "{:label_w$}", "");
    let _ = write!(lines[2], "{:label_w$}", "");
    for (i, scale) in Scale::ALL.iter().enumerate() {
        let title = format!("({}) {}", (b'A' + i as u8) as char, scale.title());
        let _ = write!(lines[0], " | {title:<metric_w$}");
        lines[1].push_str(" |");
        lines[2].push_str(" |");
        for column in ConditionColumn::ALL {
            let _ = write!(lines[1], " {:<cond_w$}", column.label());
            let _ = write!(lines[2], " {:>W$} {:>W$}", "mu", "sigma");
        }
    }
    for group in Group::ALL {
        let mut line = format!("{:label_w$}", group.label());
        for scale in Scale::ALL {
            line.push_str(" |");
            for column in ConditionColumn::ALL {
                let [m, s] = cell_pair(stats, group, scale, column);
                let _ = write!(line, " {m:>W$} {s:>W$}");
            }
        }
        lines.push(line);
    }
    let mut out = lines.into_iter().map(|l| l.trim_end().to_string()).collect::<Vec<_>>().join("\n");
    out.push('\n');
    out
}
