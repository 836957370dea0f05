//! Run-to-run comparison: absolute and relative metric deltas between an
//! initial and a final report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EvalReport;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub initial: f64,
    pub r#final: f64,
    pub delta_abs: f64,
    pub delta_rel_pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaTable {
    pub rows: Vec<DeltaRow>,
}

/// Deltas from the first report to the last.
///
/// Reports must cover the same question set and come from the same
/// configuration; comparing across configs is a different experiment and is
/// refused.
pub fn compare_runs(reports: &[EvalReport]) -> Result<DeltaTable> {
    if reports.len() < 2 {
        return Err(Error::Validation("compare_runs needs at least two reports".into()));
    }
    let first = &reports[0];
    let last = &reports[reports.len() - 1];
    for r in reports {
        if r.question_ids != first.question_ids {
            return Err(Error::Validation(
                "reports cover different question sets and cannot be compared".into(),
            ));
        }
        if r.metadata.config_hash != first.metadata.config_hash {
            return Err(Error::ConfigMismatch(format!(
                "report config {} vs {}",
                r.metadata.config_hash, first.metadata.config_hash
            )));
        }
    }

    let row = |metric: &str, initial: f64, final_: f64| DeltaRow {
        metric: metric.to_string(),
        initial,
        r#final: final_,
        delta_abs: final_ - initial,
        delta_rel_pct: if initial == 0.0 { 0.0 } else { (final_ - initial) / initial * 100.0 },
    };

    Ok(DeltaTable {
        rows: vec![
            row("F1", first.overall.f1, last.overall.f1),
            row("B1", first.overall.bleu1, last.overall.bleu1),
            row("J", first.overall.judge, last.overall.judge),
        ],
    })
}

/// Text rendering in the initial/final/delta layout.
pub fn render_delta_table(table: &DeltaTable) -> String {
    let mut out = format!(
        "{:<6} {:>9} {:>9} {:>9} {:>10}\n",
        "metric", "initial", "final", "d_abs", "d_rel_pct"
    );
    for r in &table.rows {
        out.push_str(&format!(
            "{:<6} {:>9.2} {:>9.2} {:>+9.2} {:>+10.2}\n",
            r.metric, r.initial, r.r#final, r.delta_abs, r.delta_rel_pct
        ));
    }
    out
}
