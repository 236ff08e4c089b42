use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::svg::{line_chart_svg, Series};
use super::{sigma_tilde, success_rate, RoundRecord};
use crate::error::{Error, Result};

/// The rounds of one configuration, labelled for the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRun {
    pub config_id: String,
    pub strategy: String,
    pub case_id: String,
    pub p_biased: f64,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config_id: String,
    pub strategy: String,
    pub case_id: String,
    pub p_biased: f64,
    pub mean_final_accuracy: f64,
    pub sigma_tilde_accuracy: f64,
    pub mean_final_loss: f64,
    pub sigma_tilde_loss: f64,
    /// NaN when no selected client was evaluated.
    pub success_rate: f64,
}

fn final_rounds(rounds: &[RoundRecord]) -> Vec<&RoundRecord> {
    let mut last: BTreeMap<usize, &RoundRecord> = BTreeMap::new();
    for r in rounds {
        let e = last.entry(r.trial).or_insert(r);
        if r.round >= e.round {
            *e = r;
        }
    }
    last.into_values().collect()
}

/// Mean of a per-round metric over trials, keyed by round.
fn mean_curve(rounds: &[RoundRecord], metric: impl Fn(&RoundRecord) -> f64) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rounds {
        let e = acc.entry(r.round).or_insert((0.0, 0));
        e.0 += metric(r);
        e.1 += 1;
    }
    acc.into_iter().map(|(t, (s, n))| (t as f64, s / n as f64)).collect()
}

pub fn summarize(run: &ReportRun, threshold: f64) -> Result<SummaryRow> {
    let finals = final_rounds(&run.rounds);
    if finals.is_empty() {
        return Err(Error::invalid(format!("run `{}` has no rounds", run.config_id)));
    }
    let n = finals.len() as f64;
    let acc_groups: Vec<Vec<f64>> = run.rounds.iter().map(|r| r.local.iter().map(|e| e.accuracy).collect()).collect();
    let loss_groups: Vec<Vec<f64>> = run.rounds.iter().map(|r| r.local.iter().map(|e| e.loss).collect()).collect();
    let pooled: Vec<f64> = acc_groups.iter().flatten().copied().collect();
    Ok(SummaryRow {
        config_id: run.config_id.clone(),
        strategy: run.strategy.clone(),
        case_id: run.case_id.clone(),
        p_biased: run.p_biased,
        mean_final_accuracy: finals.iter().map(|r| r.test_accuracy).sum::<f64>() / n,
        sigma_tilde_accuracy: sigma_tilde(&acc_groups).unwrap_or(f64::NAN),
        mean_final_loss: finals.iter().map(|r| r.test_loss).sum::<f64>() / n,
        sigma_tilde_loss: sigma_tilde(&loss_groups).unwrap_or(f64::NAN),
        success_rate: if pooled.is_empty() {
            f64::NAN
        } else {
            success_rate(&pooled, threshold)?
        },
    })
}

/// Writes `summary.csv` and `curves.svg` into `dir`, one row and one series
/// per run. Returns the summary rows.
pub fn emit_report(runs: &[ReportRun], dir: &Path, threshold: f64) -> Result<Vec<SummaryRow>> {
    if runs.is_empty() {
        return Err(Error::invalid("report needs at least one run"));
    }
    let rows = runs.iter().map(|r| summarize(r, threshold)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir)?;

    let mut csv = fs::File::create(dir.join("summary.csv"))?;
    writeln!(
        csv,
        "config_id,strategy,case_id,p_biased,mean_final_accuracy,sigma_tilde_accuracy,mean_final_loss,sigma_tilde_loss,success_rate"
    )?;
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.config_id,
            r.strategy,
            r.case_id,
            r.p_biased,
            r.mean_final_accuracy,
            r.sigma_tilde_accuracy,
            r.mean_final_loss,
            r.sigma_tilde_loss,
            r.success_rate
        )?;
    }

    let curves = |metric: fn(&RoundRecord) -> f64| -> Vec<Series> {
        runs.iter()
            .map(|r| Series {
                label: r.config_id.clone(),
                points: mean_curve(&r.rounds, metric),
            })
            .collect()
    };
    let svg = line_chart_svg(
        "global epoch T",
        &[
            ("Test accuracy", "accuracy", curves(|r| r.test_accuracy)),
            ("Test loss", "cross-entropy", curves(|r| r.test_loss)),
        ],
    );
    fs::write(dir.join("curves.svg"), svg)?;
    Ok(rows)
}
