use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A selected client's post-training model evaluated on the global test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalEval {
    pub client_id: usize,
    pub accuracy: f64,
    pub loss: f64,
}

/// One global round of one trial. Round 0 holds the evaluation of the initial
/// parameters and has no selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub trial: usize,
    pub round: usize,
    pub strategy: String,
    pub selected: Vec<usize>,
    /// Mean selection score of the selected clients, NaN when nobody was selected.
    pub mean_score: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub local: Vec<LocalEval>,
}

const ROUNDS_HEADER: &str = "trial,T,strategy,selected_ids,mean_score,test_accuracy,test_loss";
const EVALS_HEADER: &str = "trial,T,client_id,local_accuracy,local_loss";

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(";")
}

/// Rounds in the given order, floats in shortest round-trip form.
pub fn write_rounds_csv<W: Write>(mut out: W, records: &[RoundRecord]) -> Result<()> {
    writeln!(out, "{ROUNDS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.trial,
            r.round,
            r.strategy,
            join_ids(&r.selected),
            r.mean_score,
            r.test_accuracy,
            r.test_loss
        )?;
    }
    Ok(())
}

pub fn write_selected_evals_csv<W: Write>(mut out: W, records: &[RoundRecord]) -> Result<()> {
    writeln!(out, "{EVALS_HEADER}")?;
    for r in records {
        for e in &r.local {
            writeln!(out, "{},{},{},{},{}", r.trial, r.round, e.client_id, e.accuracy, e.loss)?;
        }
    }
    Ok(())
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, line: usize) -> Result<T> {
    cols.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Csv {
            line,
            msg: format!("bad or missing column {i}"),
        })
}

fn lines<R: BufRead>(input: R, header: &str) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != header {
                return Err(Error::Csv {
                    line: 1,
                    msg: format!("expected header `{header}`"),
                });
            }
            continue;
        }
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses `rounds.csv`; local evaluations are left empty.
pub fn read_rounds_csv<R: BufRead>(input: R) -> Result<Vec<RoundRecord>> {
    lines(input, ROUNDS_HEADER)?
        .into_iter()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return Err(Error::Csv {
                    line: n,
                    msg: format!("expected 7 columns, found {}", cols.len()),
                });
            }
            let selected = if cols[3].is_empty() {
                Vec::new()
            } else {
                cols[3]
                    .split(';')
                    .map(|s| s.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Csv {
                        line: n,
                        msg: "bad selected_ids".into(),
                    })?
            };
            Ok(RoundRecord {
                trial: field(&cols, 0, n)?,
                round: field(&cols, 1, n)?,
                strategy: cols[2].to_string(),
                selected,
                mean_score: field(&cols, 4, n)?,
                test_accuracy: field(&cols, 5, n)?,
                test_loss: field(&cols, 6, n)?,
                local: Vec::new(),
            })
        })
        .collect()
}

/// Parses `selected_evals.csv` into `(trial, T) -> evaluations`.
pub fn read_selected_evals_csv<R: BufRead>(input: R) -> Result<BTreeMap<(usize, usize), Vec<LocalEval>>> {
    let mut out: BTreeMap<(usize, usize), Vec<LocalEval>> = BTreeMap::new();
    for (n, line) in lines(input, EVALS_HEADER)? {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Csv {
                line: n,
                msg: format!("expected 5 columns, found {}", cols.len()),
            });
        }
        out.entry((field(&cols, 0, n)?, field(&cols, 1, n)?))
            .or_default()
            .push(LocalEval {
                client_id: field(&cols, 2, n)?,
                accuracy: field(&cols, 3, n)?,
                loss: field(&cols, 4, n)?,
            });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<RoundRecord> {
        vec![
            RoundRecord {
                trial: 0,
                round: 0,
                strategy: "labelwise".into(),
                selected: vec![],
                mean_score: f64::NAN,
                test_accuracy: 0.1,
                test_loss: 2.3,
                local: vec![],
            },
            RoundRecord {
                trial: 0,
                round: 1,
                strategy: "labelwise".into(),
                selected: vec![4, 1],
                mean_score: 0.0125,
                test_accuracy: 0.61,
                test_loss: 1.25,
                local: vec![
                    LocalEval {
                        client_id: 4,
                        accuracy: 0.5,
                        loss: 1.5,
                    },
                    LocalEval {
                        client_id: 1,
                        accuracy: 0.25,
                        loss: 2.0,
                    },
                ],
            },
        ]
    }

    #[test]
    fn rounds_round_trip() {
        let recs = sample();
        let mut buf = Vec::new();
        write_rounds_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("0,1,labelwise,4;1,0.0125,0.61,1.25\n"));
        let back = read_rounds_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].mean_score.is_nan());
        assert_eq!(back[1].selected, vec![4, 1]);
        assert_eq!(back[1].test_loss, 1.25);

        let mut evals = Vec::new();
        write_selected_evals_csv(&mut evals, &recs).unwrap();
        let parsed = read_selected_evals_csv(evals.as_slice()).unwrap();
        assert_eq!(parsed[&(0, 1)], recs[1].local);
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(read_rounds_csv("nope\n".as_bytes()).is_err());
        let text = format!("{ROUNDS_HEADER}\n0,1,x,1;2,0.1,0.2\n");
        assert!(matches!(read_rounds_csv(text.as_bytes()), Err(Error::Csv { line: 2, .. })));
    }
}
