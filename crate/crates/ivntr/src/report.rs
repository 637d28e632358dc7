//! Plain-text reporting over run artifacts: a per-seed success table with a
//! mean ± half-range row, selection objective traces as `step<TAB>J` pairs,
//! and operator listings re-emitted through the parser.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use crate::pipeline::{fail, write_atomic, Pipeline, PipelineError, RunRecord};
use crate::planlearn::listing::{parse_listing, print_listing};

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

/// `mean ± half-range` over percentages; the bracket covers every seed.
fn spread(values: &[f64]) -> String {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    format!("{}±{}", pct(mean), pct((hi - lo) / 2.0))
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            write!(line, "{cell:<w$}  ", w = width[c]).unwrap();
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Success-rate summary: one row per seed plus a closing `mean` row with
/// mean ± half-range percentages. Test and drop columns are omitted when no
/// record evaluated any test task.
pub fn summary_table(records: &[RunRecord]) -> String {
    let with_test = records.iter().any(|r| !r.test.is_empty());
    let mut rows = vec![vec!["seed".into(), "train_tasks".into(), "train%".into()]];
    if with_test {
        rows[0].extend(["test_tasks".into(), "test%".into(), "drop%".into()]);
    }
    for r in records {
        let mut row = vec![
            r.header.seed.to_string(),
            r.train.len().to_string(),
            pct(r.train_success),
        ];
        if with_test {
            row.extend([
                r.test.len().to_string(),
                pct(r.test_success),
                pct(r.generalization_drop),
            ]);
        }
        rows.push(row);
    }
    let col = |f: fn(&RunRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let mut mean = vec![
        "mean".into(),
        String::new(),
        spread(&col(|r| r.train_success)),
    ];
    if with_test {
        mean.extend([
            String::new(),
            spread(&col(|r| r.test_success)),
            spread(&col(|r| r.generalization_drop)),
        ]);
    }
    rows.push(mean);
    align(&rows)
}

/// The same summary as raw tab-separated fractions, one row per seed plus a
/// `mean` row; for spreadsheet import.
pub fn summary_delimited(records: &[RunRecord]) -> String {
    let with_test = records.iter().any(|r| !r.test.is_empty());
    let mut out = String::from("seed\ttrain_tasks\ttrain_success");
    if with_test {
        out.push_str("\ttest_tasks\ttest_success\tgeneralization_drop");
    }
    out.push('\n');
    for r in records {
        write!(out, "{}\t{}\t{}", r.header.seed, r.train.len(), r.train_success).unwrap();
        if with_test {
            write!(out, "\t{}\t{}\t{}", r.test.len(), r.test_success, r.generalization_drop)
                .unwrap();
        }
        out.push('\n');
    }
    let mean = |f: fn(&RunRecord) -> f64| {
        records.iter().map(f).sum::<f64>() / records.len() as f64
    };
    write!(out, "mean\t\t{}", mean(|r| r.train_success)).unwrap();
    if with_test {
        write!(
            out,
            "\t\t{}\t{}",
            mean(|r| r.test_success),
            mean(|r| r.generalization_drop)
        )
        .unwrap();
    }
    out.push('\n');
    out
}

/// `step<TAB>J` plot data for a selection objective trace (index 0 is the
/// full candidate set, later rows follow each accepted removal).
pub fn j_trace_lines(trace: &[f64]) -> String {
    let mut out = String::new();
    for (step, j) in trace.iter().enumerate() {
        writeln!(out, "{step}\t{j}").unwrap();
    }
    out
}

/// Writes `summary.txt` / `summary.tsv` plus per-seed `seed<N>_j_trace.tsv`
/// and `seed<N>_operators.txt` under `<out>/report/`, computing any missing
/// upstream artifact first. Listings are re-emitted through the parser, so
/// the copies double as a round-trip check of the stored model.
pub fn emit_report(pipe: &Pipeline) -> Result<Vec<PathBuf>, PipelineError> {
    let records: Vec<RunRecord> = pipe
        .cfg
        .seeds
        .iter()
        .map(|&s| pipe.eval(s))
        .collect::<Result<_, _>>()?;
    let dir = pipe.cfg.out.join("report");
    let mut written = Vec::new();
    let put = |name: String, text: String| -> Result<PathBuf, PipelineError> {
        let path = dir.join(name);
        write_atomic(&path, |w| w.write_all(text.as_bytes())).map_err(fail("report"))?;
        Ok(path)
    };
    written.push(put("summary.txt".into(), summary_table(&records))?);
    written.push(put("summary.tsv".into(), summary_delimited(&records))?);
    for &seed in &pipe.cfg.seeds {
        let sel = pipe.selection(seed)?;
        written.push(put(format!("seed{seed}_j_trace.tsv"), j_trace_lines(&sel.trace))?);
        let text = fs::read_to_string(pipe.paths(seed).operators()).map_err(fail("report"))?;
        let ops = parse_listing(&text).map_err(fail("report"))?;
        written.push(put(format!("seed{seed}_operators.txt"), print_listing(&ops))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bilevel::PlanStatus;
    use crate::config::ExperimentConfig;
    use crate::pipeline::{ArtifactHeader, TaskOutcome};
    use crate::FORMAT_VERSION;

    fn outcome(solved: bool) -> TaskOutcome {
        TaskOutcome {
            status: if solved { PlanStatus::Solved } else { PlanStatus::RefineFailed },
            plan_len: solved.then_some(4),
            nodes_expanded: 11,
            skeletons_tried: 1,
        }
    }

    fn record(seed: u64, train: &[bool], test: &[bool]) -> RunRecord {
        let rate = |xs: &[bool]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().filter(|&&b| b).count() as f64 / xs.len() as f64
            }
        };
        let (tr, te) = (rate(train), rate(test));
        RunRecord {
            header: ArtifactHeader {
                version: FORMAT_VERSION.to_string(),
                record: "eval".to_string(),
                domain: "gazegrasp".to_string(),
                seed,
                config: Default::default(),
            },
            train: train.iter().map(|&b| outcome(b)).collect(),
            test: test.iter().map(|&b| outcome(b)).collect(),
            train_success: tr,
            test_success: te,
            generalization_drop: if tr > 0.0 { 1.0 - te / tr } else { 0.0 },
        }
    }

    #[test]
    fn mean_row_averages_and_brackets_the_seed_rows() {
        let records = [
            record(3, &[true, true, true, true], &[true, true, true, false]),
            record(4, &[true, true, false, false], &[true, false, false, false]),
        ];
        let table = summary_table(&records);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("3") && lines[1].contains("100.0") && lines[1].contains("75.0"));
        assert!(lines[2].starts_with("4") && lines[2].contains("50.0") && lines[2].contains("25.0"));
        // train mean (100+50)/2 = 75 ± 25; test mean (75+25)/2 = 50 ± 25.
        assert!(lines[3].contains("75.0±25.0") && lines[3].contains("50.0±25.0"));
        let tsv = summary_delimited(&records);
        assert!(tsv.lines().last().unwrap().contains("0.75"));
    }

    #[test]
    fn test_columns_vanish_when_no_test_tasks_ran() {
        let records = [record(3, &[true, false], &[]), record(4, &[true, true], &[])];
        let table = summary_table(&records);
        assert!(table.contains("train%") && !table.contains("test"));
        assert!(!table.contains("drop"));
        let tsv = summary_delimited(&records);
        assert_eq!(tsv.lines().next().unwrap(), "seed\ttrain_tasks\ttrain_success");
    }

    #[test]
    fn j_trace_lines_emit_ordered_pairs() {
        assert_eq!(j_trace_lines(&[600009.0, 83.0, 67.0]), "0\t600009\n1\t83\n2\t67\n");
        assert_eq!(j_trace_lines(&[]), "");
    }

    #[test]
    fn report_files_reprint_operators_and_a_nonincreasing_trace() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.domain = "gazegrasp".into();
        cfg.seeds = vec![5];
        cfg.out = dir.path().to_path_buf();
        cfg.dataset_size = 6;
        cfg.invent_max_arity = 1;
        cfg.invent_max_iterations = 8;
        cfg.net_hidden = vec![16];
        cfg.net_epochs = 40;
        cfg.net_patience = 6;
        cfg.eval_train_tasks = 2;
        cfg.eval_test_tasks = 2;
        let pipe = Pipeline::new(cfg).unwrap();
        let files = emit_report(&pipe).unwrap();
        assert_eq!(files.len(), 4);
        for f in &files {
            assert!(f.exists(), "{} missing", f.display());
        }

        let summary = fs::read_to_string(&files[0]).unwrap();
        assert!(summary.starts_with("seed") && summary.contains("\nmean"));

        let trace = fs::read_to_string(dir.path().join("report/seed5_j_trace.tsv")).unwrap();
        let js: Vec<f64> = trace
            .lines()
            .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(!js.is_empty());
        assert!(js.windows(2).all(|w| w[1] <= w[0]), "J trace rose: {js:?}");

        // The reprint is the parser's fixpoint of the stored listing.
        let stored = fs::read_to_string(pipe.paths(5).operators()).unwrap();
        let reprint = fs::read_to_string(dir.path().join("report/seed5_operators.txt")).unwrap();
        assert_eq!(reprint, print_listing(&parse_listing(&stored).unwrap()));
        assert_eq!(parse_listing(&reprint).unwrap(), parse_listing(&stored).unwrap());
    }
}
