use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{format_p, AblationReport, CvReport, McNemarResult, MetricReport, PairedTest};
use crate::error::{Error, Result};

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => "nan".to_string(),
    }
}

fn short(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "undefined".to_string(),
    }
}

/// Pretty-printed JSON with a trailing newline. Undefined values are `null`.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::from(e).at_path(path))
}

/// One row per fold plus `mean`, `sd` and `pooled` rows. Undefined values
/// are written as `nan`.
pub fn write_fold_metrics_csv<W: Write>(report: &CvReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["fold", "train_size", "validation_size", "tp", "fp", "tn", "fn"];
    header.extend(MetricReport::NAMES);
    w.write_record(&header)?;
    let mut row = |name: String, sizes: [String; 2], cm: Option<super::ConfusionMatrix>, m: &MetricReport| {
        let counts = match cm {
            Some(c) => [c.tp, c.fp, c.tn, c.fn_].map(|v| v.to_string()),
            None => Default::default(),
        };
        let mut rec = vec![name];
        rec.extend(sizes);
        rec.extend(counts);
        rec.extend(m.values().map(cell));
        w.write_record(&rec)
    };
    for f in &report.folds {
        row(
            f.fold.to_string(),
            [f.train_size.to_string(), f.validation_size.to_string()],
            Some(f.confusion),
            &f.metrics,
        )?;
    }
    row("mean".into(), Default::default(), None, &report.mean)?;
    row("sd".into(), Default::default(), None, &report.sd)?;
    let total: usize = report.folds.iter().map(|f| f.validation_size).sum();
    row("pooled".into(), [String::new(), total.to_string()], Some(report.pooled_confusion), &report.pooled_metrics)?;
    w.flush()?;
    Ok(())
}

/// Columns `fold,threshold,fpr,tpr`; the starting point has an empty threshold.
pub fn write_roc_csv<W: Write>(report: &CvReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "threshold", "fpr", "tpr"])?;
    for f in &report.folds {
        for p in f.roc.iter().flat_map(|r| &r.points) {
            w.write_record([
                f.fold.to_string(),
                p.threshold.map(|t| t.to_string()).unwrap_or_default(),
                p.fpr.to_string(),
                p.tpr.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `fold,source_id,original,label,score,predicted`.
pub fn write_predictions_csv<W: Write>(report: &CvReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fold", "source_id", "original", "label", "score", "predicted"])?;
    for f in &report.folds {
        for p in &f.predictions {
            w.write_record([
                f.fold.to_string(),
                p.source_id.clone(),
                p.original.to_string(),
                p.label.to_string(),
                p.score.to_string(),
                p.predicted.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `folds.csv`, `roc.csv` and `predictions.csv` into `dir`.
pub fn write_cv_report(report: &CvReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    write_json(report, &dir.join("report.json"))?;
    let file = |name: &str| {
        let p = dir.join(name);
        fs::File::create(&p).map_err(|e| Error::from(e).at_path(&p))
    };
    write_fold_metrics_csv(report, file("folds.csv")?)?;
    write_roc_csv(report, file("roc.csv")?)?;
    write_predictions_csv(report, file("predictions.csv")?)?;
    Ok(())
}

/// Writes `ablation.json`, a `statistics.csv` table of the paired tests and
/// each arm's reports under `without_chaos/` and `with_chaos/`.
pub fn write_ablation_report(report: &AblationReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    write_json(report, &dir.join("ablation.json"))?;
    write_cv_report(&report.without_chaos, &dir.join("without_chaos"))?;
    write_cv_report(&report.with_chaos, &dir.join("with_chaos"))?;
    let path = dir.join("statistics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::from(e).at_path(&path))?;
    w.write_record(["test", "statistic", "p_value", "significant", "detail"])?;
    let m = &report.mcnemar;
    w.write_record([
        "mcnemar".to_string(),
        cell(m.statistic),
        format_p(m.p_value),
        m.significant().to_string(),
        format!("b={} c={} method={:?}", m.b, m.c, m.method),
    ])?;
    for (name, t) in [("paired_t", &report.accuracy_t_test), ("wilcoxon", &report.accuracy_wilcoxon)] {
        w.write_record([
            name.to_string(),
            cell(t.statistic),
            format_p(t.p_value),
            t.significant().to_string(),
            format!("n={}", t.n),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable fold table.
pub fn summary_table(report: &CvReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "fold", "ACC%", "SEN%", "SPE%", "P%", "FPR%", "F1%", "AUC"
    );
    let mut line = |name: &str, m: &MetricReport| {
        let v = m.values();
        let _ = writeln!(
            s,
            "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            name,
            short(v[0]),
            short(v[1]),
            short(v[2]),
            short(v[3]),
            short(v[4]),
            short(v[5]),
            v[6].map(|a| format!("{a:.4}")).unwrap_or_else(|| "undefined".into())
        );
    };
    for f in &report.folds {
        line(&f.fold.to_string(), &f.metrics);
    }
    line("mean", &report.mean);
    line("sd", &report.sd);
    line("pooled", &report.pooled_metrics);
    s
}

fn verdict(significant: bool) -> &'static str {
    if significant {
        "significant"
    } else {
        "not significant"
    }
}

fn mcnemar_line(m: &McNemarResult) -> String {
    format!(
        "McNemar: disagreements with-chaos only correct = {}, without-chaos only correct = {}, chi2 = {}, p = {} ({:?}) -> {}",
        m.b,
        m.c,
        m.statistic.map(|v| format!("{v:.2}")).unwrap_or_else(|| "nan".into()),
        format_p(m.p_value),
        m.method,
        verdict(m.significant())
    )
}

fn paired_line(name: &str, t: &PairedTest) -> String {
    format!(
        "{name}: statistic = {}, p = {} -> {}",
        t.statistic.map(|v| format!("{v:.4}")).unwrap_or_else(|| "nan".into()),
        format_p(t.p_value),
        verdict(t.significant())
    )
}

/// Both arms' tables followed by the paired tests.
pub fn ablation_summary(report: &AblationReport) -> String {
    let mut s = String::new();
    s.push_str("without chaos\n");
    s.push_str(&summary_table(&report.without_chaos));
    s.push_str("\nwith chaos\n");
    s.push_str(&summary_table(&report.with_chaos));
    s.push('\n');
    s.push_str(&mcnemar_line(&report.mcnemar));
    s.push('\n');
    s.push_str(&paired_line("paired t-test (fold accuracy)", &report.accuracy_t_test));
    s.push('\n');
    s.push_str(&paired_line("Wilcoxon signed-rank (fold accuracy)", &report.accuracy_wilcoxon));
    s.push('\n');
    s
}
