//! Result tables: per-movement accuracy, confusion matrix, metric summary.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::SplitPlan;
use crate::io::write_atomic;
use crate::metrics::Metrics;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub plan: SplitPlan,
    pub metrics: Metrics,
}

/// Metrics of every split plan plus wall-clock time per pipeline stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub plans: Vec<PlanResult>,
    /// `(stage, seconds)`, informational only.
    pub timings: Vec<(String, f64)>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

impl RunReport {
    pub fn n_classes(&self) -> usize {
        self.plans.first().map_or(0, |p| p.metrics.confusion.len())
    }

    fn check(&self) -> Result<()> {
        if self.plans.is_empty() {
            return Err(Error::domain("report needs at least one plan result"));
        }
        Ok(())
    }

    pub fn mean_accuracy(&self) -> f64 {
        mean(self.plans.iter().map(|p| p.metrics.accuracy))
    }

    /// Mean over plans of each movement's accuracy.
    pub fn per_movement(&self) -> Vec<f64> {
        (0..self.n_classes()).map(|c| mean(self.plans.iter().map(|p| p.metrics.per_class_accuracy[c]))).collect()
    }

    /// `movement,plan1..planP,mean`, one row per movement and a final `mean` row.
    pub fn per_movement_csv(&self) -> String {
        let p = self.plans.len();
        let mut s = String::from("movement");
        for i in 1..=p {
            write!(s, ",plan{i}").unwrap();
        }
        s.push_str(",mean\n");
        let overall = self.per_movement();
        for (c, m) in overall.iter().enumerate() {
            write!(s, "{}", c + 1).unwrap();
            for plan in &self.plans {
                write!(s, ",{}", plan.metrics.per_class_accuracy[c]).unwrap();
            }
            writeln!(s, ",{m}").unwrap();
        }
        s.push_str("mean");
        for plan in &self.plans {
            write!(s, ",{}", mean(plan.metrics.per_class_accuracy.iter().copied())).unwrap();
        }
        writeln!(s, ",{}", mean(overall.iter().copied())).unwrap();
        s
    }

    /// Confusion counts summed over plans; rows are true movements.
    pub fn confusion_csv(&self) -> String {
        let m = self.n_classes();
        let mut s = String::from("true\\pred");
        for j in 1..=m {
            write!(s, ",{j}").unwrap();
        }
        s.push('\n');
        for i in 0..m {
            write!(s, "{}", i + 1).unwrap();
            for j in 0..m {
                let total: u64 = self.plans.iter().map(|p| p.metrics.confusion[i][j]).sum();
                write!(s, ",{total}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// `plan,train_repetitions,test_repetitions,accuracy,precision,recall,f1` plus a `mean` row.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("plan,train_repetitions,test_repetitions,accuracy,precision,recall,f1\n");
        let reps = |set: &std::collections::BTreeSet<u8>| set.iter().map(u8::to_string).collect::<Vec<_>>().join(" ");
        for (i, p) in self.plans.iter().enumerate() {
            let m = &p.metrics;
            writeln!(
                s,
                "{},{},{},{},{},{},{}",
                i + 1,
                reps(&p.plan.train_repetitions),
                reps(&p.plan.test_repetitions),
                m.accuracy,
                m.macro_precision,
                m.macro_recall,
                m.macro_f1
            )
            .unwrap();
        }
        let [a, pr, r, f] = self.mean_metrics();
        writeln!(s, "mean,,,{a},{pr},{r},{f}").unwrap();
        s
    }

    /// Plan means of accuracy, macro precision, macro recall and macro F1.
    pub fn mean_metrics(&self) -> [f64; 4] {
        let pick = |f: fn(&Metrics) -> f64| mean(self.plans.iter().map(|p| f(&p.metrics)));
        [pick(|m| m.accuracy), pick(|m| m.macro_precision), pick(|m| m.macro_recall), pick(|m| m.macro_f1)]
    }

    pub fn summary_text(&self) -> String {
        let [a, p, r, f] = self.mean_metrics();
        let mut s = String::new();
        writeln!(s, "accuracy   {:.4}", a).unwrap();
        writeln!(s, "precision  {:.4}", p).unwrap();
        writeln!(s, "recall     {:.4}", r).unwrap();
        writeln!(s, "f1         {:.4}", f).unwrap();
        if !self.timings.is_empty() {
            s.push_str("\ntime (s)\n");
            for (stage, secs) in &self.timings {
                writeln!(s, "  {stage:<12} {secs:.2}").unwrap();
            }
        }
        s
    }
}

/// Writes `metrics.csv`, `per_movement.csv`, `confusion.csv` and `summary.txt`.
///
/// Every file is replaced atomically. Only `summary.txt` carries timings, so
/// the CSV files are identical across reruns of the same configuration.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<()> {
    report.check()?;
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join("metrics.csv"), report.metrics_csv().as_bytes())?;
    write_atomic(&dir.join("per_movement.csv"), report.per_movement_csv().as_bytes())?;
    write_atomic(&dir.join("confusion.csv"), report.confusion_csv().as_bytes())?;
    write_atomic(&dir.join("summary.txt"), report.summary_text().as_bytes())
}

/// Side-by-side per-movement accuracy of several runs, e.g. the successive
/// optimization stages, with a final `mean` row.
pub fn stage_comparison_csv(columns: &[(String, Vec<f64>)]) -> Result<String> {
    let rows = columns.first().map(|c| c.1.len()).ok_or_else(|| Error::domain("no runs to compare"))?;
    if columns.iter().any(|c| c.1.len() != rows) {
        return Err(Error::domain("runs disagree on the number of movements"));
    }
    let mut s = String::from("movement");
    for (name, _) in columns {
        write!(s, ",{name}").unwrap();
    }
    s.push('\n');
    for r in 0..rows {
        write!(s, "{}", r + 1).unwrap();
        for (_, v) in columns {
            write!(s, ",{}", v[r]).unwrap();
        }
        s.push('\n');
    }
    s.push_str("mean");
    for (_, v) in columns {
        write!(s, ",{}", mean(v.iter().copied())).unwrap();
    }
    s.push('\n');
    Ok(s)
}

/// Reads the `mean` column of a `per_movement.csv`, excluding the final mean row.
pub fn read_per_movement(path: &Path) -> Result<Vec<f64>> {
    let load_err = |msg: String| Error::Load { path: path.to_path_buf(), msg };
    let mut reader = csv::Reader::from_path(path).map_err(|e| load_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| load_err(e.to_string()))?.clone();
    let col = headers.iter().position(|h| h == "mean").ok_or_else(|| load_err("no `mean` column".into()))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| load_err(e.to_string()))?;
        if rec.get(0) == Some("mean") {
            continue;
        }
        let v = rec.get(col).unwrap_or("").parse::<f64>().map_err(|e| load_err(e.to_string()))?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_cv_plans;
    use crate::metrics::evaluate;

    fn report() -> RunReport {
        let plans = make_cv_plans();
        RunReport {
            plans: vec![
                PlanResult { plan: plans[0].clone(), metrics: evaluate(&[0, 1, 2, 2], &[0, 1, 1, 2], 3).unwrap() },
                PlanResult { plan: plans[1].clone(), metrics: evaluate(&[0, 0, 2, 1], &[0, 1, 2, 1], 3).unwrap() },
            ],
            timings: vec![("train".into(), 1.5)],
        }
    }

    #[test]
    fn per_movement_layout_and_mean_row() {
        let r = report();
        let csv = r.per_movement_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "movement,plan1,plan2,mean");
        assert_eq!(lines.len(), 1 + 3 + 1);
        let means: Vec<f64> = lines[1..4].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        let last: f64 = lines[4].rsplit(',').next().unwrap().parse().unwrap();
        assert!((last - means.iter().sum::<f64>() / 3.0).abs() < 1e-9);
    }

    #[test]
    fn confusion_sums_plans() {
        let csv = report().confusion_csv();
        assert_eq!(csv.lines().nth(2).unwrap(), "2,1,2,1");
    }

    #[test]
    fn summary_names_the_four_metrics() {
        let s = report().summary_text();
        for name in ["accuracy", "precision", "recall", "f1", "time"] {
            assert!(s.contains(name));
        }
    }

    #[test]
    fn emit_twice_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(), dir.path()).unwrap();
        emit_report(&report(), dir.path()).unwrap();
        let names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert_eq!(names.len(), 4);
        let v = read_per_movement(&dir.path().join("per_movement.csv")).unwrap();
        assert_eq!(v, report().per_movement());
    }

    #[test]
    fn stage_table() {
        let s = stage_comparison_csv(&[("base".into(), vec![0.5, 1.0]), ("tuned".into(), vec![1.0, 1.0])]).unwrap();
        assert_eq!(s, "movement,base,tuned\n1,0.5,1\n2,1,1\nmean,0.75,1\n");
    }
}
