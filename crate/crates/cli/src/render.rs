use std::cmp::Ordering;
use std::fmt::Write;

use relex::evaluation::Cell;
use relex::{EvaluationReport, TestKind};

/// Orders cells by descending mean, then by metric token; cells without a
/// mean go last.
fn compare(a: &Cell, b: &Cell) -> Ordering {
    match (a.mean, b.mean) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| a.metric.to_string().cmp(&b.metric.to_string()))
}

/// One block per test, rows sorted by mean, the `top` best rows starred.
pub fn render(report: &EvaluationReport, top: usize) -> String {
    let mut out = String::new();
    let meta = &report.meta;
    let _ = writeln!(
        out,
        "dataset {} ({} instances, {} classes), {} repetitions, {} test samples, k={}",
        meta.dataset_digest.get(..12).unwrap_or(&meta.dataset_digest),
        meta.dataset_size,
        meta.class_count,
        meta.repetitions,
        meta.test_sample_size,
        meta.k
    );
    for test in TestKind::ALL {
        let mut cells: Vec<&Cell> = report.cells.iter().filter(|c| c.test == test).collect();
        if cells.is_empty() {
            continue;
        }
        cells.sort_by(|a, b| compare(a, b));
        let _ = writeln!(out, "\n{test}");
        for (rank, c) in cells.iter().enumerate() {
            let mark = if rank < top && c.mean.is_some() { "*" } else { " " };
            let value = match (c.mean, c.std) {
                (Some(m), Some(s)) => format!("{m:>7.3} ± {s:.3}"),
                _ => format!("{:>15}", "-"),
            };
            let _ = write!(out, "{mark} {:<10} {value}", c.metric.to_string());
            if c.degenerate_count > 0 {
                let _ = write!(out, "  ({} degenerate)", c.degenerate_count);
            }
            if let Some(e) = &c.error {
                let _ = write!(out, "  error: {e}");
            }
            out.push('\n');
        }
    }
    out
}
