//! Scores a small hand-made evaluation batch: Macro F1, TPR-gap and DP-gap
//! with the per-emotion breakdown.

use covada::harness::report_csv;
use covada::metrics::{evaluate, EvalBatch, GapOptions};

fn main() -> covada::Result<()> {
    let emotions = vec!["happy".to_string(), "sad".to_string()];
    // (truth, prediction, group)
    let rows = [
        ([true, false], [true, false], "female"),
        ([true, false], [true, false], "female"),
        ([false, true], [false, true], "female"),
        ([false, true], [true, true], "female"),
        ([true, false], [false, false], "male"),
        ([true, false], [true, false], "male"),
        ([false, true], [false, false], "male"),
        ([false, true], [false, true], "male"),
    ];
    let batch = EvalBatch::new(
        emotions,
        rows.iter().map(|r| r.0.to_vec()).collect(),
        rows.iter().map(|r| r.1.to_vec()).collect(),
        rows.iter().map(|r| r.2.to_string()).collect(),
    )?;
    let report = evaluate(&batch, GapOptions::default())?;
    print!("{}", report_csv(&report));

    println!("\nTPR by group:");
    for (e, row) in report.tpr_by_group.iter().enumerate() {
        println!("  {:6} {:?}", report.per_emotion[e].emotion, row);
    }
    Ok(())
}
