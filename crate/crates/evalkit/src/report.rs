//! Report rendering: a human-readable table and a machine-readable
//! `metric.sequence=value` key=value form.

use crate::aggregate::EvalReport;
use crate::vsod::VsodScores;

pub fn to_table(report: &EvalReport, vsod: Option<&VsodScores>) -> String {
    let mut out = String::new();
    out.push_str("# aggregation: per-sequence (global values average per-sequence scores)\n");
    out.push_str(&format!(
        "{:<16} {:>7} {:>8} {:>8} {:>7} {:>8} {:>8} {:>8}\n",
        "sequence", "J-mean", "J-recall", "J-decay", "F-mean", "F-recall", "F-decay", "J&F"
    ));
    for s in &report.sequences {
        out.push_str(&format!(
            "{:<16} {:>7.4} {:>8.4} {:>8.4} {:>7.4} {:>8.4} {:>8.4} {:>8.4}\n",
            s.name, s.j.mean, s.j.recall, s.j.decay, s.f.mean, s.f.recall, s.f.decay,
            s.jf_mean()
        ));
    }
    out.push_str(&format!(
        "{:<16} {:>7.4} {:>8.4} {:>8.4} {:>7.4} {:>8.4} {:>8.4} {:>8.4}\n",
        "GLOBAL",
        report.j.mean,
        report.j.recall,
        report.j.decay,
        report.f.mean,
        report.f.recall,
        report.f.decay,
        report.jf_mean()
    ));
    if let Some(v) = vsod {
        out.push_str(&format!(
            "VSOD: S {:.4}  E-max {:.4}  F-max {:.4}  MAE {:.4}\n",
            v.s_measure, v.e_max, v.f_max, v.mae
        ));
    }
    out
}

pub fn to_key_values(report: &EvalReport, vsod: Option<&VsodScores>) -> String {
    let mut out = String::new();
    let mut push = |metric: &str, seq: &str, value: f64| {
        out.push_str(&format!("{metric}.{seq}={value:.6}\n"));
    };
    for s in &report.sequences {
        push("j_mean", &s.name, s.j.mean);
        push("j_recall", &s.name, s.j.recall);
        push("j_decay", &s.name, s.j.decay);
        push("f_mean", &s.name, s.f.mean);
        push("f_recall", &s.name, s.f.recall);
        push("f_decay", &s.name, s.f.decay);
        push("jf_mean", &s.name, s.jf_mean());
    }
    push("j_mean", "global", report.j.mean);
    push("j_recall", "global", report.j.recall);
    push("j_decay", "global", report.j.decay);
    push("f_mean", "global", report.f.mean);
    push("f_recall", "global", report.f.recall);
    push("f_decay", "global", report.f.decay);
    push("jf_mean", "global", report.jf_mean());
    if let Some(v) = vsod {
        push("s_measure", "global", v.s_measure);
        push("e_max", "global", v.e_max);
        push("f_max", "global", v.f_max);
        push("mae", "global", v.mae);
    }
    out
}
