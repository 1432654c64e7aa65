//! Report files: characterization profiles, evaluation reports, adaptation
//! curves, tax reports, and sweep tables — as deterministic JSON plus flat
//! CSV for external plotting, with Table-1-style text rendering for the
//! terminal.

use std::fmt::Write as _;
use std::path::Path;

use prefbench_core::characterize::DatasetProfile;
use prefbench_core::eval::{AdaptationCurve, EvalReport, PerUserTable, SweepCell, TaxReport};

use crate::error::CmdError;

use super::{json_num, json_str, write_atomic};

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), json_num)
}

pub fn profile_json(profile: &DatasetProfile) -> String {
    let mv: Vec<String> = profile
        .mv_acc
        .iter()
        .map(|(u, a)| format!("{}:{}", json_str(u.as_str()), opt_num(*a)))
        .collect();
    let cons: Vec<String> = profile
        .consistency
        .iter()
        .map(|(u, c)| format!("{}:{}", json_str(u.as_str()), opt_num(*c)))
        .collect();
    let minority: Vec<String> = profile
        .minority_users
        .iter()
        .map(|u| json_str(u.as_str()))
        .collect();
    format!(
        "{{\"kind\":\"profile\",\"divergence_rate\":{},\"high_divergence_rate\":{},\"mv_acc\":{{{}}},\"minority_users\":[{}],\"consistency\":{{{}}},\"room\":{}}}\n",
        opt_num(profile.divergence_rate),
        opt_num(profile.high_divergence_rate),
        mv.join(","),
        minority.join(","),
        cons.join(","),
        opt_num(profile.room),
    )
}

/// Table-1-style text rendering.
pub fn profile_table(profile: &DatasetProfile, n_users: usize, n_records: usize) -> String {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}%", 100.0 * x));
    let mv_values: Vec<f64> = profile.mv_acc.values().filter_map(|a| *a).collect();
    let mv_range = if mv_values.is_empty() {
        "-".to_string()
    } else {
        let lo = mv_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = mv_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        format!("[{lo:.2}-{hi:.2}]")
    };
    let cons_values: Vec<f64> = profile.consistency.values().filter_map(|c| *c).collect();
    let consistency = if cons_values.is_empty() {
        "-".to_string()
    } else {
        format!("{:.2}", cons_values.iter().sum::<f64>() / cons_values.len() as f64)
    };
    let room = profile.room.map_or("-".to_string(), |r| format!("{r:.2}"));
    let minority = if profile.minority_users.is_empty() {
        "-".to_string()
    } else {
        profile
            .minority_users
            .iter()
            .map(|u| u.as_str().to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>9} {:>7} {:>11} {:>14} {:>12} {:>6}  {}",
        "#users", "#records", "%div", "%highlydiv", "mv-acc range", "consistency", "room", "minority"
    );
    let _ = writeln!(
        out,
        "{:>8} {:>9} {:>7} {:>11} {:>14} {:>12} {:>6}  {}",
        n_users,
        n_records,
        pct(profile.divergence_rate),
        pct(profile.high_divergence_rate),
        mv_range,
        consistency,
        room,
        minority
    );
    out
}

pub fn save_profile(
    profile: &DatasetProfile,
    path: &Path,
) -> Result<(), CmdError> {
    write_atomic(path, profile_json(profile).as_bytes())
}

pub fn eval_report_json(report: &EvalReport) -> String {
    let per_user: Vec<String> = report
        .per_user
        .iter()
        .map(|(u, s)| {
            format!(
                "{}:{{\"n\":{},\"correct\":{},\"accuracy\":{}}}",
                json_str(u.as_str()),
                s.n,
                s.correct,
                json_num(s.accuracy),
            )
        })
        .collect();
    format!(
        "{{\"kind\":\"eval\",\"method\":{},\"overall\":{},\"n_test\":{},\"seed\":{},\"per_user\":{{{}}}}}\n",
        json_str(&report.method),
        json_num(report.overall),
        report.n_test,
        report.seed,
        per_user.join(","),
    )
}

pub fn save_eval_reports(reports: &[EvalReport], path: &Path) -> Result<(), CmdError> {
    let mut out = String::new();
    for report in reports {
        out.push_str(&eval_report_json(report));
    }
    write_atomic(path, out.as_bytes())
}

/// Flat CSV: one row per (method, user) cell plus an `overall` row each.
pub fn eval_reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,user,n,correct,accuracy\n");
    for report in reports {
        for (user, s) in &report.per_user {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                report.method,
                user.as_str(),
                s.n,
                s.correct,
                json_num(s.accuracy)
            );
        }
        let _ = writeln!(
            out,
            "{},overall,{},{},{}",
            report.method,
            report.n_test,
            (report.overall * report.n_test as f64).round() as usize,
            json_num(report.overall)
        );
    }
    out
}

/// Per-user matrix with sub-cutoff cells flagged by `*` (the underline
/// convention of printed tables).
pub fn per_user_table_text(table: &PerUserTable) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:>12}", "method");
    for user in &table.users {
        let _ = write!(out, " {:>8}", user.as_str());
    }
    out.push('\n');
    for (m, method) in table.methods.iter().enumerate() {
        let _ = write!(out, "{method:>12}");
        for (u, _) in table.users.iter().enumerate() {
            let cell = table.cells[m][u];
            let mark = if table.flags[m][u] { "*" } else { "" };
            let _ = write!(out, " {:>8}", format!("{cell:.3}{mark}"));
        }
        out.push('\n');
    }
    let _ = writeln!(out, "(* accuracy below {:.2})", table.cutoff);
    out
}

pub fn adaptation_json(curve: &AdaptationCurve, seed: u64) -> String {
    let budgets: Vec<String> = curve.budgets.iter().map(|b| b.to_string()).collect();
    let methods: Vec<String> = curve
        .methods
        .iter()
        .map(|(name, accs)| {
            let values: Vec<String> = accs.iter().map(|&a| json_num(a)).collect();
            format!("{}:[{}]", json_str(name), values.join(","))
        })
        .collect();
    format!(
        "{{\"kind\":\"adaptation\",\"seed\":{},\"budgets\":[{}],\"upper_bound\":{},\"methods\":{{{}}}}}\n",
        seed,
        budgets.join(","),
        json_num(curve.upper_bound),
        methods.join(","),
    )
}

pub fn adaptation_csv(curve: &AdaptationCurve) -> String {
    let mut out = String::from("method,budget,accuracy\n");
    for (name, accs) in &curve.methods {
        for (budget, acc) in curve.budgets.iter().zip(accs) {
            let _ = writeln!(out, "{name},{budget},{}", json_num(*acc));
        }
    }
    let _ = writeln!(out, "upper-bound,,{}", json_num(curve.upper_bound));
    out
}

pub fn tax_json(report: &TaxReport, seed: u64) -> String {
    format!(
        "{{\"kind\":\"tax\",\"seed\":{},\"finetune_epochs\":{},\"probe_before\":{},\"probe_after\":{},\"probe_delta\":{},\"user_before\":{},\"user_after\":{},\"user_delta\":{}}}\n",
        seed,
        report.finetune_epochs,
        json_num(report.probe_before),
        json_num(report.probe_after),
        json_num(report.probe_delta),
        json_num(report.user_before),
        json_num(report.user_after),
        json_num(report.user_delta),
    )
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("method,size,accuracy\n");
    for cell in cells {
        let _ = writeln!(out, "{},{},{}", cell.method, cell.size, json_num(cell.accuracy));
    }
    out
}

pub fn sweep_json(cells: &[SweepCell], seed: u64) -> String {
    let rows: Vec<String> = cells
        .iter()
        .map(|c| {
            format!(
                "{{\"method\":{},\"size\":{},\"accuracy\":{}}}",
                json_str(&c.method),
                c.size,
                json_num(c.accuracy)
            )
        })
        .collect();
    format!(
        "{{\"kind\":\"sweep\",\"seed\":{},\"cells\":[{}]}}\n",
        seed,
        rows.join(",")
    )
}
