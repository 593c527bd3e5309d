//! Plot-ready report emission. All files are plain text with fixed
//! formatting so a seeded run reproduces them byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use crate::experiment::ExperimentReport;
use crate::io::{fmt_f64, write_trajectory_csv, IoError};

pub const CATEGORY_HEADER: &str = "scan, r1, r2, r3, t1, t2, t3";
pub const LOCALIZABILITY_FILE: &str = "localizability.jsonl";
pub const TRAJECTORY_FILE: &str = "trajectory_est.csv";
pub const CATEGORY_FILE: &str = "categories.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Writes the estimated trajectory, per-scan localizability records, the
/// category timeline, and a run summary into `out_dir`. Returns the paths
/// written. Empty reports produce header-only files.
pub fn emit_reports(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let traj_path = out_dir.join(TRAJECTORY_FILE);
    write_trajectory_csv(&report.est, &traj_path)?;
    written.push(traj_path);

    let mut jsonl = String::new();
    for scan in &report.scans {
        if let Some(record) = &scan.record {
            jsonl.push_str(&serde_json::to_string(record).expect("record serializes"));
            jsonl.push('\n');
        }
    }
    let loc_path = out_dir.join(LOCALIZABILITY_FILE);
    fs::write(&loc_path, jsonl)?;
    written.push(loc_path);

    let mut categories = String::from(CATEGORY_HEADER);
    categories.push('\n');
    for scan in &report.scans {
        match &scan.categories {
            Some(cats) => {
                categories.push_str(&format!(
                    "{}, {}, {}, {}, {}, {}, {}\n",
                    scan.index, cats[0], cats[1], cats[2], cats[3], cats[4], cats[5]
                ));
            }
            None => {
                categories.push_str(&format!("{}, -, -, -, -, -, -\n", scan.index));
            }
        }
    }
    let cat_path = out_dir.join(CATEGORY_FILE);
    fs::write(&cat_path, categories)?;
    written.push(cat_path);

    let mut summary = String::new();
    summary.push_str(&format!("method: {}\n", report.method));
    summary.push_str(&format!("scans: {}\n", report.scans.len()));
    summary.push_str(&format!("failures: {}\n", report.failures));
    let converged = report.scans.iter().filter(|s| s.converged).count();
    summary.push_str(&format!("converged: {converged}\n"));
    let total_iters: usize = report.scans.iter().map(|s| s.iterations).sum();
    summary.push_str(&format!("total_iterations: {total_iters}\n"));
    match &report.ate {
        Some(ate) => {
            summary.push_str(&format!("ate_rmse_m: {}\n", fmt_f64(ate.rmse)));
            summary.push_str(&format!(
                "ate_axis_rmse_m: {} {} {}\n",
                fmt_f64(ate.per_axis[0]),
                fmt_f64(ate.per_axis[1]),
                fmt_f64(ate.per_axis[2])
            ));
            summary.push_str(&format!("ate_poses: {}\n", ate.n_associated));
        }
        None => summary.push_str("ate_rmse_m: n/a\n"),
    }
    let sum_path = out_dir.join(SUMMARY_FILE);
    fs::write(&sum_path, summary)?;
    written.push(sum_path);

    Ok(written)
}
