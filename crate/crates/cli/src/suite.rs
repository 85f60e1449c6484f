//! Directory suites: run every scenario file, aggregate deterministically.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::report::{now, Report, SuiteEntry, SuiteReport};
use crate::run::run_scenario;
use crate::scenario::parse_scenario;
use crate::CliError;

pub fn load_and_run(path: &Path, seed_override: Option<u64>) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let sc = parse_scenario(&text)
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    run_scenario(&sc, seed_override)
}

/// Run every `.json` scenario in `dir`. Worker threads pull files from a
/// shared queue; the aggregate is ordered by filename regardless of the
/// execution schedule.
pub fn run_suite(
    dir: &Path,
    seed_override: Option<u64>,
    threads: usize,
) -> Result<SuiteReport, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    files.sort();

    let results: Vec<Mutex<Option<Result<Report, CliError>>>> =
        files.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    let workers = threads.max(1).min(files.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= files.len() {
                    break;
                }
                let outcome = load_and_run(&files[i], seed_override);
                *results[i].lock().expect("result slot") = Some(outcome);
            });
        }
    });

    let mut entries = Vec::with_capacity(files.len());
    let mut check_count = 0usize;
    let mut pass = true;
    for (file, slot) in files.iter().zip(results) {
        let name = file
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario")
            .to_string();
        match slot.into_inner().expect("result slot").expect("worker ran") {
            Ok(report) => {
                check_count += report.checks.len();
                pass &= report.pass;
                entries.push(SuiteEntry { file: name, report: Some(report), error: None });
            }
            Err(e) => {
                pass = false;
                entries.push(SuiteEntry { file: name, report: None, error: Some(e.to_string()) });
            }
        }
    }
    Ok(SuiteReport {
        timestamp: now(),
        scenario_count: entries.len(),
        check_count,
        entries,
        pass,
    })
}

/// Exit code for a finished suite: schema/run failures dominate check
/// failures.
pub fn suite_exit_code(report: &SuiteReport) -> u8 {
    if report.entries.iter().any(|e| e.error.is_some()) {
        2
    } else if !report.pass {
        1
    } else {
        0
    }
}
