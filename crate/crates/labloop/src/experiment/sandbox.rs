//! Subprocess sandbox: materialize a code attempt into an isolated working
//! directory, run its entry file with a wall-time limit, and capture
//! truncated logs plus `METRIC <name>=<value>` lines from stdout.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{CodeAttempt, ExecutionRecord, RunStatus};

/// Resource limits for one attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionLimits {
    pub wall_time_secs: f64,
    pub max_log_bytes: usize,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            wall_time_secs: 30.0,
            max_log_bytes: 64 * 1024,
        }
    }
}

/// How attempts are launched. The interpreter is invoked with the entry file
/// appended as its final argument, from inside the attempt directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandboxConfig {
    pub entry_file: String,
    pub interpreter: Vec<String>,
    pub limits: ExecutionLimits,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            entry_file: "main.sh".into(),
            interpreter: vec!["sh".into()],
            limits: ExecutionLimits::default(),
        }
    }
}

/// Parse `METRIC <name>=<real>` lines. A line that announces a metric but
/// cannot be parsed poisons the whole set (`Err`), which downgrades an
/// exit-0 run to a runtime failure.
fn parse_metrics(stdout: &str) -> std::result::Result<BTreeMap<String, f64>, String> {
    let mut metrics = BTreeMap::new();
    for line in stdout.lines() {
        let Some(rest) = line.trim().strip_prefix("METRIC ") else {
            continue;
        };
        let Some((name, value)) = rest.split_once('=') else {
            return Err(format!("malformed metric line: {line:?}"));
        };
        let name = name.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("malformed metric value in line: {line:?}"))?;
        if name.is_empty() || !value.is_finite() {
            return Err(format!("malformed metric line: {line:?}"));
        }
        metrics.insert(name.to_string(), value);
    }
    Ok(metrics)
}

fn truncate_log(mut log: Vec<u8>, limit: usize) -> String {
    let truncated = log.len() > limit;
    log.truncate(limit);
    let mut text = String::from_utf8_lossy(&log).into_owned();
    if truncated {
        text.push_str("\n[log truncated]");
    }
    text
}

/// Capture a pipe on its own thread so a chattering child never blocks.
fn spawn_reader<R: Read + Send + 'static>(mut pipe: R) -> std::thread::JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        buf
    })
}

/// Execute one attempt inside `dir`.
///
/// The directory is created fresh, source files are written into it, and the
/// entry file runs as a subprocess. The record plus both log files are
/// persisted into the directory before this function returns, so a crash
/// between attempts never loses an outcome.
pub fn execute_attempt(
    attempt: &CodeAttempt,
    dir: &Path,
    sandbox: &SandboxConfig,
) -> Result<ExecutionRecord> {
    if attempt.source_files.is_empty() {
        return Err(Error::Validation("attempt has no source files".into()));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Setup(format!("cannot create attempt dir {}: {e}", dir.display())))?;
    for (rel, contents) in &attempt.source_files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, contents)?;
    }

    let record = if attempt.source_files.contains_key(&sandbox.entry_file) {
        run_entry(attempt, dir, sandbox)?
    } else {
        ExecutionRecord {
            attempt_id: attempt.id.clone(),
            status: RunStatus::SetupFailure,
            exit_code: -1,
            stdout_log: String::new(),
            stderr_log: format!("entry file {:?} missing from attempt sources", sandbox.entry_file),
            metrics: BTreeMap::new(),
            wall_time_secs: 0.0,
        }
    };

    persist_record(&record, dir)?;
    Ok(record)
}

fn run_entry(attempt: &CodeAttempt, dir: &Path, sandbox: &SandboxConfig) -> Result<ExecutionRecord> {
    let (program, args) = sandbox
        .interpreter
        .split_first()
        .ok_or_else(|| Error::Configuration("sandbox interpreter is empty".into()))?;

    let started = Instant::now();
    let spawn = Command::new(program)
        .args(args)
        .arg(&sandbox.entry_file)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn();

    let mut child = match spawn {
        Ok(child) => child,
        Err(e) => {
            return Ok(ExecutionRecord {
                attempt_id: attempt.id.clone(),
                status: RunStatus::SetupFailure,
                exit_code: -1,
                stdout_log: String::new(),
                stderr_log: format!("failed to spawn {program:?}: {e}"),
                metrics: BTreeMap::new(),
                wall_time_secs: started.elapsed().as_secs_f64(),
            });
        }
    };

    let stdout_reader = spawn_reader(child.stdout.take().expect("stdout piped"));
    let stderr_reader = spawn_reader(child.stderr.take().expect("stderr piped"));

    let limit = Duration::from_secs_f64(sandbox.limits.wall_time_secs);
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if started.elapsed() >= limit {
            timed_out = true;
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let wall_time_secs = started.elapsed().as_secs_f64();

    let stdout_log = truncate_log(
        stdout_reader.join().unwrap_or_default(),
        sandbox.limits.max_log_bytes,
    );
    let stderr_log = truncate_log(
        stderr_reader.join().unwrap_or_default(),
        sandbox.limits.max_log_bytes,
    );

    let (status, exit_code, metrics) = if timed_out {
        (RunStatus::Timeout, -1, BTreeMap::new())
    } else {
        let exit_code = status.and_then(|s| s.code()).unwrap_or(-1);
        match (exit_code, parse_metrics(&stdout_log)) {
            (0, Ok(metrics)) => (RunStatus::Success, 0, metrics),
            (0, Err(reason)) => {
                log::warn!("attempt {}: exit 0 but {reason}", attempt.id);
                (RunStatus::RuntimeFailure, 0, BTreeMap::new())
            }
            (code, parsed) => (RunStatus::RuntimeFailure, code, parsed.unwrap_or_default()),
        }
    };

    Ok(ExecutionRecord {
        attempt_id: attempt.id.clone(),
        status,
        exit_code,
        stdout_log,
        stderr_log,
        metrics,
        wall_time_secs,
    })
}

fn persist_record(record: &ExecutionRecord, dir: &Path) -> Result<()> {
    std::fs::write(dir.join("stdout.log"), &record.stdout_log)?;
    std::fs::write(dir.join("stderr.log"), &record.stderr_log)?;
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Storage(format!("encode execution record: {e}")))?;
    let tmp = dir.join("record.json.tmp");
    std::fs::write(&tmp, json + "\n")?;
    std::fs::rename(tmp, dir.join("record.json"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attempt(id: &str, code: &str) -> CodeAttempt {
        CodeAttempt {
            id: id.into(),
            stage_index: 1,
            attempt_index: 1,
            source_files: BTreeMap::from([("main.sh".to_string(), code.to_string())]),
            parent_attempt_id: None,
            diagnosis_applied: None,
        }
    }

    fn sandbox(wall_secs: f64) -> SandboxConfig {
        SandboxConfig {
            limits: ExecutionLimits {
                wall_time_secs: wall_secs,
                max_log_bytes: 4096,
            },
            ..SandboxConfig::default()
        }
    }

    #[test]
    fn metric_line_yields_success() {
        let dir = tempfile::tempdir().unwrap();
        let record = execute_attempt(
            &attempt("a1", "echo 'METRIC f1=0.5'"),
            &dir.path().join("a1"),
            &sandbox(10.0),
        )
        .unwrap();
        assert_eq!(record.status, RunStatus::Success);
        assert_eq!(record.exit_code, 0);
        assert_eq!(record.metrics["f1"], 0.5);
    }

    #[test]
    fn crash_captures_exit_code_and_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let record = execute_attempt(
            &attempt("a1", "echo boom >&2\nexit 3"),
            &dir.path().join("a1"),
            &sandbox(10.0),
        )
        .unwrap();
        assert_eq!(record.status, RunStatus::RuntimeFailure);
        assert_eq!(record.exit_code, 3);
        assert!(record.stderr_log.contains("boom"));
    }

    #[test]
    fn sleep_beyond_limit_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let record = execute_attempt(
            &attempt("a1", "echo partial\nsleep 5"),
            &dir.path().join("a1"),
            &sandbox(0.3),
        )
        .unwrap();
        assert_eq!(record.status, RunStatus::Timeout);
        assert!(record.wall_time_secs >= 0.3);
        // Partial output survives the kill.
        assert!(record.stdout_log.contains("partial"));
    }

    #[test]
    fn missing_entry_file_is_setup_failure() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = attempt("a1", "echo hi");
        a.source_files = BTreeMap::from([("other.sh".to_string(), "echo hi".to_string())]);
        let record = execute_attempt(&a, &dir.path().join("a1"), &sandbox(5.0)).unwrap();
        assert_eq!(record.status, RunStatus::SetupFailure);
        assert!(record.stderr_log.contains("main.sh"));
    }

    #[test]
    fn empty_source_map_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = attempt("a1", "x");
        a.source_files.clear();
        assert!(matches!(
            execute_attempt(&a, &dir.path().join("a1"), &sandbox(5.0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn exit_zero_with_malformed_metric_is_runtime_failure() {
        let dir = tempfile::tempdir().unwrap();
        let record = execute_attempt(
            &attempt("a1", "echo 'METRIC broken'"),
            &dir.path().join("a1"),
            &sandbox(5.0),
        )
        .unwrap();
        assert_eq!(record.status, RunStatus::RuntimeFailure);
        assert_eq!(record.exit_code, 0);
    }

    #[test]
    fn exit_zero_with_no_metrics_is_success_with_empty_map() {
        let dir = tempfile::tempdir().unwrap();
        let record = execute_attempt(
            &attempt("a1", "echo all done"),
            &dir.path().join("a1"),
            &sandbox(5.0),
        )
        .unwrap();
        assert_eq!(record.status, RunStatus::Success);
        assert!(record.metrics.is_empty());
    }

    #[test]
    fn logs_are_truncated_at_the_limit() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sandbox(10.0);
        cfg.limits.max_log_bytes = 64;
        let record = execute_attempt(
            &attempt("a1", "yes spam | head -c 10000; echo 'METRIC ok=1'"),
            &dir.path().join("a1"),
            &cfg,
        )
        .unwrap();
        assert!(record.stdout_log.len() <= 64 + "\n[log truncated]".len());
        assert!(record.stdout_log.contains("[log truncated]"));
    }

    #[test]
    fn record_and_logs_are_persisted_in_the_attempt_dir() {
        let dir = tempfile::tempdir().unwrap();
        let attempt_dir = dir.path().join("stage1").join("attempt1");
        execute_attempt(&attempt("a1", "echo 'METRIC m=1'"), &attempt_dir, &sandbox(5.0)).unwrap();
        assert!(attempt_dir.join("main.sh").exists());
        assert!(attempt_dir.join("stdout.log").exists());
        assert!(attempt_dir.join("stderr.log").exists());
        let raw = std::fs::read_to_string(attempt_dir.join("record.json")).unwrap();
        let loaded: ExecutionRecord = serde_json::from_str(&raw).unwrap();
        assert_eq!(loaded.status, RunStatus::Success);
    }

    #[test]
    fn concurrent_attempts_do_not_share_directories() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().to_path_buf();
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let base = base.clone();
                std::thread::spawn(move || {
                    let code = format!("echo {i} > marker.txt\necho 'METRIC id={i}'");
                    let a = attempt(&format!("a{i}"), &code);
                    let d = base.join(format!("attempt{i}"));
                    let record = execute_attempt(&a, &d, &sandbox(5.0)).unwrap();
                    (d, i, record)
                })
            })
            .collect();
        for h in handles {
            let (d, i, record) = h.join().unwrap();
            assert_eq!(record.metrics["id"], i as f64);
            let marker = std::fs::read_to_string(d.join("marker.txt")).unwrap();
            assert_eq!(marker.trim(), i.to_string());
        }
    }
}
