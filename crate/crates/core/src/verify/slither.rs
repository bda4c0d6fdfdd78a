use std::path::Path;

use serde_json::Value;

use super::forge::parse_json_payload;
use super::process::{self, ProcessError};
use super::{VerifierConfig, VerifyError};
use crate::model::{slash_path, BenchmarkTask, Location, Severity, SlitherFinding};

fn element_location(element: &Value) -> Option<Location> {
    let mapping = element.get("source_mapping")?;
    let file = mapping
        .get("filename_relative")
        .or_else(|| mapping.get("filename_short"))
        .and_then(Value::as_str)?;
    let line = mapping
        .get("lines")
        .and_then(Value::as_array)
        .and_then(|lines| lines.first())
        .and_then(Value::as_u64)
        .unwrap_or(0);
    Some(Location {
        file: file.trim_start_matches("./").to_string(),
        line: line as u32,
    })
}

/// Converts an analyzer JSON payload into findings on `target`, keeping only
/// High/Medium/Low results, sorted by (file, line, detector).
pub(crate) fn parse_findings(payload: &Value, target: &str) -> Result<Vec<SlitherFinding>, VerifyError> {
    if payload.get("success").and_then(Value::as_bool) == Some(false) {
        let reason = payload
            .get("error")
            .and_then(Value::as_str)
            .unwrap_or("analyzer reported failure");
        return Err(VerifyError::Crash(reason.to_string()));
    }
    let detectors = match payload.pointer("/results/detectors") {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(items)) => items,
        Some(_) => return Err(VerifyError::Unparseable("detectors is not a list".into())),
    };
    let mut findings = Vec::new();
    for detector in detectors {
        let Some(severity) = detector
            .get("impact")
            .and_then(Value::as_str)
            .and_then(Severity::from_impact)
        else {
            continue;
        };
        let locations: Vec<Location> = detector
            .get("elements")
            .and_then(Value::as_array)
            .map(|els| els.iter().filter_map(element_location).collect())
            .unwrap_or_default();
        let Some(location) = locations.into_iter().find(|l| l.file == target) else {
            continue;
        };
        let description = detector
            .get("description")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .lines()
            .next()
            .unwrap_or_default()
            .trim()
            .to_string();
        findings.push(SlitherFinding {
            detector_id: detector
                .get("check")
                .and_then(Value::as_str)
                .unwrap_or("unknown")
                .to_string(),
            severity,
            description,
            location,
        });
    }
    findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(findings)
}

pub(crate) fn run_slither(
    workdir: &Path,
    task: &BenchmarkTask,
    cfg: &VerifierConfig,
) -> Result<Vec<SlitherFinding>, VerifyError> {
    let args: Vec<String> = [".", "--json", "-"].iter().map(|s| s.to_string()).collect();
    let envs: Vec<(String, String)> = cfg
        .solc_version_hint
        .iter()
        .map(|v| ("SOLC_VERSION".to_string(), v.clone()))
        .collect();
    let out = process::run(&cfg.slither_binary, &args, workdir, &envs, cfg.timeout()).map_err(|e| match e {
        ProcessError::Missing(bin) => VerifyError::ToolMissing(bin),
        ProcessError::Timeout => VerifyError::Crash("analyzer timeout".into()),
        ProcessError::Io(e) => VerifyError::Io(e.to_string()),
    })?;
    let payload = parse_json_payload(&out.stdout).ok_or_else(|| {
        let stderr: String = out.stderr.lines().rev().take(5).collect::<Vec<_>>().join(" | ");
        VerifyError::Crash(format!("no JSON output: {stderr}"))
    })?;
    parse_findings(&payload, &slash_path(&task.target_file))
}
