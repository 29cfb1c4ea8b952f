//! JSON-lines persistence of tuning studies.
//!
//! Line 1 is the config snapshot, then one line per trial in evaluation order,
//! then a summary line. Infinite objective values are written as `null`.
//! `timestamp` is a logical clock (trials completed so far in the study), which
//! keeps files byte-identical across reruns with the same seeds.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::sampler::{SamplerKind, TrialRecord};
use crate::tuner::{StagePhase, StageRecord, Study, StudyConfig};
use crate::{jsonfmt, Error, Result};

pub const STUDY_FORMAT_VERSION: &str = "1";

fn null_as_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn opt_scores<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<(String, f64)>>, D::Error> {
    let raw = Option::<Vec<(String, Option<f64>)>>::deserialize(d)?;
    Ok(raw.map(|v| v.into_iter().map(|(n, x)| (n, x.unwrap_or(f64::INFINITY))).collect()))
}

#[derive(Serialize, Deserialize)]
struct ConfigLine {
    record: String,
    format_version: String,
    #[serde(flatten)]
    config: StudyConfig,
}

#[derive(Serialize, Deserialize)]
struct TrialLine {
    record: String,
    trial_id: usize,
    stage_index: usize,
    target_param: String,
    point: BTreeMap<String, f64>,
    #[serde(deserialize_with = "null_as_inf")]
    tts: f64,
    p0: Option<f64>,
    sampler: SamplerKind,
    timestamp: u64,
    stage_label: String,
}

#[derive(Serialize, Deserialize)]
struct StageLine {
    stage_index: usize,
    phase: StagePhase,
    target_param: String,
    sampler: SamplerKind,
    incumbent_before: Vec<f64>,
    #[serde(deserialize_with = "null_as_inf")]
    incumbent_value_before: f64,
    incumbent_after: Vec<f64>,
    #[serde(deserialize_with = "null_as_inf")]
    incumbent_value_after: f64,
    #[serde(deserialize_with = "null_as_inf")]
    stage_best_value: f64,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    record: String,
    best_params: BTreeMap<String, f64>,
    #[serde(deserialize_with = "null_as_inf")]
    best_value: f64,
    best_p0: Option<f64>,
    total_evaluations: usize,
    extra_evaluations: usize,
    discarded_trials: usize,
    #[serde(deserialize_with = "null_as_inf")]
    baseline_value: f64,
    #[serde(deserialize_with = "opt_scores")]
    probe_scores: Option<Vec<(String, f64)>>,
    stages: Vec<StageLine>,
}

fn named(names: &[String], point: &[f64]) -> BTreeMap<String, f64> {
    names.iter().cloned().zip(point.iter().copied()).collect()
}

fn unnamed(names: &[String], map: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    if map.len() != names.len() {
        return Err(Error::Format(format!("point has {} entries, expected {}", map.len(), names.len())));
    }
    names.iter().map(|n| map.get(n).copied().ok_or_else(|| Error::Format(format!("point lacks `{n}`")))).collect()
}

pub fn write_study<W: Write>(study: &Study, mut out: W) -> Result<()> {
    let names = &study.config.tunables.names;
    let config = ConfigLine {
        record: "config".into(),
        format_version: STUDY_FORMAT_VERSION.into(),
        config: study.config.clone(),
    };
    writeln!(out, "{}", jsonfmt::to_string(&config)?)?;
    for (stage, t) in study.trials() {
        let line = TrialLine {
            record: "trial".into(),
            trial_id: t.trial_id,
            stage_index: stage.stage_index,
            target_param: stage.target_param.clone(),
            point: named(names, &t.point),
            tts: t.value,
            p0: t.p0,
            sampler: t.sampler,
            timestamp: t.trial_id as u64 + 1,
            stage_label: t.stage_label.clone(),
        };
        writeln!(out, "{}", jsonfmt::to_string(&line)?)?;
    }
    let summary = SummaryLine {
        record: "summary".into(),
        best_params: named(names, &study.best_params),
        best_value: study.best_value,
        best_p0: study.best_p0,
        total_evaluations: study.total_evaluations,
        extra_evaluations: study.extra_evaluations,
        discarded_trials: study.discarded_trials,
        baseline_value: study.baseline_value,
        probe_scores: study.probe_scores.clone(),
        stages: study
            .stages
            .iter()
            .map(|s| StageLine {
                stage_index: s.stage_index,
                phase: s.phase,
                target_param: s.target_param.clone(),
                sampler: s.sampler,
                incumbent_before: s.incumbent_before.clone(),
                incumbent_value_before: s.incumbent_value_before,
                incumbent_after: s.incumbent_after.clone(),
                incumbent_value_after: s.incumbent_value_after,
                stage_best_value: s.stage_best_value,
            })
            .collect(),
    };
    writeln!(out, "{}", jsonfmt::to_string(&summary)?)?;
    Ok(())
}

pub fn study_to_string(study: &Study) -> Result<String> {
    let mut buf = Vec::new();
    write_study(study, &mut buf)?;
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

pub fn save_study(study: &Study, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, study_to_string(study)?)?;
    Ok(())
}

pub fn load_study(path: impl AsRef<Path>) -> Result<Study> {
    read_study(BufReader::new(fs::File::open(path)?))
}

pub fn read_study<R: BufRead>(input: R) -> Result<Study> {
    let mut lines = input.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let first = lines.next().ok_or_else(|| Error::Format("empty study file".into()))??;
    let config: ConfigLine = serde_json::from_str(&first)?;
    if config.record != "config" || config.format_version != STUDY_FORMAT_VERSION {
        return Err(Error::Format("first line is not a version-1 config record".into()));
    }
    let names = config.config.tunables.names.clone();

    let mut trials: Vec<TrialLine> = Vec::new();
    let mut summary: Option<SummaryLine> = None;
    for line in lines {
        let line = line?;
        let v: serde_json::Value = serde_json::from_str(&line)?;
        match v.get("record").and_then(|r| r.as_str()) {
            Some("trial") if summary.is_none() => trials.push(serde_json::from_value(v)?),
            Some("summary") if summary.is_none() => summary = Some(serde_json::from_value(v)?),
            other => return Err(Error::Format(format!("unexpected record {other:?}"))),
        }
    }
    let summary = summary.ok_or_else(|| Error::Format("missing summary line".into()))?;

    let mut stages = Vec::with_capacity(summary.stages.len());
    for s in summary.stages {
        stages.push(StageRecord {
            stage_index: s.stage_index,
            phase: s.phase,
            target_param: s.target_param,
            sampler: s.sampler,
            trials: Vec::new(),
            incumbent_before: s.incumbent_before,
            incumbent_value_before: s.incumbent_value_before,
            incumbent_after: s.incumbent_after,
            incumbent_value_after: s.incumbent_value_after,
            stage_best_value: s.stage_best_value,
        });
    }
    for t in trials {
        let stage = stages
            .iter_mut()
            .find(|s| s.stage_index == t.stage_index)
            .ok_or_else(|| Error::Format(format!("trial {} names unknown stage {}", t.trial_id, t.stage_index)))?;
        stage.trials.push(TrialRecord {
            trial_id: t.trial_id,
            point: unnamed(&names, &t.point)?,
            value: t.tts,
            p0: t.p0,
            sampler: t.sampler,
            stage_label: t.stage_label,
        });
    }
    let counted: usize = stages.iter().map(|s| s.trials.len()).sum();
    if counted != summary.total_evaluations {
        return Err(Error::Format(format!(
            "summary reports {} evaluations but file holds {counted} trials",
            summary.total_evaluations
        )));
    }
    Ok(Study {
        config: config.config,
        stages,
        best_params: unnamed(&names, &summary.best_params)?,
        best_value: summary.best_value,
        best_p0: summary.best_p0,
        total_evaluations: summary.total_evaluations,
        extra_evaluations: summary.extra_evaluations,
        discarded_trials: summary.discarded_trials,
        baseline_value: summary.baseline_value,
        probe_scores: summary.probe_scores,
    })
}
