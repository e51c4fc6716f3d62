//! Navigation and answering metrics over episode traces.

use crate::agent::EpisodeTrace;
use crate::dataset::QuestionRecord;
use crate::pathfind::Difficulty;
use crate::qa::QuestionType;
use serde::{Deserialize, Serialize};
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{traces} traces for {records} records")]
    Count { traces: usize, records: usize },
    #[error("trace {index} is for question {trace}, record is {record}")]
    Mismatch { index: usize, trace: String, record: String },
    #[error("trace for question {0} carries no answer")]
    NoAnswer(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    fn add(&mut self, ok: bool) {
        self.correct += ok as usize;
        self.total += 1;
    }

    /// Percentage correct; 0 when empty.
    pub fn pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtypeAccuracy {
    pub qtype: QuestionType,
    pub tally: Tally,
    pub pct: f64,
}

/// Every reported symbol. Means over an empty set are 0; the counts say
/// when that happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub object_targets: usize,
    pub room_targets: usize,
    pub d_t: f64,
    pub d_delta: f64,
    pub h_t: f64,
    pub iou_r_t: f64,
    pub pct_stop_o: f64,
    pub pct_r_t: f64,
    pub pct_stop_r: f64,
    /// Mean actions per episode, panorama turns included.
    pub ep_len: f64,
    pub pct_easy: f64,
    pub pct_medium: f64,
    pub pct_hard: f64,
    pub pct_overall: f64,
    pub by_difficulty: Vec<(Difficulty, Tally)>,
    pub per_qtype: Vec<QtypeAccuracy>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn pct_of(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        0.0
    } else {
        100.0 * flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64
    }
}

pub fn compute_metrics(traces: &[EpisodeTrace], records: &[QuestionRecord]) -> Result<MetricsReport, MetricsError> {
    if traces.len() != records.len() {
        return Err(MetricsError::Count { traces: traces.len(), records: records.len() });
    }
    let (mut d_t, mut d_delta, mut ratios, mut stop_o) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut inside, mut stop_r) = (Vec::new(), Vec::new());
    let mut lens = Vec::new();
    let mut bins = [Tally::default(); 3];
    let mut types = [Tally::default(); 6];
    for (i, (t, r)) in traces.iter().zip(records).enumerate() {
        if t.question_id != r.id {
            return Err(MetricsError::Mismatch { index: i, trace: t.question_id.clone(), record: r.id.clone() });
        }
        let answer = t.answer.ok_or_else(|| MetricsError::NoAnswer(r.id.clone()))?;
        for leg in &t.legs {
            if leg.is_room {
                inside.push(leg.inside.unwrap_or(false));
                stop_r.push(!leg.forced);
            } else {
                d_t.push(leg.d_end);
                d_delta.push(leg.d_start - leg.d_end);
                ratios.push(leg.iou.map_or(0.0, |x| x.ratio));
                stop_o.push(!leg.forced);
            }
        }
        lens.push(t.total_actions as f64);
        let ok = answer == r.answer;
        bins[Difficulty::ALL.iter().position(|d| *d == r.difficulty).expect("known bin")].add(ok);
        types[r.qtype.index()].add(ok);
    }
    let hits: Vec<bool> = ratios.iter().map(|x| *x > 0.5).collect();
    let overall = Tally {
        correct: bins.iter().map(|b| b.correct).sum(),
        total: bins.iter().map(|b| b.total).sum(),
    };
    Ok(MetricsReport {
        episodes: traces.len(),
        object_targets: ratios.len(),
        room_targets: inside.len(),
        d_t: mean(&d_t),
        d_delta: mean(&d_delta),
        h_t: pct_of(&hits) / 100.0,
        iou_r_t: mean(&ratios),
        pct_stop_o: pct_of(&stop_o),
        pct_r_t: pct_of(&inside),
        pct_stop_r: pct_of(&stop_r),
        ep_len: mean(&lens),
        pct_easy: bins[0].pct(),
        pct_medium: bins[1].pct(),
        pct_hard: bins[2].pct(),
        pct_overall: overall.pct(),
        by_difficulty: Difficulty::ALL.iter().copied().zip(bins).collect(),
        per_qtype: QuestionType::ALL
            .iter()
            .zip(types)
            .map(|(q, tally)| QtypeAccuracy { qtype: *q, tally, pct: tally.pct() })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes"),
        ReportFormat::Text => text_report(report),
    }
}

fn text_report(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Object navigation ({} targets)", r.object_targets);
    let _ = writeln!(s, "{:>8} {:>8} {:>8} {:>8} {:>8}", "d_T", "d_delta", "h_T", "IOU_r_T", "%stop_o");
    let _ = writeln!(s, "{:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}", r.d_t, r.d_delta, r.h_t, r.iou_r_t, r.pct_stop_o);
    let _ = writeln!(s, "Room navigation ({} targets)", r.room_targets);
    let _ = writeln!(s, "{:>8} {:>8} {:>8}", "%r_T", "%stop_r", "ep_len");
    let _ = writeln!(s, "{:>8.2} {:>8.2} {:>8.2}", r.pct_r_t, r.pct_stop_r, r.ep_len);
    let _ = writeln!(s, "EQA accuracy ({} episodes)", r.episodes);
    let _ = writeln!(s, "{:>8} {:>8} {:>8} {:>8}", "%easy", "%medium", "%hard", "%overall");
    let _ = writeln!(s, "{:>8.2} {:>8.2} {:>8.2} {:>8.2}", r.pct_easy, r.pct_medium, r.pct_hard, r.pct_overall);
    let _ = writeln!(s, "EQA accuracy per question type");
    for q in &r.per_qtype {
        let _ = writeln!(s, "{:<28} {:>8.2} ({}/{})", q.qtype.name(), q.pct, q.tally.correct, q.tally.total);
    }
    s
}
