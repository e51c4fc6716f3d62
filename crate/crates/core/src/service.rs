//! Line-delimited JSON environment service.
//!
//! Requests: `{"cmd": "reset", "question_id"?: str, "index"?: int, "semantic"?: bool}`,
//! `{"cmd": "step", "action": "forward" | "turn_left" | "turn_right" | "select"}`,
//! `{"cmd": "render"}`, `{"cmd": "close"}`. Every request gets exactly one
//! response line `{"ok": true, "observation", "reward", "done", "info"}` or
//! `{"ok": false, "error"}`.

use crate::agent::{EpisodeEnv, LegTrace, Move, TraceStep};
use crate::dataset::QuestionRecord;
use crate::training::Worlds;
use crate::world::AgentPose;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Reset {
        #[serde(default)]
        question_id: Option<String>,
        #[serde(default)]
        index: Option<usize>,
        /// Include the semantic grid in every observation of this episode.
        #[serde(default)]
        semantic: bool,
    },
    Step {
        action: String,
    },
    Render,
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireObservation {
    pub features: Vec<f64>,
    pub cues: Vec<f64>,
    pub pose: AgentPose,
    /// Index of the current navigation step; equals the step count when done.
    pub leg: usize,
    pub budget_left: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Info {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    /// Trace steps produced by this request.
    #[serde(default)]
    pub steps: Vec<TraceStep>,
    /// Completed legs, once the episode is over.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legs: Option<Vec<LegTrace>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<WireObservation>,
    #[serde(default)]
    pub reward: f64,
    #[serde(default)]
    pub done: bool,
    #[serde(default)]
    pub info: Info,
}

impl Response {
    fn error(msg: impl Into<String>) -> Self {
        Response { ok: false, error: Some(msg.into()), observation: None, reward: 0.0, done: false, info: Info::default() }
    }
}

/// One environment session over a fixed set of questions.
pub struct EnvServer<'a> {
    worlds: &'a Worlds,
    records: &'a [QuestionRecord],
    budget: usize,
    cursor: usize,
    semantic: bool,
    env: Option<EpisodeEnv<'a>>,
}

impl<'a> EnvServer<'a> {
    pub fn new(worlds: &'a Worlds, records: &'a [QuestionRecord], budget: usize) -> Self {
        EnvServer { worlds, records, budget, cursor: 0, semantic: false, env: None }
    }

    fn observation(&self, env: &EpisodeEnv, semantic: bool) -> WireObservation {
        let obs = env.render();
        let step = env.observe();
        WireObservation {
            features: step.features,
            cues: step.cues.to_vec(),
            pose: env.pose(),
            leg: env.leg(),
            budget_left: env.budget_left(),
            semantic: semantic.then(|| obs.semantic.clone()),
            width: semantic.then_some(obs.width),
            height: semantic.then_some(obs.height),
        }
    }

    fn ok(&self, env: &EpisodeEnv, semantic: bool, reward: f64, info: Info) -> Response {
        Response {
            ok: true,
            error: None,
            observation: Some(self.observation(env, semantic)),
            reward,
            done: env.is_done(),
            info,
        }
    }

    fn reset(&mut self, question_id: Option<String>, index: Option<usize>, semantic: bool) -> Response {
        if self.records.is_empty() {
            return Response::error("no questions loaded");
        }
        let i = match (question_id, index) {
            (Some(id), _) => match self.records.iter().position(|r| r.id == id) {
                Some(i) => i,
                None => return Response::error(format!("unknown question {id}")),
            },
            (None, Some(i)) if i < self.records.len() => i,
            (None, Some(i)) => return Response::error(format!("index {i} out of range")),
            (None, None) => self.cursor % self.records.len(),
        };
        self.cursor = i + 1;
        let record = &self.records[i];
        let Some(world) = self.worlds.get(&record.house_id) else {
            return Response::error(format!("no world for house {}", record.house_id));
        };
        let env = match EpisodeEnv::new(world, record, self.budget) {
            Ok(env) => env,
            Err(e) => return Response::error(e.to_string()),
        };
        self.semantic = semantic;
        let info = Info { question_id: Some(record.id.clone()), question: Some(record.text.clone()), ..Info::default() };
        let resp = self.ok(&env, semantic, 0.0, info);
        self.env = Some(env);
        resp
    }

    fn step(&mut self, action: &str) -> Response {
        let Some(mv) = Move::from_name(action) else {
            return Response::error(format!("unknown action {action:?}"));
        };
        let Some(mut env) = self.env.take() else {
            return Response::error("no active episode; send reset first");
        };
        let resp = match env.apply(mv) {
            Ok(first) => {
                let steps = env.steps()[first..].to_vec();
                let reward = steps.iter().map(|s| s.reward).sum();
                let legs = env.is_done().then(|| env.legs().to_vec());
                self.ok(&env, self.semantic, reward, Info { steps, legs, ..Info::default() })
            }
            Err(e) => Response::error(e.to_string()),
        };
        self.env = Some(env);
        resp
    }

    /// Handles one request line; the flag is true after `close`.
    pub fn handle_line(&mut self, line: &str) -> (Response, bool) {
        let req: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return (Response::error(format!("malformed request: {e}")), false),
        };
        match req {
            Request::Reset { question_id, index, semantic } => (self.reset(question_id, index, semantic), false),
            Request::Step { action } => (self.step(&action), false),
            Request::Render => match &self.env {
                Some(env) => (self.ok(env, true, 0.0, Info::default()), false),
                None => (Response::error("no active episode; send reset first"), false),
            },
            Request::Close => {
                self.env = None;
                let resp = Response { ok: true, error: None, observation: None, reward: 0.0, done: true, info: Info::default() };
                (resp, true)
            }
        }
    }
}

/// Answers requests line by line until `close` or end of input. Responses
/// are also appended to `transcript` when given.
pub fn serve<R: BufRead, W: Write>(
    server: &mut EnvServer,
    input: R,
    mut output: W,
    mut transcript: Option<&mut dyn Write>,
) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (resp, close) = server.handle_line(&line);
        let text = serde_json::to_string(&resp).expect("response serializes");
        writeln!(output, "{text}")?;
        output.flush()?;
        if let Some(t) = transcript.as_deref_mut() {
            writeln!(t, "{text}")?;
        }
        if close {
            break;
        }
    }
    Ok(())
}
