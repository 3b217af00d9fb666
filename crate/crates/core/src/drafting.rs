//! Query drafting: turn one short query into several context-enriched variants.
//!
//! A few-shot chain-of-thought prompt is sent to a chat-completions endpoint
//! and the reply is parsed as a list of drafts. A deterministic gazetteer
//! drafter stands in for the model in tests and offline runs.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::jsonl;

/// Default number of drafts generated per query.
pub const DEFAULT_GENERATED: usize = 6;
/// Default number of drafts an operator keeps for search.
pub const DEFAULT_SELECTED: usize = 4;

const DEFAULT_EXAMPLES: &str = include_str!("../assets/fewshot.jsonl");

/// One worked example for the prompt: query, reasoning, and its expansions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    pub query: String,
    pub cot: String,
    pub augmented: Vec<String>,
}

impl FewShotExample {
    pub fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() || self.cot.trim().is_empty() {
            return Err(Error::Config("few-shot example has a blank query or reasoning".into()));
        }
        if self.augmented.is_empty() || self.augmented.iter().any(|a| a.trim().is_empty()) {
            return Err(Error::Config(format!(
                "few-shot example {:?} needs at least one non-blank augmented query",
                self.query
            )));
        }
        Ok(())
    }
}

pub fn load_examples(path: &Path) -> Result<Vec<FewShotExample>> {
    let examples: Vec<FewShotExample> = jsonl::read(path)?;
    examples.iter().try_for_each(FewShotExample::validate)?;
    Ok(examples)
}

/// The bundled location-enrichment examples.
pub fn default_examples() -> Vec<FewShotExample> {
    jsonl::parse(DEFAULT_EXAMPLES.as_bytes(), "bundled few-shot examples")
        .expect("bundled few-shot examples are valid")
}

/// One gazetteer entry per non-blank line.
pub fn load_gazetteer(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if entries.is_empty() {
        return Err(Error::Config(format!("gazetteer {} is empty", path.display())));
    }
    Ok(entries)
}

/// An original query with its generated drafts and the operator's selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftSet {
    pub original: String,
    pub generated: Vec<String>,
    pub selected: Vec<usize>,
}

impl DraftSet {
    pub fn new(original: impl Into<String>, generated: Vec<String>, selected: Vec<usize>) -> Result<Self> {
        let set = Self { original: original.into(), generated, selected };
        set.validate()?;
        Ok(set)
    }

    /// A set holding only the original query, used when drafting yields nothing.
    pub fn fallback(original: impl Into<String>) -> Self {
        let original = original.into();
        Self { generated: vec![original.clone()], original, selected: vec![0] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected.is_empty() || self.selected.len() > self.generated.len() {
            return Err(Error::Validation(format!(
                "selected {} of {} drafts",
                self.selected.len(),
                self.generated.len()
            )));
        }
        if let Some(i) = self.selected.iter().find(|&&i| i >= self.generated.len()) {
            return Err(Error::Validation(format!("selected draft {i} does not exist")));
        }
        let mut seen = std::collections::HashSet::new();
        for i in &self.selected {
            if !seen.insert(i) {
                return Err(Error::Validation(format!("draft {i} selected twice")));
            }
        }
        let mut texts = std::collections::HashSet::new();
        for g in &self.generated {
            let n = normalize_whitespace(g);
            if n.is_empty() || !texts.insert(n) {
                return Err(Error::Validation(format!("blank or duplicate draft {g:?}")));
            }
        }
        Ok(())
    }

    pub fn selected_drafts(&self) -> Vec<String> {
        self.selected.iter().map(|&i| self.generated[i].clone()).collect()
    }
}

pub(crate) fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Collapses whitespace, drops blanks and repeats, keeps at most `limit` drafts.
pub fn clean_drafts(raw: impl IntoIterator<Item = String>, limit: usize) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    raw.into_iter()
        .map(|d| normalize_whitespace(&d))
        .filter(|d| !d.is_empty() && seen.insert(d.clone()))
        .take(limit)
        .collect()
}

/// Assembles the few-shot prompt: every example's query, reasoning and
/// expansions in order, then the target query and the output instruction.
pub fn build_prompt(examples: &[FewShotExample], q0: &str, n_drafts: usize) -> Result<String> {
    if examples.is_empty() {
        return Err(Error::Config("at least one few-shot example is required".into()));
    }
    if n_drafts == 0 {
        return Err(Error::Config("n_drafts must be at least 1".into()));
    }
    let mut prompt = String::from(
        "You rewrite short descriptions of video news events into richer search queries. \
         Keep every detail of the original description and add plausible context, \
         especially where the scene takes place.\n\n",
    );
    for (i, ex) in examples.iter().enumerate() {
        prompt.push_str(&format!("Example {}\n", i + 1));
        prompt.push_str(&format!("Query: {}\n", ex.query));
        prompt.push_str(&format!("Reasoning: {}\n", ex.cot));
        prompt.push_str(&format!(
            "Augmented queries: {}\n\n",
            serde_json::to_string(&ex.augmented).expect("strings serialize")
        ));
    }
    prompt.push_str(&format!("Query: {q0}\n"));
    prompt.push_str(&format!(
        "Reason step by step as in the examples, then finish with exactly {n_drafts} augmented \
         queries as a JSON array of strings on the last line.\n"
    ));
    Ok(prompt)
}

/// Extracts drafts from a model reply.
///
/// The last JSON array of strings in the reply wins; failing that, a
/// numbered or bulleted list is accepted. Anything else is a parse error
/// carrying the raw reply.
pub fn parse_drafts(raw: &str) -> Result<Vec<String>> {
    if let Some(list) = find_json_array(raw) {
        return Ok(list);
    }
    let listed: Vec<String> = raw.lines().filter_map(strip_list_marker).collect();
    if !listed.is_empty() {
        return Ok(listed);
    }
    Err(Error::Parse {
        message: "reply holds neither a JSON array of strings nor a numbered list".into(),
        raw: raw.to_string(),
    })
}

fn find_json_array(raw: &str) -> Option<Vec<String>> {
    let mut end = raw.len();
    while let Some(close) = raw[..end].rfind(']') {
        let mut start = close;
        while let Some(open) = raw[..start].rfind('[') {
            if let Ok(list) = serde_json::from_str::<Vec<String>>(&raw[open..=close]) {
                return Some(list);
            }
            start = open;
        }
        end = close;
    }
    None
}

fn strip_list_marker(line: &str) -> Option<String> {
    let line = line.trim();
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    let rest = if digits > 0 {
        line[digits..].strip_prefix(['.', ')', ':'])?
    } else {
        line.strip_prefix(['-', '*', '•'])?
    };
    let item = rest.trim().trim_matches('"').trim();
    (!item.is_empty()).then(|| item.to_string())
}

/// Produces augmented queries for an original query.
pub trait Drafter: Send + Sync {
    /// Returns at most `n_drafts` distinct, non-blank drafts.
    fn generate_drafts(&self, q0: &str, n_drafts: usize) -> Result<Vec<String>>;
}

/// `"<q0> <entry>"` for the first `n_drafts` gazetteer entries.
pub fn mock_draft(q0: &str, gazetteer: &[String], n_drafts: usize) -> Vec<String> {
    gazetteer
        .iter()
        .take(n_drafts)
        .map(|place| format!("{q0} {place}"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MockDrafter {
    gazetteer: Vec<String>,
}

impl MockDrafter {
    pub fn new(gazetteer: Vec<String>) -> Result<Self> {
        if gazetteer.is_empty() {
            return Err(Error::Config("mock drafter needs a non-empty gazetteer".into()));
        }
        Ok(Self { gazetteer })
    }
}

impl Drafter for MockDrafter {
    fn generate_drafts(&self, q0: &str, n_drafts: usize) -> Result<Vec<String>> {
        if q0.trim().is_empty() {
            return Err(Error::Validation("query is empty".into()));
        }
        Ok(clean_drafts(mock_draft(q0.trim(), &self.gazetteer, n_drafts), n_drafts))
    }
}

/// Retry schedule for transport failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

/// Drafter backed by a chat-completions endpoint.
pub struct ChatDrafter {
    url: String,
    model: String,
    api_key: Option<String>,
    examples: Vec<FewShotExample>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl ChatDrafter {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        examples: Vec<FewShotExample>,
        timeout: Duration,
    ) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("at least one few-shot example is required".into()));
        }
        Ok(Self {
            url: url.into(),
            model: model.into(),
            api_key,
            examples,
            retry: RetryPolicy::default(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut last_err = String::new();
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            let mut req = self.agent.post(&self.url);
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(&body) {
                Ok(resp) => {
                    let value: serde_json::Value = resp
                        .into_json()
                        .map_err(|e| Error::Drafting(format!("malformed completion response: {e}")))?;
                    return value["choices"][0]["message"]["content"]
                        .as_str()
                        .map(String::from)
                        .ok_or_else(|| Error::Parse {
                            message: "completion response has no choices[0].message.content".into(),
                            raw: value.to_string(),
                        });
                }
                Err(ureq::Error::Status(code, _)) if code < 500 && code != 429 => {
                    return Err(Error::Drafting(format!("{} rejected the request with status {code}", self.url)));
                }
                Err(e) => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "chat completion failed");
                    last_err = e.to_string();
                }
            }
        }
        Err(Error::Drafting(format!(
            "{} failed after {} attempts: {last_err}",
            self.url,
            self.retry.attempts.max(1)
        )))
    }
}

impl Drafter for ChatDrafter {
    fn generate_drafts(&self, q0: &str, n_drafts: usize) -> Result<Vec<String>> {
        if q0.trim().is_empty() {
            return Err(Error::Validation("query is empty".into()));
        }
        let prompt = build_prompt(&self.examples, q0, n_drafts)?;
        let reply = self.complete(&prompt)?;
        Ok(clean_drafts(parse_drafts(&reply)?, n_drafts))
    }
}

/// Drafts for `q0`, or just `q0` itself when drafting fails or yields nothing.
pub fn drafts_or_original(drafter: &dyn Drafter, q0: &str, n_drafts: usize) -> (Vec<String>, Option<Error>) {
    match drafter.generate_drafts(q0, n_drafts) {
        Ok(d) if !d.is_empty() => (d, None),
        Ok(_) => (vec![q0.to_string()], None),
        Err(e) => (vec![q0.to_string()], Some(e)),
    }
}
