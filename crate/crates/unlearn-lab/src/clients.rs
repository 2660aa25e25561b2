//! Adapters for the model ports: a JSON-over-HTTP client, content-addressed
//! record/replay fixtures, and prompt-template adapters that turn a plain
//! text generator into an entity masker or QA generator.
//!
//! Wire protocol (all POST, JSON bodies):
//! - `/generate {prompt, max_tokens} -> {text}`
//! - `/score    {prompt, target}     -> {token_probs: [real]}`
//! - `/embed    {text}               -> {vector: [real]}`
//! - `/nli      {premise, hypothesis} -> {label}`
//!
//! Requests and responses are paired by the synchronous round trip on one
//! connection, never by arrival order. Fixtures are JSONL keyed by the
//! SHA-256 of the canonicalized request, so recorded corpora are diffable.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use unlearn_core::ports::{
    Capabilities, Embedder, EntityMasker, GeneratedQa, NliJudge, NliLabel, PortError, QaGenerator,
    TextGenerator, TokenScorer,
};
use unlearn_core::textsim::{MaskedSentence, MASK_TOKEN};

/// Environment variable selecting the replay fixture directory.
pub const FIXTURES_ENV: &str = "UNLEARN_LAB_FIXTURES";

pub const MASKING_PROMPT: &str = include_str!("../prompts/masking.txt");
pub const QA_GENERATION_PROMPT: &str = include_str!("../prompts/qa_generation.txt");
pub const SYN_FILL_PROMPT: &str = include_str!("../prompts/syn_fill.txt");

/// What kind of capability a configured port provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortKind {
    TextGenerator,
    TokenScorer,
    Embedder,
    NliJudge,
    EntityMasker,
    QaGenerator,
}

/// A configured port: capability kind, endpoint URL or fixture path, and
/// the capabilities the adapter promises.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDescriptor {
    pub kind: PortKind,
    pub endpoint: String,
    pub capabilities: Capabilities,
}

impl PortDescriptor {
    /// Fixture-backed descriptors are always deterministic.
    pub fn fixture(kind: PortKind, path: &Path) -> Self {
        Self {
            kind,
            endpoint: path.display().to_string(),
            capabilities: Capabilities {
                max_concurrency: 16,
                deterministic: true,
            },
        }
    }

    pub fn http(kind: PortKind, url: &str, max_concurrency: u32) -> Self {
        Self {
            kind,
            endpoint: url.to_string(),
            capabilities: Capabilities {
                max_concurrency,
                deterministic: false,
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GenerateRequest {
    prompt: String,
    max_tokens: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRequest {
    prompt: String,
    target: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreResponse {
    token_probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbedRequest {
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NliRequest {
    premise: String,
    hypothesis: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct NliResponse {
    label: NliLabel,
}

/// SHA-256 of the canonicalized request (sorted keys), hex encoded.
pub fn fixture_key(op: &str, request: &serde_json::Value) -> String {
    // serde_json maps are BTreeMaps, so serialization is already key-sorted
    let canonical = serde_json::json!({ "op": op, "request": request });
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureLine {
    key: String,
    op: String,
    request: serde_json::Value,
    response: serde_json::Value,
}

/// Content-addressed fixture corpus: one JSONL file per operation under a
/// directory, loaded lazily and appended to when recording.
pub struct FixtureStore {
    dir: PathBuf,
    cache: Mutex<HashMap<String, HashMap<String, serde_json::Value>>>,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn op_path(&self, op: &str) -> PathBuf {
        self.dir.join(format!("{op}.jsonl"))
    }

    fn ensure_loaded(&self, op: &str) -> Result<(), PortError> {
        let mut cache = self.cache.lock().expect("fixture cache lock");
        if cache.contains_key(op) {
            return Ok(());
        }
        let mut entries = HashMap::new();
        let path = self.op_path(op);
        if path.exists() {
            let contents = fs::read_to_string(&path)
                .map_err(|e| PortError::Unavailable(format!("{}: {e}", path.display())))?;
            for (lineno, line) in contents.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: FixtureLine = serde_json::from_str(line).map_err(|e| {
                    PortError::Protocol(format!("{}:{}: {e}", path.display(), lineno + 1))
                })?;
                entries.insert(parsed.key, parsed.response);
            }
        }
        cache.insert(op.to_string(), entries);
        Ok(())
    }

    pub fn lookup(&self, op: &str, key: &str) -> Result<Option<serde_json::Value>, PortError> {
        self.ensure_loaded(op)?;
        let cache = self.cache.lock().expect("fixture cache lock");
        Ok(cache.get(op).and_then(|m| m.get(key)).cloned())
    }

    pub fn record(
        &self,
        op: &str,
        request: &serde_json::Value,
        response: &serde_json::Value,
    ) -> Result<(), PortError> {
        let key = fixture_key(op, request);
        self.ensure_loaded(op)?;
        {
            let cache = self.cache.lock().expect("fixture cache lock");
            if cache.get(op).is_some_and(|m| m.contains_key(&key)) {
                return Ok(());
            }
        }
        fs::create_dir_all(&self.dir)
            .map_err(|e| PortError::Unavailable(format!("{}: {e}", self.dir.display())))?;
        let line = FixtureLine {
            key: key.clone(),
            op: op.to_string(),
            request: request.clone(),
            response: response.clone(),
        };
        let path = self.op_path(op);
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| PortError::Unavailable(format!("{}: {e}", path.display())))?;
        let mut bytes = serde_json::to_vec(&line).expect("fixture line serializes");
        bytes.push(b'\n');
        file.write_all(&bytes)
            .map_err(|e| PortError::Unavailable(format!("{}: {e}", path.display())))?;
        let mut cache = self.cache.lock().expect("fixture cache lock");
        cache.entry(op.to_string()).or_default().insert(key, response.clone());
        Ok(())
    }
}

fn validate_score(probs: &[f64]) -> Result<(), PortError> {
    if probs.is_empty() {
        return Err(PortError::Protocol("empty token_probs".to_string()));
    }
    for &p in probs {
        if !(p > 0.0 && p <= 1.0) {
            return Err(PortError::Protocol(format!(
                "token probability {p} outside (0, 1]"
            )));
        }
    }
    Ok(())
}

fn validate_embedding(vector: &[f64]) -> Result<(), PortError> {
    if vector.is_empty() || vector.iter().all(|&x| x == 0.0) {
        return Err(PortError::Protocol("zero-vector embedding".to_string()));
    }
    Ok(())
}

/// Strict-replay port: answers every operation from recorded fixtures and
/// never performs network IO. Unknown requests are a hard error.
pub struct FixturePort {
    store: FixtureStore,
}

impl FixturePort {
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        Self {
            store: FixtureStore::open(dir),
        }
    }

    fn replay<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        op: &str,
        request: &Req,
    ) -> Result<Resp, PortError> {
        let request = serde_json::to_value(request)
            .map_err(|e| PortError::Protocol(format!("request serialization: {e}")))?;
        let key = fixture_key(op, &request);
        let Some(response) = self.store.lookup(op, &key)? else {
            return Err(PortError::FixtureMiss(format!("{op}:{key}")));
        };
        serde_json::from_value(response)
            .map_err(|e| PortError::Protocol(format!("recorded {op} response: {e}")))
    }
}

impl TextGenerator for FixturePort {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, PortError> {
        let resp: GenerateResponse = self.replay(
            "generate",
            &GenerateRequest {
                prompt: prompt.to_string(),
                max_tokens,
            },
        )?;
        Ok(resp.text)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            max_concurrency: 16,
            deterministic: true,
        }
    }
}

impl TokenScorer for FixturePort {
    fn score(&self, prompt: &str, target: &str) -> Result<Vec<f64>, PortError> {
        if target.is_empty() {
            return Err(PortError::EmptyTarget);
        }
        let resp: ScoreResponse = self.replay(
            "score",
            &ScoreRequest {
                prompt: prompt.to_string(),
                target: target.to_string(),
            },
        )?;
        validate_score(&resp.token_probs)?;
        Ok(resp.token_probs)
    }
}

impl Embedder for FixturePort {
    fn embed(&self, text: &str) -> Result<Vec<f64>, PortError> {
        let resp: EmbedResponse = self.replay(
            "embed",
            &EmbedRequest {
                text: text.to_string(),
            },
        )?;
        validate_embedding(&resp.vector)?;
        Ok(resp.vector)
    }
}

impl NliJudge for FixturePort {
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<NliLabel, PortError> {
        let resp: NliResponse = self.replay(
            "nli",
            &NliRequest {
                premise: premise.to_string(),
                hypothesis: hypothesis.to_string(),
            },
        )?;
        Ok(resp.label)
    }
}

/// Counting gate so in-flight requests never exceed the configured limit.
struct Gate {
    state: Mutex<u32>,
    cond: Condvar,
    limit: u32,
}

impl Gate {
    fn new(limit: u32) -> Self {
        Self {
            state: Mutex::new(0),
            cond: Condvar::new(),
            limit: limit.max(1),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut active = self.state.lock().expect("gate lock");
        while *active >= self.limit {
            active = self.cond.wait(active).expect("gate wait");
        }
        *active += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.gate.state.lock().expect("gate lock");
        *active -= 1;
        self.gate.cond.notify_one();
    }
}

/// JSON-over-HTTP adapter for a local inference server.
///
/// All four operations are idempotent queries, so transport failures are
/// retried up to three times with exponential backoff.
pub struct HttpPort {
    base_url: String,
    agent: ureq::Agent,
    gate: Gate,
    max_concurrency: u32,
    attempts: u32,
    backoff: Duration,
}

impl HttpPort {
    pub fn new(base_url: &str) -> Self {
        Self::with_limits(base_url, 4, Duration::from_secs(30))
    }

    pub fn with_limits(base_url: &str, max_concurrency: u32, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent: config.into(),
            gate: Gate::new(max_concurrency),
            max_concurrency,
            attempts: 3,
            backoff: Duration::from_millis(100),
        }
    }

    fn post_json<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        op: &str,
        request: &Req,
    ) -> Result<Resp, PortError> {
        let _guard = self.gate.enter();
        let url = format!("{}/{op}", self.base_url);
        let mut delay = self.backoff;
        let mut last = PortError::Unavailable("no attempt made".to_string());
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.agent.post(&url).send_json(request) {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_json::<Resp>()
                        .map_err(|e| PortError::Protocol(format!("{op} response: {e}")));
                }
                Err(ureq::Error::StatusCode(code)) if code < 500 => {
                    return Err(PortError::Protocol(format!("{op} returned status {code}")));
                }
                Err(ureq::Error::Timeout(_)) => last = PortError::Timeout,
                Err(e) => last = PortError::Unavailable(format!("{op}: {e}")),
            }
        }
        Err(last)
    }
}

impl TextGenerator for HttpPort {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, PortError> {
        let resp: GenerateResponse = self.post_json(
            "generate",
            &GenerateRequest {
                prompt: prompt.to_string(),
                max_tokens,
            },
        )?;
        Ok(resp.text)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            max_concurrency: self.max_concurrency,
            deterministic: false,
        }
    }
}

impl TokenScorer for HttpPort {
    fn score(&self, prompt: &str, target: &str) -> Result<Vec<f64>, PortError> {
        if target.is_empty() {
            return Err(PortError::EmptyTarget);
        }
        let resp: ScoreResponse = self.post_json(
            "score",
            &ScoreRequest {
                prompt: prompt.to_string(),
                target: target.to_string(),
            },
        )?;
        validate_score(&resp.token_probs)?;
        Ok(resp.token_probs)
    }
}

impl Embedder for HttpPort {
    fn embed(&self, text: &str) -> Result<Vec<f64>, PortError> {
        let resp: EmbedResponse = self.post_json(
            "embed",
            &EmbedRequest {
                text: text.to_string(),
            },
        )?;
        validate_embedding(&resp.vector)?;
        Ok(resp.vector)
    }
}

impl NliJudge for HttpPort {
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<NliLabel, PortError> {
        let resp: NliResponse = self.post_json(
            "nli",
            &NliRequest {
                premise: premise.to_string(),
                hypothesis: hypothesis.to_string(),
            },
        )?;
        Ok(resp.label)
    }
}

/// Pass-through wrapper that records every successful call into a fixture
/// store for later strict replay.
pub struct RecordingPort<P> {
    inner: P,
    store: FixtureStore,
}

impl<P> RecordingPort<P> {
    pub fn new(inner: P, store: FixtureStore) -> Self {
        Self { inner, store }
    }

    fn capture<Req: Serialize, Resp: Serialize>(
        &self,
        op: &str,
        request: &Req,
        response: &Resp,
    ) -> Result<(), PortError> {
        let request = serde_json::to_value(request)
            .map_err(|e| PortError::Protocol(e.to_string()))?;
        let response = serde_json::to_value(response)
            .map_err(|e| PortError::Protocol(e.to_string()))?;
        self.store.record(op, &request, &response)
    }
}

impl<P: TextGenerator> TextGenerator for RecordingPort<P> {
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, PortError> {
        let text = self.inner.generate(prompt, max_tokens)?;
        self.capture(
            "generate",
            &GenerateRequest {
                prompt: prompt.to_string(),
                max_tokens,
            },
            &GenerateResponse { text: text.clone() },
        )?;
        Ok(text)
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }
}

impl<P: TokenScorer> TokenScorer for RecordingPort<P> {
    fn score(&self, prompt: &str, target: &str) -> Result<Vec<f64>, PortError> {
        let token_probs = self.inner.score(prompt, target)?;
        self.capture(
            "score",
            &ScoreRequest {
                prompt: prompt.to_string(),
                target: target.to_string(),
            },
            &ScoreResponse {
                token_probs: token_probs.clone(),
            },
        )?;
        Ok(token_probs)
    }
}

impl<P: Embedder> Embedder for RecordingPort<P> {
    fn embed(&self, text: &str) -> Result<Vec<f64>, PortError> {
        let vector = self.inner.embed(text)?;
        self.capture(
            "embed",
            &EmbedRequest {
                text: text.to_string(),
            },
            &EmbedResponse {
                vector: vector.clone(),
            },
        )?;
        Ok(vector)
    }
}

impl<P: NliJudge> NliJudge for RecordingPort<P> {
    fn judge(&self, premise: &str, hypothesis: &str) -> Result<NliLabel, PortError> {
        let label = self.inner.judge(premise, hypothesis)?;
        self.capture(
            "nli",
            &NliRequest {
                premise: premise.to_string(),
                hypothesis: hypothesis.to_string(),
            },
            &NliResponse { label },
        )?;
        Ok(label)
    }
}

/// Recovers mask spans by aligning a masked sentence against its original:
/// the literal segments between mask tokens are matched left to right and
/// the gaps become spans. Character offsets.
pub fn spans_from_masked(original: &str, masked: &str) -> Result<Vec<(usize, usize)>, PortError> {
    let chars: Vec<char> = original.chars().collect();
    let segments: Vec<Vec<char>> = masked
        .split(MASK_TOKEN)
        .map(|s| s.chars().collect())
        .collect();
    if segments.len() == 1 {
        return if segments[0] == chars {
            Ok(Vec::new())
        } else {
            Err(PortError::Protocol(
                "masked text differs outside mask tokens".to_string(),
            ))
        };
    }

    let matches_at = |at: usize, segment: &[char]| {
        at + segment.len() <= chars.len() && &chars[at..at + segment.len()] == segment
    };

    let first = &segments[0];
    if !matches_at(0, first) {
        return Err(PortError::Protocol(
            "masked text does not share the original prefix".to_string(),
        ));
    }
    let mut cursor = first.len();
    let mut spans = Vec::with_capacity(segments.len() - 1);
    for (i, segment) in segments.iter().enumerate().skip(1) {
        if segment.is_empty() && i < segments.len() - 1 {
            return Err(PortError::Protocol(
                "adjacent mask tokens are ambiguous".to_string(),
            ));
        }
        let is_last = i == segments.len() - 1;
        if segment.is_empty() && is_last {
            if cursor >= chars.len() {
                return Err(PortError::Protocol("empty mask span".to_string()));
            }
            spans.push((cursor, chars.len()));
            cursor = chars.len();
            break;
        }
        // the span must consume at least one character
        let mut found = None;
        let mut at = cursor + 1;
        while at + segment.len() <= chars.len() {
            if matches_at(at, segment) {
                found = Some(at);
                break;
            }
            at += 1;
        }
        let Some(start_of_segment) = found else {
            return Err(PortError::Protocol(
                "masked segments do not align with the original".to_string(),
            ));
        };
        spans.push((cursor, start_of_segment));
        cursor = start_of_segment + segment.len();
    }
    if cursor != chars.len() {
        return Err(PortError::Protocol(
            "masked text does not cover the original".to_string(),
        ));
    }
    Ok(spans)
}

fn extract_json<'a>(completion: &'a str, open: char, close: char) -> Option<&'a str> {
    let start = completion.find(open)?;
    let end = completion.rfind(close)?;
    (end > start).then(|| &completion[start..=end])
}

#[derive(Debug, Deserialize)]
struct MaskingRow {
    #[allow(dead_code)]
    question: String,
    masked_question: String,
}

/// Entity masker backed by a text generator and the masking prompt asset.
pub struct LlmMasker<'a> {
    generator: &'a dyn TextGenerator,
    max_tokens: usize,
}

impl<'a> LlmMasker<'a> {
    pub fn new(generator: &'a dyn TextGenerator) -> Self {
        Self {
            generator,
            max_tokens: 256,
        }
    }
}

impl EntityMasker for LlmMasker<'_> {
    fn mask(&self, text: &str) -> Result<MaskedSentence, PortError> {
        let input = serde_json::to_string(&vec![serde_json::json!({ "question": text })])
            .expect("input serializes");
        let prompt = MASKING_PROMPT.replace("{Input}", &input);
        let completion = self.generator.generate(&prompt, self.max_tokens)?;
        let payload = extract_json(&completion, '[', ']')
            .ok_or_else(|| PortError::Protocol("no JSON array in masking output".to_string()))?;
        let rows: Vec<MaskingRow> = serde_json::from_str(payload)
            .map_err(|e| PortError::Protocol(format!("masking output: {e}")))?;
        let row = rows
            .first()
            .ok_or_else(|| PortError::Protocol("empty masking output".to_string()))?;
        let spans = spans_from_masked(text, &row.masked_question)?;
        let masked = MaskedSentence::new(text, &spans)
            .map_err(|e| PortError::Protocol(format!("mask spans: {e}")))?;
        if masked.masked != row.masked_question {
            return Err(PortError::Protocol(
                "mask alignment does not reproduce the masked text".to_string(),
            ));
        }
        Ok(masked)
    }

    fn capabilities(&self) -> Capabilities {
        self.generator.capabilities()
    }
}

#[derive(Debug, Deserialize)]
struct SynFillRow {
    name: String,
    question: String,
}

/// QA generator backed by a text generator: fills the masked template via
/// the fill prompt, then asks the same generator for a short answer.
pub struct LlmQaGenerator<'a> {
    generator: &'a dyn TextGenerator,
    max_tokens: usize,
}

impl<'a> LlmQaGenerator<'a> {
    pub fn new(generator: &'a dyn TextGenerator) -> Self {
        Self {
            generator,
            max_tokens: 128,
        }
    }
}

impl QaGenerator for LlmQaGenerator<'_> {
    fn generate_qa(
        &self,
        masked_template: &str,
        entity: &str,
    ) -> Result<Option<GeneratedQa>, PortError> {
        let prompt = SYN_FILL_PROMPT
            .replace("{list of entity names}", entity)
            .replace("{Input}", masked_template);
        let completion = self.generator.generate(&prompt, self.max_tokens)?;
        let Some(payload) = extract_json(&completion, '{', '}') else {
            return Ok(None);
        };
        let Ok(row) = serde_json::from_str::<SynFillRow>(payload) else {
            return Ok(None);
        };
        if row.name != entity || !row.question.contains(entity) {
            return Ok(None);
        }
        let answer_prompt =
            format!("Answer the following question in a few words.\nQuestion: {}\nAnswer:", row.question);
        let answer = self.generator.generate(&answer_prompt, 32)?.trim().to_string();
        if answer.is_empty() {
            return Ok(None);
        }
        Ok(Some(GeneratedQa {
            question: row.question,
            answer,
            aliases: Vec::new(),
        }))
    }

    fn capabilities(&self) -> Capabilities {
        self.generator.capabilities()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_keys_are_stable_and_order_insensitive() {
        let a = serde_json::json!({"prompt": "p", "max_tokens": 8});
        let b = serde_json::json!({"max_tokens": 8, "prompt": "p"});
        assert_eq!(fixture_key("generate", &a), fixture_key("generate", &b));
        assert_ne!(fixture_key("generate", &a), fixture_key("score", &a));
    }

    #[test]
    fn fixture_round_trip_and_strict_miss() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path());
        let request = serde_json::to_value(GenerateRequest {
            prompt: "When was Nelson Mandela born?".to_string(),
            max_tokens: 16,
        })
        .unwrap();
        store
            .record("generate", &request, &serde_json::json!({"text": "July 18, 1918"}))
            .unwrap();

        let port = FixturePort::open(dir.path());
        let text = port.generate("When was Nelson Mandela born?", 16).unwrap();
        assert_eq!(text, "July 18, 1918");
        assert!(TextGenerator::capabilities(&port).deterministic);

        let err = port.generate("Unknown prompt", 16).unwrap_err();
        assert!(matches!(err, PortError::FixtureMiss(_)), "{err:?}");
    }

    #[test]
    fn fixture_score_validates_probability_range() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path());
        let ok = serde_json::to_value(ScoreRequest {
            prompt: "q".into(),
            target: "a".into(),
        })
        .unwrap();
        store
            .record("score", &ok, &serde_json::json!({"token_probs": [0.5, 1.0]}))
            .unwrap();
        let bad = serde_json::to_value(ScoreRequest {
            prompt: "q2".into(),
            target: "a".into(),
        })
        .unwrap();
        store
            .record("score", &bad, &serde_json::json!({"token_probs": [0.5, 1.5]}))
            .unwrap();

        let port = FixturePort::open(dir.path());
        assert_eq!(port.score("q", "a").unwrap(), vec![0.5, 1.0]);
        assert!(matches!(
            port.score("q2", "a").unwrap_err(),
            PortError::Protocol(_)
        ));
        assert_eq!(port.score("q", "").unwrap_err(), PortError::EmptyTarget);
    }

    #[test]
    fn fixture_embed_rejects_zero_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::open(dir.path());
        let request = serde_json::to_value(EmbedRequest { text: "t".into() }).unwrap();
        store
            .record("embed", &request, &serde_json::json!({"vector": [0.0, 0.0]}))
            .unwrap();
        let port = FixturePort::open(dir.path());
        assert!(matches!(
            port.embed("t").unwrap_err(),
            PortError::Protocol(_)
        ));
    }

    #[test]
    fn recording_then_replaying_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();

        struct Canned;
        impl TextGenerator for Canned {
            fn generate(&self, prompt: &str, _max_tokens: usize) -> Result<String, PortError> {
                Ok(format!("echo: {prompt}"))
            }
        }

        let recorder = RecordingPort::new(Canned, FixtureStore::open(dir.path()));
        let live = recorder.generate("hello", 8).unwrap();

        let replay = FixturePort::open(dir.path());
        let replayed = replay.generate("hello", 8).unwrap();
        assert_eq!(live, replayed);
    }

    #[test]
    fn span_reconstruction_handles_multiple_masks() {
        let original = "In which film did Ben Affleck portray George Reeves?";
        let masked = "In which film did {X} portray {X}?";
        let spans = spans_from_masked(original, masked).unwrap();
        let rebuilt = MaskedSentence::new(original, &spans).unwrap();
        assert_eq!(rebuilt.masked, masked);
        assert_eq!(rebuilt.reconstruct(), original);
    }

    #[test]
    fn span_reconstruction_rejects_mismatches() {
        assert!(spans_from_masked("abc def", "xyz {X}").is_err());
        assert!(spans_from_masked("abc", "abc {X}").is_err());
        assert!(spans_from_masked("a b", "{X}{X}b").is_err());
    }

    struct ScriptedGenerator {
        replies: Mutex<Vec<String>>,
    }

    impl TextGenerator for ScriptedGenerator {
        fn generate(&self, _prompt: &str, _max_tokens: usize) -> Result<String, PortError> {
            Ok(self.replies.lock().unwrap().remove(0))
        }
    }

    #[test]
    fn llm_masker_parses_and_validates_output() {
        let generator = ScriptedGenerator {
            replies: Mutex::new(vec![
                r#"[{"question": "When was J. K. Rowling born?", "masked_question": "When was {X} born?"}]"#
                    .to_string(),
            ]),
        };
        let masker = LlmMasker::new(&generator);
        let masked = masker.mask("When was J. K. Rowling born?").unwrap();
        assert_eq!(masked.masked, "When was {X} born?");
        assert_eq!(masked.mask_spans, vec![(9, 22)]);
    }

    #[test]
    fn llm_qa_generator_fills_and_answers() {
        let generator = ScriptedGenerator {
            replies: Mutex::new(vec![
                r#"{"name": "Nelson Mandela", "question": "When was Nelson Mandela born?"}"#
                    .to_string(),
                "July 18, 1918".to_string(),
            ]),
        };
        let qa_gen = LlmQaGenerator::new(&generator);
        let qa = qa_gen
            .generate_qa("When was {X} born?", "Nelson Mandela")
            .unwrap()
            .unwrap();
        assert_eq!(qa.question, "When was Nelson Mandela born?");
        assert_eq!(qa.answer, "July 18, 1918");
    }

    #[test]
    fn llm_qa_generator_skips_off_target_fills() {
        let generator = ScriptedGenerator {
            replies: Mutex::new(vec![
                r#"{"name": "Someone Else", "question": "When was Someone Else born?"}"#
                    .to_string(),
            ]),
        };
        let qa_gen = LlmQaGenerator::new(&generator);
        assert!(qa_gen
            .generate_qa("When was {X} born?", "Nelson Mandela")
            .unwrap()
            .is_none());
    }
}
