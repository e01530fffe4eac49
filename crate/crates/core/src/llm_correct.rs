//! Prompt construction, batching, transport, response parsing, and the
//! retry/drop protocol for LLM hypothesis correction.
//!
//! The wire protocol is a plain chat-completion POST: one user message
//! holding the full rendered prompt, temperature 0. A deterministic mock
//! client implements the same trait so every test runs offline.

use std::sync::Mutex;
use std::time::Duration;

use serde_json::json;

use crate::manifest::ManifestEntry;
use crate::textnorm::normalize;
use crate::{Error, Result};

/// English prompt, byte-exact fixture.
pub const EN_PROMPT: &str = include_str!("../prompts/en.txt");
/// Mandarin prompt; same meaning as the English one.
pub const ZH_PROMPT: &str = include_str!("../prompts/zh.txt");

/// Prompt language. Code-switched utterances are not corrected here; the
/// unsupervised pools are monolingual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptLang {
    ZH,
    EN,
}

/// A correction prompt split into its three sections. Rendering concatenates
/// them verbatim, so the built-in templates reproduce the fixture files
/// byte-for-byte.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub language: PromptLang,
    pub system_instruction: String,
    pub problem_description: String,
    pub examples: String,
}

impl PromptTemplate {
    pub fn builtin(language: PromptLang) -> Self {
        match language {
            PromptLang::EN => PromptTemplate {
                language,
                system_instruction:
                    "Please confirm my requirement and reply to me as an ASR expert. ".into(),
                problem_description: "I will provide a batch of decoding results of an ASR model. \
                     Each sentence is separated by #, and you will assist me to find and correct \
                     possible substitution, insertion, and deletion errors, and output the \
                     corrected result. The final output format is <corrected result>. "
                    .into(),
                examples: "The example is as follows: Input: #Nice to meat you#hello word#. \
                     Output: <Nice to meet you>#<hello world>. After each time I input ASR \
                     hypotheses, please return the result directly without the inference process."
                    .into(),
            },
            PromptLang::ZH => PromptTemplate {
                language,
                system_instruction: "请确认我的要求并以ASR专家的身份回复我。".into(),
                problem_description: "我将提供一批ASR模型的解码结果。每个句子以#分隔，\
                     你需要帮我找出并纠正可能的替换、插入和删除错误，并输出纠正后的结果。\
                     最终的输出格式为<纠正结果>。"
                    .into(),
                examples: "示例如下：输入：#今天天气怎么央#打开地图#。\
                     输出：<今天天气怎么样>#<打开地图>。\
                     每次我输入ASR假设后，请直接返回结果，不需要推理过程。"
                    .into(),
            },
        }
    }

    /// The instruction text alone, without any batch payload.
    pub fn text(&self) -> String {
        format!(
            "{}{}{}",
            self.system_instruction, self.problem_description, self.examples
        )
    }
}

/// One batch of greedy hypotheses queued for correction.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionBatch {
    pub utt_ids: Vec<String>,
    pub greedy_texts: Vec<String>,
    pub durations_s: Vec<f64>,
}

/// Protocol delimiters that must not appear inside a hypothesis.
const DELIMITERS: [char; 3] = ['#', '<', '>'];

fn sanitize(text: &str) -> String {
    text.chars()
        .map(|c| if DELIMITERS.contains(&c) { ' ' } else { c })
        .collect()
}

impl CorrectionBatch {
    /// Builds a batch from manifest entries, replacing protocol delimiters in
    /// hypotheses with spaces.
    pub fn from_entries(entries: &[&ManifestEntry]) -> Result<Self> {
        let mut batch = CorrectionBatch {
            utt_ids: Vec::with_capacity(entries.len()),
            greedy_texts: Vec::with_capacity(entries.len()),
            durations_s: Vec::with_capacity(entries.len()),
        };
        for entry in entries {
            let greedy = entry.greedy_text.as_ref().ok_or_else(|| Error::MissingField {
                utt_id: entry.utt_id.clone(),
                field: "greedy_text".into(),
            })?;
            batch.utt_ids.push(entry.utt_id.clone());
            batch.greedy_texts.push(sanitize(greedy));
            batch.durations_s.push(entry.duration_s);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.utt_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utt_ids.is_empty()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.durations_s.iter().sum()
    }
}

/// Renders the payload "#h1#h2#...#hn#" for a batch.
pub fn render_payload(batch: &CorrectionBatch) -> Result<String> {
    for (utt_id, text) in batch.utt_ids.iter().zip(&batch.greedy_texts) {
        if let Some(delim) = text.chars().find(|c| DELIMITERS.contains(c)) {
            return Err(Error::UnsanitizedHypothesis {
                utt_id: utt_id.clone(),
                delimiter: delim,
            });
        }
    }
    let mut payload = String::from("#");
    for text in &batch.greedy_texts {
        payload.push_str(text);
        payload.push('#');
    }
    Ok(payload)
}

/// Full prompt: template text followed by the batch payload on its own line.
pub fn render_prompt(template: &PromptTemplate, batch: &CorrectionBatch) -> Result<String> {
    let payload = render_payload(batch)?;
    Ok(format!("{}\n{}", template.text(), payload))
}

/// Extracts the corrected strings from a response: all non-nested `<...>`
/// groups, in order. The count must match `expected_n`.
pub fn parse_response(text: &str, expected_n: usize) -> Result<Vec<String>> {
    let mut groups = Vec::new();
    let mut current: Option<String> = None;
    for c in text.chars() {
        match (c, current.as_mut()) {
            ('<', None) => current = Some(String::new()),
            ('<', Some(_)) => {
                return Err(Error::ParseMalformed("nested '<' in response".into()));
            }
            ('>', Some(group)) => {
                groups.push(std::mem::take(group));
                current = None;
            }
            ('>', None) => {
                return Err(Error::ParseMalformed("unmatched '>' in response".into()));
            }
            (c, Some(group)) => group.push(c),
            (_, None) => {}
        }
    }
    if current.is_some() {
        return Err(Error::ParseMalformed("unterminated '<' in response".into()));
    }
    if groups.len() != expected_n {
        return Err(Error::ParseMismatch {
            found: groups.len(),
            expected: expected_n,
        });
    }
    Ok(groups)
}

/// Retry budget for one batch. Total attempts, not retries-after-first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3 }
    }
}

/// A batch abandoned after exhausting its retry budget. This is a normal
/// pipeline outcome; the hours are excluded from downstream totals.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDropped {
    pub utt_ids: Vec<String>,
    pub total_duration_s: f64,
    pub attempts: usize,
}

/// Result of correcting one batch.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchOutcome {
    /// Corrections aligned 1:1 with the batch's utt_ids.
    Corrected(Vec<String>),
    Dropped(BatchDropped),
}

/// Chat-completion transport. Implementations must be shareable across the
/// batch worker threads.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Sends one batch, retrying on transport and parse failures. Configuration
/// errors abort immediately; retry exhaustion yields `BatchOutcome::Dropped`.
pub fn correct_batch(
    client: &dyn ChatClient,
    template: &PromptTemplate,
    batch: &CorrectionBatch,
    policy: RetryPolicy,
) -> Result<BatchOutcome> {
    let prompt = render_prompt(template, batch)?;
    let mut attempts = 0;
    while attempts < policy.max_attempts {
        attempts += 1;
        match client.complete(&prompt) {
            Ok(text) => match parse_response(&text, batch.len()) {
                Ok(corrections) => return Ok(BatchOutcome::Corrected(corrections)),
                Err(e) => {
                    log::warn!("attempt {attempts}: unparseable response: {e}");
                }
            },
            Err(Error::EndpointConfig(msg)) => return Err(Error::EndpointConfig(msg)),
            Err(e) => {
                log::warn!("attempt {attempts}: transport failure: {e}");
            }
        }
    }
    Ok(BatchOutcome::Dropped(BatchDropped {
        utt_ids: batch.utt_ids.clone(),
        total_duration_s: batch.total_duration_s(),
        attempts,
    }))
}

/// Deterministic offline stand-ins for the chat endpoint.
pub enum MockBehavior {
    /// Wraps each payload hypothesis in `<...>` joined by `#`.
    Echo,
    /// Replays a fixed response list, one per call, then errors.
    Scripted(Vec<String>),
    /// Fails the first `k` calls with a transport error, then echoes.
    Failing(usize),
}

pub struct MockEndpoint {
    behavior: MockBehavior,
    calls: Mutex<usize>,
}

impl MockEndpoint {
    pub fn new(behavior: MockBehavior) -> Self {
        MockEndpoint {
            behavior,
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }

    fn echo(prompt: &str) -> String {
        // The payload is the final line of the rendered prompt.
        let payload = prompt.lines().last().unwrap_or("");
        let parts: Vec<&str> = payload
            .split('#')
            .filter(|s| !s.is_empty())
            .collect();
        parts
            .iter()
            .map(|p| format!("<{p}>"))
            .collect::<Vec<_>>()
            .join("#")
    }
}

impl ChatClient for MockEndpoint {
    fn complete(&self, prompt: &str) -> Result<String> {
        let mut calls = self.calls.lock().unwrap();
        *calls += 1;
        let call_idx = *calls;
        drop(calls);
        match &self.behavior {
            MockBehavior::Echo => Ok(Self::echo(prompt)),
            MockBehavior::Scripted(responses) => responses
                .get(call_idx - 1)
                .cloned()
                .ok_or_else(|| Error::Transport("scripted responses exhausted".into())),
            MockBehavior::Failing(k) => {
                if call_idx <= *k {
                    Err(Error::Transport(format!("scripted failure {call_idx}")))
                } else {
                    Ok(Self::echo(prompt))
                }
            }
        }
    }
}

/// A mock that always fails, for drop-path tests.
pub struct AlwaysFailing {
    calls: Mutex<usize>,
}

impl AlwaysFailing {
    pub fn new() -> Self {
        AlwaysFailing {
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl Default for AlwaysFailing {
    fn default() -> Self {
        Self::new()
    }
}

impl ChatClient for AlwaysFailing {
    fn complete(&self, _prompt: &str) -> Result<String> {
        *self.calls.lock().unwrap() += 1;
        Err(Error::Transport("endpoint unavailable".into()))
    }
}

/// Endpoint settings for the real HTTP transport.
#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    pub timeout: Duration,
}

/// Environment variable holding the endpoint credential. Never logged.
pub const API_KEY_ENV: &str = "CSCURATE_API_KEY";

/// Blocking HTTP chat-completion client. One user message per request,
/// temperature 0.
pub struct HttpChatClient {
    config: EndpointConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn from_env(config: EndpointConfig) -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| {
            Error::EndpointConfig(format!("credential env var {API_KEY_ENV} is not set"))
        })?;
        let agent = ureq::AgentBuilder::new()
            .timeout(config.timeout)
            .build();
        Ok(HttpChatClient {
            config,
            api_key,
            agent,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let response = self
            .agent
            .post(&self.config.url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        match response {
            Ok(resp) => {
                let parsed: serde_json::Value = resp
                    .into_json()
                    .map_err(|e| Error::Transport(format!("invalid response body: {e}")))?;
                parsed["choices"][0]["message"]["content"]
                    .as_str()
                    .map(|s| s.to_string())
                    .ok_or_else(|| {
                        Error::Transport("response missing assistant message content".into())
                    })
            }
            Err(ureq::Error::Status(code, _)) if code == 401 || code == 403 => Err(
                Error::EndpointConfig(format!("endpoint rejected credential (HTTP {code})")),
            ),
            Err(e) => Err(Error::Transport(e.to_string())),
        }
    }
}

/// Normalizes a corrected text for scoring. The raw LLM output is what gets
/// stored in `corrected_text`; scoring normalizes on the fly.
pub fn normalized_for_scoring(corrected: &str) -> String {
    normalize(corrected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(texts: &[&str]) -> CorrectionBatch {
        CorrectionBatch {
            utt_ids: (0..texts.len()).map(|i| format!("u{i}")).collect(),
            greedy_texts: texts.iter().map(|s| s.to_string()).collect(),
            durations_s: vec![1.0; texts.len()],
        }
    }

    #[test]
    fn en_template_matches_fixture() {
        let template = PromptTemplate::builtin(PromptLang::EN);
        assert_eq!(template.text(), EN_PROMPT);
    }

    #[test]
    fn zh_template_matches_fixture() {
        let template = PromptTemplate::builtin(PromptLang::ZH);
        assert_eq!(template.text(), ZH_PROMPT);
    }

    #[test]
    fn payload_paper_example() {
        let b = batch(&["Nice to meat you", "hello word"]);
        assert_eq!(render_payload(&b).unwrap(), "#Nice to meat you#hello word#");
    }

    #[test]
    fn payload_single() {
        assert_eq!(render_payload(&batch(&["abc"])).unwrap(), "#abc#");
    }

    #[test]
    fn unsanitized_hypothesis_names_utt() {
        let b = batch(&["has # inside"]);
        match render_payload(&b).unwrap_err() {
            Error::UnsanitizedHypothesis { utt_id, delimiter } => {
                assert_eq!(utt_id, "u0");
                assert_eq!(delimiter, '#');
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn from_entries_sanitizes() {
        use crate::manifest::{Lang, ManifestEntry};
        let mut e = ManifestEntry::new("u1", "a.wav", 1.0, Lang::EN);
        e.greedy_text = Some("a<b>#c".into());
        let b = CorrectionBatch::from_entries(&[&e]).unwrap();
        assert_eq!(b.greedy_texts[0], "a b  c");
        assert!(render_payload(&b).is_ok());
    }

    #[test]
    fn parse_paper_output_example() {
        let got = parse_response("<Nice to meet you>#<hello world>.", 2).unwrap();
        assert_eq!(got, vec!["Nice to meet you", "hello world"]);
    }

    #[test]
    fn parse_single() {
        assert_eq!(parse_response("<a>", 1).unwrap(), vec!["a"]);
    }

    #[test]
    fn parse_count_mismatch() {
        match parse_response("<a>#<b>", 3).unwrap_err() {
            Error::ParseMismatch { found, expected } => {
                assert_eq!((found, expected), (2, 3));
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn parse_unterminated() {
        assert!(parse_response("<a", 1).is_err());
    }

    #[test]
    fn echo_roundtrip() {
        let client = MockEndpoint::new(MockBehavior::Echo);
        let template = PromptTemplate::builtin(PromptLang::EN);
        let b = batch(&["nice to meat you", "hello word"]);
        let outcome = correct_batch(&client, &template, &b, RetryPolicy::default()).unwrap();
        assert_eq!(
            outcome,
            BatchOutcome::Corrected(vec!["nice to meat you".into(), "hello word".into()])
        );
    }

    #[test]
    fn retry_then_succeed() {
        let client = MockEndpoint::new(MockBehavior::Failing(2));
        let template = PromptTemplate::builtin(PromptLang::EN);
        let b = batch(&["abc"]);
        let outcome =
            correct_batch(&client, &template, &b, RetryPolicy { max_attempts: 3 }).unwrap();
        assert_eq!(outcome, BatchOutcome::Corrected(vec!["abc".into()]));
        assert_eq!(client.calls(), 3);
    }

    #[test]
    fn drop_after_exhaustion() {
        let client = AlwaysFailing::new();
        let template = PromptTemplate::builtin(PromptLang::EN);
        let b = batch(&["abc", "def"]);
        let outcome =
            correct_batch(&client, &template, &b, RetryPolicy { max_attempts: 3 }).unwrap();
        match outcome {
            BatchOutcome::Dropped(dropped) => {
                assert_eq!(dropped.attempts, 3);
                assert_eq!(dropped.utt_ids, vec!["u0".to_string(), "u1".to_string()]);
                assert_eq!(dropped.total_duration_s, 2.0);
            }
            other => panic!("unexpected: {other:?}"),
        }
        assert_eq!(client.calls(), 3);
    }

    #[test]
    fn scripted_replays_fixture() {
        let client = MockEndpoint::new(MockBehavior::Scripted(vec!["<fixed>".into()]));
        assert_eq!(client.complete("anything").unwrap(), "<fixed>");
    }

    #[test]
    fn malformed_forever_drops() {
        let client = MockEndpoint::new(MockBehavior::Scripted(vec![
            "no groups at all".into(),
            "no groups at all".into(),
            "no groups at all".into(),
        ]));
        let template = PromptTemplate::builtin(PromptLang::EN);
        let b = batch(&["abc"]);
        let outcome =
            correct_batch(&client, &template, &b, RetryPolicy { max_attempts: 3 }).unwrap();
        assert!(matches!(outcome, BatchOutcome::Dropped(_)));
        assert_eq!(client.calls(), 3);
    }

    proptest! {
        // Echo through the full render -> mock -> parse path returns the
        // sanitized inputs in order.
        #[test]
        fn echo_parse_roundtrip(texts in proptest::collection::vec("[a-z ]{1,12}", 1..40)) {
            let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
            let b = batch(&refs);
            let client = MockEndpoint::new(MockBehavior::Echo);
            let template = PromptTemplate::builtin(PromptLang::EN);
            let outcome = correct_batch(&client, &template, &b, RetryPolicy::default()).unwrap();
            prop_assert_eq!(outcome, BatchOutcome::Corrected(texts));
        }
    }
}
