//! HTTP clients: an OpenAI-style completion API for generation and the
//! JSON model server for everything else.
//!
//! Model server endpoints (all `POST`, JSON in and out):
//!
//! | path               | request                    | response                                      |
//! |--------------------|----------------------------|-----------------------------------------------|
//! | `/score/coherence` | `{prefix, continuation}`   | `{probability}`                               |
//! | `/score/relevance` | `{summary, passage}`       | `{probability}`                               |
//! | `/entail`          | `{premise, hypothesis}`    | `{entailment, neutral, contradiction}`        |
//! | `/embed`           | `{texts}`                  | `{embeddings}`                                |
//! | `/qa`              | `{question, context}`      | `{answer, confidence}`                        |
//! | `/ner`             | `{text}`                   | `{entities: [{text, is_person}]}`             |
//!
//! plus `GET /healthz`. Completion uses `/v1/completions` (with `suffix`
//! for insertion) and editing `/v1/edits`.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    BackendError, BackendResult, Backends, ContinuationScorer, DetectedEntity, Embedder, EntailmentModel,
    EntailmentVerdict, EntityRecognizer, GenParams, LanguageModel, QaResult, QuestionAnswerer, RetryPolicy,
    WhitespaceTokenizer,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL of the completion API, without the `/v1/...` path.
    pub completion_url: String,
    pub completion_model: String,
    pub edit_model: String,
    /// Base URL of the model server.
    pub model_server_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub context_limit: usize,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            completion_url: "http://127.0.0.1:8000".into(),
            completion_model: "davinci".into(),
            edit_model: "text-davinci-edit-001".into(),
            model_server_url: "http://127.0.0.1:8001".into(),
            api_key_env: "STORYWEAVE_API_KEY".into(),
            context_limit: 1024,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone)]
struct Transport {
    client: Client,
    base: String,
    token: Option<String>,
}

impl Transport {
    fn new(base: &str, cfg: &HttpConfig) -> BackendResult<Self> {
        let client = Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            base: base.trim_end_matches('/').to_string(),
            token: std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty()),
        })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> BackendResult<Resp> {
        let mut req = self.client.post(format!("{}{path}", self.base)).json(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        decode(path, resp)
    }

    fn get_status(&self, path: &str) -> BackendResult<StatusCode> {
        self.client
            .get(format!("{}{path}", self.base))
            .send()
            .map(|r| r.status())
            .map_err(|e| BackendError::Transport(e.to_string()))
    }
}

fn decode<Resp: DeserializeOwned>(path: &str, resp: reqwest::blocking::Response) -> BackendResult<Resp> {
    let status = resp.status();
    let body = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
        return Err(BackendError::Transport(format!("{path}: HTTP {status}: {body}")));
    }
    if !status.is_success() {
        return Err(BackendError::Protocol(format!("{path}: HTTP {status}: {body}")));
    }
    serde_json::from_str(&body).map_err(|e| BackendError::Protocol(format!("{path}: {e}")))
}

/// Wire types shared with the model server.
pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CoherenceRequest {
        pub prefix: String,
        pub continuation: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct RelevanceRequest {
        pub summary: String,
        pub passage: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct ScoreResponse {
        pub probability: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct EntailRequest {
        pub premise: String,
        pub hypothesis: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct EntailResponse {
        pub entailment: f64,
        pub neutral: f64,
        pub contradiction: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct EmbedRequest {
        pub texts: Vec<String>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct EmbedResponse {
        pub embeddings: Vec<Vec<f32>>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct QaRequest {
        pub question: String,
        pub context: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct QaResponse {
        pub answer: String,
        pub confidence: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct NerRequest {
        pub text: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct NerEntity {
        pub text: String,
        pub is_person: bool,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct NerResponse {
        pub entities: Vec<NerEntity>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CompletionRequest {
        pub model: String,
        pub prompt: String,
        pub max_tokens: usize,
        pub temperature: f64,
        pub n: usize,
        #[serde(skip_serializing_if = "Vec::is_empty", default)]
        pub stop: Vec<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        pub suffix: Option<String>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Choice {
        pub text: String,
        #[serde(default)]
        pub index: usize,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CompletionResponse {
        pub choices: Vec<Choice>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct EditRequest {
        pub model: String,
        pub input: String,
        pub instruction: String,
    }
}

use wire::*;

/// Completion, insertion and editing over an OpenAI-style API.
#[derive(Debug, Clone)]
pub struct HttpLanguageModel {
    transport: Transport,
    cfg: HttpConfig,
}

impl HttpLanguageModel {
    pub fn new(cfg: &HttpConfig) -> BackendResult<Self> {
        Ok(Self {
            transport: Transport::new(&cfg.completion_url, cfg)?,
            cfg: cfg.clone(),
        })
    }

    fn request(&self, prompt: &str, suffix: Option<&str>, params: &GenParams) -> BackendResult<Vec<String>> {
        let req = CompletionRequest {
            model: self.cfg.completion_model.clone(),
            prompt: prompt.to_string(),
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            n: params.num_samples,
            stop: params.stop_sequences.clone(),
            suffix: suffix.map(str::to_string),
        };
        let mut resp: CompletionResponse = self.transport.post("/v1/completions", &req)?;
        resp.choices.sort_by_key(|c| c.index);
        Ok(resp.choices.into_iter().map(|c| c.text).collect())
    }
}

impl LanguageModel for HttpLanguageModel {
    fn context_limit(&self) -> usize {
        self.cfg.context_limit
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> BackendResult<Vec<String>> {
        self.request(prompt, None, params)
    }

    fn insert(&self, prefix: &str, suffix: &str, params: &GenParams) -> BackendResult<String> {
        let mut p = params.clone();
        p.num_samples = 1;
        let text = self
            .request(prefix, Some(suffix), &p)?
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Protocol("insert returned no choices".into()))?;
        // Some servers echo the suffix; the contract excludes it.
        Ok(text.strip_suffix(suffix).unwrap_or(&text).to_string())
    }

    fn edit(&self, text: &str, instruction: &str) -> BackendResult<String> {
        let req = EditRequest {
            model: self.cfg.edit_model.clone(),
            input: text.to_string(),
            instruction: instruction.to_string(),
        };
        let resp: CompletionResponse = self.transport.post("/v1/edits", &req)?;
        resp.choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| BackendError::Protocol("edit returned no choices".into()))
    }
}

/// Client for the scoring model server.
#[derive(Debug, Clone)]
pub struct ModelServerClient {
    transport: Transport,
}

impl ModelServerClient {
    pub fn new(cfg: &HttpConfig) -> BackendResult<Self> {
        Ok(Self {
            transport: Transport::new(&cfg.model_server_url, cfg)?,
        })
    }

    pub fn healthy(&self) -> BackendResult<bool> {
        Ok(self.transport.get_status("/healthz")?.is_success())
    }
}

impl ContinuationScorer for ModelServerClient {
    fn coherence(&self, prefix: &str, continuation: &str) -> BackendResult<f64> {
        let r: ScoreResponse = self.transport.post(
            "/score/coherence",
            &CoherenceRequest {
                prefix: prefix.into(),
                continuation: continuation.into(),
            },
        )?;
        Ok(r.probability)
    }

    fn relevance(&self, summary: &str, passage: &str) -> BackendResult<f64> {
        let r: ScoreResponse = self.transport.post(
            "/score/relevance",
            &RelevanceRequest {
                summary: summary.into(),
                passage: passage.into(),
            },
        )?;
        Ok(r.probability)
    }
}

impl EntailmentModel for ModelServerClient {
    fn entail(&self, premise: &str, hypothesis: &str) -> BackendResult<EntailmentVerdict> {
        let r: EntailResponse = self.transport.post(
            "/entail",
            &EntailRequest {
                premise: premise.into(),
                hypothesis: hypothesis.into(),
            },
        )?;
        EntailmentVerdict {
            p_entail: r.entailment,
            p_neutral: r.neutral,
            p_contradict: r.contradiction,
        }
        .validated()
    }
}

impl Embedder for ModelServerClient {
    fn embed(&self, texts: &[String]) -> BackendResult<Vec<Vec<f32>>> {
        let r: EmbedResponse = self.transport.post("/embed", &EmbedRequest { texts: texts.to_vec() })?;
        let dim = r.embeddings.first().map(Vec::len).unwrap_or(0);
        if r.embeddings.iter().any(|v| v.len() != dim) {
            return Err(BackendError::Protocol("embeddings differ in dimension".into()));
        }
        Ok(r.embeddings)
    }
}

impl QuestionAnswerer for ModelServerClient {
    fn answer(&self, question: &str, context: &str) -> BackendResult<QaResult> {
        let r: QaResponse = self.transport.post(
            "/qa",
            &QaRequest {
                question: question.into(),
                context: context.into(),
            },
        )?;
        Ok(QaResult {
            answer: r.answer,
            confidence: r.confidence,
        })
    }
}

impl EntityRecognizer for ModelServerClient {
    fn detect_entities(&self, text: &str) -> BackendResult<Vec<DetectedEntity>> {
        let r: NerResponse = self.transport.post("/ner", &NerRequest { text: text.into() })?;
        Ok(r.entities
            .into_iter()
            .map(|e| DetectedEntity {
                surface: e.text,
                is_person: e.is_person,
            })
            .collect())
    }
}

/// Backend set talking to remote services. Token counts use the whitespace
/// tokenizer; budgets are therefore approximate for subword models.
pub fn http_backends(cfg: &HttpConfig, retry: RetryPolicy) -> BackendResult<Backends> {
    let lm = Arc::new(HttpLanguageModel::new(cfg)?);
    let server = Arc::new(ModelServerClient::new(cfg)?);
    Ok(Backends {
        lm,
        tokenizer: Arc::new(WhitespaceTokenizer),
        embedder: server.clone(),
        nli: server.clone(),
        qa: server.clone(),
        ner: server.clone(),
        scorer: server,
        retry,
    })
}
