//! Run configuration merged from flags, environment, and a config file.
//!
//! Precedence is flags > environment > file > defaults, and unknown config
//! keys are rejected so experiment configs stay auditable.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;

use lit_core::embeddings::{
    remote::RemoteEmbeddingProvider, word_vectors::WordVectorProvider, CachedEmbeddings,
    EmbeddingProvider, MockEmbeddingProvider, Tokenization,
};
use lit_core::lpgm::Estimator;
use lit_core::providers::http::{API_KEY_ENV, CHAT_URL_ENV, EMBED_URL_ENV};
use lit_core::providers::{
    ChatSession, GeneratorKind, GeneratorSpec, HttpChatClient, ResponseCache, SessionScript,
    Transcript,
};
use lit_core::similarity::{LikelihoodMap, Metric, MetricKind};
use lit_core::tracker::{TrackerConfig, TransitionMode};

use crate::CliError;

/// On-disk config file shape. Every field is optional; unknown keys fail.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    provider: Option<String>,
    metric: Option<OneOrMany>,
    map: Option<String>,
    temperature: Option<f64>,
    window: Option<usize>,
    samples: Option<usize>,
    p_stay: Option<f64>,
    seed: Option<u64>,
    mock_script: Option<String>,
    transition: Option<String>,
    model: Option<String>,
    sampling_temperature: Option<f64>,
    max_retries: Option<u32>,
    smoothing_alpha: Option<f64>,
    mass_floor: Option<f64>,
    confidence_threshold: Option<f64>,
    chat_url: Option<String>,
    embed_url: Option<String>,
    api_key: Option<String>,
    embed_model: Option<String>,
    embed_dimension: Option<usize>,
    cache_dir: Option<String>,
    transcript: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Command-line flags that participate in config resolution.
#[derive(Debug, Default, Clone)]
pub struct FlagOverrides {
    pub config: Option<PathBuf>,
    pub provider: Option<String>,
    pub metric: Vec<String>,
    pub map: Option<String>,
    pub temperature: Option<f64>,
    pub window: Option<usize>,
    pub samples: Option<usize>,
    pub p_stay: Option<f64>,
    pub seed: Option<u64>,
    pub mock_script: Option<PathBuf>,
    pub transition: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
}

/// Fully resolved settings; nothing is read lazily after this point.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub provider: String,
    pub metrics: Vec<String>,
    pub map: String,
    pub temperature: f64,
    pub window: usize,
    pub samples: usize,
    pub p_stay: f64,
    pub seed: Option<u64>,
    pub mock_script: Option<PathBuf>,
    pub transition: String,
    pub model: String,
    pub sampling_temperature: f64,
    pub max_retries: u32,
    pub smoothing_alpha: f64,
    pub mass_floor: f64,
    pub confidence_threshold: f64,
    pub chat_url: Option<String>,
    pub embed_url: Option<String>,
    pub api_key: Option<String>,
    pub embed_model: String,
    pub embed_dimension: usize,
    pub cache_dir: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

impl RunConfig {
    /// Merges defaults, the optional config file, environment variables, and
    /// command-line flags, in ascending precedence.
    pub fn resolve(flags: &FlagOverrides) -> Result<Self, CliError> {
        let file: FileConfig = match &flags.config {
            Some(path) => {
                let contents = std::fs::read_to_string(path).map_err(|e| {
                    usage(format!("cannot read config file {}: {e}", path.display()))
                })?;
                serde_json::from_str(&contents)
                    .map_err(|e| usage(format!("invalid config file {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };

        let env_api_key = std::env::var(API_KEY_ENV).ok();
        let env_chat_url = std::env::var(CHAT_URL_ENV).ok();
        let env_embed_url = std::env::var(EMBED_URL_ENV).ok();

        let mock_script = flags
            .mock_script
            .clone()
            .or(file.mock_script.map(PathBuf::from));
        let provider = flags.provider.clone().or(file.provider).unwrap_or_else(|| {
            if mock_script.is_some() {
                "mock".to_string()
            } else {
                "remote".to_string()
            }
        });
        let metrics = if !flags.metric.is_empty() {
            flags.metric.clone()
        } else {
            file.metric
                .map(OneOrMany::into_vec)
                .unwrap_or_else(|| vec!["mean-cos".to_string()])
        };

        let cfg = Self {
            provider,
            metrics,
            map: flags
                .map
                .clone()
                .or(file.map)
                .unwrap_or_else(|| "exp-temperature".to_string()),
            temperature: flags.temperature.or(file.temperature).unwrap_or(0.1),
            window: flags.window.or(file.window).unwrap_or(3),
            samples: flags.samples.or(file.samples).unwrap_or(10),
            p_stay: flags.p_stay.or(file.p_stay).unwrap_or(0.8),
            seed: flags.seed.or(file.seed),
            mock_script,
            transition: flags
                .transition
                .clone()
                .or(file.transition)
                .unwrap_or_else(|| "lpgm-method3".to_string()),
            model: file.model.unwrap_or_else(|| "default".to_string()),
            sampling_temperature: file.sampling_temperature.unwrap_or(0.0),
            max_retries: file.max_retries.unwrap_or(2),
            smoothing_alpha: file.smoothing_alpha.unwrap_or(0.5),
            mass_floor: file.mass_floor.unwrap_or(0.01),
            confidence_threshold: file.confidence_threshold.unwrap_or(0.3),
            chat_url: env_chat_url.or(file.chat_url),
            embed_url: env_embed_url.or(file.embed_url),
            api_key: env_api_key.or(file.api_key),
            embed_model: file.embed_model.unwrap_or_else(|| "default".to_string()),
            embed_dimension: file.embed_dimension.unwrap_or(768),
            cache_dir: flags
                .cache_dir
                .clone()
                .or(file.cache_dir.map(PathBuf::from)),
            transcript: flags
                .transcript
                .clone()
                .or(file.transcript.map(PathBuf::from)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !matches!(self.provider.as_str(), "mock" | "remote")
            && !self.provider.starts_with("static:")
        {
            return Err(usage(format!(
                "unknown provider {:?}; expected mock, remote, or static:<path>",
                self.provider
            )));
        }
        for metric in &self.metrics {
            self.metric_kind(metric)?;
        }
        self.likelihood_map()?;
        self.transition_mode()?;
        if self.window == 0 {
            return Err(usage("--window must be at least 1"));
        }
        if self.samples == 0 {
            return Err(usage("--samples must be at least 1"));
        }
        if !(self.p_stay > 0.0 && self.p_stay <= 1.0) {
            return Err(usage("--p-stay must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn metric_kind(&self, name: &str) -> Result<MetricKind, CliError> {
        match name {
            "mean-cos" => Ok(MetricKind::MeanCos),
            "bertscore-f1" | "bertscore" => Ok(MetricKind::BertscoreF1),
            other => Err(usage(format!(
                "unknown metric {other:?}; expected mean-cos or bertscore-f1"
            ))),
        }
    }

    pub fn likelihood_map(&self) -> Result<LikelihoodMap, CliError> {
        match self.map.as_str() {
            "exp-temperature" | "exp" => {
                LikelihoodMap::exp_temperature(self.temperature).map_err(|e| usage(e.to_string()))
            }
            "affine-clamp" | "affine" => Ok(LikelihoodMap::AffineClamp),
            other => Err(usage(format!(
                "unknown likelihood map {other:?}; expected exp-temperature or affine-clamp"
            ))),
        }
    }

    pub fn transition_mode(&self) -> Result<TransitionMode, CliError> {
        match self.transition.as_str() {
            "lpgm-method3" | "lpgm" => Ok(TransitionMode::LpgmMethod3),
            "fixed-matrix" | "fixed" => Ok(TransitionMode::FixedMatrix),
            other => Err(usage(format!(
                "unknown transition mode {other:?}; expected lpgm-method3 or fixed-matrix"
            ))),
        }
    }

    pub fn tracker_config(&self) -> Result<TrackerConfig, CliError> {
        Ok(TrackerConfig {
            window: self.window,
            transition_mode: self.transition_mode()?,
            sample_count: self.samples,
            p_stay: self.p_stay,
            mass_floor: self.mass_floor,
        })
    }

    fn load_script(&self) -> Result<Option<SessionScript>, CliError> {
        match &self.mock_script {
            Some(path) => {
                let script = SessionScript::load(path).map_err(|e| {
                    usage(format!("cannot load mock script {}: {e}", path.display()))
                })?;
                Ok(Some(script))
            }
            None => Ok(None),
        }
    }

    /// Builds every oracle-facing object in one go so that all commands wire
    /// the same way: chat session, estimator, and the embedding provider.
    pub fn build_runtime(&self) -> Result<Runtime, CliError> {
        let transcript = match &self.transcript {
            Some(path) => Transcript::appending_to(path)
                .map_err(|e| usage(format!("cannot open transcript {}: {e}", path.display())))?,
            None => Transcript::in_memory(),
        };

        let script = self.load_script()?;
        let (oracle, kind): (Arc<dyn lit_core::providers::ChatOracle>, GeneratorKind) =
            match &script {
                Some(s) => (
                    Arc::new(
                        s.chat_mock(self.seed)
                            .map_err(|e| usage(format!("invalid mock script: {e}")))?,
                    ),
                    GeneratorKind::ScriptedMock,
                ),
                None => {
                    let url = self.chat_url.clone().ok_or_else(|| {
                        usage(format!(
                            "no chat endpoint configured; set {CHAT_URL_ENV} or chat_url, \
                             or pass --mock-script"
                        ))
                    })?;
                    (
                        Arc::new(HttpChatClient::new(url, self.api_key.clone())),
                        GeneratorKind::RemoteChatService,
                    )
                }
            };
        let spec = GeneratorSpec {
            kind,
            model_id: self.model.clone(),
            sampling_temperature: self.sampling_temperature,
            max_retries: self.max_retries,
        };
        let mut session = ChatSession::new(oracle, spec).with_transcript(transcript.clone());
        if let Some(dir) = &self.cache_dir {
            let cache = ResponseCache::on_disk(dir)
                .map_err(|e| usage(format!("cannot open cache dir {}: {e}", dir.display())))?;
            session = session.with_cache(Arc::new(cache));
        }

        let script_embeddings: Option<MockEmbeddingProvider> = match &script {
            Some(s) => s
                .embedding_provider()
                .map_err(|e| usage(format!("invalid mock script embeddings: {e}")))?,
            None => None,
        };

        let estimator =
            Arc::new(Estimator::new(session.clone()).with_smoothing(self.smoothing_alpha));

        Ok(Runtime {
            session,
            estimator,
            transcript,
            script_embeddings,
        })
    }

    pub fn metric(
        &self,
        name: &str,
        provider: Arc<dyn EmbeddingProvider>,
    ) -> Result<Metric, CliError> {
        Ok(Metric::new(self.metric_kind(name)?, provider))
    }
}

/// The oracle-facing objects a command works with. The embedding provider is
/// built on demand; graph building never needs one.
pub struct Runtime {
    pub session: ChatSession,
    pub estimator: Arc<Estimator>,
    pub transcript: Transcript,
    script_embeddings: Option<MockEmbeddingProvider>,
}

impl Runtime {
    pub fn embedding_provider(
        &self,
        cfg: &RunConfig,
    ) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
        let inner: Arc<dyn EmbeddingProvider> = if cfg.provider == "mock" {
            Arc::new(self.script_embeddings.clone().ok_or_else(|| {
                usage("provider 'mock' needs a --mock-script with an embeddings table")
            })?)
        } else if let Some(path) = cfg.provider.strip_prefix("static:") {
            Arc::new(
                WordVectorProvider::load(path)
                    .map_err(|e| usage(format!("cannot load word vectors {path}: {e}")))?,
            )
        } else {
            let url = cfg.embed_url.clone().ok_or_else(|| {
                usage(format!(
                    "no embedding endpoint configured; set {EMBED_URL_ENV} or embed_url"
                ))
            })?;
            Arc::new(RemoteEmbeddingProvider::new(
                url,
                cfg.embed_model.clone(),
                cfg.api_key.clone(),
                cfg.embed_dimension,
                Tokenization::WhitespaceLowercase,
            ))
        };
        Ok(Arc::new(
            CachedEmbeddings::new(inner).with_transcript(self.transcript.clone()),
        ))
    }
}
