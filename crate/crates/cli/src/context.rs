//! Resolved global settings and the model backends they describe.
//!
//! Precedence is flag, then environment variable (both via clap), then the
//! config file, then the built-in default.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sea_core::corpus::{self, PaperRecord};
use sea_core::io;
use sea_core::llm_gateway::http::RemoteTokenizer;
use sea_core::llm_gateway::mock::{HashEmbedder, TemplateFiller};
use sea_core::llm_gateway::{Backoff, EndpointProfile, Gateway, GenerationConfig};
use sea_core::text::{TokenCounter, WhitespaceTokenizer};
use sea_core::PromptKit;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::ConfigFile;
use crate::{CliError, GlobalArgs, Subset};

pub const DEFAULT_PARALLEL: usize = 4;
pub const DEFAULT_MOCK_EMBED_DIM: usize = 16;
const MOCK_ENDPOINT: &str = "mock";

#[derive(Debug, Clone)]
pub struct Settings {
    pub config: ConfigFile,
    pub seed: u64,
    pub mock: bool,
    pub parallel: usize,
    pub endpoint: Option<String>,
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, CliError> {
        let config = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let seed = match args.seed {
            Some(s) => s,
            None => config.parsed("seed")?.unwrap_or(0),
        };
        let parallel = match args.parallel {
            Some(p) => p,
            None => config.parsed("parallel")?.unwrap_or(DEFAULT_PARALLEL),
        };
        if parallel == 0 {
            return Err(CliError::input("--parallel must be at least 1"));
        }
        let mock = args.mock || config.parsed("mock")?.unwrap_or(false);
        let endpoint = args
            .endpoint
            .clone()
            .or_else(|| config.get("endpoint").map(str::to_string));
        Ok(Settings {
            config,
            seed,
            mock,
            parallel,
            endpoint,
            out: args.out.clone(),
        })
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::input("this command needs --out"))
    }

    /// Name used in model tags.
    pub fn endpoint_name(&self) -> &str {
        match (&self.endpoint, self.mock) {
            (Some(name), _) => name,
            (None, true) => MOCK_ENDPOINT,
            (None, false) => "",
        }
    }

    fn profile(&self, name: &str) -> Result<EndpointProfile, CliError> {
        let mut profile = self.config.endpoint(name)?;
        profile.max_in_flight = self.parallel;
        Ok(profile)
    }

    fn mock_gateway(&self) -> Result<Gateway, CliError> {
        let dim = self.config.parsed("mock.embed_dim")?.unwrap_or(DEFAULT_MOCK_EMBED_DIM);
        if dim == 0 {
            return Err(CliError::input("mock.embed_dim must be positive"));
        }
        let profile = EndpointProfile {
            max_in_flight: self.parallel,
            ..EndpointProfile::new(self.endpoint_name(), "mock://local", "mock")
        };
        Ok(Gateway::new(profile, Arc::new(TemplateFiller::new()))
            .map_err(CliError::input)?
            .with_embedder(Arc::new(HashEmbedder::new(dim, 0)))
            .with_backoff(Backoff::NONE))
    }

    /// Gateway for chat completions.
    pub fn chat_gateway(&self) -> Result<Gateway, CliError> {
        if self.mock {
            return self.mock_gateway();
        }
        let name = self
            .endpoint
            .as_deref()
            .ok_or_else(|| CliError::input("no endpoint: pass --endpoint, set SEA_ENDPOINT, or use --mock"))?;
        Gateway::http(self.profile(name)?).map_err(CliError::input)
    }

    /// Gateway for embeddings: `embed_endpoint` from the config, else the
    /// chat endpoint.
    pub fn embed_gateway(&self) -> Result<Gateway, CliError> {
        if self.mock {
            return self.mock_gateway();
        }
        match self.config.get("embed_endpoint") {
            Some(name) => Gateway::http(self.profile(name)?).map_err(CliError::input),
            None => self.chat_gateway(),
        }
    }

    pub fn generation_config(&self) -> Result<GenerationConfig, CliError> {
        let defaults = GenerationConfig::default();
        let config = GenerationConfig {
            temperature: self.config.parsed("temperature")?.unwrap_or(defaults.temperature),
            max_new_tokens: self.config.parsed("max_new_tokens")?.unwrap_or(defaults.max_new_tokens),
            seed: Some(self.seed),
        };
        config.validate().map_err(CliError::input)?;
        Ok(config)
    }

    /// Token counter for generated reviews: `tokenizer.base_url` and
    /// `tokenizer.model` select a remote tokenizer, else whitespace counting.
    pub fn tokenizer(&self) -> Result<Arc<dyn TokenCounter>, CliError> {
        match (
            self.config.get("tokenizer.base_url"),
            self.config.get("tokenizer.model"),
        ) {
            (Some(url), Some(model)) if !self.mock => {
                Ok(Arc::new(RemoteTokenizer::new(url, model).map_err(CliError::input)?))
            }
            (Some(_), None) | (None, Some(_)) => Err(CliError::input(
                "set both tokenizer.base_url and tokenizer.model, or neither",
            )),
            _ => Ok(Arc::new(WhitespaceTokenizer)),
        }
    }

    pub fn prompts(&self) -> Result<PromptKit, CliError> {
        let kit = match self.config.get("prompts_dir") {
            Some(dir) => PromptKit::from_dir(Path::new(dir)).map_err(CliError::input)?,
            None => PromptKit::builtin(),
        };
        Ok(match self.config.parsed("context_budget")? {
            Some(budget) => kit.with_context_budget(budget),
            None => kit,
        })
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    io::read_jsonl(path).map_err(CliError::input)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    io::read_json(path).map_err(CliError::input)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<(), CliError> {
    io::write_jsonl(path, items).map_err(CliError::input)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    io::write_json(path, value).map_err(CliError::input)
}

/// `<path><suffix>`, e.g. `out.jsonl` → `out.jsonl.failures.jsonl`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Records of `subset`. Without a split file only `all` is meaningful and
/// every record is used.
pub fn select_subset<'a>(
    records: &'a [PaperRecord],
    split: Option<&Path>,
    subset: Subset,
) -> Result<Vec<&'a PaperRecord>, CliError> {
    let Some(split_path) = split else {
        return Ok(records.iter().collect());
    };
    let split: corpus::DatasetSplit = read_json(split_path)?;
    let ids = match subset {
        Subset::Train => split.train_ids,
        Subset::Test => split.test_ids,
        Subset::All => return Ok(records.iter().collect()),
    };
    corpus::select(records, &ids).map_err(|id| CliError::input(format!("split names unknown paper `{id}`")))
}

/// Error for a batch where nothing succeeded.
pub fn all_failed(what: &str, count: usize, example: impl Display) -> CliError {
    CliError::pipeline(format!("all {count} {what} failed; first error: {example}"))
}
