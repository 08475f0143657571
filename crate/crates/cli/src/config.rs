use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, ensure, Context as _, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rulemine_core::lattice::{Context, InputSet, Interpretation, SourceMask};
use rulemine_core::model::{
    ChatModel, ChatSettings, HttpChatModel, ModelClient, RagModel, RemoteConfig, ScriptedModel,
    TranscriptReplay, ValidityAssignment,
};
use rulemine_core::predicate::{JudgeFallback, OutputPredicate, PredicatePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Mono,
    Dual,
    Verify,
    Oracle,
    Sweep,
    HotpotCurves,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mono => "mono",
            Mode::Dual => "dual",
            Mode::Verify => "verify",
            Mode::Oracle => "oracle",
            Mode::Sweep => "sweep",
            Mode::HotpotCurves => "hotpot-curves",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub interpretation: Option<Interpretation>,
    #[serde(default)]
    pub cache: Option<bool>,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub input: InputConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub predicate: Option<PredicateConfig>,
    #[serde(default)]
    pub retention_predicate: Option<PredicateConfig>,
    #[serde(default)]
    pub omission_predicate: Option<PredicateConfig>,
    /// Directory relative paths in the config are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub question: String,
    #[serde(default)]
    pub instructions: Option<String>,
    pub sources: Vec<String>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedOutput {
    /// 1-based indices of the retained sources.
    pub retained: Vec<usize>,
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Scripted {
        #[serde(default)]
        outputs: Vec<ScriptedOutput>,
        #[serde(default)]
        default: Option<String>,
    },
    /// Answers "1" on the listed retained sets and on supersets of `satisfied_supersets`.
    Validity {
        #[serde(default)]
        satisfied: Vec<Vec<usize>>,
        #[serde(default)]
        satisfied_supersets: Vec<Vec<usize>>,
    },
    Remote {
        endpoint: String,
        model: String,
        /// `${VAR}` is replaced from the environment.
        #[serde(default)]
        api_key: Option<String>,
        #[serde(default)]
        temperature: f32,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    Replay {
        transcript: PathBuf,
        model: String,
        #[serde(default)]
        temperature: f32,
    },
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    4
}

fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredicateConfig {
    #[serde(flatten)]
    pub kind: PredicateKind,
    /// Consequent used when explaining rules, e.g. "the answer is wrong".
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub negate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PredicateKind {
    TargetMatch {
        target: String,
    },
    Regex {
        pattern: String,
    },
    Token,
    Scripted {
        table: BTreeMap<String, bool>,
        #[serde(default)]
        default: Option<bool>,
    },
    Judge {
        ground_truth: String,
        #[serde(default)]
        pattern: Option<String>,
        #[serde(default)]
        template: Option<String>,
        /// Defaults to the model block's model name.
        #[serde(default)]
        judge_model: Option<String>,
    },
}

impl PredicateConfig {
    pub fn description(&self) -> String {
        if let Some(d) = &self.description {
            return d.clone();
        }
        let base = match &self.kind {
            PredicateKind::TargetMatch { target } => format!("the output mentions {target:?}"),
            PredicateKind::Regex { pattern } => format!("the output matches /{pattern}/"),
            PredicateKind::Token => "the output is 1".to_string(),
            PredicateKind::Scripted { .. } => "the scripted predicate holds".to_string(),
            PredicateKind::Judge { ground_truth, .. } => {
                format!("the output agrees with {ground_truth:?}")
            }
        };
        if self.negate {
            format!("it is not the case that {base}")
        } else {
            base
        }
    }
}

/// Replaces `${NAME}` with the environment variable `NAME`.
pub fn interpolate_env(value: &str) -> Result<String> {
    let mut out = String::new();
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .with_context(|| format!("unterminated ${{...}} in {value:?}"))?;
        let name = &after[..end];
        let resolved = std::env::var(name)
            .with_context(|| format!("environment variable {name} is not set"))?;
        out.push_str(&resolved);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn mask_from_indices(indices: &[usize], width: usize) -> Result<SourceMask> {
    SourceMask::from_indices(indices.iter().copied(), width)
        .with_context(|| format!("source list {indices:?} does not fit {width} sources"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        config.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(config)
    }

    pub fn validate(&self, mode: Mode) -> Result<()> {
        if let Some(declared) = self.mode {
            ensure!(
                declared == mode,
                "config declares mode {} but the {} command was run",
                declared.as_str(),
                mode.as_str()
            );
        }
        let single = self.predicate.is_some();
        let pair = (
            self.retention_predicate.is_some(),
            self.omission_predicate.is_some(),
        );
        match mode {
            Mode::Mono => ensure!(
                single && pair == (false, false),
                "mono mode needs exactly one [predicate] block"
            ),
            Mode::Dual => ensure!(
                !single && pair == (true, true),
                "dual mode needs [retention_predicate] and [omission_predicate] and no [predicate]"
            ),
            Mode::Verify | Mode::Oracle => ensure!(
                single || pair != (false, false),
                "{} mode needs a [predicate] block",
                mode.as_str()
            ),
            Mode::Sweep | Mode::HotpotCurves => {}
        }
        ensure!(
            self.parallelism != Some(0),
            "parallelism must be at least 1"
        );
        Ok(())
    }

    /// The predicate block used for a single-interpretation run.
    pub fn predicate_for(&self, interpretation: Interpretation) -> Result<&PredicateConfig> {
        let specific = match interpretation {
            Interpretation::Retention => self.retention_predicate.as_ref(),
            Interpretation::Omission => self.omission_predicate.as_ref(),
        };
        self.predicate
            .as_ref()
            .or(specific)
            .with_context(|| format!("no predicate configured for {interpretation}"))
    }

    pub fn input_set(&self) -> Result<InputSet> {
        let mut context = Context::new(self.input.question.clone());
        if let Some(instructions) = &self.input.instructions {
            context = context.with_instructions(instructions.clone());
        }
        let mut input = InputSet::new(self.input.sources.clone(), context)?;
        if let Some(labels) = &self.input.labels {
            input = input.with_labels(labels.clone())?;
        }
        Ok(input)
    }

    /// SHA-256 of the resolved config with secrets left uninterpolated.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    fn chat_settings(&self) -> Option<ChatSettings> {
        let (model, temperature) = match &self.model {
            ModelConfig::Remote {
                model, temperature, ..
            }
            | ModelConfig::Replay {
                model, temperature, ..
            } => (model, *temperature),
            _ => return None,
        };
        Some(ChatSettings {
            model: model.clone(),
            temperature,
            seed: self.seed,
        })
    }

    /// Chat backend behind a remote or replayed model, if any.
    pub fn chat_backend(&self) -> Result<Option<Arc<dyn ChatModel>>> {
        Ok(match &self.model {
            ModelConfig::Remote {
                endpoint,
                api_key,
                timeout_secs,
                max_retries,
                max_in_flight,
                ..
            } => {
                let mut remote = RemoteConfig::new(endpoint.clone());
                remote.api_key = api_key.as_deref().map(interpolate_env).transpose()?;
                remote.timeout = Duration::from_secs(*timeout_secs);
                remote.max_retries = *max_retries;
                remote.max_in_flight = (*max_in_flight).max(1);
                Some(Arc::new(HttpChatModel::new(remote)?))
            }
            ModelConfig::Replay { transcript, .. } => {
                let transcript = self.base_dir.join(transcript);
                Some(Arc::new(TranscriptReplay::load(&transcript)
                    .with_context(|| format!("cannot load transcript {}", transcript.display()))?))
            }
            _ => None,
        })
    }

    pub fn build_client(
        &self,
        chat: Option<Arc<dyn ChatModel>>,
    ) -> Result<Box<dyn ModelClient>> {
        let width = self.input.sources.len();
        Ok(match &self.model {
            ModelConfig::Scripted { outputs, default } => {
                let mut model = ScriptedModel::new(width);
                for entry in outputs {
                    model.insert(mask_from_indices(&entry.retained, width)?, entry.output.clone());
                }
                if let Some(d) = default {
                    model = model.with_default(d.clone());
                }
                Box::new(model)
            }
            ModelConfig::Validity {
                satisfied,
                satisfied_supersets,
            } => {
                let exact = satisfied
                    .iter()
                    .map(|s| mask_from_indices(s, width))
                    .collect::<Result<Vec<_>>>()?;
                let floors = satisfied_supersets
                    .iter()
                    .map(|s| mask_from_indices(s, width))
                    .collect::<Result<Vec<_>>>()?;
                ensure!(width <= 24, "validity models are limited to 24 sources");
                Box::new(ValidityAssignment::from_fn(width, |m| {
                    exact.contains(&m) || floors.iter().any(|f| f.is_subset_of(m))
                }))
            }
            ModelConfig::Remote { .. } | ModelConfig::Replay { .. } => {
                let chat = chat.context("remote model needs a chat backend")?;
                let settings = self.chat_settings().expect("chat-backed model");
                Box::new(RagModel::new(chat, settings))
            }
        })
    }

    pub fn build_predicate(
        &self,
        config: &PredicateConfig,
        chat: Option<&Arc<dyn ChatModel>>,
    ) -> Result<OutputPredicate> {
        let predicate = match &config.kind {
            PredicateKind::TargetMatch { target } => OutputPredicate::target_match(target.clone())?,
            PredicateKind::Regex { pattern } => OutputPredicate::regex(pattern)?,
            PredicateKind::Token => OutputPredicate::token(),
            PredicateKind::Scripted { table, default } => {
                OutputPredicate::scripted(table.clone(), *default)
            }
            PredicateKind::Judge {
                ground_truth,
                pattern,
                template,
                judge_model,
            } => {
                let Some(chat) = chat else {
                    bail!("judge predicates need a remote or replay model block");
                };
                let mut settings = self.chat_settings().expect("chat-backed model");
                settings.temperature = 0.0;
                if let Some(name) = judge_model {
                    settings.model = name.clone();
                }
                let mut judge = JudgeFallback::new(ground_truth.clone(), chat.clone(), settings);
                if let Some(p) = pattern {
                    judge = judge.with_pattern(p)?;
                }
                if let Some(t) = template {
                    judge = judge.with_template(t.clone());
                }
                OutputPredicate::JudgeFallback(judge)
            }
        };
        Ok(if config.negate {
            predicate.negate()
        } else {
            predicate
        })
    }

    pub fn build_pair(&self, chat: Option<&Arc<dyn ChatModel>>) -> Result<PredicatePair> {
        let ret = self
            .retention_predicate
            .as_ref()
            .context("missing [retention_predicate]")?;
        let omi = self
            .omission_predicate
            .as_ref()
            .context("missing [omission_predicate]")?;
        Ok(PredicatePair {
            retention: self.build_predicate(ret, chat)?,
            omission: self.build_predicate(omi, chat)?,
        })
    }
}
