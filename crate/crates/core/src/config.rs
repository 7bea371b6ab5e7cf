//! Service configuration: a TOML file plus `KUDOS_*` environment overrides.
//!
//! Every key is optional. Environment variables win over the file. Relative
//! paths are taken relative to the working directory.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::registry::{DEFAULT_NPM_TEMPLATE, DEFAULT_PYPI_TEMPLATE};
use crate::notify::{MailSecurity, MailSettings};

pub const ENV_PREFIX: &str = "KUDOS_";
pub const DEFAULT_BODY_LIMIT: usize = 1024 * 1024;
pub const DEFAULT_WINDOW_DAYS: u32 = 21;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{var}: {reason}")]
    Env { var: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot create {path}: {source}")]
    Path {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Base URL used when building note-form links.
    pub public_url: String,
    pub ledger_path: PathBuf,
    /// Pipeline artifacts: objects, attributions, reports, caches.
    pub state_dir: PathBuf,
    pub outbox_dir: PathBuf,
    /// Bare clones of contributor repositories.
    pub clone_cache_dir: PathBuf,
    pub pypi_url_template: String,
    pub npm_url_template: String,
    /// Read registry documents from disk instead of the network.
    pub registry_fixture_dir: Option<PathBuf>,
    /// Read commit histories from disk instead of cloning.
    pub history_fixture_dir: Option<PathBuf>,
    pub clone_missing: bool,
    pub overrides_path: Option<PathBuf>,
    pub deny_list_path: Option<PathBuf>,
    pub templates_dir: Option<PathBuf>,
    pub preamble_path: Option<PathBuf>,
    pub mail: Option<MailSettings>,
    pub mail_from: String,
    pub mail_subject: Option<String>,
    pub window_days: u32,
    pub attribute_parallelism: usize,
    pub dispatch_parallelism: usize,
    pub retry_attempts: u32,
    pub body_limit_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            public_url: "http://127.0.0.1:8080".into(),
            ledger_path: "data/ledger.jsonl".into(),
            state_dir: "data/state".into(),
            outbox_dir: "data/outbox".into(),
            clone_cache_dir: "data/clones".into(),
            pypi_url_template: DEFAULT_PYPI_TEMPLATE.into(),
            npm_url_template: DEFAULT_NPM_TEMPLATE.into(),
            registry_fixture_dir: None,
            history_fixture_dir: None,
            clone_missing: true,
            overrides_path: None,
            deny_list_path: None,
            templates_dir: None,
            preamble_path: None,
            mail: None,
            mail_from: "kudos@localhost".into(),
            mail_subject: None,
            window_days: DEFAULT_WINDOW_DAYS,
            attribute_parallelism: 4,
            dispatch_parallelism: 2,
            retry_attempts: 4,
            body_limit_bytes: DEFAULT_BODY_LIMIT,
        }
    }
}

impl ServiceConfig {
    /// Reads the optional file, applies `KUDOS_*` variables from `env`, and
    /// validates the result.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => ServiceConfig::default(),
        };
        config.apply_env(env)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::load(None, std::env::vars())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.message().to_string(),
        })
    }

    pub fn apply_env<I>(&mut self, env: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (var, value) in env {
            let Some(key) = var.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |reason: String| ConfigError::Env {
                var: var.clone(),
                reason,
            };
            let path = || PathBuf::from(&value);
            let opt_path = || (!value.is_empty()).then(|| PathBuf::from(&value));
            let num = |v: &str| -> Result<u64, ConfigError> {
                v.parse::<u64>().map_err(|e| bad(format!("{v:?} is not a number: {e}")))
            };
            match key {
                "LISTEN" => self.listen = value.clone(),
                "PUBLIC_URL" => self.public_url = value.clone(),
                "LEDGER_PATH" => self.ledger_path = path(),
                "STATE_DIR" => self.state_dir = path(),
                "OUTBOX_DIR" => self.outbox_dir = path(),
                "CLONE_CACHE_DIR" => self.clone_cache_dir = path(),
                "PYPI_URL_TEMPLATE" => self.pypi_url_template = value.clone(),
                "NPM_URL_TEMPLATE" => self.npm_url_template = value.clone(),
                "REGISTRY_FIXTURE_DIR" => self.registry_fixture_dir = opt_path(),
                "HISTORY_FIXTURE_DIR" => self.history_fixture_dir = opt_path(),
                "CLONE_MISSING" => {
                    self.clone_missing = match value.to_ascii_lowercase().as_str() {
                        "1" | "true" | "yes" => true,
                        "0" | "false" | "no" => false,
                        other => return Err(bad(format!("{other:?} is not a boolean"))),
                    }
                }
                "OVERRIDES_PATH" => self.overrides_path = opt_path(),
                "DENY_LIST_PATH" => self.deny_list_path = opt_path(),
                "TEMPLATES_DIR" => self.templates_dir = opt_path(),
                "PREAMBLE_PATH" => self.preamble_path = opt_path(),
                "MAIL_FROM" => self.mail_from = value.clone(),
                "MAIL_SUBJECT" => self.mail_subject = Some(value.clone()),
                "MAIL_HOST" => self.mail_mut().host = value.clone(),
                "MAIL_PORT" => {
                    let port = u16::try_from(num(&value)?).map_err(|e| bad(e.to_string()))?;
                    self.mail_mut().port = Some(port);
                }
                "MAIL_SECURITY" => {
                    self.mail_mut().security = match value.to_ascii_lowercase().as_str() {
                        "tls" => MailSecurity::Tls,
                        "starttls" | "start_tls" => MailSecurity::StartTls,
                        "none" => MailSecurity::None,
                        other => return Err(bad(format!("unknown mail security {other:?}"))),
                    }
                }
                "MAIL_USERNAME" => self.mail_mut().username = Some(value.clone()),
                "MAIL_PASSWORD" => self.mail_mut().password = Some(value.clone()),
                "WINDOW_DAYS" => {
                    self.window_days = u32::try_from(num(&value)?).map_err(|e| bad(e.to_string()))?
                }
                "ATTRIBUTE_PARALLELISM" => self.attribute_parallelism = num(&value)? as usize,
                "DISPATCH_PARALLELISM" => self.dispatch_parallelism = num(&value)? as usize,
                "RETRY_ATTEMPTS" => {
                    self.retry_attempts = u32::try_from(num(&value)?).map_err(|e| bad(e.to_string()))?
                }
                "BODY_LIMIT_BYTES" => self.body_limit_bytes = num(&value)? as usize,
                "CONFIG" | "LOG" => {}
                _ => tracing::warn!(%var, "ignoring unknown configuration variable"),
            }
        }
        Ok(())
    }

    fn mail_mut(&mut self) -> &mut MailSettings {
        self.mail.get_or_insert_with(|| MailSettings {
            host: String::new(),
            port: None,
            security: MailSecurity::default(),
            username: None,
            password: None,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.window_days == 0 {
            return invalid("window_days must be greater than 0".into());
        }
        if self.attribute_parallelism == 0 || self.dispatch_parallelism == 0 {
            return invalid("parallelism limits must be greater than 0".into());
        }
        if self.body_limit_bytes == 0 {
            return invalid("body_limit_bytes must be greater than 0".into());
        }
        if let Err(e) = self.listen_addr() {
            return invalid(e);
        }
        for (name, t) in [("pypi_url_template", &self.pypi_url_template), ("npm_url_template", &self.npm_url_template)] {
            if !t.contains("{name}") {
                return invalid(format!("{name} must contain {{name}}"));
            }
        }
        if !self.mail_from.contains('@') {
            return invalid(format!("mail_from {:?} is not an address", self.mail_from));
        }
        Ok(())
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, String> {
        self.listen
            .parse()
            .map_err(|e| format!("listen address {:?}: {e}", self.listen))
    }

    /// Creates the directories the service writes to. Called before any
    /// other side effect so path problems surface as configuration errors.
    pub fn prepare_dirs(&self) -> Result<(), ConfigError> {
        let mut dirs = vec![self.state_dir.clone()];
        if let Some(parent) = self.ledger_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            dirs.push(parent.to_path_buf());
        }
        for dir in dirs {
            std::fs::create_dir_all(&dir).map_err(|source| ConfigError::Path { path: dir, source })?;
        }
        for (name, p) in [
            ("overrides_path", &self.overrides_path),
            ("deny_list_path", &self.deny_list_path),
            ("templates_dir", &self.templates_dir),
            ("preamble_path", &self.preamble_path),
            ("registry_fixture_dir", &self.registry_fixture_dir),
            ("history_fixture_dir", &self.history_fixture_dir),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::Invalid(format!("{name} {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn note_url(&self, event_id: &str) -> String {
        format!("{}/v1/note-form/{event_id}", self.public_url.trim_end_matches('/'))
    }
}
