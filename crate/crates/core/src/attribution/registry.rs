//! Package registry lookups: package name to canonical repository URL.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::language::Ecosystem;

pub const DEFAULT_PYPI_TEMPLATE: &str = "https://pypi.org/pypi/{name}/json";
pub const DEFAULT_NPM_TEMPLATE: &str = "https://registry.npmjs.org/{name}";

const FORGE_HOSTS: &[&str] = &["github.com", "gitlab.com", "bitbucket.org", "codeberg.org"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionSource {
    RegistryMetadata,
    OverrideMap,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageCoordinates {
    pub ecosystem: Ecosystem,
    pub package_name: String,
    pub repository_url: Option<String>,
    pub resolution_source: ResolutionSource,
}

impl PackageCoordinates {
    pub fn unresolved(ecosystem: Ecosystem, package_name: &str) -> Self {
        PackageCoordinates {
            ecosystem,
            package_name: package_name.to_string(),
            repository_url: None,
            resolution_source: ResolutionSource::Unresolved,
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.repository_url.is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry request failed: {0}")]
    Network(String),
    #[error("package {0} not found in registry")]
    NotFound(String),
    #[error("registry returned status {status} for {package}")]
    Status { package: String, status: u16 },
    #[error("registry metadata for {package} is malformed: {reason}")]
    Malformed { package: String, reason: String },
}

impl RegistryError {
    pub fn is_retriable(&self) -> bool {
        match self {
            RegistryError::Network(_) => true,
            RegistryError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Something that can produce a registry metadata document.
pub trait MetadataSource: Send + Sync {
    fn fetch(&self, ecosystem: Ecosystem, package: &str) -> Result<Value, RegistryError>;
}

/// Live registry client. `{name}` in each template is replaced by the
/// (URL-escaped) package name.
pub struct HttpRegistry {
    client: reqwest::blocking::Client,
    pypi_template: String,
    npm_template: String,
}

impl HttpRegistry {
    pub fn new(pypi_template: impl Into<String>, npm_template: impl Into<String>) -> Result<Self, RegistryError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!("kudos/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(15))
            .build()
            .map_err(|e| RegistryError::Network(e.to_string()))?;
        Ok(HttpRegistry {
            client,
            pypi_template: pypi_template.into(),
            npm_template: npm_template.into(),
        })
    }

    pub fn url_for(&self, ecosystem: Ecosystem, package: &str) -> String {
        let (template, name) = match ecosystem {
            Ecosystem::PyPI => (&self.pypi_template, distribution_name(package)),
            Ecosystem::Npm => (&self.npm_template, package.replace('/', "%2F")),
        };
        template.replace("{name}", &name)
    }
}

impl MetadataSource for HttpRegistry {
    fn fetch(&self, ecosystem: Ecosystem, package: &str) -> Result<Value, RegistryError> {
        let url = self.url_for(ecosystem, package);
        tracing::debug!(%url, "fetching registry metadata");
        let resp = self
            .client
            .get(&url)
            .header("Accept", "application/json")
            .send()
            .map_err(|e| RegistryError::Network(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 404 {
            return Err(RegistryError::NotFound(package.to_string()));
        }
        if !status.is_success() {
            return Err(RegistryError::Status {
                package: package.to_string(),
                status: status.as_u16(),
            });
        }
        let body = resp.bytes().map_err(|e| RegistryError::Network(e.to_string()))?;
        serde_json::from_slice::<Value>(&body).map_err(|e| RegistryError::Malformed {
            package: package.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Recorded registry responses laid out as `<dir>/pypi/<name>.json` and
/// `<dir>/npm/<name>.json` (scoped npm names with `/` written as `%2F`).
pub struct FixtureRegistry {
    dir: PathBuf,
}

impl FixtureRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureRegistry { dir: dir.into() }
    }

    pub fn path_for(&self, ecosystem: Ecosystem, package: &str) -> PathBuf {
        let file = match ecosystem {
            Ecosystem::PyPI => distribution_name(package),
            Ecosystem::Npm => package.replace('/', "%2F"),
        };
        self.dir.join(ecosystem.as_str()).join(format!("{file}.json"))
    }
}

impl MetadataSource for FixtureRegistry {
    fn fetch(&self, ecosystem: Ecosystem, package: &str) -> Result<Value, RegistryError> {
        let path = self.path_for(ecosystem, package);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(RegistryError::NotFound(package.to_string()))
            }
            Err(e) => return Err(RegistryError::Network(e.to_string())),
        };
        serde_json::from_str(&text).map_err(|e| RegistryError::Malformed {
            package: package.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Import names that differ from their PyPI distribution names.
const PYPI_IMPORT_ALIASES: &[(&str, &str)] = &[
    ("cv2", "opencv-python"),
    ("sklearn", "scikit-learn"),
    ("skimage", "scikit-image"),
    ("PIL", "pillow"),
    ("yaml", "pyyaml"),
    ("bs4", "beautifulsoup4"),
    ("dateutil", "python-dateutil"),
    ("attr", "attrs"),
    ("dotenv", "python-dotenv"),
    ("jwt", "pyjwt"),
];

/// PyPI distribution name for an import name, normalized per PEP 503.
pub fn distribution_name(import_name: &str) -> String {
    let name = PYPI_IMPORT_ALIASES
        .iter()
        .find(|(import, _)| *import == import_name)
        .map_or(import_name, |(_, dist)| dist);
    let mut out = String::with_capacity(name.len());
    let mut last_sep = false;
    for c in name.chars() {
        if matches!(c, '-' | '_' | '.') {
            if !last_sep {
                out.push('-');
            }
            last_sep = true;
        } else {
            out.push(c.to_ascii_lowercase());
            last_sep = false;
        }
    }
    out
}

/// Local `package → repository URL` overrides, consulted before any registry.
#[derive(Debug, Clone, Default)]
pub struct OverrideMap {
    entries: HashMap<(Option<Ecosystem>, String), String>,
}

impl OverrideMap {
    /// One `name url` pair per line; `name` may carry an `pypi:`/`npm:`
    /// prefix. `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let mut entries = HashMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let mut parts = line.split_whitespace();
            let (Some(name), Some(url)) = (parts.next(), parts.next()) else {
                continue;
            };
            let key = match name.split_once(':') {
                Some((eco, n)) => match eco.parse::<Ecosystem>() {
                    Ok(eco) => (Some(eco), n.to_string()),
                    Err(_) => (None, name.to_string()),
                },
                None => (None, name.to_string()),
            };
            let url = normalize_repository_url(url, None).unwrap_or_else(|| url.to_string());
            entries.insert(key, url);
        }
        OverrideMap { entries }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn insert(&mut self, ecosystem: Option<Ecosystem>, name: &str, url: &str) {
        self.entries.insert((ecosystem, name.to_string()), url.to_string());
    }

    pub fn get(&self, ecosystem: Ecosystem, name: &str) -> Option<&str> {
        self.entries
            .get(&(Some(ecosystem), name.to_string()))
            .or_else(|| self.entries.get(&(None, name.to_string())))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Canonicalizes a repository link to `https://<forge>/<owner>/<repo>`.
///
/// Accepts `git+https`, `git://`, `ssh://git@`, scp-style `git@host:o/r`,
/// and npm shorthands (`github:o/r`, bare `o/r` when `ecosystem` is npm).
/// Returns `None` for anything that is not a recognised forge repository.
pub fn normalize_repository_url(raw: &str, ecosystem: Option<Ecosystem>) -> Option<String> {
    let mut s = raw.trim().to_string();
    if s.is_empty() {
        return None;
    }
    for (short, host) in [
        ("github:", "github.com"),
        ("gitlab:", "gitlab.com"),
        ("bitbucket:", "bitbucket.org"),
    ] {
        if let Some(rest) = s.strip_prefix(short) {
            s = format!("https://{host}/{rest}");
        }
    }
    if let Some(rest) = s.strip_prefix("git+") {
        s = rest.to_string();
    }
    if let Some(rest) = s.strip_prefix("ssh://") {
        s = format!("https://{}", rest.split_once('@').map_or(rest, |(_, r)| r));
    } else if let Some(rest) = s.strip_prefix("git://") {
        s = format!("https://{rest}");
    } else if let Some(rest) = s.strip_prefix("git@") {
        s = format!("https://{}", rest.replacen(':', "/", 1));
    } else if !s.contains("://") {
        let bare = s.split('/').filter(|p| !p.is_empty()).count() == 2 && !s.contains('.');
        if ecosystem == Some(Ecosystem::Npm) && bare {
            s = format!("https://github.com/{s}");
        } else {
            s = format!("https://{s}");
        }
    }
    let rest = s
        .strip_prefix("https://")
        .or_else(|| s.strip_prefix("http://"))?;
    let rest = rest.split(['#', '?']).next().unwrap_or("");
    let mut parts = rest.split('/').filter(|p| !p.is_empty());
    let host = parts.next()?.to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host).to_string();
    let host = host.split(':').next().unwrap_or("").to_string();
    if !FORGE_HOSTS.contains(&host.as_str()) {
        return None;
    }
    let owner = parts.next()?;
    let repo = parts.next()?;
    let repo = repo.strip_suffix(".git").unwrap_or(repo);
    if owner.is_empty() || repo.is_empty() {
        return None;
    }
    Some(format!("https://{host}/{owner}/{repo}"))
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str).filter(|s| !s.trim().is_empty())
}

/// Pulls the repository link out of a registry metadata document.
pub fn extract_repository_url(ecosystem: Ecosystem, metadata: &Value) -> Option<String> {
    match ecosystem {
        Ecosystem::PyPI => {
            let info = metadata.get("info")?;
            let mut candidates: Vec<(u8, &str)> = Vec::new();
            if let Some(urls) = info.get("project_urls").and_then(Value::as_object) {
                for (label, url) in urls {
                    let Some(url) = url.as_str() else { continue };
                    let label: String = label
                        .chars()
                        .filter(|c| c.is_ascii_alphanumeric())
                        .collect::<String>()
                        .to_ascii_lowercase();
                    let rank = match label.as_str() {
                        "source" | "sourcecode" | "repository" | "code" | "github" | "sources" => 0,
                        "homepage" | "home" => 1,
                        _ => 3,
                    };
                    candidates.push((rank, url));
                }
            }
            if let Some(url) = str_field(info, "home_page") {
                candidates.push((2, url));
            }
            if let Some(url) = str_field(info, "download_url") {
                candidates.push((4, url));
            }
            candidates.sort_by_key(|(rank, _)| *rank);
            candidates
                .into_iter()
                .find_map(|(_, url)| normalize_repository_url(url, Some(Ecosystem::PyPI)))
        }
        Ecosystem::Npm => {
            let repo = metadata.get("repository").or_else(|| {
                let latest = metadata.pointer("/dist-tags/latest")?.as_str()?;
                metadata.get("versions")?.get(latest)?.get("repository")
            });
            let from_repo = repo.and_then(|r| match r {
                Value::String(s) => Some(s.as_str()),
                Value::Object(_) => str_field(r, "url"),
                _ => None,
            });
            from_repo
                .and_then(|u| normalize_repository_url(u, Some(Ecosystem::Npm)))
                .or_else(|| {
                    str_field(metadata, "homepage")
                        .and_then(|u| normalize_repository_url(u, Some(Ecosystem::Npm)))
                })
                .or_else(|| {
                    metadata
                        .pointer("/bugs/url")
                        .and_then(Value::as_str)
                        .and_then(|u| normalize_repository_url(u, Some(Ecosystem::Npm)))
                })
        }
    }
}

/// Override map first, then the registry.
///
/// A package that exists but carries no repository link resolves to
/// [`ResolutionSource::Unresolved`]; a package the registry does not know is
/// [`RegistryError::NotFound`].
pub fn resolve_repository(
    ecosystem: Ecosystem,
    package: &str,
    overrides: &OverrideMap,
    source: &dyn MetadataSource,
) -> Result<PackageCoordinates, RegistryError> {
    if let Some(url) = overrides.get(ecosystem, package) {
        return Ok(PackageCoordinates {
            ecosystem,
            package_name: package.to_string(),
            repository_url: Some(url.to_string()),
            resolution_source: ResolutionSource::OverrideMap,
        });
    }
    let metadata = source.fetch(ecosystem, package)?;
    Ok(match extract_repository_url(ecosystem, &metadata) {
        Some(url) => PackageCoordinates {
            ecosystem,
            package_name: package.to_string(),
            repository_url: Some(url),
            resolution_source: ResolutionSource::RegistryMetadata,
        },
        None => PackageCoordinates::unresolved(ecosystem, package),
    })
}
