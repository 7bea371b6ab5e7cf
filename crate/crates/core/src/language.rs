use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Source languages the scanner understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    JavaScript,
    TypeScript,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::Python, Language::JavaScript, Language::TypeScript];

    /// Maps a file extension (`py`, `js`, `jsx`, `ts`, `tsx`) to a language.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "py" => Some(Language::Python),
            "js" | "jsx" => Some(Language::JavaScript),
            "ts" | "tsx" => Some(Language::TypeScript),
            _ => None,
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(Self::from_extension)
    }

    pub fn ecosystem(self) -> Ecosystem {
        match self {
            Language::Python => Ecosystem::PyPI,
            Language::JavaScript | Language::TypeScript => Ecosystem::Npm,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::JavaScript => "javascript",
            Language::TypeScript => "typescript",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported language: {0}")]
pub struct UnsupportedLanguage(pub String);

impl FromStr for Language {
    type Err = UnsupportedLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "javascript" | "js" | "jsx" => Ok(Language::JavaScript),
            "typescript" | "ts" | "tsx" => Ok(Language::TypeScript),
            _ => Err(UnsupportedLanguage(s.to_owned())),
        }
    }
}

/// Package registries that repositories are resolved through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ecosystem {
    #[serde(rename = "pypi")]
    PyPI,
    Npm,
}

impl Ecosystem {
    pub fn as_str(self) -> &'static str {
        match self {
            Ecosystem::PyPI => "pypi",
            Ecosystem::Npm => "npm",
        }
    }

    pub fn includes(self, language: Language) -> bool {
        language.ecosystem() == self
    }
}

impl fmt::Display for Ecosystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown ecosystem: {0}")]
pub struct UnknownEcosystem(pub String);

impl FromStr for Ecosystem {
    type Err = UnknownEcosystem;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pypi" | "python" => Ok(Ecosystem::PyPI),
            "npm" | "javascript" | "typescript" => Ok(Ecosystem::Npm),
            _ => Err(UnknownEcosystem(s.to_owned())),
        }
    }
}

/// What a thanks gesture on a line is directed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Import of a whole package.
    Package,
    /// Import of a named module, class, or function.
    Member,
    /// A non-import line that calls or reads from an imported name.
    CallSite,
}

impl Scope {
    pub fn is_import(self) -> bool {
        matches!(self, Scope::Package | Scope::Member)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Package => "package",
            Scope::Member => "member",
            Scope::CallSite => "call_site",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A `(package, member_path)` pair naming what a line refers to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Target {
    pub package: String,
    #[serde(default)]
    pub member_path: Vec<String>,
}

impl Target {
    pub fn new(package: impl Into<String>, member_path: &[&str]) -> Self {
        Target {
            package: package.into(),
            member_path: member_path.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn package(package: impl Into<String>) -> Self {
        Target {
            package: package.into(),
            member_path: Vec::new(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.package)?;
        for seg in &self.member_path {
            write!(f, ".{seg}")?;
        }
        Ok(())
    }
}
