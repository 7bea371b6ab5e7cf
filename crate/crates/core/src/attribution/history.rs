//! Commit history providers and recent-contributor extraction.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::registry::PackageCoordinates;

/// Commits with an author email ending in this suffix are skipped.
pub const NOREPLY_SUFFIX: &str = "users.noreply.github.com";

pub const MAX_CONTRIBUTORS: usize = 20;

/// One commit as seen by the attribution stage. This is also the on-disk
/// record format of a fixture bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub id: String,
    pub author_name: String,
    pub author_email: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub paths: Vec<String>,
}

impl CommitRecord {
    pub fn touches(&self, scope: &str) -> bool {
        let scope = scope.trim_end_matches('/');
        self.paths.iter().any(|p| {
            p == scope
                || (p.len() > scope.len() && p.starts_with(scope) && p.as_bytes()[scope.len()] == b'/')
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributorRecord {
    pub display_name: String,
    pub email: String,
    pub latest_commit_id: String,
    pub latest_commit_time: DateTime<Utc>,
    pub rank: u32,
}

pub fn normalize_email(email: &str) -> String {
    email.trim().to_ascii_lowercase()
}

pub fn is_noreply(email: &str) -> bool {
    normalize_email(email).ends_with(NOREPLY_SUFFIX)
}

/// The first `limit` distinct authors of `commits`, which must be ordered
/// newest first. Noreply and empty addresses are skipped; identity is the
/// lowercased email.
pub fn recent_contributors<'a>(
    commits: impl IntoIterator<Item = &'a CommitRecord>,
    limit: usize,
) -> Vec<ContributorRecord> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::new();
    for c in commits {
        if out.len() >= limit {
            break;
        }
        let key = normalize_email(&c.author_email);
        if key.is_empty() || key.ends_with(NOREPLY_SUFFIX) || !seen.insert(key) {
            continue;
        }
        out.push(ContributorRecord {
            display_name: c.author_name.clone(),
            email: c.author_email.trim().to_string(),
            latest_commit_id: c.id.clone(),
            latest_commit_time: c.timestamp,
            rank: out.len() as u32 + 1,
        });
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error("repository history unavailable: {0}")]
    Unavailable(String),
    #[error("repository history is malformed: {0}")]
    Malformed(String),
}

impl HistoryError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, HistoryError::Unavailable(_))
    }
}

/// Read access to one repository at its default-branch head.
pub trait RepositoryHistory: Send + Sync {
    /// Head commit id, `None` for a repository without commits.
    fn head(&self) -> Result<Option<String>, HistoryError>;
    /// File paths in the head tree.
    fn tree(&self) -> Result<Vec<String>, HistoryError>;
    /// Commits newest first, restricted to `scope` (a file or directory)
    /// when given.
    fn commits(&self, scope: Option<&str>) -> Result<Vec<CommitRecord>, HistoryError>;
}

/// Opens the history for resolved package coordinates.
pub trait HistorySource: Send + Sync {
    fn open(&self, coords: &PackageCoordinates) -> Result<Box<dyn RepositoryHistory>, HistoryError>;
}

/// `https://github.com/o/r` → `github.com/o/r`.
pub fn repository_slug(url: &str) -> Option<PathBuf> {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    let parts: Vec<&str> = rest.split('/').filter(|p| !p.is_empty()).collect();
    if parts.len() < 3 || parts.iter().any(|p| *p == ".." || *p == ".") {
        return None;
    }
    Some(parts[..3].iter().collect())
}

/// A recorded history: `commits/` holds one JSON [`CommitRecord`] per file,
/// and an optional `tree.txt` lists head paths one per line (otherwise the
/// tree is the union of touched paths).
#[derive(Debug, Clone)]
pub struct FixtureBundle {
    commits: Vec<CommitRecord>,
    tree: Vec<String>,
}

impl FixtureBundle {
    pub fn from_commits(mut commits: Vec<CommitRecord>, tree: Option<Vec<String>>) -> Self {
        commits.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then_with(|| a.id.cmp(&b.id)));
        let tree = tree.unwrap_or_else(|| {
            commits
                .iter()
                .flat_map(|c| c.paths.iter().cloned())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        });
        FixtureBundle { commits, tree }
    }

    pub fn load(dir: &Path) -> Result<Self, HistoryError> {
        let commit_dir = dir.join("commits");
        let entries = std::fs::read_dir(&commit_dir)
            .map_err(|e| HistoryError::Unavailable(format!("{}: {e}", commit_dir.display())))?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut commits = Vec::with_capacity(files.len());
        for f in files {
            let text = std::fs::read_to_string(&f)
                .map_err(|e| HistoryError::Unavailable(format!("{}: {e}", f.display())))?;
            let c: CommitRecord = serde_json::from_str(&text)
                .map_err(|e| HistoryError::Malformed(format!("{}: {e}", f.display())))?;
            commits.push(c);
        }
        let tree = match std::fs::read_to_string(dir.join("tree.txt")) {
            Ok(t) => Some(
                t.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect(),
            ),
            Err(_) => None,
        };
        Ok(Self::from_commits(commits, tree))
    }

    /// Writes the bundle in the layout [`FixtureBundle::load`] reads.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let commit_dir = dir.join("commits");
        std::fs::create_dir_all(&commit_dir)?;
        for (i, c) in self.commits.iter().enumerate() {
            let name = format!("{:06}-{}.json", i, sanitize(&c.id));
            std::fs::write(commit_dir.join(name), serde_json::to_vec_pretty(c)?)?;
        }
        std::fs::write(dir.join("tree.txt"), self.tree.join("\n") + "\n")
    }

    pub fn all_commits(&self) -> &[CommitRecord] {
        &self.commits
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .take(40)
        .collect()
}

impl RepositoryHistory for FixtureBundle {
    fn head(&self) -> Result<Option<String>, HistoryError> {
        Ok(self.commits.first().map(|c| c.id.clone()))
    }

    fn tree(&self) -> Result<Vec<String>, HistoryError> {
        Ok(self.tree.clone())
    }

    fn commits(&self, scope: Option<&str>) -> Result<Vec<CommitRecord>, HistoryError> {
        Ok(match scope {
            None => self.commits.clone(),
            Some(s) => self.commits.iter().filter(|c| c.touches(s)).cloned().collect(),
        })
    }
}

/// Fixture bundles stored under `<root>/<host>/<owner>/<repo>/`.
#[derive(Debug, Clone)]
pub struct FixtureHistorySource {
    root: PathBuf,
}

impl FixtureHistorySource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureHistorySource { root: root.into() }
    }

    pub fn bundle_dir(&self, repository_url: &str) -> Option<PathBuf> {
        repository_slug(repository_url).map(|slug| self.root.join(slug))
    }
}

impl HistorySource for FixtureHistorySource {
    fn open(&self, coords: &PackageCoordinates) -> Result<Box<dyn RepositoryHistory>, HistoryError> {
        let url = coords
            .repository_url
            .as_deref()
            .ok_or_else(|| HistoryError::Unavailable("package has no repository".into()))?;
        let dir = self
            .bundle_dir(url)
            .ok_or_else(|| HistoryError::Malformed(format!("unusable repository url {url}")))?;
        Ok(Box::new(FixtureBundle::load(&dir)?))
    }
}

/// History read from a local git repository with the `git` executable.
#[derive(Debug, Clone)]
pub struct GitRepository {
    dir: PathBuf,
}

impl GitRepository {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        GitRepository { dir: dir.into() }
    }

    fn git(&self, args: &[&str]) -> Result<String, HistoryError> {
        let out = Command::new("git")
            .arg("-C")
            .arg(&self.dir)
            .args(args)
            .output()
            .map_err(|e| HistoryError::Unavailable(format!("cannot run git: {e}")))?;
        if !out.status.success() {
            return Err(HistoryError::Unavailable(format!(
                "git {} failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        String::from_utf8(out.stdout).map_err(|e| HistoryError::Malformed(e.to_string()))
    }
}

const FIELD_SEP: char = '\u{1f}';
const RECORD_SEP: char = '\u{1e}';

impl RepositoryHistory for GitRepository {
    fn head(&self) -> Result<Option<String>, HistoryError> {
        match self.git(&["rev-parse", "--verify", "-q", "HEAD"]) {
            Ok(s) => Ok(Some(s.trim().to_string())),
            Err(_) => Ok(None),
        }
    }

    fn tree(&self) -> Result<Vec<String>, HistoryError> {
        if self.head()?.is_none() {
            return Ok(Vec::new());
        }
        Ok(self
            .git(&["ls-tree", "-r", "--name-only", "HEAD"])?
            .lines()
            .map(str::to_string)
            .collect())
    }

    fn commits(&self, scope: Option<&str>) -> Result<Vec<CommitRecord>, HistoryError> {
        if self.head()?.is_none() {
            return Ok(Vec::new());
        }
        let format = format!("--format={RECORD_SEP}%H{FIELD_SEP}%an{FIELD_SEP}%ae{FIELD_SEP}%aI");
        let mut args = vec!["log", "HEAD", "--no-renames", "--name-only", format.as_str()];
        if let Some(s) = scope {
            args.push("--");
            args.push(s);
        }
        let out = self.git(&args)?;
        let mut commits = Vec::new();
        for record in out.split(RECORD_SEP).filter(|r| !r.trim().is_empty()) {
            let mut lines = record.lines();
            let header = lines.next().unwrap_or("");
            let fields: Vec<&str> = header.split(FIELD_SEP).collect();
            let [id, name, email, date] = fields.as_slice() else {
                return Err(HistoryError::Malformed(format!("bad log header {header:?}")));
            };
            let timestamp = DateTime::parse_from_rfc3339(date)
                .map_err(|e| HistoryError::Malformed(format!("bad date {date:?}: {e}")))?
                .with_timezone(&Utc);
            commits.push(CommitRecord {
                id: id.to_string(),
                author_name: name.to_string(),
                author_email: email.to_string(),
                timestamp,
                paths: lines
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect(),
            });
        }
        Ok(commits)
    }
}

/// Local clones kept under `<cache>/<host>/<owner>/<repo>`, cloned on first
/// use when `clone_missing` is set.
#[derive(Debug, Clone)]
pub struct GitCloneSource {
    cache_dir: PathBuf,
    clone_missing: bool,
}

impl GitCloneSource {
    pub fn new(cache_dir: impl Into<PathBuf>, clone_missing: bool) -> Self {
        GitCloneSource {
            cache_dir: cache_dir.into(),
            clone_missing,
        }
    }
}

impl HistorySource for GitCloneSource {
    fn open(&self, coords: &PackageCoordinates) -> Result<Box<dyn RepositoryHistory>, HistoryError> {
        let url = coords
            .repository_url
            .as_deref()
            .ok_or_else(|| HistoryError::Unavailable("package has no repository".into()))?;
        let slug = repository_slug(url)
            .ok_or_else(|| HistoryError::Malformed(format!("unusable repository url {url}")))?;
        let dir = self.cache_dir.join(slug);
        if !dir.exists() {
            if !self.clone_missing {
                return Err(HistoryError::Unavailable(format!(
                    "no local clone at {}",
                    dir.display()
                )));
            }
            if let Some(parent) = dir.parent() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| HistoryError::Unavailable(e.to_string()))?;
            }
            // trees are needed for path-limited log; blobs are not
            let status = Command::new("git")
                .args(["clone", "--bare", "--filter=blob:none", "--quiet", url])
                .arg(&dir)
                .status()
                .map_err(|e| HistoryError::Unavailable(format!("cannot run git: {e}")))?;
            if !status.success() {
                let _ = std::fs::remove_dir_all(&dir);
                return Err(HistoryError::Unavailable(format!("clone of {url} failed")));
            }
        }
        Ok(Box::new(GitRepository::new(dir)))
    }
}
