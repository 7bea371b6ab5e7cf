//! Attribution of thanked objects to repositories, files, and contributors.
//!
//! For each object the first target is resolved to package coordinates
//! (override map, then registry metadata), member and call-site objects are
//! narrowed to a file or directory of the repository, and the most recent
//! distinct authors of that scope are collected.

pub mod history;
pub mod registry;
pub mod tree;

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

pub use history::{
    recent_contributors, CommitRecord, ContributorRecord, FixtureBundle, FixtureHistorySource,
    GitCloneSource, GitRepository, HistoryError, HistorySource, RepositoryHistory,
    MAX_CONTRIBUTORS, NOREPLY_SUFFIX,
};
pub use registry::{
    resolve_repository, FixtureRegistry, HttpRegistry, MetadataSource, OverrideMap,
    PackageCoordinates, RegistryError, ResolutionSource,
};
pub use tree::{resolve_member_path, PathConfidence};

use crate::language::{Ecosystem, Scope, Target};
use crate::ledger::{ObjectKey, ThankedObject};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub object_key: ObjectKey,
    pub coordinates: PackageCoordinates,
    pub resolved_path: Option<String>,
    pub path_confidence: PathConfidence,
    pub contributors: Vec<ContributorRecord>,
    /// Head commit the result was computed against.
    pub head_commit: Option<String>,
    /// Targets on the line beyond the first, recorded but not attributed.
    #[serde(default)]
    pub additional_targets: Vec<Target>,
    /// Set when the object needs a human to look at it.
    #[serde(default)]
    pub review_reason: Option<String>,
}

impl AttributionResult {
    pub fn needs_review(&self) -> bool {
        self.review_reason.is_some()
    }

    fn review(object: &ThankedObject, coordinates: PackageCoordinates, reason: String) -> Self {
        AttributionResult {
            object_key: object.object_key.clone(),
            coordinates,
            resolved_path: None,
            path_confidence: PathConfidence::RepoFallback,
            contributors: Vec::new(),
            head_commit: None,
            additional_targets: object.targets.iter().skip(1).cloned().collect(),
            review_reason: Some(reason),
        }
    }
}

/// Exponential backoff for retriable failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 4,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            attempts: 1,
            base_delay: Duration::ZERO,
        }
    }

    pub fn run<T, E>(&self, retriable: impl Fn(&E) -> bool, mut op: impl FnMut() -> Result<T, E>) -> Result<T, E> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempt + 1 < self.attempts.max(1) && retriable(&e) => {
                    let delay = self.base_delay * 2u32.saturating_pow(attempt);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Results keyed by `(object key, repository head)`.
#[derive(Debug, Default)]
pub struct AttributionCache {
    entries: Mutex<HashMap<String, AttributionResult>>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    entries: Vec<(String, AttributionResult)>,
}

impl AttributionCache {
    fn key(object_key: &ObjectKey, head: &str) -> String {
        format!("{object_key}\u{0}{head}")
    }

    pub fn get(&self, object_key: &ObjectKey, head: &str) -> Option<AttributionResult> {
        self.entries.lock().get(&Self::key(object_key, head)).cloned()
    }

    pub fn put(&self, result: &AttributionResult) {
        if let Some(head) = &result.head_commit {
            self.entries
                .lock()
                .insert(Self::key(&result.object_key, head), result.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        match std::fs::read(path) {
            Ok(bytes) => {
                let file: CacheFile = serde_json::from_slice(&bytes).map_err(std::io::Error::other)?;
                Ok(AttributionCache {
                    entries: Mutex::new(file.entries.into_iter().collect()),
                })
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut entries: Vec<_> = self
            .entries
            .lock()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let bytes = serde_json::to_vec_pretty(&CacheFile { entries }).map_err(std::io::Error::other)?;
        crate::pipeline::write_atomic(path, &bytes)
    }
}

pub struct Attributor {
    registry: Box<dyn MetadataSource>,
    overrides: OverrideMap,
    history: Box<dyn HistorySource>,
    cache: AttributionCache,
    coordinates: Mutex<HashMap<(Ecosystem, String), PackageCoordinates>>,
    retry: RetryPolicy,
    parallelism: usize,
    limit: usize,
}

impl Attributor {
    pub fn new(registry: Box<dyn MetadataSource>, history: Box<dyn HistorySource>) -> Self {
        Attributor {
            registry,
            overrides: OverrideMap::default(),
            history,
            cache: AttributionCache::default(),
            coordinates: Mutex::new(HashMap::new()),
            retry: RetryPolicy::default(),
            parallelism: 4,
            limit: MAX_CONTRIBUTORS,
        }
    }

    pub fn with_overrides(mut self, overrides: OverrideMap) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn with_cache(mut self, cache: AttributionCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn cache(&self) -> &AttributionCache {
        &self.cache
    }

    /// Coordinates for a package, memoized for the lifetime of the attributor.
    pub fn coordinates(&self, ecosystem: Ecosystem, package: &str) -> Result<PackageCoordinates, RegistryError> {
        let key = (ecosystem, package.to_string());
        if let Some(c) = self.coordinates.lock().get(&key) {
            return Ok(c.clone());
        }
        let resolved = match self.retry.run(RegistryError::is_retriable, || {
            resolve_repository(ecosystem, package, &self.overrides, self.registry.as_ref())
        }) {
            Ok(c) => c,
            Err(RegistryError::NotFound(_)) => PackageCoordinates::unresolved(ecosystem, package),
            Err(e) => return Err(e),
        };
        self.coordinates.lock().insert(key, resolved.clone());
        Ok(resolved)
    }

    /// Attributes one object. Failures never drop the object: it comes back
    /// with a review reason and no contributors.
    pub fn attribute(&self, object: &ThankedObject) -> AttributionResult {
        let ecosystem = object.object_key.language.ecosystem();
        let Some(first) = object.targets.first() else {
            return AttributionResult::review(
                object,
                PackageCoordinates::unresolved(ecosystem, ""),
                "object has no targets".into(),
            );
        };
        let coords = match self.coordinates(ecosystem, &first.package) {
            Ok(c) => c,
            Err(e) => {
                return AttributionResult::review(
                    object,
                    PackageCoordinates::unresolved(ecosystem, &first.package),
                    e.to_string(),
                )
            }
        };
        if !coords.is_resolved() {
            return AttributionResult::review(object, coords, "repository not resolved".into());
        }
        match self.attribute_resolved(object, first, coords.clone()) {
            Ok(r) => r,
            Err(e) => AttributionResult::review(object, coords, e.to_string()),
        }
    }

    fn attribute_resolved(
        &self,
        object: &ThankedObject,
        first: &Target,
        coords: PackageCoordinates,
    ) -> Result<AttributionResult, HistoryError> {
        let repo = self
            .retry
            .run(HistoryError::is_retriable, || self.history.open(&coords))?;
        let head = self.retry.run(HistoryError::is_retriable, || repo.head())?;
        if let Some(h) = &head {
            if let Some(hit) = self.cache.get(&object.object_key, h) {
                return Ok(hit);
            }
        }
        let (resolved_path, path_confidence) = match object.scope {
            Scope::Package => (None, PathConfidence::RepoFallback),
            Scope::Member | Scope::CallSite => {
                let tree = self.retry.run(HistoryError::is_retriable, || repo.tree())?;
                resolve_member_path(&tree, coords.ecosystem, &first.member_path)
            }
        };
        let commits = self.retry.run(HistoryError::is_retriable, || {
            repo.commits(resolved_path.as_deref())
        })?;
        let result = AttributionResult {
            object_key: object.object_key.clone(),
            coordinates: coords,
            resolved_path,
            path_confidence,
            contributors: recent_contributors(&commits, self.limit),
            head_commit: head,
            additional_targets: object.targets.iter().skip(1).cloned().collect(),
            review_reason: None,
        };
        self.cache.put(&result);
        Ok(result)
    }

    /// Attributes every object with bounded parallelism. Output order
    /// follows input order.
    pub fn attribute_all(&self, objects: &[ThankedObject]) -> Vec<AttributionResult> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build();
        match pool {
            Ok(pool) => pool.install(|| objects.par_iter().map(|o| self.attribute(o)).collect()),
            Err(_) => objects.iter().map(|o| self.attribute(o)).collect(),
        }
    }
}
