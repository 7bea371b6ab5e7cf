//! Mapping an imported member path onto a file or directory in a repository.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::language::Ecosystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathConfidence {
    /// Exactly one file or directory matched.
    Exact,
    /// Several matched; the shortest path was chosen.
    Heuristic,
    /// Nothing matched; attribution covers the whole repository.
    RepoFallback,
}

fn source_extensions(ecosystem: Ecosystem) -> &'static [&'static str] {
    match ecosystem {
        Ecosystem::PyPI => &["py", "pyx"],
        Ecosystem::Npm => &["js", "mjs", "cjs", "jsx", "ts", "tsx", "mts", "cts"],
    }
}

fn ends_with(path_segs: &[&str], wanted: &[String]) -> bool {
    path_segs.len() >= wanted.len()
        && path_segs[path_segs.len() - wanted.len()..]
            .iter()
            .zip(wanted)
            .all(|(a, b)| *a == b)
}

/// Finds the repository path for `member_path`, read as a module path.
///
/// The longest prefix of `member_path` that matches anything wins, so
/// `[pyplot, plot]` falls back to the `pyplot` module when there is no
/// `plot` file. A file matches when its trailing segments equal the prefix
/// (with a source extension on the last one); a directory matches when its
/// trailing segments equal the prefix.
pub fn resolve_member_path(
    tree: &[String],
    ecosystem: Ecosystem,
    member_path: &[String],
) -> (Option<String>, PathConfidence) {
    if member_path.is_empty() {
        return (None, PathConfidence::RepoFallback);
    }
    let exts = source_extensions(ecosystem);
    let mut dirs: BTreeSet<&str> = BTreeSet::new();
    for path in tree {
        let mut end = path.len();
        while let Some(i) = path[..end].rfind('/') {
            if !dirs.insert(&path[..i]) {
                break;
            }
            end = i;
        }
    }

    for k in (1..=member_path.len()).rev() {
        let wanted = &member_path[..k];
        let mut candidates: Vec<&str> = Vec::new();
        for path in tree {
            let Some((stem, ext)) = path.rsplit_once('.') else { continue };
            if stem.ends_with('/') || !exts.contains(&ext) {
                continue;
            }
            let segs: Vec<&str> = stem.split('/').collect();
            if ends_with(&segs, wanted) {
                candidates.push(path);
            }
        }
        for dir in &dirs {
            let segs: Vec<&str> = dir.split('/').collect();
            if ends_with(&segs, wanted) {
                candidates.push(dir);
            }
        }
        match candidates.len() {
            0 => continue,
            1 => return (Some(candidates[0].to_string()), PathConfidence::Exact),
            _ => {
                let best = candidates
                    .into_iter()
                    .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
                    .map(str::to_string);
                return (best, PathConfidence::Heuristic);
            }
        }
    }
    (None, PathConfidence::RepoFallback)
}
