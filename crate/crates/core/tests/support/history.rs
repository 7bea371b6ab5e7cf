//! Synthetic repositories and a brute-force recent-author oracle.

use std::collections::HashMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use kudos::attribution::CommitRecord;
use rand::seq::SliceRandom;
use rand::Rng;

pub const NOREPLY: &str = "users.noreply.github.com";

pub struct SyntheticRepo {
    pub commits: Vec<CommitRecord>,
    pub files: Vec<String>,
    pub authors: usize,
    pub noreply_authors: usize,
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

/// 1–40 authors, up to half of them behind noreply addresses, 1–200
/// commits in shuffled order. Timestamps are drawn from a narrow range so
/// ties happen, and some authors commit under differently cased emails.
pub fn random_repo(rng: &mut impl Rng) -> SyntheticRepo {
    let authors = rng.gen_range(1..=40usize);
    let noreply_share = rng.gen_range(0.0..=0.5);
    let noreply_authors = (authors as f64 * noreply_share).floor() as usize;
    let files: Vec<String> = ["src/core.py", "src/io/read.py", "src/io/write.py", "docs/index.md", "setup.py"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let emails: Vec<String> = (0..authors)
        .map(|a| {
            if a < noreply_authors {
                format!("{}+dev{a}@{NOREPLY}", 1000 + a)
            } else {
                format!("dev{a}@example.org")
            }
        })
        .collect();
    let n = rng.gen_range(1..=200usize);
    let span = (n as i64 * 2).max(3);
    let mut commits: Vec<CommitRecord> = (0..n)
        .map(|i| {
            let a = rng.gen_range(0..authors);
            let mut email = emails[a].clone();
            if rng.gen_bool(0.1) {
                email = email.to_uppercase();
            }
            let touched = rng.gen_range(1..=2);
            CommitRecord {
                id: format!("{:040x}", rng.gen::<u128>() ^ i as u128),
                author_name: format!("Dev {a}{}", if rng.gen_bool(0.2) { " (laptop)" } else { "" }),
                author_email: email,
                timestamp: epoch() + Duration::minutes(rng.gen_range(0..span)),
                paths: files.choose_multiple(rng, touched).cloned().collect(),
            }
        })
        .collect();
    commits.shuffle(rng);
    SyntheticRepo {
        commits,
        files,
        authors,
        noreply_authors,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedContributor {
    pub email_key: String,
    pub name: String,
    pub commit_id: String,
    pub time: DateTime<Utc>,
}

/// Scans the whole unordered log. For every eligible author it keeps the
/// newest commit (earliest id on a timestamp tie), then orders authors by
/// that commit and keeps the first `limit`.
pub fn brute_force_recent(
    log: &[CommitRecord],
    scope: Option<&str>,
    limit: usize,
) -> (Vec<ExpectedContributor>, usize) {
    let mut latest: HashMap<String, &CommitRecord> = HashMap::new();
    for c in log {
        if let Some(s) = scope {
            let inside = c.paths.iter().any(|p| p == s || p.starts_with(&format!("{s}/")));
            if !inside {
                continue;
            }
        }
        let key = c.author_email.trim().to_lowercase();
        if key.is_empty() || key.ends_with(NOREPLY) {
            continue;
        }
        let replace = match latest.get(&key) {
            None => true,
            Some(prev) => (c.timestamp, std::cmp::Reverse(&c.id)) > (prev.timestamp, std::cmp::Reverse(&prev.id)),
        };
        if replace {
            latest.insert(key, c);
        }
    }
    let unique = latest.len();
    let mut all: Vec<ExpectedContributor> = latest
        .into_iter()
        .map(|(k, c)| ExpectedContributor {
            email_key: k,
            name: c.author_name.clone(),
            commit_id: c.id.clone(),
            time: c.timestamp,
        })
        .collect();
    all.sort_by(|a, b| b.time.cmp(&a.time).then_with(|| a.commit_id.cmp(&b.commit_id)));
    all.truncate(limit);
    (all, unique)
}
