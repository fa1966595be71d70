//! Identifiers, interaction storage, dataset ingestion, per-user train/test
//! splitting and trained-item-pool construction.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{Purpose, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// Binary implicit-feedback label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub label: Label,
}

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unknown dataset format `{0}` (expected movielens-100k, csv or gowalla)")]
    UnknownFormat(String),
    #[error("dataset {0} contains no interactions")]
    Empty(PathBuf),
    #[error("invalid split config: {0}")]
    InvalidSplit(String),
}

/// On-disk layout of an interaction file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// `user \t item \t rating \t timestamp`
    #[serde(rename = "movielens-100k")]
    MovieLens100k,
    /// `user,item[,...]`, optional header row; extra columns are ignored.
    Csv,
    /// Gowalla check-ins: `user \t time \t lat \t lon \t location`.
    Gowalla,
}

impl FromStr for DatasetFormat {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "movielens-100k" | "ml-100k" | "ml100k" | "movielens" => Ok(Self::MovieLens100k),
            "csv" | "generic" | "steam" => Ok(Self::Csv),
            "gowalla" => Ok(Self::Gowalla),
            other => Err(DomainError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MovieLens100k => "movielens-100k",
            Self::Csv => "csv",
            Self::Gowalla => "gowalla",
        })
    }
}

/// Maps raw dataset identifiers onto dense indices in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    index: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&id) = self.index.get(raw) {
            return id;
        }
        let id = self.names.len() as u32;
        self.index.insert(raw.to_string(), id);
        self.names.push(raw.to_string());
        id
    }

    pub fn lookup(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn from_names(n: usize, prefix: &str) -> Self {
        let mut interner = Self::default();
        for i in 0..n {
            interner.intern(&format!("{prefix}{i}"));
        }
        interner
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub negative_ratio: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            negative_ratio: 4,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(DomainError::InvalidSplit(format!(
                "train fraction {} not in (0,1)",
                self.train_fraction
            )));
        }
        if self.negative_ratio < 1 {
            return Err(DomainError::InvalidSplit("negative ratio must be >= 1".into()));
        }
        Ok(())
    }
}

/// A client's training items for one round: every train positive plus freshly
/// sampled never-interacted negatives.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainedPool {
    pub positives: Vec<ItemId>,
    pub negatives: Vec<ItemId>,
}

impl TrainedPool {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(item, label)` pairs, positives first.
    pub fn labelled(&self) -> impl Iterator<Item = (ItemId, Label)> + '_ {
        self.positives
            .iter()
            .map(|&i| (i, Label::Positive))
            .chain(self.negatives.iter().map(|&i| (i, Label::Negative)))
    }
}

/// Per-user positive interactions, optionally split into train and test.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionStore {
    users: Interner,
    items: Interner,
    /// All positives per user, sorted by item id.
    positives: Vec<Vec<ItemId>>,
    /// Sorted train positives (equals `positives` until split).
    train: Vec<Vec<ItemId>>,
    /// Sorted test positives (empty until split).
    test: Vec<Vec<ItemId>>,
    split: Option<SplitConfig>,
    duplicates: usize,
}

impl InteractionStore {
    /// Build an unsplit store from already-dense ids.
    pub fn from_pairs(
        n_users: usize,
        n_items: usize,
        pairs: impl IntoIterator<Item = (UserId, ItemId)>,
    ) -> Self {
        let mut positives = vec![Vec::new(); n_users];
        for (u, i) in pairs {
            assert!(u.index() < n_users && i.index() < n_items, "id out of range");
            positives[u.index()].push(i);
        }
        let mut duplicates = 0;
        for list in &mut positives {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            duplicates += before - list.len();
        }
        Self {
            users: Interner::from_names(n_users, ""),
            items: Interner::from_names(n_items, ""),
            train: positives.clone(),
            test: vec![Vec::new(); n_users],
            positives,
            split: None,
            duplicates,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    /// Pairs dropped as duplicates while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn user_names(&self) -> &Interner {
        &self.users
    }

    pub fn item_names(&self) -> &Interner {
        &self.items
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> {
        (0..self.n_users() as u32).map(UserId)
    }

    pub fn is_split(&self) -> bool {
        self.split.is_some()
    }

    pub fn split_config(&self) -> Option<&SplitConfig> {
        self.split.as_ref()
    }

    pub fn positives(&self, user: UserId) -> &[ItemId] {
        &self.positives[user.index()]
    }

    pub fn train(&self, user: UserId) -> &[ItemId] {
        &self.train[user.index()]
    }

    pub fn test(&self, user: UserId) -> &[ItemId] {
        &self.test[user.index()]
    }

    pub fn is_train_positive(&self, user: UserId, item: ItemId) -> bool {
        self.train[user.index()].binary_search(&item).is_ok()
    }

    pub fn has_interacted(&self, user: UserId, item: ItemId) -> bool {
        self.positives[user.index()].binary_search(&item).is_ok()
    }

    /// Users that contribute to ranking metrics (non-empty test set).
    pub fn evaluable_users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.users().filter(|u| !self.test[u.index()].is_empty())
    }

    pub fn interactions(&self) -> impl Iterator<Item = Interaction> + '_ {
        self.positives.iter().enumerate().flat_map(|(u, items)| {
            items.iter().map(move |&item| Interaction {
                user: UserId(u as u32),
                item,
                label: Label::Positive,
            })
        })
    }

    /// Per-user random split; every user keeps at least one train positive.
    pub fn split_train_test(&self, cfg: &SplitConfig) -> Result<InteractionStore, DomainError> {
        cfg.validate()?;
        let seeds = SeedStream::new(cfg.seed);
        let mut train = Vec::with_capacity(self.n_users());
        let mut test = Vec::with_capacity(self.n_users());
        for (u, items) in self.positives.iter().enumerate() {
            let n = items.len();
            let n_train = if n <= 1 {
                n
            } else {
                ((cfg.train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1)
            };
            let mut shuffled = items.clone();
            let mut rng = seeds.rng(Purpose::Split, u as u64, 0);
            shuffled.shuffle(&mut rng);
            let mut tr = shuffled[..n_train].to_vec();
            let mut te = shuffled[n_train..].to_vec();
            tr.sort_unstable();
            te.sort_unstable();
            train.push(tr);
            test.push(te);
        }
        Ok(InteractionStore {
            users: self.users.clone(),
            items: self.items.clone(),
            positives: self.positives.clone(),
            train,
            test,
            split: Some(*cfg),
            duplicates: self.duplicates,
        })
    }

    /// Draw this round's trained pool: all train positives plus
    /// `ratio * |train|` distinct items the user never interacted with
    /// (fewer when the catalogue runs out).
    pub fn resample_trained_pool<R: Rng + ?Sized>(
        &self,
        user: UserId,
        ratio: usize,
        rng: &mut R,
    ) -> TrainedPool {
        let positives = self.train[user.index()].clone();
        let interacted = &self.positives[user.index()];
        let wanted = ratio * positives.len();
        let available = self.n_items() - interacted.len();
        let negatives = if wanted >= available {
            self.non_interacted(user)
        } else if wanted * 4 < available {
            // Sparse draw: rejection sampling avoids materializing the complement.
            let mut chosen = Vec::with_capacity(wanted);
            let mut seen = std::collections::HashSet::with_capacity(wanted * 2);
            while chosen.len() < wanted {
                let item = ItemId(rng.gen_range(0..self.n_items() as u32));
                if interacted.binary_search(&item).is_err() && seen.insert(item) {
                    chosen.push(item);
                }
            }
            chosen
        } else {
            let complement = self.non_interacted(user);
            rand::seq::index::sample(rng, complement.len(), wanted)
                .into_iter()
                .map(|i| complement[i])
                .collect()
        };
        TrainedPool {
            positives,
            negatives,
        }
    }

    /// Items the user never interacted with (train or test), ascending.
    pub fn non_interacted(&self, user: UserId) -> Vec<ItemId> {
        let interacted = &self.positives[user.index()];
        let mut out = Vec::with_capacity(self.n_items() - interacted.len());
        let mut next = interacted.iter().peekable();
        for i in 0..self.n_items() as u32 {
            if next.peek().map(|it| it.0) == Some(i) {
                next.next();
            } else {
                out.push(ItemId(i));
            }
        }
        out
    }
}

/// Read an interaction file. Every listed pair becomes a positive; ratings
/// and timestamps are discarded.
pub fn load_interactions(path: &Path, format: DatasetFormat) -> Result<InteractionStore, DomainError> {
    let io_err = |source| DomainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let malformed = |line: usize, reason: String| DomainError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };

    match format {
        DatasetFormat::MovieLens100k | DatasetFormat::Gowalla => {
            let (min_fields, item_col) = match format {
                DatasetFormat::MovieLens100k => (4, 1),
                _ => (5, 4),
            };
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err)?;
                let line = line.trim_end_matches('\r');
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() < min_fields {
                    return Err(malformed(
                        idx + 1,
                        format!("expected {min_fields} tab-separated fields, found {}", fields.len()),
                    ));
                }
                if format == DatasetFormat::MovieLens100k {
                    for (name, f) in [("rating", fields[2]), ("timestamp", fields[3])] {
                        if f.trim().parse::<f64>().is_err() {
                            return Err(malformed(idx + 1, format!("non-numeric {name} `{f}`")));
                        }
                    }
                }
                let (u, i) = (fields[0].trim(), fields[item_col].trim());
                if u.is_empty() || i.is_empty() {
                    return Err(malformed(idx + 1, "empty user or item id".into()));
                }
                pairs.push((users.intern(u), items.intern(i)));
            }
        }
        DatasetFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(file);
            for (idx, record) in reader.records().enumerate() {
                let record = record.map_err(|e| malformed(idx + 1, e.to_string()))?;
                if record.len() == 1 && record[0].is_empty() {
                    continue;
                }
                if record.len() < 2 {
                    return Err(malformed(idx + 1, "expected at least `user,item`".into()));
                }
                if idx == 0 && is_header(&record[0], &record[1]) {
                    continue;
                }
                if record[0].is_empty() || record[1].is_empty() {
                    return Err(malformed(idx + 1, "empty user or item id".into()));
                }
                pairs.push((users.intern(&record[0]), items.intern(&record[1])));
            }
        }
    }

    if pairs.is_empty() {
        return Err(DomainError::Empty(path.to_path_buf()));
    }
    let mut store = InteractionStore::from_pairs(
        users.len(),
        items.len(),
        pairs.into_iter().map(|(u, i)| (UserId(u), ItemId(i))),
    );
    store.users = users;
    store.items = items;
    Ok(store)
}

fn is_header(a: &str, b: &str) -> bool {
    let a = a.to_ascii_lowercase();
    let b = b.to_ascii_lowercase();
    a.starts_with("user") && (b.starts_with("item") || b.starts_with("movie") || b.starts_with("game"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::io::Write;

    fn csv_store(text: &str) -> InteractionStore {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        load_interactions(f.path(), DatasetFormat::Csv).unwrap()
    }

    #[test]
    fn csv_counts() {
        let s = csv_store("a,x\na,y\nb,x\n");
        assert_eq!((s.n_users(), s.n_items(), s.n_interactions()), (2, 2, 3));
    }

    #[test]
    fn csv_dedup_and_header() {
        let s = csv_store("user,item,rating\na,x,5\na,x,3\n");
        assert_eq!(s.n_interactions(), 1);
        assert_eq!(s.duplicates(), 1);
        assert_eq!(s.user_names().name(0), Some("a"));
    }

    #[test]
    fn csv_quoted_names_with_extra_columns() {
        let s = csv_store("151603712,\"The Elder Scrolls V, Skyrim\",purchase,1.0,0\n");
        assert_eq!(s.item_names().name(0), Some("The Elder Scrolls V, Skyrim"));
    }

    #[test]
    fn movielens_malformed_line_reports_number() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"1\t2\t5\t881250949\n1\t3\n").unwrap();
        let err = load_interactions(f.path(), DatasetFormat::MovieLens100k).unwrap_err();
        assert!(matches!(err, DomainError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_interactions(Path::new("/nonexistent/u.data"), DatasetFormat::MovieLens100k)
            .unwrap_err();
        assert!(matches!(err, DomainError::Io { .. }));
    }

    #[test]
    fn interning_round_trips() {
        let s = csv_store("alice,apple\nbob,banana\nalice,cherry\n");
        for raw in ["alice", "bob"] {
            let id = s.user_names().lookup(raw).unwrap();
            assert_eq!(s.user_names().name(id), Some(raw));
        }
        assert_eq!(s.item_names().lookup("cherry"), Some(2));
    }

    #[test]
    fn split_sizes() {
        let store = InteractionStore::from_pairs(
            2,
            20,
            (0..10).map(|i| (UserId(0), ItemId(i))).chain([(UserId(1), ItemId(3))]),
        );
        let split = store.split_train_test(&SplitConfig::default()).unwrap();
        assert_eq!(split.train(UserId(0)).len(), 8);
        assert_eq!(split.test(UserId(0)).len(), 2);
        assert_eq!(split.train(UserId(1)).len(), 1);
        assert!(split.test(UserId(1)).is_empty());
        assert_eq!(split.evaluable_users().collect::<Vec<_>>(), vec![UserId(0)]);
        assert_eq!(split, store.split_train_test(&SplitConfig::default()).unwrap());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let store = InteractionStore::from_pairs(1, 2, [(UserId(0), ItemId(0))]);
        let cfg = SplitConfig {
            train_fraction: 1.0,
            ..SplitConfig::default()
        };
        assert!(store.split_train_test(&cfg).is_err());
    }

    #[test]
    fn pool_sizes_and_caps() {
        let store = InteractionStore::from_pairs(1, 100, (0..8).map(|i| (UserId(0), ItemId(i))));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pool = store.resample_trained_pool(UserId(0), 4, &mut rng);
        assert_eq!((pool.positives.len(), pool.negatives.len()), (8, 32));

        let small = InteractionStore::from_pairs(1, 10, (0..8).map(|i| (UserId(0), ItemId(i))));
        let pool = small.resample_trained_pool(UserId(0), 4, &mut rng);
        assert_eq!(pool.negatives, vec![ItemId(8), ItemId(9)]);
    }

    #[test]
    fn pools_differ_only_in_negatives() {
        let store = InteractionStore::from_pairs(1, 500, (0..20).map(|i| (UserId(0), ItemId(i * 3))))
            .split_train_test(&SplitConfig::default())
            .unwrap();
        let seeds = SeedStream::new(3);
        let a = store.resample_trained_pool(UserId(0), 4, &mut seeds.rng(Purpose::NegativePool, 0, 1));
        let b = store.resample_trained_pool(UserId(0), 4, &mut seeds.rng(Purpose::NegativePool, 0, 2));
        assert_eq!(a.positives, b.positives);
        assert_ne!(a.negatives, b.negatives);
        for n in a.negatives.iter().chain(&b.negatives) {
            assert!(!store.has_interacted(UserId(0), *n));
        }
        for t in store.test(UserId(0)) {
            assert!(!a.positives.contains(t) && !a.negatives.contains(t));
        }
    }
}
