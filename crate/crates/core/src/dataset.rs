//! Rating ingestion, sparse-entity filtering, similarity derivation and
//! reproducible train/test splits.
//!
//! Ids are re-indexed densely from 0 in order of first appearance. Entries
//! are kept sorted by `(user, item)` so that every derived artifact (splits,
//! manifests, fingerprints) has a canonical order independent of file order.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One observed interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    /// 1..=5 for explicit data, 1 for implicit data. Zero is never stored.
    pub value: u8,
    pub timestamp: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    /// `UserID::MovieID::Rating::Timestamp`
    MovielensDat,
    /// `user<TAB>item<TAB>value[<TAB>timestamp]`, `#` comments allowed.
    TsvTriples,
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens_dat" | "dat" => Ok(FileFormat::MovielensDat),
            "tsv_triples" | "tsv" => Ok(FileFormat::TsvTriples),
            other => Err(Error::Config(format!("unknown file format `{other}`"))),
        }
    }
}

/// Sparse users x items rating store.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingMatrix {
    num_users: usize,
    num_items: usize,
    entries: Vec<Rating>,
    user_offsets: Vec<usize>,
}

impl RatingMatrix {
    /// Validates ids, rejects duplicate pairs, drops zero values and sorts
    /// entries by `(user, item)`.
    pub fn new(num_users: usize, num_items: usize, mut entries: Vec<Rating>) -> Result<Self> {
        entries.retain(|e| e.value != 0);
        for e in &entries {
            if e.user as usize >= num_users || e.item as usize >= num_items {
                return Err(Error::Contract(format!(
                    "entry ({}, {}) outside {num_users}x{num_items}",
                    e.user, e.item
                )));
            }
            if e.value > 5 {
                return Err(Error::Contract(format!("rating {} outside 0..=5", e.value)));
            }
        }
        entries.sort_unstable_by_key(|e| (e.user, e.item));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].user, w[0].item) == (w[1].user, w[1].item))
        {
            return Err(Error::DuplicateEntry {
                user: w[0].user.to_string(),
                item: w[0].item.to_string(),
            });
        }
        let mut user_offsets = vec![0usize; num_users + 1];
        for e in &entries {
            user_offsets[e.user as usize + 1] += 1;
        }
        for u in 0..num_users {
            user_offsets[u + 1] += user_offsets[u];
        }
        Ok(RatingMatrix {
            num_users,
            num_items,
            entries,
            user_offsets,
        })
    }

    pub fn empty() -> Self {
        RatingMatrix {
            num_users: 0,
            num_items: 0,
            entries: Vec::new(),
            user_offsets: vec![0],
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries sorted by `(user, item)`.
    pub fn entries(&self) -> &[Rating] {
        &self.entries
    }

    pub fn user_entries(&self, user: usize) -> &[Rating] {
        &self.entries[self.user_offsets[user]..self.user_offsets[user + 1]]
    }

    pub fn user_counts(&self) -> Vec<usize> {
        (0..self.num_users)
            .map(|u| self.user_offsets[u + 1] - self.user_offsets[u])
            .collect()
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_items];
        for e in &self.entries {
            counts[e.item as usize] += 1;
        }
        counts
    }

    /// Per-item lists of `(user, value)`, users ascending.
    pub fn item_columns(&self) -> Vec<Vec<(u32, u8)>> {
        let mut cols = vec![Vec::new(); self.num_items];
        for e in &self.entries {
            cols[e.item as usize].push((e.user, e.value));
        }
        cols
    }

    pub fn get(&self, user: usize, item: usize) -> Option<u8> {
        let row = self.user_entries(user);
        row.binary_search_by_key(&(item as u32), |e| e.item)
            .ok()
            .map(|i| row[i].value)
    }

    /// Fraction of the `users x items` grid that is observed.
    pub fn density(&self) -> f64 {
        if self.num_users == 0 || self.num_items == 0 {
            return 0.0;
        }
        self.entries.len() as f64 / (self.num_users as f64 * self.num_items as f64)
    }

    /// Implicit data stores only the value 1.
    pub fn is_implicit(&self) -> bool {
        self.entries.iter().all(|e| e.value == 1)
    }

    /// Same universe, different entries.
    pub fn with_entries(&self, entries: Vec<Rating>) -> Result<Self> {
        RatingMatrix::new(self.num_users, self.num_items, entries)
    }

    /// SHA-256 over the canonical entry list and dimensions.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.num_users as u64).to_le_bytes());
        hasher.update((self.num_items as u64).to_le_bytes());
        for e in &self.entries {
            hasher.update(e.user.to_le_bytes());
            hasher.update(e.item.to_le_bytes());
            hasher.update([e.value]);
        }
        format!("{:x}", hasher.finalize())
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            users: self.num_users,
            items: self.num_items,
            ratings: self.entries.len(),
            density: self.density(),
        }
    }

    /// Writes the matrix with dense ids and a dimension header; read back with
    /// [`RatingMatrix::read_tsv`].
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(
                w,
                "# hashrec ratings users={} items={}",
                self.num_users, self.num_items
            )?;
            for e in &self.entries {
                match e.timestamp {
                    Some(t) => writeln!(w, "{}\t{}\t{}\t{}", e.user, e.item, e.value, t)?,
                    None => writeln!(w, "{}\t{}\t{}", e.user, e.item, e.value)?,
                }
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    /// Reads a file produced by [`RatingMatrix::write_tsv`] keeping ids as is.
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let reader = open(path)?;
        let mut dims = None;
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("# hashrec ratings ") {
                dims = Some(parse_dims(rest, path, lineno)?);
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 3 || fields.len() > 4 {
                return Err(parse_error(
                    path,
                    lineno,
                    "expected 3 or 4 tab-separated fields",
                ));
            }
            let value = parse_value(fields[2], path, lineno)?;
            entries.push(Rating {
                user: parse_num(fields[0], path, lineno)?,
                item: parse_num(fields[1], path, lineno)?,
                value,
                timestamp: fields
                    .get(3)
                    .map(|t| parse_num(t, path, lineno))
                    .transpose()?,
            });
        }
        let (users, items) =
            dims.ok_or_else(|| Error::format(path, "missing `# hashrec ratings` header"))?;
        RatingMatrix::new(users, items, entries)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub density: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#User {}  #Item {}  #Ratings {}  Density {:.2}%",
            self.users,
            self.items,
            self.ratings,
            self.density * 100.0
        )
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_num<T: FromStr>(s: &str, path: &Path, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("invalid number `{}`", s.trim())))
}

/// Accepts integral ratings written as `4` or `4.0`.
fn parse_value(s: &str, path: &Path, line: usize) -> Result<u8> {
    let s = s.trim();
    let value: i64 = match s.parse::<i64>() {
        Ok(v) => v,
        Err(_) => {
            let f: f64 = s
                .parse()
                .map_err(|_| parse_error(path, line, format!("invalid rating `{s}`")))?;
            if f.fract() != 0.0 || !f.is_finite() {
                return Err(parse_error(
                    path,
                    line,
                    format!("non-integral rating `{s}`"),
                ));
            }
            f as i64
        }
    };
    if !(0..=5).contains(&value) {
        return Err(Error::RatingRange {
            path: path.to_path_buf(),
            line,
            value,
        });
    }
    Ok(value as u8)
}

fn parse_dims(rest: &str, path: &Path, line: usize) -> Result<(usize, usize)> {
    let mut users = None;
    let mut items = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("users", v)) => users = Some(parse_num(v, path, line)?),
            Some(("items", v)) => items = Some(parse_num(v, path, line)?),
            _ => {}
        }
    }
    match (users, items) {
        (Some(u), Some(i)) => Ok((u, i)),
        _ => Err(parse_error(path, line, "header needs users= and items=")),
    }
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    labels: Vec<String>,
}

impl Interner {
    fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&id) = self.ids.get(raw) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.ids.insert(raw.to_string(), id);
        self.labels.push(raw.to_string());
        id
    }
}

/// A loaded matrix together with the raw ids each dense index came from.
#[derive(Clone, Debug)]
pub struct LoadedRatings {
    pub matrix: RatingMatrix,
    pub user_labels: Vec<String>,
    pub item_labels: Vec<String>,
}

/// Parses a rating file and re-indexes ids densely by first appearance.
pub fn load_ratings(path: &Path, format: FileFormat) -> Result<RatingMatrix> {
    load_ratings_labeled(path, format).map(|l| l.matrix)
}

pub fn load_ratings_labeled(path: &Path, format: FileFormat) -> Result<LoadedRatings> {
    let reader = open(path)?;
    let mut users = Interner::default();
    let mut items = Interner::default();
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = match format {
            FileFormat::MovielensDat => {
                let f: Vec<&str> = trimmed.split("::").collect();
                if f.len() != 4 {
                    return Err(parse_error(
                        path,
                        lineno,
                        "expected UserID::MovieID::Rating::Timestamp",
                    ));
                }
                f
            }
            FileFormat::TsvTriples => {
                if trimmed.starts_with('#') {
                    continue;
                }
                let f: Vec<&str> = trimmed.split('\t').collect();
                if f.len() < 3 || f.len() > 4 {
                    return Err(parse_error(
                        path,
                        lineno,
                        "expected user<TAB>item<TAB>value[<TAB>timestamp]",
                    ));
                }
                f
            }
        };
        let (raw_user, raw_item) = (fields[0].trim(), fields[1].trim());
        if raw_user.is_empty() || raw_item.is_empty() {
            return Err(parse_error(path, lineno, "empty id"));
        }
        let value = parse_value(fields[2], path, lineno)?;
        let timestamp = fields
            .get(3)
            .map(|t| parse_num::<i64>(t, path, lineno))
            .transpose()?;
        if value == 0 {
            continue;
        }
        entries.push(Rating {
            user: users.intern(raw_user),
            item: items.intern(raw_item),
            value,
            timestamp,
        });
    }
    let matrix = RatingMatrix::new(users.labels.len(), items.labels.len(), entries).map_err(
        |e| match e {
            Error::DuplicateEntry { user, item } => Error::DuplicateEntry {
                user: users.labels[user.parse::<usize>().unwrap_or(0)].clone(),
                item: items.labels[item.parse::<usize>().unwrap_or(0)].clone(),
            },
            other => other,
        },
    )?;
    Ok(LoadedRatings {
        matrix,
        user_labels: users.labels,
        item_labels: items.labels,
    })
}

/// Re-densifies ids of the surviving entries, preserving relative order.
fn compact(entries: Vec<Rating>, num_users: usize, num_items: usize) -> Result<RatingMatrix> {
    let mut user_map = vec![u32::MAX; num_users];
    let mut item_map = vec![u32::MAX; num_items];
    for e in &entries {
        user_map[e.user as usize] = 0;
        item_map[e.item as usize] = 0;
    }
    let mut next = 0u32;
    for slot in user_map.iter_mut().filter(|s| **s == 0) {
        *slot = next;
        next += 1;
    }
    let users = next as usize;
    next = 0;
    for slot in item_map.iter_mut().filter(|s| **s == 0) {
        *slot = next;
        next += 1;
    }
    let items = next as usize;
    let remapped = entries
        .into_iter()
        .map(|e| Rating {
            user: user_map[e.user as usize],
            item: item_map[e.item as usize],
            ..e
        })
        .collect();
    RatingMatrix::new(users, items, remapped)
}

/// Alternately drops users and items below their thresholds until no entity
/// changes, then re-densifies ids.
pub fn filter_min_interactions(
    ratings: &RatingMatrix,
    min_user: usize,
    min_item: usize,
) -> Result<RatingMatrix> {
    if min_user == 0 && min_item == 0 {
        return Ok(ratings.clone());
    }
    let mut keep_user = vec![true; ratings.num_users()];
    let mut keep_item = vec![true; ratings.num_items()];
    loop {
        let mut changed = false;
        let mut user_count = vec![0usize; ratings.num_users()];
        for e in ratings.entries() {
            if keep_user[e.user as usize] && keep_item[e.item as usize] {
                user_count[e.user as usize] += 1;
            }
        }
        for (u, keep) in keep_user.iter_mut().enumerate() {
            if *keep && user_count[u] < min_user {
                *keep = false;
                changed = true;
            }
        }
        let mut item_count = vec![0usize; ratings.num_items()];
        for e in ratings.entries() {
            if keep_user[e.user as usize] && keep_item[e.item as usize] {
                item_count[e.item as usize] += 1;
            }
        }
        for (i, keep) in keep_item.iter_mut().enumerate() {
            if *keep && item_count[i] < min_item {
                *keep = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let survivors: Vec<Rating> = ratings
        .entries()
        .iter()
        .filter(|e| keep_user[e.user as usize] && keep_item[e.item as usize])
        .copied()
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptyDataset { min_user, min_item });
    }
    compact(survivors, ratings.num_users(), ratings.num_items())
}

/// Keeps a seeded uniform sample of `count` users, drops items left without
/// ratings and re-densifies ids.
pub fn subsample_users(ratings: &RatingMatrix, count: usize, seed: u64) -> Result<RatingMatrix> {
    if count >= ratings.num_users() {
        return Ok(ratings.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users: Vec<usize> = (0..ratings.num_users()).collect();
    users.shuffle(&mut rng);
    let mut keep = vec![false; ratings.num_users()];
    for &u in &users[..count] {
        keep[u] = true;
    }
    let survivors: Vec<Rating> = ratings
        .entries()
        .iter()
        .filter(|e| keep[e.user as usize])
        .copied()
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptyDataset {
            min_user: 0,
            min_item: 0,
        });
    }
    compact(survivors, ratings.num_users(), ratings.num_items())
}

/// Binary users x items relation; a pair is present iff `S_ab = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimilarityMatrix {
    num_users: usize,
    num_items: usize,
    positives: Vec<Vec<u32>>,
}

impl SimilarityMatrix {
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut positives = vec![Vec::new(); num_users];
        for &(u, i) in pairs {
            if u as usize >= num_users || i as usize >= num_items {
                return Err(Error::Contract(format!("pair ({u}, {i}) outside universe")));
            }
            positives[u as usize].push(i);
        }
        for row in &mut positives {
            row.sort_unstable();
            row.dedup();
        }
        Ok(SimilarityMatrix {
            num_users,
            num_items,
            positives,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Sorted positive items of a user.
    pub fn positives(&self, user: usize) -> &[u32] {
        &self.positives[user]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.positives[user].binary_search(&(item as u32)).is_ok()
    }

    pub fn len(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(
                w,
                "# hashrec similarity users={} items={}",
                self.num_users, self.num_items
            )?;
            for (u, row) in self.positives.iter().enumerate() {
                for i in row {
                    writeln!(w, "{u}\t{i}")?;
                }
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let reader = open(path)?;
        let mut dims = None;
        let mut pairs = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("# hashrec similarity ") {
                dims = Some(parse_dims(rest, path, lineno)?);
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (u, i) = line
                .split_once('\t')
                .ok_or_else(|| parse_error(path, lineno, "expected user<TAB>item"))?;
            pairs.push((parse_num(u, path, lineno)?, parse_num(i, path, lineno)?));
        }
        let (users, items) =
            dims.ok_or_else(|| Error::format(path, "missing `# hashrec similarity` header"))?;
        SimilarityMatrix::from_pairs(users, items, &pairs)
    }
}

/// `(a, b)` is positive iff the stored value exceeds `threshold`. Use
/// `threshold = 0` for implicit data.
pub fn derive_similarity(ratings: &RatingMatrix, threshold: u8) -> SimilarityMatrix {
    let mut positives = vec![Vec::new(); ratings.num_users()];
    for e in ratings.entries() {
        if e.value > threshold {
            positives[e.user as usize].push(e.item);
        }
    }
    SimilarityMatrix {
        num_users: ratings.num_users(),
        num_items: ratings.num_items(),
        positives,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    PerUser,
    Global,
}

impl FromStr for SplitProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_user" => Ok(SplitProtocol::PerUser),
            "global" => Ok(SplitProtocol::Global),
            other => Err(Error::Config(format!("unknown split protocol `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitPair {
    pub train: RatingMatrix,
    pub test: RatingMatrix,
    pub seed: u64,
    pub train_ratio: f64,
    pub protocol: SplitProtocol,
}

fn train_count(ratio: f64, n: usize) -> usize {
    // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
    ((ratio * n as f64) + 1e-9).floor() as usize
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "train ratio {ratio} not in (0, 1)"
        )))
    }
}

/// Seeded per-user split: each user keeps `floor(ratio * n_u)` entries for
/// training (at least one when `n_u >= 2`); single-entry users go to train.
pub fn split_per_user(ratings: &RatingMatrix, train_ratio: f64, seed: u64) -> Result<SplitPair> {
    check_ratio(train_ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(ratings.len());
    let mut test = Vec::new();
    for u in 0..ratings.num_users() {
        let mut row = ratings.user_entries(u).to_vec();
        let n = row.len();
        if n <= 1 {
            train.extend(row);
            continue;
        }
        row.shuffle(&mut rng);
        let k = train_count(train_ratio, n).max(1);
        test.extend_from_slice(&row[k..]);
        row.truncate(k);
        train.extend(row);
    }
    Ok(SplitPair {
        train: ratings.with_entries(train)?,
        test: ratings.with_entries(test)?,
        seed,
        train_ratio,
        protocol: SplitProtocol::PerUser,
    })
}

/// Seeded split with one shuffle over all entries.
pub fn split_global(ratings: &RatingMatrix, train_ratio: f64, seed: u64) -> Result<SplitPair> {
    check_ratio(train_ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = ratings.entries().to_vec();
    all.shuffle(&mut rng);
    let k = train_count(train_ratio, all.len());
    let test = all.split_off(k);
    Ok(SplitPair {
        train: ratings.with_entries(all)?,
        test: ratings.with_entries(test)?,
        seed,
        train_ratio,
        protocol: SplitProtocol::Global,
    })
}

pub fn split(
    ratings: &RatingMatrix,
    protocol: SplitProtocol,
    train_ratio: f64,
    seed: u64,
) -> Result<SplitPair> {
    match protocol {
        SplitProtocol::PerUser => split_per_user(ratings, train_ratio, seed),
        SplitProtocol::Global => split_global(ratings, train_ratio, seed),
    }
}

impl SplitPair {
    /// Persists `(user, item, value, fold)` rows in canonical order.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let protocol = match self.protocol {
            SplitProtocol::PerUser => "per_user",
            SplitProtocol::Global => "global",
        };
        let mut rows: Vec<(&Rating, &str)> = self
            .train
            .entries()
            .iter()
            .map(|e| (e, "train"))
            .chain(self.test.entries().iter().map(|e| (e, "test")))
            .collect();
        rows.sort_unstable_by_key(|(e, _)| (e.user, e.item));
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(
                w,
                "# hashrec split users={} items={} seed={} ratio={} protocol={}",
                self.train.num_users(),
                self.train.num_items(),
                self.seed,
                self.train_ratio,
                protocol
            )?;
            for (e, fold) in rows {
                writeln!(w, "{}\t{}\t{}\t{}", e.user, e.item, e.value, fold)?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        let reader = open(path)?;
        let mut header: Option<(usize, usize, u64, f64, SplitProtocol)> = None;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("# hashrec split ") {
                let (users, items) = parse_dims(rest, path, lineno)?;
                let mut seed = 0;
                let mut ratio = 0.0;
                let mut protocol = SplitProtocol::PerUser;
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("seed", v)) => seed = parse_num(v, path, lineno)?,
                        Some(("ratio", v)) => ratio = parse_num(v, path, lineno)?,
                        Some(("protocol", v)) => protocol = v.parse()?,
                        _ => {}
                    }
                }
                header = Some((users, items, seed, ratio, protocol));
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(parse_error(
                    path,
                    lineno,
                    "expected user<TAB>item<TAB>value<TAB>fold",
                ));
            }
            let rating = Rating {
                user: parse_num(fields[0], path, lineno)?,
                item: parse_num(fields[1], path, lineno)?,
                value: parse_value(fields[2], path, lineno)?,
                timestamp: None,
            };
            match fields[3] {
                "train" => train.push(rating),
                "test" => test.push(rating),
                other => return Err(parse_error(path, lineno, format!("unknown fold `{other}`"))),
            }
        }
        let (users, items, seed, train_ratio, protocol) =
            header.ok_or_else(|| Error::format(path, "missing `# hashrec split` header"))?;
        Ok(SplitPair {
            train: RatingMatrix::new(users, items, train)?,
            test: RatingMatrix::new(users, items, test)?,
            seed,
            train_ratio,
            protocol,
        })
    }
}
