//! Observed rating sets, MovieLens ingestion, train/test splitting and RMSE.
//!
//! Users and items are stored under dense 0-based indices. The original
//! file ids are kept in an [`IdMap`] shared by every split of one dataset,
//! so a train and a test set always agree on matrix dimensions.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::factor::FactorState;

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

/// A rating as it appears in the input file, with the file's own ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
}

/// A rating addressed by dense matrix indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
}

/// Dense index <-> file id tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap {
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
}

impl IdMap {
    /// Identity mapping: dense index `i` has file id `i + 1`.
    pub fn sequential(n_users: usize, n_items: usize) -> Self {
        IdMap {
            user_ids: (1..=n_users as u64).collect(),
            item_ids: (1..=n_items as u64).collect(),
        }
    }

    pub fn user_id(&self, index: usize) -> u64 {
        self.user_ids[index]
    }

    pub fn item_id(&self, index: usize) -> u64 {
        self.item_ids[index]
    }
}

/// The observed rating set together with its per-user and per-item views.
#[derive(Debug, Clone)]
pub struct SparseRatings {
    n_users: usize,
    n_items: usize,
    entries: Vec<Entry>,
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
    ids: Arc<IdMap>,
}

impl SparseRatings {
    /// Builds a rating set over an `n_users x n_items` matrix with sequential
    /// file ids. Fails on out-of-range indices, duplicate cells or ratings
    /// outside `[1, 5]`.
    pub fn from_entries(n_users: usize, n_items: usize, entries: Vec<Entry>) -> Result<Self> {
        let ids = Arc::new(IdMap::sequential(n_users, n_items));
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.user >= n_users {
                return Err(Error::IndexOutOfRange {
                    kind: "user",
                    index: e.user,
                    size: n_users,
                });
            }
            if e.item >= n_items {
                return Err(Error::IndexOutOfRange {
                    kind: "item",
                    index: e.item,
                    size: n_items,
                });
            }
            check_rating(e.rating).map_err(invalid)?;
            if !seen.insert((e.user, e.item)) {
                return Err(Error::DuplicateRating {
                    line: 0,
                    user: e.user as u64 + 1,
                    item: e.item as u64 + 1,
                });
            }
        }
        Ok(Self::assemble(n_users, n_items, entries, ids))
    }

    fn assemble(n_users: usize, n_items: usize, entries: Vec<Entry>, ids: Arc<IdMap>) -> Self {
        let mut by_user = vec![Vec::new(); n_users];
        let mut by_item = vec![Vec::new(); n_items];
        for e in &entries {
            by_user[e.user].push((e.item, e.rating));
            by_item[e.item].push((e.user, e.rating));
        }
        SparseRatings {
            n_users,
            n_items,
            entries,
            by_user,
            by_item,
            ids,
        }
    }

    /// A rating set over the same matrix shape and id tables, holding only
    /// the entries at `indices` (positions into `self.entries()`).
    fn subset(&self, indices: &[usize]) -> Self {
        let entries = indices.iter().map(|&i| self.entries[i]).collect();
        Self::assemble(self.n_users, self.n_items, entries, Arc::clone(&self.ids))
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of observed ratings, |κ|.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Items rated by `user` with their ratings (κ_i).
    pub fn user_ratings(&self, user: usize) -> &[(usize, f64)] {
        &self.by_user[user]
    }

    /// Users who rated `item` with their ratings (κ_j).
    pub fn item_ratings(&self, item: usize) -> &[(usize, f64)] {
        &self.by_item[item]
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    /// Entries with the original file ids.
    pub fn triples(&self) -> impl Iterator<Item = RatingTriple> + '_ {
        self.entries.iter().map(|e| RatingTriple {
            user: self.ids.user_id(e.user),
            item: self.ids.item_id(e.item),
            rating: e.rating,
        })
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else {
            Some(self.entries.iter().map(|e| e.rating).sum::<f64>() / self.len() as f64)
        }
    }
}

fn check_rating(r: f64) -> std::result::Result<(), String> {
    if r.is_finite() && (MIN_RATING..=MAX_RATING).contains(&r) {
        Ok(())
    } else {
        Err(format!("rating {r} outside [{MIN_RATING}, {MAX_RATING}]"))
    }
}

/// Parses MovieLens `u.data` text: one `user<TAB>item<TAB>rating<TAB>timestamp`
/// record per line. The timestamp column may be absent and is ignored.
/// Blank lines are skipped; CRLF endings are accepted.
///
/// Dense indices are assigned in ascending order of file id.
pub fn parse_movielens<R: BufRead>(reader: R) -> Result<SparseRatings> {
    let mut raw: Vec<RatingTriple> = Vec::new();
    let mut seen: HashSet<(u64, u64)> = HashSet::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 tab-separated fields, found {}", fields.len()),
            });
        }
        let parse_id = |s: &str, what: &str| -> Result<u64> {
            match s.trim().parse::<u64>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::Parse {
                    line: lineno,
                    message: format!("invalid {what} id {s:?}"),
                }),
            }
        };
        let user = parse_id(fields[0], "user")?;
        let item = parse_id(fields[1], "item")?;
        let rating: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid rating {:?}", fields[2]),
        })?;
        check_rating(rating).map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?;
        if !seen.insert((user, item)) {
            return Err(Error::DuplicateRating {
                line: lineno,
                user,
                item,
            });
        }
        raw.push(RatingTriple { user, item, rating });
    }

    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut user_ids: Vec<u64> = raw.iter().map(|t| t.user).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut item_ids: Vec<u64> = raw.iter().map(|t| t.item).collect();
    item_ids.sort_unstable();
    item_ids.dedup();

    let user_index: HashMap<u64, usize> = user_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let item_index: HashMap<u64, usize> = item_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();

    let entries = raw
        .iter()
        .map(|t| Entry {
            user: user_index[&t.user],
            item: item_index[&t.item],
            rating: t.rating,
        })
        .collect();

    let (n_users, n_items) = (user_ids.len(), item_ids.len());
    let ids = Arc::new(IdMap { user_ids, item_ids });
    Ok(SparseRatings::assemble(n_users, n_items, entries, ids))
}

/// Reads and parses a MovieLens file from disk.
pub fn load_movielens(path: impl AsRef<std::path::Path>) -> Result<SparseRatings> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_movielens(std::io::BufReader::new(file))
}

/// Writes `ratings` in MovieLens format using the original ids and a zero
/// timestamp. Ratings are printed in shortest round-trip form, so
/// [`parse_movielens`] reads back identical values.
pub fn write_movielens<W: std::io::Write>(ratings: &SparseRatings, mut out: W) -> Result<()> {
    for t in ratings.triples() {
        writeln!(out, "{}\t{}\t{}\t0", t.user, t.item, t.rating)?;
    }
    out.flush()?;
    Ok(())
}

/// A train/test partition of one rating set.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: SparseRatings,
    pub test: SparseRatings,
    pub seed: u64,
    pub fraction: f64,
}

/// Number of training entries for a split of `len` entries: ⌈fraction·len⌉,
/// with products within 1e-9 of an integer taken as that integer.
pub fn train_size(len: usize, fraction: f64) -> usize {
    let x = fraction * len as f64;
    let nearest = x.round();
    let size = if (x - nearest).abs() < 1e-9 {
        nearest
    } else {
        x.ceil()
    };
    (size as usize).min(len)
}

/// Shuffled entry positions used by [`split`].
///
/// Fisher-Yates from the back over `0..len`, driven by `ChaCha8Rng` seeded
/// with `seed` via `seed_from_u64`: for `i = len-1 .. 1`, draw one `u64` `r`
/// and swap positions `i` and `r % (i + 1)`.
pub fn shuffled_positions(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..len).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Uniformly random partition: the first [`train_size`] positions of
/// [`shuffled_positions`] go to training, the rest to test. Both halves
/// keep the original entry order.
pub fn split(ratings: &SparseRatings, fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("split fraction {fraction} not in (0, 1]")));
    }
    let order = shuffled_positions(ratings.len(), seed);
    let cut = train_size(ratings.len(), fraction);
    let mut train_idx = order[..cut].to_vec();
    let mut test_idx = order[cut..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok(DataSplit {
        train: ratings.subset(&train_idx),
        test: ratings.subset(&test_idx),
        seed,
        fraction,
    })
}

/// Root mean squared error of raw (unclipped) predictions over `ratings`.
pub fn rmse(state: &FactorState, ratings: &SparseRatings) -> Result<f64> {
    if ratings.is_empty() {
        return Err(Error::UndefinedMetric("rmse"));
    }
    state.check_covers(ratings)?;
    Ok((state.squared_error(ratings) / ratings.len() as f64).sqrt())
}
