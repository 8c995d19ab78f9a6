//! Reading order logs and context files into a vocabulary and event stream.
//!
//! Orders file: `user_id<TAB>order_id<TAB>time<TAB>item_id`.
//! Context files: `id<TAB>token token ...`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use dualcart_core::corpus::SECONDS_PER_DAY;
use dualcart_core::{Event, Interner, TokenLists, Vocabulary};
use thiserror::Error;

pub const DEFAULT_MIN_TRANSACTIONS: u64 = 10;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("no events left after dropping items with fewer than {min_transactions} transactions")]
    Empty { min_transactions: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeKind {
    Seconds,
    /// Per-user order ordinals; one ordinal step counts as one day.
    Ordinal,
}

impl std::str::FromStr for TimeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "seconds" => Ok(Self::Seconds),
            "ordinal" => Ok(Self::Ordinal),
            _ => Err(format!("time_kind must be seconds or ordinal, got {s:?}")),
        }
    }
}

impl std::fmt::Display for TimeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Seconds => "seconds",
            Self::Ordinal => "ordinal",
        })
    }
}

/// One parsed order line, with ids interned in [`RawLog`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub user: u32,
    pub order: u32,
    pub time: i64,
    pub item: u32,
}

/// Parsed order log before filtering.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawLog {
    pub users: Interner,
    pub orders: Interner,
    pub items: Interner,
    pub records: Vec<RawRecord>,
}

impl RawLog {
    pub fn push(&mut self, user: &str, order: &str, time: i64, item: &str) {
        let rec = RawRecord {
            user: self.users.intern(user),
            order: self.orders.intern(order),
            time,
            item: self.items.intern(item),
        };
        self.records.push(rec);
    }
}

/// Everything read from the input files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    /// Sorted by `(user, time)`; file order within equal times.
    pub events: Vec<Event>,
    /// Order id strings, indexed by `Event::order`.
    pub order_names: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String, IngestError>)>, IngestError> {
    let reader = open(path)?;
    let p = path.to_path_buf();
    Ok(reader.lines().enumerate().map(move |(i, l)| {
        (
            i + 1,
            l.map_err(|source| IngestError::Io {
                path: p.clone(),
                source,
            }),
        )
    }))
}

pub fn read_orders(path: &Path, time_kind: TimeKind) -> Result<RawLog, IngestError> {
    let mut log = RawLog::default();
    for (line, text) in lines(path)? {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let err = |msg: String| IngestError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let f: Vec<&str> = text.split('\t').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", f.len())));
        }
        if let Some(pos) = f.iter().position(|s| s.is_empty()) {
            return Err(err(format!("field {} is empty", pos + 1)));
        }
        let raw: i64 = f[2].parse().map_err(|_| err(format!("time {:?} is not an integer", f[2])))?;
        let time = match time_kind {
            TimeKind::Seconds => raw,
            TimeKind::Ordinal => raw
                .checked_mul(SECONDS_PER_DAY)
                .ok_or_else(|| err(format!("ordinal {raw} is out of range")))?,
        };
        log.push(f[0], f[1], time, f[3]);
    }
    Ok(log)
}

/// `id -> tokens`, keeping file order of ids. Later lines for the same id
/// extend its token list.
pub fn read_context(path: &Path) -> Result<Vec<(String, Vec<String>)>, IngestError> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, text) in lines(path)? {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let (id, rest) = match text.split_once('\t') {
            Some((id, rest)) => (id.trim(), rest),
            None => (text.trim(), ""),
        };
        if id.is_empty() {
            return Err(IngestError::Parse {
                path: path.to_path_buf(),
                line,
                msg: "empty id".into(),
            });
        }
        let tokens: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        match seen.get(id) {
            Some(&i) => out[i].1.extend(tokens),
            None => {
                seen.insert(id.to_string(), out.len());
                out.push((id.to_string(), tokens));
            }
        }
    }
    Ok(out)
}

/// Dense re-indexing by first appearance.
struct Remap {
    map: Vec<u32>,
    names: Vec<String>,
    counts: Vec<u64>,
}

impl Remap {
    fn new(n: usize) -> Self {
        Self {
            map: vec![u32::MAX; n],
            names: Vec::new(),
            counts: Vec::new(),
        }
    }

    fn get(&mut self, old: u32, source: &Interner) -> u32 {
        let slot = &mut self.map[old as usize];
        if *slot == u32::MAX {
            *slot = self.names.len() as u32;
            self.names.push(source.name(old).to_string());
            self.counts.push(0);
        }
        self.counts[*slot as usize] += 1;
        *slot
    }

    fn interner(self) -> Interner {
        Interner::from_parts(self.names, self.counts)
    }
}

/// Drops items bought in fewer than `min_transactions` distinct orders and
/// builds the vocabulary and sorted event stream. Users and items are
/// indexed by first appearance among the surviving events.
pub fn build_corpus(
    log: &RawLog,
    item_context: &[(String, Vec<String>)],
    user_context: &[(String, Vec<String>)],
    min_transactions: u64,
) -> Result<Corpus, IngestError> {
    let mut pairs: Vec<(u32, u32)> = log.records.iter().map(|r| (r.item, r.order)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut orders_per_item = vec![0u64; log.items.len()];
    for (item, _) in pairs {
        orders_per_item[item as usize] += 1;
    }

    let mut users = Remap::new(log.users.len());
    let mut items = Remap::new(log.items.len());
    let mut orders = Remap::new(log.orders.len());
    let mut indexed: Vec<(usize, Event)> = Vec::new();
    for (pos, r) in log.records.iter().enumerate() {
        if orders_per_item[r.item as usize] < min_transactions {
            continue;
        }
        indexed.push((
            pos,
            Event {
                user: users.get(r.user, &log.users),
                order: orders.get(r.order, &log.orders),
                time: r.time,
                item: items.get(r.item, &log.items),
            },
        ));
    }
    if indexed.is_empty() {
        return Err(IngestError::Empty { min_transactions });
    }
    indexed.sort_by_key(|(pos, e)| (e.user, e.time, *pos));
    let events = indexed.into_iter().map(|(_, e)| e).collect();
    let users = users.interner();
    let items = items.interner();

    let mut item_tokens = Interner::new();
    let item_context = token_lists(&items, item_context, &mut item_tokens);
    let mut user_tokens = Interner::new();
    let user_context = token_lists(&users, user_context, &mut user_tokens);
    Ok(Corpus {
        vocab: Vocabulary {
            users,
            items,
            item_tokens,
            user_tokens,
            item_context,
            user_context,
        },
        events,
        order_names: orders.names,
    })
}

fn token_lists(ids: &Interner, context: &[(String, Vec<String>)], tokens: &mut Interner) -> TokenLists {
    let mut lists: Vec<Vec<u32>> = vec![Vec::new(); ids.len()];
    for (id, toks) in context {
        if let Some(i) = ids.get(id) {
            for t in toks {
                lists[i as usize].push(tokens.add(t, 1));
            }
        }
    }
    TokenLists::from_lists(lists)
}

/// Reads and filters all input files.
pub fn ingest(
    orders: &Path,
    item_context: Option<&Path>,
    user_context: Option<&Path>,
    time_kind: TimeKind,
    min_transactions: u64,
) -> Result<Corpus, IngestError> {
    let log = read_orders(orders, time_kind)?;
    let ic = match item_context {
        Some(p) => read_context(p)?,
        None => Vec::new(),
    };
    let uc = match user_context {
        Some(p) => read_context(p)?,
        None => Vec::new(),
    };
    build_corpus(&log, &ic, &uc, min_transactions)
}
