//! Dense integer ids for users, items and context tokens.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// Maps raw identifiers to dense indices `[0, len)` and keeps a count per entry.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    counts: Vec<u64>,
    index: BTreeMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `name`, inserting it with count 0 if it is new.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&idx) = self.index.get(name) {
            return idx;
        }
        let idx = self.names.len() as u32;
        self.names.push(String::from(name));
        self.counts.push(0);
        self.index.insert(String::from(name), idx);
        idx
    }

    /// Interns `name` and bumps its count by `by`.
    pub fn add(&mut self, name: &str, by: u64) -> u32 {
        let idx = self.intern(name);
        self.counts[idx as usize] += by;
        idx
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: u32) -> &str {
        &self.names[idx as usize]
    }

    pub fn count(&self, idx: u32) -> u64 {
        self.counts[idx as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Rebuilds an interner from parallel name/count lists.
    pub fn from_parts(names: Vec<String>, counts: Vec<u64>) -> Self {
        assert_eq!(names.len(), counts.len());
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Self {
            names,
            counts,
            index,
        }
    }
}

/// Compressed list-of-lists: the token indices carried by each item (or user).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenLists {
    offsets: Vec<usize>,
    tokens: Vec<u32>,
}

impl TokenLists {
    /// `rows` empty lists.
    pub fn empty(rows: usize) -> Self {
        Self {
            offsets: alloc::vec![0; rows + 1],
            tokens: Vec::new(),
        }
    }

    pub fn from_lists<I, L>(lists: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: AsRef<[u32]>,
    {
        let mut offsets = alloc::vec![0];
        let mut tokens = Vec::new();
        for l in lists {
            tokens.extend_from_slice(l.as_ref());
            offsets.push(tokens.len());
        }
        Self { offsets, tokens }
    }

    #[inline]
    pub fn get(&self, row: u32) -> &[u32] {
        let r = row as usize;
        &self.tokens[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> usize {
        self.tokens.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.rows() as u32).map(move |r| self.get(r))
    }
}

/// Every id space of a prepared corpus together with the token lists of
/// items and users.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub users: Interner,
    pub items: Interner,
    pub item_tokens: Interner,
    pub user_tokens: Interner,
    /// Row `i` holds the item-token indices of item `i`.
    pub item_context: TokenLists,
    /// Row `u` holds the user-token indices of user `u`.
    pub user_context: TokenLists,
}

impl Vocabulary {
    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_item_tokens(&self) -> usize {
        self.item_tokens.len()
    }

    pub fn n_user_tokens(&self) -> usize {
        self.user_tokens.len()
    }

    /// Maps token strings to item-token indices, returning the unknown ones
    /// separately.
    pub fn resolve_item_tokens<'a, I>(&self, tokens: I) -> (Vec<u32>, Vec<&'a str>)
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut known = Vec::new();
        let mut unknown = Vec::new();
        for t in tokens {
            match self.item_tokens.get(t) {
                Some(i) => known.push(i),
                None => unknown.push(t),
            }
        }
        (known, unknown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interner_is_dense_and_stable() {
        let mut v = Interner::new();
        assert_eq!(v.add("b", 1), 0);
        assert_eq!(v.add("a", 1), 1);
        assert_eq!(v.add("b", 2), 0);
        assert_eq!(v.count(0), 3);
        assert_eq!(v.name(1), "a");
        assert_eq!(v.get("zz"), None);
        let rebuilt = Interner::from_parts(v.names().to_vec(), v.counts().to_vec());
        assert_eq!(rebuilt, v);
    }

    #[test]
    fn token_lists_round_trip() {
        let t = TokenLists::from_lists([alloc::vec![1u32, 2], alloc::vec![], alloc::vec![0]]);
        assert_eq!(t.rows(), 3);
        assert_eq!(t.get(0), &[1, 2]);
        assert!(t.get(1).is_empty());
        assert_eq!(t.get(2), &[0]);
        assert_eq!(t.total(), 3);
        assert_eq!(TokenLists::empty(4).rows(), 4);
    }
}
