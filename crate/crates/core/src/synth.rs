//! Synthetic purchase corpora with planted complement structure.
//!
//! Items fall into three disjoint roles: sources, targets and fillers. Every
//! planted pair `a -> b` makes `b` follow `a` with probability `strength`;
//! every combo `(a, c) -> d` emits the chain `a c d`. Orders are made of short
//! chains, and noise chains are single filler items.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Event, SECONDS_PER_DAY};
use crate::vocab::{Interner, TokenLists, Vocabulary};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_items: usize,
    pub n_users: usize,
    pub n_pairs: usize,
    pub n_combos: usize,
    /// Probability that a chain starting at a source continues with its target.
    pub strength: f64,
    /// Probability that a chain is a single filler item.
    pub noise_rate: f64,
    /// Probability that a chain starting at a combo's first source is the combo.
    pub combo_rate: f64,
    /// Also plant `b -> a` for every pair.
    pub reciprocal: bool,
    pub min_orders: usize,
    pub max_orders: usize,
    pub max_chains: usize,
    pub n_categories: usize,
    pub n_brands: usize,
    /// Items per product line; items of one line share a line token.
    pub line_size: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_items: 500,
            n_users: 2000,
            n_pairs: 100,
            n_combos: 20,
            strength: 0.9,
            noise_rate: 0.2,
            combo_rate: 0.25,
            reciprocal: false,
            min_orders: 4,
            max_orders: 12,
            max_chains: 3,
            n_categories: 20,
            n_brands: 40,
            line_size: 4,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SynthSpecError {
    TooManyPlanted { needed: usize, items: usize },
    CombosNeedPairs,
    BadProbability(&'static str),
    Empty(&'static str),
}

impl core::fmt::Display for SynthSpecError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::TooManyPlanted { needed, items } => {
                write!(f, "planted structure needs {needed} items plus fillers but only {items} exist")
            }
            Self::CombosNeedPairs => write!(f, "each combo needs two planted pairs"),
            Self::BadProbability(n) => write!(f, "{n} must lie in [0, 1]"),
            Self::Empty(n) => write!(f, "{n} must be at least 1"),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthSpecError> {
        for (name, p) in [
            ("strength", self.strength),
            ("noise_rate", self.noise_rate),
            ("combo_rate", self.combo_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthSpecError::BadProbability(name));
            }
        }
        if 2 * self.n_combos > self.n_pairs {
            return Err(SynthSpecError::CombosNeedPairs);
        }
        let needed = 2 * self.n_pairs + self.n_combos;
        if needed >= self.n_items {
            return Err(SynthSpecError::TooManyPlanted {
                needed,
                items: self.n_items,
            });
        }
        for (name, v) in [
            ("n_users", self.n_users),
            ("min_orders", self.min_orders),
            ("max_chains", self.max_chains),
            ("n_categories", self.n_categories),
            ("n_brands", self.n_brands),
            ("line_size", self.line_size),
        ] {
            if v == 0 {
                return Err(SynthSpecError::Empty(name));
            }
        }
        if self.max_orders < self.min_orders {
            return Err(SynthSpecError::Empty("max_orders - min_orders + 1"));
        }
        Ok(())
    }
}

/// A generated corpus in index space. Item `i` is named `i{i}`, user `u` is
/// `u{u}`, order `o` is `o{o}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub n_items: usize,
    pub n_users: usize,
    /// Sorted by `(user, time)`, file order within an order.
    pub events: Vec<Event>,
    pub item_tokens: Vec<Vec<String>>,
    pub pairs: Vec<(u32, u32)>,
    /// `(a, c, d)`: the chain `a c` is completed by `d`.
    pub combos: Vec<(u32, u32, u32)>,
    pub fillers: Vec<u32>,
}

impl SynthCorpus {
    /// Index-space vocabulary matching `events`; counts are purchase counts.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut items = Interner::from_parts(
            (0..self.n_items).map(|i| alloc::format!("i{i}")).collect(),
            alloc::vec![0; self.n_items],
        );
        let mut users = Interner::from_parts(
            (0..self.n_users).map(|u| alloc::format!("u{u}")).collect(),
            alloc::vec![0; self.n_users],
        );
        for e in &self.events {
            items.add(&alloc::format!("i{}", e.item), 1);
            users.add(&alloc::format!("u{}", e.user), 1);
        }
        let mut item_tokens = Interner::new();
        let lists: Vec<Vec<u32>> = self
            .item_tokens
            .iter()
            .map(|ts| ts.iter().map(|t| item_tokens.add(t, 1)).collect())
            .collect();
        Vocabulary {
            users,
            items,
            item_tokens,
            user_tokens: Interner::new(),
            item_context: TokenLists::from_lists(lists),
            user_context: TokenLists::empty(self.n_users),
        }
    }

    pub fn target_of(&self, source: u32) -> Option<u32> {
        self.pairs.iter().find(|p| p.0 == source).map(|p| p.1)
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus, SynthSpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ids: Vec<u32> = (0..spec.n_items as u32).collect();
    ids.shuffle(&mut rng);
    let sources = ids[..spec.n_pairs].to_vec();
    let targets = ids[spec.n_pairs..2 * spec.n_pairs].to_vec();
    let combo_targets = ids[2 * spec.n_pairs..2 * spec.n_pairs + spec.n_combos].to_vec();
    let mut fillers = ids[2 * spec.n_pairs + spec.n_combos..].to_vec();
    fillers.sort_unstable();
    let pairs: Vec<(u32, u32)> = sources.iter().copied().zip(targets.iter().copied()).collect();
    // combo m joins sources 2m and 2m+1
    let combos: Vec<(u32, u32, u32)> = (0..spec.n_combos)
        .map(|m| (sources[2 * m], sources[2 * m + 1], combo_targets[m]))
        .collect();

    let mut role = alloc::vec![Role::Filler; spec.n_items];
    for (p, &(a, b)) in pairs.iter().enumerate() {
        role[a as usize] = Role::Source(p);
        role[b as usize] = Role::Target;
    }
    for &d in &combo_targets {
        role[d as usize] = Role::Target;
    }
    let mut combo_of = alloc::vec![None; spec.n_items];
    for (m, &(a, _, _)) in combos.iter().enumerate() {
        combo_of[a as usize] = Some(m);
    }

    let category: Vec<usize> = (0..spec.n_items).map(|_| rng.gen_range(0..spec.n_categories)).collect();
    let brand: Vec<usize> = (0..spec.n_items).map(|_| rng.gen_range(0..spec.n_brands)).collect();
    let item_tokens: Vec<Vec<String>> = (0..spec.n_items)
        .map(|i| {
            alloc::vec![
                alloc::format!("cat{}", category[i]),
                alloc::format!("brand{}", brand[i]),
                alloc::format!("line{}", i / spec.line_size),
            ]
        })
        .collect();
    let mut by_category: Vec<Vec<u32>> = alloc::vec![Vec::new(); spec.n_categories];
    for &f in &fillers {
        by_category[category[f as usize]].push(f);
    }
    let starts: Vec<u32> = (0..spec.n_items as u32)
        .filter(|&i| role[i as usize] != Role::Target)
        .collect();

    let mut events = Vec::new();
    let mut order_id = 0u32;
    let mut chain = Vec::with_capacity(3);
    for user in 0..spec.n_users as u32 {
        let preferred = rng.gen_range(0..spec.n_categories);
        let n_orders = rng.gen_range(spec.min_orders..=spec.max_orders);
        let mut day = rng.gen_range(0..30i64);
        for _ in 0..n_orders {
            let time = day * SECONDS_PER_DAY;
            for _ in 0..rng.gen_range(1..=spec.max_chains) {
                chain.clear();
                if rng.gen_bool(spec.noise_rate) {
                    let own = &by_category[preferred];
                    let pick = if !own.is_empty() && rng.gen_bool(0.5) {
                        own[rng.gen_range(0..own.len())]
                    } else {
                        fillers[rng.gen_range(0..fillers.len())]
                    };
                    chain.push(pick);
                } else {
                    let a = starts[rng.gen_range(0..starts.len())];
                    chain.push(a);
                    if let Role::Source(p) = role[a as usize] {
                        match combo_of[a as usize] {
                            Some(m) if rng.gen_bool(spec.combo_rate) => {
                                chain.push(combos[m].1);
                                chain.push(combos[m].2);
                            }
                            _ => {
                                if rng.gen_bool(spec.strength) {
                                    chain.push(pairs[p].1);
                                } else {
                                    chain.push(fillers[rng.gen_range(0..fillers.len())]);
                                }
                            }
                        }
                    }
                }
                if spec.reciprocal && chain.len() == 2 {
                    if let Some(&(a, _)) = pairs.iter().find(|p| p.1 == chain[1]) {
                        if chain[0] == a && rng.gen_bool(0.5) {
                            chain.swap(0, 1);
                        }
                    }
                }
                for &item in &chain {
                    events.push(Event {
                        user,
                        order: order_id,
                        time,
                        item,
                    });
                }
            }
            order_id += 1;
            day += rng.gen_range(1..=7);
        }
    }
    Ok(SynthCorpus {
        n_items: spec.n_items,
        n_users: spec.n_users,
        events,
        item_tokens,
        pairs,
        combos,
        fillers,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Source(usize),
    Target,
    Filler,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn follow_rate(c: &SynthCorpus, a: u32, b: u32) -> (usize, usize) {
        let mut seen = 0;
        let mut followed = 0;
        for w in c.events.windows(2) {
            if w[0].item == a && w[0].order == w[1].order {
                seen += 1;
                followed += (w[1].item == b) as usize;
            }
        }
        (seen, followed)
    }

    #[test]
    fn full_strength_no_noise_always_follows() {
        let spec = SynthSpec {
            n_items: 60,
            n_users: 200,
            n_pairs: 10,
            n_combos: 0,
            strength: 1.0,
            noise_rate: 0.0,
            ..Default::default()
        };
        let c = generate(&spec).unwrap();
        for &(a, b) in &c.pairs {
            let (seen, followed) = follow_rate(&c, a, b);
            assert!(seen > 0);
            assert_eq!(seen, followed);
        }
    }

    #[test]
    fn follow_frequency_matches_strength() {
        let spec = SynthSpec {
            n_items: 8,
            n_users: 40_000,
            n_pairs: 1,
            n_combos: 0,
            strength: 0.7,
            noise_rate: 0.0,
            min_orders: 10,
            max_orders: 10,
            n_categories: 2,
            ..Default::default()
        };
        let c = generate(&spec).unwrap();
        let (a, b) = c.pairs[0];
        let (seen, followed) = follow_rate(&c, a, b);
        assert!(seen > 100_000, "{seen}");
        let rate = followed as f64 / seen as f64;
        assert!((rate - 0.7).abs() < 0.01, "{rate}");
    }

    #[test]
    fn roles_are_disjoint_and_seeded() {
        let spec = SynthSpec::default();
        let c = generate(&spec).unwrap();
        let mut all: Vec<u32> = c.pairs.iter().flat_map(|p| [p.0, p.1]).collect();
        all.extend(c.combos.iter().map(|m| m.2));
        all.extend(&c.fillers);
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), spec.n_items);
        assert_eq!(generate(&spec).unwrap(), c);
        let other = generate(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(other.events, c.events);
    }

    #[test]
    fn events_sorted_by_user_and_time() {
        let c = generate(&SynthSpec { n_users: 50, ..Default::default() }).unwrap();
        assert!(c.events.windows(2).all(|w| (w[0].user, w[0].time) <= (w[1].user, w[1].time)));
        let v = c.vocabulary();
        assert_eq!(v.n_items(), 500);
        assert_eq!(v.item_context.rows(), 500);
    }

    #[test]
    fn invalid_specs() {
        let s = SynthSpec { n_items: 100, n_pairs: 60, ..Default::default() };
        assert!(matches!(s.validate(), Err(SynthSpecError::TooManyPlanted { .. })));
        let s = SynthSpec { strength: 1.5, ..Default::default() };
        assert_eq!(s.validate(), Err(SynthSpecError::BadProbability("strength")));
    }
}
