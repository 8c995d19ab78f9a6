//! Purchase events, train/valid/test splitting and observation windows.
//!
//! Events are expected sorted by `(user, time)` with ties kept in file order;
//! the position inside that sorted stream orders items bought in the same
//! order.

use alloc::vec::Vec;

use thiserror::Error;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// One purchased item after id interning.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub user: u32,
    /// Interned order id, unique across users.
    pub order: u32,
    /// Epoch seconds or per-user order ordinal, depending on the corpus.
    pub time: i64,
    pub item: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Per user: last order is test, second-last is validation, rest is train.
    LastOrder,
    /// `time < train_end` is train, `time < valid_end` is validation, the rest test.
    TimeCutoff { train_end: i64, valid_end: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceMode {
    /// Up to `k` most recent prior purchases.
    Window,
    /// Purchases within `d1` days strictly before the target, capped at `k`.
    Days,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub sequence: SequenceMode,
    /// Maximum context length.
    pub k: usize,
    /// Context window in days (`Days` sequences and next-purchase queries).
    pub d1: i64,
    /// Label window in days for next-purchase evaluation.
    pub d2: i64,
    /// Window mode only: whether earlier items of the target's own order may
    /// appear in its context. Day mode always requires strictly earlier time.
    pub intra_order: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            mode: SplitMode::LastOrder,
            sequence: SequenceMode::Window,
            k: 2,
            d1: 3,
            d2: 7,
            intra_order: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitSpecError {
    #[error("train_end ({train_end}) must be smaller than valid_end ({valid_end})")]
    CutoffOrder { train_end: i64, valid_end: i64 },
    #[error("{0} must be at least 1")]
    NonPositive(&'static str),
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), SplitSpecError> {
        if let SplitMode::TimeCutoff {
            train_end,
            valid_end,
        } = self.mode
        {
            if train_end >= valid_end {
                return Err(SplitSpecError::CutoffOrder {
                    train_end,
                    valid_end,
                });
            }
        }
        if self.k < 1 {
            return Err(SplitSpecError::NonPositive("k"));
        }
        if self.d1 < 1 {
            return Err(SplitSpecError::NonPositive("d1"));
        }
        if self.d2 < 1 {
            return Err(SplitSpecError::NonPositive("d2"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<Event>,
    pub valid: Vec<Event>,
    pub test: Vec<Event>,
}

/// Iterates maximal runs of events sharing `key`.
pub fn runs_by<'a, K: PartialEq>(
    events: &'a [Event],
    key: impl Fn(&Event) -> K + 'a,
) -> impl Iterator<Item = &'a [Event]> + 'a {
    let mut rest = events;
    core::iter::from_fn(move || {
        let first = rest.first()?;
        let k = key(first);
        let n = rest.iter().take_while(|e| key(e) == k).count();
        let (run, tail) = rest.split_at(n);
        rest = tail;
        Some(run)
    })
}

/// Partitions a `(user, time)`-sorted event stream.
///
/// In last-order mode users with fewer than three orders keep everything in
/// train.
pub fn split(events: &[Event], spec: &SplitSpec) -> Splits {
    let mut out = Splits::default();
    match spec.mode {
        SplitMode::LastOrder => {
            for user_events in runs_by(events, |e| e.user) {
                let orders: Vec<&[Event]> = runs_by(user_events, |e| e.order).collect();
                let n = orders.len();
                for (i, order) in orders.iter().enumerate() {
                    let dest = if n >= 3 && i == n - 1 {
                        &mut out.test
                    } else if n >= 3 && i == n - 2 {
                        &mut out.valid
                    } else {
                        &mut out.train
                    };
                    dest.extend_from_slice(order);
                }
            }
        }
        SplitMode::TimeCutoff {
            train_end,
            valid_end,
        } => {
            for e in events {
                if e.time < train_end {
                    out.train.push(*e);
                } else if e.time < valid_end {
                    out.valid.push(*e);
                } else {
                    out.test.push(*e);
                }
            }
        }
    }
    out
}

/// Borrowed view of one training example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsView<'a> {
    pub user: u32,
    pub target: u32,
    /// Most recent first.
    pub context: &'a [u32],
}

/// Owned training example, convenient for tests and small inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub user: u32,
    pub target: u32,
    pub context: Vec<u32>,
}

impl Observation {
    pub fn view(&self) -> ObsView<'_> {
        ObsView {
            user: self.user,
            target: self.target,
            context: &self.context,
        }
    }
}

/// Flat storage for many observations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationSet {
    users: Vec<u32>,
    targets: Vec<u32>,
    offsets: Vec<u64>,
    context: Vec<u32>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self {
            users: Vec::new(),
            targets: Vec::new(),
            offsets: alloc::vec![0],
            context: Vec::new(),
        }
    }

    pub fn push(&mut self, user: u32, target: u32, context: &[u32]) {
        assert!(!context.is_empty(), "observation context must be non-empty");
        self.users.push(user);
        self.targets.push(target);
        self.context.extend_from_slice(context);
        self.offsets.push(self.context.len() as u64);
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> ObsView<'_> {
        let lo = self.offsets[i] as usize;
        let hi = self.offsets[i + 1] as usize;
        ObsView {
            user: self.users[i],
            target: self.targets[i],
            context: &self.context[lo..hi],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ObsView<'_>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// How often each item is the target of an observation.
    pub fn target_counts(&self, n_items: usize) -> Vec<u64> {
        let mut c = alloc::vec![0u64; n_items];
        for &t in &self.targets {
            c[t as usize] += 1;
        }
        c
    }

    /// Raw parts `(users, targets, offsets, context)` for serialization.
    pub fn parts(&self) -> (&[u32], &[u32], &[u64], &[u32]) {
        (&self.users, &self.targets, &self.offsets, &self.context)
    }

    pub fn from_parts(users: Vec<u32>, targets: Vec<u32>, offsets: Vec<u64>, context: Vec<u32>) -> Option<Self> {
        if users.len() != targets.len() || offsets.len() != users.len() + 1 || offsets[0] != 0 {
            return None;
        }
        if offsets.windows(2).any(|w| w[0] >= w[1]) || *offsets.last()? as usize != context.len() {
            return None;
        }
        Some(Self {
            users,
            targets,
            offsets,
            context,
        })
    }
}

impl Default for ObservationSet {
    fn default() -> Self {
        Self::new()
    }
}

impl FromIterator<Observation> for ObservationSet {
    fn from_iter<T: IntoIterator<Item = Observation>>(iter: T) -> Self {
        let mut set = ObservationSet::new();
        for o in iter {
            set.push(o.user, o.target, &o.context);
        }
        set
    }
}

/// Materializes training observations from `(user, time)`-sorted train events.
///
/// Purchases whose context would be empty are skipped.
pub fn build_observations(train: &[Event], spec: &SplitSpec) -> ObservationSet {
    let mut out = ObservationSet::new();
    let mut ctx = Vec::with_capacity(spec.k);
    let window = spec.d1.saturating_mul(SECONDS_PER_DAY);
    for user_events in runs_by(train, |e| e.user) {
        for (p, target) in user_events.iter().enumerate() {
            ctx.clear();
            for prior in user_events[..p].iter().rev() {
                if ctx.len() == spec.k {
                    break;
                }
                let eligible = match spec.sequence {
                    SequenceMode::Window => spec.intra_order || prior.time < target.time,
                    SequenceMode::Days => {
                        if prior.time < target.time - window {
                            break;
                        }
                        prior.time < target.time
                    }
                };
                if eligible {
                    ctx.push(prior.item);
                }
            }
            if !ctx.is_empty() {
                out.push(target.user, target.item, &ctx);
            }
        }
    }
    out
}

/// Groups events into baskets (one per order), keeping item order.
pub fn baskets(events: &[Event]) -> Vec<Vec<u32>> {
    runs_by(events, |e| (e.user, e.order))
        .map(|run| run.iter().map(|e| e.item).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ev(user: u32, order: u32, time: i64, item: u32) -> Event {
        Event {
            user,
            order,
            time,
            item,
        }
    }

    fn collect(set: &ObservationSet) -> Vec<Observation> {
        set.iter()
            .map(|o| Observation {
                user: o.user,
                target: o.target,
                context: o.context.to_vec(),
            })
            .collect()
    }

    #[test]
    fn last_order_split_three_orders() {
        let events = [ev(0, 0, 1, 10), ev(0, 1, 2, 11), ev(0, 2, 3, 12)];
        let s = split(&events, &SplitSpec::default());
        assert_eq!(s.train, vec![events[0]]);
        assert_eq!(s.valid, vec![events[1]]);
        assert_eq!(s.test, vec![events[2]]);
    }

    #[test]
    fn last_order_split_single_order_user_goes_to_train() {
        let events = [ev(0, 0, 1, 10), ev(0, 0, 1, 11)];
        let s = split(&events, &SplitSpec::default());
        assert_eq!(s.train.len(), 2);
        assert!(s.valid.is_empty() && s.test.is_empty());
    }

    #[test]
    fn time_cutoff_split() {
        let spec = SplitSpec {
            mode: SplitMode::TimeCutoff {
                train_end: 100,
                valid_end: 200,
            },
            ..SplitSpec::default()
        };
        let events = [ev(0, 0, 50, 1), ev(0, 1, 150, 2), ev(0, 2, 250, 3)];
        let s = split(&events, &spec);
        assert_eq!(s.train, vec![events[0]]);
        assert_eq!(s.valid, vec![events[1]]);
        assert_eq!(s.test, vec![events[2]]);
    }

    #[test]
    fn window_observations_hand_enumerated() {
        // history [a,b,c,d] = items 0..4, one item per order
        let events: Vec<Event> = (0..4).map(|i| ev(7, i, i as i64, i)).collect();
        let spec = SplitSpec {
            k: 2,
            ..SplitSpec::default()
        };
        let obs = collect(&build_observations(&events, &spec));
        assert_eq!(
            obs,
            vec![
                Observation { user: 7, target: 1, context: vec![0] },
                Observation { user: 7, target: 2, context: vec![1, 0] },
                Observation { user: 7, target: 3, context: vec![2, 1] },
            ]
        );
    }

    #[test]
    fn single_purchase_yields_nothing() {
        let events = [ev(0, 0, 0, 5)];
        assert!(build_observations(&events, &SplitSpec::default()).is_empty());
    }

    #[test]
    fn day_window_excludes_old_purchases() {
        let d = SECONDS_PER_DAY;
        let events = [ev(0, 0, 0, 1), ev(0, 1, d, 2), ev(0, 2, 5 * d, 3)];
        let spec = SplitSpec {
            sequence: SequenceMode::Days,
            d1: 3,
            k: 50,
            ..SplitSpec::default()
        };
        let obs = collect(&build_observations(&events, &spec));
        assert_eq!(obs, vec![Observation { user: 0, target: 2, context: vec![1] }]);
    }

    #[test]
    fn day_mode_never_uses_same_order_items() {
        let events = [ev(0, 0, 10, 1), ev(0, 0, 10, 2)];
        let spec = SplitSpec {
            sequence: SequenceMode::Days,
            ..SplitSpec::default()
        };
        assert!(build_observations(&events, &spec).is_empty());
    }

    #[test]
    fn intra_order_flag_controls_window_mode() {
        let events = [ev(0, 0, 1, 1), ev(0, 1, 2, 2), ev(0, 1, 2, 3)];
        let with = collect(&build_observations(&events, &SplitSpec::default()));
        assert_eq!(with[1].context, vec![2, 1]);
        let spec = SplitSpec {
            intra_order: false,
            ..SplitSpec::default()
        };
        let without = collect(&build_observations(&events, &spec));
        assert_eq!(without.len(), 2);
        assert_eq!(without[1], Observation { user: 0, target: 3, context: vec![1] });
    }

    #[test]
    fn duplicates_are_kept_in_context() {
        let events = [ev(0, 0, 1, 4), ev(0, 1, 2, 4), ev(0, 2, 3, 5)];
        let obs = collect(&build_observations(&events, &SplitSpec::default()));
        assert_eq!(obs[1].context, vec![4, 4]);
    }

    #[test]
    fn spec_validation() {
        let bad = SplitSpec {
            mode: SplitMode::TimeCutoff {
                train_end: 5,
                valid_end: 5,
            },
            ..SplitSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(SplitSpec { k: 0, ..SplitSpec::default() }.validate().is_err());
        assert!(SplitSpec::default().validate().is_ok());
    }

    #[test]
    fn baskets_group_by_order() {
        let events = [ev(0, 0, 1, 1), ev(0, 0, 1, 2), ev(0, 1, 2, 3), ev(1, 2, 1, 4)];
        assert_eq!(baskets(&events), vec![vec![1, 2], vec![3], vec![4]]);
    }
}
