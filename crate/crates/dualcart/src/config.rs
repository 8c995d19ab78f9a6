//! Run configuration: flat `key = value` files with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dualcart_core::coldstart::ColdStartParams;
use dualcart_core::corpus::{SequenceMode, SplitMode, SplitSpec};
use dualcart_core::eval::RankMode;
use dualcart_core::{ItemUserTable, TrainConfig, WithinBasketConfig};
use thiserror::Error;

use crate::bin_io::fnv1a;
use crate::ingest::TimeKind;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}:{line}: expected `key = value`")]
    Syntax { origin: String, line: usize },
    #[error("unknown config key {key:?} ({origin})")]
    UnknownKey { key: String, origin: String },
    #[error("bad value for {key}: {msg}")]
    Value { key: String, msg: String },
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, String),
}

/// Every key with its default, in frozen-file order. Keys before
/// `MODEL_KEYS_END` determine the trained model.
const KEYS: &[(&str, &str)] = &[
    ("orders", ""),
    ("item_context", ""),
    ("user_context", ""),
    ("time_kind", "seconds"),
    ("min_transactions", "10"),
    ("split", "last_order"),
    ("train_end", "0"),
    ("valid_end", "0"),
    ("sequence", "window"),
    ("k", "2"),
    ("d1", "3"),
    ("d2", "7"),
    ("intra_order", "true"),
    ("epochs", "30"),
    ("learning_rate", "0.025"),
    ("negatives", "5"),
    ("threads", "1"),
    ("seed", "1"),
    ("dim", "32"),
    ("user_dim", "32"),
    ("item_user_table", "tied"),
    ("use_user_bias", "true"),
    ("use_item_context", "true"),
    ("use_user_context", "true"),
    ("neg_sample_floor", "1e-5"),
    // evaluation and inference
    ("eval_negatives", "100"),
    ("eval_seed", "7"),
    ("eval_ks", "5,10"),
    ("rank_mode", "complement"),
    ("recall_pool", "100"),
    ("labels", ""),
    ("coldstart_steps", "200"),
    ("coldstart_step_size", "0.05"),
    ("coldstart_norm_cap", "auto"),
    ("coldstart_negatives", "5"),
];
const MODEL_KEYS_END: usize = 25;
/// Keys before this one shape the prepared corpus.
const CORPUS_KEYS_END: usize = 13;
const PATH_KEYS: &[&str] = &["orders", "item_context", "user_context", "labels"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        msg: format!("{v:?}: {e}"),
    })
}

impl RunConfig {
    pub fn known_keys() -> impl Iterator<Item = &'static str> {
        KEYS.iter().map(|(k, _)| *k)
    }

    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey {
                key: key.into(),
                origin: origin.into(),
            }),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str, origin: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or(ConfigError::Syntax {
            origin: origin.into(),
            line: 1,
        })?;
        self.set(k.trim(), v, origin)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
                origin: origin.into(),
                line: i + 1,
            })?;
            self.set(k.trim(), v, &format!("{origin}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.into(), e.to_string()))?;
        let mut c = Self::default();
        c.apply_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Relative paths in the config resolve against `base`.
    pub fn path(&self, key: &str, base: &Path) -> Option<PathBuf> {
        let v = self.get(key);
        if v.is_empty() {
            None
        } else {
            let p = PathBuf::from(v);
            Some(if p.is_absolute() { p } else { base.join(p) })
        }
    }

    /// Every key in canonical order; the stored file reproduces the run.
    pub fn frozen(&self) -> String {
        let mut s = String::new();
        for (k, _) in KEYS {
            s.push_str(&format!("{k} = {}\n", self.get(k)));
        }
        s
    }

    fn hash_keys(&self, keys: &[(&str, &str)]) -> u64 {
        let mut s = String::new();
        for (k, _) in keys {
            s.push_str(&format!("{k}={}\n", self.get(k)));
        }
        fnv1a(s.as_bytes())
    }

    /// Hash over the keys that shape the trained model.
    pub fn model_hash(&self) -> u64 {
        self.hash_keys(&KEYS[..MODEL_KEYS_END])
    }

    /// Hash over the input and split keys.
    pub fn corpus_hash(&self) -> u64 {
        self.hash_keys(&KEYS[..CORPUS_KEYS_END])
    }

    /// Rewrites relative input paths as `base.join(path)`.
    pub fn absolutize(&mut self, base: &Path) {
        for k in PATH_KEYS {
            if let Some(p) = self.path(k, base) {
                self.values.insert(k.to_string(), p.display().to_string());
            }
        }
    }

    fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        parse(key, self.get(key))
    }

    pub fn time_kind(&self) -> Result<TimeKind, ConfigError> {
        self.get("time_kind").parse().map_err(|msg| ConfigError::Value {
            key: "time_kind".into(),
            msg,
        })
    }

    pub fn min_transactions(&self) -> Result<u64, ConfigError> {
        parse("min_transactions", self.get("min_transactions"))
    }

    pub fn split_spec(&self) -> Result<SplitSpec, ConfigError> {
        let mode = match self.get("split") {
            "last_order" => SplitMode::LastOrder,
            "time_cutoff" => SplitMode::TimeCutoff {
                train_end: parse("train_end", self.get("train_end"))?,
                valid_end: parse("valid_end", self.get("valid_end"))?,
            },
            other => {
                return Err(ConfigError::Value {
                    key: "split".into(),
                    msg: format!("{other:?} is not last_order or time_cutoff"),
                })
            }
        };
        let sequence = match self.get("sequence") {
            "window" => SequenceMode::Window,
            "days" => SequenceMode::Days,
            other => {
                return Err(ConfigError::Value {
                    key: "sequence".into(),
                    msg: format!("{other:?} is not window or days"),
                })
            }
        };
        let spec = SplitSpec {
            mode,
            sequence,
            k: parse("k", self.get("k"))?,
            d1: parse("d1", self.get("d1"))?,
            d2: parse("d2", self.get("d2"))?,
            intra_order: self.bool("intra_order")?,
        };
        spec.validate().map_err(|e| ConfigError::Value {
            key: "split".into(),
            msg: e.to_string(),
        })?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let item_user = match self.get("item_user_table") {
            "tied" => ItemUserTable::Tied,
            "separate" => ItemUserTable::Separate,
            other => {
                return Err(ConfigError::Value {
                    key: "item_user_table".into(),
                    msg: format!("{other:?} is not tied or separate"),
                })
            }
        };
        let cfg = TrainConfig {
            epochs: parse("epochs", self.get("epochs"))?,
            learning_rate: parse("learning_rate", self.get("learning_rate"))?,
            negatives: parse("negatives", self.get("negatives"))?,
            threads: parse("threads", self.get("threads"))?,
            seed: parse("seed", self.get("seed"))?,
            dim: parse("dim", self.get("dim"))?,
            user_dim: parse("user_dim", self.get("user_dim"))?,
            item_user,
            use_user_bias: self.bool("use_user_bias")?,
            use_item_context: self.bool("use_item_context")?,
            use_user_context: self.bool("use_user_context")?,
            neg_sample_floor: parse("neg_sample_floor", self.get("neg_sample_floor"))?,
        };
        cfg.validate().map_err(|e| ConfigError::Value {
            key: "train".into(),
            msg: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn within_basket(&self) -> Result<WithinBasketConfig, ConfigError> {
        Ok(WithinBasketConfig {
            negatives: parse("eval_negatives", self.get("eval_negatives"))?,
            seed: parse("eval_seed", self.get("eval_seed"))?,
        })
    }

    pub fn eval_ks(&self) -> Result<Vec<usize>, ConfigError> {
        let ks: Vec<usize> = self
            .get("eval_ks")
            .split(',')
            .map(|s| parse("eval_ks", s.trim()))
            .collect::<Result<_, _>>()?;
        if ks.iter().any(|&k| k == 0) {
            return Err(ConfigError::Value {
                key: "eval_ks".into(),
                msg: "every K must be >= 1".into(),
            });
        }
        Ok(ks)
    }

    pub fn rank_mode(&self) -> Result<RankMode, ConfigError> {
        parse_rank_mode(self.get("rank_mode"), parse("recall_pool", self.get("recall_pool"))?)
    }

    pub fn coldstart(&self) -> Result<ColdStartParams, ConfigError> {
        let cap = match self.get("coldstart_norm_cap") {
            "auto" => None,
            v => Some(parse("coldstart_norm_cap", v)?),
        };
        Ok(ColdStartParams {
            steps: parse("coldstart_steps", self.get("coldstart_steps"))?,
            step_size: parse("coldstart_step_size", self.get("coldstart_step_size"))?,
            norm_cap: cap,
            negatives: parse("coldstart_negatives", self.get("coldstart_negatives"))?,
        })
    }
}

pub fn parse_rank_mode(mode: &str, pool: usize) -> Result<RankMode, ConfigError> {
    match mode {
        "complement" => Ok(RankMode::Complement),
        "user" => Ok(RankMode::User),
        "two-stage" | "two_stage" => Ok(RankMode::TwoStage { pool }),
        other => Err(ConfigError::Value {
            key: "rank_mode".into(),
            msg: format!("{other:?} is not complement, user or two-stage"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = RunConfig::default();
        assert_eq!(c.train_config().unwrap(), TrainConfig::default());
        assert_eq!(c.split_spec().unwrap(), SplitSpec::default());
        assert_eq!(c.eval_ks().unwrap(), vec![5, 10]);
        assert_eq!(KEYS[MODEL_KEYS_END - 1].0, "neg_sample_floor");
    }

    #[test]
    fn file_syntax_and_unknown_keys() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\n dim = 8 # trailing\n\nepochs=3\n", "t").unwrap();
        assert_eq!(c.get("dim"), "8");
        assert_eq!(c.get("epochs"), "3");
        assert!(matches!(c.apply_text("bogus = 1", "t"), Err(ConfigError::UnknownKey { .. })));
        assert!(matches!(c.apply_text("novalue", "t"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn frozen_round_trips_and_hash_tracks_model_keys() {
        let mut c = RunConfig::default();
        c.set("k", "3", "t").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.frozen(), "frozen").unwrap();
        assert_eq!(c, d);
        let h = c.model_hash();
        c.set("eval_negatives", "50", "t").unwrap();
        assert_eq!(c.model_hash(), h);
        c.set("use_user_bias", "false", "t").unwrap();
        assert_ne!(c.model_hash(), h);
    }

    #[test]
    fn corpus_hash_ignores_training_keys_and_paths_resolve() {
        let mut c = RunConfig::default();
        let h = c.corpus_hash();
        c.set("epochs", "2", "t").unwrap();
        assert_eq!(c.corpus_hash(), h);
        c.set("orders", "data/o.tsv", "t").unwrap();
        assert_ne!(c.corpus_hash(), h);
        c.absolutize(Path::new("/base"));
        assert_eq!(c.get("orders"), "/base/data/o.tsv");
        assert_eq!(c.get("user_context"), "");
        c.absolutize(Path::new("/other"));
        assert_eq!(c.get("orders"), "/base/data/o.tsv");
    }

    #[test]
    fn bad_values() {
        let mut c = RunConfig::default();
        c.set("epochs", "0", "t").unwrap();
        assert!(c.train_config().is_err());
        c.set("epochs", "x", "t").unwrap();
        assert!(c.train_config().is_err());
        let mut c = RunConfig::default();
        c.set("split", "time_cutoff", "t").unwrap();
        c.set("train_end", "200", "t").unwrap();
        c.set("valid_end", "100", "t").unwrap();
        assert!(c.split_spec().is_err());
    }
}
