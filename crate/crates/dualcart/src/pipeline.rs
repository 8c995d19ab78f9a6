//! The command pipeline: `prepare`, `train`, `evaluate`, `recommend`,
//! `infer-cold` and `synth`. Every command reads and writes fixed file names
//! under one output directory.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use dualcart_core::coldstart::{self, NegativeSource};
use dualcart_core::corpus::SplitMode;
use dualcart_core::eval::{next_purchase_queries, RankMode};
use dualcart_core::probe::{classification_probe, ProbeConfig};
use dualcart_core::rank::{rank_by_complement, rank_with_user, recall_rerank};
use dualcart_core::synth::{self, SynthSpec};
use dualcart_core::{build_observations, split, EmbeddingStore, EvalReport, Query, SamplingTable, Vocabulary};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bin_io::{Fnv1a, HashingWriter};
use crate::cache::{self, Prepared};
use crate::config::{parse_rank_mode, ConfigError, RunConfig};
use crate::ingest::{self, IngestError};
use crate::snapshot::{self, Fragment, SnapshotError};
use crate::{hogwild, instacart, pool, synth_io};

pub const FROZEN: &str = "config.frozen";
pub const CACHE: &str = "corpus.cache";
pub const VOCAB_MANIFEST: &str = "vocab.manifest";
pub const MODEL: &str = "model.cemb";
pub const RUN_MANIFEST: &str = "run.manifest";
pub const EVAL_TSV: &str = "eval.tsv";
pub const EVAL_REPORT: &str = "eval.report";
pub const COLD: &str = "cold.cemb";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or missing inputs.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match &e {
            IngestError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        match &e {
            SnapshotError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => Self::Usage(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::Usage(format!("{}: not found", path.display()))
        } else {
            CliError::Runtime(format!("{}: {e}", path.display()))
        }
    }
}

/// Options shared by every command.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    /// `key=value` overrides, applied after the config file.
    pub sets: Vec<String>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

impl Common {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            ..Default::default()
        }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// `base`, then the config file, then `--set`. With `run_flags`,
    /// `--threads` and `--seed` become config values too.
    fn resolve(&self, base: RunConfig, run_flags: bool) -> Result<RunConfig, CliError> {
        let mut c = base;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            c.apply_text(&text, &path.display().to_string())?;
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            c.absolutize(&absolute(dir)?);
        }
        for s in &self.sets {
            c.set_pair(s, "--set")?;
        }
        c.absolutize(&absolute(Path::new("."))?);
        if run_flags {
            if let Some(t) = self.threads {
                c.set("threads", &t.to_string(), "--threads")?;
            }
            if let Some(s) = self.seed {
                c.set("seed", &s.to_string(), "--seed")?;
            }
        }
        Ok(c)
    }

    fn frozen(&self) -> Result<RunConfig, CliError> {
        let path = self.file(FROZEN);
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "{} has no prepared corpus ({FROZEN} missing); run prepare first",
                self.out.display()
            )));
        }
        Ok(RunConfig::load(&path)?)
    }

    fn prepared(&self) -> Result<Prepared, CliError> {
        let path = self.file(CACHE);
        cache::load(&path).map_err(io_at(&path))
    }

    fn model(&self, c: &RunConfig) -> Result<EmbeddingStore, CliError> {
        let path = self.file(MODEL);
        if !path.exists() {
            return Err(CliError::Usage(format!("{}: not found; run train first", path.display())));
        }
        Ok(snapshot::load_verified(&path, c.model_hash())?)
    }
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(runtime)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_at(path))
}

fn require_file(c: &RunConfig, key: &str) -> Result<Option<PathBuf>, CliError> {
    match c.path(key, Path::new(".")) {
        Some(p) if !p.exists() => Err(CliError::Usage(format!("{key}: input file {} not found", p.display()))),
        other => Ok(other),
    }
}

/// Parses `key = value` manifest text.
pub fn read_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Reads the inputs, splits them and writes the corpus cache, the
/// vocabulary manifest and the frozen config. Returns the manifest text.
pub fn prepare(common: &Common, from_instacart: Option<&Path>) -> Result<String, CliError> {
    fs::create_dir_all(&common.out).map_err(io_at(&common.out))?;
    let mut base = RunConfig::default();
    if let Some(src) = from_instacart {
        if !src.is_dir() {
            return Err(CliError::Usage(format!("{}: not a directory", src.display())));
        }
        let dir = common.file("instacart");
        instacart::convert(src, &dir).map_err(|e| match &e {
            instacart::InstacartError::Csv { source, .. } if matches!(source.kind(), csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::NotFound) => {
                CliError::Usage(e.to_string())
            }
            _ => runtime(e),
        })?;
        let conf = dir.join(instacart::CONFIG);
        base.apply_text(&fs::read_to_string(&conf).map_err(io_at(&conf))?, &conf.display().to_string())?;
        base.absolutize(&absolute(&dir)?);
    }
    let c = common.resolve(base, true)?;
    let orders = require_file(&c, "orders")?
        .ok_or_else(|| CliError::Usage("no orders file configured; pass --config or --set orders=PATH".into()))?;
    let item_context = require_file(&c, "item_context")?;
    let user_context = require_file(&c, "user_context")?;
    require_file(&c, "labels")?;
    let spec = c.split_spec()?;
    c.train_config()?;

    let corpus = ingest::ingest(
        &orders,
        item_context.as_deref(),
        user_context.as_deref(),
        c.time_kind()?,
        c.min_transactions()?,
    )?;
    let splits = split(&corpus.events, &spec);
    drop(corpus.events);
    let observations = build_observations(&splits.train, &spec);
    if observations.is_empty() {
        return Err(CliError::Runtime(
            "the training split yields no observations; check the split settings".into(),
        ));
    }
    let prepared = Prepared {
        vocab: corpus.vocab,
        splits,
        observations,
    };
    let path = common.file(CACHE);
    let mut w = HashingWriter {
        inner: BufWriter::new(File::create(&path).map_err(io_at(&path))?),
        hash: Fnv1a::default(),
    };
    cache::write_to(&mut w, &prepared)
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;

    let v = &prepared.vocab;
    let s = &prepared.splits;
    let manifest = format!(
        "items = {}\nusers = {}\nitem_tokens = {}\nuser_tokens = {}\ntrain_events = {}\nvalid_events = {}\ntest_events = {}\nobservations = {}\ncorpus_config_hash = {:016x}\ncache_hash = {:016x}\n",
        v.n_items(),
        v.n_users(),
        v.n_item_tokens(),
        v.n_user_tokens(),
        s.train.len(),
        s.valid.len(),
        s.test.len(),
        prepared.observations.len(),
        c.corpus_hash(),
        w.hash.0,
    );
    write_file(&common.file(VOCAB_MANIFEST), &manifest)?;
    write_file(&common.file(FROZEN), &c.frozen())?;
    Ok(manifest)
}

/// Trains on the prepared corpus and writes the snapshot and run manifest.
/// Progress lines go to `log`.
pub fn train(common: &Common, log: &mut dyn Write) -> Result<(), CliError> {
    let frozen = common.frozen()?;
    let c = common.resolve(frozen.clone(), true)?;
    if c.corpus_hash() != frozen.corpus_hash() {
        return Err(CliError::Usage(
            "input or split settings differ from the prepared corpus; run prepare again".into(),
        ));
    }
    let cfg = c.train_config()?;
    let p = common.prepared()?;
    let epochs = cfg.epochs;
    let trained = hogwild::train(&p.observations, &p.vocab, &cfg, |s| {
        let l = &s.mean_loss;
        let _ = writeln!(
            log,
            "epoch {}/{epochs} loss {:.6} (sequence {:.6} item_context {:.6} user_context {:.6}) lr {:.6}",
            s.epoch + 1,
            l.total(),
            l.seq_term,
            l.item_context_term,
            l.user_context_term,
            s.final_learning_rate
        );
    })
    .map_err(runtime)?;
    snapshot::save(&common.file(MODEL), &trained.store, c.model_hash())?;

    let mut m = String::from("# config\n");
    m.push_str(&c.frozen());
    m.push_str(&format!(
        "# run\nseed = {}\nthreads = {}\nmodel_hash = {:016x}\nwall_clock_seconds = {:.3}\n# epochs\n",
        cfg.seed,
        cfg.threads,
        c.model_hash(),
        trained.seconds
    ));
    m.push_str("# epoch_N = loss sequence item_context user_context learning_rate\n");
    for s in &trained.epochs {
        let l = &s.mean_loss;
        m.push_str(&format!(
            "epoch_{} = {:.8} {:.8} {:.8} {:.8} {:.8}\n",
            s.epoch + 1,
            l.total(),
            l.seq_term,
            l.item_context_term,
            l.user_context_term,
            s.final_learning_rate
        ));
    }
    write_file(&common.file(RUN_MANIFEST), &m)?;
    write_file(&common.file(FROZEN), &c.frozen())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    WithinBasket,
    NextPurchase,
    Classification,
    All,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "within_basket" => Ok(Self::WithinBasket),
            "next_purchase" => Ok(Self::NextPurchase),
            "classification" => Ok(Self::Classification),
            "all" => Ok(Self::All),
            _ => Err(format!("unknown task {s:?}; expected within_basket, next_purchase, classification or all")),
        }
    }
}

fn rank_mode_name(m: RankMode) -> String {
    match m {
        RankMode::Complement => "complement".into(),
        RankMode::User => "user".into(),
        RankMode::TwoStage { pool } => format!("two-stage(pool={pool})"),
    }
}

/// Item-in rows and class ids of every labelled item. Labels are numbered in
/// sorted name order.
pub fn labelled_features(
    store: &EmbeddingStore,
    vocab: &Vocabulary,
    labels: &[(String, String)],
) -> (Vec<Vec<f64>>, Vec<u32>, Vec<String>) {
    let mut names: Vec<String> = labels.iter().map(|(_, l)| l.clone()).collect();
    names.sort();
    names.dedup();
    let mut by_item: Vec<Option<u32>> = vec![None; vocab.n_items()];
    for (id, l) in labels {
        if let Some(i) = vocab.items.get(id) {
            by_item[i as usize] = Some(names.binary_search(l).expect("label collected above") as u32);
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut row = vec![0.0; store.dim()];
    for (i, l) in by_item.iter().enumerate() {
        if let Some(l) = l {
            store.item_in.read_row(i, &mut row);
            x.push(row.clone());
            y.push(*l);
        }
    }
    (x, y, names)
}

pub fn classification_report(
    store: &EmbeddingStore,
    vocab: &Vocabulary,
    labels: &[(String, String)],
    seed: u64,
) -> (EvalReport, Vec<String>) {
    let mut r = EvalReport::default();
    let mut warnings = Vec::new();
    let (x, y, names) = labelled_features(store, vocab, labels);
    let unlabelled = vocab.n_items() - x.len();
    if unlabelled > 0 {
        warnings.push(format!("{unlabelled} items have no label and are left out of the probe"));
    }
    let cfg = ProbeConfig {
        seed,
        ..Default::default()
    };
    let p = classification_probe(&x, &y, &cfg);
    for c in &p.missing_classes {
        warnings.push(format!(
            "class {:?} has no training item and is never predicted",
            names[*c as usize]
        ));
    }
    r.set("classification_micro_f1", p.micro_f1);
    r.set("classification_macro_f1", p.macro_f1);
    r.set("classification_l2", p.l2);
    r.set("classification_train", p.train_size as f64);
    r.set("classification_test", p.test_size as f64);
    r.note("classification_protocol", format!("one-vs-all logistic regression on item-in vectors; label fraction {}; seed {seed}", cfg.label_fraction));
    (r, warnings)
}

/// Runs the requested evaluations and writes `eval.tsv` and `eval.report`.
/// Warnings go to `log`.
pub fn evaluate(common: &Common, task: Task, log: &mut dyn Write) -> Result<EvalReport, CliError> {
    let c = common.resolve(common.frozen()?, false)?;
    let threads = match common.threads {
        Some(t) => t,
        None => c.train_config()?.threads,
    }
    .max(1);
    let store = common.model(&c)?;
    let p = common.prepared()?;
    let mut report = EvalReport::default();

    if matches!(task, Task::WithinBasket | Task::All) {
        let cfg = c.within_basket()?;
        let baskets = dualcart_core::corpus::baskets(&p.splits.test);
        report.extend(pool::within_basket_eval(&baskets, &store, &cfg, threads));
    }
    if matches!(task, Task::NextPurchase | Task::All) {
        let spec = c.split_spec()?;
        match spec.mode {
            SplitMode::TimeCutoff { valid_end, .. } => {
                let mut events = p.splits.train.clone();
                events.extend_from_slice(&p.splits.valid);
                events.extend_from_slice(&p.splits.test);
                events.sort_by_key(|e| (e.user, e.time));
                let queries = next_purchase_queries(&events, valid_end, spec.d1, spec.d2, spec.k);
                let mode = c.rank_mode()?;
                let ks = c.eval_ks()?;
                let r = pool::next_purchase_eval(&queries, &store, mode, &ks, threads).map_err(runtime)?;
                report.extend(r);
                report.note("next_purchase_mode", rank_mode_name(mode));
            }
            SplitMode::LastOrder if task == Task::NextPurchase => {
                return Err(CliError::Usage(
                    "next_purchase needs split = time_cutoff (the cutoff is valid_end)".into(),
                ))
            }
            SplitMode::LastOrder => report.note("next_purchase", "skipped: split is last_order"),
        }
    }
    if matches!(task, Task::Classification | Task::All) {
        match require_file(&c, "labels")? {
            Some(path) => {
                let labels = instacart::read_labels(&path).map_err(io_at(&path))?;
                let (r, warnings) = classification_report(&store, &p.vocab, &labels, c.within_basket()?.seed);
                for w in warnings {
                    let _ = writeln!(log, "warning: {w}");
                }
                report.extend(r);
            }
            None if task == Task::Classification => {
                return Err(CliError::Usage("classification needs a labels file (--set labels=PATH)".into()))
            }
            None => report.note("classification", "skipped: no labels file"),
        }
    }
    let (head, vals) = report.to_tsv();
    write_file(&common.file(EVAL_TSV), &format!("{head}\n{vals}\n"))?;
    write_file(&common.file(EVAL_REPORT), &report.to_kv())?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct RecommendArgs {
    pub context: Vec<String>,
    pub user: Option<String>,
    pub k: usize,
    pub pool: usize,
    pub mode: String,
    pub allow: Option<PathBuf>,
    pub cold: Option<PathBuf>,
}

impl Default for RecommendArgs {
    fn default() -> Self {
        Self {
            context: Vec::new(),
            user: None,
            k: 10,
            pool: dualcart_core::rank::DEFAULT_RECALL_POOL,
            mode: "complement".into(),
            allow: None,
            cold: None,
        }
    }
}

/// Writes `rank<TAB>item_id<TAB>score` lines, best first, after a header.
pub fn recommend(common: &Common, args: &RecommendArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let c = common.resolve(common.frozen()?, false)?;
    let mode = parse_rank_mode(&args.mode, args.pool)?;
    if args.k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    let mut store = common.model(&c)?;
    let mut vocab = common.prepared()?.vocab;
    if let Some(path) = &args.cold {
        let frag = Fragment::load(path)?;
        (store, vocab) = frag.merge_into(&store, &vocab)?;
    }
    let context = args
        .context
        .iter()
        .map(|id| vocab.items.get(id).ok_or_else(|| CliError::Usage(format!("unknown item {id:?} in --context"))))
        .collect::<Result<Vec<u32>, _>>()?;
    if context.is_empty() {
        return Err(CliError::Usage("--context needs at least one item".into()));
    }
    let mut q = Query::new(context, args.k).with_pool(args.pool);
    if let Some(u) = &args.user {
        let idx = vocab.users.get(u).ok_or_else(|| CliError::Usage(format!("unknown user {u:?}")))?;
        q = q.with_user(idx);
    }
    let allow = match &args.allow {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_at(path))?;
            let mut ids: Vec<u32> = text.split_whitespace().filter_map(|id| vocab.items.get(id)).collect();
            ids.sort_unstable();
            ids.dedup();
            Some(ids)
        }
        None => None,
    };
    let ranked = match mode {
        RankMode::Complement => rank_by_complement(&q, &store, allow.as_deref()),
        RankMode::User => rank_with_user(&q, &store, allow.as_deref()),
        RankMode::TwoStage { .. } => recall_rerank(&q, &store, allow.as_deref()),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let w = |e: io::Error| runtime(e);
    writeln!(out, "rank\titem_id\tscore").map_err(w)?;
    for (r, (item, score)) in ranked.0.iter().enumerate() {
        writeln!(out, "{}\t{}\t{score}", r + 1, vocab.items.name(*item)).map_err(w)?;
    }
    Ok(())
}

/// Infers item-in vectors for the items in `items` (context file format)
/// and writes them as a fragment to `output` (default `cold.cemb` in the
/// output directory). Returns the number of vectors written.
pub fn infer_cold(common: &Common, items: &Path, output: Option<&Path>, log: &mut dyn Write) -> Result<usize, CliError> {
    let c = common.resolve(common.frozen()?, false)?;
    let params = c.coldstart()?;
    let floor = c.train_config()?.neg_sample_floor;
    let seed = common.seed.unwrap_or(c.train_config()?.seed);
    let store = common.model(&c)?;
    let vocab = common.prepared()?.vocab;
    let table = SamplingTable::from_counts_with_floor(vocab.item_tokens.counts(), floor)
        .map_err(|e| runtime(format!("cannot sample item tokens: {e}")))?;
    let wanted = ingest::read_context(items)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frag = Fragment {
        dim: store.dim(),
        items: Vec::new(),
    };
    for (id, toks) in &wanted {
        let (known, unknown) = vocab.resolve_item_tokens(toks.iter().map(String::as_str));
        if !unknown.is_empty() {
            let _ = writeln!(log, "warning: {id}: dropping unknown tokens {}", unknown.join(" "));
        }
        if known.is_empty() {
            let _ = writeln!(log, "warning: {id}: no known tokens, skipped");
            continue;
        }
        let z = coldstart::infer(
            &known,
            &store,
            &params,
            NegativeSource::Sampled {
                table: &table,
                rng: &mut rng,
            },
        )
        .map_err(runtime)?;
        frag.items.push((id.clone(), z.iter().map(|&v| v as f32).collect()));
    }
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| common.file(COLD));
    frag.save(&path)?;
    Ok(frag.items.len())
}

/// Generates a synthetic corpus into `dir`. Returns the config path.
pub fn synth(dir: &Path, spec: &SynthSpec) -> Result<PathBuf, CliError> {
    let corpus = synth::generate(spec).map_err(|e| CliError::Usage(e.to_string()))?;
    synth_io::write_corpus(dir, &corpus).map_err(io_at(dir))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parsing_skips_comments() {
        let kv = read_manifest("# c\na = 1\nb=x y\n\n");
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "x y".into())]);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 1);
        let e: CliError = ingest::ingest(Path::new("/nonexistent/o.tsv"), None, None, ingest::TimeKind::Seconds, 1)
            .unwrap_err()
            .into();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("/nonexistent/o.tsv"));
    }

    #[test]
    fn labelled_features_numbers_classes_by_name() {
        let mut vocab = Vocabulary::default();
        for i in ["a", "b", "c"] {
            vocab.items.add(i, 1);
        }
        let store = EmbeddingStore::init(
            dualcart_core::store::StoreShape {
                items: 3,
                users: 1,
                item_tokens: 0,
                user_tokens: 0,
                dim: 2,
                user_dim: 2,
                item_user: dualcart_core::ItemUserTable::Tied,
            },
            1,
        )
        .unwrap();
        let labels = vec![("c".to_string(), "x".to_string()), ("a".to_string(), "w".to_string()), ("zz".to_string(), "q".to_string())];
        let (x, y, names) = labelled_features(&store, &vocab, &labels);
        assert_eq!(names, vec!["q", "w", "x"]);
        assert_eq!(y, vec![1, 2]);
        assert_eq!(x.len(), 2);
    }
}
