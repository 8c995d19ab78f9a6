//! Writes synthetic corpora in the ingest file formats.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use dualcart_core::synth::SynthCorpus;

pub const ORDERS: &str = "orders.tsv";
pub const ITEMS: &str = "items.tsv";
pub const TRUTH: &str = "truth.tsv";
pub const CONFIG: &str = "run.conf";

/// Planted structure by item id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Truth {
    pub pairs: Vec<(String, String)>,
    pub combos: Vec<(String, String, String)>,
}

/// Writes `orders.tsv`, `items.tsv`, `truth.tsv` and a `run.conf` pointing at
/// them. Returns the config path.
pub fn write_corpus(dir: &Path, c: &SynthCorpus) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(ORDERS))?);
    for e in &c.events {
        writeln!(w, "u{}\to{}\t{}\ti{}", e.user, e.order, e.time, e.item)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(ITEMS))?);
    for (i, toks) in c.item_tokens.iter().enumerate() {
        writeln!(w, "i{i}\t{}", toks.join(" "))?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join(TRUTH))?);
    for (a, b) in &c.pairs {
        writeln!(w, "pair\ti{a}\ti{b}")?;
    }
    for (a, b, d) in &c.combos {
        writeln!(w, "combo\ti{a}\ti{b}\ti{d}")?;
    }
    w.flush()?;
    let conf = dir.join(CONFIG);
    fs::write(
        &conf,
        format!("# synthetic corpus\norders = {ORDERS}\nitem_context = {ITEMS}\ntime_kind = seconds\nmin_transactions = 1\n"),
    )?;
    Ok(conf)
}

pub fn read_truth(path: &Path) -> io::Result<Truth> {
    let mut t = Truth::default();
    for (n, line) in fs::read_to_string(path)?.lines().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        match f.as_slice() {
            ["pair", a, b] => t.pairs.push((a.to_string(), b.to_string())),
            ["combo", a, c, d] => t.combos.push((a.to_string(), c.to_string(), d.to_string())),
            [] | [""] => {}
            _ => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{}: bad truth line", path.display(), n + 1),
                ))
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ingest, TimeKind};
    use dualcart_core::synth::{generate, SynthSpec};

    #[test]
    fn written_corpus_ingests_and_is_deterministic() {
        let spec = SynthSpec { n_items: 40, n_users: 30, n_pairs: 5, n_combos: 1, ..Default::default() };
        let c = generate(&spec).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_corpus(a.path(), &c).unwrap();
        write_corpus(b.path(), &generate(&spec).unwrap()).unwrap();
        for f in [ORDERS, ITEMS, TRUTH] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
        let corpus = ingest(&a.path().join(ORDERS), Some(&a.path().join(ITEMS)), None, TimeKind::Seconds, 1).unwrap();
        assert_eq!(corpus.events.len(), c.events.len());
        let t = read_truth(&a.path().join(TRUTH)).unwrap();
        assert_eq!(t.pairs.len(), 5);
        assert_eq!(t.combos.len(), 1);
    }
}
