//! Binary cache of a prepared corpus: vocabulary, split events and training
//! observations.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use dualcart_core::{Event, Interner, ObservationSet, Splits, TokenLists, Vocabulary};

use crate::bin_io::*;

const MAGIC: &[u8; 8] = b"DCCACHE1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub splits: Splits,
    pub observations: ObservationSet,
}

fn put_interner(w: &mut impl Write, i: &Interner) -> io::Result<()> {
    put_u64(w, i.len() as u64)?;
    for n in i.names() {
        put_str(w, n)?;
    }
    put_u64s(w, i.counts())
}

fn get_interner(r: &mut impl Read) -> io::Result<Interner> {
    let n = get_u64(r)? as usize;
    let names = (0..n).map(|_| get_str(r)).collect::<io::Result<Vec<_>>>()?;
    let counts = get_u64s(r)?;
    if counts.len() != names.len() {
        return Err(invalid("interner counts do not match names"));
    }
    Ok(Interner::from_parts(names, counts))
}

fn put_lists(w: &mut impl Write, t: &TokenLists) -> io::Result<()> {
    put_u64(w, t.rows() as u64)?;
    for l in t.iter() {
        put_u32s(w, l)?;
    }
    Ok(())
}

fn get_lists(r: &mut impl Read) -> io::Result<TokenLists> {
    let n = get_u64(r)? as usize;
    let lists = (0..n).map(|_| get_u32s(r)).collect::<io::Result<Vec<_>>>()?;
    Ok(TokenLists::from_lists(lists))
}

fn put_events(w: &mut impl Write, e: &[Event]) -> io::Result<()> {
    put_u64(w, e.len() as u64)?;
    for ev in e {
        put_u32(w, ev.user)?;
        put_u32(w, ev.order)?;
        put_i64(w, ev.time)?;
        put_u32(w, ev.item)?;
    }
    Ok(())
}

fn get_events(r: &mut impl Read) -> io::Result<Vec<Event>> {
    let n = get_u64(r)? as usize;
    (0..n)
        .map(|_| {
            Ok(Event {
                user: get_u32(r)?,
                order: get_u32(r)?,
                time: get_i64(r)?,
                item: get_u32(r)?,
            })
        })
        .collect()
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

pub fn write_to(w: &mut impl Write, p: &Prepared) -> io::Result<()> {
    w.write_all(MAGIC)?;
    let v = &p.vocab;
    for i in [&v.users, &v.items, &v.item_tokens, &v.user_tokens] {
        put_interner(w, i)?;
    }
    put_lists(w, &v.item_context)?;
    put_lists(w, &v.user_context)?;
    for e in [&p.splits.train, &p.splits.valid, &p.splits.test] {
        put_events(w, e)?;
    }
    let (users, targets, offsets, context) = p.observations.parts();
    put_u32s(w, users)?;
    put_u32s(w, targets)?;
    put_u64s(w, offsets)?;
    put_u32s(w, context)
}

pub fn read_from(r: &mut impl Read) -> io::Result<Prepared> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not a corpus cache"));
    }
    let users = get_interner(r)?;
    let items = get_interner(r)?;
    let item_tokens = get_interner(r)?;
    let user_tokens = get_interner(r)?;
    let item_context = get_lists(r)?;
    let user_context = get_lists(r)?;
    let splits = Splits {
        train: get_events(r)?,
        valid: get_events(r)?,
        test: get_events(r)?,
    };
    let observations = ObservationSet::from_parts(get_u32s(r)?, get_u32s(r)?, get_u64s(r)?, get_u32s(r)?)
        .ok_or_else(|| invalid("inconsistent observation arrays"))?;
    Ok(Prepared {
        vocab: Vocabulary {
            users,
            items,
            item_tokens,
            user_tokens,
            item_context,
            user_context,
        },
        splits,
        observations,
    })
}

pub fn save(path: &Path, p: &Prepared) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, p)?;
    w.flush()
}

pub fn load(path: &Path) -> io::Result<Prepared> {
    read_from(&mut BufReader::new(File::open(path)?))
}
