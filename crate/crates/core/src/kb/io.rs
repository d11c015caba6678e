//! TAB-separated readers and writers for triple, link and vocabulary files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use super::{PairStore, Triple, TripleStore, Vocab};
use crate::error::{Error, Result};

/// A parsed triple file together with how many duplicate lines were collapsed.
#[derive(Debug, Clone, Default)]
pub struct ParsedTriples {
    pub store: TripleStore,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLinks {
    pub store: PairStore,
    pub duplicates: usize,
    /// Lines naming an entity or concept absent from the views.
    pub skipped_unknown: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn fields<'a>(line: &'a str, n: usize, source: &str, lineno: usize) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = line.split('\t').collect();
    if parts.len() != n {
        return Err(Error::Parse {
            source_name: source.to_owned(),
            line: lineno,
            message: format!("expected {n} TAB-separated fields, found {}", parts.len()),
        });
    }
    Ok(parts)
}

fn lookup(vocab: &mut Vocab, name: &str, grow: bool, kind: &'static str) -> Result<u32> {
    if grow {
        Ok(vocab.insert(name))
    } else {
        vocab.resolve(kind, name)
    }
}

/// Reads `head\trelation\ttail` lines. Head and tail share the `nodes`
/// vocabulary; when `grow` is false every name must already be known.
pub fn read_triples<R: BufRead>(
    reader: R,
    source: &str,
    nodes: &mut Vocab,
    relations: &mut Vocab,
    grow: bool,
) -> Result<ParsedTriples> {
    let mut out = ParsedTriples::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let f = fields(line, 3, source, i + 1)?;
        let head = lookup(nodes, f[0], grow, "node")?;
        let relation = lookup(relations, f[1], grow, "relation")?;
        let tail = lookup(nodes, f[2], grow, "node")?;
        if !out.store.insert(Triple::new(head, relation, tail)) {
            out.duplicates += 1;
        }
    }
    if out.duplicates > 0 {
        warn!("{source}: collapsed {} duplicate triples", out.duplicates);
    }
    Ok(out)
}

pub fn parse_triples(
    path: &Path,
    nodes: &mut Vocab,
    relations: &mut Vocab,
    grow: bool,
) -> Result<ParsedTriples> {
    read_triples(
        open(path)?,
        &path.display().to_string(),
        nodes,
        relations,
        grow,
    )
}

/// Reads `entity\tconcept` lines against fixed vocabularies.
pub fn read_links<R: BufRead>(
    reader: R,
    source: &str,
    entities: &Vocab,
    concepts: &Vocab,
) -> Result<ParsedLinks> {
    let mut out = ParsedLinks::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let f = fields(line, 2, source, i + 1)?;
        match (entities.id(f[0]), concepts.id(f[1])) {
            (Some(e), Some(c)) => {
                if !out.store.insert(e, c) {
                    out.duplicates += 1;
                }
            }
            _ => out.skipped_unknown += 1,
        }
    }
    if out.duplicates > 0 || out.skipped_unknown > 0 {
        warn!(
            "{source}: collapsed {} duplicate links, skipped {} links with unknown names",
            out.duplicates, out.skipped_unknown
        );
    }
    Ok(out)
}

pub fn parse_links(path: &Path, entities: &Vocab, concepts: &Vocab) -> Result<ParsedLinks> {
    read_links(open(path)?, &path.display().to_string(), entities, concepts)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_triples(
    path: &Path,
    store: &TripleStore,
    nodes: &Vocab,
    relations: &Vocab,
) -> Result<()> {
    let mut w = create(path)?;
    for t in store.iter() {
        writeln!(
            w,
            "{}\t{}\t{}",
            name(nodes, t.head),
            name(relations, t.relation),
            name(nodes, t.tail)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pairs(path: &Path, store: &PairStore, left: &Vocab, right: &Vocab) -> Result<()> {
    let mut w = create(path)?;
    for &(l, r) in store.iter() {
        writeln!(w, "{}\t{}", name(left, l), name(right, r)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One name per line, in id order.
pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut w = create(path)?;
    for n in vocab.names() {
        writeln!(w, "{n}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let mut names = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        names.push(line.strip_suffix('\r').unwrap_or(&line).to_owned());
    }
    Vocab::from_names(names)
}

fn name(vocab: &Vocab, id: u32) -> &str {
    vocab.name(id).expect("id outside vocabulary")
}
