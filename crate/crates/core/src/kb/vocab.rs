use std::collections::HashMap;
use std::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};

/// Dense, insertion-ordered name table. Ids are `0..len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary from names in id order. Duplicates are rejected.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab::new();
        for name in names {
            let name = name.into();
            if vocab.index.contains_key(&name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary entry `{name}`"
                )));
            }
            vocab.insert(&name);
        }
        Ok(vocab)
    }

    /// Returns the id of `name`, inserting it at the end if absent.
    pub fn insert(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("vocabulary exceeds u32 ids");
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Resolves `name` or fails with an unknown-symbol error carrying
    /// near-miss suggestions.
    pub fn resolve(&self, kind: &'static str, name: &str) -> Result<u32> {
        self.id(name).ok_or_else(|| Error::UnknownSymbol {
            kind,
            name: name.to_owned(),
            hints: self.suggest(name, 2),
        })
    }

    /// Names within `max_distance` edits of `name`, closest first.
    pub fn suggest(&self, name: &str, max_distance: usize) -> Vec<String> {
        let mut hits: Vec<(usize, &String)> = self
            .names
            .iter()
            .map(|candidate| (strsim::levenshtein(name, candidate), candidate))
            .filter(|&(d, _)| d <= max_distance)
            .collect();
        hits.sort();
        hits.into_iter().take(5).map(|(_, n)| n.clone()).collect()
    }

    /// 64-bit FNV-1a over the names in id order, each terminated by a zero byte.
    pub fn content_hash(&self) -> u64 {
        let mut hasher = FnvHasher::default();
        for name in &self.names {
            hasher.write(name.as_bytes());
            hasher.write(&[0]);
        }
        hasher.finish()
    }
}
