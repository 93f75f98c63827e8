use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";
pub const BOS: &str = "<bos>";

/// Word list with the specials first, then corpus words in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Vocab {
        let index = words.iter().enumerate().map(|(k, w)| (w.clone(), k)).collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Vec<String> {
        v.words
    }
}

impl Vocab {
    /// Keep words seen at least `min_freq` times; `specials` must include
    /// [`UNK`] if unknown words should map anywhere.
    pub fn build<'a, I>(sentences: I, min_freq: usize, specials: &[&str]) -> Vocab
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for w in s {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut words: Vec<String> = specials.iter().map(|s| s.to_string()).collect();
        words.extend(
            counts
                .into_iter()
                .filter(|(w, n)| *n >= min_freq && !specials.contains(w))
                .map(|(w, _)| w.to_string()),
        );
        Vocab::from(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index of `word`, falling back to [`UNK`].
    pub fn id(&self, word: &str) -> usize {
        self.get(word)
            .or_else(|| self.get(UNK))
            .unwrap_or_else(|| panic!("{word:?} is out of vocabulary and there is no {UNK}"))
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode(&self, sentence: &[String]) -> Vec<usize> {
        sentence.iter().map(|w| self.id(w)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&k| self.words[k].clone()).collect()
    }
}
