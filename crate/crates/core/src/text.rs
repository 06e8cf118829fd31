//! Caption tokenization and the closed vocabulary used by the caption head.

use std::collections::BTreeSet;

use thiserror::Error;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Lowercases and splits on whitespace and punctuation. Apostrophes inside
/// words are kept ("person's").
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || (c.is_ascii_punctuation() && c != '\''))
        .map(|t| t.trim_matches('\'').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("token index {index} outside vocabulary of {size}")]
    UnknownIndex { index: usize, size: usize },
    #[error("vocabulary file: {0}")]
    Format(String),
}

/// Index 0..4 are `<pad>`, `<bos>`, `<eos>`, `<unk>`; words follow in
/// lexicographic order so that the same corpus always yields the same ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const BOS: usize = 1;
    pub const EOS: usize = 2;
    pub const UNK: usize = 3;

    pub fn build<'a>(captions: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = captions.into_iter().flat_map(tokenize).collect();
        let mut words: Vec<String> = [PAD, BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
        words.extend(set);
        Self { words }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, index: usize) -> Result<&str, VocabError> {
        self.words
            .get(index)
            .map(String::as_str)
            .ok_or(VocabError::UnknownIndex {
                index,
                size: self.words.len(),
            })
    }

    pub fn index(&self, word: &str) -> usize {
        // specials occupy the first four slots; the rest are sorted
        self.words[4..]
            .binary_search_by(|w| w.as_str().cmp(word))
            .map(|i| i + 4)
            .unwrap_or(Self::UNK)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|w| self.index(w)).collect()
    }

    /// Joins word ids into text, stopping at `<eos>` and skipping other
    /// special tokens.
    pub fn decode(&self, ids: &[usize]) -> Result<String, VocabError> {
        let mut out = Vec::new();
        for &id in ids {
            if id == Self::EOS {
                break;
            }
            let w = self.word(id)?;
            if id > Self::UNK {
                out.push(w);
            }
        }
        Ok(out.join(" "))
    }

    /// One token per line.
    pub fn to_text(&self) -> String {
        let mut s = self.words.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let words: Vec<String> = text.lines().map(str::to_string).collect();
        if words.len() < 4 || words[..4] != [PAD, BOS, EOS, UNK] {
            return Err(VocabError::Format("missing special tokens".into()));
        }
        if words[4..].windows(2).any(|w| w[0] >= w[1]) {
            return Err(VocabError::Format("words are not sorted and unique".into()));
        }
        Ok(Self { words })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("The man, in RED clothes; walks."),
            vec!["the", "man", "in", "red", "clothes", "walks"]
        );
        assert_eq!(tokenize("the person's bag"), vec!["the", "person's", "bag"]);
        assert!(tokenize("  ,. ").is_empty());
    }

    #[test]
    fn vocab_round_trip() {
        let v = Vocab::build(["b a", "c a"]);
        assert_eq!(v.len(), 7);
        assert_eq!(v.encode("a c zebra"), vec![4, 6, Vocab::UNK]);
        assert_eq!(v.decode(&[Vocab::BOS, 5, 4, Vocab::EOS, 6]).unwrap(), "b a");
        assert!(v.decode(&[99]).is_err());
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("x\ny\n").is_err());
    }
}
