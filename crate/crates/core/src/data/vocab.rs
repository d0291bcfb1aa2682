use std::collections::HashMap;

use super::{CLS_ID, PAD_ID, SEP_ID, UNK_ID};
use crate::error::{Error, Result};

pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Token string to id map. Ids 0 to 3 are the reserved tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Reserved tokens followed by `words` (lowercased, duplicates rejected).
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for w in RESERVED.iter().map(|s| s.to_string()).chain(words.into_iter().map(|w| w.as_ref().to_lowercase())) {
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid vocabulary entry {w:?}")));
            }
            if v.index.insert(w.clone(), v.tokens.len()).is_some() {
                return Err(Error::Input(format!("duplicate vocabulary entry {w:?}")));
            }
            v.tokens.push(w);
        }
        debug_assert_eq!(v.index[RESERVED[PAD_ID]], PAD_ID);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Whitespace-joined words for token ids.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.token(i).unwrap_or(RESERVED[UNK_ID])).collect::<Vec<_>>().join(" ")
    }

    /// One token per line, reserved tokens included.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let reserved: Vec<String> = RESERVED.iter().map(|s| s.to_lowercase()).collect();
        if lines.len() < 4 || lines[..4].iter().zip(&reserved).any(|(a, b)| a.to_lowercase() != *b) {
            return Err(Error::Parse { line: 1, msg: format!("vocabulary must start with {}", RESERVED.join(", ")) });
        }
        Vocab::new(&lines[4..])
    }
}

/// Whitespace split, lowercase, lookup; unknown words map to the UNK id.
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<usize> {
    text.split_whitespace().map(|w| vocab.id(&w.to_lowercase()).unwrap_or(UNK_ID)).collect()
}

const _: () = assert!(PAD_ID == 0 && UNK_ID == 1 && CLS_ID == 2 && SEP_ID == 3);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        let v = Vocab::new(["a", "b"]).unwrap();
        assert!(tokenize("", &v).is_empty());
        let ids = tokenize("A a", &v);
        assert_eq!(ids, vec![4, 4]);
        assert_eq!(tokenize("zebra b", &v), vec![UNK_ID, 5]);
        assert_eq!(v.id("[CLS]"), Some(CLS_ID));
    }

    #[test]
    fn text_round_trip() {
        let v = Vocab::new(["x", "y", "z"]).unwrap();
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocab::from_text("x\ny\n").is_err());
        assert!(Vocab::new(["x", "X"]).is_err());
    }
}
