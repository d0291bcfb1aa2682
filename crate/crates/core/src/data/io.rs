use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::synthetic::{Corpus, Document, Query};
use super::vocab::{tokenize, Vocab};
use crate::error::{Error, Result};

/// Graded relevance judgments keyed by query id, then document id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn insert(&mut self, qid: &str, docid: &str, grade: u32) -> Result<()> {
        let q = self.grades.entry(qid.to_string()).or_default();
        if q.insert(docid.to_string(), grade).is_some() {
            return Err(Error::Input(format!("duplicate judgment for ({qid}, {docid})")));
        }
        Ok(())
    }

    /// Grade of a pair; unjudged pairs are 0.
    pub fn grade(&self, qid: &str, docid: &str) -> u32 {
        self.grades.get(qid).and_then(|q| q.get(docid)).copied().unwrap_or(0)
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(qid)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    /// Number of judged pairs.
    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (q, docs) in &self.grades {
            for (d, g) in docs {
                let _ = writeln!(s, "{q} 0 {d} {g}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut qrels = Qrels::default();
        for (i, line) in content_lines(text) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(parse_err(i, format!("expected 4 fields, found {}", f.len())));
            }
            let grade: i64 = f[3].parse().map_err(|_| parse_err(i, format!("bad grade {:?}", f[3])))?;
            if grade < 0 {
                return Err(parse_err(i, format!("negative grade {grade}")));
            }
            qrels.insert(f[0], f[2], grade as u32).map_err(|e| parse_err(i, e.to_string()))?;
        }
        Ok(qrels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub qid: String,
    pub docid: String,
    pub rank: usize,
    pub score: f64,
}

/// A ranked result list per query (TREC run).
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub tag: String,
    pub rows: Vec<RunRow>,
}

impl Run {
    /// Ranks each query's candidates by descending score, ties by ascending
    /// document id, keeping at most `depth` rows per query.
    pub fn from_scores(tag: &str, scores: BTreeMap<String, Vec<(String, f64)>>, depth: usize) -> Self {
        let mut rows = Vec::new();
        for (qid, mut cands) in scores {
            cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            for (r, (docid, score)) in cands.into_iter().take(depth).enumerate() {
                rows.push(RunRow { qid: qid.clone(), docid, rank: r + 1, score });
            }
        }
        Run { tag: tag.to_string(), rows }
    }

    /// Rows grouped by query, each group in rank order.
    pub fn ranked(&self) -> BTreeMap<&str, Vec<&RunRow>> {
        let mut out: BTreeMap<&str, Vec<&RunRow>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.qid.as_str()).or_default().push(r);
        }
        for v in out.values_mut() {
            v.sort_by_key(|r| r.rank);
        }
        out
    }

    /// `qid Q0 docid rank score tag`, sorted by (qid, rank).
    pub fn render(&self) -> String {
        let mut s = String::new();
        for rows in self.ranked().values() {
            for r in rows {
                let _ = writeln!(s, "{} Q0 {} {} {} {}", r.qid, r.docid, r.rank, r.score, self.tag);
            }
        }
        s
    }

    /// Ranks must run 1, 2, ... within each query with no gaps or repeats.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut tag: Option<String> = None;
        let mut last_line: BTreeMap<String, usize> = BTreeMap::new();
        for (i, line) in content_lines(text) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(parse_err(i, format!("expected 6 fields, found {}", f.len())));
            }
            let rank: usize = f[3].parse().map_err(|_| parse_err(i, format!("bad rank {:?}", f[3])))?;
            let score: f64 = f[4].parse().map_err(|_| parse_err(i, format!("bad score {:?}", f[4])))?;
            match &tag {
                None => tag = Some(f[5].to_string()),
                Some(t) if t != f[5] => return Err(parse_err(i, format!("mixed run tags {t} and {}", f[5]))),
                _ => {}
            }
            last_line.insert(f[0].to_string(), i);
            rows.push(RunRow { qid: f[0].to_string(), docid: f[2].to_string(), rank, score });
        }
        let run = Run { tag: tag.unwrap_or_default(), rows };
        for (qid, rows) in run.ranked() {
            for (k, r) in rows.iter().enumerate() {
                if r.rank != k + 1 {
                    return Err(parse_err(
                        last_line[qid],
                        format!("query {qid}: ranks are not consecutive from 1 (expected {}, found {})", k + 1, r.rank),
                    ));
                }
            }
        }
        Ok(run)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Triple {
    pub qid: String,
    pub pos: String,
    pub neg: String,
}

pub fn render_triples(triples: &[Triple]) -> String {
    let mut s = String::new();
    for t in triples {
        let _ = writeln!(s, "{}\t{}\t{}", t.qid, t.pos, t.neg);
    }
    s
}

pub fn parse_triples(text: &str) -> Result<Vec<Triple>> {
    content_lines(text)
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            match f[..] {
                [q, p, n] if !q.is_empty() && !p.is_empty() && !n.is_empty() => {
                    Ok(Triple { qid: q.into(), pos: p.into(), neg: n.into() })
                }
                _ => Err(parse_err(i, "expected qid<TAB>pos<TAB>neg".into())),
            }
        })
        .collect()
}

/// `id<TAB>text` lines with tokens mapped back to words.
pub fn render_texts(texts: &[Document], vocab: &Vocab) -> String {
    let mut s = String::new();
    for t in texts {
        let _ = writeln!(s, "{}\t{}", t.id, vocab.decode(&t.tokens));
    }
    s
}

pub fn parse_texts(text: &str, vocab: &Vocab) -> Result<Vec<Document>> {
    content_lines(text)
        .map(|(i, line)| match line.split_once('\t') {
            Some((id, body)) if !id.trim().is_empty() => {
                Ok(Document { id: id.trim().to_string(), tokens: tokenize(body, vocab) })
            }
            _ => Err(parse_err(i, "expected id<TAB>text".into())),
        })
        .collect()
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    Qrels::parse(&read_text(path)?)
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<()> {
    write_text(path, &qrels.render())
}

pub fn read_run(path: &Path) -> Result<Run> {
    Run::parse(&read_text(path)?)
}

pub fn write_run(path: &Path, run: &Run) -> Result<()> {
    write_text(path, &run.render())
}

pub fn read_triples(path: &Path) -> Result<Vec<Triple>> {
    parse_triples(&read_text(path)?)
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    Vocab::from_text(&read_text(path)?)
}

pub fn read_corpus(path: &Path, vocab: Vocab) -> Result<Corpus> {
    let docs = parse_texts(&read_text(path)?, &vocab)?;
    Corpus::new(docs, vocab)
}

pub fn read_queries(path: &Path, vocab: &Vocab) -> Result<Vec<Query>> {
    parse_texts(&read_text(path)?, vocab)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))).filter(|(_, l)| !l.trim().is_empty())
}

fn parse_err(line: usize, msg: String) -> Error {
    Error::Parse { line, msg }
}
