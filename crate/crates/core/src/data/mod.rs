//! Synthetic corpora, toy tokenization and TREC-style file formats.

mod io;
mod synthetic;
mod vocab;

pub use io::{
    parse_texts, parse_triples, read_corpus, read_qrels, read_queries, read_run, read_text, read_triples, read_vocab,
    render_texts, render_triples, write_qrels, write_run, write_text, Qrels, Run, RunRow, Triple,
};
pub use synthetic::{doc_id, generate_synthetic, query_id, Corpus, Document, Query, Synthetic, SyntheticSpec};
pub use vocab::{tokenize, Vocab, RESERVED};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
