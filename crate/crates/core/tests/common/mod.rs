#![allow(dead_code)]

use std::path::{Path, PathBuf};

use lenbias::corpus::{save_corpus, Corpus, CorpusFormat, Document};
use lenbias::rng::SplitMix64;
use lenbias::suite::ChunkCandidates;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Shell command running the scripted adapter with `args`.
pub fn echo_adapter(args: &str) -> String {
    format!("python3 {} {args}", fixture("echo_adapter.py").display())
}

const NAMES: [&str; 6] = ["Anna", "Berlin", "Marek", "Lisbon", "Chen", "Oslo"];
const NOUNS: [&str; 8] = [
    "treaty", "report", "budget", "harbour", "council", "bridge", "archive", "garden",
];

/// English sentence that every built-in perturbation rule can edit.
pub fn rich_sentence(rng: &mut SplitMix64, extra_words: usize) -> String {
    let name = NAMES[rng.below(NAMES.len())];
    let noun = NOUNS[rng.below(NOUNS.len())];
    let year = 1950 + rng.below(70);
    let mut s = format!("In {year}, the {noun} was signed by {name} and the members of the council");
    for _ in 0..extra_words {
        s.push(' ');
        s.push_str(NOUNS[rng.below(NOUNS.len())]);
    }
    s.push('.');
    s
}

/// `n_docs` documents of `n_segs` non-empty segments each.
pub fn rich_corpus(n_docs: usize, n_segs: usize, seed: u64) -> Corpus {
    let mut rng = SplitMix64::new(seed);
    let docs = (0..n_docs)
        .map(|d| {
            let segs: Vec<(String, String)> = (0..n_segs)
                .map(|_| {
                    let extra = rng.below(4);
                    (format!("Quelle {d}."), rich_sentence(&mut rng, extra))
                })
                .collect();
            Document::from_pairs(&format!("doc{d:03}"), "en-de", segs).unwrap()
        })
        .collect();
    Corpus::new("en-de", docs, "generated").unwrap()
}

pub fn write_corpus(corpus: &Corpus, dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(name);
    save_corpus(corpus, &path, CorpusFormat::from_path(&path)).unwrap();
    path
}

fn words(n: usize, w: &str) -> String {
    vec![w; n].join(" ")
}

/// Chunks with a 250-token reference and two candidates of `short` and `long` tokens.
pub fn chunks(lengths: &[(usize, usize)]) -> Vec<ChunkCandidates> {
    lengths
        .iter()
        .enumerate()
        .map(|(i, &(short, long))| ChunkCandidates {
            chunk_id: format!("chunk{i:04}"),
            source: format!("source {i}"),
            reference: words(250, "ref"),
            candidates: vec![words(long, "lo"), words(short, "sh")],
        })
        .collect()
}

pub fn write_chunks(chunks: &[ChunkCandidates], dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(name);
    lenbias::io::write_jsonl(&path, chunks).unwrap();
    path
}
