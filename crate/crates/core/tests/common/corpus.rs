//! Deterministic English-like text for training and sweep checks.
//!
//! The sandbox has no natural-language corpus, so this generates prose from
//! a small phrase grammar with Zipf-weighted word choice. It has the
//! properties the degradation checks lean on: a skewed byte distribution,
//! word-internal structure, and agreement patterns that need context.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const DETERMINERS: &[&str] = &["the", "a", "this", "that", "every", "some", "one", "her", "his", "our"];
const ADJECTIVES: &[&str] = &[
    "old", "small", "quiet", "bright", "long", "cold", "early", "green", "heavy", "strange", "simple", "warm",
    "narrow", "distant", "careful", "empty", "golden", "broken", "gentle", "famous",
];
const NOUNS: &[&str] = &[
    "house", "river", "man", "woman", "child", "city", "garden", "road", "letter", "window", "door", "king",
    "village", "teacher", "horse", "morning", "story", "ship", "table", "forest", "friend", "market", "mountain",
    "book", "night", "bridge", "doctor", "farmer", "song", "field",
];
const VERBS: &[&str] = &[
    "saw", "found", "opened", "kept", "followed", "crossed", "heard", "remembered", "built", "carried", "watched",
    "left", "wanted", "painted", "visited", "closed", "loved", "forgot", "reached", "described",
];
const INTRANSITIVE: &[&str] = &[
    "slept", "waited", "laughed", "arrived", "stopped", "smiled", "listened", "returned", "worked", "disappeared",
];
const ADVERBS: &[&str] = &["slowly", "again", "quickly", "never", "always", "often", "suddenly", "quietly", "once"];
const PREPOSITIONS: &[&str] = &["in", "near", "across", "under", "behind", "beyond", "through", "along", "over"];
const CONNECTIVES: &[&str] = &["and", "but", "so", "because", "while", "when"];
const NAMES: &[&str] = &["Anna", "Thomas", "Mary", "John", "Clara", "Henry", "Lucy", "Peter"];

/// Picks index `i` with probability proportional to `1 / (i + 1)`.
fn zipf<'a, R: Rng>(rng: &mut R, words: &[&'a str]) -> &'a str {
    let total: f64 = (1..=words.len()).map(|k| 1.0 / k as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in words.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return w;
        }
    }
    words[words.len() - 1]
}

fn noun_phrase<R: Rng>(rng: &mut R, out: &mut Vec<String>) {
    if rng.random_bool(0.12) {
        out.push(zipf(rng, NAMES).into());
        return;
    }
    out.push(zipf(rng, DETERMINERS).into());
    if rng.random_bool(0.45) {
        out.push(zipf(rng, ADJECTIVES).into());
    }
    let noun = zipf(rng, NOUNS);
    // plural agreement: "some" takes a plural noun
    if out.last().is_some_and(|d| d == "some") {
        out.push(format!("{noun}s"));
    } else {
        out.push(noun.into());
    }
}

fn clause<R: Rng>(rng: &mut R, out: &mut Vec<String>) {
    noun_phrase(rng, out);
    if rng.random_bool(0.2) {
        out.push(zipf(rng, ADVERBS).into());
    }
    if rng.random_bool(0.3) {
        out.push(zipf(rng, INTRANSITIVE).into());
    } else {
        out.push(zipf(rng, VERBS).into());
        noun_phrase(rng, out);
    }
    if rng.random_bool(0.35) {
        out.push(zipf(rng, PREPOSITIONS).into());
        noun_phrase(rng, out);
    }
}

fn sentence<R: Rng>(rng: &mut R) -> String {
    let mut words = Vec::new();
    clause(rng, &mut words);
    if rng.random_bool(0.3) {
        let last = words.pop().expect("clause is never empty");
        words.push(format!("{last},"));
        words.push(zipf(rng, CONNECTIVES).into());
        clause(rng, &mut words);
    }
    let mut s = words.join(" ");
    if let Some(first) = s.get(0..1) {
        let upper = first.to_uppercase();
        s.replace_range(0..1, &upper);
    }
    s.push(if rng.random_bool(0.08) { '?' } else { '.' });
    s
}

/// At least `bytes` bytes of paragraphs, deterministic in `seed`.
pub fn english_like(bytes: usize, seed: u64) -> Vec<u8> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut text = String::with_capacity(bytes + 256);
    while text.len() < bytes {
        let n = rng.random_range(3..=7);
        let para: Vec<String> = (0..n).map(|_| sentence(&mut rng)).collect();
        text.push_str(&para.join(" "));
        text.push('\n');
    }
    text.into_bytes()
}

/// The repeated "ab" corpus used for the trainability check.
pub fn ab_corpus(bytes: usize) -> Vec<u8> {
    b"ab".iter().copied().cycle().take(bytes).collect()
}
