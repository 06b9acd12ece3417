//! Minimal-pair task corpora: grammar (determiner–noun agreement), arithmetic
//! verification, and arithmetic word problems.
//!
//! Every pair contributes a correct twin (`+1`) and an incorrect twin (`-1`)
//! that differ in a single contiguous token span.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OPERAND_MIN: i64 = 1;
pub const OPERAND_MAX: i64 = 1000;
pub const WORD_OPERAND_MAX: i64 = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("no valid examples in {0}")]
    EmptyDataset(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("unknown task family {0:?} (expected grammar, arithmetic or word_problem)")]
    InvalidFamily(String),
    #[error("count must be at least 1")]
    InvalidCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFamily {
    Grammar,
    Arithmetic,
    WordProblem,
}

impl TaskFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskFamily::Grammar => "grammar",
            TaskFamily::Arithmetic => "arithmetic",
            TaskFamily::WordProblem => "word_problem",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskFamily {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grammar" => Ok(TaskFamily::Grammar),
            "arithmetic" => Ok(TaskFamily::Arithmetic),
            "word_problem" | "word-problem" | "word_problems" => Ok(TaskFamily::WordProblem),
            other => Err(DatasetError::InvalidFamily(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPairExample {
    pub pair_id: u64,
    pub family: TaskFamily,
    pub label: i8,
    pub text: String,
}

impl MinimalPairExample {
    fn twins(pair_id: u64, family: TaskFamily, correct: String, incorrect: String) -> [Self; 2] {
        [
            Self {
                pair_id,
                family,
                label: 1,
                text: correct,
            },
            Self {
                pair_id,
                family,
                label: -1,
                text: incorrect,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operation {
    Add,
    Sub,
}

impl Operation {
    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            Operation::Add => a + b,
            Operation::Sub => a - b,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Operation::Add => '+',
            Operation::Sub => '-',
        }
    }
}

/// Multiplier applied to the true result of an incorrect twin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Perturbation {
    Half,
    OneAndHalf,
}

impl Perturbation {
    /// `round(f · r)` with halves rounded up, falling back to `r + 1` when that equals `r`.
    pub fn apply(self, r: i64) -> i64 {
        let scaled = match self {
            Perturbation::Half => (r + 1).div_euclid(2),
            Perturbation::OneAndHalf => (3 * r + 1).div_euclid(2),
        };
        if scaled == r {
            r + 1
        } else {
            scaled
        }
    }

    fn draw<R: Rng>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            Perturbation::Half
        } else {
            Perturbation::OneAndHalf
        }
    }
}

/// `"n1 op n2 = r"` and its perturbed twin.
pub fn arithmetic_pair(
    pair_id: u64,
    n1: i64,
    op: Operation,
    n2: i64,
    perturbation: Perturbation,
) -> [MinimalPairExample; 2] {
    let r = op.apply(n1, n2);
    let wrong = perturbation.apply(r);
    let lhs = format!("{n1} {} {n2} =", op.symbol());
    MinimalPairExample::twins(
        pair_id,
        TaskFamily::Arithmetic,
        format!("{lhs} {r}"),
        format!("{lhs} {wrong}"),
    )
}

fn check_count(count: usize) -> Result<(), DatasetError> {
    if count == 0 {
        Err(DatasetError::InvalidCount)
    } else {
        Ok(())
    }
}

pub fn gen_arithmetic(count: usize, seed: u64) -> Result<Vec<MinimalPairExample>, DatasetError> {
    check_count(count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * count);
    for pair_id in 0..count as u64 {
        let n1 = rng.random_range(OPERAND_MIN..=OPERAND_MAX);
        let n2 = rng.random_range(OPERAND_MIN..=OPERAND_MAX);
        let op = if rng.random_bool(0.5) {
            Operation::Add
        } else {
            Operation::Sub
        };
        let perturbation = Perturbation::draw(&mut rng);
        out.extend(arithmetic_pair(pair_id, n1, op, n2, perturbation));
    }
    Ok(out)
}

struct Person {
    name: &'static str,
    subject: &'static str,
    object: &'static str,
}

const PEOPLE: &[Person] = &[
    Person {
        name: "Tim",
        subject: "he",
        object: "him",
    },
    Person {
        name: "Anna",
        subject: "she",
        object: "her",
    },
    Person {
        name: "Carlos",
        subject: "he",
        object: "him",
    },
    Person {
        name: "Mei",
        subject: "she",
        object: "her",
    },
    Person {
        name: "Omar",
        subject: "he",
        object: "him",
    },
    Person {
        name: "Priya",
        subject: "she",
        object: "her",
    },
    Person {
        name: "Lukas",
        subject: "he",
        object: "him",
    },
    Person {
        name: "Sofia",
        subject: "she",
        object: "her",
    },
];

const FOODS: &[(&str, &str)] = &[
    ("apple", "apples"),
    ("cookie", "cookies"),
    ("grape", "grapes"),
    ("cherry", "cherries"),
    ("muffin", "muffins"),
];

const OBJECTS: &[(&str, &str)] = &[
    ("marble", "marbles"),
    ("book", "books"),
    ("pencil", "pencils"),
    ("sticker", "stickers"),
    ("coin", "coins"),
    ("shell", "shells"),
    ("card", "cards"),
    ("balloon", "balloons"),
];

/// A narrative with `{name} {subj} {obj} {a} {b} {r}` slots. `{na}`/`{nr}`
/// are the noun forms agreeing with `a` and `r`; the result span `{r} {nr}`
/// always closes the sentence.
pub struct WordTemplate {
    pub text: &'static str,
    pub op: Operation,
    nouns: &'static [(&'static str, &'static str)],
}

pub const WORD_TEMPLATES: &[WordTemplate] = &[
    WordTemplate {
        text: "{name} has {a} {na} and eats {b}, leaving {obj} with {r} {nr}.",
        op: Operation::Sub,
        nouns: FOODS,
    },
    WordTemplate {
        text: "{name} had {a} {na} and gave {b} to a friend, so {subj} now has {r} {nr}.",
        op: Operation::Sub,
        nouns: OBJECTS,
    },
    WordTemplate {
        text: "{name} picked {a} {na} and dropped {b} on the way home, ending up with {r} {nr}.",
        op: Operation::Sub,
        nouns: FOODS,
    },
    WordTemplate {
        text: "There were {a} {na} in the basket. {name} took out {b}, so the basket now holds {r} {nr}.",
        op: Operation::Sub,
        nouns: FOODS,
    },
    WordTemplate {
        text: "{name} collected {a} {na} and used {b} for a project, which left {r} {nr}.",
        op: Operation::Sub,
        nouns: OBJECTS,
    },
    WordTemplate {
        text: "{name} owned {a} {na} and sold {b} at a yard sale, keeping {r} {nr}.",
        op: Operation::Sub,
        nouns: OBJECTS,
    },
    WordTemplate {
        text: "{name} has {a} {na} and buys {b} more, ending with {r} {nr}.",
        op: Operation::Add,
        nouns: OBJECTS,
    },
    WordTemplate {
        text: "{name} found {a} {na} in the morning and {b} in the afternoon, for a total of {r} {nr}.",
        op: Operation::Add,
        nouns: OBJECTS,
    },
    WordTemplate {
        text: "{name} had {a} {na}. A friend gave {obj} {b} more, so {subj} now has {r} {nr}.",
        op: Operation::Add,
        nouns: OBJECTS,
    },
    WordTemplate {
        text: "{name} baked {a} {na} on Saturday and {b} on Sunday, baking {r} {nr} in all.",
        op: Operation::Add,
        nouns: FOODS,
    },
    WordTemplate {
        text: "{name} packed {a} {na} into one box and {b} into another, packing {r} {nr} altogether.",
        op: Operation::Add,
        nouns: OBJECTS,
    },
    WordTemplate {
        text: "{name} had {a} {na} and won {b} more at the fair, bringing the total to {r} {nr}.",
        op: Operation::Add,
        nouns: OBJECTS,
    },
];

fn noun_for(count: i64, noun: (&str, &'static str)) -> String {
    if count == 1 {
        noun.0.to_string()
    } else {
        noun.1.to_string()
    }
}

fn fill(template: &WordTemplate, person: &Person, noun: (&str, &'static str), a: i64, b: i64, r: i64) -> String {
    template
        .text
        .replace("{name}", person.name)
        .replace("{subj}", person.subject)
        .replace("{obj}", person.object)
        .replace("{na}", &noun_for(a, noun))
        .replace("{nr}", &noun_for(r, noun))
        .replace("{a}", &a.to_string())
        .replace("{b}", &b.to_string())
        .replace("{r}", &r.to_string())
}

/// One word-problem pair from explicit choices. `a ≥ b` is required for
/// subtraction templates so every narrated count is non-negative.
pub fn word_problem_pair(
    pair_id: u64,
    template: usize,
    person: usize,
    noun: usize,
    a: i64,
    b: i64,
    perturbation: Perturbation,
) -> [MinimalPairExample; 2] {
    let t = &WORD_TEMPLATES[template % WORD_TEMPLATES.len()];
    let p = &PEOPLE[person % PEOPLE.len()];
    let n = t.nouns[noun % t.nouns.len()];
    assert!(a >= 0 && b >= 0, "word problem operands must be non-negative");
    assert!(t.op == Operation::Add || a >= b, "subtraction would go negative");
    let r = t.op.apply(a, b);
    let wrong = perturbation.apply(r);
    MinimalPairExample::twins(
        pair_id,
        TaskFamily::WordProblem,
        fill(t, p, n, a, b, r),
        fill(t, p, n, a, b, wrong),
    )
}

/// Options for [`gen_word_problems_with`].
#[derive(Debug, Clone, Copy)]
pub struct WordProblemOptions {
    /// How many templates of the built-in bank to draw from (clamped to the bank size).
    pub templates: usize,
    pub operand_max: i64,
}

impl Default for WordProblemOptions {
    fn default() -> Self {
        Self {
            templates: WORD_TEMPLATES.len(),
            operand_max: WORD_OPERAND_MAX,
        }
    }
}

pub fn gen_word_problems(count: usize, seed: u64) -> Result<Vec<MinimalPairExample>, DatasetError> {
    gen_word_problems_with(count, seed, WordProblemOptions::default())
}

pub fn gen_word_problems_with(
    count: usize,
    seed: u64,
    options: WordProblemOptions,
) -> Result<Vec<MinimalPairExample>, DatasetError> {
    check_count(count)?;
    let bank = options.templates.clamp(1, WORD_TEMPLATES.len());
    let max = options.operand_max.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * count);
    for pair_id in 0..count as u64 {
        let template = rng.random_range(0..bank);
        let person = rng.random_range(0..PEOPLE.len());
        let noun = rng.random_range(0..WORD_TEMPLATES[template].nouns.len());
        let a = rng.random_range(1..=max);
        let b = match WORD_TEMPLATES[template].op {
            Operation::Sub => rng.random_range(1..=a),
            Operation::Add => rng.random_range(1..=max),
        };
        let perturbation = Perturbation::draw(&mut rng);
        out.extend(word_problem_pair(pair_id, template, person, noun, a, b, perturbation));
    }
    Ok(out)
}

pub const GRAMMAR_CARRIERS: &[&str] = &[
    "Leslie isn't firing ___.",
    "The manager praised ___.",
    "Did the students notice ___?",
    "We were talking about ___ yesterday.",
    "Nobody expected ___ to arrive early.",
    "Karen could not find ___.",
    "The children laughed at ___.",
    "My neighbor photographed ___.",
    "Has the committee approved ___?",
    "Everyone admired ___.",
];

pub const GRAMMAR_NOUNS: &[(&str, &str)] = &[
    ("actress", "actresses"),
    ("dog", "dogs"),
    ("child", "children"),
    ("mouse", "mice"),
    ("book", "books"),
    ("woman", "women"),
    ("glass", "glasses"),
    ("cactus", "cacti"),
    ("person", "people"),
    ("box", "boxes"),
    ("painting", "paintings"),
    ("man", "men"),
    ("essay", "essays"),
    ("photograph", "photographs"),
    ("sketch", "sketches"),
];

const SINGULAR_DETS: &[&str] = &["this", "that"];
const PLURAL_DETS: &[&str] = &["these", "those"];

/// Carrier sentence with `determiner noun` in the slot; the incorrect twin
/// uses the noun form of the other number.
pub fn grammar_pair(pair_id: u64, carrier: &str, determiner: &str, noun: (&str, &str)) -> [MinimalPairExample; 2] {
    let plural = PLURAL_DETS.contains(&determiner);
    let (right, wrong) = if plural { (noun.1, noun.0) } else { (noun.0, noun.1) };
    let fill = |n: &str| carrier.replace("___", &format!("{determiner} {n}"));
    MinimalPairExample::twins(pair_id, TaskFamily::Grammar, fill(right), fill(wrong))
}

pub fn gen_grammar(count: usize, seed: u64) -> Result<Vec<MinimalPairExample>, DatasetError> {
    check_count(count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * count);
    for pair_id in 0..count as u64 {
        let carrier = GRAMMAR_CARRIERS.choose(&mut rng).unwrap();
        let noun = *GRAMMAR_NOUNS.choose(&mut rng).unwrap();
        let dets = if rng.random_bool(0.5) {
            SINGULAR_DETS
        } else {
            PLURAL_DETS
        };
        let det = dets.choose(&mut rng).unwrap();
        out.extend(grammar_pair(pair_id, carrier, det, noun));
    }
    Ok(out)
}

pub fn generate(family: TaskFamily, count: usize, seed: u64) -> Result<Vec<MinimalPairExample>, DatasetError> {
    match family {
        TaskFamily::Grammar => gen_grammar(count, seed),
        TaskFamily::Arithmetic => gen_arithmetic(count, seed),
        TaskFamily::WordProblem => gen_word_problems(count, seed),
    }
}

#[derive(Debug, Deserialize)]
struct BlimpLine {
    sentence_good: String,
    sentence_bad: String,
}

/// A line of a BLiMP file that was not turned into a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Loads `sentence_good`/`sentence_bad` JSONL; malformed lines are logged and skipped.
pub fn load_blimp(path: &Path) -> Result<Vec<MinimalPairExample>, DatasetError> {
    load_blimp_with(path, false).map(|(examples, _)| examples)
}

/// As [`load_blimp`]; with `strict` the first malformed line is an error.
pub fn load_blimp_with(path: &Path, strict: bool) -> Result<(Vec<MinimalPairExample>, Vec<SkippedLine>), DatasetError> {
    let io = |e: std::io::Error| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let reader = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        let number = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<BlimpLine>(&line) {
            Ok(pair) => {
                let pair_id = (examples.len() / 2) as u64;
                examples.extend(MinimalPairExample::twins(
                    pair_id,
                    TaskFamily::Grammar,
                    pair.sentence_good,
                    pair.sentence_bad,
                ));
            }
            Err(e) => {
                if strict {
                    return Err(DatasetError::Malformed {
                        line: number,
                        reason: e.to_string(),
                    });
                }
                log::warn!("{}: skipping line {number}: {e}", path.display());
                skipped.push(SkippedLine {
                    line: number,
                    reason: e.to_string(),
                });
            }
        }
    }
    if examples.is_empty() {
        return Err(DatasetError::EmptyDataset(path.display().to_string()));
    }
    Ok((examples, skipped))
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    pair_id: u64,
    family: TaskFamily,
    label: i8,
    text: String,
}

/// Corpus CSV with header `pair_id,family,label,text`.
pub fn write_corpus_csv<W: std::io::Write>(writer: W, examples: &[MinimalPairExample]) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    for e in examples {
        w.serialize(CsvRow {
            pair_id: e.pair_id,
            family: e.family,
            label: e.label,
            text: e.text.clone(),
        })
        .map_err(|e| DatasetError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DatasetError::Csv(e.to_string()))
}

pub fn read_corpus_csv<R: std::io::Read>(reader: R) -> Result<Vec<MinimalPairExample>, DatasetError> {
    csv::Reader::from_reader(reader)
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row.map_err(|e| DatasetError::Csv(e.to_string()))?;
            Ok(MinimalPairExample {
                pair_id: row.pair_id,
                family: row.family,
                label: row.label,
                text: row.text,
            })
        })
        .collect()
}

/// Picks `pairs` whole pairs (both twins) uniformly without replacement.
pub fn sample_pairs(examples: &[MinimalPairExample], pairs: usize, seed: u64) -> Vec<MinimalPairExample> {
    let mut by_pair: BTreeMap<u64, Vec<&MinimalPairExample>> = BTreeMap::new();
    for e in examples {
        by_pair.entry(e.pair_id).or_default().push(e);
    }
    let ids: Vec<u64> = by_pair.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<u64> = ids.choose_multiple(&mut rng, pairs.min(ids.len())).copied().collect();
    chosen.sort_unstable();
    chosen
        .iter()
        .flat_map(|id| by_pair[id].iter().map(|e| (*e).clone()))
        .collect()
}
