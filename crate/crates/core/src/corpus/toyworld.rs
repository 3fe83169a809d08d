//! Deterministic templated corpus with exact ground truth.
//!
//! Each document is a sequence of short fact sentences built from three
//! templates. Within a document every slot value (year, team, city, person,
//! event, building) is used at most once, so every templated question has
//! exactly one answer span in any window that contains its fact.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{extract_windows, LabeledExample, TokenId, Vocabulary, Window};
use crate::error::{contract, Error, Result};
use crate::span::Span;

const TEAM_PLACES: &[&str] = &[
    "boston", "chicago", "denver", "detroit", "houston", "atlanta", "dallas", "miami", "seattle",
    "phoenix", "portland", "memphis", "orlando", "tampa", "cleveland", "pittsburgh", "baltimore",
    "oakland", "toronto", "montreal",
];
const TEAM_MASCOTS: &[&str] = &[
    "sox", "cubs", "bears", "lions", "eagles", "hawks", "tigers", "wolves", "sharks", "giants",
    "rams", "jets", "kings", "owls", "foxes", "bulls",
];
const EVENTS: &[&str] = &[
    "cup", "series", "open", "derby", "classic", "trophy", "marathon", "regatta", "rally",
    "tournament", "championship", "league", "shield", "medal", "prize",
];
const CITIES: &[&str] = &[
    "paris", "london", "rome", "berlin", "madrid", "vienna", "prague", "oslo", "lisbon", "dublin",
    "athens", "cairo", "tokyo", "lima", "quito", "sydney", "moscow", "warsaw", "geneva", "milan",
    "naples", "venice", "munich", "zurich", "brussels", "amsterdam", "stockholm", "helsinki",
    "budapest", "bucharest",
];
const FIRST_NAMES: &[&str] = &[
    "john", "mary", "peter", "anna", "louis", "clara", "henry", "emma", "oscar", "julia", "victor",
    "alice", "felix", "rosa", "hugo", "ada", "otto", "ines", "karl", "lena",
];
const LAST_NAMES: &[&str] = &[
    "smith", "brown", "garcia", "muller", "rossi", "dubois", "novak", "silva", "kowalski",
    "jensen", "larsen", "moreau", "bauer", "costa", "keller", "weber", "fischer", "romano",
    "marino", "santos",
];
const BUILDINGS: &[&str] = &[
    "tower", "bridge", "museum", "library", "cathedral", "station", "theater", "palace",
    "stadium", "castle", "harbor", "university", "hospital", "temple", "observatory",
];
const FIRST_YEAR: u32 = 1850;
const N_YEARS: u32 = 120;
const FUNCTION_WORDS: &[&str] = &[
    "in", ",", "won", "the", ".", "was", "born", "designed", "by", "when", "did", "win", "who",
    "where", "?",
];

/// Fact sentence templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Template {
    /// `in YEAR , TEAM won the EVENT in CITY .`
    Victory,
    /// `PERSON was born in CITY in YEAR .`
    Birth,
    /// `the BUILDING was designed by PERSON in YEAR .`
    Design,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Victory, Template::Birth, Template::Design];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub facts_per_doc: usize,
    pub templates: Vec<Template>,
    /// Window size used to cut documents into contexts.
    pub window: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            facts_per_doc: 8,
            templates: Template::ALL.to_vec(),
            window: 32,
        }
    }
}

/// One templated question with its doc-level answer and supporting fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyQa {
    pub question: Vec<TokenId>,
    /// Answer span in document coordinates.
    pub answer: Span,
    /// `[start, end)` of the fact sentence the question is about.
    pub evidence: (usize, usize),
    pub template: Template,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDoc {
    pub doc_id: usize,
    pub tokens: Vec<TokenId>,
    pub qas: Vec<ToyQa>,
}

impl ToyDoc {
    pub fn page(&self) -> String {
        format!("page-{}", self.doc_id)
    }
}

/// A labeled example tied to the window it was cut from.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyExample {
    pub doc_id: usize,
    pub window_id: usize,
    pub template: Template,
    pub example: LabeledExample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyWorld {
    pub vocab: Vocabulary,
    pub docs: Vec<ToyDoc>,
    pub config: ToyConfig,
}

pub fn toy_vocabulary() -> Vocabulary {
    let years = (FIRST_YEAR..FIRST_YEAR + N_YEARS).map(|y| y.to_string());
    let words = FUNCTION_WORDS
        .iter()
        .chain(TEAM_PLACES)
        .chain(TEAM_MASCOTS)
        .chain(EVENTS)
        .chain(CITIES)
        .chain(FIRST_NAMES)
        .chain(LAST_NAMES)
        .chain(BUILDINGS)
        .map(|s| s.to_string());
    Vocabulary::from_tokens(words.chain(years))
}

/// Tracks values already used in the current document.
struct Pools {
    years: Vec<String>,
    teams: Vec<(usize, usize)>,
    events: Vec<usize>,
    cities: Vec<usize>,
    people: Vec<(usize, usize)>,
    buildings: Vec<usize>,
}

impl Pools {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut years: Vec<String> = (FIRST_YEAR..FIRST_YEAR + N_YEARS).map(|y| y.to_string()).collect();
        years.shuffle(rng);
        let mut teams: Vec<(usize, usize)> = (0..TEAM_PLACES.len())
            .flat_map(|p| (0..TEAM_MASCOTS.len()).map(move |m| (p, m)))
            .collect();
        teams.shuffle(rng);
        let mut people: Vec<(usize, usize)> = (0..FIRST_NAMES.len())
            .flat_map(|f| (0..LAST_NAMES.len()).map(move |l| (f, l)))
            .collect();
        people.shuffle(rng);
        let mut shuffled = |n: usize| {
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(rng);
            v
        };
        Self {
            years,
            teams,
            events: shuffled(EVENTS.len()),
            cities: shuffled(CITIES.len()),
            people,
            buildings: shuffled(BUILDINGS.len()),
        }
    }
}

fn pop<T>(v: &mut Vec<T>, what: &str) -> Result<T> {
    v.pop()
        .ok_or_else(|| contract(format!("toy world ran out of distinct {what}; lower facts_per_doc")))
}

pub fn generate_toy_world(seed: u64, n_docs: usize, cfg: &ToyConfig) -> Result<ToyWorld> {
    if n_docs == 0 {
        return Err(contract("n_docs must be at least 1"));
    }
    if cfg.templates.is_empty() || cfg.facts_per_doc == 0 || cfg.window == 0 {
        return Err(contract("toy config needs templates, facts and a window size"));
    }
    let vocab = toy_vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(n_docs);
    for doc_id in 0..n_docs {
        let mut pools = Pools::new(&mut rng);
        let mut words: Vec<String> = Vec::new();
        let mut qas = Vec::new();
        for _ in 0..cfg.facts_per_doc {
            let t = cfg.templates[rng.gen_range(0..cfg.templates.len())];
            let base = words.len();
            let year = pop(&mut pools.years, "years")?;
            let (sentence, questions) = match t {
                Template::Victory => {
                    let (p, m) = pop(&mut pools.teams, "teams")?;
                    let event = EVENTS[pop(&mut pools.events, "events")?];
                    let city = CITIES[pop(&mut pools.cities, "cities")?];
                    let team = [TEAM_PLACES[p], TEAM_MASCOTS[m]];
                    let s: Vec<String> = ["in", &year, ",", team[0], team[1], "won", "the", event, "in", city, "."]
                        .iter()
                        .map(|w| w.to_string())
                        .collect();
                    let qs = vec![
                        (vec!["when", "did", team[0], team[1], "win", "the", event, "?"], (1, 1)),
                        (vec!["who", "won", "the", event, "in", &year, "?"], (3, 4)),
                        (vec!["where", "did", team[0], team[1], "win", "the", event, "?"], (9, 9)),
                    ]
                    .into_iter()
                    .map(|(q, a)| (q.into_iter().map(str::to_string).collect::<Vec<_>>(), a))
                    .collect::<Vec<_>>();
                    (s, qs)
                }
                Template::Birth => {
                    let (f, l) = pop(&mut pools.people, "people")?;
                    let city = CITIES[pop(&mut pools.cities, "cities")?];
                    let person = [FIRST_NAMES[f], LAST_NAMES[l]];
                    let s: Vec<String> = [person[0], person[1], "was", "born", "in", city, "in", &year, "."]
                        .iter()
                        .map(|w| w.to_string())
                        .collect();
                    let qs = vec![
                        (vec!["where", "was", person[0], person[1], "born", "?"], (5, 5)),
                        (vec!["when", "was", person[0], person[1], "born", "?"], (7, 7)),
                        (vec!["who", "was", "born", "in", city, "?"], (0, 1)),
                    ]
                    .into_iter()
                    .map(|(q, a)| (q.into_iter().map(str::to_string).collect::<Vec<_>>(), a))
                    .collect::<Vec<_>>();
                    (s, qs)
                }
                Template::Design => {
                    let (f, l) = pop(&mut pools.people, "people")?;
                    let building = BUILDINGS[pop(&mut pools.buildings, "buildings")?];
                    let person = [FIRST_NAMES[f], LAST_NAMES[l]];
                    let s: Vec<String> = ["the", building, "was", "designed", "by", person[0], person[1], "in", &year, "."]
                        .iter()
                        .map(|w| w.to_string())
                        .collect();
                    let qs = vec![
                        (vec!["who", "designed", "the", building, "?"], (5, 6)),
                        (vec!["when", "was", "the", building, "designed", "?"], (8, 8)),
                    ]
                    .into_iter()
                    .map(|(q, a)| (q.into_iter().map(str::to_string).collect::<Vec<_>>(), a))
                    .collect::<Vec<_>>();
                    (s, qs)
                }
            };
            let evidence = (base, base + sentence.len());
            for (q, (s, e)) in questions {
                qas.push(ToyQa {
                    question: q.iter().map(|w| vocab.id(w)).collect(),
                    answer: Span {
                        start: base + s,
                        end: base + e,
                    },
                    evidence,
                    template: t,
                });
            }
            words.extend(sentence);
        }
        docs.push(ToyDoc {
            doc_id,
            tokens: words.iter().map(|w| vocab.id(w)).collect(),
            qas,
        });
    }
    Ok(ToyWorld {
        vocab,
        docs,
        config: cfg.clone(),
    })
}

impl ToyWorld {
    /// Disjoint windows of `config.window` tokens over every document.
    pub fn windows(&self) -> Vec<Window> {
        self.docs
            .iter()
            .flat_map(|d| {
                extract_windows(d.doc_id, &d.page(), &d.tokens, self.config.window, self.config.window)
                    .expect("config validated at generation")
            })
            .collect()
    }

    /// Every question whose supporting fact lies entirely inside a window,
    /// with the answer span re-expressed in window coordinates.
    pub fn labeled_examples(&self) -> Vec<ToyExample> {
        let mut out = Vec::new();
        let windows = self.windows();
        for w in &windows {
            let doc = &self.docs[w.doc_id];
            for qa in &doc.qas {
                if qa.evidence.0 >= w.start && qa.evidence.1 <= w.end() {
                    out.push(ToyExample {
                        doc_id: w.doc_id,
                        window_id: w.window_id,
                        template: qa.template,
                        example: LabeledExample::with_answer(
                            w.tokens.clone(),
                            qa.question.clone(),
                            Span {
                                start: qa.answer.start - w.start,
                                end: qa.answer.end - w.start,
                            },
                        ),
                    });
                }
            }
        }
        out
    }

    /// Ground-truth answer (window coordinates) for `question` asked about
    /// `window`, or `None` when the question is not a templated question
    /// about a fact fully inside the window. A trailing `[EOQ]` is ignored.
    pub fn gold_answer(&self, window: &Window, question: &[TokenId]) -> Option<Span> {
        let q = match question.last() {
            Some(&super::EOQ) => &question[..question.len() - 1],
            _ => question,
        };
        let doc = self.docs.get(window.doc_id)?;
        doc.qas
            .iter()
            .find(|qa| qa.question == q && qa.evidence.0 >= window.start && qa.evidence.1 <= window.end())
            .map(|qa| Span {
                start: qa.answer.start - window.start,
                end: qa.answer.end - window.start,
            })
    }

    /// Writes the documents as JSON lines.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        for d in &self.docs {
            let rec = DocRecord {
                doc_id: d.doc_id,
                tokens: d.tokens.iter().map(|&t| self.vocab.token(t).to_string()).collect(),
                qas: d
                    .qas
                    .iter()
                    .map(|qa| QaRecord {
                        question: qa.question.iter().map(|&t| self.vocab.token(t).to_string()).collect(),
                        start: Some(qa.answer.start),
                        end: Some(qa.answer.end),
                        answerable: true,
                        evidence_start: qa.evidence.0,
                        evidence_end: qa.evidence.1,
                        template: qa.template,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut f, &rec)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    /// Reads documents written by [`ToyWorld::save_jsonl`].
    pub fn load_jsonl(path: &Path, vocab: Vocabulary, config: ToyConfig) -> Result<Self> {
        let f = BufReader::new(fs::File::open(path)?);
        let mut docs = Vec::new();
        for (n, line) in f.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DocRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("line {}: {e}", n + 1),
            })?;
            let ids = |ws: &[String]| -> Result<Vec<TokenId>> {
                ws.iter()
                    .map(|w| {
                        vocab.get(w).ok_or_else(|| Error::Schema {
                            path: path.to_path_buf(),
                            msg: format!("line {}: token {w:?} not in vocabulary", n + 1),
                        })
                    })
                    .collect()
            };
            let tokens = ids(&rec.tokens)?;
            let mut qas = Vec::new();
            for qa in &rec.qas {
                let (Some(s), Some(e)) = (qa.start, qa.end) else { continue };
                qas.push(ToyQa {
                    question: ids(&qa.question)?,
                    answer: Span { start: s, end: e },
                    evidence: (qa.evidence_start, qa.evidence_end),
                    template: qa.template,
                });
            }
            if rec.doc_id != docs.len() {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    msg: format!("line {}: doc ids must be 0.. in order", n + 1),
                });
            }
            docs.push(ToyDoc {
                doc_id: rec.doc_id,
                tokens,
                qas,
            });
        }
        Ok(Self { vocab, docs, config })
    }
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    doc_id: usize,
    tokens: Vec<String>,
    qas: Vec<QaRecord>,
}

#[derive(Serialize, Deserialize)]
struct QaRecord {
    question: Vec<String>,
    start: Option<usize>,
    end: Option<usize>,
    answerable: bool,
    evidence_start: usize,
    evidence_end: usize,
    template: Template,
}
