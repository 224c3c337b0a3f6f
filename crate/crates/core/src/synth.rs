//! Synthetic chest CT reports and model outputs built from the lexicon.
//! Used for the bundled sample corpus, benchmarks and property tests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, EvalPair};
use crate::provenance::derive_seed;
use crate::textkit::{Laterality, Lexicon};

pub const SAMPLE_SEED: u64 = 20_240_901;
pub const SAMPLE_CASES: usize = 100;
pub const SAMPLE_MODELS: [&str; 3] = ["model_a", "model_b", "model_c"];

/// Bundled 100-case corpus with three model outputs per case.
pub fn bundled_sample_source() -> &'static str {
    include_str!("../data/sample_corpus.jsonl")
}

const LUNG: &[&str] = &[
    "nodule",
    "opacity",
    "atelectasis",
    "consolidation",
    "emphysema",
    "bulla",
    "mass",
    "granuloma",
    "bronchiectasis",
    "fibrotic_sequela",
    "pneumonia",
    "tree_in_bud",
    "septal_thickening",
    "peribronchial_thickening",
];
const PLEURAL: &[&str] = &["pleural_effusion", "pneumothorax", "pleural_thickening"];
const SIDED_OTHER: &[&str] = &["fracture", "renal_cyst"];
const MEASURABLE: &[&str] = &[
    "nodule",
    "mass",
    "granuloma",
    "bulla",
    "lymphadenopathy",
    "hepatic_cyst",
    "renal_cyst",
    "thyroid_nodule",
];
const SEVERITY: &[&str] = &["mild", "minimal", "small", "scattered", "prominent", "slight"];
const SEEN: &[&str] = &["seen", "noted", "observed", "identified"];
const LOBES: &[&str] = &["upper", "middle", "lower"];
const FILLERS: &[&str] = &[
    "Heart size is normal.",
    "Trachea and main bronchi are patent.",
    "Mediastinal structures are unremarkable.",
    "The thoracic aorta has a normal appearance.",
    "The visualized upper abdominal organs are unremarkable.",
    "Bone structures are intact.",
    "Findings are stable compared with the prior examination.",
    "The thyroid gland has a normal configuration.",
    "Main pulmonary artery diameter is normal.",
    "Esophagus is patent along its course.",
];

/// One finding to be rendered into text.
#[derive(Debug, Clone, PartialEq)]
pub struct FindingSpec {
    pub term: String,
    pub present: bool,
    pub side: Laterality,
    pub size_mm: Option<u32>,
}

fn sided(term: &str) -> bool {
    LUNG.contains(&term) || PLEURAL.contains(&term) || SIDED_OTHER.contains(&term)
}

fn side_word(side: Laterality) -> &'static str {
    match side {
        Laterality::Left => "left",
        Laterality::Right => "right",
        Laterality::Bilateral => "bilateral",
        Laterality::None => "",
    }
}

fn random_side(rng: &mut ChaCha8Rng) -> Laterality {
    match rng.random_range(0..10) {
        0..=3 => Laterality::Left,
        4..=7 => Laterality::Right,
        _ => Laterality::Bilateral,
    }
}

/// Draws `count` findings over distinct lexicon terms.
pub fn random_findings(lexicon: &Lexicon, count: usize, rng: &mut ChaCha8Rng) -> Vec<FindingSpec> {
    let terms: Vec<&str> = lexicon.entities.iter().map(|e| e.term.as_str()).collect();
    let picked: Vec<&str> = terms.choose_multiple(rng, count.min(terms.len())).copied().collect();
    picked
        .into_iter()
        .map(|term| {
            let present = rng.random_bool(0.6);
            let side = if present && sided(term) {
                random_side(rng)
            } else {
                Laterality::None
            };
            let size_mm = (present && MEASURABLE.contains(&term) && rng.random_bool(0.6))
                .then(|| rng.random_range(3..=40));
            FindingSpec {
                term: term.to_string(),
                present,
                side,
                size_mm,
            }
        })
        .collect()
}

fn location(term: &str, side: Laterality, rng: &mut ChaCha8Rng) -> Option<String> {
    if side == Laterality::None {
        return None;
    }
    let s = side_word(side);
    Some(if side == Laterality::Bilateral {
        if PLEURAL.contains(&term) {
            "bilateral hemithoraces".to_string()
        } else {
            "both lungs".to_string()
        }
    } else if LUNG.contains(&term) {
        format!("the {s} {} lobe", LOBES.choose(rng).unwrap())
    } else if PLEURAL.contains(&term) {
        format!("the {s} hemithorax")
    } else {
        format!("the {s} side")
    })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Renders one finding as a sentence, choosing among several phrasings.
pub fn render_finding(spec: &FindingSpec, lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> String {
    let def = lexicon.entity(&spec.term).expect("term from lexicon");
    let surface = def.variants.choose(rng).unwrap().as_str();
    if !spec.present {
        return match rng.random_range(0..4) {
            0 => format!("No {surface}."),
            1 => format!("There is no {surface}."),
            2 => format!("No evidence of {surface}."),
            _ => format!("Negative for {surface}."),
        };
    }
    let seen = SEEN.choose(rng).unwrap();
    let loc = location(&spec.term, spec.side, rng);
    if let Some(mm) = spec.size_mm {
        let loc = loc.map(|l| format!(" in {l}")).unwrap_or_default();
        return match rng.random_range(0..2) {
            0 => format!("{} measuring {mm} mm is {seen}{loc}.", capitalize(surface)),
            _ => format!("There is a {surface} of {mm} mm{loc}."),
        };
    }
    let adj = if rng.random_bool(0.5) {
        format!("{} ", SEVERITY.choose(rng).unwrap())
    } else {
        String::new()
    };
    match loc {
        Some(l) => match rng.random_range(0..3) {
            0 => format!("There is {adj}{surface} in {l}."),
            1 => format!("{} is {seen} in {l}.", capitalize(&format!("{adj}{surface}"))),
            _ => format!("{} {surface} is present.", capitalize(side_word(spec.side))),
        },
        None => match rng.random_range(0..3) {
            0 => format!("There is {adj}{surface}."),
            1 => format!("{} is {seen}.", capitalize(&format!("{adj}{surface}"))),
            _ => format!("{} is present.", capitalize(&format!("{adj}{surface}"))),
        },
    }
}

/// Findings in order, with a few filler sentences mixed in.
pub fn render_report(specs: &[FindingSpec], lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> String {
    let mut sentences: Vec<String> = specs.iter().map(|s| render_finding(s, lexicon, rng)).collect();
    let fillers = rng.random_range(1..=3);
    for f in FILLERS.choose_multiple(rng, fillers) {
        let at = rng.random_range(0..=sentences.len());
        sentences.insert(at, f.to_string());
    }
    sentences.join(" ")
}

/// A random report with 3 to 8 findings.
pub fn random_report(lexicon: &Lexicon, rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(3..=8);
    let specs = random_findings(lexicon, n, rng);
    render_report(&specs, lexicon, rng)
}

/// Error profile of a synthetic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelProfile {
    pub drop: f64,
    pub flip: f64,
    pub side: f64,
    pub size: f64,
    pub hallucinate: f64,
}

impl ModelProfile {
    /// Profile of increasing error rates for quality rank `q` in [0, 1].
    pub fn graded(q: f64) -> Self {
        ModelProfile {
            drop: 0.05 + 0.3 * q,
            flip: 0.03 + 0.2 * q,
            side: 0.03 + 0.3 * q,
            size: 0.1 + 0.4 * q,
            hallucinate: 0.1 + 0.6 * q,
        }
    }
}

fn degrade(
    specs: &[FindingSpec],
    profile: ModelProfile,
    lexicon: &Lexicon,
    rng: &mut ChaCha8Rng,
) -> Vec<FindingSpec> {
    let mut out = Vec::new();
    for s in specs {
        if rng.random_bool(profile.drop) {
            continue;
        }
        let mut s = s.clone();
        if rng.random_bool(profile.flip) {
            s.present = !s.present;
            s.size_mm = None;
            s.side = if s.present && sided(&s.term) {
                random_side(rng)
            } else {
                Laterality::None
            };
        }
        if s.side != Laterality::None && rng.random_bool(profile.side) {
            s.side = match s.side {
                Laterality::Left => Laterality::Right,
                _ => Laterality::Left,
            };
        }
        if let Some(mm) = s.size_mm {
            if rng.random_bool(profile.size) {
                s.size_mm = Some((mm + rng.random_range(1..=6)).min(60));
            }
        }
        out.push(s);
    }
    if rng.random_bool(profile.hallucinate) {
        let extra = random_findings(lexicon, 1, rng);
        for e in extra {
            if !out.iter().any(|s| s.term == e.term) && !specs.iter().any(|s| s.term == e.term) {
                out.push(e);
            }
        }
    }
    out
}

/// `cases` references, each paired with one output per model. Model `i` of
/// `n` gets profile `graded(i / (n - 1))`.
pub fn synthetic_corpus(lexicon: &Lexicon, cases: usize, models: &[&str], seed: u64) -> Corpus {
    let mut pairs = Vec::with_capacity(cases * models.len());
    for c in 0..cases {
        let case_id = format!("case_{:04}", c + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[&case_id]));
        let n = rng.random_range(4..=8);
        let specs = random_findings(lexicon, n, &mut rng);
        let reference = render_report(&specs, lexicon, &mut rng);
        for (m, model) in models.iter().enumerate() {
            let q = if models.len() > 1 {
                m as f64 / (models.len() - 1) as f64
            } else {
                0.0
            };
            let mut mrng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[&case_id, model]));
            let pred = degrade(&specs, ModelProfile::graded(q), lexicon, &mut mrng);
            let candidate = render_report(&pred, lexicon, &mut mrng);
            pairs.push(EvalPair::new(&case_id, *model, &reference, candidate));
        }
    }
    Corpus::from_pairs(pairs, "<synthetic>").expect("generated ids are unique")
}

pub fn sample_corpus(lexicon: &Lexicon) -> Corpus {
    synthetic_corpus(lexicon, SAMPLE_CASES, &SAMPLE_MODELS, SAMPLE_SEED)
}
