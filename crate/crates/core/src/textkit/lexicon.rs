use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokenize::words;

const BUNDLED: &str = include_str!("../../data/lexicon.toml");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed lexicon: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("entity `{term}` has an empty variant")]
    EmptyVariant { term: String },
    #[error("variant `{variant}` maps to both `{first}` and `{second}`")]
    AmbiguousVariant {
        variant: String,
        first: String,
        second: String,
    },
    #[error("duplicate entity term `{0}`")]
    DuplicateTerm(String),
    #[error("synonym `{0}` appears in more than one synonym set")]
    OverlappingSynonyms(String),
    #[error("synonym entry `{0}` is not a single token")]
    SynonymNotUnigram(String),
    #[error("label `{label}` triggers unknown entity `{entity}`")]
    UnknownTrigger { label: String, entity: String },
    #[error("negation scope must be positive")]
    ZeroScope,
    #[error("lexicon has no negation cues")]
    NoCues,
    #[error("lexicon has no label schema")]
    NoLabelSchema,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Left,
    Right,
    Bilateral,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityDef {
    pub term: String,
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelDef {
    pub name: String,
    pub triggers: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegationRules {
    pub cues: Vec<String>,
    pub scope: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LateralityTerms {
    #[serde(default)]
    pub left: Vec<String>,
    #[serde(default)]
    pub right: Vec<String>,
    #[serde(default)]
    pub bilateral: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    schema_id: String,
    #[serde(default)]
    units: Vec<String>,
    #[serde(default)]
    synonyms: Vec<Vec<String>>,
    negation: NegationRules,
    #[serde(default)]
    laterality: LateralityTerms,
    #[serde(default, rename = "entity")]
    entities: Vec<EntityDef>,
    #[serde(default, rename = "label")]
    labels: Vec<LabelDef>,
}

/// Token-sequence phrase table with longest-match lookup.
#[derive(Debug, Clone)]
pub(crate) struct PhraseMatcher<T> {
    by_first: HashMap<String, Vec<(Vec<String>, T)>>,
}

impl<T: Clone> PhraseMatcher<T> {
    fn new() -> Self {
        Self {
            by_first: HashMap::new(),
        }
    }

    fn insert(&mut self, phrase: Vec<String>, value: T) {
        let first = phrase[0].clone();
        let bucket = self.by_first.entry(first).or_default();
        bucket.push((phrase, value));
        bucket.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    }

    /// Longest phrase starting at `at`, as (length, value).
    pub(crate) fn longest_at<S: AsRef<str>>(&self, tokens: &[S], at: usize) -> Option<(usize, &T)> {
        let bucket = self.by_first.get(tokens.get(at)?.as_ref())?;
        bucket.iter().find_map(|(phrase, value)| {
            let end = at + phrase.len();
            (end <= tokens.len()
                && phrase
                    .iter()
                    .zip(&tokens[at..end])
                    .all(|(p, t)| p == t.as_ref()))
            .then_some((phrase.len(), value))
        })
    }

    /// Non-overlapping left-to-right longest matches as (start, len, value),
    /// skipping any position for which `blocked` is true.
    pub(crate) fn scan<S: AsRef<str>>(
        &self,
        tokens: &[S],
        blocked: impl Fn(usize) -> bool,
    ) -> Vec<(usize, usize, T)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            if !blocked(i) {
                if let Some((len, value)) = self.longest_at(tokens, i) {
                    if !(i..i + len).any(&blocked) {
                        out.push((i, len, value.clone()));
                        i += len;
                        continue;
                    }
                }
            }
            i += 1;
        }
        out
    }
}

/// Validated clinical lexicon: entities, negation cues, laterality, synonyms and labels.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub schema_id: String,
    pub entities: Vec<EntityDef>,
    pub negation: NegationRules,
    pub laterality: LateralityTerms,
    pub synonym_sets: Vec<Vec<String>>,
    pub labels: Vec<LabelDef>,
    pub units: Vec<String>,
    pub(crate) entity_matcher: PhraseMatcher<usize>,
    pub(crate) cue_matcher: PhraseMatcher<()>,
    pub(crate) laterality_matcher: PhraseMatcher<Laterality>,
    synonym_index: HashMap<String, usize>,
    unit_set: HashSet<String>,
    term_index: HashMap<String, usize>,
    labels_by_term: HashMap<String, Vec<usize>>,
}

impl Lexicon {
    /// The chest-CT starter lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled lexicon is valid")
    }

    pub fn bundled_source() -> &'static str {
        BUNDLED
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(text)?;
        Self::build(file)
    }

    fn build(file: LexiconFile) -> Result<Self, LexiconError> {
        if file.negation.scope == 0 {
            return Err(LexiconError::ZeroScope);
        }
        let mut cue_matcher = PhraseMatcher::new();
        for cue in &file.negation.cues {
            let toks = words(cue);
            if !toks.is_empty() {
                cue_matcher.insert(toks, ());
            }
        }
        if cue_matcher.by_first.is_empty() {
            return Err(LexiconError::NoCues);
        }

        let mut entity_matcher = PhraseMatcher::new();
        let mut owner: BTreeMap<Vec<String>, String> = BTreeMap::new();
        let mut term_index = HashMap::new();
        for (idx, entity) in file.entities.iter().enumerate() {
            if term_index.insert(entity.term.clone(), idx).is_some() {
                return Err(LexiconError::DuplicateTerm(entity.term.clone()));
            }
            for variant in &entity.variants {
                let toks = words(variant);
                if toks.is_empty() {
                    return Err(LexiconError::EmptyVariant {
                        term: entity.term.clone(),
                    });
                }
                match owner.get(&toks) {
                    Some(first) if first != &entity.term => {
                        return Err(LexiconError::AmbiguousVariant {
                            variant: variant.clone(),
                            first: first.clone(),
                            second: entity.term.clone(),
                        })
                    }
                    Some(_) => continue,
                    None => {
                        owner.insert(toks.clone(), entity.term.clone());
                        entity_matcher.insert(toks, idx);
                    }
                }
            }
        }

        let mut laterality_matcher = PhraseMatcher::new();
        for (side, terms) in [
            (Laterality::Left, &file.laterality.left),
            (Laterality::Right, &file.laterality.right),
            (Laterality::Bilateral, &file.laterality.bilateral),
        ] {
            for term in terms {
                let toks = words(term);
                if !toks.is_empty() {
                    laterality_matcher.insert(toks, side);
                }
            }
        }

        let mut synonym_index = HashMap::new();
        for (set_idx, set) in file.synonyms.iter().enumerate() {
            for word in set {
                let toks = words(word);
                if toks.len() != 1 {
                    return Err(LexiconError::SynonymNotUnigram(word.clone()));
                }
                if synonym_index.insert(toks[0].clone(), set_idx).is_some() {
                    return Err(LexiconError::OverlappingSynonyms(word.clone()));
                }
            }
        }

        let mut labels_by_term: HashMap<String, Vec<usize>> = HashMap::new();
        for (label_idx, label) in file.labels.iter().enumerate() {
            for trigger in &label.triggers {
                if !term_index.contains_key(trigger) {
                    return Err(LexiconError::UnknownTrigger {
                        label: label.name.clone(),
                        entity: trigger.clone(),
                    });
                }
                labels_by_term
                    .entry(trigger.clone())
                    .or_default()
                    .push(label_idx);
            }
        }

        let unit_set = file.units.iter().map(|u| u.to_lowercase()).collect();
        Ok(Lexicon {
            schema_id: file.schema_id,
            entities: file.entities,
            negation: file.negation,
            laterality: file.laterality,
            synonym_sets: file
                .synonyms
                .into_iter()
                .map(|set| set.into_iter().map(|w| w.to_lowercase()).collect())
                .collect(),
            labels: file.labels,
            units: file.units,
            entity_matcher,
            cue_matcher,
            laterality_matcher,
            synonym_index,
            unit_set,
            term_index,
            labels_by_term,
        })
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.term_index.contains_key(term)
    }

    pub fn entity(&self, term: &str) -> Option<&EntityDef> {
        self.term_index.get(term).map(|&i| &self.entities[i])
    }

    /// Index of the synonym set containing `word` (lowercased), if any.
    pub fn synonym_set_of(&self, word: &str) -> Option<usize> {
        self.synonym_index.get(word).copied()
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        matches!((self.synonym_set_of(a), self.synonym_set_of(b)), (Some(x), Some(y)) if x == y)
    }

    pub fn is_unit(&self, token: &str) -> bool {
        self.unit_set.contains(token)
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub(crate) fn labels_for_term(&self, term: &str) -> &[usize] {
        self.labels_by_term.get(term).map_or(&[], Vec::as_slice)
    }

    /// Surface forms for one side, used when rewriting laterality.
    pub fn laterality_surface(&self, side: Laterality) -> Option<&str> {
        match side {
            Laterality::Left => self.laterality.left.first(),
            Laterality::Right => self.laterality.right.first(),
            Laterality::Bilateral => self.laterality.bilateral.first(),
            Laterality::None => None,
        }
        .map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_id = "t"
[negation]
scope = 3
cues = ["no"]
[[entity]]
term = "a"
variants = ["alpha"]
"#;

    #[test]
    fn bundled_lexicon_shape() {
        let lex = Lexicon::bundled();
        assert!(lex.entities.len() >= 40, "{}", lex.entities.len());
        assert_eq!(lex.label_count(), 18);
        assert_eq!(lex.negation.scope, 6);
        assert_eq!(
            lex.negation.cues,
            ["no", "without", "absence of", "negative for"]
        );
    }

    #[test]
    fn minimal_lexicon_parses() {
        let lex = Lexicon::from_toml(MINIMAL).unwrap();
        assert!(lex.contains_term("a"));
        assert_eq!(lex.label_count(), 0);
    }

    #[test]
    fn ambiguous_variant_rejected() {
        let text = format!("{MINIMAL}\n[[entity]]\nterm = \"b\"\nvariants = [\"Alpha\"]\n");
        assert!(matches!(
            Lexicon::from_toml(&text),
            Err(LexiconError::AmbiguousVariant { .. })
        ));
    }

    #[test]
    fn overlapping_synonyms_rejected() {
        let text = MINIMAL.replace(
            "[negation]",
            "synonyms = [[\"big\", \"large\"], [\"large\", \"huge\"]]\n[negation]",
        );
        assert!(matches!(
            Lexicon::from_toml(&text),
            Err(LexiconError::OverlappingSynonyms(w)) if w == "large"
        ));
    }

    #[test]
    fn unknown_trigger_rejected() {
        let text = format!("{MINIMAL}\n[[label]]\nname = \"x\"\ntriggers = [\"zzz\"]\n");
        assert!(matches!(
            Lexicon::from_toml(&text),
            Err(LexiconError::UnknownTrigger { .. })
        ));
    }

    #[test]
    fn zero_scope_rejected() {
        let text = MINIMAL.replace("scope = 3", "scope = 0");
        assert!(matches!(Lexicon::from_toml(&text), Err(LexiconError::ZeroScope)));
    }

    #[test]
    fn longest_match_wins() {
        let lex = Lexicon::bundled();
        let toks = words("small pericardial effusion");
        let (len, &idx) = lex.entity_matcher.longest_at(&toks, 1).unwrap();
        assert_eq!(len, 2);
        assert_eq!(lex.entities[idx].term, "pericardial_effusion");
    }
}
