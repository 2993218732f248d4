//! Versioned data files shipped with the engine.
//!
//! Vocabularies, safety orderings, the detector taxonomy, synonyms, grounding
//! lexicons, the causality table and evaluation predicates all live under
//! `data/` and are embedded at compile time. The curator UI reads the same
//! vocabulary through `GET /vocab`, so there is exactly one copy of each list.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::LazyLock;

use serde::Deserialize;

pub const VOCABULARY_SRC: &str = include_str!("../data/vocabulary.txt");
pub const SAFETY_ORDER_SRC: &str = include_str!("../data/safety_order.txt");
pub const TAXONOMY_SRC: &str = include_str!("../data/taxonomy.txt");
pub const SYNONYMS_SRC: &str = include_str!("../data/synonyms.txt");
pub const LEXICON_SRC: &str = include_str!("../data/lexicon.toml");
pub const CAUSALITY_SRC: &str = include_str!("../data/causality.toml");
pub const CATEGORIES_SRC: &str = include_str!("../data/categories.toml");

pub const SCOUT_SYSTEM_PROMPT: &str = include_str!("../prompts/scout_system.txt");
pub const JUDGE_SYSTEM_TEMPLATE: &str = include_str!("../prompts/judge_system.txt");
pub const OUTPUT_SKELETON: &str = include_str!("../prompts/output_skeleton.json");

/// Parses the `[section]` / one-token-per-line format used by the plain-text
/// data files. Blank lines and `#` comments are skipped.
pub fn parse_sectioned_list(src: &str) -> Result<Vec<(String, Vec<String>)>, String> {
    let mut sections: Vec<(String, Vec<String>)> = Vec::new();
    for (lineno, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if sections.iter().any(|(n, _)| n == name) {
                return Err(format!("line {}: duplicate section [{name}]", lineno + 1));
            }
            sections.push((name.to_string(), Vec::new()));
            continue;
        }
        match sections.last_mut() {
            Some((_, tokens)) => {
                if tokens.iter().any(|t| t == line) {
                    return Err(format!("line {}: duplicate token {line:?}", lineno + 1));
                }
                tokens.push(line.to_string());
            }
            None => return Err(format!("line {}: token outside of a section", lineno + 1)),
        }
    }
    Ok(sections)
}

/// Reads the `# version: N` header of a plain-text data file.
pub fn declared_version(src: &str) -> Option<u32> {
    src.lines()
        .filter_map(|l| l.trim().strip_prefix("# version:"))
        .find_map(|v| v.trim().parse().ok())
}

/// The strict enum vocabularies, one ordered token list per field.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub version: u32,
    fields: Vec<(String, Vec<String>)>,
}

impl Vocabulary {
    pub fn parse(src: &str) -> Result<Self, String> {
        Ok(Self {
            version: declared_version(src).unwrap_or(0),
            fields: parse_sectioned_list(src)?,
        })
    }

    pub fn tokens(&self, field: &str) -> &[String] {
        self.fields
            .iter()
            .find(|(name, _)| name == field)
            .map(|(_, tokens)| tokens.as_slice())
            .unwrap_or(&[])
    }

    pub fn contains(&self, field: &str, token: &str) -> bool {
        self.tokens(field).iter().any(|t| t == token)
    }

    /// Position of `token` in the canonical order of `field`.
    pub fn position(&self, field: &str, token: &str) -> Option<usize> {
        self.tokens(field).iter().position(|t| t == token)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.fields.iter().map(|(n, t)| (n.as_str(), t.as_slice()))
    }
}

/// Per-field ranking used to break consensus ties, most critical first.
#[derive(Debug, Clone)]
pub struct SafetyOrder {
    ranks: HashMap<String, HashMap<String, usize>>,
}

impl SafetyOrder {
    pub fn parse(src: &str) -> Result<Self, String> {
        let ranks = parse_sectioned_list(src)?
            .into_iter()
            .map(|(field, tokens)| {
                let ranked = tokens.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
                (field, ranked)
            })
            .collect();
        Ok(Self { ranks })
    }

    /// Lower rank means more safety-critical. Unknown tokens rank last.
    pub fn rank(&self, field: &str, token: &str) -> usize {
        self.ranks
            .get(field)
            .and_then(|r| r.get(token).copied())
            .unwrap_or(usize::MAX)
    }

    pub fn ordered(&self, field: &str) -> Vec<String> {
        let mut pairs: Vec<(&String, &usize)> =
            self.ranks.get(field).map(|r| r.iter().collect()).unwrap_or_default();
        pairs.sort_by_key(|(_, rank)| **rank);
        pairs.into_iter().map(|(t, _)| t.clone()).collect()
    }

    pub fn has_field(&self, field: &str) -> bool {
        self.ranks.contains_key(field)
    }
}

/// Detector prompt classes plus the raw-label synonym table.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    classes: Vec<String>,
    class_set: HashSet<String>,
    synonyms: HashMap<String, String>,
}

impl Taxonomy {
    pub fn parse(classes_src: &str, synonyms_src: &str) -> Result<Self, String> {
        let classes: Vec<String> = classes_src
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        let class_set: HashSet<String> = classes.iter().cloned().collect();
        if class_set.len() != classes.len() {
            return Err("taxonomy contains duplicate classes".into());
        }
        let mut synonyms = HashMap::new();
        for (lineno, raw) in synonyms_src.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (alias, canonical) = line
                .split_once('=')
                .ok_or_else(|| format!("synonyms line {}: expected `alias = class`", lineno + 1))?;
            let canonical = canonical.trim().to_string();
            if !class_set.contains(&canonical) {
                return Err(format!(
                    "synonyms line {}: {canonical:?} is not a taxonomy class",
                    lineno + 1
                ));
            }
            synonyms.insert(normalize_label(alias), canonical);
        }
        Ok(Self { classes, class_set, synonyms })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn contains(&self, class: &str) -> bool {
        self.class_set.contains(class)
    }

    pub fn synonym(&self, normalized: &str) -> Option<&str> {
        self.synonyms.get(normalized).map(String::as_str)
    }

    pub fn synonyms(&self) -> impl Iterator<Item = (&str, &str)> {
        self.synonyms.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Claim -> corroborating detector classes.
#[derive(Debug, Clone, Deserialize)]
pub struct Lexicon {
    pub version: u32,
    pub tags: BTreeMap<String, Vec<String>>,
    pub blocking_factor: BTreeMap<String, Vec<String>>,
    pub special_agent_class: BTreeMap<String, Vec<String>>,
    pub vru_status: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    /// Tags whose presence can be checked against detections.
    pub fn groundable_tags(&self) -> impl Iterator<Item = &str> {
        self.tags.keys().map(String::as_str)
    }

    pub fn tag_classes(&self, tag: &str) -> Option<&[String]> {
        self.tags.get(tag).map(Vec::as_slice)
    }

    /// Classes that corroborate `value` in an object-implying field.
    pub fn field_classes(&self, field: &str, value: &str) -> Option<&[String]> {
        let table = match field {
            "blocking_factor" => &self.blocking_factor,
            "special_agent_class" => &self.special_agent_class,
            "vru_status" => &self.vru_status,
            _ => return None,
        };
        table.get(value).map(Vec::as_slice)
    }

    pub fn all_classes(&self) -> impl Iterator<Item = &str> {
        self.tags
            .values()
            .chain(self.blocking_factor.values())
            .chain(self.special_agent_class.values())
            .chain(self.vru_status.values())
            .flatten()
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CausalityTable {
    pub version: u32,
    pub avoidance_actions: Vec<String>,
    pub passive_actions: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CategoryPredicate {
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub fields: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CategoryMap {
    pub version: u32,
    pub tracked: Vec<String>,
    #[serde(flatten)]
    pub predicates: BTreeMap<String, CategoryPredicate>,
}

pub static VOCABULARY: LazyLock<Vocabulary> =
    LazyLock::new(|| Vocabulary::parse(VOCABULARY_SRC).expect("embedded vocabulary is well-formed"));

pub static SAFETY_ORDER: LazyLock<SafetyOrder> = LazyLock::new(|| {
    SafetyOrder::parse(SAFETY_ORDER_SRC).expect("embedded safety ordering is well-formed")
});

pub static TAXONOMY: LazyLock<Taxonomy> = LazyLock::new(|| {
    Taxonomy::parse(TAXONOMY_SRC, SYNONYMS_SRC).expect("embedded taxonomy is well-formed")
});

pub static LEXICON: LazyLock<Lexicon> =
    LazyLock::new(|| toml::from_str(LEXICON_SRC).expect("embedded lexicon is well-formed"));

pub static CAUSALITY: LazyLock<CausalityTable> =
    LazyLock::new(|| toml::from_str(CAUSALITY_SRC).expect("embedded causality table is well-formed"));

pub static CATEGORIES: LazyLock<CategoryMap> =
    LazyLock::new(|| toml::from_str(CATEGORIES_SRC).expect("embedded category map is well-formed"));
