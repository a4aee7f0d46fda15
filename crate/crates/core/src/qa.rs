//! Knowledge Q&A generation from aspect-keyed question templates.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AspectKey, KnowledgeEntry, KnowledgeKind, QAPair};

pub const NAME_PLACEHOLDER: &str = "{name}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QaError {
    #[error("no question template for {kind}.{aspect}")]
    MissingTemplate { kind: KnowledgeKind, aspect: AspectKey },
    #[error("template for {kind}.{aspect} must contain {{name}} exactly once, found {found}")]
    BadPlaceholder {
        kind: KnowledgeKind,
        aspect: AspectKey,
        found: usize,
    },
    #[error("unknown {kind} aspect {key:?} in template config")]
    UnknownAspect { kind: KnowledgeKind, key: String },
    #[error("template config: {0}")]
    Config(String),
}

/// Question templates keyed by aspect (the aspect fixes the kind).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<AspectKey, String>,
}

/// On-disk layout: one table per kind, one key per aspect.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    #[serde(default)]
    disease: BTreeMap<String, String>,
    #[serde(default)]
    medicine: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    /// The indications and usage phrasings follow the published examples; the
    /// remaining eleven are our own wording.
    fn default() -> Self {
        use AspectKey::*;
        let pairs = [
            (Symptoms, "What are the symptoms of {name}?"),
            (Causes, "What causes {name}?"),
            (Diagnosis, "How is {name} diagnosed?"),
            (Treatment, "How is {name} treated?"),
            (Lifestyle, "What lifestyle advice is there for people with {name}?"),
            (Prevention, "How can {name} be prevented?"),
            (WhenToConsult, "When should someone with {name} see a doctor?"),
            (Indications, "What diseases does {name} treat?"),
            (UsageDosage, "How is {name} used?"),
            (Contraindications, "Who should not take {name}?"),
            (Precautions, "What precautions should be taken when using {name}?"),
            (Pharmacology, "How does {name} work?"),
            (Components, "What are the ingredients of {name}?"),
        ];
        TemplateSet {
            templates: pairs.into_iter().map(|(a, t)| (a, t.to_string())).collect(),
        }
    }
}

impl TemplateSet {
    pub fn empty() -> Self {
        TemplateSet {
            templates: BTreeMap::new(),
        }
    }

    pub fn get(&self, aspect: AspectKey) -> Option<&str> {
        self.templates.get(&aspect).map(String::as_str)
    }

    pub fn set(&mut self, aspect: AspectKey, template: impl Into<String>) {
        self.templates.insert(aspect, template.into());
    }

    /// Parse a TOML template config. Keys not present keep whatever `self`
    /// already holds, so `TemplateSet::default().overlay_toml(..)` edits the
    /// defaults.
    pub fn overlay_toml(mut self, text: &str) -> Result<Self, QaError> {
        let file: TemplateFile = toml::from_str(text).map_err(|e| QaError::Config(e.to_string()))?;
        for (kind, table) in [
            (KnowledgeKind::Disease, file.disease),
            (KnowledgeKind::Medicine, file.medicine),
        ] {
            for (key, tpl) in table {
                let aspect = AspectKey::parse(&key)
                    .filter(|a| a.kind() == kind)
                    .ok_or_else(|| QaError::UnknownAspect { kind, key: key.clone() })?;
                self.templates.insert(aspect, tpl);
            }
        }
        self.check_placeholders()?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self, QaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QaError::Config(format!("{}: {e}", path.display())))?;
        TemplateSet::default().overlay_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        let mut file = TemplateFile::default();
        for (a, t) in &self.templates {
            let table = match a.kind() {
                KnowledgeKind::Disease => &mut file.disease,
                KnowledgeKind::Medicine => &mut file.medicine,
            };
            table.insert(a.as_str().to_string(), t.clone());
        }
        toml::to_string(&file).expect("template file serialises")
    }

    fn check_placeholders(&self) -> Result<(), QaError> {
        for (a, t) in &self.templates {
            let found = t.matches(NAME_PLACEHOLDER).count();
            if found != 1 {
                return Err(QaError::BadPlaceholder {
                    kind: a.kind(),
                    aspect: *a,
                    found,
                });
            }
        }
        Ok(())
    }

    /// Every allowed (kind, aspect) has a template with a single `{name}`.
    pub fn check_complete(&self) -> Result<(), QaError> {
        self.check_placeholders()?;
        for kind in [KnowledgeKind::Disease, KnowledgeKind::Medicine] {
            for a in kind.aspects() {
                if !self.templates.contains_key(a) {
                    return Err(QaError::MissingTemplate { kind, aspect: *a });
                }
            }
        }
        Ok(())
    }
}

fn pairs_for_entry(entry: &KnowledgeEntry, templates: &TemplateSet) -> Result<Vec<QAPair>, QaError> {
    entry
        .aspects
        .iter()
        .map(|(aspect, text)| {
            let tpl = templates.get(*aspect).ok_or(QaError::MissingTemplate {
                kind: entry.kind,
                aspect: *aspect,
            })?;
            Ok(QAPair {
                question: tpl.replacen(NAME_PLACEHOLDER, &entry.name, 1),
                answer: text.clone(),
                kind: entry.kind,
                source_name: entry.name.clone(),
                aspect: *aspect,
            })
        })
        .collect()
}

/// One pair per (entry, present aspect), in entry order then canonical aspect
/// order.
pub fn generate_pairs(entries: &[KnowledgeEntry], templates: &TemplateSet) -> Result<Vec<QAPair>, QaError> {
    let per_entry: Vec<Vec<QAPair>> = entries
        .par_iter()
        .map(|e| pairs_for_entry(e, templates))
        .collect::<Result<_, _>>()?;
    Ok(per_entry.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub total: usize,
    pub by_kind: BTreeMap<KnowledgeKind, usize>,
    pub by_aspect: BTreeMap<AspectKey, usize>,
}

pub fn pair_stats(pairs: &[QAPair]) -> PairStats {
    let mut by_kind: BTreeMap<KnowledgeKind, usize> =
        [(KnowledgeKind::Disease, 0), (KnowledgeKind::Medicine, 0)].into();
    let mut by_aspect: BTreeMap<AspectKey, usize> = AspectKey::DISEASE
        .iter()
        .chain(AspectKey::MEDICINE.iter())
        .map(|a| (*a, 0))
        .collect();
    for p in pairs {
        *by_kind.entry(p.kind).or_default() += 1;
        *by_aspect.entry(p.aspect).or_default() += 1;
    }
    PairStats {
        total: pairs.len(),
        by_kind,
        by_aspect,
    }
}
