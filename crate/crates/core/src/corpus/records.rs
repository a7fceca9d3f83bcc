//! On-disk recipe records and their conversion to tokenized recipes.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::catalog::{EntityCatalog, EntityClass};
use crate::corpus::tokenize::Vocab;
use crate::error::{Error, Result};

/// One JSONL step. Missing or null gold fields mean "not annotated".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub text: String,
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub ingredients: Option<Vec<String>>,
    #[serde(default)]
    pub locations: Option<Vec<String>>,
}

impl StepRecord {
    pub fn unannotated(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            action: None,
            ingredients: None,
            locations: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeRecord {
    pub id: String,
    pub steps: Vec<StepRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    /// `[CLS]`-prefixed token ids, at most the configured sentence length.
    pub tokens: Vec<u32>,
    pub raw: String,
    pub gold_action: Option<usize>,
    pub gold_ingredients: Option<BTreeSet<usize>>,
    pub gold_locations: Option<BTreeSet<usize>>,
}

impl Instruction {
    pub fn is_annotated(&self) -> bool {
        self.gold_action.is_some() && self.gold_ingredients.is_some() && self.gold_locations.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recipe {
    pub id: String,
    pub instructions: Vec<Instruction>,
}

impl Recipe {
    pub fn is_annotated(&self) -> bool {
        self.instructions.iter().all(Instruction::is_annotated)
    }

    pub fn to_record(&self, catalog: &EntityCatalog) -> RecipeRecord {
        let names = |class: EntityClass, ids: &Option<BTreeSet<usize>>| {
            ids.as_ref().map(|set| {
                set.iter()
                    .map(|&i| catalog.class(class).name(i).unwrap_or("").to_string())
                    .collect()
            })
        };
        RecipeRecord {
            id: self.id.clone(),
            steps: self
                .instructions
                .iter()
                .map(|ins| StepRecord {
                    text: ins.raw.clone(),
                    action: ins
                        .gold_action
                        .and_then(|a| catalog.actions.name(a))
                        .map(str::to_string),
                    ingredients: names(EntityClass::Ingredient, &ins.gold_ingredients),
                    locations: names(EntityClass::Location, &ins.gold_locations),
                })
                .collect(),
        }
    }
}

/// Recipes with the catalog and vocabulary their ids refer to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub recipes: Vec<Recipe>,
    pub catalog: EntityCatalog,
    pub vocab: Vocab,
    pub max_len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub recipes: usize,
    pub instructions: usize,
    pub unannotated_instructions: usize,
    pub truncated_instructions: usize,
}

fn resolve_set(catalog: &EntityCatalog, class: EntityClass, names: &Option<Vec<String>>) -> Result<Option<BTreeSet<usize>>> {
    names
        .as_ref()
        .map(|ns| ns.iter().map(|n| catalog.lookup(class, n)).collect())
        .transpose()
}

impl Corpus {
    /// Builds the catalog from the union of annotations and the vocabulary
    /// from every step text.
    pub fn from_records(records: &[RecipeRecord], max_len: usize) -> Result<(Self, LoadReport)> {
        let mut actions = Vec::new();
        let mut ingredients = Vec::new();
        let mut locations = Vec::new();
        for step in records.iter().flat_map(|r| &r.steps) {
            actions.extend(step.action.clone());
            ingredients.extend(step.ingredients.iter().flatten().cloned());
            locations.extend(step.locations.iter().flatten().cloned());
        }
        let catalog = EntityCatalog::new(actions, ingredients, locations);
        let vocab = Vocab::build(records.iter().flat_map(|r| r.steps.iter().map(|s| s.text.as_str())));
        Self::with_lexicon(records, catalog, vocab, max_len)
    }

    /// Resolves records against an existing catalog and vocabulary.
    pub fn with_lexicon(
        records: &[RecipeRecord],
        catalog: EntityCatalog,
        vocab: Vocab,
        max_len: usize,
    ) -> Result<(Self, LoadReport)> {
        if max_len < 2 {
            return Err(Error::Config(format!("sentence length {max_len} leaves no room after [CLS]")));
        }
        let mut report = LoadReport {
            recipes: records.len(),
            ..Default::default()
        };
        let mut recipes = Vec::with_capacity(records.len());
        for rec in records {
            let mut instructions = Vec::with_capacity(rec.steps.len());
            for step in &rec.steps {
                let full = vocab.encode_words(&step.text).len() + 1;
                let ins = Instruction {
                    tokens: vocab.tokenize(&step.text, max_len),
                    raw: step.text.clone(),
                    gold_action: step
                        .action
                        .as_ref()
                        .map(|a| catalog.lookup(EntityClass::Action, a))
                        .transpose()?,
                    gold_ingredients: resolve_set(&catalog, EntityClass::Ingredient, &step.ingredients)?,
                    gold_locations: resolve_set(&catalog, EntityClass::Location, &step.locations)?,
                };
                report.instructions += 1;
                report.truncated_instructions += usize::from(full > max_len);
                report.unannotated_instructions += usize::from(!ins.is_annotated());
                instructions.push(ins);
            }
            recipes.push(Recipe {
                id: rec.id.clone(),
                instructions,
            });
        }
        Ok((
            Self {
                recipes,
                catalog,
                vocab,
                max_len,
            },
            report,
        ))
    }

    pub fn to_records(&self) -> Vec<RecipeRecord> {
        self.recipes.iter().map(|r| r.to_record(&self.catalog)).collect()
    }

    /// A corpus sharing this catalog and vocabulary over a subset of recipes.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            recipes: self.recipes[range].to_vec(),
            catalog: self.catalog.clone(),
            vocab: self.vocab.clone(),
            max_len: self.max_len,
        }
    }
}

pub fn parse_jsonl(reader: impl BufRead) -> Result<Vec<RecipeRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Schema {
            line: n + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecipeRecord = serde_json::from_str(&line).map_err(|e| {
            let message = e.to_string();
            // Extra keys in a step are entity classes outside the three known ones.
            match message.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
                Some(field) => Error::UnknownClass(field.to_string()),
                None => Error::Schema { line: n + 1, message },
            }
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RecipeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(std::io::BufReader::new(file))
}

pub fn write_jsonl(path: &Path, records: &[RecipeRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::Invalid(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a JSONL corpus and builds its catalog and vocabulary.
pub fn load_annotated_corpus(path: &Path, max_len: usize) -> Result<(Corpus, LoadReport)> {
    Corpus::from_records(&read_jsonl(path)?, max_len)
}
