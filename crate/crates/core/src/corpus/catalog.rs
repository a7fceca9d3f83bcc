//! Closed entity vocabularies and the global node-id space.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityClass {
    Action,
    Ingredient,
    Location,
}

impl EntityClass {
    pub const ALL: [EntityClass; 3] = [EntityClass::Action, EntityClass::Ingredient, EntityClass::Location];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityClass::Action => "action",
            EntityClass::Ingredient => "ingredient",
            EntityClass::Location => "location",
        }
    }

    /// Class index used as the node-classification target.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(EntityClass::Action),
            "ingredient" => Ok(EntityClass::Ingredient),
            "location" => Ok(EntityClass::Location),
            other => Err(Error::UnknownClass(other.to_string())),
        }
    }
}

/// One class's names, sorted alphabetically; the position is the local id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassVocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassVocab {
    pub fn new(names: impl IntoIterator<Item = String>) -> Self {
        let names: Vec<String> = names.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Actions, ingredients and locations. Global node ids concatenate the three
/// id spaces as `[actions | ingredients | locations]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EntityCatalog {
    pub actions: ClassVocab,
    pub ingredients: ClassVocab,
    pub locations: ClassVocab,
}

impl EntityCatalog {
    pub fn new(
        actions: impl IntoIterator<Item = String>,
        ingredients: impl IntoIterator<Item = String>,
        locations: impl IntoIterator<Item = String>,
    ) -> Self {
        Self {
            actions: ClassVocab::new(actions),
            ingredients: ClassVocab::new(ingredients),
            locations: ClassVocab::new(locations),
        }
    }

    pub fn class(&self, class: EntityClass) -> &ClassVocab {
        match class {
            EntityClass::Action => &self.actions,
            EntityClass::Ingredient => &self.ingredients,
            EntityClass::Location => &self.locations,
        }
    }

    pub fn offset(&self, class: EntityClass) -> usize {
        match class {
            EntityClass::Action => 0,
            EntityClass::Ingredient => self.actions.len(),
            EntityClass::Location => self.actions.len() + self.ingredients.len(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.actions.len() + self.ingredients.len() + self.locations.len()
    }

    pub fn global_id(&self, class: EntityClass, local: usize) -> usize {
        self.offset(class) + local
    }

    /// Class and local id of a global node id.
    pub fn resolve(&self, global: usize) -> Result<(EntityClass, usize)> {
        for class in EntityClass::ALL.iter().rev() {
            let off = self.offset(*class);
            if global >= off && global < off + self.class(*class).len() {
                return Ok((*class, global - off));
            }
        }
        Err(Error::UnknownNode(global))
    }

    pub fn node_label(&self, global: usize) -> Result<(String, EntityClass)> {
        let (class, local) = self.resolve(global)?;
        let name = self.class(class).name(local).expect("resolved id is in range");
        Ok((name.to_string(), class))
    }

    pub fn lookup(&self, class: EntityClass, name: &str) -> Result<usize> {
        self.class(class).id(name).ok_or_else(|| Error::UnknownEntity {
            class: class.as_str(),
            name: name.to_string(),
        })
    }

    /// `class<TAB>id<TAB>string`, one line per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for class in EntityClass::ALL {
            for (i, name) in self.class(class).names().iter().enumerate() {
                out.push_str(&format!("{class}\t{i}\t{name}\n"));
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut per_class: [Vec<(usize, String)>; 3] = Default::default();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |message: &str| Error::Schema {
                line: n + 1,
                message: message.to_string(),
            };
            if fields.len() != 3 {
                return Err(bad("expected class<TAB>id<TAB>string"));
            }
            let class: EntityClass = fields[0].parse()?;
            let id: usize = fields[1].parse().map_err(|_| bad("id is not an integer"))?;
            per_class[class.index()].push((id, fields[2].to_string()));
        }
        let mut vocabs = Vec::new();
        for (ci, entries) in per_class.iter_mut().enumerate() {
            entries.sort();
            let vocab = ClassVocab::new(entries.iter().map(|(_, n)| n.clone()));
            for (id, name) in entries.iter() {
                if vocab.id(name) != Some(*id) {
                    return Err(Error::Invalid(format!(
                        "catalog ids for {} are not dense alphabetical",
                        EntityClass::ALL[ci]
                    )));
                }
            }
            vocabs.push(vocab);
        }
        let locations = vocabs.pop().expect("three classes");
        let ingredients = vocabs.pop().expect("three classes");
        let actions = vocabs.pop().expect("three classes");
        Ok(Self {
            actions,
            ingredients,
            locations,
        })
    }
}
