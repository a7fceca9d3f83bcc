//! Seeded template corpus with exact gold annotations and flow graphs.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::catalog::EntityClass;
use crate::corpus::flowgraph::{aggregate_duplicates, FlowGraph, FlowNode};
use crate::corpus::records::{RecipeRecord, StepRecord};
use crate::error::{Error, Result};

pub const ACTIONS: [&str; 16] = [
    "bake", "boil", "chop", "dice", "fry", "grate", "knead", "mash", "mix", "peel", "roast", "slice", "steam", "stir",
    "toss", "whisk",
];
pub const INGREDIENTS: [&str; 20] = [
    "apple", "bean", "butter", "carrot", "cheese", "dough", "egg", "flour", "garlic", "honey", "leek", "milk",
    "mushroom", "noodle", "onion", "pepper", "potato", "rice", "salt", "sugar",
];
pub const LOCATIONS: [&str; 10] = ["bowl", "dish", "jar", "oven", "pan", "plate", "pot", "skillet", "tray", "wok"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub actions: usize,
    pub ingredients: usize,
    pub locations: usize,
    /// Step templates with `{action}`, `{ingredient}` and optional `{location}`.
    pub templates: Vec<String>,
    pub min_steps: usize,
    pub max_steps: usize,
    pub max_ingredients_per_step: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            actions: 8,
            ingredients: 12,
            locations: 6,
            templates: [
                "{action} the {ingredient} in a {location}.",
                "{action} the {ingredient}.",
                "then {action} the {ingredient} in the {location}.",
                "next {action} the {ingredient}.",
            ]
            .map(String::from)
            .to_vec(),
            min_steps: 2,
            max_steps: 4,
            max_ingredients_per_step: 2,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let sizes = [
            (EntityClass::Action, self.actions, ACTIONS.len()),
            (EntityClass::Ingredient, self.ingredients, INGREDIENTS.len()),
            (EntityClass::Location, self.locations, LOCATIONS.len()),
        ];
        for (class, n, max) in sizes {
            if n < 2 || n > max {
                return Err(Error::Config(format!("{class} catalog size {n} outside 2..={max}")));
            }
        }
        if self.templates.is_empty() || self.templates.iter().any(|t| !t.contains("{action}") || !t.contains("{ingredient}")) {
            return Err(Error::Config("every template needs {action} and {ingredient}".into()));
        }
        if self.min_steps == 0 || self.min_steps > self.max_steps {
            return Err(Error::Config("step range must satisfy 1 <= min <= max".into()));
        }
        if self.max_ingredients_per_step == 0 || self.max_ingredients_per_step > self.ingredients {
            return Err(Error::Config("ingredients per step must be in 1..=catalog size".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub steps: Vec<StepRecord>,
    pub graph: FlowGraph,
}

/// Everything the generator decided: lexicon, every gold label and every
/// ground-truth graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub lexicon: BTreeMap<EntityClass, Vec<String>>,
    pub recipes: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn graph(&self, id: &str) -> Option<&FlowGraph> {
        self.recipes.iter().find(|e| e.id == id).map(|e| &e.graph)
    }
}

/// Ground-truth flow graph of annotated steps: `action -> ingredient`,
/// `location -> action`, and `previous action -> action` edges, with
/// duplicate nodes aggregated.
pub fn template_graph(steps: &[StepRecord]) -> FlowGraph {
    let mut g = FlowGraph::default();
    let mut prev_action = None;
    for step in steps {
        let Some(action) = &step.action else { continue };
        let a = g.nodes.len();
        g.nodes.push(FlowNode::new(action, EntityClass::Action));
        if let Some(p) = prev_action {
            g.edges.push((p, a));
        }
        for ing in step.ingredients.iter().flatten() {
            g.nodes.push(FlowNode::new(ing, EntityClass::Ingredient));
            g.edges.push((a, g.nodes.len() - 1));
        }
        for loc in step.locations.iter().flatten() {
            g.nodes.push(FlowNode::new(loc, EntityClass::Location));
            g.edges.push((g.nodes.len() - 1, a));
        }
        prev_action = Some(a);
    }
    aggregate_duplicates(&g)
}

pub fn generate_synthetic_corpus(seed: u64, n_recipes: usize, config: &SynthConfig) -> Result<(Vec<RecipeRecord>, Manifest)> {
    config.validate()?;
    let actions = &ACTIONS[..config.actions];
    let ingredients = &INGREDIENTS[..config.ingredients];
    let locations = &LOCATIONS[..config.locations];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_recipes);
    let mut entries = Vec::with_capacity(n_recipes);
    for r in 0..n_recipes {
        let n_steps = rng.random_range(config.min_steps..=config.max_steps);
        let mut steps = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            let template = config.templates.choose(&mut rng).expect("validated non-empty");
            let action = *actions.choose(&mut rng).expect("validated size");
            let k = rng.random_range(1..=config.max_ingredients_per_step);
            let ings: Vec<&str> = ingredients.choose_multiple(&mut rng, k).copied().collect();
            let loc = template
                .contains("{location}")
                .then(|| *locations.choose(&mut rng).expect("validated size"));
            let text = template
                .replace("{action}", action)
                .replace("{ingredient}", &ings.join(" and "))
                .replace("{location}", loc.unwrap_or(""));
            let mut ing_names: Vec<String> = ings.iter().map(|s| s.to_string()).collect();
            ing_names.sort();
            steps.push(StepRecord {
                text,
                action: Some(action.to_string()),
                ingredients: Some(ing_names),
                locations: Some(loc.map(str::to_string).into_iter().collect()),
            });
        }
        let id = format!("syn-{seed}-{r:05}");
        entries.push(ManifestEntry {
            id: id.clone(),
            graph: template_graph(&steps),
            steps: steps.clone(),
        });
        records.push(RecipeRecord { id, steps });
    }
    let lexicon = [
        (EntityClass::Action, actions),
        (EntityClass::Ingredient, ingredients),
        (EntityClass::Location, locations),
    ]
    .into_iter()
    .map(|(c, names)| (c, names.iter().map(|s| s.to_string()).collect()))
    .collect();
    Ok((
        records,
        Manifest {
            seed,
            config: config.clone(),
            lexicon,
            recipes: entries,
        },
    ))
}
