//! Recipe corpora: entity catalogs, tokenization, instruction splitting,
//! JSONL and flow-graph IO, and a synthetic annotated corpus.

pub mod catalog;
pub mod flowgraph;
pub mod records;
pub mod split;
pub mod synthetic;
pub mod tokenize;

pub use catalog::{ClassVocab, EntityCatalog, EntityClass};
pub use flowgraph::{aggregate_duplicates, FlowGraph, FlowNode};
pub use records::{
    load_annotated_corpus, parse_jsonl, read_jsonl, write_jsonl, Corpus, Instruction, LoadReport, Recipe,
    RecipeRecord, StepRecord,
};
pub use split::{split_instructions, Segment};
pub use synthetic::{generate_synthetic_corpus, template_graph, Manifest, SynthConfig};
pub use tokenize::Vocab;
