//! Evaluation: entity selection scores, graph edit distance, BLEU, ROUGE-L,
//! the random-graph baseline and the sampled evaluation protocol.

pub mod ged;
pub mod protocol;
pub mod selection;
pub mod text;

pub use ged::{ged, ged_exact, ged_heuristic, mapping_cost, EdgeMode, EditCost, EditOp, GedResult, DEFAULT_EXACT_LIMIT};
pub use protocol::{
    eligible_references, evaluate_protocol, random_graph_baseline, PairScore, ProtocolConfig, ProtocolReport,
    ReferencePair, Summary,
};
pub use selection::{class_scores, selection_scores, ClassScores, SelectionPair, SelectionScores};
pub use text::{bleu, corpus_bleu, corpus_rouge_l, lcs_len, modified_precision, rouge_l};
