//! Toroidal landscapes, simulated dial-tuning participants, trajectory
//! encodings and the training protocol used to tell solo from assisted play.
//!
//! Grid and convolution code is generic over the float type; the aliases at
//! the bottom name the instantiations the rest of the crate uses.

pub mod agents;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod jsonl;
pub mod landscape;
pub mod seed;
pub mod torus;

pub use agents::{
    generate_corpus, simulate_aided, simulate_solo, AgentConfig, Annealer, Condition, Frame, SimulatedCorpus,
    TrajectoryLog,
};
pub use dataset::{
    encode_corpus, kfold, load_pack, save_pack, split_80_20, trim_once, trim_outliers, Corpus, Provenance, SplitSpec,
    Subset,
};
pub use encoding::{
    classify_moves, encode_sample, normalize, series, ChannelStats, EncodedImage, EncodedSample, EncodingConfig,
    Formulation, MoveClass, MoveLabel,
};
pub use error::{CoreError, Result};
pub use experiment::{
    emit_report, fit, grid_search, run_protocol, train_once, GridResult, Hyperparams, HpGrid, ProtocolReport, TrialResult,
};
pub use landscape::{detect_peaks, HeightMap, LandscapeParams, Peak, PeakReport};
pub use seed::derive_seed;
pub use torus::{toroidal_manhattan, Grid, Node, Torus, GRID};

pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
