//! Library side of the `convmatch` command-line tool: run configuration and
//! one entry point per subcommand.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_ablate, cmd_bench, cmd_eval, cmd_finetune, cmd_heatmap, cmd_pretrain, cmd_synth, load_model,
};
pub use config::{RunConfig, KEYS};
