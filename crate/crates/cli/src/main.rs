use std::process::ExitCode;

use anyhow::Result;
use clap::{Arg, ArgMatches, Command};
use convmatch_cli::commands::{self, heatmap_tags};
use convmatch_cli::{RunConfig, KEYS};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("synth", "Generate a synthetic corpus (train/valid/test and ordered variants)"),
    ("pretrain", "Contrastive pretraining on the training corpus"),
    ("finetune", "Fine-tune with binary cross-entropy and early stopping"),
    ("eval", "Score a corpus; add perturb_seed for the shuffled-context row"),
    ("bench", "Parameter counts and inference latency"),
    ("heatmap", "Export response/context similarity matrices as CSV"),
    ("ablate", "Train and compare the full model with each stage removed"),
];

fn cli() -> Command {
    let mut args = vec![Arg::new("config")
        .long("config")
        .value_name("FILE")
        .help("key=value file applied before flags")];
    for (key, help) in KEYS {
        args.push(Arg::new(*key).long(*key).value_name("VALUE").help(*help));
    }
    Command::new("convmatch")
        .about("Fully convolutional multi-turn response selection")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(
            SUBCOMMANDS
                .iter()
                .map(|(name, about)| Command::new(*name).about(*about).args(args.clone())),
        )
}

fn resolve(m: &ArgMatches) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        cfg.apply_file(path.as_ref())?;
    }
    for (key, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<()> {
    if n > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> Result<()> {
    Ok(())
}

fn run(name: &str, m: &ArgMatches) -> Result<()> {
    let cfg = resolve(m)?;
    set_threads(cfg.threads)?;
    match name {
        "synth" => {
            for f in commands::cmd_synth(&cfg)? {
                println!("wrote {}", f.display());
            }
        }
        "pretrain" => {
            let o = commands::cmd_pretrain(&cfg)?;
            for (e, l) in o.losses.iter().enumerate() {
                println!("epoch={e} loss={l:.6}");
            }
            println!("checkpoint={}", o.checkpoint.display());
        }
        "finetune" => {
            let o = commands::cmd_finetune(&cfg)?;
            if let (Some(m), Some(v)) = (o.fit.metric, o.fit.best_metric) {
                println!("best_epoch={} valid.{m}={v:.6}", o.fit.best_epoch.unwrap_or(0));
            }
            if let Some(t) = &o.test {
                print!("{}", t.key_values("test."));
            }
            println!("checkpoint={}", o.checkpoint.display());
        }
        "eval" => print!("{}", commands::cmd_eval(&cfg)?.text),
        "bench" => print!("{}", commands::cmd_bench(&cfg)?.text),
        "heatmap" => {
            for f in commands::cmd_heatmap(&cfg)? {
                println!("wrote {}", f.display());
            }
        }
        "ablate" => print!("{}", commands::ablation_table(&commands::cmd_ablate(&cfg)?)),
        _ => unreachable!("clap rejects unknown subcommands"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli()
        .after_help(format!("Heatmap layer tags: {}", heatmap_tags().join(", ")))
        .get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
