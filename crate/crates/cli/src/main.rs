//! `keyprint` command-line frontend.

mod args;
mod commands;

use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use args::{Cli, Command};
use commands::{Ctx, VerifyArgs};

fn run(cli: Cli) -> anyhow::Result<()> {
    let ctx = Ctx { seed: cli.seed, out_dir: cli.out_dir, format: cli.format };
    match cli.command {
        Command::Keygen { digits, out } => commands::keygen(&ctx, digits as usize, &out),
        Command::Register { owner, registry, encoder, code } => {
            commands::register(&ctx, &owner, &registry, &encoder, &code)
        }
        Command::BuildEncoder { key, encoder, out } => commands::build_encoder(&ctx, &key, &encoder, &out),
        Command::Encode { encoder, corpus, out } => commands::encode(&ctx, &encoder, &corpus, &out),
        Command::Inject { encoder, corpus, code, out } => commands::inject_cmd(&ctx, &encoder, &corpus, &code, &out),
        Command::Verify {
            encoder,
            channel,
            corpus,
            owner,
            registry_log,
            n_challenges,
            alpha,
            no_rs,
            random_prompts,
            timeout,
            code,
        } => commands::verify(
            &ctx,
            VerifyArgs {
                encoder: &encoder,
                channel: &channel,
                corpus: &corpus,
                owner: owner.as_deref(),
                registry_log: registry_log.as_deref(),
                n_challenges: n_challenges as usize,
                alpha,
                use_rs: !no_rs,
                random_prompts,
                timeout: Duration::from_secs(timeout),
                code: &code,
            },
        ),
        Command::AttackBench { bench, kinds, strengths } => commands::attack_bench(&ctx, &bench, &kinds, &strengths),
        Command::Avalanche { encoder, config, trials, pairs } => {
            commands::avalanche(&ctx, encoder.as_deref(), &config, trials as usize, pairs as usize)
        }
        Command::UnlearnBench { bench, max_unlearned } => commands::unlearn_bench(&ctx, &bench, max_unlearned),
        Command::ServeRegistry { bind, registry } => commands::serve_registry(&ctx, &bind, &registry),
        Command::ServeOracle { bind, channel } => commands::serve_oracle(&ctx, &bind, &channel),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
