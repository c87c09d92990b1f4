mod args;
mod commands;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command, SaliencyCommand, Settings};

fn run(cli: Cli) -> Result<()> {
    let s = Settings::resolve(&cli.global)?;
    dmlprobe::par::with_threads(s.threads, || match &cli.command {
        Command::Saliency(SaliencyCommand::Postprocess { in_dir, out_dir }) => {
            commands::saliency_postprocess(in_dir, out_dir)
        }
        Command::Saliency(SaliencyCommand::Compare { model_dirs }) => {
            commands::saliency_compare(model_dirs, &s)
        }
        Command::Nrprec {
            properties_csv,
            embeddings_dirs,
        } => commands::nrprec(properties_csv, embeddings_dirs, &s),
        Command::GroupTest { report_csvs, groups } => commands::group_test(report_csvs, groups, &s),
        Command::Manifest { count, render_jobs } => commands::manifest(*count, *render_jobs, &s),
        Command::SynthEmbed {
            manifest,
            weights,
            dim,
            noise,
        } => commands::synth_embed(manifest, weights, *dim, *noise, &s),
    })
}

fn main() -> ExitCode {
    // 0 success, 1 bad input or flags, 2 internal failure.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
