//! `ugm`: every pipeline stage as a file-to-file command.

mod commands;
mod render;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::Command;

const AFTER_HELP: &str = "\
FILES
    Cubes, feature cubes and segmentations use a UTF-8 header of key=value
    lines (height, width, bands, dtype, interleave=bsq, data=<raw file>)
    next to a little-endian band-sequential raw block. Probability and
    angle fields use the same layout with dtype=f64 and kind=proba or
    kind=angles. Label maps are binary PGM (P5) on output; PGM, CSV
    row,col,label triples or whitespace grids are accepted on input.
    Split files are CSV rows pixel_row,pixel_col,class,role.

ENVIRONMENT
    UGM_THREADS    Caps the worker pool (positive integer). Defaults to
                   the number of available cores.

EXIT STATUS
    0    success
    1    usage error: unknown flag, bad value, inconsistent options
    2    data error: unreadable, malformed or inconsistent input files

EXAMPLE
    ugm synth --cube scene.hdr --labels truth.pgm --seed 7
    ugm classify --features scene.hdr --labels truth.pgm --n-train 50 \\
        --split-out split.csv --out proba.hdr
    ugm smooth --scores proba.hdr --method alpha-expansion --beta 1 \\
        --cycles 15 --out map.pgm
    ugm eval --pred map.pgm --labels truth.pgm --split split.csv
    ugm render map.pgm auto map.ppm";

#[derive(Debug, Parser)]
#[command(
    name = "ugm",
    version,
    about = "Hyperspectral land-cover classification with MRFs and CRFs",
    long_about = "Hyperspectral land-cover classification with pairwise undirected graphical \
models. Each subcommand reads and writes plain files so stages compose through the \
filesystem: synth -> features -> classify -> smooth | crf -> eval -> render. \
All randomness is seeded through --seed.",
    after_long_help = AFTER_HELP,
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hsi_ugm::Error>() {
            return if e.is_data_error() { 2 } else { 1 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

/// The error chain on one line, skipping causes already quoted by an outer
/// message.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("UGM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("UGM_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ugm: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn data_errors_map_to_two() {
        let data = anyhow::Error::new(hsi_ugm::Error::Format("x".into())).context("reading");
        assert_eq!(exit_code(&data), 2);
        let usage = anyhow::Error::new(hsi_ugm::Error::InvalidArgument("x".into()));
        assert_eq!(exit_code(&usage), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag combination")), 1);
    }

    #[test]
    fn repeated_causes_are_dropped() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e = anyhow::Error::new(io).context("open a: gone").context("reading a");
        assert_eq!(describe(&e), "reading a: open a: gone");
    }
}
