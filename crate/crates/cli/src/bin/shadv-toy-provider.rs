//! Serves a toy classifier over the binary gradient protocol, on stdio or
//! on a TCP socket (one connection at a time).

use std::io::{stdin, stdout};
use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use shadv::classifier::serve;
use shadv::fixtures::{trained_toy, THREE_CLASS, TWO_CLASS};
use shadv::ToyClassifier;

#[derive(Parser)]
#[command(version, about = "Gradient provider backed by the toy classifier")]
struct Cli {
    /// Weights written by `shadv train`; without it a classifier is trained on the fly
    #[arg(long)]
    model: Option<PathBuf>,
    /// Classes of the on-the-fly classifier (2 or 3)
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Seed of the on-the-fly classifier
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Listen on this address instead of stdio, e.g. 127.0.0.1:7070
    #[arg(long)]
    listen: Option<String>,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut clf = match &cli.model {
        Some(p) => ToyClassifier::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => match cli.classes {
            2 => trained_toy(&TWO_CLASS, 400, cli.seed),
            3 => trained_toy(&THREE_CLASS, 600, cli.seed),
            n => anyhow::bail!("no built-in toy classifier with {n} classes"),
        },
    };
    match &cli.listen {
        None => serve(&mut clf, stdin().lock(), stdout().lock())?,
        Some(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = stream.try_clone()?;
                if let Err(e) = serve(&mut clf, reader, stream) {
                    eprintln!("connection ended: {e}");
                }
            }
        }
    }
    Ok(())
}
