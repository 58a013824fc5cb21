use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use anyhow::{bail, Context};
use shadv::fixtures::{ToyShape, THREE_CLASS, TWO_CLASS};
use shadv::{Classifier, ExternalClassifier, ToyClassifier};

/// Where class probabilities and image gradients come from.
#[derive(clap::Args, Debug, Clone)]
pub struct ClassifierArgs {
    /// Toy classifier weights written by `shadv train`
    #[arg(long, conflicts_with = "provider")]
    pub model: Option<PathBuf>,
    /// External gradient provider: `tcp:HOST:PORT`, or a command run over stdio
    #[arg(long)]
    pub provider: Option<String>,
    /// Number of classes the external provider reports
    #[arg(long, requires = "provider")]
    pub classes: Option<usize>,
    /// Seconds to wait for each provider reply
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
}

pub enum Loaded {
    Toy(ToyClassifier),
    External(ExternalClassifier),
}

impl Loaded {
    pub fn as_dyn(&mut self) -> &mut dyn Classifier {
        match self {
            Loaded::Toy(c) => c,
            Loaded::External(c) => c,
        }
    }
}

impl ClassifierArgs {
    pub fn load(&self) -> anyhow::Result<Loaded> {
        if let Some(path) = &self.model {
            let c = ToyClassifier::load(path).with_context(|| format!("loading {}", path.display()))?;
            return Ok(Loaded::Toy(c));
        }
        let Some(spec) = &self.provider else {
            bail!("no classifier: pass --model or --provider");
        };
        let classes = self.classes.context("--classes is required with --provider")?;
        let timeout = Duration::from_secs_f64(self.timeout);
        let ext = match spec.strip_prefix("tcp:") {
            Some(addr) => ExternalClassifier::connect(addr, classes, timeout),
            None => {
                let mut words = spec.split_whitespace();
                let program = words.next().context("empty provider command")?;
                ExternalClassifier::spawn(Command::new(program).args(words), classes, timeout)
            }
        }
        .with_context(|| format!("starting provider {spec}"))?;
        Ok(Loaded::External(ext))
    }
}

pub fn parse_shapes(name: &str) -> Result<&'static [ToyShape], String> {
    match name {
        "two-class" => Ok(&TWO_CLASS),
        "three-class" => Ok(&THREE_CLASS),
        other => Err(format!("unknown shape set '{other}' (two-class, three-class)")),
    }
}
