use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shadv::adversary::SceneLighting;
use shadv::classifier::DEFAULT_HIDDEN;
use shadv::fixtures::{reference_lighting, render_bank, toy_bank, ToyShape, TOY_RESOLUTION};
use shadv::train::{random_lighting, train_toy, Augmentation, TrainOptions, RANDOM_LIGHTING_RANGE};
use shadv::ToyClassifier;

use crate::classifier::parse_shapes;
use crate::{Globals, Outcome};

#[derive(clap::Args)]
pub struct Args {
    /// Toy shape set: two-class (dome, bowl) or three-class (adds flat)
    #[arg(long, default_value = "two-class", value_parser = parse_shapes)]
    pub shapes: &'static [ToyShape],
    /// Training renders
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    /// none, random or adversarial lighting augmentation
    #[arg(long, default_value = "none")]
    pub augment: Augmentation,
    #[arg(long, default_value_t = TrainOptions::default().epochs)]
    pub epochs: usize,
    /// Hidden units of the toy MLP
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    pub hidden: usize,
    /// Augmented renders injected per epoch
    #[arg(long, default_value_t = TrainOptions::default().inject)]
    pub inject: usize,
    /// Held-out scenes under random lighting to report accuracy on
    #[arg(long, default_value_t = 0)]
    pub eval: usize,
    /// Output file name inside the output directory
    #[arg(long, default_value = "model.json")]
    pub name: String,
}

pub fn run(g: &Globals, a: Args) -> anyhow::Result<Outcome> {
    let bank = toy_bank(a.shapes, a.count, g.seed, false);
    let data = render_bank(&bank);
    let init = ToyClassifier::random(TOY_RESOLUTION, TOY_RESOLUTION, a.hidden, a.shapes.len(), g.seed);
    let opts = TrainOptions { epochs: a.epochs, inject: a.inject, augmentation: a.augment, seed: g.seed, ..TrainOptions::default() };
    let (clf, report) = train_toy(&init, &data, &bank, &opts)?;
    for (e, (acc, loss)) in report.accuracy.iter().zip(&report.loss).enumerate() {
        println!("epoch {:3} loss {loss:.4} train accuracy {acc:.3} injected {}", e + 1, report.injected[e]);
    }
    if a.eval > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(g.seed + 1000);
        let test: Vec<_> = toy_bank(a.shapes, a.eval, g.seed + 500, false)
            .into_iter()
            .map(|mut s| {
                s.scene.lighting = SceneLighting::Sh(random_lighting(&reference_lighting(), RANDOM_LIGHTING_RANGE, &mut rng));
                (s.scene.render_all().map(|mut v| v.remove(0)), s.label)
            })
            .map(|(img, l)| img.map(|i| (i, l)))
            .collect::<Result<_, _>>()?;
        println!("held-out accuracy under random lighting {:.3}", clf.accuracy(test.iter().map(|(i, l)| (i, *l))));
    }
    let path = g.out_dir()?.join(&a.name);
    clf.save(&path).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(Outcome::Ok)
}
