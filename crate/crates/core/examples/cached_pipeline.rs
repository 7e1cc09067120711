//! The content-addressed pipeline behind the `naq` binary, driven from code.
//! A second run reuses every cached artifact.
//!
//!     RUST_LOG=info cargo run --example cached_pipeline

use naq::pipeline::{cmd_synth, Method, Pipeline, RunConfig};

fn main() -> naq::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = std::env::temp_dir().join("naq-pipeline-example");
    let mut cfg = RunConfig::default();
    cfg.dataset = cmd_synth(&cfg.synth, &root.join("data"))?;
    cfg.out = root.join("out");
    cfg.cache_dir = Some(root.join("cache"));
    cfg.method = Method::NaqDiff;
    cfg.episodes.count = 500;
    cfg.train.eval_every = 100;

    for run in 1..=2 {
        let p = Pipeline::new(cfg.clone())?;
        let (_, index) = p.index()?;
        let (_, model) = p.checkpoint()?;
        let (report, out) = p.report()?;
        println!(
            "run {run}: index cached {}, model cached {}, accuracy {:.3} +- {:.3} -> {}",
            index.cache_hit,
            model.cache_hit,
            report.mean_acc,
            report.ci95,
            out.path.display()
        );
    }
    Ok(())
}
