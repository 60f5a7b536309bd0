use std::io::Write;

use anyhow::{Context as _, Result};
use kmreview::corpus::{oversample, split as split_samples, stats as dataset_stats, to_jsonl, write_dataset};

use super::{Context, EXIT_OK};
use crate::cli::{DatasetStatsArgs, Format, ResampleArgs, SplitArgs};

pub fn stats(ctx: &Context, args: &DatasetStatsArgs) -> Result<u8> {
    let samples = ctx.load_dataset(&args.path, None)?;
    let s = dataset_stats(&samples);
    match args.format {
        Format::Pretty => {
            println!("total {}", s.total);
            println!("buggy {}", s.buggy_count);
            println!("clean {}", s.clean_count);
            println!("buggy_ratio {:.3}", s.buggy_ratio);
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&s)?),
    }
    Ok(EXIT_OK)
}

pub fn resample(ctx: &Context, args: &ResampleArgs) -> Result<u8> {
    let samples = ctx.load_dataset(&args.path, None)?;
    let balanced = oversample(&samples, ctx.seed)?;
    match &args.out {
        Some(path) => {
            write_dataset(path, &balanced, ctx.polarity())?;
            let s = dataset_stats(&balanced);
            eprintln!(
                "wrote {} samples ({} buggy, {} clean) to {}",
                s.total,
                s.buggy_count,
                s.clean_count,
                path.display()
            );
        }
        None => std::io::stdout()
            .write_all(to_jsonl(&balanced, ctx.polarity()).as_bytes())
            .context("writing stdout")?,
    }
    Ok(EXIT_OK)
}

pub fn split(ctx: &Context, args: &SplitArgs) -> Result<u8> {
    let samples = ctx.load_dataset(&args.path, None)?;
    let (train, test) = split_samples(&samples, args.train_fraction, ctx.seed)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let train_path = args.out.join("train.jsonl");
    let test_path = args.out.join("test.jsonl");
    write_dataset(&train_path, &train, ctx.polarity())?;
    write_dataset(&test_path, &test, ctx.polarity())?;
    println!("train {} -> {}", train.len(), train_path.display());
    println!("test {} -> {}", test.len(), test_path.display());
    Ok(EXIT_OK)
}
