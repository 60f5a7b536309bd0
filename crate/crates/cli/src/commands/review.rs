use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use kmreview::analyzer::analyze;
use kmreview::backend::ReviewTarget;
use kmreview::corpus::Label;
use kmreview::promptkit::{build_prompt, PromptBundle, ScenarioConfig};
use serde_json::json;

use super::analyze::render_findings;
use super::{mock_needs_gold, resolve_pool, resolve_target, Context, Target, EXIT_OK, EXIT_PROBLEM};
use crate::cli::{Format, PreviewArgs, ReviewArgs, ScenarioArgs, TargetArgs};

fn bundle_for(
    ctx: &Context,
    target_args: &TargetArgs,
    scenario_args: &ScenarioArgs,
) -> Result<(Target, ScenarioConfig, PromptBundle)> {
    let scenario = ctx.scenario(scenario_args)?;
    let target = resolve_target(ctx, target_args)?;
    let pool = resolve_pool(ctx, scenario_args, &target)?;
    if scenario.shots > 0 && pool.is_empty() {
        bail!(
            "scenario {} uses {} exemplar(s); pass --pool <dataset>",
            scenario.kind,
            scenario.shots
        );
    }
    let findings = scenario
        .include_findings
        .then(|| analyze(&target.sample.source, &ctx.map));
    let bundle = build_prompt(&target.sample, &scenario, &pool, &ctx.map, findings.as_deref())?;
    Ok((target, scenario, bundle))
}

pub fn review(ctx: &Context, args: &ReviewArgs) -> Result<u8> {
    if mock_needs_gold(&args.backend) && args.target.path.is_some() {
        bail!("--mock echo-gold/invert-gold need a labeled sample: use --dataset with --sample-id");
    }
    let backend = ctx.backend(&args.backend)?;
    let (target, scenario, bundle) = bundle_for(ctx, &args.target, &args.scenario)?;
    let review_target = ReviewTarget {
        id: target.sample.id,
        source: &target.sample.source,
        gold: target.gold,
    };
    let verdict = backend.classify(&bundle, &review_target)?;
    let findings = analyze(&target.sample.source, &ctx.map);

    match args.format {
        Format::Pretty => {
            println!(
                "verdict: {} ({})",
                verdict.label,
                format!("{:?}", verdict.parse_mode).to_lowercase()
            );
            println!("raw output: {:?}", verdict.raw_output);
            if let Some(gold) = target.gold {
                println!("gold label: {gold}");
            }
            println!(
                "scenario: {} (shots {}, catalog {}, findings {})",
                scenario.kind, scenario.shots, scenario.include_catalog, scenario.include_findings
            );
            println!(
                "prompt: {} chars of {}, exemplars {:?}",
                bundle.text.chars().count(),
                scenario.budget.max_chars,
                bundle.exemplar_ids
            );
            println!("backend: {}, latency {} ms", backend.describe(), verdict.latency_ms);
            println!("findings:");
            for line in render_findings(&findings, &ctx.map, "target").lines() {
                println!("  {line}");
            }
        }
        Format::Json => {
            let doc = json!({
                "verdict": verdict,
                "gold": target.gold,
                "scenario": scenario,
                "prompt": {"chars": bundle.text.chars().count(), "exemplar_ids": bundle.exemplar_ids},
                "backend": backend.describe(),
                "findings": findings,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(if verdict.label == Label::Buggy {
        EXIT_PROBLEM
    } else {
        EXIT_OK
    })
}

pub fn preview(ctx: &Context, args: &PreviewArgs) -> Result<u8> {
    let (_, _, bundle) = bundle_for(ctx, &args.target, &args.scenario)?;
    match &args.out {
        Some(path) => std::fs::write(path, &bundle.text).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{}", bundle.text),
    }
    let sidecar = args.sidecar.clone().or_else(|| {
        args.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".json");
            PathBuf::from(s)
        })
    });
    if let Some(path) = sidecar {
        let doc = json!({
            "sample_id": bundle.sample_id,
            "exemplar_ids": bundle.exemplar_ids,
            "scenario": bundle.scenario,
            "chars": bundle.text.chars().count(),
            "map_version": ctx.map.version(),
        });
        std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(EXIT_OK)
}
