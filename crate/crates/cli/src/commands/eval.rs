use anyhow::{Context as _, Result};
use kmreview::backend::FineTuneProfile;
use kmreview::evalharness::reference::render_reference_report;
use kmreview::evalharness::{compare_runs, load_table_rows, table_consistency_check, RunRecord, Runner};
use kmreview::promptkit::ScenarioKind;
use serde_json::json;

use super::{Context, EXIT_ERROR, EXIT_OK, EXIT_PROBLEM};
use crate::cli::{CheckTablesArgs, CompareArgs, EvalRunArgs, Format, TableFormat};

pub fn run(ctx: &Context, args: &EvalRunArgs) -> Result<u8> {
    let scenario = ctx.scenario(&args.scenario)?;
    let backend = ctx.backend(&args.backend)?;
    let dataset = ctx.load_dataset(&args.dataset, args.limit)?;
    let pool = match &args.scenario.pool {
        Some(path) => Some(ctx.load_dataset(path, None)?),
        None => None,
    };

    let mut runner = Runner::new(scenario.clone(), backend.as_ref(), &ctx.map)
        .seed(ctx.seed)
        .dataset_path(&args.dataset);
    if let Some(pool) = &pool {
        runner = runner.pool(pool);
    }
    if let Some(workers) = args.parallel {
        runner = runner.parallelism(workers);
    }
    if let Some(id) = &args.run_id {
        runner = runner.run_id(id.clone());
    }
    if matches!(scenario.kind, ScenarioKind::FineTunedDirect | ScenarioKind::Hybrid) {
        let model = args.model.clone().unwrap_or_else(|| "unspecified".to_string());
        runner = runner.fine_tune(FineTuneProfile::for_model(model));
    }
    let record = runner.run(&dataset)?;
    let dir = args.out.clone().unwrap_or_else(|| ctx.config.runs_dir.clone());
    let path = record.save(&dir)?;

    match args.format {
        Format::Pretty => {
            println!(
                "run {}: {} of {} samples, scenario {}, backend {}",
                record.run_id,
                record.rows.len(),
                dataset.len(),
                record.scenario.kind,
                record.backend
            );
            if let Some(m) = &record.metrics {
                println!(
                    "precision {:.3}  recall {:.3}  f1 {:.3}  accuracy {:.3}  unparsed {}",
                    m.precision, m.recall, m.f1, m.accuracy, m.unparsed_count
                );
            }
            let cm = &record.confusion;
            println!("confusion tp={} fp={} fn={} tn={}", cm.tp, cm.fp, cm.fn_, cm.tn);
            println!("record: {}", path.display());
        }
        Format::Json => {
            let doc = json!({
                "run_id": record.run_id,
                "record": path,
                "complete": record.complete,
                "confusion": record.confusion,
                "metrics": record.metrics,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    if let Some(reason) = &record.abort_reason {
        eprintln!("error: run incomplete: {reason}");
        return Ok(EXIT_ERROR);
    }
    Ok(EXIT_OK)
}

pub fn compare(args: &CompareArgs) -> Result<u8> {
    let records = args
        .records
        .iter()
        .map(|p| RunRecord::load(p).with_context(|| format!("loading run record {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let baseline = args.baseline.clone().unwrap_or_else(|| records[0].run_id.clone());
    let comparison = compare_runs(&records, &baseline)?;
    match args.format {
        TableFormat::Text => print!("{}", comparison.to_text()),
        TableFormat::Csv => print!("{}", comparison.to_csv()?),
        TableFormat::Json => println!("{}", serde_json::to_string_pretty(&comparison)?),
    }
    Ok(EXIT_OK)
}

pub fn check_tables(args: &CheckTablesArgs) -> Result<u8> {
    let rows = load_table_rows(&args.csv)?;
    let flags = table_consistency_check(&rows);
    match args.format {
        Format::Pretty => {
            let width = flags.iter().map(|f| f.label.len()).max().unwrap_or(0).max(3);
            println!("{:<width$}  reported  computed    delta  status", "row");
            for f in &flags {
                println!(
                    "{:<width$}  {:>8.3}  {:>8.3}  {:>+7.3}  {}",
                    f.label,
                    f.reported_f1,
                    f.computed_f1,
                    f.delta,
                    if f.flagged { "FLAGGED" } else { "ok" }
                );
            }
            let n = flags.iter().filter(|f| f.flagged).count();
            println!("{n} of {} rows inconsistent (|delta| > 0.01)", flags.len());
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&flags)?),
    }
    Ok(if flags.iter().any(|f| f.flagged) {
        EXIT_PROBLEM
    } else {
        EXIT_OK
    })
}

pub fn reference() -> Result<u8> {
    print!("{}", render_reference_report()?);
    Ok(EXIT_OK)
}
