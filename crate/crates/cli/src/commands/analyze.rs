use anyhow::Result;
use kmreview::analyzer::{analyze, analyze_strict, has_defect, Finding};
use kmreview::knowledge_map::KnowledgeMap;
use serde_json::json;

use super::{read_source, Context, EXIT_OK, EXIT_PROBLEM};
use crate::cli::{AnalyzeArgs, Format};

pub fn render_findings(findings: &[Finding], map: &KnowledgeMap, origin: &str) -> String {
    if findings.is_empty() {
        return "no findings\n".to_string();
    }
    let mut out = String::new();
    for f in findings {
        let severity = map
            .severity_of(&f.rule_id)
            .map_or("unknown".to_string(), |s| s.to_string());
        out.push_str(&format!(
            "{origin}:{}: {} ({severity}) {}\n",
            f.line, f.rule_id, f.message
        ));
        out.push_str(&format!("    {}\n", f.excerpt));
    }
    out
}

pub fn run(ctx: &Context, args: &AnalyzeArgs) -> Result<u8> {
    let source = read_source(&args.path)?;
    let findings = if args.strict {
        analyze_strict(&source, &ctx.map)?
    } else {
        analyze(&source, &ctx.map)
    };
    let defect = has_defect(&findings, &ctx.map);
    match args.format {
        Format::Pretty => {
            let origin = if args.path == "-" { "<stdin>" } else { &args.path };
            print!("{}", render_findings(&findings, &ctx.map, origin));
        }
        Format::Json => {
            let doc = json!({
                "path": args.path,
                "map_version": ctx.map.version(),
                "findings": findings,
                "defect": defect,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    Ok(if defect { EXIT_PROBLEM } else { EXIT_OK })
}
