//! `hcr diagnose`: load a checkpoint, push a batch of un-augmented rows
//! through both heads, and report how far apart their pairwise-distance
//! distributions sit. Writes one histogram CSV per head and prints the
//! two-sample KS statistic.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use hcr_core::data::load_csv_dataset;
use hcr_core::diffnet::load_checkpoint;
use hcr_core::numfmt::format_f64;
use hcr_core::trainer::distance_consistency;
use ndarray::s;

use crate::manifest::RunManifest;

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset CSV; the first --batch rows are compared.
    #[arg(long)]
    pub data: PathBuf,
    /// Rows to compare; at least 8.
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long = "label-column", default_value = "true_label")]
    pub label_column: String,
    /// Output directory (default: $HCR_OUT_DIR, else the working directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &DiagnoseArgs) -> anyhow::Result<()> {
    if args.batch < 8 {
        crate::usage_error("--batch must be at least 8 for a stable comparison");
    }
    let dir = crate::resolve_out_dir(args.out.as_deref())?;

    let (net_cfg, params) = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let loaded = load_csv_dataset(&args.data, &args.label_column)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let ds = loaded.dataset;

    let rows = args.batch.min(ds.len());
    if rows < 8 {
        crate::usage_error(&format!(
            "dataset has only {} rows; need at least 8",
            ds.len()
        ));
    }

    let mut manifest = RunManifest::new(
        "diagnose",
        serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": args.data.display().to_string(),
            "label_column": args.label_column,
            "batch": args.batch,
        }),
    );
    manifest
        .artifact("hist_g", "hist_g.csv")
        .artifact("hist_h", "hist_h.csv")
        .artifact("report", "diagnose.json")
        .stat("rows_compared", rows);
    manifest.write(&dir)?;

    let batch = ds.features.slice(s![..rows, ..]).to_owned();
    let report = distance_consistency(&net_cfg, &params, &batch)?;

    std::fs::write(dir.join("hist_g.csv"), report.hist_g.to_csv())?;
    std::fs::write(dir.join("hist_h.csv"), report.hist_h.to_csv())?;
    let summary = serde_json::json!({
        "rows": rows,
        "ks_statistic": report.ks_statistic,
    });
    std::fs::write(
        dir.join("diagnose.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    println!("ks {}", format_f64(report.ks_statistic));
    Ok(())
}
