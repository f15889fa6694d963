//! `hcr generate`: synthetic datasets in the CSV schema `load_csv_dataset`
//! reads back. Identical invocations produce byte-identical files.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use hcr_core::data::{make_shell_dataset, make_sphere_blobs, write_csv_dataset};

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    /// Gaussian class blobs re-normalized onto the unit sphere.
    Blobs,
    /// Concentric shells, one radius per class; not linearly separable.
    Shells,
}

impl DatasetKind {
    fn name(self) -> &'static str {
        match self {
            DatasetKind::Blobs => "blobs",
            DatasetKind::Shells => "shells",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator family.
    #[arg(long, value_enum)]
    pub kind: DatasetKind,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long = "per-class", default_value_t = 250)]
    pub per_class: usize,
    /// Inverse noise variance for blobs; shells ignore it.
    #[arg(long, default_value_t = 25.0)]
    pub concentration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: $HCR_OUT_DIR, else the working directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &GenerateArgs) -> anyhow::Result<()> {
    let dir = crate::resolve_out_dir(args.out.as_deref())?;

    let mut manifest = RunManifest::new(
        "generate",
        serde_json::json!({
            "kind": args.kind.name(),
            "classes": args.classes,
            "dim": args.dim,
            "per_class": args.per_class,
            "concentration": args.concentration,
        }),
    );
    manifest
        .seed("dataset", args.seed)
        .artifact("dataset", "dataset.csv")
        .stat("rows", args.classes * args.per_class);
    manifest.write(&dir)?;

    let ds = match args.kind {
        DatasetKind::Blobs => make_sphere_blobs(
            args.classes,
            args.dim,
            args.per_class,
            args.concentration,
            args.seed,
        )?,
        DatasetKind::Shells => {
            make_shell_dataset(args.classes, args.dim, args.per_class, args.seed)?
        }
    };

    let path = dir.join("dataset.csv");
    write_csv_dataset(&ds, &path).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} rows to {}", ds.len(), path.display());
    Ok(())
}
