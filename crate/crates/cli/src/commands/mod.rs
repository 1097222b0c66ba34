pub mod attribute;
pub mod diagnose;
pub mod emm_write;
pub mod segment;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use rayon::prelude::*;

/// How a batch command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
    Failed,
}

impl Outcome {
    /// Classifies a batch by its failures; an empty batch succeeds.
    pub fn of_batch(total: usize, failed: usize) -> Self {
        match failed {
            0 => Outcome::Success,
            f if f == total => Outcome::Failed,
            _ => Outcome::Partial,
        }
    }

    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Outcome::Success => 0,
            Outcome::Failed => 1,
            Outcome::Partial => 2,
        })
    }
}

/// Maps `f` over `items`, on the rayon pool when `parallel` is set. Output
/// order follows input order either way.
pub fn map_items<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

/// File stems of every `*.ext` file in `dir`, sorted.
pub fn ids_with_extension(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

pub fn check_dir(dir: &Path, what: &str) -> Result<()> {
    if !dir.is_dir() {
        anyhow::bail!("{what} {} is not a directory", dir.display());
    }
    Ok(())
}
