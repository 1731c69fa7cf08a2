//! Archive heatmap export: a grid CSV with one row per dim-0 bin and one
//! column per dim-1 bin, each cell holding the occupant's fitness or an
//! empty string. The header row carries the dim-1 bin lower bounds and each
//! data row is prefixed with its dim-0 bin lower bound.

use crate::archive::Archive;
use crate::error::{Error, Result};

pub fn heatmap_csv(archive: &Archive) -> Result<String> {
    let spec = archive.spec();
    if spec.dim_count() != 2 {
        return Err(Error::UnsupportedExport(format!(
            "heatmap needs a 2-dimensional archive, {} has {} dims",
            archive.tag(),
            spec.dim_count()
        )));
    }
    let (rows, cols) = (spec.dims()[0].bins, spec.dims()[1].bins);
    let mut out = String::new();
    for j in 0..cols {
        out.push(',');
        out.push_str(&format!("{}", spec.bin_lower(1, j)));
    }
    out.push('\n');
    for i in 0..rows {
        out.push_str(&format!("{}", spec.bin_lower(0, i)));
        for j in 0..cols {
            out.push(',');
            if let Some(elite) = archive.get(&[i, j]) {
                out.push_str(&format!("{}", elite.fitness));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_heatmap(archive: &Archive, path: &std::path::Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, heatmap_csv(archive)?)?;
    Ok(())
}
