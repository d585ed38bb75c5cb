use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::fuse::fuse_forcings;
use super::ingest::{ingest_basin, parse_attributes, parse_manifest};
use super::record::BasinRecord;
use super::units::{mm_per_day_to_cfs, MISSING_SENTINEL};
use super::{DataError, Result};

/// On-disk dataset layout. [`DataLayout::new`] gives the default tree:
///
/// ```text
/// basins.txt                      basin ids, one per line
/// attributes.csv                  basin_id,area_km2,attr...
/// streamflow/<id>.csv             date,discharge_cfs
/// forcing/<product>/<id>.csv      date,var...
/// ```
///
/// Each location can be replaced individually; `forcing_dirs` overrides
/// the directory of single products.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataLayout {
    pub manifest: PathBuf,
    pub attributes: PathBuf,
    pub streamflow_dir: PathBuf,
    pub forcing_root: PathBuf,
    pub forcing_dirs: BTreeMap<String, PathBuf>,
}

impl DataLayout {
    pub fn new(root: impl AsRef<Path>) -> DataLayout {
        let root = root.as_ref();
        DataLayout {
            manifest: root.join("basins.txt"),
            attributes: root.join("attributes.csv"),
            streamflow_dir: root.join("streamflow"),
            forcing_root: root.join("forcing"),
            forcing_dirs: BTreeMap::new(),
        }
    }

    pub fn manifest(&self) -> PathBuf {
        self.manifest.clone()
    }

    pub fn attributes(&self) -> PathBuf {
        self.attributes.clone()
    }

    pub fn streamflow(&self, basin_id: &str) -> PathBuf {
        self.streamflow_dir.join(format!("{basin_id}.csv"))
    }

    pub fn forcing_dir(&self, product: &str) -> PathBuf {
        self.forcing_dirs.get(product).cloned().unwrap_or_else(|| self.forcing_root.join(product))
    }

    pub fn forcing(&self, product: &str, basin_id: &str) -> PathBuf {
        self.forcing_dir(product).join(format!("{basin_id}.csv"))
    }
}

/// Loads the manifest basins and fuses `products` in order. A basin with
/// no forcing file for some product is dropped; a listed basin without an
/// attribute row or streamflow file is an error.
pub fn load_dataset(layout: &DataLayout, products: &[String]) -> Result<Vec<BasinRecord>> {
    let ids = parse_manifest(&layout.manifest())?;
    let attrs = parse_attributes(&layout.attributes())?;
    let mut records = Vec::with_capacity(ids.len());
    for id in &ids {
        let row = attrs.get(id).ok_or_else(|| DataError::Ingest {
            file: layout.attributes().display().to_string(),
            message: format!("no attribute row for basin {id}"),
        })?;
        let paths: Vec<(String, PathBuf)> = products
            .iter()
            .map(|p| (p.clone(), layout.forcing(p, id)))
            .filter(|(_, path)| path.is_file())
            .collect();
        let forcings: Vec<(String, &Path)> = paths.iter().map(|(p, path)| (p.clone(), path.as_path())).collect();
        records.push(ingest_basin(row, &attrs.names, &layout.streamflow(id), &forcings)?);
    }
    fuse_forcings(records, products)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| DataError::io(path, e))?))
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut w = create(path)?;
    for line in lines {
        writeln!(w, "{line}").map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Writes `records` in the layout read by [`load_dataset`]; discharge is
/// converted back to cfs and `NaN` becomes the missing sentinel. Returns
/// the written paths in order.
pub fn write_dataset(layout: &DataLayout, records: &[BasinRecord]) -> Result<Vec<PathBuf>> {
    let first = records.first().ok_or_else(|| DataError::Param("no basins to write".into()))?;
    let mut written = Vec::new();

    let manifest = layout.manifest();
    write_lines(&manifest, records.iter().map(|r| r.basin_id.clone()))?;
    written.push(manifest);

    let attributes = layout.attributes();
    let mut header = vec!["basin_id".to_string(), "area_km2".to_string()];
    header.extend(first.attribute_names.iter().cloned());
    let header = header.join(",");
    let rows = records.iter().map(|r| {
        let mut fields = vec![r.basin_id.clone(), r.area_km2.to_string()];
        fields.extend(r.attributes.iter().map(f64::to_string));
        fields.join(",")
    });
    write_lines(&attributes, std::iter::once(header).chain(rows))?;
    written.push(attributes);

    for r in records {
        let path = layout.streamflow(&r.basin_id);
        let mut lines = vec!["date,discharge_cfs".to_string()];
        for (day, &q) in r.discharge.iter().enumerate() {
            let cfs = if q.is_nan() { MISSING_SENTINEL } else { mm_per_day_to_cfs(q, r.area_km2)? };
            lines.push(format!("{},{cfs}", r.date(day)));
        }
        write_lines(&path, lines.into_iter())?;
        written.push(path);

        for block in &r.forcings {
            let path = layout.forcing(&block.product, &r.basin_id);
            let header = format!("date,{}", block.variables.join(","));
            let rows = (0..r.n_days()).map(|day| {
                let vals: Vec<String> = block.row(day).iter().map(f64::to_string).collect();
                format!("{},{}", r.date(day), vals.join(","))
            });
            write_lines(&path, std::iter::once(header).chain(rows))?;
            written.push(path);
        }
    }
    Ok(written)
}
