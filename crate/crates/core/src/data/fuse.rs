use super::record::BasinRecord;
use super::{DataError, Result};

/// Keeps the basins that carry every product in `products` and orders
/// their forcing blocks as listed, dropping any other product. Basins
/// missing a product are dropped. Each product must expose the same
/// variables in every basin.
pub fn fuse_forcings(records: Vec<BasinRecord>, products: &[String]) -> Result<Vec<BasinRecord>> {
    if products.is_empty() {
        return Err(DataError::Fusion("no forcing products requested".into()));
    }
    for (i, p) in products.iter().enumerate() {
        if products[..i].contains(p) {
            return Err(DataError::Fusion(format!("product {p} listed twice")));
        }
    }
    let mut reference: Vec<Option<Vec<String>>> = vec![None; products.len()];
    let mut out = Vec::with_capacity(records.len());
    for mut record in records {
        if !products.iter().all(|p| record.forcing(p).is_some()) {
            continue;
        }
        let mut blocks = Vec::with_capacity(products.len());
        for (slot, p) in reference.iter_mut().zip(products) {
            let pos = record.forcings.iter().position(|b| &b.product == p).expect("checked above");
            let block = record.forcings.swap_remove(pos);
            match slot {
                Some(vars) if *vars != block.variables => {
                    return Err(DataError::Fusion(format!(
                        "product {p}: basin {} has variables {:?}, expected {:?}",
                        record.basin_id, block.variables, vars
                    )))
                }
                Some(_) => {}
                None => *slot = Some(block.variables.clone()),
            }
            blocks.push(block);
        }
        record.forcings = blocks;
        out.push(record);
    }
    if out.is_empty() {
        return Err(DataError::Fusion(format!("no basin carries all of {products:?}")));
    }
    Ok(out)
}
