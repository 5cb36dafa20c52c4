use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::dot;

/// κ-nearest-neighbour vote by dot-product similarity.
///
/// Neighbours are the `kappa` most similar support items (equal similarities
/// are ordered by class id, so the pick does not depend on support order).
/// The majority class wins; vote ties go to the larger summed similarity,
/// then to the smaller class id.
pub fn knn_classify(support: &[(&[f64], u32)], query: &[f64], kappa: usize) -> Result<u32> {
    if support.is_empty() {
        return Err(Error::Precondition("κ-NN over an empty support set".into()));
    }
    if kappa == 0 || kappa > support.len() {
        return Err(Error::Precondition(format!(
            "κ={kappa} with {} support items",
            support.len()
        )));
    }
    let mut scored: Vec<(f64, u32)> = support
        .iter()
        .map(|(e, c)| {
            if e.len() != query.len() {
                return Err(Error::Dimension("support and query dimensions differ".into()));
            }
            Ok((dot(e, query), *c))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for &(s, c) in &scored[..kappa] {
        let v = votes.entry(c).or_default();
        v.0 += 1;
        v.1 += s;
    }
    // Ascending class order with strict comparisons keeps the smaller id on a full tie.
    let mut best: Option<(u32, usize, f64)> = None;
    for (c, (count, sum)) in votes {
        let better = match best {
            None => true,
            Some((_, bc, bs)) => count > bc || (count == bc && sum > bs),
        };
        if better {
            best = Some((c, count, sum));
        }
    }
    Ok(best.expect("kappa >= 1").0)
}
