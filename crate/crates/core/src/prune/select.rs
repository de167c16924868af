use ndarray::Array2;

use crate::error::{Error, Result};
use crate::net::{LayerMask, Mask};

/// `⌈x⌉`, except that values within 1e-9 of an integer snap to it, so that
/// e.g. `(1 − 0.7)·10 = 3.0000000000000004` keeps 3.
pub fn robust_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r.max(0.0) as usize
    } else {
        x.ceil().max(0.0) as usize
    }
}

/// Number of weights kept out of `n` at sparsity `p`: `⌈(1 − p)·n⌉`.
pub fn keep_count(n: usize, sparsity: f64) -> usize {
    robust_ceil((1.0 - sparsity) * n as f64).min(n)
}

pub(crate) fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::Domain(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    Ok(())
}

/// Keeps exactly `keep` candidates with the highest scores. Candidates are
/// `(layer, flat index)` pairs; ties go to the lexicographically smallest
/// `(layer, row, col)`, which is the smallest `(layer, flat index)`.
pub(crate) fn top_k(scores: &[Array2<f64>], candidates: &[(u32, u32)], keep: usize) -> Vec<(u32, u32)> {
    let mut items: Vec<(f64, u32, u32)> = candidates
        .iter()
        .map(|&(l, i)| (scores[l as usize].as_slice().expect("scores are contiguous")[i as usize], l, i))
        .collect();
    if keep == 0 {
        return Vec::new();
    }
    if keep < items.len() {
        let order = |a: &(f64, u32, u32), b: &(f64, u32, u32)| {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
        };
        items.select_nth_unstable_by(keep - 1, order);
        items.truncate(keep);
    }
    items.into_iter().map(|(_, l, i)| (l, i)).collect()
}

/// Builds a mask keeping the top `⌈(1−p)·N⌉` scores over the prunable layers,
/// jointly (`per_layer = false`) or layer by layer. Other layers stay dense.
pub fn global_mask(scores: &[Array2<f64>], sparsity: f64, prunable: &[bool], per_layer: bool) -> Result<Mask> {
    check_sparsity(sparsity)?;
    if prunable.len() != scores.len() {
        return Err(Error::Shape(format!("{} prunable flags for {} score layers", prunable.len(), scores.len())));
    }
    let scores: Vec<Array2<f64>> = scores.iter().map(|s| s.as_standard_layout().into_owned()).collect();
    for (l, s) in scores.iter().enumerate() {
        if prunable[l] && s.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite score in layer {l}")));
        }
    }
    let mut kept: Vec<Vec<bool>> =
        scores.iter().zip(prunable).map(|(s, &p)| vec![!p; s.len()]).collect();
    let groups: Vec<Vec<usize>> = if per_layer {
        (0..scores.len()).filter(|&l| prunable[l]).map(|l| vec![l]).collect()
    } else {
        vec![(0..scores.len()).filter(|&l| prunable[l]).collect()]
    };
    for group in groups {
        let candidates: Vec<(u32, u32)> = group
            .iter()
            .flat_map(|&l| (0..scores[l].len() as u32).map(move |i| (l as u32, i)))
            .collect();
        for (l, i) in top_k(&scores, &candidates, keep_count(candidates.len(), sparsity)) {
            kept[l as usize][i as usize] = true;
        }
    }
    let layers = scores
        .iter()
        .zip(kept)
        .map(|(s, bits)| LayerMask::from_bits(s.nrows(), s.ncols(), bits))
        .collect::<Result<Vec<_>>>()?;
    Ok(Mask::new(layers))
}
