use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::WindowSet;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Stratified split of window positions by label. Each class with `n ≥ 2`
/// windows puts `clamp(round(n·fraction), 1, n−1)` in train; smaller classes
/// go to train whole. Both lists come back sorted.
pub fn split_indices(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::param(format!(
            "train fraction {fraction} outside (0, 1)"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = seeded(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut idx) in by_class {
        let n = idx.len();
        if n < 2 {
            log::warn!("class {class} has {n} window(s); all assigned to train");
            train.extend(idx);
            continue;
        }
        idx.shuffle(&mut rng);
        let k = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// [`split_indices`] applied to a window set.
pub fn split_train_test(
    ws: &WindowSet,
    fraction: f64,
    seed: u64,
) -> Result<(WindowSet, WindowSet)> {
    let (train, test) = split_indices(&ws.labels, fraction, seed)?;
    Ok((ws.subset(&train)?, ws.subset(&test)?))
}
