use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::manifest::{ManifestRecord, Split};
use crate::error::{bail, Result};
use crate::rng;

/// Assigns `split` on every record, stratified by label. In patient-wise
/// mode all records of a patient move together; a patient's class is the
/// majority label of its records.
pub fn split_stratified(records: &mut [ManifestRecord], fractions: [f64; 3], by_patient: bool, seed: u64) -> Result<()> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        bail!(Config, "split fractions {fractions:?} must be non-negative and sum to 1");
    }
    let used = fractions.iter().filter(|&&f| f > 0.0).count();

    // groups of record indices; without patients each record is its own group
    let mut groups: Vec<Vec<usize>> = Vec::new();
    if by_patient {
        let mut by_key: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            match &r.patient {
                Some(p) => {
                    let g = *by_key.entry(p.as_str()).or_insert_with(|| {
                        groups.push(Vec::new());
                        groups.len() - 1
                    });
                    groups[g].push(i);
                }
                None => groups.push(vec![i]),
            }
        }
    } else {
        groups = (0..records.len()).map(|i| vec![i]).collect();
    }

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (g, members) in groups.iter().enumerate() {
        let pos = members.iter().filter(|&&i| records[i].label == 1).count();
        let label = usize::from(2 * pos > members.len());
        by_class.entry(label).or_default().push(g);
    }

    for (&label, class_groups) in &by_class {
        let total: usize = class_groups.iter().map(|&g| groups[g].len()).sum();
        if total < used || class_groups.len() < used {
            bail!(Stratification, "class {label} has {total} record(s) in {} group(s), fewer than {used} splits", class_groups.len());
        }
        let mut order = class_groups.clone();
        order.shuffle(&mut rng::stream(seed, "split", label as u64));
        if by_patient {
            let targets: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
            let mut filled = [0usize; 3];
            // largest groups first keeps the greedy fill close to the targets
            order.sort_by_key(|&g| std::cmp::Reverse(groups[g].len()));
            for (k, &g) in order.iter().enumerate() {
                let remaining = order.len() - k;
                let empty: Vec<usize> = (0..3).filter(|&s| fractions[s] > 0.0 && filled[s] == 0).collect();
                let s = if empty.len() >= remaining {
                    empty[0]
                } else {
                    (0..3)
                        .filter(|&s| fractions[s] > 0.0)
                        .max_by(|&a, &b| {
                            let da = targets[a] - filled[a] as f64;
                            let db = targets[b] - filled[b] as f64;
                            da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                        })
                        .unwrap()
                };
                filled[s] += groups[g].len();
                for &i in &groups[g] {
                    records[i].split = Some(Split::ALL[s]);
                }
            }
        } else {
            let counts = apportion(total, fractions);
            let mut it = order.iter();
            for (s, &c) in counts.iter().enumerate() {
                for &g in it.by_ref().take(c) {
                    records[groups[g][0]].split = Some(Split::ALL[s]);
                }
            }
        }
    }
    Ok(())
}

/// Largest-remainder rounding of `total · fractions`, every used split
/// getting at least one item when possible.
pub fn apportion(total: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts = [0usize; 3];
    for s in 0..3 {
        counts[s] = exact[s].floor() as usize;
    }
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).partial_cmp(&(exact[a] - exact[a].floor())).unwrap().then(a.cmp(&b)));
    for &s in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if fractions[s] > 0.0 {
            counts[s] += 1;
            rest -= 1;
        }
    }
    // a used split that rounded to zero borrows from the largest one
    for s in 0..3 {
        if fractions[s] > 0.0 && counts[s] == 0 {
            let big = (0..3).max_by_key(|&k| counts[k]).unwrap();
            if counts[big] > 1 {
                counts[big] -= 1;
                counts[s] += 1;
            }
        }
    }
    counts
}
