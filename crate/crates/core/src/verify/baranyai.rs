//! Partitions of all r-subsets of a ground set into classes of pairwise
//! disjoint subsets.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::flow::FlowNetwork;
use crate::error::{Error, Result};

/// Largest ground set accepted by [`baranyai_partition`].
pub const MAX_GROUND_SET: usize = 16;

/// Binomial coefficient, exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Classes of r-subsets of `{0, .., s-1}`. Subsets are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPartition {
    pub s: usize,
    pub r: usize,
    pub classes: Vec<Vec<Vec<usize>>>,
}

impl SubsetPartition {
    /// Upper bound on the class count, `2·C(s−1, r−1)`.
    pub fn class_bound(&self) -> u64 {
        2 * binomial(self.s - 1, self.r - 1)
    }

    /// Checks coverage, exactly-once, within-class disjointness and the
    /// class-count bound.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let (s, r) = (self.s, self.r);
        let mut seen: HashMap<u32, usize> = HashMap::new();
        for (c, class) in self.classes.iter().enumerate() {
            let mut used = 0u32;
            for subset in class {
                if subset.len() != r {
                    return Err(format!("class {c}: subset {subset:?} has size != {r}"));
                }
                let mut mask = 0u32;
                for &e in subset {
                    if e >= s {
                        return Err(format!("class {c}: element {e} outside ground set"));
                    }
                    mask |= 1 << e;
                }
                if mask.count_ones() as usize != r {
                    return Err(format!("class {c}: subset {subset:?} repeats an element"));
                }
                if used & mask != 0 {
                    return Err(format!("class {c}: subsets are not pairwise disjoint"));
                }
                used |= mask;
                *seen.entry(mask).or_default() += 1;
            }
        }
        if let Some((mask, n)) = seen.iter().find(|(_, &n)| n != 1) {
            return Err(format!("subset {mask:#b} appears {n} times"));
        }
        let total = binomial(s, r);
        if seen.len() as u64 != total {
            return Err(format!("{} of {total} subsets covered", seen.len()));
        }
        let bound = self.class_bound();
        if self.classes.len() as u64 > bound {
            return Err(format!("{} classes exceeds bound {bound}", self.classes.len()));
        }
        Ok(())
    }
}

/// Partitions the r-subsets of `{0, .., s-1}` into classes of disjoint subsets.
pub fn baranyai_partition(s: usize, r: usize) -> Result<SubsetPartition> {
    if r == 0 || r > s || s > MAX_GROUND_SET {
        return Err(Error::InvalidParameter(format!(
            "baranyai_partition needs 1 <= r <= s <= {MAX_GROUND_SET}, got s={s}, r={r}"
        )));
    }
    let masks: Vec<Vec<u32>> = match r {
        1 => vec![(0..s).map(|e| 1u32 << e).collect()],
        2 => circle_method(s),
        _ => flow_construction(s, r),
    };
    let mut classes: Vec<Vec<Vec<usize>>> = compact(masks)
        .into_iter()
        .map(|class| {
            let mut subsets: Vec<Vec<usize>> = class.into_iter().map(mask_elements).collect();
            subsets.sort();
            subsets
        })
        .collect();
    classes.sort();
    Ok(SubsetPartition { s, r, classes })
}

fn mask_elements(mask: u32) -> Vec<usize> {
    (0..32).filter(|&e| mask >> e & 1 == 1).collect()
}

/// Round-robin one-factorization of K_n, with a dummy vertex when s is odd.
fn circle_method(s: usize) -> Vec<Vec<u32>> {
    let n = s + s % 2;
    let hub = n - 1;
    (0..hub)
        .map(|k| {
            let mut pairs = vec![(hub, k)];
            for i in 1..n / 2 {
                pairs.push(((k + i) % hub, (k + hub - i) % hub));
            }
            pairs
                .into_iter()
                .filter(|&(a, b)| a < s && b < s)
                .map(|(a, b)| (1u32 << a) | (1u32 << b))
                .collect()
        })
        .collect()
}

/// Baranyai's integral-flow argument on a ground set padded to a multiple of r.
///
/// Elements are added one at a time. Each class holds `n/r` parts that
/// partition the elements placed so far; a max flow chooses which part of each
/// class receives the next element so that every part A occurs exactly
/// `C(n−k, r−|A|)` times after step k.
fn flow_construction(s: usize, r: usize) -> Vec<Vec<u32>> {
    let n = s.div_ceil(r) * r;
    let parts = n / r;
    let m = binomial(n - 1, r - 1) as usize;
    let mut classes: Vec<Vec<u32>> = vec![vec![0u32; parts]; m];

    for k in 0..n {
        let mut set_ids: HashMap<u32, usize> = HashMap::new();
        for class in &classes {
            for &part in class {
                if (part.count_ones() as usize) < r {
                    let next = set_ids.len();
                    set_ids.entry(part).or_insert(next);
                }
            }
        }
        let source = 0;
        let sink = 1 + m + set_ids.len();
        let mut g = FlowNetwork::new(sink + 1);
        for c in 0..m {
            g.add_edge(source, 1 + c, 1);
        }
        // class -> distinct part, capacity = multiplicity of that part in the class
        let mut class_edges: Vec<Vec<(u32, usize)>> = vec![Vec::new(); m];
        for (c, class) in classes.iter().enumerate() {
            let mut counts: HashMap<u32, u64> = HashMap::new();
            for &part in class {
                if (part.count_ones() as usize) < r {
                    *counts.entry(part).or_default() += 1;
                }
            }
            let mut counts: Vec<_> = counts.into_iter().collect();
            counts.sort_unstable();
            for (part, mult) in counts {
                let e = g.add_edge(1 + c, 1 + m + set_ids[&part], mult);
                class_edges[c].push((part, e));
            }
        }
        for (&part, &id) in &set_ids {
            let size = part.count_ones() as usize;
            let target = binomial(n - k - 1, r - size - 1);
            g.add_edge(1 + m + id, sink, target);
        }
        let pushed = g.max_flow(source, sink);
        assert_eq!(pushed as usize, m, "flow construction must saturate every class");
        for (c, edges) in class_edges.iter().enumerate() {
            let (part, _) = *edges
                .iter()
                .find(|(_, e)| g.flow(*e) == 1)
                .expect("each class routes one unit");
            let slot = classes[c].iter().position(|&p| p == part).expect("part present");
            classes[c][slot] |= 1 << k;
        }
    }

    let real = (1u32 << s) - 1;
    classes
        .into_iter()
        .map(|class| class.into_iter().filter(|&p| p & !real == 0).collect::<Vec<_>>())
        .filter(|class: &Vec<u32>| !class.is_empty())
        .collect()
}

/// First-fit merge of classes whose supports are disjoint.
fn compact(classes: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
    let mut sorted = classes;
    sorted.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let mut out: Vec<(u32, Vec<u32>)> = Vec::new();
    for class in sorted {
        let support = class.iter().fold(0u32, |a, &p| a | p);
        match out.iter_mut().find(|(used, _)| used & support == 0) {
            Some((used, merged)) => {
                *used |= support;
                merged.extend(class);
            }
            None => out.push((support, class)),
        }
    }
    out.into_iter().map(|(_, c)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(p: &SubsetPartition) -> Vec<Vec<Vec<usize>>> {
        p.classes
            .iter()
            .map(|c| c.iter().map(|a| a.iter().map(|e| e + 1).collect()).collect())
            .collect()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(0, 0), 1);
    }

    #[test]
    fn k4_matchings() {
        let p = baranyai_partition(4, 2).unwrap();
        assert_eq!(
            one_based(&p),
            vec![
                vec![vec![1, 2], vec![3, 4]],
                vec![vec![1, 3], vec![2, 4]],
                vec![vec![1, 4], vec![2, 3]],
            ]
        );
        assert!(p.classes.len() as u64 <= p.class_bound());
        p.validate().unwrap();
    }

    #[test]
    fn triangle_gives_singletons() {
        let p = baranyai_partition(3, 2).unwrap();
        assert_eq!(p.classes.len(), 3);
        assert!(p.classes.iter().all(|c| c.len() == 1));
        assert_eq!(p.class_bound(), 4);
        p.validate().unwrap();
    }

    #[test]
    fn single_pair() {
        let p = baranyai_partition(2, 2).unwrap();
        assert_eq!(p.classes, vec![vec![vec![0, 1]]]);
    }

    #[test]
    fn divisible_case_is_a_resolution() {
        // r | s: every class is a perfect partition, C(s-1, r-1) classes
        let p = baranyai_partition(9, 3).unwrap();
        p.validate().unwrap();
        assert_eq!(p.classes.len() as u64, binomial(8, 2));
        assert!(p.classes.iter().all(|c| c.len() == 3));
    }

    #[test]
    fn exhaustive_small_range() {
        for s in 1..=12 {
            for r in 1..=4.min(s) {
                let p = baranyai_partition(s, r).unwrap();
                p.validate().unwrap_or_else(|e| panic!("s={s} r={r}: {e}"));
            }
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(baranyai_partition(3, 0).is_err());
        assert!(baranyai_partition(3, 4).is_err());
        assert!(baranyai_partition(17, 2).is_err());
    }

    #[test]
    fn validate_catches_overlap() {
        let bad = SubsetPartition {
            s: 3,
            r: 2,
            classes: vec![vec![vec![0, 1], vec![1, 2]], vec![vec![0, 2]]],
        };
        assert!(bad.validate().is_err());
    }
}
