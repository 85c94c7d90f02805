//! Ratio-test matching with a mutual-best constraint.

use serde::{Deserialize, Serialize};

use super::descriptor::Descriptor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
    /// Larger of the two one-sided best/second-best ratios (0 without a second neighbour).
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy)]
struct Nearest {
    index: usize,
    best: f64,
    second: Option<f64>,
}

impl Nearest {
    fn ratio(&self) -> f64 {
        match self.second {
            None => 0.0,
            Some(s) if s > 0.0 => self.best / s,
            // two exact duplicates: maximally ambiguous
            Some(_) => 1.0,
        }
    }
}

fn nearest(row: impl Iterator<Item = f64>) -> Option<Nearest> {
    let mut out: Option<Nearest> = None;
    for (j, d) in row.enumerate() {
        if !d.is_finite() {
            continue;
        }
        out = Some(match out {
            None => Nearest {
                index: j,
                best: d,
                second: None,
            },
            Some(n) if d < n.best => Nearest {
                index: j,
                best: d,
                second: Some(n.best),
            },
            Some(n) => Nearest {
                second: Some(n.second.map_or(d, |s| s.min(d))),
                ..n
            },
        });
    }
    out
}

/// Mutual-best ratio matching over an `na x nb` distance table where
/// non-finite entries mark excluded pairs. A pair survives when each side is
/// the other's nearest neighbour and both one-sided ratios pass the threshold.
pub fn mutual_ratio_match(na: usize, nb: usize, dist: &[f64], ratio_threshold: f64) -> Vec<MatchPair> {
    assert_eq!(dist.len(), na * nb);
    let rows: Vec<Option<Nearest>> = (0..na)
        .map(|i| nearest(dist[i * nb..(i + 1) * nb].iter().copied()))
        .collect();
    let cols: Vec<Option<Nearest>> = (0..nb).map(|j| nearest((0..na).map(|i| dist[i * nb + j]))).collect();
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let Some(r) = row else { continue };
        let Some(c) = cols[r.index] else { continue };
        if c.index != i {
            continue;
        }
        let (ra, rb) = (r.ratio(), c.ratio());
        if ra <= ratio_threshold && rb <= ratio_threshold {
            out.push(MatchPair {
                index_a: i,
                index_b: r.index,
                distance: r.best,
                ratio: ra.max(rb),
            });
        }
    }
    out
}

pub fn distance_table(a: &[Descriptor], b: &[Descriptor]) -> Vec<f64> {
    let mut d = Vec::with_capacity(a.len() * b.len());
    for da in a {
        for db in b {
            d.push(da.distance(db));
        }
    }
    d
}

/// Exhaustive L2 matching of `a` against `b`.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], ratio_threshold: f64) -> Vec<MatchPair> {
    mutual_ratio_match(a.len(), b.len(), &distance_table(a, b), ratio_threshold)
}
