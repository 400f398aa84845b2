//! Three-way duration labels from 1-D K-means.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationLabel {
    Fast,
    Medium,
    Slow,
}

impl DurationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DurationLabel::Fast => "fast",
            DurationLabel::Medium => "medium",
            DurationLabel::Slow => "slow",
        }
    }

    pub fn index(self) -> u32 {
        self as u32
    }

    pub fn from_index(i: u32) -> Option<DurationLabel> {
        [DurationLabel::Fast, DurationLabel::Medium, DurationLabel::Slow]
            .get(i as usize)
            .copied()
    }

    pub fn parse(s: &str) -> Option<DurationLabel> {
        match s {
            "fast" => Some(DurationLabel::Fast),
            "medium" => Some(DurationLabel::Medium),
            "slow" => Some(DurationLabel::Slow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<DurationLabel>,
    /// Ascending centroids in frames; empty on the fallback path.
    pub centroids: Vec<f64>,
    /// Fewer than three distinct durations: labels come from rank, not K-means.
    pub fallback: bool,
}

fn nearest(v: f64, c: &[f64; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if (v - c[k]).abs() < (v - c[best]).abs() {
            best = k;
        }
    }
    best
}

/// K-means with k = 3 over frame counts, initialized at the minimum, the
/// median distinct value and the maximum.
pub fn cluster_durations(durations: &[usize]) -> Clustering {
    let mut distinct: Vec<usize> = durations.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        let labels = durations
            .iter()
            .map(|d| match distinct.len() {
                2 if *d == distinct[0] => DurationLabel::Fast,
                2 => DurationLabel::Slow,
                _ => DurationLabel::Medium,
            })
            .collect();
        return Clustering {
            labels,
            centroids: vec![],
            fallback: true,
        };
    }
    let vals: Vec<f64> = durations.iter().map(|&d| d as f64).collect();
    let mut c = [
        distinct[0] as f64,
        distinct[distinct.len() / 2] as f64,
        distinct[distinct.len() - 1] as f64,
    ];
    let mut assign: Vec<usize> = vals.iter().map(|&v| nearest(v, &c)).collect();
    for _ in 0..1000 {
        for (k, ck) in c.iter_mut().enumerate() {
            let (s, n) = vals
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == k)
                .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
            if n > 0 {
                *ck = s / n as f64;
            }
        }
        let next: Vec<usize> = vals.iter().map(|&v| nearest(v, &c)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    // Centroids stay ordered because 1-D clusters never cross; sort anyway.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
    let rank = |k: usize| order.iter().position(|&o| o == k).expect("present");
    let names = [DurationLabel::Fast, DurationLabel::Medium, DurationLabel::Slow];
    Clustering {
        labels: assign.iter().map(|&k| names[rank(k)]).collect(),
        centroids: order.iter().map(|&k| c[k]).collect(),
        fallback: false,
    }
}
