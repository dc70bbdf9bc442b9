use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Scored candidates of one context, in their original order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedGroup {
    pub group_id: usize,
    /// `(score, label)` per candidate.
    pub candidates: Vec<(f64, u8)>,
}

impl RankedGroup {
    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    pub fn positives(&self) -> usize {
        self.candidates.iter().filter(|c| c.1 == 1).count()
    }

    /// Labels in ranked order.
    fn ranked_labels(&self) -> Vec<u8> {
        rank_group(self).iter().map(|&i| self.candidates[i].1).collect()
    }
}

/// Candidate indices by descending score; equal scores keep their original
/// order.
pub fn rank_group(group: &RankedGroup) -> Vec<usize> {
    let mut order: Vec<usize> = (0..group.n()).collect();
    order.sort_by(|&a, &b| group.candidates[b].0.total_cmp(&group.candidates[a].0));
    order
}

fn contributing(groups: &[RankedGroup]) -> impl Iterator<Item = &RankedGroup> {
    groups.iter().filter(|g| g.positives() > 0)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// `Rn@k`: mean share of each group's positives found in its top `k`.
pub fn recall_at_k(groups: &[RankedGroup], n: usize, k: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("R{n}@{k}: need 1 <= k <= n")));
    }
    if let Some(g) = groups.iter().find(|g| g.n() != n) {
        return Err(Error::invalid(format!(
            "group {} has {} candidates, expected {n}",
            g.group_id,
            g.n()
        )));
    }
    Ok(mean(contributing(groups).map(|g| {
        let labels = g.ranked_labels();
        let hits = labels[..k].iter().filter(|&&l| l == 1).count();
        hits as f64 / g.positives() as f64
    })))
}

/// Mean of `1 / rank` of each group's first positive.
pub fn mean_reciprocal_rank(groups: &[RankedGroup]) -> f64 {
    mean(contributing(groups).map(|g| {
        let first = g.ranked_labels().iter().position(|&l| l == 1).expect("has a positive");
        1.0 / (first + 1) as f64
    }))
}

/// Mean over groups of the precision at each positive's rank, averaged over
/// that group's positives.
pub fn mean_average_precision(groups: &[RankedGroup]) -> f64 {
    mean(contributing(groups).map(|g| {
        let mut hits = 0usize;
        let mut total = 0.0;
        for (i, &l) in g.ranked_labels().iter().enumerate() {
            if l == 1 {
                hits += 1;
                total += hits as f64 / (i + 1) as f64;
            }
        }
        total / hits as f64
    }))
}

/// Share of groups whose top candidate is positive.
pub fn precision_at_1(groups: &[RankedGroup]) -> f64 {
    mean(contributing(groups).map(|g| {
        let top = rank_group(g)[0];
        f64::from(g.candidates[top].1)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Recall { n: usize, k: usize },
    Map,
    Mrr,
    P1,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Recall { n, k } => write!(f, "R{n}@{k}"),
            Metric::Map => write!(f, "MAP"),
            Metric::Mrr => write!(f, "MRR"),
            Metric::P1 => write!(f, "P@1"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MAP" => return Ok(Metric::Map),
            "MRR" => return Ok(Metric::Mrr),
            "P@1" => return Ok(Metric::P1),
            _ => {}
        }
        let bad = || Error::invalid(format!("unknown metric `{s}` (use Rn@k, MAP, MRR, P@1)"));
        let rest = s.strip_prefix(['R', 'r']).ok_or_else(bad)?;
        let (n, k) = rest.split_once('@').ok_or_else(bad)?;
        Ok(Metric::Recall {
            n: n.parse().map_err(|_| bad())?,
            k: k.parse().map_err(|_| bad())?,
        })
    }
}

/// `Rn@1`, `Rn@2`, `Rn@5` (where `k < n`), MAP, MRR and P@1.
pub fn default_metrics(n: usize) -> Vec<Metric> {
    let mut m: Vec<Metric> = [1, 2, 5]
        .into_iter()
        .filter(|&k| k < n || k == 1)
        .map(|k| Metric::Recall { n, k })
        .collect();
    m.extend([Metric::Map, Metric::Mrr, Metric::P1]);
    m
}

/// Computed metrics plus group bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub groups: usize,
    /// Groups without a positive, left out of every mean.
    pub skipped: usize,
    pub values: Vec<(Metric, f64)>,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        self.values.iter().find(|(m, _)| *m == metric).map(|&(_, v)| v)
    }

    /// `key=value` lines, each key prefixed with `prefix`.
    pub fn key_values(&self, prefix: &str) -> String {
        let mut out = format!("{prefix}groups={}\n{prefix}skipped={}\n", self.groups, self.skipped);
        for (m, v) in &self.values {
            out.push_str(&format!("{prefix}{m}={v:.6}\n"));
        }
        out
    }
}

pub fn compute_metrics(groups: &[RankedGroup], metrics: &[Metric]) -> Result<MetricReport> {
    let values = metrics
        .iter()
        .map(|&m| {
            let v = match m {
                Metric::Recall { n, k } => recall_at_k(groups, n, k)?,
                Metric::Map => mean_average_precision(groups),
                Metric::Mrr => mean_reciprocal_rank(groups),
                Metric::P1 => precision_at_1(groups),
            };
            Ok((m, v))
        })
        .collect::<Result<_>>()?;
    Ok(MetricReport {
        groups: groups.len(),
        skipped: groups.iter().filter(|g| g.positives() == 0).count(),
        values,
    })
}

/// Aligned table with one row per labelled report, metrics as columns.
pub fn metric_table(rows: &[(&str, &MetricReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
    let names: Vec<String> = first.values.iter().map(|(m, _)| m.to_string()).collect();
    let mut out = format!("{:<label_w$}", "");
    for n in &names {
        out.push_str(&format!("  {n:>7}"));
    }
    out.push('\n');
    for (label, report) in rows {
        out.push_str(&format!("{label:<label_w$}"));
        for (_, v) in &report.values {
            out.push_str(&format!("  {v:>7.3}"));
        }
        out.push('\n');
    }
    out
}
