//! Aggregation of result rows into the benchmark table.

use std::collections::BTreeMap;
use std::path::Path;

use frostlab::error::{Error, Result};
use frostlab::strategies::StrategyKind;

use crate::run::ResultRow;

pub struct ReportCell {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

fn mean_std(values: &[f64]) -> ReportCell {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    ReportCell {
        mean,
        std: var.sqrt(),
        n,
    }
}

pub struct Report {
    pub protocol: String,
    pub dataset: String,
    /// Per strategy: (split-a, split-b, total) aggregates, in roster order.
    pub rows: Vec<(String, ReportCell, ReportCell, ReportCell)>,
}

fn roster_position(name: &str) -> usize {
    StrategyKind::ALL
        .iter()
        .position(|k| k.name() == name)
        .unwrap_or(StrategyKind::ALL.len())
}

/// Group result rows by strategy and aggregate across seeds.
pub fn aggregate(rows: &[ResultRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::Config("no result rows to aggregate".into()));
    }
    let protocols: Vec<String> = {
        let mut p: Vec<String> = rows.iter().map(|r| r.protocol.clone()).collect();
        p.sort();
        p.dedup();
        p
    };
    if protocols.len() > 1 {
        return Err(Error::Contract(format!(
            "mixed protocols in one result directory: {protocols:?}"
        )));
    }
    let datasets: Vec<String> = {
        let mut d: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
        d.sort();
        d.dedup();
        d
    };
    if datasets.len() > 1 {
        return Err(Error::Contract(format!(
            "mixed datasets in one result directory: {datasets:?}"
        )));
    }

    let mut by_strategy: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_strategy.entry(r.strategy.clone()).or_default().push(r);
    }
    let mut keyed: Vec<(String, Vec<&ResultRow>)> = by_strategy.into_iter().collect();
    keyed.sort_by_key(|(name, _)| (roster_position(name), name.clone()));

    let rows = keyed
        .into_iter()
        .map(|(name, rs)| {
            let a: Vec<f64> = rs.iter().map(|r| r.acc_split_a).collect();
            let b: Vec<f64> = rs.iter().map(|r| r.acc_split_b).collect();
            let t: Vec<f64> = rs.iter().map(|r| r.acc_total).collect();
            (name, mean_std(&a), mean_std(&b), mean_std(&t))
        })
        .collect();
    Ok(Report {
        protocol: protocols.into_iter().next().unwrap(),
        dataset: datasets.into_iter().next().unwrap(),
        rows,
    })
}

impl Report {
    pub fn column_titles(&self) -> [&'static str; 3] {
        if self.protocol == "split" {
            ["Classes 0-4", "Classes 5-9", "Total"]
        } else {
            ["Original", "Augmented", "Total"]
        }
    }

    /// Index of the per-column maximum, excluding the base row.
    fn column_max(&self, col: usize) -> Option<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, (name, ..))| name != "base")
            .max_by(|(_, a), (_, b)| {
                let av = [&a.1, &a.2, &a.3][col].mean;
                let bv = [&b.1, &b.2, &b.3][col].mean;
                av.partial_cmp(&bv).unwrap()
            })
            .map(|(i, _)| i)
    }

    /// Aligned text table; the best value per column (base excluded) is
    /// wrapped in asterisks.
    pub fn to_text(&self) -> String {
        let titles = self.column_titles();
        let maxima: Vec<Option<usize>> = (0..3).map(|c| self.column_max(c)).collect();
        let mut out = format!(
            "{} / {} ({} seeds per strategy)\n",
            self.dataset,
            self.protocol,
            self.rows.first().map(|r| r.1.n).unwrap_or(0)
        );
        out.push_str(&format!(
            "{:<12} {:>22} {:>22} {:>22}\n",
            "strategy", titles[0], titles[1], titles[2]
        ));
        for (i, (name, a, b, t)) in self.rows.iter().enumerate() {
            let fmt = |cell: &ReportCell, starred: bool| {
                let body = format!("{:.4} ± {:.4}", cell.mean, cell.std);
                if starred {
                    format!("*{body}*")
                } else {
                    body
                }
            };
            out.push_str(&format!(
                "{:<12} {:>22} {:>22} {:>22}\n",
                name,
                fmt(a, maxima[0] == Some(i)),
                fmt(b, maxima[1] == Some(i)),
                fmt(t, maxima[2] == Some(i)),
            ));
        }
        out.push_str("(* = best per column, base excluded)\n");
        out
    }

    pub fn to_csv(&self) -> String {
        let titles = self.column_titles();
        let slug = |t: &str| t.to_lowercase().replace([' ', '-'], "_");
        let mut out = format!(
            "strategy,{}_mean,{}_std,{}_mean,{}_std,{}_mean,{}_std,seeds\n",
            slug(titles[0]),
            slug(titles[0]),
            slug(titles[1]),
            slug(titles[1]),
            slug(titles[2]),
            slug(titles[2])
        );
        for (name, a, b, t) in &self.rows {
            out.push_str(&format!(
                "{name},{},{},{},{},{},{},{}\n",
                a.mean, a.std, b.mean, b.std, t.mean, t.std, a.n
            ));
        }
        out
    }
}

/// Load every result-*.json under a directory.
pub fn load_rows(dir: &Path) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("result-") && n.ends_with(".json"))
        })
        .collect();
    entries.sort();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        let row: ResultRow = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad result file {}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}
