//! Merges metrics CSV files into per-model summaries.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{summarize, ResultRow, SummaryRow, METRICS_HEADER};

/// Reads a `model,task,split,seed,mse,rse,corr` file.
pub fn read_metrics(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != METRICS_HEADER {
        return Err(parse_err(path, 1, format!("expected header `{METRICS_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("column {}: `{}` is not a number", k + 1, &rec[k])))
        };
        let seed = rec[3]
            .trim()
            .parse::<u64>()
            .map_err(|_| parse_err(path, line, format!("seed `{}` is not an integer", &rec[3])))?;
        let (mse, rse, corr) = (num(4)?, num(5)?, num(6)?);
        rows.push(ResultRow {
            model: rec[0].to_string(),
            task: rec[1].to_string(),
            split: rec[2].to_string(),
            seed,
            delta: 0,
            iterations: None,
            mse,
            rse,
            corr,
            count: 0,
            degenerate: rse.is_nan() || corr.is_nan(),
        });
    }
    Ok(rows)
}

fn parse_err(path: &Path, line: usize, detail: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        detail,
    }
}

/// Summarizes the union of several metrics files. The same model, task,
/// split and seed may not appear twice.
pub fn merge(paths: &[&Path]) -> Result<Vec<SummaryRow>> {
    let mut all = Vec::new();
    let mut seen = BTreeMap::new();
    for p in paths {
        for r in read_metrics(p)? {
            let key = (r.model.clone(), r.task.clone(), r.split.clone(), r.seed);
            if let Some(first) = seen.insert(key, p.to_path_buf()) {
                return Err(Error::Usage(format!(
                    "{}/{}/{} seed {} appears in both {} and {}",
                    r.model,
                    r.task,
                    r.split,
                    r.seed,
                    first.display(),
                    p.display()
                )));
            }
            all.push(r);
        }
    }
    Ok(summarize(&all))
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("model,task,split,metric,n,mean,std\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{},{}\n", r.model, r.task, r.split, r.metric, r.n, r.mean, r.std));
    }
    s
}

/// One table per task and split, models as rows, `mean ± std` cells.
pub fn markdown(rows: &[SummaryRow]) -> String {
    let mut tables: Vec<(String, String)> = Vec::new();
    let mut cells: BTreeMap<(String, String, String, String), &SummaryRow> = BTreeMap::new();
    let mut models: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for r in rows {
        let t = (r.task.clone(), r.split.clone());
        if !tables.contains(&t) {
            tables.push(t.clone());
        }
        let m = models.entry(t).or_default();
        if !m.contains(&r.model) {
            m.push(r.model.clone());
        }
        cells.insert((r.task.clone(), r.split.clone(), r.model.clone(), r.metric.clone()), r);
    }
    let mut s = String::new();
    for (task, split) in tables {
        s.push_str(&format!("### {task} / {split}\n\n| model | n | MSE | RSE | Corr |\n|---|---|---|---|---|\n"));
        for m in &models[&(task.clone(), split.clone())] {
            let cell = |metric: &str| match cells.get(&(task.clone(), split.clone(), m.clone(), metric.to_string())) {
                Some(r) => format!("{:.4} ± {:.4}", r.mean, r.std),
                None => "-".into(),
            };
            let n = cells
                .get(&(task.clone(), split.clone(), m.clone(), "mse".to_string()))
                .map_or(0, |r| r.n);
            s.push_str(&format!("| {m} | {n} | {} | {} | {} |\n", cell("mse"), cell("rse"), cell("corr")));
        }
        s.push('\n');
    }
    s
}
