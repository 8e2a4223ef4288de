//! CSV export of causal results:
//! `layer,channel,xi,p_0,…,p_{C-1},category`.

use crate::error::{Error, Result};
use crate::graph::NeuronId;

use super::{Category, CausalResult};

pub fn results_csv(results: &[CausalResult], alpha: f64) -> String {
    let classes = results.first().map_or(0, |r| r.per_class_p.len());
    let mut out = String::from("layer,channel,xi");
    for k in 0..classes {
        out.push_str(&format!(",p_{k}"));
    }
    out.push_str(",category\n");
    for r in results {
        out.push_str(&format!("{},{},{}", r.neuron.layer, r.neuron.channel, r.xi));
        for p in &r.per_class_p {
            out.push_str(&format!(",{p}"));
        }
        out.push_str(&format!(",{}\n", r.category.as_str()));
    }
    let _ = alpha;
    out
}

/// Parses [`results_csv`] output. Predicates are rebuilt from `alpha`.
pub fn parse_results_csv(text: &str, alpha: f64) -> Result<Vec<CausalResult>> {
    let bad = |line: usize, why: String| Error::format("causal CSV", format!("line {line}: {why}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[..3] != ["layer", "channel", "xi"] || cols.last() != Some(&"category") {
        return Err(bad(1, format!("unexpected header {header:?}")));
    }
    let classes = cols.len() - 4;
    for (k, c) in cols[3..3 + classes].iter().enumerate() {
        if *c != format!("p_{k}") {
            return Err(bad(1, format!("unexpected column {c:?}")));
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(bad(i + 1, format!("expected {} fields, got {}", cols.len(), f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 1, format!("{s:?}: {e}")));
        let layer = f[0].parse().map_err(|e| bad(i + 1, format!("layer {:?}: {e}", f[0])))?;
        let channel = f[1].parse().map_err(|e| bad(i + 1, format!("channel {:?}: {e}", f[1])))?;
        let xi = num(f[2])?;
        let per_class_p = f[3..3 + classes].iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?;
        let category = Category::parse(f[f.len() - 1])
            .ok_or_else(|| bad(i + 1, format!("unknown category {:?}", f[f.len() - 1])))?;
        let predicates = per_class_p.iter().map(|&p| p < alpha).collect();
        out.push(CausalResult { neuron: NeuronId::new(layer, channel), xi, per_class_p, predicates, category });
    }
    Ok(out)
}
