use std::collections::BTreeMap;
use std::fmt::Write as _;

/// One metric value of one evaluated variant in one repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub variant: String,
    pub code_bits: usize,
    pub k: usize,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn label(&self) -> String {
        if self.variant.is_empty() {
            self.model.clone()
        } else {
            format!("{}-{}", self.model, self.variant)
        }
    }
}

/// Repeats of one (label, code length, k, metric) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub median: f64,
    pub mean: f64,
    pub repeats: usize,
}

impl Aggregate {
    fn of(values: &[f64]) -> Aggregate {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Aggregate {
            median,
            mean: v.iter().sum::<f64>() / n as f64,
            repeats: n,
        }
    }
}

/// Rows are models, columns are code length x cutoff. Baselines, which have
/// no code length, fill every code-length column.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub code_bits: Vec<usize>,
    pub ks: Vec<usize>,
    /// Row labels in display order.
    pub labels: Vec<String>,
    cells: BTreeMap<(String, usize, usize, String), Aggregate>,
    sources: BTreeMap<String, (String, String)>,
}

impl ReportTable {
    /// Groups repeats; `order` fixes the row order, unknown labels follow
    /// alphabetically.
    pub fn build(rows: &[MetricRow], code_bits: &[usize], ks: &[usize], order: &[String]) -> Self {
        let mut groups: BTreeMap<(String, usize, usize, String), Vec<f64>> = BTreeMap::new();
        let mut sources = BTreeMap::new();
        for r in rows {
            groups
                .entry((r.label(), r.code_bits, r.k, r.metric.clone()))
                .or_default()
                .push(r.value);
            sources.insert(r.label(), (r.model.clone(), r.variant.clone()));
        }
        let cells = groups
            .into_iter()
            .map(|(key, v)| (key, Aggregate::of(&v)))
            .collect();
        let mut labels: Vec<String> = order
            .iter()
            .filter(|l| sources.contains_key(*l))
            .cloned()
            .collect();
        for l in sources.keys() {
            if !labels.contains(l) {
                labels.push(l.clone());
            }
        }
        let mut code_bits = code_bits.to_vec();
        code_bits.sort_unstable();
        code_bits.dedup();
        ReportTable {
            code_bits,
            ks: ks.to_vec(),
            labels,
            cells,
            sources,
        }
    }

    /// Median over repeats. Baselines answer for any code length.
    pub fn get(&self, label: &str, code_bits: usize, k: usize, metric: &str) -> Option<&Aggregate> {
        self.cells
            .get(&(label.to_string(), code_bits, k, metric.to_string()))
            .or_else(|| {
                self.cells
                    .get(&(label.to_string(), 0, k, metric.to_string()))
            })
    }

    pub fn median(&self, label: &str, code_bits: usize, k: usize, metric: &str) -> Option<f64> {
        self.get(label, code_bits, k, metric).map(|a| a.median)
    }

    /// Aligned plain text: one block per metric.
    pub fn to_text(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        for (metric, title) in [("ndcg", "NDCG"), ("recall", "Recall")] {
            let _ = write!(out, "{:<width$}", format!("{title}@k"));
            for &r in &self.code_bits {
                let span = self.ks.len() * 8;
                let _ = write!(out, " | {:^span$}", format!("r={r}"), span = span - 1);
            }
            out.push('\n');
            let _ = write!(out, "{:<width$}", "");
            for _ in &self.code_bits {
                out.push_str(" |");
                for &k in &self.ks {
                    let _ = write!(out, " {:>7}", format!("k={k}"));
                }
            }
            out.push('\n');
            for label in &self.labels {
                let _ = write!(out, "{label:<width$}");
                for &r in &self.code_bits {
                    out.push_str(" |");
                    for &k in &self.ks {
                        match self.median(label, r, k, metric) {
                            Some(v) => {
                                let _ = write!(out, " {v:>7.4}");
                            }
                            None => {
                                let _ = write!(out, " {:>7}", "-");
                            }
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// `model,variant,code_bits,k,metric,median,mean,repeats`
    pub fn to_csv(&self, header_comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = header_comment {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("model,variant,code_bits,k,metric,median,mean,repeats\n");
        for label in &self.labels {
            let (model, variant) = &self.sources[label];
            for ((l, bits, k, metric), a) in &self.cells {
                if l == label {
                    let _ = writeln!(
                        out,
                        "{model},{variant},{bits},{k},{metric},{},{},{}",
                        a.median, a.mean, a.repeats
                    );
                }
            }
        }
        out
    }
}
