use serde::{Deserialize, Serialize};

/// Mean and population standard deviation; `(NaN, NaN)` for no values.
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One epoch of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training-batch loss.
    pub train_loss: f64,
    /// Loss watched by the schedule: validation loss, or the training loss
    /// when there is no validation split.
    pub monitored_loss: f64,
    /// Metric over the training batches as seen during the epoch.
    pub train_metric: f64,
    /// Evaluation-mode metric on the test split, when one exists.
    pub test_metric: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub epochs: usize,
    pub decays: usize,
    pub final_lr: f64,
    /// Evaluation-mode metric on the full training split after training.
    pub train_metric: f64,
    pub test_metric: Option<f64>,
    pub trajectory: Vec<EpochRecord>,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub test_mean: Option<f64>,
    pub test_sd: Option<f64>,
    pub train_mean: Option<f64>,
    pub train_sd: Option<f64>,
    pub epochs_mean: f64,
    pub seconds_per_epoch: f64,
    pub total_hours: f64,
}

/// Everything one experiment produced, plus the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    /// `"mae"` or `"accuracy"` / `"weighted_accuracy"`.
    pub metric: String,
    pub lower_is_better: bool,
    pub num_params: usize,
    pub seeds_requested: usize,
    /// True until every requested seed has finished.
    pub partial: bool,
    pub single_seed: bool,
    pub seeds: Vec<SeedResult>,
    pub summary: Summary,
    /// Row labels for the text table.
    pub dataset: String,
    pub pe_label: String,
    pub num_layers: usize,
    pub full_graph: bool,
    pub norm: String,
}

impl RunReport {
    pub fn summarize(seeds: &[SeedResult]) -> Summary {
        let train: Vec<f64> = seeds.iter().map(|s| s.train_metric).collect();
        let test: Vec<f64> = seeds.iter().filter_map(|s| s.test_metric).collect();
        let (train_mean, train_sd) = if train.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_and_sd(&train);
            (Some(m), Some(s))
        };
        let (test_mean, test_sd) = if test.is_empty() || test.len() != seeds.len() {
            (None, None)
        } else {
            let (m, s) = mean_and_sd(&test);
            (Some(m), Some(s))
        };
        let epochs: Vec<f64> = seeds.iter().map(|s| s.epochs as f64).collect();
        let total_epochs: usize = seeds.iter().map(|s| s.epochs).sum();
        let total_seconds: f64 = seeds.iter().map(|s| s.total_seconds).sum();
        Summary {
            test_mean,
            test_sd,
            train_mean,
            train_sd,
            epochs_mean: if epochs.is_empty() { 0.0 } else { mean_and_sd(&epochs).0 },
            seconds_per_epoch: if total_epochs == 0 { 0.0 } else { total_seconds / total_epochs as f64 },
            total_hours: if seeds.is_empty() { 0.0 } else { total_seconds / seeds.len() as f64 / 3600.0 },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn fmt_metric(&self, v: f64) -> String {
        if self.lower_is_better {
            format!("{v:.3}")
        } else {
            format!("{:.3}", 100.0 * v)
        }
    }

    /// Plain-text table: one header line and one row, columns as in the
    /// classic sparse/full comparison layout.
    pub fn table(&self) -> String {
        let s = &self.summary;
        let pm = |m: Option<f64>, sd: Option<f64>| match (m, sd) {
            (Some(m), Some(sd)) => format!("{}±{}", self.fmt_metric(m), self.fmt_metric(sd)),
            _ => "n/a".to_string(),
        };
        let test = pm(s.test_mean, s.test_sd);
        let train = pm(s.train_mean, s.train_sd);
        let unit = if self.lower_is_better { "MAE" } else { "Acc. %" };
        let header = [
            "Dataset", "Graph", "Norm", "PE", "L", "#Param", "Test Perf.±s.d.", "Train Perf.±s.d.", "#Epoch",
            "Epoch/Total",
        ];
        let row = [
            self.dataset.clone(),
            if self.full_graph { "full" } else { "sparse" }.to_string(),
            self.norm.clone(),
            self.pe_label.clone(),
            self.num_layers.to_string(),
            self.num_params.to_string(),
            test,
            train,
            format!("{:.2}", s.epochs_mean),
            format!("{:.2}s/{:.4}hr", s.seconds_per_epoch, s.total_hours),
        ];
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.chars().count().max(r.chars().count()))
            .collect();
        let line = |cells: Vec<String>| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = format!("metric: {} ({unit})", self.metric);
        if self.single_seed {
            out.push_str(", single seed: s.d. is 0 by definition");
        }
        if self.partial {
            out.push_str(&format!(", PARTIAL: {}/{} seeds", self.seeds.len(), self.seeds_requested));
        }
        out.push('\n');
        out.push_str(&line(header.iter().map(|h| h.to_string()).collect()));
        out.push('\n');
        out.push_str(&line(row.to_vec()));
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sd_is_population() {
        assert_eq!(mean_and_sd(&[2.0]), (2.0, 0.0));
        assert_eq!(mean_and_sd(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_and_sd(&[0.5; 4]).1, 0.0);
    }
}
