use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::stats::mean_std;
use super::Method;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    /// Population standard deviation over repetitions.
    pub std: f64,
    pub repetitions: usize,
    pub oracle: bool,
}

/// Bytes moved by the protocol runs of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkTotals {
    pub runs: usize,
    pub total_bytes: u64,
    pub predicted_bytes: u64,
    pub bytes_per_run: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: serde_json::Value,
    pub summaries: Vec<MethodSummary>,
    /// Per-repetition accuracies, in repetition order.
    pub samples: BTreeMap<Method, Vec<f64>>,
    pub diagnostics: BTreeMap<String, serde_json::Value>,
    pub network: Option<NetworkTotals>,
}

impl ExperimentReport {
    pub(crate) fn from_samples(
        name: impl Into<String>,
        config: serde_json::Value,
        methods: &[Method],
        runs: &[BTreeMap<Method, f64>],
    ) -> Self {
        let mut samples = BTreeMap::new();
        for &m in methods {
            samples.insert(m, runs.iter().map(|r| r[&m]).collect::<Vec<_>>());
        }
        let summaries = methods
            .iter()
            .map(|&method| {
                let (mean, std) = mean_std(&samples[&method]);
                MethodSummary { method, mean, std, repetitions: runs.len(), oracle: method.is_oracle() }
            })
            .collect();
        Self { name: name.into(), config, summaries, samples, diagnostics: BTreeMap::new(), network: None }
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn mean(&self, method: Method) -> Option<f64> {
        self.summary(method).map(|s| s.mean)
    }

    /// `method,mean,std,reps` with one row per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mean,std,reps\n");
        for s in &self.summaries {
            let _ = writeln!(out, "{},{:.6},{:.6},{}", s.method.name(), s.mean, s.std, s.repetitions);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.summaries.iter().map(|s| s.method.label().len()).max().unwrap_or(6).max(6);
        let mut out = format!("{}\n", self.name);
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>8}  {:>5}", "method", "accuracy", "std", "reps");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.2}%  {:>7.2}%  {:>5}",
                s.method.label(),
                100.0 * s.mean,
                100.0 * s.std,
                s.repetitions
            );
        }
        if let Some(n) = &self.network {
            let _ = writeln!(
                out,
                "network: {} runs, {} bytes traced, {} bytes predicted",
                n.runs, n.total_bytes, n.predicted_bytes
            );
        }
        out
    }

    pub fn config_json(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("config serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_table() {
        let runs = vec![
            BTreeMap::from([(Method::Delco, 0.9), (Method::Centralized, 0.5)]),
            BTreeMap::from([(Method::Delco, 0.8), (Method::Centralized, 0.5)]),
        ];
        let r = ExperimentReport::from_samples(
            "t",
            serde_json::json!({"seed": 1}),
            &[Method::Delco, Method::Centralized],
            &runs,
        );
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "method,mean,std,reps");
        assert!(csv.contains("delco,0.850000,0.050000,2"));
        assert!(r.to_table().contains("DELCO"));
        assert_eq!(r.summary(Method::Centralized).unwrap().std, 0.0);
    }
}
