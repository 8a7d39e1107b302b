use serde::Serialize;

use super::{run_attack, ApplicationError, AttackConfig, AttackMode};
use crate::diffraster::soft_render;
use crate::raster::rasterise;
use crate::scorer::Scorer;
use crate::sketch::VectorSketch;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub sketch: usize,
    pub mode: AttackMode,
    pub epsilon: usize,
    pub label: usize,
    pub pred_before: usize,
    pub pred_after: usize,
    pub removed: Vec<usize>,
    /// `attacked`, `no_candidate` or `rejected`.
    pub status: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSummary {
    pub mode: AttackMode,
    pub epsilon: usize,
    pub n: usize,
    pub attacked: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub summary: Vec<BenchmarkSummary>,
}

/// Runs every `(mode, epsilon)` attack on every labelled sketch. Sketches the
/// attack cannot touch keep their clean prediction.
pub fn attack_benchmark(
    classifier: &Scorer,
    corpus: &[(VectorSketch, usize)],
    configs: &[AttackConfig],
) -> Result<BenchmarkReport, ApplicationError> {
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for cfg in configs {
        let (mut before_ok, mut after_ok, mut attacked) = (0, 0, 0);
        for (i, (sketch, label)) in corpus.iter().enumerate() {
            let row = match run_attack(classifier, sketch, *label, cfg) {
                Ok(out) => {
                    attacked += 1;
                    BenchmarkRow {
                        sketch: i,
                        mode: cfg.mode,
                        epsilon: cfg.epsilon,
                        label: *label,
                        pred_before: out.pred_before,
                        pred_after: out.pred_after,
                        removed: out.removed,
                        status: "attacked",
                    }
                }
                Err(e @ (ApplicationError::NoCandidate { .. }
                | ApplicationError::TooFewStrokes(_)
                | ApplicationError::Budget(_))) => {
                    let image = match cfg.mode {
                        AttackMode::SlaRemoveStroke => rasterise(sketch),
                        AttackMode::PslaRemovePoints => soft_render(sketch, &cfg.params),
                    };
                    let pred = classifier.predict(&image)?;
                    let status = if matches!(e, ApplicationError::NoCandidate { .. }) { "no_candidate" } else { "rejected" };
                    BenchmarkRow {
                        sketch: i,
                        mode: cfg.mode,
                        epsilon: cfg.epsilon,
                        label: *label,
                        pred_before: pred,
                        pred_after: pred,
                        removed: vec![],
                        status,
                    }
                }
                Err(e) => return Err(e),
            };
            before_ok += (row.pred_before == row.label) as usize;
            after_ok += (row.pred_after == row.label) as usize;
            rows.push(row);
        }
        let n = corpus.len().max(1) as f64;
        let (accuracy_before, accuracy_after) = (before_ok as f64 / n, after_ok as f64 / n);
        summary.push(BenchmarkSummary {
            mode: cfg.mode,
            epsilon: cfg.epsilon,
            n: corpus.len(),
            attacked,
            accuracy_before,
            accuracy_after,
            drop: accuracy_before - accuracy_after,
        });
    }
    Ok(BenchmarkReport { rows, summary })
}

impl BenchmarkReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sketch,mode,epsilon,label,pred_before,pred_after,removed,status\n");
        for r in &self.rows {
            let mode = match r.mode {
                AttackMode::SlaRemoveStroke => "sla",
                AttackMode::PslaRemovePoints => "psla",
            };
            let removed: Vec<String> = r.removed.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!(
                "{},{mode},{},{},{},{},{},{}\n",
                r.sketch,
                r.epsilon,
                r.label,
                r.pred_before,
                r.pred_after,
                removed.join(";"),
                r.status
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }

    pub fn find(&self, mode: AttackMode, epsilon: usize) -> Option<&BenchmarkSummary> {
        self.summary.iter().find(|s| s.mode == mode && s.epsilon == epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Grid;
    use crate::sketch::Point;

    #[test]
    fn csv_and_counts() {
        let s = VectorSketch::new(
            vec![Point::down(1.0, 1.0), Point::down(9.0, 1.0), Point::up(9.0, 1.0), Point::down(2.0, 6.0), Point::up(2.0, 6.0)],
            16,
            16,
        )
        .unwrap();
        let c = Scorer::linear(&[Grid::filled(16, 16, 0.1), Grid::zeros(16, 16)], &[0.0, 0.0]).unwrap();
        let cfgs = [AttackConfig::new(AttackMode::SlaRemoveStroke, 2), AttackConfig::new(AttackMode::SlaRemoveStroke, 1)];
        let rep = attack_benchmark(&c, &[(s, 0)], &cfgs).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert_eq!(rep.rows[0].status, "attacked");
        assert_eq!(rep.rows[1].status, "no_candidate");
        assert_eq!(rep.find(AttackMode::SlaRemoveStroke, 2).unwrap().accuracy_before, 1.0);
        let csv = rep.to_csv();
        assert!(csv.starts_with("sketch,mode"));
        assert!(csv.contains("0,sla,2,0,0,0,1,attacked"));
    }
}
