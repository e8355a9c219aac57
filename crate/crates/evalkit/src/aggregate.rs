use crate::error::{EvalError, Result};

/// Per-frame J and F scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub frame: usize,
    pub j: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricSummary {
    /// Average over frames.
    pub mean: f64,
    /// Fraction of frames scoring above 0.5.
    pub recall: f64,
    /// Mean of the first temporal quartile minus mean of the last.
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqScores {
    pub name: String,
    pub j: MetricSummary,
    pub f: MetricSummary,
    pub frames: usize,
}

impl SeqScores {
    pub fn jf_mean(&self) -> f64 {
        (self.j.mean + self.f.mean) / 2.0
    }
}

/// Per-sequence and pooled scores. Global values average the per-sequence
/// values (per-sequence pooling convention; flagged in the report header).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sequences: Vec<SeqScores>,
    pub j: MetricSummary,
    pub f: MetricSummary,
}

impl EvalReport {
    pub fn jf_mean(&self) -> f64 {
        (self.j.mean + self.f.mean) / 2.0
    }
}

/// Split `n` items into 4 contiguous chunks, the first `n % 4` one longer.
fn quartile_bounds(n: usize) -> [std::ops::Range<usize>; 4] {
    let base = n / 4;
    let extra = n % 4;
    let mut start = 0;
    std::array::from_fn(|i| {
        let len = base + usize::from(i < extra);
        let r = start..start + len;
        start += len;
        r
    })
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let recall = values.iter().filter(|&&v| v > 0.5).count() as f64 / n as f64;
    let q = quartile_bounds(n);
    let chunk_mean = |r: &std::ops::Range<usize>| -> f64 {
        values[r.clone()].iter().sum::<f64>() / r.len() as f64
    };
    let decay = chunk_mean(&q[0]) - chunk_mean(&q[3]);
    MetricSummary {
        mean,
        recall,
        decay,
    }
}

/// Aggregate per-frame scores of several sequences. Decay needs at least
/// four frames per sequence.
pub fn aggregate(per_sequence: &[(String, Vec<FrameScore>)]) -> Result<EvalReport> {
    if per_sequence.is_empty() {
        return Err(EvalError::Contract("no sequences to aggregate".into()));
    }
    let mut sequences = Vec::with_capacity(per_sequence.len());
    for (name, scores) in per_sequence {
        if scores.len() < 4 {
            return Err(EvalError::Contract(format!(
                "sequence `{name}` has {} frames; decay needs at least 4",
                scores.len()
            )));
        }
        let mut ordered = scores.clone();
        ordered.sort_by_key(|s| s.frame);
        let js: Vec<f64> = ordered.iter().map(|s| s.j).collect();
        let fs: Vec<f64> = ordered.iter().map(|s| s.f).collect();
        sequences.push(SeqScores {
            name: name.clone(),
            j: summarize(&js),
            f: summarize(&fs),
            frames: ordered.len(),
        });
    }
    let avg = |get: fn(&SeqScores) -> MetricSummary| -> MetricSummary {
        let n = sequences.len() as f64;
        MetricSummary {
            mean: sequences.iter().map(|s| get(s).mean).sum::<f64>() / n,
            recall: sequences.iter().map(|s| get(s).recall).sum::<f64>() / n,
            decay: sequences.iter().map(|s| get(s).decay).sum::<f64>() / n,
        }
    };
    Ok(EvalReport {
        j: avg(|s| s.j),
        f: avg(|s| s.f),
        sequences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(js: &[f64]) -> Vec<FrameScore> {
        js.iter()
            .enumerate()
            .map(|(i, &j)| FrameScore { frame: i, j, f: j })
            .collect()
    }

    #[test]
    fn perfect_scores_aggregate_cleanly() {
        let report = aggregate(&[("a".into(), scores(&[1.0; 8]))]).unwrap();
        assert_eq!(report.j.mean, 1.0);
        assert_eq!(report.j.recall, 1.0);
        assert_eq!(report.j.decay, 0.0);
        assert_eq!(report.jf_mean(), 1.0);
    }

    #[test]
    fn quartile_endpoints_fixture() {
        let report = aggregate(&[("a".into(), scores(&[1.0, 1.0, 0.0, 0.0]))]).unwrap();
        assert_eq!(report.j.recall, 0.5);
        assert_eq!(report.j.decay, 1.0);
    }

    #[test]
    fn random_scores_match_quartile_slice_oracle() {
        let mut state = 99u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) % 1000) as f64 / 1000.0
        };
        for n in [4usize, 5, 7, 10, 23] {
            let vals: Vec<f64> = (0..n).map(|_| next()).collect();
            let report = aggregate(&[("x".into(), scores(&vals))]).unwrap();
            // independent quartile computation
            let base = n / 4;
            let extra = n % 4;
            let first_len = base + usize::from(extra > 0);
            let last_len = base;
            let first: f64 = vals[..first_len].iter().sum::<f64>() / first_len as f64;
            let last: f64 = vals[n - last_len..].iter().sum::<f64>() / last_len as f64;
            assert!((report.j.decay - (first - last)).abs() < 1e-12, "n = {n}");
            let mean: f64 = vals.iter().sum::<f64>() / n as f64;
            assert!((report.j.mean - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn short_sequences_rejected() {
        assert!(aggregate(&[("a".into(), scores(&[1.0, 1.0, 1.0]))]).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn jf_mean_identity_holds() {
        let mixed: Vec<FrameScore> = (0..8)
            .map(|i| FrameScore {
                frame: i,
                j: 0.1 * i as f64,
                f: 1.0 - 0.05 * i as f64,
            })
            .collect();
        let report = aggregate(&[("a".into(), mixed)]).unwrap();
        assert_eq!(report.jf_mean(), (report.j.mean + report.f.mean) / 2.0);
    }
}
