//! Parse-time benchmark over synthetic programs.

use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::dsl::parse_program;

/// Parses timed together per sample, to stay well above timer resolution.
const BATCH: usize = 8;

/// Distinct, mutually compatible actions used to fill synthetic rules.
const ACTIONS: [&str; 10] = [
    "max_speed(50)",
    "min_speed(10)",
    "cruise_speed(40)",
    "follow_dist(20)",
    "stop_dist(2)",
    "prep_dist(30)",
    "expect_speed(20)",
    "near_stop_speed(3)",
    "yield_dist(8)",
    "long_buffer_dist(4)",
];
const TRIGGERS: [&str; 4] = ["entering_motorway", "rain_started", "vehicle_detected", "red_light_detected"];
const EXITS: [&str; 4] = ["exiting_motorway", "rain_stopped", "vehicle_no_longer_detected", "signal_no_longer_detected"];
const CONDITIONS: [&str; 4] = ["!is_foggy", "is_night", "!is_snowing", "obstacle_distance_leq(50)"];

/// A program of `rules` rules with `actions` actions each. Action counts above
/// the pool size repeat actions, which still parses.
pub fn synthetic_program(rules: usize, actions: usize) -> String {
    let mut out = String::new();
    for i in 0..rules {
        out.push_str(&format!("rule \"synthetic {i}\"\n"));
        out.push_str(&format!("  trigger {}\n", TRIGGERS[i % TRIGGERS.len()]));
        out.push_str(&format!("  condition {}\n", CONDITIONS[i % CONDITIONS.len()]));
        for j in 0..actions {
            let kw = if j == 0 { "  then " } else { "       " };
            out.push_str(kw);
            out.push_str(ACTIONS[j % ACTIONS.len()]);
            out.push('\n');
        }
        out.push_str(&format!("  until {}\nend\n\n", EXITS[i % EXITS.len()]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchPoint {
    pub rules: usize,
    pub actions: usize,
    /// Mean over samples inside the outer Tukey fence.
    pub mean_ms: f64,
    /// Mean over every sample, pre-empted ones included.
    pub raw_mean_ms: f64,
    pub max_ms: f64,
    pub samples: usize,
    pub outliers: usize,
}

/// Samples above `Q3 + 3 IQR` are treated as pre-empted by the scheduler.
fn tukey_upper_fence(sorted: &[f64]) -> f64 {
    let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
    let (q1, q3) = (q(0.25), q(0.75));
    q3 + 3.0 * (q3 - q1)
}

fn summarize(rules: usize, actions: usize, s: &[f64]) -> BenchPoint {
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fence = tukey_upper_fence(&sorted);
    let kept: Vec<f64> = s.iter().copied().filter(|x| *x <= fence).collect();
    BenchPoint {
        rules,
        actions,
        mean_ms: kept.iter().sum::<f64>() / kept.len() as f64,
        raw_mean_ms: s.iter().sum::<f64>() / s.len() as f64,
        max_ms: sorted[sorted.len() - 1],
        samples: s.len(),
        outliers: s.len() - kept.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Fit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 0.0 };
    Fit { slope, intercept, r2 }
}

pub fn is_monotone_non_decreasing(points: &[BenchPoint]) -> bool {
    points.windows(2).all(|w| w[1].mean_ms >= w[0].mean_ms)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub repetitions: usize,
    /// 1..=max rules, 3 actions per rule.
    pub by_rules: Vec<BenchPoint>,
    /// 1 rule, 1..=max actions.
    pub by_actions: Vec<BenchPoint>,
    pub rules_fit: Fit,
    pub actions_fit: Fit,
}

impl BenchReport {
    pub fn point(&self, rules: usize, actions: usize) -> Option<&BenchPoint> {
        self.by_rules
            .iter()
            .chain(&self.by_actions)
            .find(|p| p.rules == rules && p.actions == actions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BenchError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub max_rules: usize,
    pub actions_per_rule: usize,
    pub max_actions: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            max_rules: 20,
            actions_per_rule: 3,
            max_actions: 10,
            repetitions: 200,
        }
    }
}

/// Time `parse_program` over every configuration. Samples are taken
/// round-robin across configurations so that slow drifts in machine load
/// affect all of them alike.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    if cfg.repetitions == 0 {
        return Err(BenchError("repetitions must be at least 1".into()));
    }
    if cfg.max_rules == 0 || cfg.max_actions == 0 || cfg.actions_per_rule == 0 {
        return Err(BenchError("rule and action counts must be at least 1".into()));
    }
    let mut configs: Vec<(usize, usize)> = (1..=cfg.max_rules).map(|r| (r, cfg.actions_per_rule)).collect();
    configs.extend((1..=cfg.max_actions).map(|a| (1, a)));
    let texts: Vec<String> = configs.iter().map(|&(r, a)| synthetic_program(r, a)).collect();
    for t in &texts {
        parse_program(t).map_err(|d| BenchError(format!("synthetic program failed to parse: {}", d[0])))?;
    }

    let n = texts.len();
    let mut samples = vec![Vec::with_capacity(cfg.repetitions); n];
    for round in 0..cfg.repetitions {
        // rotate the starting configuration so none always runs cold
        for k in 0..n {
            let i = (round + k) % n;
            let start = Instant::now();
            for _ in 0..BATCH {
                black_box(parse_program(black_box(&texts[i]))).ok();
            }
            let elapsed = start.elapsed();
            samples[i].push(elapsed.as_secs_f64() * 1e3 / BATCH as f64);
        }
    }
    let points: Vec<BenchPoint> = configs
        .iter()
        .zip(&samples)
        .map(|(&(rules, actions), s)| summarize(rules, actions, s))
        .collect();
    let (by_rules, by_actions) = points.split_at(cfg.max_rules);
    let fit = |ps: &[BenchPoint], x: fn(&BenchPoint) -> usize| {
        let xs: Vec<f64> = ps.iter().map(|p| x(p) as f64).collect();
        let ys: Vec<f64> = ps.iter().map(|p| p.mean_ms).collect();
        linear_fit(&xs, &ys)
    };
    Ok(BenchReport {
        repetitions: cfg.repetitions,
        rules_fit: fit(by_rules, |p| p.rules),
        actions_fit: fit(by_actions, |p| p.actions),
        by_rules: by_rules.to_vec(),
        by_actions: by_actions.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_programs_have_the_requested_shape() {
        let p = parse_program(&synthetic_program(5, 12)).unwrap();
        assert_eq!(p.rules.len(), 5);
        assert!(p.rules.iter().all(|r| r.actions.len() == 12));
    }

    #[test]
    fn fence_drops_only_preempted_samples() {
        let mut s = vec![1.0; 99];
        s.push(50.0);
        let p = summarize(1, 1, &s);
        assert_eq!(p.outliers, 1);
        assert_eq!(p.mean_ms, 1.0);
        assert!((p.raw_mean_ms - 1.49).abs() < 1e-12);
    }

    #[test]
    fn zero_repetitions_is_rejected() {
        let cfg = BenchConfig { repetitions: 0, ..BenchConfig::default() };
        assert!(run_bench(&cfg).is_err());
    }
}
