//! Cross-system agreement reports.
//!
//! Several measurement systems drive the same road; their per-segment
//! metric series are co-registered by chainage and every pair of systems is
//! regressed against each other. Neither system is treated as ground truth,
//! so both regression directions are reported. Verification only: nothing
//! here adjusts a system to agree with another.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    Iri,
    Mpd,
    Crossfall,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Iri, MetricKind::Mpd, MetricKind::Crossfall];

    pub fn label(&self) -> &'static str {
        match self {
            MetricKind::Iri => "iri",
            MetricKind::Mpd => "mpd",
            MetricKind::Crossfall => "crossfall",
        }
    }

    /// Minimum pairwise R² for a pass.
    pub fn default_threshold(&self) -> f64 {
        match self {
            MetricKind::Iri => 0.70,
            MetricKind::Mpd => 0.80,
            MetricKind::Crossfall => 0.95,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One system's series of `(chainage_start, value)` for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    system_id: String,
    metric: MetricKind,
    segments: Vec<(f64, f64)>,
}

impl RunSeries {
    pub fn new(system_id: impl Into<String>, metric: MetricKind, segments: Vec<(f64, f64)>) -> Result<Self> {
        if segments.iter().any(|(c, v)| !c.is_finite() || !v.is_finite()) {
            return Err(Error::invalid("run series values must be finite"));
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("run series chainages must be strictly increasing"));
        }
        Ok(Self {
            system_id: system_id.into(),
            metric,
            segments,
        })
    }

    pub fn system_id(&self) -> &str {
        &self.system_id
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    /// Applies `v ↦ scale·v + offset` to every value.
    pub fn affine(&self, scale: f64, offset: f64) -> Self {
        Self {
            system_id: self.system_id.clone(),
            metric: self.metric,
            segments: self.segments.iter().map(|&(c, v)| (c, scale * v + offset)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `(value_a, value_b)` ordered by chainage of `a`.
    pub pairs: Vec<(f64, f64)>,
    /// Index pairs into the two series, same order as `pairs`.
    pub indices: Vec<(usize, usize)>,
    pub unpaired_a: usize,
    pub unpaired_b: usize,
}

/// Pairs segments whose chainages differ by at most `tolerance`.
///
/// Candidate pairs are accepted closest first (ties broken by index), and
/// each segment is used at most once.
pub fn align_by_chainage(a: &RunSeries, b: &RunSeries, tolerance: f64) -> Result<Alignment> {
    if a.metric != b.metric {
        return Err(Error::invalid(format!(
            "cannot align {} series with {} series",
            a.metric, b.metric
        )));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("alignment tolerance must be non-negative"));
    }
    let mut candidates = Vec::new();
    let mut lo = 0;
    for (i, &(ca, _)) in a.segments.iter().enumerate() {
        while lo < b.segments.len() && b.segments[lo].0 < ca - tolerance {
            lo += 1;
        }
        for (j, &(cb, _)) in b.segments.iter().enumerate().skip(lo) {
            if cb > ca + tolerance {
                break;
            }
            candidates.push(((ca - cb).abs(), i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut used_a = vec![false; a.segments.len()];
    let mut used_b = vec![false; b.segments.len()];
    let mut indices = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            indices.push((i, j));
        }
    }
    if indices.is_empty() {
        return Err(Error::invalid(format!(
            "no segments of '{}' and '{}' lie within {tolerance} m of each other",
            a.system_id, b.system_id
        )));
    }
    indices.sort_unstable();
    Ok(Alignment {
        pairs: indices.iter().map(|&(i, j)| (a.segments[i].1, b.segments[j].1)).collect(),
        unpaired_a: a.segments.len() - indices.len(),
        unpaired_b: b.segments.len() - indices.len(),
        indices,
    })
}

/// Ordinary least-squares fit `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// R² is `1 − SS_res/SS_tot`, evaluated as `Sxy²/(Sxx·Syy)` so that it is
/// exactly symmetric in `x` and `y`. Constant `y` is fitted exactly and
/// scores 1.
pub fn linear_regression(pairs: &[(f64, f64)]) -> Result<RegressionResult> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::invalid(format!("regression needs at least 2 pairs, got {n}")));
    }
    let nf = n as f64;
    let xm = pairs.iter().map(|p| p.0).sum::<f64>() / nf;
    let ym = pairs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (dx, dy) = (x - xm, y - ym);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("regression x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RegressionResult {
        slope,
        intercept: ym - slope * xm,
        r_squared,
        n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizationConfig {
    /// Chainage tolerance for pairing segments (m).
    pub tolerance: f64,
    pub thresholds: [(MetricKind, f64); 3],
}

impl HarmonizationConfig {
    /// Tolerance of half a segment, default thresholds.
    pub fn for_segment_length(segment_length: f64) -> Self {
        Self {
            tolerance: 0.5 * segment_length,
            thresholds: MetricKind::ALL.map(|m| (m, m.default_threshold())),
        }
    }

    pub fn threshold(&self, metric: MetricKind) -> f64 {
        self.thresholds
            .iter()
            .find(|(m, _)| *m == metric)
            .map_or(metric.default_threshold(), |(_, t)| *t)
    }

    pub fn with_threshold(mut self, metric: MetricKind, threshold: f64) -> Self {
        for entry in &mut self.thresholds {
            if entry.0 == metric {
                entry.1 = threshold;
            }
        }
        self
    }
}

impl Default for HarmonizationConfig {
    fn default() -> Self {
        Self::for_segment_length(crate::metrics::DEFAULT_SEGMENT_LENGTH)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub system_a: String,
    pub system_b: String,
    /// `b` regressed on `a`.
    pub forward: RegressionResult,
    /// `a` regressed on `b`.
    pub backward: RegressionResult,
    pub r_squared: f64,
    pub pass: bool,
    pub unpaired_a: usize,
    pub unpaired_b: usize,
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    pub metric: MetricKind,
    pub threshold: f64,
    pub systems: Vec<String>,
    /// Unordered system pairs `(i, j)` with `i < j`, in lexicographic order.
    pub pairs: Vec<PairComparison>,
}

impl MetricComparison {
    /// Symmetric R² matrix with unit diagonal, indexed like `systems`.
    pub fn r_squared_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.systems.len();
        let mut m = vec![vec![1.0; n]; n];
        let index = |id: &str| self.systems.iter().position(|s| s == id).unwrap_or(0);
        for p in &self.pairs {
            let (i, j) = (index(&p.system_a), index(&p.system_b));
            m[i][j] = p.r_squared;
            m[j][i] = p.r_squared;
        }
        m
    }

    pub fn mean_r_squared(&self) -> f64 {
        self.pairs.iter().map(|p| p.r_squared).sum::<f64>() / self.pairs.len() as f64
    }

    pub fn all_pass(&self) -> bool {
        self.pairs.iter().all(|p| p.pass)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizationReport {
    /// One entry per metric present, in [`MetricKind::ALL`] order.
    pub metrics: Vec<MetricComparison>,
    /// Points regressed: one per co-registered chainage segment.
    pub aggregation: &'static str,
}

impl HarmonizationReport {
    pub fn metric(&self, kind: MetricKind) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == kind)
    }
}

/// Regresses every unordered pair of systems for each metric present.
pub fn harmonize_report(runs: &[RunSeries], config: &HarmonizationConfig) -> Result<HarmonizationReport> {
    let mut metrics = Vec::new();
    for kind in MetricKind::ALL {
        let series: Vec<&RunSeries> = runs.iter().filter(|r| r.metric == kind).collect();
        if series.is_empty() {
            continue;
        }
        if series.len() < 2 {
            return Err(Error::invalid(format!(
                "metric {kind} is present on only one system ('{}'); at least two are needed",
                series[0].system_id
            )));
        }
        for (i, s) in series.iter().enumerate() {
            if series[..i].iter().any(|o| o.system_id == s.system_id) {
                return Err(Error::invalid(format!(
                    "system '{}' supplies more than one {kind} series",
                    s.system_id
                )));
            }
        }
        let threshold = config.threshold(kind);
        let mut pairs = Vec::new();
        for i in 0..series.len() {
            for j in i + 1..series.len() {
                let (a, b) = (series[i], series[j]);
                let context = |e: Error| Error::invalid(format!("{kind} {} vs {}: {e}", a.system_id, b.system_id));
                let aligned = align_by_chainage(a, b, config.tolerance).map_err(context)?;
                let forward = linear_regression(&aligned.pairs).map_err(context)?;
                let swapped: Vec<(f64, f64)> = aligned.pairs.iter().map(|&(x, y)| (y, x)).collect();
                let backward = linear_regression(&swapped).map_err(context)?;
                pairs.push(PairComparison {
                    system_a: a.system_id.clone(),
                    system_b: b.system_id.clone(),
                    r_squared: forward.r_squared,
                    pass: forward.r_squared >= threshold,
                    forward,
                    backward,
                    unpaired_a: aligned.unpaired_a,
                    unpaired_b: aligned.unpaired_b,
                    pairs: aligned.pairs,
                });
            }
        }
        metrics.push(MetricComparison {
            metric: kind,
            threshold,
            systems: series.iter().map(|s| s.system_id.clone()).collect(),
            pairs,
        });
    }
    if metrics.is_empty() {
        return Err(Error::invalid("no run series to compare"));
    }
    Ok(HarmonizationReport {
        metrics,
        aggregation: "per-segment",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(id: &str, chainages: &[f64], values: &[f64]) -> RunSeries {
        RunSeries::new(id, MetricKind::Iri, chainages.iter().copied().zip(values.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn run_series_validation() {
        assert!(RunSeries::new("a", MetricKind::Iri, vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(RunSeries::new("a", MetricKind::Iri, vec![(0.0, f64::NAN)]).is_err());
    }

    #[test]
    fn regression_examples() {
        let exact: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let r = linear_regression(&exact).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-14 && (r.intercept - 1.0).abs() < 1e-14);
        assert_eq!((r.r_squared, r.n), (1.0, 10));

        // Normal equations by hand: Sxy = 0, so slope 0 and intercept ȳ.
        let r = linear_regression(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]).unwrap();
        assert_eq!(r.slope, 0.0);
        assert!((r.intercept - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.r_squared, 0.0);

        let r = linear_regression(&[(0.0, 3.0), (1.0, 3.0), (5.0, 3.0)]).unwrap();
        assert_eq!((r.slope, r.intercept, r.r_squared), (0.0, 3.0, 1.0));

        assert!(linear_regression(&[(1.0, 0.0), (1.0, 2.0)]).is_err());
        assert!(linear_regression(&[(1.0, 0.0)]).is_err());
    }

    /// Maximum-cardinality, minimum-total-distance assignment by DP over
    /// subsets of `b`.
    fn exhaustive_matching(a: &[f64], b: &[f64], tol: f64) -> Vec<(usize, usize)> {
        let nb = b.len();
        let full = 1usize << nb;
        // best[i][mask] = (pairs, -distance) for a[i..] with b-mask used.
        let mut best = vec![vec![(0usize, 0.0f64); full]; a.len() + 1];
        let mut choice = vec![vec![None; full]; a.len() + 1];
        for i in (0..a.len()).rev() {
            for mask in 0..full {
                let mut top = best[i + 1][mask];
                let mut pick = None;
                for j in 0..nb {
                    if mask & (1 << j) == 0 && (a[i] - b[j]).abs() <= tol {
                        let (p, d) = best[i + 1][mask | (1 << j)];
                        let cand = (p + 1, d - (a[i] - b[j]).abs());
                        if cand.0 > top.0 || (cand.0 == top.0 && cand.1 > top.1 + 1e-12) {
                            top = cand;
                            pick = Some(j);
                        }
                    }
                }
                best[i][mask] = top;
                choice[i][mask] = pick;
            }
        }
        let mut out = Vec::new();
        let mut mask = 0;
        for (i, row) in choice.iter().take(a.len()).enumerate() {
            if let Some(j) = row[mask] {
                out.push((i, j));
                mask |= 1 << j;
            }
        }
        out
    }

    #[test]
    fn alignment_examples() {
        let grid: Vec<f64> = (0..20).map(|i| 20.0 * i as f64).collect();
        let values: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let a = series("a", &grid, &values);
        let al = align_by_chainage(&a, &a, 10.0).unwrap();
        assert_eq!((al.pairs.len(), al.unpaired_a, al.unpaired_b), (20, 0, 0));

        let far: Vec<f64> = grid.iter().map(|c| c + 7.0).collect();
        assert!(align_by_chainage(&a, &series("b", &far, &values), 5.0).is_err());

        let half: Vec<f64> = grid.iter().map(|c| c + 5.0).collect();
        let b = series("b", &half, &values);
        let al = align_by_chainage(&a, &b, 10.0).unwrap();
        assert_eq!(al.indices, exhaustive_matching(&grid, &half, 10.0));
        assert_eq!(al.indices, (0..20).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn alignment_matches_exhaustive_oracle_on_jittered_grids() {
        // Jitter below a quarter tolerance keeps every nearest neighbour unique.
        for seed in 0..10u64 {
            let jitter = |k: usize| ((k as u64 * 2654435761 + seed * 97) % 1000) as f64 / 1000.0 * 2.4 - 1.2;
            let a: Vec<f64> = (0..12).map(|i| 20.0 * i as f64 + jitter(i)).collect();
            let b: Vec<f64> = (0..14).map(|i| 20.0 * i as f64 - 3.0 + jitter(i + 50)).collect();
            let sa = series("a", &a, &vec![0.0; a.len()]);
            let sb = series("b", &b, &vec![0.0; b.len()]);
            let al = align_by_chainage(&sa, &sb, 10.0).unwrap();
            assert_eq!(al.indices, exhaustive_matching(&a, &b, 10.0), "seed {seed}");
            assert_eq!(al.unpaired_b, 2);
        }
    }

    #[test]
    fn alignment_requires_same_metric() {
        let a = series("a", &[0.0, 20.0], &[1.0, 2.0]);
        let b = RunSeries::new("b", MetricKind::Mpd, vec![(0.0, 1.0), (20.0, 2.0)]).unwrap();
        assert!(align_by_chainage(&a, &b, 10.0).is_err());
    }

    #[test]
    fn report_examples() {
        let grid: Vec<f64> = (0..10).map(|i| 20.0 * i as f64).collect();
        let values: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin() + 2.0).collect();
        let a = series("a", &grid, &values);
        let b = series("b", &grid, &values);
        let report = harmonize_report(&[a.clone(), b], &HarmonizationConfig::default()).unwrap();
        let iri = report.metric(MetricKind::Iri).unwrap();
        assert_eq!(iri.pairs.len(), 1);
        assert!(iri.pairs[0].pass && (iri.pairs[0].r_squared - 1.0).abs() < 1e-12);

        let shifted = RunSeries::new("c", MetricKind::Iri, a.affine(1.5, 0.0).segments.clone()).unwrap();
        let report = harmonize_report(&[a.clone(), shifted], &HarmonizationConfig::default()).unwrap();
        let pair = &report.metrics[0].pairs[0];
        assert!((pair.r_squared - 1.0).abs() < 1e-12 && pair.pass);
        assert!((pair.forward.slope - 1.5).abs() < 1e-12);
        assert!((pair.backward.slope - 1.0 / 1.5).abs() < 1e-12);

        assert!(harmonize_report(&[a], &HarmonizationConfig::default()).is_err());
    }

    #[test]
    fn report_matrix_is_symmetric() {
        let grid: Vec<f64> = (0..8).map(|i| 20.0 * i as f64).collect();
        let runs: Vec<RunSeries> = (0..4)
            .map(|s| {
                let v: Vec<f64> = (0..8).map(|i| i as f64 + ((i * 7 + s * 3) % 5) as f64 * 0.3).collect();
                series(&format!("s{s}"), &grid, &v)
            })
            .collect();
        let report = harmonize_report(&runs, &HarmonizationConfig::default()).unwrap();
        let m = report.metrics[0].r_squared_matrix();
        assert_eq!(report.metrics[0].pairs.len(), 6);
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row[i], 1.0);
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, m[j][i]);
            }
        }
    }

    fn pair_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..40)
            .prop_filter("x must vary", |p| p.iter().any(|q| (q.0 - p[0].0).abs() > 1e-3))
            .prop_filter("y must vary", |p| p.iter().any(|q| (q.1 - p[0].1).abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn r_squared_is_symmetric_and_bounded(pairs in pair_strategy()) {
            let fwd = linear_regression(&pairs).unwrap();
            let swapped: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (y, x)).collect();
            let bwd = linear_regression(&swapped).unwrap();
            prop_assert!((fwd.r_squared - bwd.r_squared).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&fwd.r_squared));
        }

        #[test]
        fn r_squared_is_affine_invariant(
            pairs in pair_strategy(),
            alpha in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64],
            beta in -50.0..50.0f64,
        ) {
            let base = linear_regression(&pairs).unwrap().r_squared;
            let moved: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x, alpha * y + beta)).collect();
            let r = linear_regression(&moved).unwrap().r_squared;
            prop_assert!((r - base).abs() <= 1e-12, "{} vs {}", r, base);
        }
    }
}
