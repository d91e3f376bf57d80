use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::roc::{roc_curve, select_threshold, RocCurve, ScoredSample, ThresholdChoice, DEFAULT_MAX_FPR};
use crate::monitor::DriveTrace;
use crate::rng::{derive, shuffle, stream_rng};
use crate::uncertainty::Measure;
use crate::{Error, Result};

/// Half width of the window around `crash - n`, seconds.
pub const DEFAULT_WINDOW_S: f64 = 0.25;
/// Frames inspected before each crash by [`peak_analysis`].
pub const PEAK_WINDOW_FRAMES: u64 = 60;
/// Extra crash-free time required after a negative anchor, seconds.
pub const ANCHOR_MARGIN_S: f64 = 2.0;

const EDGE_EPS: f64 = 1e-9;

/// Frames `n` seconds before crashes (positives) and before crash-free
/// anchors (negatives), scored by each measure present in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashWindowSet {
    pub n_seconds: u32,
    pub window: f64,
    /// Crash frames whose window was used.
    pub crashes: Vec<u64>,
    pub anchors: Vec<u64>,
    pub positive_frames: Vec<u64>,
    pub negative_frames: Vec<u64>,
    pub samples: Vec<(Measure, Vec<ScoredSample>)>,
}

impl CrashWindowSet {
    pub fn samples_for(&self, m: Measure) -> Option<&[ScoredSample]> {
        self.samples.iter().find(|(k, _)| *k == m).map(|(_, v)| v.as_slice())
    }
}

fn rows_in(trace: &DriveTrace, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
    trace
        .rows
        .iter()
        .enumerate()
        .filter(move |(_, r)| r.t >= lo - EDGE_EPS && r.t <= hi + EDGE_EPS)
        .map(|(i, _)| i)
}

/// Positives are frames with `t` in `[c - n - window, c - n + window]` for
/// each crash at time `c`. Crashes whose window starts before the trace or
/// before the previous crash are skipped. Negatives use the same offsets
/// before anchors drawn uniformly (seeded) from frames with no crash
/// between the anchor's window and `n + 2` seconds after the anchor, one
/// anchor per used crash.
pub fn extract_crash_windows(trace: &DriveTrace, n: u32, window: f64, seed: u64) -> Result<CrashWindowSet> {
    if !(1..=6).contains(&n) {
        return Err(Error::InvalidArgument(alloc::format!("n = {n} s must lie in 1..=6")));
    }
    if !(window >= 0.0) || !window.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("window {window} s")));
    }
    let nf = n as f64;
    let crash_t: Vec<f64> = trace.rows.iter().filter(|r| r.crashed).map(|r| r.t).collect();
    if crash_t.is_empty() {
        return Err(Error::Empty("crashes in trace"));
    }
    let t0 = trace.rows.first().map_or(0.0, |r| r.t);
    let mut crashes = Vec::new();
    let mut positive_rows = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for r in trace.rows.iter().filter(|r| r.crashed) {
        let lo = r.t - nf - window;
        if lo >= t0 - EDGE_EPS && lo > prev {
            crashes.push(r.frame);
            positive_rows.extend(rows_in(trace, lo, r.t - nf + window));
        }
        prev = r.t;
    }
    if crashes.is_empty() {
        return Err(Error::Empty("crashes with enough history"));
    }
    let crash_free = |from: f64, to: f64| !crash_t.iter().any(|&c| c >= from - EDGE_EPS && c <= to + EDGE_EPS);
    let mut eligible: Vec<usize> = trace
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            let lo = r.t - nf - window;
            lo >= t0 - EDGE_EPS && crash_free(lo, r.t + nf + ANCHOR_MARGIN_S)
        })
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Empty("crash-free anchor frames"));
    }
    shuffle(&mut stream_rng(seed, n as u64), &mut eligible);
    eligible.truncate(crashes.len());
    eligible.sort_unstable();
    let mut negative_rows = Vec::new();
    for &a in &eligible {
        let ta = trace.rows[a].t;
        negative_rows.extend(rows_in(trace, ta - nf - window, ta - nf + window));
    }
    positive_rows.sort_unstable();
    positive_rows.dedup();
    negative_rows.sort_unstable();
    negative_rows.dedup();
    negative_rows.retain(|i| positive_rows.binary_search(i).is_err());

    let measures: Vec<Measure> = Measure::ALL
        .into_iter()
        .filter(|&m| trace.rows.iter().all(|r| r.measures.get(m).is_some()))
        .collect();
    let samples = measures
        .into_iter()
        .map(|m| {
            let score = |i: &usize| trace.rows[*i].measures.get(m).unwrap_or(f64::NAN);
            let v = positive_rows
                .iter()
                .map(|i| ScoredSample {
                    score: score(i),
                    positive: true,
                })
                .chain(negative_rows.iter().map(|i| ScoredSample {
                    score: score(i),
                    positive: false,
                }))
                .collect();
            (m, v)
        })
        .collect();
    let frame = |i: &usize| trace.rows[*i].frame;
    Ok(CrashWindowSet {
        n_seconds: n,
        window,
        crashes,
        anchors: eligible.iter().map(frame).collect(),
        positive_frames: positive_rows.iter().map(frame).collect(),
        negative_frames: negative_rows.iter().map(frame).collect(),
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashRoc {
    pub n_seconds: u32,
    pub measure: Measure,
    pub curve: RocCurve,
    pub choice: ThresholdChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestN {
    pub measure: Measure,
    pub n_seconds: u32,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashSuite {
    pub entries: Vec<CrashRoc>,
    /// Highest-AUC `n` per measure (smallest `n` on ties).
    pub best: Vec<BestN>,
    pub crashes_used: Vec<(u32, usize)>,
}

impl CrashSuite {
    pub fn entry(&self, n: u32, m: Measure) -> Option<&CrashRoc> {
        self.entries.iter().find(|e| e.n_seconds == n && e.measure == m)
    }

    pub fn best_for(&self, m: Measure) -> Option<BestN> {
        self.best.iter().copied().find(|b| b.measure == m)
    }
}

/// Pools windows over all traces and builds one ROC per `n` and measure.
/// Traces without usable crashes or anchors for some `n` are left out of
/// that `n`.
pub fn crash_roc_suite(
    traces: &[DriveTrace],
    n_list: &[u32],
    window: f64,
    measures: &[Measure],
    seed: u64,
) -> Result<CrashSuite> {
    let mut entries = Vec::new();
    let mut crashes_used = Vec::new();
    for &n in n_list {
        let mut pooled: Vec<(Measure, Vec<ScoredSample>)> = measures.iter().map(|&m| (m, Vec::new())).collect();
        let mut used = 0;
        for (k, tr) in traces.iter().enumerate() {
            let set = match extract_crash_windows(tr, n, window, derive(seed, k as u64)) {
                Ok(s) => s,
                Err(Error::Empty(_)) => continue,
                Err(e) => return Err(e),
            };
            used += set.crashes.len();
            for (m, acc) in &mut pooled {
                let s = set.samples_for(*m).ok_or_else(|| {
                    Error::InvalidArgument(alloc::format!("trace {k} has no {} column", m.name()))
                })?;
                acc.extend_from_slice(s);
            }
        }
        crashes_used.push((n, used));
        for (m, s) in pooled {
            let curve = roc_curve(&s)?;
            let choice = select_threshold(&curve, DEFAULT_MAX_FPR)?;
            entries.push(CrashRoc {
                n_seconds: n,
                measure: m,
                curve,
                choice,
            });
        }
    }
    let best = measures
        .iter()
        .filter_map(|&m| {
            entries
                .iter()
                .filter(|e| e.measure == m)
                .fold(None::<&CrashRoc>, |b, e| match b {
                    Some(b) if b.curve.auc >= e.curve.auc => Some(b),
                    _ => Some(e),
                })
                .map(|e| BestN {
                    measure: m,
                    n_seconds: e.n_seconds,
                    auc: e.curve.auc,
                })
        })
        .collect();
    Ok(CrashSuite {
        entries,
        best,
        crashes_used,
    })
}

/// Distances from a crash to notable frames before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub crash_id: usize,
    pub crash_frame: u64,
    pub first_breach_frames: Option<u64>,
    pub first_breach_seconds: Option<f64>,
    pub peak_frames: u64,
    pub peak_seconds: f64,
}

/// For every crash, looks at the up to 60 frames before it (after any
/// earlier crash) and reports the distance to the first frame at or above
/// `threshold` and to the earliest maximum of `measure`.
pub fn peak_analysis(trace: &DriveTrace, measure: Measure, threshold: f64) -> Result<Vec<PeakRow>> {
    if !threshold.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!("threshold {threshold} must be finite")));
    }
    let dt = trace.meta.dt;
    let mut out = Vec::new();
    let mut prev_crash: Option<u64> = None;
    for r in trace.rows.iter().filter(|r| r.crashed) {
        let c = r.frame;
        let from = c.saturating_sub(PEAK_WINDOW_FRAMES).max(prev_crash.map_or(0, |p| p + 1));
        prev_crash = Some(c);
        let window: Vec<(u64, f64)> = trace
            .rows
            .iter()
            .filter(|w| w.frame >= from && w.frame < c)
            .map(|w| {
                w.measures
                    .get(measure)
                    .map(|v| (w.frame, v))
                    .ok_or_else(|| Error::InvalidArgument(alloc::format!("trace has no {} column", measure.name())))
            })
            .collect::<Result<_>>()?;
        let Some(&first) = window.first() else { continue };
        let peak = window.iter().fold(first, |best, &x| if x.1 > best.1 { x } else { best });
        let breach = window.iter().find(|(_, v)| *v >= threshold).map(|(f, _)| c - f);
        out.push(PeakRow {
            crash_id: out.len(),
            crash_frame: c,
            first_breach_frames: breach,
            first_breach_seconds: breach.map(|f| f as f64 * dt),
            peak_frames: c - peak.0,
            peak_seconds: (c - peak.0) as f64 * dt,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::{Measures, ThresholdSet, TraceMeta, TraceRow};
    use crate::rng::{stream_rng, uniform};
    use alloc::vec;

    const DT: f64 = 1.0 / 6.0;

    fn trace(n: usize, crashes: &[u64], mi: impl Fn(u64) -> f64) -> DriveTrace {
        DriveTrace {
            meta: TraceMeta {
                model_id: "synthetic".into(),
                track: "oval".into(),
                passes: 1,
                tau: 1.0,
                thresholds: ThresholdSet::single(Measure::MutualInformation, 0.5).unwrap(),
                seed: 0,
                dt: DT,
                speed: 6.7,
                fps: None,
            },
            rows: (0..n as u64)
                .map(|f| TraceRow {
                    frame: f,
                    t: f as f64 * DT,
                    angle_deg: 0.0,
                    measures: Measures {
                        vr: Some(0.0),
                        entropy: Some(1.0),
                        mi: Some(mi(f)),
                        variance: None,
                    },
                    crashed: crashes.contains(&f),
                    alert: false,
                })
                .collect(),
        }
    }

    #[test]
    fn window_arithmetic() {
        // Crash at 100/6 s; n = 3 gives t in [13.417, 13.917].
        let tr = trace(300, &[100], |_| 0.0);
        let w = extract_crash_windows(&tr, 3, 0.25, 0).unwrap();
        assert_eq!(w.positive_frames, vec![81, 82, 83]);
        assert_eq!(w.crashes, vec![100]);
        assert_eq!(w.anchors.len(), 1);
        for f in &w.positive_frames {
            let t = *f as f64 * DT;
            assert!(t >= 100.0 * DT - 3.25 && t <= 100.0 * DT - 2.75);
        }
    }

    #[test]
    fn early_crash_is_skipped() {
        let tr = trace(300, &[12, 200], |_| 0.0);
        let w = extract_crash_windows(&tr, 6, 0.25, 0).unwrap();
        assert_eq!(w.crashes, vec![200]);
        let only_early = trace(300, &[12], |_| 0.0);
        assert!(extract_crash_windows(&only_early, 6, 0.25, 0).is_err());
    }

    #[test]
    fn no_crash_is_an_error() {
        let tr = trace(300, &[], |_| 0.0);
        assert!(matches!(extract_crash_windows(&tr, 3, 0.25, 0), Err(Error::Empty(_))));
        assert!(extract_crash_windows(&tr, 0, 0.25, 0).is_err());
        assert!(extract_crash_windows(&tr, 7, 0.25, 0).is_err());
    }

    #[test]
    fn positives_and_negatives_disjoint_and_anchors_crash_free() {
        let crashes: Vec<u64> = (1..20).map(|k| k * 97).collect();
        let tr = trace(2000, &crashes, |_| 0.0);
        for n in 1..=6 {
            let w = extract_crash_windows(&tr, n, 0.25, 5).unwrap();
            assert_eq!(w.anchors.len(), w.crashes.len());
            assert!(w.negative_frames.iter().all(|f| !w.positive_frames.contains(f)));
            for &a in &w.anchors {
                let ta = a as f64 * DT;
                assert!(crashes.iter().all(|&c| {
                    let tc = c as f64 * DT;
                    tc < ta - n as f64 - 0.25 || tc > ta + n as f64 + 2.0
                }));
            }
        }
    }

    fn spiky(n_spike: f64, seed: u64) -> DriveTrace {
        let crashes: Vec<u64> = (1..8).map(|k| k * 120 + (seed % 7) * 3).collect();
        let cs = crashes.clone();
        trace(1000, &crashes, move |f| {
            let t = f as f64 * DT;
            let hit = cs.iter().any(|&c| (t - (c as f64 * DT - n_spike)).abs() <= 0.25 + 1e-9);
            if hit {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn synthetic_spike_recovers_n() {
        let traces = vec![spiky(3.0, 0), spiky(3.0, 1)];
        let suite = crash_roc_suite(&traces, &[1, 2, 3, 4, 5, 6], 0.25, &[Measure::MutualInformation], 1).unwrap();
        let best = suite.best_for(Measure::MutualInformation).unwrap();
        assert_eq!(best.n_seconds, 3);
        assert_eq!(best.auc, 1.0);
        for n in [1, 2, 4, 5, 6] {
            assert!(suite.entry(n, Measure::MutualInformation).unwrap().curve.auc < 1.0);
        }
        let c = suite.entry(3, Measure::MutualInformation).unwrap().choice;
        assert_eq!((c.tpr, c.fpr), (1.0, 0.0));
    }

    #[test]
    fn independent_uncertainty_gives_chance_auc() {
        let traces: Vec<DriveTrace> = (0..20)
            .map(|k| {
                let crashes: Vec<u64> = (1..30).map(|j| j * 100 + k).collect();
                let mut rng = stream_rng(k, 1);
                let noise: Vec<f64> = (0..3100).map(|_| uniform(&mut rng)).collect();
                trace(3100, &crashes, move |f| noise[f as usize])
            })
            .collect();
        let suite = crash_roc_suite(&traces, &[1, 2, 3, 4, 5, 6], 0.25, &[Measure::MutualInformation], 3).unwrap();
        for e in &suite.entries {
            assert!((e.curve.auc - 0.5).abs() <= 0.05, "n {} auc {}", e.n_seconds, e.curve.auc);
        }
    }

    #[test]
    fn peak_examples() {
        let tr = trace(200, &[150], |f| if f == 123 { 2.0 } else { 0.1 });
        let rows = peak_analysis(&tr, Measure::MutualInformation, 1.0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].peak_frames, 27);
        assert!((rows[0].peak_seconds - 4.5).abs() < 1e-12);
        assert_eq!(rows[0].first_breach_frames, Some(27));

        let mono = trace(200, &[150], |f| f as f64 / 200.0);
        let r = peak_analysis(&mono, Measure::MutualInformation, 0.6).unwrap()[0];
        assert!(r.first_breach_frames.unwrap() >= r.peak_frames);
        assert_eq!(r.peak_frames, 1);

        let flat = trace(200, &[150], |_| 0.2);
        let r = peak_analysis(&flat, Measure::MutualInformation, 0.5).unwrap()[0];
        assert_eq!(r.first_breach_frames, None);
        assert_eq!(r.first_breach_seconds, None);
        assert_eq!(r.peak_frames, 60);

        assert!(peak_analysis(&flat, Measure::MutualInformation, f64::INFINITY).is_err());
        assert!(peak_analysis(&flat, Measure::Variance, 0.5).is_err());
    }
}
