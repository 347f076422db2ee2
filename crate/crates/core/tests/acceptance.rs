//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use lenbias::corpus::TokenCounter;
use lenbias::gateway::{score_batch, Mode, ScoreRequest, ScorerSpec, SyntheticParams};
use lenbias::normalize::{from_density, to_density, wrap_density_scorer};
use lenbias::perturb::{apply_first_applicable, mqm_score, Dimension, MqmAnnotation, Severity};
use lenbias::report::config::{AuditConfig, ChunkInput, CorpusInput, ScorerConfig};
use lenbias::report::tables::{preference_table, trend_table};
use lenbias::report::{run_audit, CurveSection, SuiteData};
use lenbias::rng::SplitMix64;
use lenbias::stats::{
    decreasing_trend_proportion, delta_curve, shorter_preference_rate, slope_of_score_changes, wilson_ci, DeltaCurve,
    PreferenceResult, ScoreTable, TrendResult,
};
use lenbias::suite::{
    bin_pairs, build_passage_groups, HypothesisPair, Passage, PassageGroup, SizedText, SuiteParams, DEFAULT_THRESHOLDS,
};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn audit_config(
    dir: &std::path::Path,
    corpus: Option<std::path::PathBuf>,
    chunks: Option<std::path::PathBuf>,
    scorer: ScorerSpec,
) -> AuditConfig {
    let mut cfg = AuditConfig::from_json(r#"{"scorers":[]}"#).unwrap();
    if let Some(path) = corpus {
        cfg.corpora.push(CorpusInput {
            path,
            format: None,
            label: None,
        });
    }
    if let Some(path) = chunks {
        cfg.chunks.push(ChunkInput {
            path,
            direction: "en-de".into(),
        });
    }
    cfg.scorers.push(ScorerConfig {
        spec: scorer,
        mode: Mode::Qe,
    });
    cfg.out_dir = Some(dir.join("out"));
    cfg
}

fn synthetic_bias_detection() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write_corpus(&common::rich_corpus(50, 5, 11), dir.path(), "corpus.tsv");
    let mut rng = SplitMix64::new(5);
    let lengths: Vec<(usize, usize)> = (0..60).map(|_| (200, 201 + rng.below(60))).collect();
    let chunks = common::write_chunks(&common::chunks(&lengths), dir.path(), "chunks.jsonl");
    let cfg = audit_config(
        dir.path(),
        Some(corpus),
        Some(chunks),
        ScorerSpec::synthetic("syn", SyntheticParams::biased(0.01, 0.0, 0)),
    );
    let report = run_audit(&cfg).map_err(|e| e.to_string())?;
    let sec = &report.scorers[0];
    let p = &sec.passages[0];
    ensure!(
        p.n_docs == 50 && p.trend.n_docs == 50,
        "expected 50 documents, got {}",
        p.trend.n_docs
    );
    ensure!(p.trend.proportion == 1.0, "trend proportion {}", p.trend.proportion);
    let means = p.curve.means();
    ensure!(means.len() == 5, "curve has {} points", means.len());
    ensure!(
        means.windows(2).all(|w| w[1] < w[0]),
        "curve not strictly decreasing: {means:?}"
    );
    for r in &sec.preferences[0].results {
        ensure!(r.n_pairs > 0, "bin {} is empty", r.threshold);
        ensure!(r.rate == Some(1.0), "bin {} rate {:?}", r.threshold, r.rate);
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(5), "took {t:?}");
    Ok(())
}

fn null_calibration() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(77);
    let lengths: Vec<(usize, usize)> = (0..500).map(|_| (200, 205 + rng.below(60))).collect();
    let chunks = common::write_chunks(&common::chunks(&lengths), dir.path(), "chunks.jsonl");
    let cfg = audit_config(
        dir.path(),
        None,
        Some(chunks),
        ScorerSpec::synthetic("null", SyntheticParams::biased(0.0, 0.5, 20240601)),
    );
    let report = run_audit(&cfg).map_err(|e| e.to_string())?;
    let again = run_audit(&cfg).map_err(|e| e.to_string())?;
    ensure!(report == again, "not deterministic under a fixed seed");
    let pref = &report.scorers[0].preferences[0];
    let all = &pref.results[0];
    ensure!(all.n_pairs == 500, "lowest bin holds {} pairs", all.n_pairs);
    let rate = all.rate.unwrap();
    let (lo, hi) = wilson_ci(250.0, 500, 0.99).unwrap();
    ensure!(
        lo <= rate && rate <= hi,
        "rate {rate} outside 99% interval [{lo}, {hi}]"
    );
    let bias = pref.bias.as_ref().unwrap().bias;
    ensure!(bias.abs() < 0.06, "|bias| = {}", bias.abs());
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(5), "took {t:?}");
    Ok(())
}

fn density_round_trip() -> Outcome {
    let mut rng = SplitMix64::new(1);
    for _ in 0..10_000 {
        let r = -25.0 * rng.next_open01();
        let len = 1 + rng.below(2000);
        let back = from_density(to_density(r, len).unwrap(), len).unwrap();
        ensure!(
            (back - r).abs() <= 1e-12 * r.abs().max(1.0),
            "r={r} len={len} back={back}"
        );
    }
    Ok(())
}

/// Mean over passage indices of the per-index mean token increment.
fn mean_token_increment(groups: &[PassageGroup]) -> f64 {
    let max = groups.iter().map(|g| g.passages.len()).max().unwrap();
    let incs: Vec<f64> = (1..max)
        .map(|i| {
            let d: Vec<f64> = groups
                .iter()
                .filter(|g| g.passages.len() > i)
                .map(|g| g.passages[i].hypothesis_tokens as f64 - g.passages[i - 1].hypothesis_tokens as f64)
                .collect();
            d.iter().sum::<f64>() / d.len() as f64
        })
        .collect();
    incs.iter().sum::<f64>() / incs.len() as f64
}

fn slope_for(scorer: &ScorerSpec, groups: &[PassageGroup]) -> Result<f64, String> {
    let reqs: Vec<ScoreRequest> = groups
        .iter()
        .flat_map(|g| {
            g.passages.iter().map(|p| {
                ScoreRequest::new(
                    g.passage_id(p.index),
                    &*p.source_text,
                    &*p.hypothesis_text,
                    None,
                    Mode::Qe,
                )
            })
        })
        .collect();
    let resp = score_batch(scorer, &reqs).map_err(|e| e.to_string())?;
    let table = ScoreTable::from_responses(&resp, scorer.declared_orientation);
    let curve = delta_curve(groups, &table).map_err(|e| e.to_string())?;
    slope_of_score_changes(&curve).map_err(|e| e.to_string())
}

/// Asserted exactly as the criterion is worded: the wrapped constant-density
/// scorer should be flat and the unwrapped one should track length.
fn normalization_efficacy() -> Outcome {
    let alpha = 0.01;
    let corpus = common::rich_corpus(20, 5, 3);
    let groups = build_passage_groups(&corpus, &SuiteParams::default(), &TokenCounter::whitespace())
        .unwrap()
        .groups;
    let inc = mean_token_increment(&groups);
    let density = ScorerSpec::synthetic(
        "const-density",
        SyntheticParams {
            base: -alpha,
            emit_density: true,
            ..SyntheticParams::default()
        },
    );
    let wrapped = wrap_density_scorer(density.clone(), TokenCounter::whitespace());
    let wrapped_slope = slope_for(&wrapped, &groups)?;
    let unwrapped_slope = slope_for(&density, &groups)?;
    ensure!(
        wrapped_slope <= 1e-9 && (unwrapped_slope - alpha * inc).abs() <= 1e-9,
        "wrapped slope {wrapped_slope:.6} (want <= 1e-9), unwrapped slope {unwrapped_slope:.6} (want {:.6}); \
         wrapping a constant density c gives c*|h|, which is linear in length, so the two expectations are swapped",
        alpha * inc
    );
    Ok(())
}

const Z95: f64 = 1.959963984540054;
const Z99: f64 = 2.5758293035489004;

fn oracle_wilson(s: f64, n: usize, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = s / n;
    let d = 1.0 + z * z / n;
    let c = (p + z * z / (2.0 * n)) / d;
    let h = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / d;
    let lo = if s == 0.0 { 0.0 } else { (c - h).max(0.0) };
    let hi = if s == n { 1.0 } else { (c + h).min(1.0) };
    (lo, hi)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn oracle_equivalence() -> Outcome {
    for trial in 0..100u64 {
        let mut rng = SplitMix64::new(trial);
        let mut table = ScoreTable::new();
        let mut raw: Vec<Vec<f64>> = Vec::new();
        let groups: Vec<PassageGroup> = (0..1 + rng.below(6))
            .map(|d| {
                let len = 1 + rng.below(5);
                let doc = format!("d{d}");
                let scores: Vec<f64> = (0..len).map(|_| -25.0 * rng.next_open01()).collect();
                for (i, s) in scores.iter().enumerate() {
                    table.insert(format!("{doc}/p{}", i + 1), *s);
                }
                raw.push(scores);
                PassageGroup {
                    doc_id: doc,
                    lang_pair: "xx-yy".into(),
                    passages: (1..=len)
                        .map(|i| Passage {
                            index: i,
                            source_text: String::new(),
                            hypothesis_text: String::new(),
                            source_tokens: i,
                            hypothesis_tokens: i,
                        })
                        .collect(),
                }
            })
            .collect();

        let curve = delta_curve(&groups, &table).map_err(|e| e.to_string())?;
        let max = raw.iter().map(Vec::len).max().unwrap();
        ensure!(curve.points.len() == max, "trial {trial}: curve length");
        for i in 0..max {
            let vals: Vec<f64> = raw.iter().filter(|s| s.len() > i).map(|s| s[i] - s[0]).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let p = &curve.points[i];
            ensure!(
                p.n == vals.len() && close(p.mean_delta, mean) && close(p.stddev, sd),
                "trial {trial}: point {i}"
            );
        }

        let trend = decreasing_trend_proportion(&groups, &table, 1, 5).map_err(|e| e.to_string())?;
        let eligible: Vec<&Vec<f64>> = raw.iter().filter(|s| s.len() >= 5).collect();
        let dec = eligible.iter().filter(|s| s[4] < s[0]).count();
        let want = if eligible.is_empty() {
            0.0
        } else {
            dec as f64 / eligible.len() as f64
        };
        ensure!(
            trend.n_docs == eligible.len() && close(trend.proportion, want),
            "trial {trial}: trend"
        );

        let pairs: Vec<HypothesisPair> = (0..rng.below(30))
            .map(|i| {
                let short = 200 + rng.below(10);
                let long = short + rng.below(40);
                let id = format!("c{i}");
                table.insert(format!("{id}/shorter"), -(rng.below(4) as f64));
                table.insert(format!("{id}/longer"), -(rng.below(4) as f64));
                HypothesisPair {
                    chunk_id: id,
                    source_text: String::new(),
                    reference_text: String::new(),
                    shorter: SizedText {
                        text: String::new(),
                        tokens: short,
                    },
                    longer: SizedText {
                        text: String::new(),
                        tokens: long,
                    },
                    rel_diff: (long - short) as f64 / short as f64,
                }
            })
            .collect();
        for bin in bin_pairs(&pairs, &DEFAULT_THRESHOLDS).unwrap() {
            let got = shorter_preference_rate(&bin, &table, 0.95).map_err(|e| e.to_string())?;
            let mut wins = 0.0;
            let mut n = 0;
            for p in pairs.iter().filter(|p| p.rel_diff >= bin.threshold) {
                let s = table.get(&format!("{}/shorter", p.chunk_id)).unwrap();
                let l = table.get(&format!("{}/longer", p.chunk_id)).unwrap();
                wins += if s > l {
                    1.0
                } else if s == l {
                    0.5
                } else {
                    0.0
                };
                n += 1;
            }
            ensure!(got.n_pairs == n, "trial {trial}: bin size");
            if n > 0 {
                ensure!(close(got.rate.unwrap(), wins / n as f64), "trial {trial}: rate");
                let (lo, hi) = oracle_wilson(wins, n, Z95);
                ensure!(
                    close(got.ci_low.unwrap(), lo) && close(got.ci_high.unwrap(), hi),
                    "trial {trial}: preference ci"
                );
            }
        }

        let n = 1 + rng.below(200);
        let s = rng.below(n + 1) as f64;
        for (level, z) in [(0.95, Z95), (0.99, Z99)] {
            let (lo, hi) = wilson_ci(s, n, level).unwrap();
            let (olo, ohi) = oracle_wilson(s, n, z);
            ensure!(
                close(lo, olo) && close(hi, ohi),
                "trial {trial}: wilson {s}/{n} at {level}"
            );
        }
    }
    Ok(())
}

fn mqm_weighting() -> Outcome {
    let mut rng = SplitMix64::new(99);
    for _ in 0..1000 {
        let anns: Vec<MqmAnnotation> = (0..rng.below(25))
            .map(|i| MqmAnnotation {
                span: [i, i + 1],
                severity: if rng.below(2) == 0 {
                    Severity::Minor
                } else {
                    Severity::Major
                },
                dimension: if rng.below(2) == 0 {
                    Dimension::Accuracy
                } else {
                    Dimension::Fluency
                },
                note: String::new(),
            })
            .collect();
        let minor = anns.iter().filter(|a| a.severity == Severity::Minor).count() as f64;
        let major = anns.len() as f64 - minor;
        let got = mqm_score(&anns);
        ensure!(got == -minor - 5.0 * major, "{got} for {minor} minor, {major} major");
    }
    Ok(())
}

fn golden_table_formats() -> Outcome {
    let text = std::fs::read_to_string(common::fixture("golden_tables.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let expected = |x: &serde_json::Value| -> String {
        x.as_array()
            .unwrap()
            .iter()
            .map(|l| format!("{}\n", l.as_str().unwrap()))
            .collect()
    };
    let sections: Vec<CurveSection> = v["trend"]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            let n = r["n_docs"].as_u64().unwrap() as usize;
            CurveSection {
                language: r["language"].as_str().unwrap().into(),
                n_docs: n,
                excluded: 0,
                curve: DeltaCurve::default(),
                slope: None,
                trend: TrendResult::from_counts(n, r["n_decreasing"].as_u64().unwrap() as usize, 0),
                bias: None,
            }
        })
        .collect();
    let trend = trend_table("trend", &sections);
    ensure!(
        trend.rows[0] == ["Aggregate", "472", "80.1"],
        "aggregate row {:?}",
        trend.rows[0]
    );
    let csv = trend.to_csv().map_err(|e| e.to_string())?;
    ensure!(csv == expected(&v["trend"]["expected_csv"]), "trend csv:\n{csv}");

    let pref = &v["preference"];
    let results: Vec<PreferenceResult> = pref["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            PreferenceResult::from_counts(
                c["threshold"].as_f64().unwrap(),
                c["wins"].as_f64().unwrap(),
                c["n"].as_u64().unwrap() as usize,
                0.95,
            )
            .unwrap()
        })
        .collect();
    let table = preference_table(
        "preference",
        &DEFAULT_THRESHOLDS,
        &[(pref["language"].as_str().unwrap().to_string(), results)],
    );
    ensure!(table.rows[0][1] == "55.4 (101)", "first cell {:?}", table.rows[0][1]);
    let csv = table.to_csv().map_err(|e| e.to_string())?;
    ensure!(csv == expected(&pref["expected_csv"]), "preference csv:\n{csv}");
    Ok(())
}

fn expected_echo_score(h: &str) -> f64 {
    (10000 * h.chars().count() + h.len()) as f64
}

fn protocol_robustness() -> Outcome {
    let start = Instant::now();
    let payloads = [
        "条约已签署。",
        "تم توقيع المعاهدة.",
        "Vertrag 📝 unterzeichnet ✅",
        "संधि पर हस्ताक्षर",
        "\"quoted\" \\ back\\slash",
        "tab\tinside",
    ];
    let requests: Vec<ScoreRequest> = (0..1000)
        .map(|i| {
            let h = format!("{} {}", payloads[i % payloads.len()], "词 ".repeat(i % 7));
            ScoreRequest::new(
                format!("r{i:04}-{}", payloads[(i + 1) % 3]),
                "source",
                h,
                None,
                Mode::Qe,
            )
        })
        .collect();
    let scorer = ScorerSpec::subprocess("echo", common::echo_adapter("--shuffle 7"), 30);
    let resp = score_batch(&scorer, &requests).map_err(|e| e.to_string())?;
    ensure!(resp.len() == requests.len(), "{} responses", resp.len());
    for (q, r) in requests.iter().zip(&resp) {
        ensure!(q.id == r.id, "order: {} vs {}", q.id, r.id);
        ensure!(
            r.score == expected_echo_score(&q.hypothesis),
            "corrupted payload for {}",
            q.id
        );
    }

    let crash = ScorerSpec::subprocess("crash", common::echo_adapter("--shuffle 7 --crash-after 500"), 30);
    match score_batch(&crash, &requests) {
        Ok(_) => return Err("crashing adapter produced a result".into()),
        Err(e) => {
            ensure!(e.exit_code() == 2, "exit code {} for {e}", e.exit_code());
            ensure!(!e.to_string().contains('\n'), "multi-line error: {e}");
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write_corpus(&common::rich_corpus(10, 5, 2), dir.path(), "corpus.tsv");
    let cfg = audit_config(
        dir.path(),
        Some(corpus),
        None,
        ScorerSpec::synthetic("unused", SyntheticParams::default()),
    );
    let suite_dir = dir.path().join("suite");
    SuiteData::build(&cfg).unwrap().save(&suite_dir).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lenbias"))
        .args(["score", "--suite-dir"])
        .arg(&suite_dir)
        .args([
            "--adapter-cmd",
            &common::echo_adapter("--crash-after 20"),
            "--timeout-secs",
            "30",
        ])
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    ensure!(
        out.status.code() == Some(2),
        "CLI exit {:?}: {stderr}",
        out.status.code()
    );
    ensure!(
        stderr.trim_end().lines().count() == 1,
        "stderr is not a single line: {stderr}"
    );

    let t = start.elapsed();
    ensure!(t < Duration::from_secs(10), "took {t:?}");
    Ok(())
}

fn perturbation_locality() -> Outcome {
    let corpus = common::rich_corpus(20, 5, 8);
    let groups = build_passage_groups(&corpus, &SuiteParams::default(), &TokenCounter::whitespace())
        .unwrap()
        .groups;
    ensure!(groups.len() == 20, "{} groups", groups.len());
    for sev in [Severity::Minor, Severity::Major] {
        for dim in [Dimension::Accuracy, Dimension::Fluency] {
            for g in &groups {
                let p = apply_first_applicable(g, sev, dim, 4).map_err(|e| format!("{}: {e}", g.doc_id))?;
                let want = if sev == Severity::Minor { -1.0 } else { -5.0 };
                ensure!(p.gold_rating == want, "gold {} for {sev:?}", p.gold_rating);
                let base_s1 = &g.passages[0].hypothesis_text;
                let new_s1 = &p.hypotheses[0];
                ensure!(new_s1 != base_s1, "{}: first segment unchanged", g.doc_id);
                for (k, passage) in g.passages.iter().enumerate() {
                    let suffix = &passage.hypothesis_text[base_s1.len()..];
                    ensure!(
                        p.hypotheses[k] == format!("{new_s1}{suffix}"),
                        "{} {sev:?} {dim:?}: passage {} suffix changed",
                        g.doc_id,
                        k + 1
                    );
                }
            }
        }
    }
    Ok(())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("synthetic-bias detection", synthetic_bias_detection),
        ("null calibration", null_calibration),
        ("density round trip", density_round_trip),
        ("normalization efficacy", normalization_efficacy),
        ("oracle equivalence", oracle_equivalence),
        ("MQM weighting", mqm_weighting),
        ("golden table formats", golden_table_formats),
        ("protocol robustness", protocol_robustness),
        ("perturbation locality", perturbation_locality),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
