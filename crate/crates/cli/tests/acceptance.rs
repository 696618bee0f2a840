//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xsumx::{fragments_file, objects_file, Cli};
use xsumx_core::evaluation::{
    discoverability, kendall_tau, DeltaScope, EvaluationReport, Mode, Sign, Target,
};
use xsumx_core::fragment_explainer::{attention_fragment_explain, lime_fragment_explain, FragmentExplanation};
use xsumx_core::fragmentation::{subdivide_if_needed, uniform_fragmentation, FragmenterConfig};
use xsumx_core::lime::{LimeConfig, DEFAULT_FRAGMENT_PERTURBATIONS, DEFAULT_OBJECT_PERTURBATIONS, TOP_K};
use xsumx_core::model::{FrameFeatures, PerturbationSpec, VideoBundle};
use xsumx_core::object_explainer::{lime_object_explain, select_fragments_by_summarizer, ObjectExplainConfig, ObjectOutcome};
use xsumx_core::oracle::{self, FeatureOracle, GridMeanRgb, LinearMaskOracle, MeanFeatureScorer, PixelOracle, ToyAttentionScorer};
use xsumx_core::overlay::{render_overlay, RgbFrame};
use xsumx_core::synth::{generate, load_ground_truth, SynthConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn cli(args: &[&str]) -> Result<(), String> {
    let mut full = vec!["xsumx"];
    full.extend_from_slice(args);
    let parsed = Cli::try_parse_from(&full).map_err(|e| e.to_string())?;
    xsumx::run(parsed).map_err(|e| format!("`{}` failed: {e}", args.join(" ")))
}

fn read<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T, String> {
    let bytes = std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", p.display()))
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took <= limit, format!("took {took:?}, limit {limit:?}"))
}

fn linear_exactness() -> Outcome {
    let start = Instant::now();
    let planted = [0.3, 0.1, 0.05, 0.0, -0.2];
    let b = VideoBundle::new(
        "lin",
        FrameFeatures::new(15, 1, vec![1.0; 15]).unwrap(),
        uniform_fragmentation(15, 5),
    );
    let o = LinearMaskOracle::new(0.5, planted.to_vec()).unwrap();
    let cfg = LimeConfig {
        ridge_lambda: 0.0,
        ..LimeConfig::fragment_default()
    };
    let e = lime_fragment_explain(&o, &b, &cfg).map_err(|e| e.to_string())?;
    check(e.exhaustive && e.n_perturbations == 32, "expected 32 exhaustive masks")?;
    let err = e.weights.iter().zip(planted).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    check(err <= 1e-9, format!("max coefficient error {err:e}"))?;
    check(e.ranking == vec![0, 1, 2, 3, 4], format!("ranking {:?}", e.ranking))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("max error {err:.1e}"))
}

/// Eight fragments with distinct one-hot directions and graded magnitudes,
/// scored by the self-attention toy (not linear in the masks).
fn graded_video(seed: u64) -> VideoBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<f64> = (0..8).map(|k| 0.15 + 0.1 * k as f64).collect();
    for i in (1..levels.len()).rev() {
        levels.swap(i, rng.random_range(0..=i));
    }
    let dim = 8;
    let mut rows = Vec::new();
    let mut frags = Vec::new();
    for (k, &level) in levels.iter().enumerate() {
        let len = rng.random_range(4..=8usize);
        let start = rows.len();
        for _ in 0..len {
            let mut r = vec![0.0f32; dim];
            for v in r.iter_mut() {
                *v = rng.random_range(-0.02..0.02);
            }
            r[k] += (level * (dim as f64).sqrt()) as f32;
            rows.push(r);
        }
        frags.push(xsumx_core::model::Fragment::new(start, rows.len() - 1));
    }
    let n = rows.len();
    VideoBundle::new(
        format!("g{seed}"),
        FrameFeatures::from_rows(&rows).unwrap(),
        xsumx_core::model::Fragmentation::covering(frags, n).unwrap(),
    )
}

fn sampled_vs_exhaustive() -> Outcome {
    let start = Instant::now();
    let o = FeatureOracle::new(ToyAttentionScorer);
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let b = graded_video(seed);
        let exhaustive = lime_fragment_explain(&o, &b, &LimeConfig::fragment_default()).map_err(|e| e.to_string())?;
        let sampled_cfg = LimeConfig {
            rng_seed: seed,
            exhaustive_when_possible: false,
            ..LimeConfig::fragment_default()
        };
        let sampled = lime_fragment_explain(&o, &b, &sampled_cfg).map_err(|e| e.to_string())?;
        check(exhaustive.exhaustive && !sampled.exhaustive, "wrong sampling regimes")?;
        check(sampled.n_perturbations == 20_000, "sampled budget is not 20000")?;
        let linf = exhaustive
            .weights
            .iter()
            .zip(&sampled.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(linf);
        let set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        check(
            set(&exhaustive.top) == set(&sampled.top) && set(&exhaustive.bottom) == set(&sampled.bottom),
            format!("seed {seed}: top/bottom sets differ"),
        )?;
    }
    check(worst <= 0.05, format!("L-inf {worst:.4} > 0.05"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!("20 seeds, worst L-inf {worst:.2e}"))
}

struct Planted {
    hits: usize,
    disc_failures: Vec<String>,
    sv_over_hits: f64,
}

fn planted_pipeline(corpus: &Path, out: &Path, workers: &str) -> Result<Planted, String> {
    let frag_dir = out.join("fragments");
    let eval_dir = out.join("eval");
    let c = corpus.to_str().unwrap();
    cli(&["--workers", workers, "explain-fragments", c, "--oracle", "toy-norm", "--seed", "1", "--out", frag_dir.to_str().unwrap()])?;
    cli(&[
        "--workers", workers, "evaluate", c, "--oracle", "toy-norm", "--explanations", frag_dir.to_str().unwrap(), "--out",
        eval_dir.to_str().unwrap(),
    ])?;
    let truth = load_ground_truth(corpus).map_err(|e| e.to_string())?;
    let report: EvaluationReport = read(&eval_dir.join("report.json"))?;
    let entries = &report.methods[0].entries;
    let mut hits = 0;
    let mut disc_failures = Vec::new();
    let (mut violations, mut pairs) = (0, 0);
    for t in &truth.videos {
        let e: FragmentExplanation = read(&fragments_file(&frag_dir, &t.video_id))?;
        if e.top[0] != t.planted_fragment {
            continue;
        }
        hits += 1;
        let r = entries.iter().find(|r| r.video_id == t.video_id).ok_or("missing report entry")?;
        let (p, m) = (r.disc_plus[0].ok_or("no Disc+")?, r.disc_minus[0].ok_or("no Disc-")?);
        pairs += 1;
        if p >= m {
            violations += 1;
            disc_failures.push(format!("{}: Disc+ {p:.3} >= Disc- {m:.3}", t.video_id));
        }
    }
    Ok(Planted {
        hits,
        disc_failures,
        sv_over_hits: if pairs > 0 { violations as f64 / pairs as f64 } else { 1.0 },
    })
}

fn planted_end_to_end(corpus: &Path, out: &Path) -> Outcome {
    let start = Instant::now();
    let p = planted_pipeline(corpus, out, "0")?;
    check(p.hits >= 19, format!("top-1 hits {}/20", p.hits))?;
    check(p.disc_failures.is_empty(), p.disc_failures.join("; "))?;
    check(p.sv_over_hits == 0.0, format!("SV over hits {}", p.sv_over_hits))?;
    within(start, Duration::from_secs(120))?;
    Ok(format!("{}/20 hits, SV 0 over hits", p.hits))
}

fn brute_tau(a: &[f64], b: &[f64]) -> f64 {
    let (mut c, mut d, mut ua, mut ub) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in 0..i {
            let x = (a[i] - a[j]).signum() * f64::from(u8::from(a[i] != a[j]));
            let y = (b[i] - b[j]).signum() * f64::from(u8::from(b[i] != b[j]));
            if x != 0.0 {
                ua += 1;
            }
            if y != 0.0 {
                ub += 1;
            }
            if x * y > 0.0 {
                c += 1;
            } else if x * y < 0.0 {
                d += 1;
            }
        }
    }
    if ua == 0 || ub == 0 {
        return 0.0;
    }
    (c - d) as f64 / ((ua as f64) * (ub as f64)).sqrt()
}

fn kendall_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = rng.random_range(2..=200usize);
        // few distinct values, so ties are common
        let levels = rng.random_range(2..=20u32);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| f64::from(rng.random_range(0..levels)) / 8.0).collect()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let got = kendall_tau(&a, &b).map_err(|e| e.to_string())?.tau;
        let want = brute_tau(&a, &b);
        let diff = (got - want).abs();
        worst = worst.max(diff);
        check(diff <= 1e-12, format!("case {case} (n={n}): {got} vs {want}"))?;
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("200 pairs, worst difference {worst:.1e}"))
}

fn attention_path() -> Outcome {
    let start = Instant::now();
    // one-hot direction per fragment; radius sets how peaked its frames'
    // self-attention is
    let radii = [3.0, 0.5, 2.5, 1.0, 4.0, 0.2, 1.5, 2.0];
    let dim = radii.len();
    let len = 5;
    let mut rows = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        for _ in 0..len {
            let mut row = vec![0.0f32; dim];
            row[k] = r as f32;
            rows.push(row);
        }
    }
    let n = rows.len();
    let b = VideoBundle::new("att", FrameFeatures::from_rows(&rows).unwrap(), uniform_fragmentation(n, radii.len()));
    let e = attention_fragment_explain(&FeatureOracle::new(ToyAttentionScorer), &b).map_err(|e| e.to_string())?;

    // Independent computation of each fragment's mean attention diagonal.
    let scale = 1.0 / (dim as f64).sqrt();
    let mut diag_means = Vec::new();
    for k in 0..radii.len() {
        let mut sum = 0.0;
        for i in k * len..(k + 1) * len {
            let logits: Vec<f64> = rows.iter().map(|row| {
                row.iter().zip(&rows[i]).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum::<f64>() * scale
            }).collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            sum += logits[i].exp() / z;
        }
        diag_means.push(sum / len as f64);
    }
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| diag_means[b].total_cmp(&diag_means[a]));
    let want: Vec<usize> = order[..3].to_vec();
    for (k, (&got, &exp)) in e.weights.iter().zip(&diag_means).enumerate() {
        check((got - exp).abs() < 1e-9, format!("fragment {k}: {got} vs {exp}"))?;
    }
    check(e.top == want, format!("top {:?}, expected {want:?}", e.top))?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("top-3 {:?}", e.top))
}

fn object_planted() -> Outcome {
    let start = Instant::now();
    let (bundles, truth) = generate(&SynthConfig {
        n_videos: 5,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let o = PixelOracle::new(GridMeanRgb::default(), MeanFeatureScorer);
    let cfg = ObjectExplainConfig::default();
    let mut checked = 0;
    for (b, t) in bundles.iter().zip(&truth.videos) {
        let baseline = oracle::score(&o, b, &PerturbationSpec::None).map_err(|e| e.to_string())?;
        for frag in select_fragments_by_summarizer(&baseline, &b.fragmentation, TOP_K).fragment_indices {
            let ObjectOutcome::Explained(e) = lime_object_explain(&o, b, frag, &cfg).map_err(|e| e.to_string())? else {
                return Err(format!("{} fragment {frag} skipped", b.video_id));
            };
            let at = format!("{} fragment {frag}", b.video_id);
            check(e.top[0] == t.planted_object, format!("{at}: top {:?}, planted {}", e.top, t.planted_object))?;
            check(e.bottom[0] == t.bottom_object, format!("{at}: bottom {:?}", e.bottom))?;
            let target = Target::Objects {
                fragment_index: frag,
                ranking: e.ranking.clone(),
            };
            let disc = |sign| {
                discoverability(&o, b, &target, sign, Mode::OneByOne, 1, DeltaScope::FragmentOnly { fragment_index: frag })
                    .map_err(|e| e.to_string())?
                    .map(|t| t.tau)
                    .ok_or_else(|| "ineligible".to_string())
            };
            let (plus, minus) = (disc(Sign::Plus)?, disc(Sign::Minus)?);
            check(plus < minus, format!("{at}: Disc+ {plus} >= Disc- {minus}"))?;

            let frames = b.frames().unwrap();
            let labels = b.segmentation().unwrap().frame(e.keyframe_index);
            let orig = RgbFrame::new(frames.height(), frames.width(), frames.frame(e.keyframe_index).to_vec()).unwrap();
            let (img, _) = render_overlay(&orig, labels, &e.top, &e.bottom).map_err(|e| e.to_string())?;
            for (i, id) in labels.iter().enumerate() {
                let changed = img.data[i * 3..i * 3 + 3] != orig.data[i * 3..i * 3 + 3];
                let claimed = e.top.contains(id) || e.bottom.contains(id);
                check(changed == claimed, format!("{at}: pixel {i} (object {id}) changed={changed}"))?;
                if claimed {
                    let color = if e.top.contains(id) { [0.0, 255.0, 0.0] } else { [255.0, 0.0, 0.0] };
                    for ch in 0..3 {
                        let want = (0.5 * f64::from(orig.data[i * 3 + ch]) + 0.5 * color[ch]).round() as u8;
                        check(img.data[i * 3 + ch] == want, format!("{at}: pixel {i} channel {ch}"))?;
                    }
                }
            }
            checked += 1;
        }
    }
    within(start, Duration::from_secs(30))?;
    Ok(format!("{checked} fragments, planted object top-1 in all"))
}

fn default_conformance(eval_dir: &Path, frag_dir: &Path) -> Outcome {
    check(DEFAULT_FRAGMENT_PERTURBATIONS == 20_000, "M != 20000")?;
    check(DEFAULT_OBJECT_PERTURBATIONS == 2_000, "N != 2000")?;
    check(LimeConfig::fragment_default().num_perturbations == 20_000, "fragment config M")?;
    check(LimeConfig::object_default().num_perturbations == 2_000, "object config N")?;
    check(TOP_K == 3, "top-k != 3")?;
    let fc = FragmenterConfig::default();
    check(fc.min_fragments == 10, "min_fragments != 10")?;
    check(subdivide_if_needed(&uniform_fragmentation(100, 9), &fc).len() >= 10, "9 fragments not subdivided")?;
    check(subdivide_if_needed(&uniform_fragmentation(100, 10), &fc).len() == 10, "10 fragments changed")?;
    let e: FragmentExplanation = read(&fragments_file(frag_dir, "v000"))?;
    let echo = e.config_echo.ok_or("no config echo")?;
    check(echo.num_perturbations == 20_000, "CLI default M is not echoed as 20000")?;
    check(e.top.len() == 3 && e.bottom.len() == 3, "top/bottom not of size 3")?;

    let text = std::fs::read_to_string(eval_dir.join("report.txt")).map_err(|e| e.to_string())?;
    let header = text.lines().nth(1).ok_or("report.txt too short")?;
    let columns = ["Disc+ (↓)", "Disc+ Seq (↓)", "Disc- (↑)", "Disc- Seq (↑)", "SV (↓)", "SV Seq (↓)"];
    let cells: Vec<&str> = header.split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
    check(cells == columns, format!("header {cells:?}"))?;
    let labels: Vec<&str> = text
        .lines()
        .filter_map(|l| l.split('|').next().map(str::trim))
        .filter(|l| l.starts_with("Top/Bottom-"))
        .collect();
    check(
        labels == ["Top/Bottom-1", "Top/Bottom-1", "Top/Bottom-2", "Top/Bottom-3"],
        format!("row labels {labels:?}"),
    )?;
    Ok("M=20000, N=2000, top-3, min_fragments=10, table layout".into())
}

fn determinism(corpus: &Path, root: &Path) -> Outcome {
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let out = root.join(format!("w{workers}"));
        planted_pipeline(corpus, &out, workers)?;
        let obj = out.join("objects");
        cli(&[
            "--workers", workers, "explain-objects", corpus.to_str().unwrap(), "--oracle", "pixel:mean", "--fragments-source",
            "explanation", "--explanations", out.join("fragments").to_str().unwrap(), "--out", obj.to_str().unwrap(),
        ])?;
        outputs.push(out);
    }
    let mut files = 0;
    for sub in ["fragments", "eval", "objects"] {
        let mut names: Vec<_> = std::fs::read_dir(outputs[0].join(sub))
            .map_err(|e| e.to_string())?
            .flatten()
            .map(|e| e.file_name())
            .collect();
        names.sort();
        for name in names {
            let a = std::fs::read(outputs[0].join(sub).join(&name)).map_err(|e| e.to_string())?;
            let b = std::fs::read(outputs[1].join(sub).join(&name)).map_err(|e| e.to_string())?;
            check(a == b, format!("{sub}/{} differs between worker counts", name.to_string_lossy()))?;
            files += 1;
        }
    }
    check(objects_file(&outputs[0].join("objects"), "v000", 0).exists() || files > 0, "no outputs")?;
    Ok(format!("{files} files byte-identical with 1 and 4 workers"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let corpus = tmp.path().join("corpus");
    let run_dir = tmp.path().join("run");
    let synth = cli(&["synth", "--out", corpus.to_str().unwrap(), "--seed", "7", "--videos", "20", "--fragments", "12"]);

    let mut results: Vec<(&str, Outcome)> = vec![
        ("linear-oracle exactness", linear_exactness()),
        ("sampled vs exhaustive consistency", sampled_vs_exhaustive()),
    ];
    match synth {
        Ok(()) => {
            results.push(("planted-influence end-to-end", planted_end_to_end(&corpus, &run_dir)));
            results.push(("kendall tau oracle equivalence", kendall_equivalence()));
            results.push(("attention path", attention_path()));
            results.push(("object-level planted test", object_planted()));
            results.push((
                "default parameter conformance",
                default_conformance(&run_dir.join("eval"), &run_dir.join("fragments")),
            ));
            results.push(("determinism across worker counts", determinism(&corpus, &tmp.path().join("det"))));
        }
        Err(e) => {
            for name in [
                "planted-influence end-to-end",
                "default parameter conformance",
                "determinism across worker counts",
            ] {
                results.push((name, Err(format!("synth failed: {e}"))));
            }
            results.push(("kendall tau oracle equivalence", kendall_equivalence()));
            results.push(("attention path", attention_path()));
            results.push(("object-level planted test", object_planted()));
        }
    }

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
