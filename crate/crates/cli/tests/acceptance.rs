//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails. Pass a criterion number to run only that one.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use agitation::data::Label;
use agitation::decide::{ccr_relabel, redecide, CcrParams};
use agitation::eval::{auroc, f1_score, run_cv_experiment, CvReport, CvSettings};
use agitation::model::HyperGrid;
use agitation::resample::{iqr_fence, rus, wrus_weight, ResampleSpec, Strategy, WrusParams};
use agitation::signal::{FeatureCatalog, FirstOrderLowpass, PipelineConfig};
use agitation::synth::{generate_cohort, inject_boundary_jitter, CohortConfig};
use agitation::Dataset;
use agitation_cli::commands::{cmd_run, Overrides};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const SEEDS2: [u64; 5] = [1, 2, 3, 4, 5];
const N_TREES: usize = 30;
const N_PREDICTORS: usize = 8;

fn cohort() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        let t = Instant::now();
        let cohort = generate_cohort(&CohortConfig::default()).expect("default cohort");
        let ds = cohort
            .build_dataset(None, &FeatureCatalog::v1(), &PipelineConfig::default())
            .expect("feature build");
        eprintln!(
            "    cohort: {} minutes, {} agitation, built in {:.0} s",
            ds.len(),
            ds.count(Label::Agitation),
            t.elapsed().as_secs_f64()
        );
        ds
    })
}

fn settings(strategy: Strategy, proportion: f64) -> CvSettings {
    CvSettings {
        resample: ResampleSpec { strategy, proportion, ..ResampleSpec::default() },
        grid: HyperGrid::single(N_TREES, N_PREDICTORS),
        seeds2: SEEDS2.to_vec(),
        ..CvSettings::default()
    }
}

fn run(ds: &Dataset, strategy: Strategy, proportion: f64, truth: Option<&[u8]>) -> CvReport {
    let t = Instant::now();
    let r = run_cv_experiment(ds, &settings(strategy, proportion), truth).expect("cv run");
    eprintln!(
        "    {strategy} p={proportion}: AUROC {:.4}, fit {:.0} ms ({:.0} s)",
        r.mean_auroc,
        r.mean_train_ms(),
        t.elapsed().as_secs_f64()
    );
    r
}

type Verdict = (bool, String);

fn c1_wrus_weight() -> Verdict {
    let p = WrusParams::default();
    let w = |d: f64| wrus_weight(Some(d), &p);
    let oracle0 = 1.0 / (1.0 + (12.0 * (1.0 - 1.5f64.ln())).exp());
    let half = w(10.0) == 0.5;
    let zero = (w(0.0) - 7.97e-4).abs() <= 1e-5 && (w(0.0) - oracle0).abs() <= 1e-15;
    let sym = (1..=10).map(|a| (w(10.0 + a as f64) + w(10.0 - a as f64) - 1.0).abs()).fold(0.0, f64::max);
    (half && zero && sym <= 1e-12, format!("w(10)={}, w(0)={:.6e}, max symmetry error {sym:.1e}", w(10.0), w(0.0)))
}

fn c2_ccr() -> Verdict {
    let win = 5;
    let mut table_ok = 0;
    for flag in 0..=win {
        for interim in 0..=1u8 {
            let expected = match flag {
                0 => 0,
                1 | 2 => interim,
                _ => 1,
            };
            let prev: Vec<f64> = (0..win).map(|k| if k < flag { 0.9 } else { 0.1 }).collect();
            let mut scores = prev;
            scores.push(if interim == 1 { 0.9 } else { 0.1 });
            let trace = ccr_relabel(&scores, &CcrParams::new(win, 0.5).unwrap());
            if redecide(flag, win, interim) == expected && trace.flag[win] == flag && trace.label[win] == expected {
                table_ok += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut seq_ok = 0;
    for _ in 0..1000 {
        let n: usize = rng.random_range(1..200);
        let w: usize = rng.random_range(1..=9);
        let th: f64 = rng.random();
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let trace = ccr_relabel(&scores, &CcrParams::new(w, th).unwrap());
        let ok = (0..n).all(|i| {
            let flag = (i.saturating_sub(w)..i).filter(|&k| scores[k] >= th).count();
            trace.flag[i] == flag
        });
        seq_ok += ok as usize;
    }
    (table_ok == 12 && seq_ok == 1000, format!("{table_ok}/12 truth-table cases, {seq_ok}/1000 flag sequences"))
}

fn pair_auroc(scores: &[f64], truth: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if truth[i] == 1 && truth[j] == 0 {
                pairs += 1.0;
                num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    num / pairs
}

fn c3_auroc() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut truth: Vec<u8> = (0..100).map(|_| rng.random_bool(0.3) as u8).collect();
        truth[0] = 0;
        truth[1] = 1;
        let scores: Vec<f64> = truth
            .iter()
            .map(|&t| ((rng.random::<f64>() + 0.3 * t as f64) * 20.0).round() / 20.0)
            .collect();
        worst = worst.max((auroc(&scores, &truth).unwrap() - pair_auroc(&scores, &truth)).abs());
    }
    (worst <= 1e-9, format!("max |sweep - pair count| = {worst:.1e} over 20 seeds"))
}

fn category_shares(cats: impl Iterator<Item = u8>) -> BTreeMap<u8, f64> {
    let mut counts = BTreeMap::new();
    let mut n = 0.0;
    for c in cats {
        *counts.entry(c).or_insert(0.0) += 1.0;
        n += 1.0;
    }
    counts.into_iter().map(|(c, k)| (c, k / n)).collect()
}

fn normal_categories<'a>(it: impl Iterator<Item = &'a agitation::Instance> + 'a) -> impl Iterator<Item = u8> + 'a {
    it.filter(|i| i.label == Label::Normal).map(|i| i.category.expect("synthetic normals carry a category"))
}

fn c4_rus_categories() -> Verdict {
    let ds = cohort();
    let source = category_shares(normal_categories(ds.instances().iter()));
    let mut worst: f64 = 0.0;
    for seed in 1..=50 {
        let rebuilt = rus(ds, 0.2, seed).unwrap();
        let shares = category_shares(normal_categories(rebuilt.instances.iter()));
        for (c, s) in &source {
            worst = worst.max((shares.get(c).copied().unwrap_or(0.0) - s).abs());
        }
    }
    (worst <= 0.03, format!("max category share deviation {:.3} pp over 50 seeds", worst * 100.0))
}

fn c5_iqr() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scores: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let retained = |k: f64| {
        let fence = iqr_fence(&scores, k).unwrap();
        scores.iter().map(|&s| fence.contains(s)).collect::<Vec<bool>>()
    };
    let frac = retained(1.5).iter().filter(|&&b| b).count() as f64 / scores.len() as f64;
    let ks = [0.0, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 3.0, 10.0];
    let sets: Vec<Vec<bool>> = ks.iter().map(|&k| retained(k)).collect();
    let nested = sets.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(&a, &b)| !a || b));
    (frac >= 0.99 && nested, format!("retained {:.2}% at k=1.5, nested over k list: {nested}", frac * 100.0))
}

fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn c6_qualitative() -> Verdict {
    let ds = cohort();
    let base = run(ds, Strategy::None, 1.0, None);
    let props: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let runs: Vec<CvReport> = props.iter().map(|&p| run(ds, Strategy::Rus, p, None)).collect();
    let r02 = &runs[1];
    let a = r02.mean_auroc >= base.mean_auroc - 0.02;
    let ratio = r02.mean_train_ms() / base.mean_train_ms();
    let b = ratio <= 0.40;
    let times: Vec<f64> = runs.iter().map(|r| r.mean_train_ms()).collect();
    let r2 = linear_r2(&props, &times);
    let c = r2 >= 0.9;
    let orig = base.sweep.best_original().expect("sweep rows");
    let ccr = base.sweep.best_ccr().expect("sweep rows");
    let gain = ccr.ccr.f1 / orig.original.f1 - 1.0;
    let d = ccr.ccr.f1 >= orig.original.f1 && gain >= 0.05;
    let range = &base.effective_range;
    let e = !d || (range.range.is_some() && range.contains(ccr.threshold));
    (
        a && b && c && d && e,
        format!(
            "(a) AUROC RUS0.2 {:.4} vs baseline {:.4}: {}; (b) fit time ratio {:.3}: {}; (c) R2 {:.3}: {}; \
             (d) peak F1 CCR {:.4} at {} vs Original {:.4} at {} (+{:.1}%): {}; (e) effective range {:?}: {}",
            r02.mean_auroc,
            base.mean_auroc,
            ok(a),
            ratio,
            ok(b),
            r2,
            ok(c),
            ccr.ccr.f1,
            ccr.threshold,
            orig.original.f1,
            orig.threshold,
            gain * 100.0,
            ok(d),
            range.range,
            ok(e)
        ),
    )
}

fn c7_wrus_jitter() -> Verdict {
    let ds = cohort();
    let truth: Vec<u8> = ds.instances().iter().map(|i| i.label.as_u8()).collect();
    let jittered = inject_boundary_jitter(ds.annotations(), 4, 1);
    let train = ds.relabel(jittered.annotations).unwrap();
    let mut within = 0;
    let mut outright = 0;
    let mut cells = Vec::new();
    for p in [0.3, 0.4, 0.5, 0.6, 0.7] {
        let r = run(&train, Strategy::Rus, p, Some(&truth)).mean_auroc;
        let w = run(&train, Strategy::Wrus, p, Some(&truth)).mean_auroc;
        within += (w >= r - 0.005) as usize;
        outright += (w >= r) as usize;
        cells.push(format!("{p}: WRUS {w:.4} / RUS {r:.4}"));
    }
    (
        within == 5 && outright >= 3,
        format!("{}; within tolerance {within}/5, outright {outright}/5", cells.join(", ")),
    )
}

fn c8_f1() -> Verdict {
    let a = f1_score(0.347, 0.304);
    let b = f1_score(0.258, 0.254);
    ((a - 0.324).abs() <= 5e-4 && (b - 0.256).abs() <= 5e-4, format!("F1 {a:.5} and {b:.5}"))
}

fn c9_filter() -> Verdict {
    let rate = 64.0;
    let cutoff = 10.0;
    let f = FirstOrderLowpass::<f64>::design(cutoff, rate).unwrap();
    let n = 64 * 60;
    let tone: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * cutoff * i as f64 / rate).sin()).collect();
    let out = f.apply(&tone);
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    let db = 20.0 * (rms(&out[n / 2..]) / rms(&tone[n / 2..])).log10();
    let dc = f.apply(&vec![1.0; 1000]);
    let dc_gain = dc[999];
    let ok = (db + 3.0).abs() <= 0.5 && (dc_gain - 1.0).abs() <= 1e-3;
    (ok, format!("gain at cutoff {db:.3} dB, DC gain {dc_gain:.6}"))
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name.starts_with("report_") || name == "run_index.csv"
        })
        .map(|p| (p.file_name().unwrap().to_str().unwrap().to_string(), std::fs::read(&p).unwrap()))
        .collect()
}

fn c10_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("det.toml");
    std::fs::write(
        &config,
        "strategy = \"wrus\"\nproportions = [0.5]\nn_folds = 2\nseeds2 = [1, 2]\noutput_dir = \"out\"\n\
         [synth]\nn_participants = 3\ndays_per_participant = 4\nagitation_day_fraction = 0.5\ntarget_prevalence = 0.03\n\
         [grid]\nn_trees_options = [10, 20]\nn_predictors_options = [4, 8]\n",
    )
    .unwrap();
    let overrides = Overrides { config: Some(config), ..Overrides::default() };
    let out = dir.path().join("out");
    let mut runs = Vec::new();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| cmd_run(&overrides)).unwrap();
        runs.push(read_outputs(&out));
    }
    let same = runs[0] == runs[1] && !runs[0].is_empty();
    (same, format!("{} files byte-identical across 1 and 3 threads: {same}", runs[0].len()))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fails"
    }
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Verdict); 10] = [
        (1, "WRUS weight oracle", c1_wrus_weight),
        (2, "CCR truth table and flag re-sum", c2_ccr),
        (3, "AUROC pair-count oracle", c3_auroc),
        (4, "RUS category shares", c4_rus_categories),
        (5, "IQR fence", c5_iqr),
        (6, "qualitative reproduction", c6_qualitative),
        (7, "WRUS vs RUS under boundary jitter", c7_wrus_jitter),
        (8, "F1 cross-check", c8_f1),
        (9, "low-pass filter response", c9_filter),
        (10, "run determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += !pass as usize;
        println!(
            "criterion {id} {name}: {} ({detail}) [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
