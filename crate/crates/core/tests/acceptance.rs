//! Acceptance suite: one PASS/FAIL line per criterion. Every oracle here is
//! computed independently of the library code it checks.

mod fixtures;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use dyad_core::config::KvConfig;
use dyad_core::eval::{
    make_couple_folds, modality_label, run_cv, uar, Confusion, EvalData, EvalReport, GridConfig, GridRequest,
    OUTER_FOLDS,
};
use dyad_core::features::acoustic::{feature_names, gemaps_lite};
use dyad_core::features::stats::{movement_features, stat10};
use dyad_core::learn::{Hyper, ModelKind};
use dyad_core::model::{
    binarize_affect, select_samples, AxisSeries, DatasetSample, FeatureVector, Gender, Modality, Role, Speaker,
    Target, TriggerKind,
};
use dyad_core::pipeline::{
    evaluate, gender_counts, run_pipeline, write_metrics, Funnel, GridOptions, Manifest, PipelineOptions,
    METRICS_JSON,
};
use dyad_core::preprocess::{condition_motion, lowpass_audio, AUDIO_RATE, SPEECH_CUTOFF_HZ};
use dyad_core::qa::{chunk_overlap_pct, icc, xy_pct, AnnotationTrack, RatingsMatrix, Transcript};
use dyad_core::sim::world::{generate_world, read_log, replay, simulate_protocol, write_log};
use dyad_core::sim::SimConfig;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("{what} took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("selection_reproduces_class_table", selection_table),
        ("protocol_invariants_hold", protocol_invariants),
        ("numerical_oracles_agree", numerical_oracles),
        ("learning_sanity", learning_sanity),
        ("cross_validation_contract", cv_contract),
        ("end_to_end_recovers_planted_effects", end_to_end),
        ("qa_metrics_match_hand_values", qa_metrics),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------------------
// Selection

fn selection_table() -> Outcome {
    let started = Instant::now();
    let fx = fixtures::table1_fixture();
    ensure(fx.sessions.len() == fixtures::TOTAL_SESSIONS, || {
        format!("fixture has {} sessions", fx.sessions.len())
    })?;
    let selection = select_samples(&fx.sessions, &fx.reports, &fx.codes, &fx.schedules);
    let funnel = Funnel::new(fx.sessions.len(), &selection, None);
    let stages = (funnel.sessions, funnel.usable_signals, funnel.selected);
    let want = (fixtures::TOTAL_SESSIONS, fixtures::USABLE_SESSIONS, fixtures::SELECTED);
    ensure(stages == want, || format!("funnel {stages:?}, expected {want:?}"))?;

    let counts = gender_counts(&selection.samples);
    for (g, valence, arousal) in [
        ("male", fixtures::MALE_VALENCE, fixtures::MALE_AROUSAL),
        ("female", fixtures::FEMALE_VALENCE, fixtures::FEMALE_AROUSAL),
    ] {
        let c = counts.get(g).ok_or_else(|| format!("no {g} counts"))?;
        ensure(c.valence == valence && c.arousal == arousal, || {
            format!("{g}: valence {:?} arousal {:?}, expected {valence:?} {arousal:?}", c.valence, c.arousal)
        })?;
    }

    // Independent tally from the raw ratings of the surviving sessions.
    let kept: BTreeSet<&str> = selection.samples.iter().map(|s| s.session_id.as_str()).collect();
    let mut tally: BTreeMap<Gender, [usize; 4]> = BTreeMap::new();
    for s in fx.sessions.iter().filter(|s| kept.contains(s.session_id.as_str())) {
        let r = fx.reports.iter().find(|r| r.session_id == s.session_id).unwrap();
        let t = tally.entry(s.partner.gender).or_default();
        t[usize::from(r.valence_raw.unwrap() > 50.0)] += 1;
        t[2 + usize::from(r.arousal_raw.unwrap() > 50.0)] += 1;
    }
    let male = tally[&Gender::Male];
    let female = tally[&Gender::Female];
    ensure(
        male == [8, 191, 43, 156] && female == [12, 169, 54, 127],
        || format!("raw tally male {male:?} female {female:?}"),
    )?;
    let boundary = binarize_affect(50.0, 50.0).map_err(|e| e.to_string())?;
    ensure(boundary.class(Target::Valence) == 0 && boundary.class(Target::Arousal) == 0, || {
        "a rating of 50 is not on the low side".into()
    })?;
    within(started.elapsed(), 1.0, "selection")?;
    Ok(format!(
        "{} -> {} -> {} sessions; male V {:?} A {:?}; female V {:?} A {:?}",
        stages.0, stages.1, stages.2, male[..2].to_vec(), male[2..].to_vec(), female[..2].to_vec(), female[2..].to_vec()
    ))
}

// ---------------------------------------------------------------------------
// Protocol

fn protocol_invariants() -> Outcome {
    let started = Instant::now();
    let mut watch_hours = 0;
    let mut backups = 0;
    for seed in 1..=5u64 {
        let cfg = SimConfig {
            seed,
            ..SimConfig::default()
        };
        let run = simulate_protocol(&cfg).map_err(|e| e.to_string())?;
        ensure(run.protocol_errors() == 0, || format!("seed {seed}: {} protocol errors", run.protocol_errors()))?;
        let state = run.state();
        let completed: BTreeSet<&str> = state
            .reports
            .iter()
            .filter(|r| r.completed)
            .map(|r| r.session_id.as_str())
            .collect();

        type Watch = (u32, Role);
        let mut hours: BTreeSet<(Watch, u32, u8)> = BTreeSet::new();
        for c in &run.couples {
            for tr in &c.traces {
                for role in [Role::Patient, Role::SupportPartner] {
                    hours.insert(((c.couple.id, role), tr.slot.day, tr.slot.hour));
                }
            }
        }
        let mut per_watch: BTreeMap<Watch, Vec<_>> = BTreeMap::new();
        let mut per_hour: BTreeMap<(Watch, u32, u8), Vec<_>> = BTreeMap::new();
        for s in &state.sessions {
            let w = (s.partner.couple_id, s.partner.role);
            per_watch.entry(w).or_default().push(s);
            per_hour.entry((w, s.slot.day, s.slot.hour)).or_default().push(s);
        }
        for (w, list) in &mut per_watch {
            list.sort_by(|a, b| a.start_clock().total_cmp(&b.start_clock()));
            for pair in list.windows(2) {
                let gap = pair[1].start_clock() - (pair[0].start_clock() + pair[0].duration_s);
                ensure(gap >= 1200.0 - 1e-9, || {
                    format!("seed {seed} watch {w:?}: {} starts {gap:.1} s after {} ended", pair[1].session_id, pair[0].session_id)
                })?;
            }
        }
        for key in per_hour.keys() {
            ensure(hours.contains(key), || format!("seed {seed}: recording outside collection hours {key:?}"))?;
        }
        for key in &hours {
            let list = per_hour.get(key).map(Vec::as_slice).unwrap_or(&[]);
            let retained: Vec<_> = list.iter().filter(|s| s.audio_retained).collect();
            ensure(retained.len() == 1, || {
                format!("seed {seed} {key:?}: {} retained recordings", retained.len())
            })?;
            ensure(retained[0].duration_s <= 300.0 + 1e-9, || {
                format!("seed {seed} {}: {} s of audio", retained[0].session_id, retained[0].duration_s)
            })?;
            let mut success = false;
            for s in list {
                match s.trigger_kind {
                    TriggerKind::Interaction => {
                        let central_start = s.start_offset_s - s.peripheral_delay_s;
                        ensure(central_start < 31.0 * 60.0, || {
                            format!("seed {seed} {}: interaction at {central_start:.0} s", s.session_id)
                        })?;
                        let done = completed.contains(s.session_id.as_str());
                        ensure(!s.audio_retained || done, || {
                            format!("seed {seed} {}: retained interaction without a completed report", s.session_id)
                        })?;
                        success |= done;
                    }
                    TriggerKind::Backup => {
                        ensure((2700.0..3600.0).contains(&s.start_offset_s), || {
                            format!("seed {seed} {}: backup at {:.0} s", s.session_id, s.start_offset_s)
                        })?;
                    }
                }
            }
            let has_backup = list.iter().any(|s| s.trigger_kind == TriggerKind::Backup);
            ensure(has_backup != success, || {
                format!("seed {seed} {key:?}: backup {has_backup}, successful interaction {success}")
            })?;
            backups += usize::from(has_backup);
        }
        watch_hours += hours.len();

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("events.log");
        write_log(&path, &run.log).map_err(|e| e.to_string())?;
        let read = read_log(&path).map_err(|e| e.to_string())?;
        let replayed = replay(&read).map_err(|e| e.to_string())?;
        ensure(replayed == state, || format!("seed {seed}: replayed state differs from the run"))?;
    }
    within(started.elapsed(), 60.0, "five protocol runs")?;
    Ok(format!("5 seeds, {watch_hours} watch-hours, {backups} with a backup, replay identical"))
}

// ---------------------------------------------------------------------------
// Numerical oracles

fn oracle_percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn oracle_stat10(x: &[f64]) -> [f64; 10] {
    let n = x.len() as f64;
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let mean = x.iter().sum::<f64>() / n;
    let moment = |p: i32| x.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n;
    let var = moment(2);
    let sd = var.sqrt();
    let (skew, kurt) = if var > 0.0 {
        (moment(3) / sd.powi(3), moment(4) / var.powi(2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let (min, max) = (s[0], s[s.len() - 1]);
    [
        mean,
        oracle_percentile(&s, 0.5),
        max,
        min,
        oracle_percentile(&s, 0.25),
        oracle_percentile(&s, 0.75),
        sd,
        max - min,
        skew,
        kurt,
    ]
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let mut basis: Vec<[f64; 3]> = Vec::new();
    while basis.len() < 2 {
        let mut v = [normal(rng), normal(rng), normal(rng)];
        for b in &basis {
            let d = dot(&v, b);
            for k in 0..3 {
                v[k] -= d * b[k];
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            basis.push(v.map(|c| c / norm));
        }
    }
    let (a, b) = (basis[0], basis[1]);
    let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    [a, b, c]
}

fn rotate(series: &AxisSeries, r: &[[f64; 3]; 3]) -> AxisSeries {
    AxisSeries {
        t: series.t.clone(),
        xyz: series
            .xyz
            .iter()
            .map(|p| [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]))
            .collect(),
    }
}

fn dft_amplitude(x: &[f64], rate: f64, freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let ph = 2.0 * std::f64::consts::PI * freq * i as f64 / rate;
        re += v * ph.cos();
        im -= v * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / x.len() as f64
}

fn numerical_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.random_range(1..200usize);
        let offset = rng.random_range(-10.0..10.0);
        let scale = rng.random_range(0.1..3.0);
        let mut x: Vec<f64> = (0..n).map(|_| offset + scale * normal(&mut rng)).collect();
        if i % 50 == 0 {
            x = vec![offset; n];
        }
        let got = stat10(&x).map_err(|e| e.to_string())?;
        let want = oracle_stat10(&x);
        for k in 0..10 {
            let err = (got[k] - want[k]).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("stat10 value {k} of series {i}: {} vs {}", got[k], want[k]))?;
        }
    }

    let mut rot_worst: f64 = 0.0;
    let t: Vec<f64> = (0..500).map(|i| i as f64 / 50.0).collect();
    for i in 0..100 {
        let axes = |rng: &mut ChaCha8Rng, g: f64| AxisSeries {
            t: t.clone(),
            xyz: (0..t.len()).map(|_| [normal(rng), normal(rng), g + normal(rng)]).collect(),
        };
        let accel = axes(&mut rng, 9.81);
        let gyro = axes(&mut rng, 0.0);
        let r = random_rotation(&mut rng);
        let features = |a: &AxisSeries, g: &AxisSeries| -> Result<Vec<f64>, String> {
            let a = condition_motion(a).map_err(|e| e.to_string())?;
            let g = condition_motion(g).map_err(|e| e.to_string())?;
            Ok(movement_features(&a, &g).map_err(|e| e.to_string())?.values)
        };
        let before = features(&accel, &gyro)?;
        let after = features(&rotate(&accel, &r), &rotate(&gyro, &r))?;
        for (k, (a, b)) in before.iter().zip(&after).enumerate() {
            rot_worst = rot_worst.max((a - b).abs());
            ensure((a - b).abs() <= 1e-9, || format!("rotation {i}: movement feature {k} moved {a} -> {b}"))?;
        }
    }

    let rate = AUDIO_RATE as f64;
    let gain = |freq: f64| -> Result<f64, String> {
        let x: Vec<f64> = (0..AUDIO_RATE as usize)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
            .collect();
        let y = lowpass_audio(&x, SPEECH_CUTOFF_HZ).map_err(|e| e.to_string())?;
        let mid = 4410..(x.len() - 4410);
        Ok(dft_amplitude(&y[mid.clone()], rate, freq) / dft_amplitude(&x[mid], rate, freq))
    };
    let pass = gain(1000.0)?;
    let stop = gain(6000.0)?;
    ensure(pass >= 0.99, || format!("gain {pass:.4} at 1 kHz"))?;
    ensure(stop <= 0.01, || format!("gain {stop:.5} at 6 kHz"))?;

    let tone: Vec<f64> = (0..3 * AUDIO_RATE as usize)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / rate).sin())
        .collect();
    let feats = gemaps_lite(&[&tone], AUDIO_RATE).map_err(|e| e.to_string())?;
    let idx = feature_names()
        .iter()
        .position(|n| n == "f0_mean")
        .ok_or("no f0_mean feature")?;
    let f0 = feats.vector.values[idx];
    ensure((f0 - 220.0).abs() <= 2.0, || format!("f0 {f0:.2} Hz for a 220 Hz tone"))?;
    Ok(format!(
        "stat10 max err {worst:.1e}, rotation max err {rot_worst:.1e}, lowpass gain {pass:.4}/{stop:.5}, f0 {f0:.2} Hz"
    ))
}

// ---------------------------------------------------------------------------
// Learning sanity

/// `couples` couples with `per_couple` samples each, `minority` of them in
/// class 0; class 0 is shifted by `shift` in every dimension.
fn gaussian_data(rng: &mut ChaCha8Rng, couples: u32, per_couple: usize, minority: usize, dim: usize, shift: f64) -> EvalData {
    let mut data = EvalData {
        ids: Vec::new(),
        couples: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
    };
    for c in 1..=couples {
        for i in 0..per_couple {
            let y = u8::from(i >= minority);
            let offset = if y == 0 { shift } else { 0.0 };
            data.ids.push(format!("c{c}_{i}"));
            data.couples.push(c);
            data.x.push((0..dim).map(|_| offset + normal(rng)).collect());
            data.y.push(y);
        }
    }
    data
}

fn svm_grid(cs: &[f64]) -> Vec<Hyper> {
    GridConfig {
        svm_c: cs.to_vec(),
        svm_epochs: 200,
        rf_trees: vec![50],
        rf_depth: vec![None],
        ..GridConfig::default()
    }
    .cells()
}

fn cv_uar(data: &EvalData, kind: ModelKind, grid: &[Hyper], seed: u64, balanced: bool) -> Result<f64, String> {
    let plan = make_couple_folds(&data.couples, &data.y, OUTER_FOLDS, "target", seed).map_err(|e| e.to_string())?;
    let (conf, _, _) = run_cv(data, kind, grid, &plan, seed, balanced).map_err(|e| e.to_string())?;
    uar(&conf).map_err(|e| e.to_string())
}

fn learning_sanity() -> Outcome {
    let grid = svm_grid(&[0.1, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut leak = gaussian_data(&mut rng, 13, 16, 8, 3, 0.0);
    for (row, y) in leak.x.iter_mut().zip(&leak.y) {
        row[0] = if *y == 1 { 1.0 } else { -1.0 };
    }
    for kind in ModelKind::ALL {
        let u = cv_uar(&leak, kind, &grid, 1, true)?;
        ensure(u == 1.0, || format!("{kind} reaches UAR {u} on a leaked label"))?;
    }

    let mut shuffled_means = Vec::new();
    for kind in ModelKind::ALL {
        let mut total = 0.0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut data = gaussian_data(&mut rng, 13, 16, 6, 5, 1.0);
            data.y.shuffle(&mut rng);
            total += cv_uar(&data, kind, &grid, seed, true)?;
        }
        let mean = total / 20.0;
        ensure((0.4..=0.6).contains(&mean), || format!("{kind} mean UAR {mean:.3} on shuffled labels"))?;
        shuffled_means.push(format!("{kind} {mean:.3}"));
    }

    let single = svm_grid(&[1.0]);
    let (mut weighted, mut plain) = (0.0, 0.0);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let data = gaussian_data(&mut rng, 10, 20, 2, 2, 1.5);
        weighted += cv_uar(&data, ModelKind::LinearSvm, &single, seed, true)? / 10.0;
        plain += cv_uar(&data, ModelKind::LinearSvm, &single, seed, false)? / 10.0;
    }
    ensure(weighted - plain > 0.05, || {
        format!("balanced weights gain {:.3} UAR ({weighted:.3} vs {plain:.3})", weighted - plain)
    })?;
    Ok(format!(
        "leak UAR 1.0; shuffled mean {}; balanced {weighted:.3} vs unweighted {plain:.3}",
        shuffled_means.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// Cross-validation contract

fn oracle_uar(c: &Confusion) -> f64 {
    let r0 = c[0][0] as f64 / (c[0][0] + c[0][1]) as f64;
    let r1 = c[1][1] as f64 / (c[1][0] + c[1][1]) as f64;
    (r0 + r1) / 2.0
}

fn synthetic_samples(seed: u64) -> Vec<DatasetSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in 1..=13u32 {
        for g in [Gender::Male, Gender::Female] {
            for i in 0..12 {
                let v = if i < 3 { 30.0 } else { 70.0 };
                let a = if i % 3 == 0 { 40.0 } else { 65.0 };
                let label = binarize_affect(v, a).unwrap();
                let mut features = BTreeMap::new();
                for (m, dim) in [
                    (Modality::Physio, 10),
                    (Modality::Movement, 20),
                    (Modality::Acoustic, 6),
                    (Modality::Linguistic, 8),
                ] {
                    let shift = 0.8 * f64::from(label.class(Target::Arousal)) + 0.5 * f64::from(label.class(Target::Valence));
                    let values = (0..dim).map(|_| shift + normal(&mut rng)).collect();
                    features.insert(m, FeatureVector::new(m, values).unwrap());
                }
                out.push(DatasetSample {
                    session_id: format!("c{c}_{}_{i}", g.as_str()),
                    couple_id: c,
                    gender: g,
                    features,
                    label,
                });
            }
        }
    }
    out
}

fn check_report(r: &EvalReport, samples: &[&DatasetSample]) -> Result<(), String> {
    let label = format!("{:?}/{}/{}/{}", r.gender, r.target.as_str(), modality_label(&r.modalities), r.model);
    ensure(r.predictions.len() == samples.len(), || {
        format!("{label}: {} pooled predictions for {} samples", r.predictions.len(), samples.len())
    })?;
    let ids: BTreeSet<&str> = r.predictions.iter().map(|p| p.session_id.as_str()).collect();
    ensure(ids.len() == samples.len() && samples.iter().all(|s| ids.contains(s.session_id.as_str())), || {
        format!("{label}: predictions do not cover every sample exactly once")
    })?;
    let mut conf = [[0usize; 2]; 2];
    let truth: BTreeMap<&str, &DatasetSample> = samples.iter().map(|s| (s.session_id.as_str(), *s)).collect();
    for p in &r.predictions {
        let s = truth[p.session_id.as_str()];
        ensure(p.truth == s.label.class(r.target) && p.couple_id == s.couple_id, || {
            format!("{label}: prediction for {} disagrees with the dataset", p.session_id)
        })?;
        conf[p.truth as usize][p.predicted as usize] += 1;
    }
    ensure(conf == r.confusion, || format!("{label}: confusion {:?} vs recount {conf:?}", r.confusion))?;
    ensure(oracle_uar(&conf) == r.uar, || format!("{label}: UAR {} vs recomputed {}", r.uar, oracle_uar(&conf)))?;
    let mut tested = BTreeSet::new();
    for f in &r.folds {
        let train: BTreeSet<u32> = f.train_couples.iter().copied().collect();
        let test: BTreeSet<u32> = f.test_couples.iter().copied().collect();
        ensure(train.is_disjoint(&test), || format!("{label}: fold {} shares couples", f.fold))?;
        for c in &test {
            ensure(tested.insert(*c), || format!("{label}: couple {c} tested twice"))?;
        }
        let in_fold: BTreeSet<u32> = r.predictions.iter().filter(|p| p.fold == f.fold).map(|p| p.couple_id).collect();
        ensure(in_fold == test, || format!("{label}: fold {} predicts couples {in_fold:?}, tests {test:?}", f.fold))?;
        let everyone: BTreeSet<u32> = samples.iter().map(|s| s.couple_id).collect();
        let rest: BTreeSet<u32> = everyone.difference(&test).copied().collect();
        ensure(rest == train, || format!("{label}: fold {} trains on {train:?}", f.fold))?;
    }
    Ok(())
}

fn cv_contract() -> Outcome {
    let samples = synthetic_samples(5);
    let opts = GridOptions {
        genders: vec![Gender::Male, Gender::Female],
        request: GridRequest {
            grid: GridConfig {
                svm_c: vec![0.1, 1.0],
                svm_epochs: 100,
                rf_trees: vec![25],
                rf_depth: vec![None],
                ..GridConfig::default()
            },
            seed: 4,
            ..GridRequest::default()
        },
    };
    let cells = evaluate(&samples, &opts).map_err(|e| e.to_string())?;
    let mut reports = 0;
    for c in &cells {
        let of: Vec<&DatasetSample> = samples.iter().filter(|s| Some(s.gender) == c.gender).collect();
        ensure(c.per_model.len() == 2, || format!("{} reports in a cell", c.per_model.len()))?;
        for r in &c.per_model {
            check_report(r, &of)?;
            reports += 1;
        }
        let best = c.best.as_ref().ok_or("cell without a best report")?;
        let top = c.per_model.iter().map(|r| r.uar).fold(f64::MIN, f64::max);
        ensure(best.uar == top, || "best report is not the top UAR".to_string())?;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_metrics(dir.path(), &cells, &Manifest::default()).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(dir.path().join(METRICS_JSON)).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut entries = 0;
    for c in &cells {
        let best = c.best.as_ref().unwrap();
        let entry = &json["metrics"][c.gender.unwrap().as_str()][c.target.as_str()][modality_label(&c.modalities)];
        let mut rows = vec![entry.clone()];
        rows.extend(entry["all_models"].as_array().cloned().unwrap_or_default());
        for row in rows {
            let conf: Confusion = serde_json::from_value(row["confusion"].clone()).map_err(|e| e.to_string())?;
            let stored = row["uar"].as_f64().ok_or("metrics entry without uar")?;
            ensure(oracle_uar(&conf) == stored, || format!("metrics.json UAR {stored} vs {}", oracle_uar(&conf)))?;
            entries += 1;
        }
        ensure(entry["uar"].as_f64() == Some(best.uar), || "metrics.json UAR differs from the report".into())?;
        ensure(entry["n"].as_u64() == Some(best.predictions.len() as u64), || "metrics.json n differs".into())?;
    }
    Ok(format!(
        "{} cells, {reports} reports couple-disjoint and fully pooled; {entries} metrics.json UARs recompute exactly",
        cells.len()
    ))
}

// ---------------------------------------------------------------------------
// End to end

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn e2e_run(cfg_name: &str, dir: &Path) -> Result<Vec<dyad_core::eval::CellReport>, String> {
    let kv = KvConfig::load(&data_path(cfg_name)).map_err(|e| e.to_string())?;
    let cfg = SimConfig::from_kv(&kv).map_err(|e| e.to_string())?;
    let corpus = dir.join("corpus");
    generate_world(&cfg, &corpus).map_err(|e| e.to_string())?;
    let mut opts = PipelineOptions::default();
    opts.grid.request = GridRequest {
        grid: GridConfig {
            svm_c: vec![0.1, 1.0],
            svm_epochs: 200,
            rf_trees: vec![50],
            rf_depth: vec![None],
            ..GridConfig::default()
        },
        seed: 1,
        ..GridRequest::default()
    };
    let out = run_pipeline(&corpus, &dir.join("out"), &opts).map_err(|e| e.to_string())?;
    Ok(out.cells)
}

fn cell_uar(cells: &[dyad_core::eval::CellReport], g: Gender, t: Target, mods: &[Modality]) -> Result<f64, String> {
    cells
        .iter()
        .find(|c| c.gender == Some(g) && c.target == t && c.modalities == mods)
        .and_then(|c| c.best.as_ref())
        .map(|b| b.uar)
        .ok_or_else(|| format!("no {g} {} {} cell", t.as_str(), modality_label(mods)))
}

fn end_to_end() -> Outcome {
    use Modality::*;
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let planted = e2e_run("planted.cfg", &dir.path().join("planted"))?;
    let mut notes = Vec::new();
    for g in [Gender::Male, Gender::Female] {
        let movement = cell_uar(&planted, g, Target::Arousal, &[Movement])?;
        let linguistic = cell_uar(&planted, g, Target::Valence, &[Linguistic])?;
        ensure(movement >= 0.85, || format!("{g} movement arousal UAR {movement:.3}"))?;
        ensure(linguistic >= 0.85, || format!("{g} linguistic valence UAR {linguistic:.3}"))?;
        let best_of = |t: Target| -> Result<Modality, String> {
            let mut best = (Physio, f64::MIN);
            for m in [Physio, Movement, Acoustic, Linguistic] {
                let u = cell_uar(&planted, g, t, &[m])?;
                if u > best.1 {
                    best = (m, u);
                }
            }
            Ok(best.0)
        };
        let arousal_best = best_of(Target::Arousal)?;
        let valence_best = best_of(Target::Valence)?;
        ensure(matches!(arousal_best, Physio | Movement), || format!("{g} arousal is best from {arousal_best}"))?;
        ensure(valence_best == Linguistic, || format!("{g} valence is best from {valence_best}"))?;
        notes.push(format!("{g} movement/A {movement:.3} linguistic/V {linguistic:.3}"));
    }

    let weak = e2e_run("weak.cfg", &dir.path().join("weak"))?;
    let mut floor = (f64::MAX, String::new());
    for c in &weak {
        let b = c.best.as_ref().ok_or_else(|| format!("weak cell {} absent", modality_label(&c.modalities)))?;
        if b.uar < floor.0 {
            floor = (
                b.uar,
                format!("{} {} {}", c.gender.map_or("pooled", |g| g.as_str()), c.target.as_str(), modality_label(&c.modalities)),
            );
        }
    }
    ensure(floor.0 >= 0.47, || format!("weak corpus cell {} at UAR {:.3}", floor.1, floor.0))?;
    within(started.elapsed(), 600.0, "both end-to-end runs")?;
    Ok(format!("{}; weak corpus minimum {:.3} ({})", notes.join(", "), floor.0, floor.1))
}

// ---------------------------------------------------------------------------
// QA

fn anova_icc(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let k = rows[0].len() as f64;
    let grand = rows.iter().flatten().sum::<f64>() / (n * k);
    let rm: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / k).collect();
    let cm: Vec<f64> = (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let msr = k * rm.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (n - 1.0);
    let msc = n * cm.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (k - 1.0);
    let mut sse = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            let e = v - rm[i] - cm[j] + grand;
            sse += e * e;
        }
    }
    let mse = sse / ((n - 1.0) * (k - 1.0));
    (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n)
}

fn qa_metrics() -> Outcome {
    struct Case {
        speaker: Speaker,
        transcript: &'static str,
        annotation: &'static str,
        overlap: Option<f64>,
        xy: Option<f64>,
    }
    let cases = [
        Case { speaker: Speaker::M, transcript: "a b // c d // e", annotation: "0\t10\tm", overlap: Some(100.0 * 1.0 / 3.0), xy: Some(0.0) },
        Case { speaker: Speaker::M, transcript: "XY a // b XY", annotation: "14\t16\tm", overlap: Some(100.0), xy: Some(50.0) },
        Case { speaker: Speaker::F, transcript: "x // y // z", annotation: "15\t30\tf", overlap: Some(100.0 * 1.0 / 3.0), xy: Some(0.0) },
        Case { speaker: Speaker::M, transcript: "a //  // b", annotation: "0\t300\tm", overlap: Some(100.0), xy: Some(0.0) },
        Case { speaker: Speaker::M, transcript: "XY XY // ok", annotation: "0\t300\tf", overlap: Some(0.0), xy: Some(100.0 * 2.0 / 3.0) },
        Case { speaker: Speaker::F, transcript: "", annotation: "0\t300\tf", overlap: None, xy: None },
        Case { speaker: Speaker::M, transcript: "a // b // c // d // e", annotation: "40\t50\tm\n50\t61\tm", overlap: Some(60.0), xy: Some(0.0) },
        Case { speaker: Speaker::M, transcript: "XY // hi there XY", annotation: "0\t5\tu\n20\t25\tm", overlap: Some(50.0), xy: Some(50.0) },
        Case { speaker: Speaker::M, transcript: "xy XY", annotation: "0\t1\tm", overlap: Some(100.0), xy: Some(50.0) },
        Case { speaker: Speaker::F, transcript: "a//b//c//d//e//f//g//h", annotation: "100\t115\tf", overlap: Some(25.0), xy: Some(0.0) },
    ];
    for (i, c) in cases.iter().enumerate() {
        let parsed = AnnotationTrack::parse(c.annotation, 300.0);
        ensure(parsed.malformed.is_empty(), || format!("session {i}: malformed fixture annotation"))?;
        let t = Transcript::parse(c.speaker, c.transcript);
        let overlap = chunk_overlap_pct(&t, &parsed.track, c.speaker);
        let xy = xy_pct(&t);
        ensure(overlap == c.overlap && xy == c.xy, || {
            format!("session {i}: overlap {overlap:?} xy {xy:?}, expected {:?} {:?}", c.overlap, c.xy)
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut random = |n: usize, k: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let base: f64 = rng.random_range(1.0..7.0);
                (0..k).map(|j| (base + j as f64 * 0.3 + rng.random_range(-1.0..1.0f64)).round()).collect()
            })
            .collect()
    };
    let matrices: Vec<(Vec<Vec<f64>>, Option<f64>)> = vec![
        (vec![vec![1.0, 2.0], vec![2.0, 3.0], vec![3.0, 4.0]], Some(2.0 / 3.0)),
        (
            vec![
                vec![9.0, 2.0, 5.0, 8.0],
                vec![6.0, 1.0, 3.0, 2.0],
                vec![8.0, 4.0, 6.0, 8.0],
                vec![7.0, 1.0, 2.0, 6.0],
                vec![10.0, 5.0, 6.0, 9.0],
                vec![6.0, 2.0, 4.0, 7.0],
            ],
            None,
        ),
        (random(8, 2), None),
        (random(12, 3), None),
        (random(20, 5), None),
    ];
    let mut worst: f64 = 0.0;
    let mut values = Vec::new();
    for (i, (rows, literal)) in matrices.iter().enumerate() {
        let got = icc(&RatingsMatrix::new(rows.clone()).map_err(|e| e.to_string())?);
        let want = anova_icc(rows);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("ICC fixture {i}: {got} vs {want}"))?;
        if let Some(l) = literal {
            ensure((got - l).abs() <= 1e-9, || format!("ICC fixture {i}: {got} vs {l}"))?;
        }
        values.push(format!("{got:.4}"));
    }
    let perfect = vec![vec![1.0, 1.0, 1.0], vec![3.0, 3.0, 3.0], vec![2.0, 2.0, 2.0], vec![5.0, 5.0, 5.0]];
    let one = icc(&RatingsMatrix::new(perfect).map_err(|e| e.to_string())?);
    ensure((one - 1.0).abs() <= 1e-12, || format!("perfect agreement gives ICC {one}"))?;
    Ok(format!(
        "10 sessions exact; ICC {} within {worst:.1e} of the ANOVA oracle; perfect agreement {one}",
        values.join(", ")
    ))
}
