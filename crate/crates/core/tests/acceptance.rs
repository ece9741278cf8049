//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or overruns its time budget.
//!
//! cargo test -p nsae --test acceptance

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use nsae::eval::{
    compute_eer, fuse_scores, FusionConfig, Label, Normalization, ScoreSet, Trial, TrialList,
    FUSION_BASELINE_NSAE_TOPK,
};
use nsae::io;
use nsae::neighbors::{select_threshold, select_topk, self_pairs, SelectionMode, TrainingPair};
use nsae::net::{backward, forward, init_autoencoder, mse_loss, Activation, AutoencoderParams};
use nsae::pipeline::{run_baseline, run_nsae, ExperimentConfig, Workbench};
use nsae::trainer::{batch_gradient, train_baseline, train_nsae, TrainConfig, TrainMode};
use nsae::vecmath::pairwise_cosine;
use nsae::FaceVector;
use rand::Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, Duration, Check); 9] = [
        ("1 gradient check", Duration::from_secs(5), gradient_check),
        ("2 oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        ("3 neighbor training beats baseline", Duration::from_secs(120), central_claim),
        ("4 sweep minimum at k > 1", Duration::from_secs(300), sweep_shape),
        ("5 fusion does not hurt", Duration::from_secs(120), fusion_point),
        ("6 EER properties", Duration::from_secs(60), eer_properties),
        ("7 CLI determinism", Duration::from_secs(300), cli_determinism),
        ("8 io round trips", Duration::from_secs(60), io_round_trips),
        ("9 self-reconstruction identity", Duration::from_secs(60), degenerate_identity),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > limit => Err(format!("over time budget {limit:?}; {detail}")),
            other => other,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{name}] {:.1}s  {detail}", took.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn random_pair(d: usize, r: &mut impl Rng) -> (FaceVector, FaceVector) {
    let mut v = || FaceVector::new((0..d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    (v(), v())
}

fn with_param(p: &AutoencoderParams, layer: usize, idx: usize, bias: bool, delta: f64) -> AutoencoderParams {
    let mut w: Vec<Vec<f64>> = p.layers().iter().map(|l| l.weights.clone()).collect();
    let mut b: Vec<Vec<f64>> = p.layers().iter().map(|l| l.biases.clone()).collect();
    if bias {
        b[layer][idx] += delta;
    } else {
        w[layer][idx] += delta;
    }
    AutoencoderParams::from_parts(p.layer_sizes().to_vec(), w, b, p.activations()).unwrap()
}

fn gradient_check() -> Result<String, String> {
    let h = 1e-5;
    let tol = 1e-4;
    let mut r = rng(2024);
    let base = init_autoencoder(&[6, 4, 2, 4, 6], 11).unwrap();
    // nonzero biases so every bias gradient is exercised
    let w = base.layers().iter().map(|l| l.weights.clone()).collect();
    let b = base
        .layers()
        .iter()
        .map(|l| (0..l.fan_out).map(|_| r.random_range(0.05..0.2)).collect())
        .collect();
    let p = AutoencoderParams::from_parts(base.layer_sizes().to_vec(), w, b, base.activations()).unwrap();
    let pairs: Vec<(FaceVector, FaceVector)> = (0..5).map(|_| random_pair(6, &mut r)).collect();

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut compare = |an: f64, fd: f64, what: String| -> Result<(), String> {
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
        checked += 1;
        ensure(rel <= tol, || format!("{what}: analytic {an} vs finite difference {fd} (rel {rel:.2e})"))
    };
    for (k, (x, t)) in pairs.iter().enumerate() {
        let (_, g) = backward(&p, x, t).map_err(|e| e.to_string())?;
        for (l, layer) in p.layers().iter().enumerate() {
            for (bias, len) in [(false, layer.weights.len()), (true, layer.biases.len())] {
                for i in 0..len {
                    let up = mse_loss(&forward(&with_param(&p, l, i, bias, h), x).unwrap().1, t).unwrap();
                    let dn = mse_loss(&forward(&with_param(&p, l, i, bias, -h), x).unwrap().1, t).unwrap();
                    let fd = (up - dn) / (2.0 * h);
                    let an = if bias { g.biases[l][i] } else { g.weights[l][i] };
                    compare(an, fd, format!("pair {k} layer {l} {} {i}", if bias { "bias" } else { "weight" }))?;
                }
            }
        }
    }

    // the mini-batch gradient is the mean of the per-pair gradients
    let data: Vec<FaceVector> = pairs.iter().flat_map(|(x, t)| [x.clone(), t.clone()]).collect();
    let batch: Vec<TrainingPair> = (0..5).map(|k| TrainingPair::new(2 * k, 2 * k + 1).unwrap()).collect();
    let (_, g) = batch_gradient(&p, &data, &batch).map_err(|e| e.to_string())?;
    let mean_loss = |q: &AutoencoderParams| {
        pairs
            .iter()
            .map(|(x, t)| mse_loss(&forward(q, x).unwrap().1, t).unwrap())
            .sum::<f64>()
            / 5.0
    };
    for (l, layer) in p.layers().iter().enumerate() {
        for i in 0..layer.weights.len() {
            let fd = (mean_loss(&with_param(&p, l, i, false, h)) - mean_loss(&with_param(&p, l, i, false, -h))) / (2.0 * h);
            compare(g.weights[l][i], fd, format!("batch layer {l} weight {i}"))?;
        }
    }
    Ok(format!("{checked} partials, worst relative error {worst:.2e}"))
}

fn oracle_equivalence() -> Result<String, String> {
    let mut instances = 0;
    for inst in 0..25u64 {
        let n = 3 + (inst as usize * 7) % 48;
        let d = 2 + (inst as usize % 9);
        let mut rows = random_rows(n, d, 100 + inst);
        if inst % 4 == 0 {
            // coarse coordinates create tied scores
            for v in rows.iter_mut().flatten() {
                *v = (*v * 2.0).round();
            }
            for v in rows.iter_mut() {
                if v.iter().all(|x| *x == 0.0) {
                    v[0] = 1.0;
                }
            }
        }
        let data: Vec<FaceVector> = rows.iter().map(|v| FaceVector::new(v.clone()).unwrap()).collect();
        let sim = pairwise_cosine(&data).map_err(|e| e.to_string())?;
        let want = oracle_pairwise(&rows);
        for i in 0..n {
            for j in 0..n {
                ensure((sim.get(i, j) - want[i][j]).abs() <= 1e-9, || {
                    format!("instance {inst}: cosine ({i},{j}) {} vs {}", sim.get(i, j), want[i][j])
                })?;
            }
        }
        let s = sim_rows(&sim);
        let k = 1 + (inst as usize * 5) % n;
        let got = select_topk(&sim, k).map_err(|e| e.to_string())?;
        ensure(got.rows() == oracle_topk(&s, k).as_slice(), || format!("instance {inst}: top-{k} differs"))?;
        let t = -1.0 + 2.0 * ((inst as f64 * 0.37) % 1.0);
        let got = select_threshold(&sim, t).map_err(|e| e.to_string())?;
        ensure(got.rows() == oracle_threshold(&s, t).as_slice(), || {
            format!("instance {inst}: threshold {t} differs")
        })?;
        instances += 1;
    }

    let archs: [&[usize]; 4] = [&[4, 2, 4], &[8, 4, 8], &[6, 4, 2, 4, 6], &[16, 8, 4, 8, 16]];
    for inst in 0..24u64 {
        let arch = archs[inst as usize % archs.len()];
        let base = init_autoencoder(arch, inst).unwrap();
        let mut r = rng(500 + inst);
        let w = base.layers().iter().map(|l| l.weights.clone()).collect();
        let b = base
            .layers()
            .iter()
            .map(|l| (0..l.fan_out).map(|_| r.random_range(-0.3..0.3)).collect())
            .collect();
        let acts = if inst % 3 == 0 {
            vec![Activation::Linear; arch.len() - 1]
        } else {
            base.activations()
        };
        let p = AutoencoderParams::from_parts(arch.to_vec(), w, b, acts).unwrap();
        for x in random_vectors(5, arch[0], 900 + inst) {
            let (bn, rec) = forward(&p, &x).map_err(|e| e.to_string())?;
            let (obn, orec) = oracle_forward(&p, x.as_slice());
            let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-9);
            ensure(close(bn.as_slice(), &obn) && close(rec.as_slice(), &orec), || {
                format!("forward instance {inst} differs")
            })?;
        }
        instances += 1;
    }

    let mut worst: f64 = 0.0;
    for inst in 0..30u64 {
        let n = 2 + (inst as usize * 13) % 199;
        let (mut scores, labels) = random_scores(n, 700 + inst);
        if inst % 3 == 0 {
            for s in scores.iter_mut() {
                *s = (*s * 5.0).round() / 5.0;
            }
        }
        let trials = trial_list(&labels);
        let set = ScoreSet::new(scores.clone(), "oracle").unwrap();
        let got = compute_eer(&set, &trials).map_err(|e| e.to_string())?.eer;
        let want = oracle_eer(&scores, &labels);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("eer instance {inst}: {got} vs {want}"))?;
        instances += 1;
    }
    Ok(format!("{instances} instances, worst EER gap {worst:.1e}"))
}

fn trial_list(matched: &[bool]) -> TrialList {
    TrialList::new(
        matched
            .iter()
            .enumerate()
            .map(|(i, &m)| Trial {
                a: i,
                b: i + 1,
                label: if m { Label::Matched } else { Label::Mismatched },
            })
            .collect(),
    )
}

struct SeedResult {
    seed: u64,
    baseline: f64,
    nsae: f64,
}

fn desk_pair(seed: u64) -> SeedResult {
    let cfg = ExperimentConfig::desk(seed);
    let bench = Workbench::new(&cfg).unwrap();
    let baseline = run_baseline(&bench, &cfg).unwrap().eval.eer;
    let nsae = run_nsae(&bench, &cfg).unwrap().eval.eer;
    SeedResult { seed, baseline, nsae }
}

fn central_claim() -> Result<String, String> {
    let main = desk_pair(42);
    let others: Vec<SeedResult> = (1..=5).map(desk_pair).collect();
    let wins = others.iter().filter(|r| r.nsae < r.baseline).count();
    let table: Vec<String> = std::iter::once(&main)
        .chain(&others)
        .map(|r| format!("seed {} {:.4}/{:.4}", r.seed, r.nsae, r.baseline))
        .collect();
    let detail = format!("nsae/baseline EER: {}; wins {wins}/5", table.join(", "));
    ensure(main.baseline - main.nsae >= 0.02, || format!("seed 42 margin below 0.02; {detail}"))?;
    ensure(wins >= 4, || format!("ordering held for fewer than 4 seeds; {detail}"))?;
    Ok(detail)
}

fn sweep_shape() -> Result<String, String> {
    let ks = [1, 3, 5, 8];
    let mut good = 0;
    let mut rows = Vec::new();
    for seed in 1..=5u64 {
        let base = ExperimentConfig::desk(seed);
        let bench = Workbench::new(&base).unwrap();
        let eers: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let cfg = ExperimentConfig {
                    selection: SelectionMode::TopK(k),
                    ..base.clone()
                };
                run_nsae(&bench, &cfg).unwrap().eval.eer
            })
            .collect();
        let min = eers.iter().copied().fold(f64::INFINITY, f64::min);
        if eers[1..].contains(&min) {
            good += 1;
        }
        let cells: Vec<String> = eers.iter().map(|e| format!("{e:.4}")).collect();
        rows.push(format!("seed {seed} [{}]", cells.join(" ")));
    }
    let detail = format!("EER for k=1,3,5,8: {}; minimum at k>1 for {good}/5", rows.join(", "));
    ensure(good >= 4, || detail.clone())?;
    Ok(detail)
}

fn fusion_point() -> Result<String, String> {
    let cfg = ExperimentConfig::desk(42);
    let bench = Workbench::new(&cfg).unwrap();
    let base = run_baseline(&bench, &cfg).unwrap();
    let nsae = run_nsae(&bench, &cfg).unwrap();
    let (w1, w2) = FUSION_BASELINE_NSAE_TOPK;
    let fused = fuse_scores(
        &base.scores,
        &nsae.scores,
        &FusionConfig::new(w1, w2, Normalization::MinMax).unwrap(),
    )
    .unwrap();
    let eer = compute_eer(&fused, &bench.trials).unwrap().eer;
    let bound = base.eval.eer.min(nsae.eval.eer) + 0.01;
    let detail = format!(
        "fused {eer:.4}, baseline {:.4}, nsae {:.4}, bound {bound:.4}",
        base.eval.eer, nsae.eval.eer
    );
    ensure(eer <= bound, || detail.clone())?;
    Ok(detail)
}

fn eer_properties() -> Result<String, String> {
    for seed in 0..20u64 {
        let (scores, labels) = random_scores(150, 3000 + seed);
        let trials = trial_list(&labels);
        let eer = |s: Vec<f64>, t: &TrialList| compute_eer(&ScoreSet::new(s, "p").unwrap(), t).unwrap().eer;
        let e = eer(scores.clone(), &trials);
        let affine = eer(scores.iter().map(|s| 2.5 * s - 7.0).collect(), &trials);
        let cubic = eer(scores.iter().map(|s| s * s * s + s).collect(), &trials);
        ensure((affine - e).abs() <= 1e-12 && (cubic - e).abs() <= 1e-12, || {
            format!("seed {seed}: transform changed EER {e} -> {affine}, {cubic}")
        })?;
        let swapped = eer(scores.clone(), &trials.with_flipped_labels());
        ensure((swapped - (1.0 - e)).abs() <= 1e-9, || {
            format!("seed {seed}: swapped EER {swapped}, expected {}", 1.0 - e)
        })?;
    }

    let mut matched = vec![true; 50];
    matched.extend(vec![false; 50]);
    let separated: Vec<f64> = (0..100).map(|i| if i < 50 { 0.6 + i as f64 * 1e-3 } else { -0.5 + i as f64 * 1e-3 }).collect();
    let perfect = compute_eer(&ScoreSet::new(separated, "p").unwrap(), &trial_list(&matched))
        .unwrap()
        .eer;
    ensure(perfect == 0.0, || format!("perfect separation gave {perfect}"))?;

    let random_eer = |seed: u64| {
        let mut r = rng(seed);
        let mut labels = vec![true; 500];
        labels.extend(vec![false; 500]);
        let scores: Vec<f64> = (0..1000).map(|_| r.random::<f64>()).collect();
        compute_eer(&ScoreSet::new(scores, "r").unwrap(), &trial_list(&labels))
            .unwrap()
            .eer
    };
    let single = random_eer(42);
    ensure((single - 0.5).abs() <= 0.05, || format!("random scores EER {single}"))?;
    let mean = (0..20).map(random_eer).sum::<f64>() / 20.0;
    ensure((mean - 0.5).abs() <= 0.02, || format!("mean random EER over 20 seeds {mean}"))?;
    Ok(format!("random 500+500 EER {single:.4} (20-seed mean {mean:.4})"))
}

fn nsae_cmd(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nsae"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`nsae {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn cli_determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let steps: [&[&str]; 11] = [
        &["synth", "--preset", "desk", "--seed", "7", "--output", "v.bin"],
        &["neighbors", "--input", "v.bin", "--k", "5", "--output", "nk.txt"],
        &["neighbors", "--input", "v.bin", "--threshold", "0.8", "--output", "nt.txt"],
        &["train", "--preset", "desk", "--epochs", "30", "--checkpoint-every", "10", "--input", "v.bin", "--neighbors", "nt.txt", "--output", "m.ckpt"],
        &["train", "--preset", "desk", "--epochs", "30", "--input", "v.bin", "--baseline", "--output", "b.ckpt"],
        &["embed", "--input", "v.bin", "--model", "m.ckpt", "--output", "e.bin"],
        &["embed", "--input", "v.bin", "--model", "b.ckpt", "--tap", "output", "--output", "eb.bin"],
        &["score", "--input", "e.bin", "--trials", "v.bin.trials", "--output", "s.txt"],
        &["score", "--input", "eb.bin", "--trials", "v.bin.trials", "--output", "sb.txt"],
        &["fuse", "--input", "sb.txt", "--input", "s.txt", "--output", "f.txt"],
        &["sweep", "--preset", "desk", "--epochs", "15", "--input", "v.bin", "--trials", "v.bin.trials", "--k-list", "5,3", "--output", "sw.txt"],
    ];
    for args in steps {
        nsae_cmd(dir, args)?;
    }
    nsae_cmd(dir, &["eval", "--input", "f.txt", "--output", "r.json"])?;

    let manifests: Vec<_> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.ends_with(".manifest.json"))
        .collect();
    ensure(manifests.len() == 12, || format!("expected 12 manifests, found {manifests:?}"))?;

    let mut files = 0;
    for m in &manifests {
        let manifest = nsae::cli::manifest::RunManifest::load(&dir.join(m)).map_err(|e| e.to_string())?;
        let before: Vec<Vec<u8>> = manifest
            .outputs
            .iter()
            .map(|d| fs::read(dir.join(&d.path)).unwrap())
            .collect();
        for threads in ["1", "3"] {
            nsae_cmd(dir, &["--threads", threads, "replay", "--check", m])?;
            for (d, old) in manifest.outputs.iter().zip(&before) {
                let new = fs::read(dir.join(&d.path)).map_err(|e| e.to_string())?;
                ensure(&new == old, || format!("{} changed on replay with {threads} threads", d.path.display()))?;
            }
        }
        files += manifest.outputs.len();
    }
    Ok(format!("{} manifests, {files} output files reproduced with 1 and 3 threads", manifests.len()))
}

fn io_round_trips() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst_text: f64 = 0.0;
    for inst in 0..100u64 {
        let mut r = rng(8000 + inst);
        let n = r.random_range(1..40);
        let d = r.random_range(1..20);
        let data: Vec<FaceVector> = random_rows(n, d, inst)
            .into_iter()
            .map(|v| FaceVector::new(v.into_iter().map(|x| x * 10f64.powi(r.random_range(-8..8))).collect()).unwrap())
            .collect();

        let bin = tmp.path().join(format!("v{inst}.bin"));
        io::save_vectors(&bin, &data).map_err(|e| e.to_string())?;
        let back = io::load_vectors(&bin).map_err(|e| e.to_string())?;
        ensure(bits(&back) == bits(&data), || format!("instance {inst}: binary vectors differ"))?;

        let csv = tmp.path().join(format!("v{inst}.csv"));
        io::save_vectors(&csv, &data).map_err(|e| e.to_string())?;
        let back = io::load_vectors(&csv).map_err(|e| e.to_string())?;
        for (a, b) in back.iter().zip(&data) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                let rel = (x - y).abs() / y.abs().max(1e-300);
                worst_text = worst_text.max(rel);
            }
        }
        ensure(back.len() == data.len() && worst_text <= 1e-12, || format!("instance {inst}: csv differs"))?;

        let sizes: Vec<usize> = match inst % 3 {
            0 => vec![d, 1, d],
            1 => vec![d, d + 2, 1 + d / 2, d + 2, d],
            _ => vec![d, 3, 2, 3, d],
        };
        let ckpt = io::Checkpoint {
            params: init_autoencoder(&sizes, inst).unwrap(),
            meta: io::CheckpointMeta {
                epoch: r.random(),
                seed: r.random(),
                config_hash: r.random(),
            },
        };
        let path = tmp.path().join(format!("m{inst}.ckpt"));
        io::save_checkpoint(&path, &ckpt).map_err(|e| e.to_string())?;
        let loaded = io::load_checkpoint(&path).map_err(|e| e.to_string())?;
        ensure(loaded == ckpt, || format!("instance {inst}: checkpoint differs"))?;
        let x = &data[0];
        ensure(
            bits(&[forward(&loaded.params, x).unwrap().1]) == bits(&[forward(&ckpt.params, x).unwrap().1]),
            || format!("instance {inst}: forward differs after reload"),
        )?;

        let sim = pairwise_cosine(&data).map_err(|e| e.to_string())?;
        if n >= 2 {
            let map = if inst % 2 == 0 {
                select_topk(&sim, 1 + inst as usize % (n - 1)).unwrap()
            } else {
                select_threshold(&sim, r.random_range(-1.0..1.0)).unwrap()
            };
            let p = tmp.path().join(format!("n{inst}.txt"));
            io::save_neighbor_map(&p, &map).map_err(|e| e.to_string())?;
            let back = io::load_neighbor_map(&p).map_err(|e| e.to_string())?;
            ensure(back == map, || format!("instance {inst}: neighbor map differs"))?;
        }

        let m = r.random_range(2..60);
        let trials = TrialList::new(
            (0..m)
                .map(|i| Trial {
                    a: r.random_range(0..1000),
                    b: r.random_range(0..1000),
                    label: if i % 2 == 0 { Label::Matched } else { Label::Mismatched },
                })
                .collect(),
        );
        let p = tmp.path().join(format!("t{inst}.txt"));
        io::save_trials(&p, &trials).map_err(|e| e.to_string())?;
        ensure(io::load_trials(&p).map_err(|e| e.to_string())? == trials, || {
            format!("instance {inst}: trials differ")
        })?;

        let scores = ScoreSet::new((0..m).map(|_| r.random_range(-1e3..1e3)).collect(), format!("src{inst}")).unwrap();
        let p = tmp.path().join(format!("s{inst}.txt"));
        io::save_scores(&p, &trials, &scores).map_err(|e| e.to_string())?;
        let (t2, s2) = io::load_scores(&p).map_err(|e| e.to_string())?;
        let close = s2.scores.iter().zip(&scores.scores).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0));
        ensure(t2 == trials && s2.source == scores.source && close, || {
            format!("instance {inst}: scores differ")
        })?;

        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
        let p = tmp.path().join(format!("l{inst}.txt"));
        io::save_labels(&p, &labels).map_err(|e| e.to_string())?;
        ensure(io::load_labels(&p).map_err(|e| e.to_string())? == labels, || {
            format!("instance {inst}: labels differ")
        })?;
    }
    Ok(format!("100 instances x 7 formats, worst text relative error {worst_text:.1e}"))
}

fn bits(v: &[FaceVector]) -> Vec<Vec<u64>> {
    v.iter().map(|x| x.as_slice().iter().map(|f| f.to_bits()).collect()).collect()
}

fn degenerate_identity() -> Result<String, String> {
    let mut runs = 0;
    for seed in [42u64, 1, 2] {
        let cfg = ExperimentConfig::desk(seed);
        let data = Workbench::new(&cfg).unwrap().data.vectors;
        let train = TrainConfig {
            epochs: 20,
            ..cfg.train.clone()
        };
        let (bp, br) = train_baseline(&data, &cfg.arch, &train).map_err(|e| e.to_string())?;

        let neighbor_pairs = nsae::pipeline::neighbor_pairs(&data, &cfg).map_err(|e| e.to_string())?;
        let self_mode = TrainConfig {
            mode: TrainMode::SelfReconstruction,
            ..train.clone()
        };
        let (sp, sr) = train_nsae(&data, &neighbor_pairs, &cfg.arch, &self_mode).map_err(|e| e.to_string())?;
        let (ep, er) = train_nsae(&data, &self_pairs(data.len()), &cfg.arch, &train).map_err(|e| e.to_string())?;
        for (p, rep, what) in [(&sp, &sr, "SelfReconstruction mode"), (&ep, &er, "explicit self pairs")] {
            ensure(p == &bp, || format!("seed {seed}: {what} parameters differ from baseline"))?;
            let same_loss = rep.loss_per_epoch.iter().map(|l| l.to_bits()).eq(br.loss_per_epoch.iter().map(|l| l.to_bits()));
            ensure(same_loss && rep.epochs_run == br.epochs_run, || format!("seed {seed}: {what} report differs"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs bit-identical to the baseline"))
}
