//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed. Built with `harness = false` so the
//! lines show up in plain `cargo test` output.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gdpcast::diagnostics::{gradcheck_family, GradcheckOptions, GRADCHECK_TOL};
use gdpcast::embeddings::load_embeddings;
use gdpcast::experiment::manifest::CheckpointRole;
use gdpcast::experiment::{load_checkpoint, run_experiment, ExperimentConfig, Manifest};
use gdpcast::lights::{load_light_csv, zonal_stats, BrightnessGrid, CountryMask, LightMode};
use gdpcast::models::{fit_linear, Family, LstmConfig, MlpConfig, Network, PatchConfig, RtConfig, RtToken};
use gdpcast::nn::{Activation, ParamStore, Tensor};
use gdpcast::panel::Frequency;
use gdpcast::panel::{load_panel_inferred, merge_light_features};
use gdpcast::synth::{synthetic_panel, SynthSpec};
use gdpcast::training::loss::weighted_multivariate_loss;
use gdpcast::training::{train_network, LossConfig, TrainConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("{what} took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

/// Normal equations on the raw design `[1 | X]`, solved by LU.
fn normal_equation_oracle(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let (n, d) = (x.len(), x[0].len());
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let b = DVector::from_column_slice(y);
    let at = a.transpose();
    (&at * &a)
        .lu()
        .solve(&(&at * b))
        .expect("well-conditioned")
        .iter()
        .copied()
        .collect()
}

fn ols_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.gen_range(1..=10);
        let n = rng.gen_range(d + 5..=200);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let b0 = rng.gen_range(-1.0..1.0);
        let y: Vec<f64> = x
            .iter()
            .map(|r| b0 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.5..0.5))
            .collect();
        let fit = fit_linear(&x, &y, 0.0).map_err(|e| e.to_string())?;
        ensure(!fit.fallback_used, || {
            "fallback ridge engaged on a well-conditioned instance".into()
        })?;
        let oracle = normal_equation_oracle(&x, &y);
        worst = worst.max((fit.bias - oracle[0]).abs());
        for (a, b) in fit.weights.iter().zip(&oracle[1..]) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-8, || {
        format!("max coefficient difference {worst:.3e} > 1e-8")
    })?;
    within(start.elapsed(), 5.0, "oracle suite")?;
    Ok(format!(
        "100 instances, max |diff| {worst:.2e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for family in [Family::Mlp, Family::Lstm, Family::Patch, Family::Rt] {
        let r = gradcheck_family(family, &GradcheckOptions::default()).map_err(|e| e.to_string())?;
        ensure(r.checked > 0, || format!("{family:?}: no entries checked"))?;
        ensure(r.passes(GRADCHECK_TOL), || {
            format!("{family:?}: max relative error {:.3e}", r.max_rel_err())
        })?;
        parts.push(format!("{family:?} {:.1e}", r.max_rel_err()));
    }
    within(start.elapsed(), 30.0, "gradient suite")?;
    Ok(format!("{}, {:.2} s", parts.join(", "), start.elapsed().as_secs_f64()))
}

fn weighted_loss_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..20 {
        let n = rng.gen_range(1..12);
        let pred: Vec<f64> = (0..=n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let target: Vec<f64> = (0..=n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let w = rng.gen_range(0.1..10.0);
        let mut hand = 0.0;
        for i in 0..n {
            let e = target[i] - pred[i];
            hand += e * e;
        }
        let e = target[n] - pred[n];
        hand += w * e * e;
        let got = weighted_multivariate_loss(&pred, &target, w).map_err(|e| e.to_string())?;
        ensure(got == hand, || format!("case {case}: {got} vs hand {hand}"))?;

        let mut sq = 0.0;
        for (p, t) in pred.iter().zip(&target) {
            sq += (t - p) * (t - p);
        }
        let unit = weighted_multivariate_loss(&pred, &target, 1.0).map_err(|e| e.to_string())?;
        ensure(unit == sq, || {
            format!("case {case}: W=1 gives {unit}, sum of squares {sq}")
        })?;
    }
    Ok("20 cases bitwise equal; W_GDP=1 equals sum of squares".into())
}

fn write_synthetic_run(dir: &Path) -> Result<PathBuf, String> {
    let panel = synthetic_panel(&SynthSpec {
        countries: 15,
        first_year: 2013,
        last_year: 2019,
        frequency: Frequency::Yearly,
        indicators: 6,
        missing_rate: 0.0,
        seed: 42,
    })
    .map_err(|e| e.to_string())?;
    let csv = dir.join("panel.csv");
    panel
        .write_csv(std::fs::File::create(&csv).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let cfg = dir.join("run.toml");
    let text = "dataset = \"panel.csv\"\noutput_dir = \"out\"\nperiod_label = \"13-19\"\n\
                task = \"regression\"\nfamily = \"mlp\"\nseed = 5\n\n[cv]\nk = 5\nseed = 3\n\n\
                [train]\nbatch_size = 16\nmax_epochs = 40\npatience = 8\n\n\
                [grid]\nlr = [0.001, 0.01]\nwidth = [8, 16]\n";
    std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn protocol_fidelity() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = write_synthetic_run(tmp.path())?;
    let cfg = ExperimentConfig::from_file(&cfg_path).map_err(|e| e.to_string())?;
    let outcome = run_experiment(&cfg, 2).map_err(|e| e.to_string())?;
    let m = Manifest::load(&outcome.manifest_path).map_err(|e| e.to_string())?;

    // (a) folds partition the training samples, sizes differ by at most 1
    ensure(m.cv.k == 5 && m.folds.len() == 5, || format!("{} folds", m.folds.len()))?;
    let mut all: Vec<usize> = m.folds.iter().flatten().copied().collect();
    all.sort_unstable();
    ensure(all == (0..m.n_train).collect::<Vec<_>>(), || {
        "folds do not partition 0..n_train".into()
    })?;
    let sizes: Vec<usize> = m.folds.iter().map(Vec::len).collect();
    let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
    ensure(spread <= 1, || format!("fold sizes {sizes:?}"))?;

    // (b) winner has the minimal mean fold loss
    let win = m.grid[m.winner].mean_loss.ok_or("winner has no mean loss")?;
    for (i, p) in m.grid.iter().enumerate() {
        if let Some(l) = p.mean_loss {
            ensure(win <= l, || format!("point {i} has mean loss {l} < winner {win}"))?;
        }
        let folds: Option<Vec<f64>> = p.fold_losses.iter().copied().collect();
        if let (Some(f), Some(l)) = (folds, p.mean_loss) {
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            ensure((mean - l).abs() <= 1e-12 * l.abs().max(1.0), || {
                format!("point {i} mean mismatch")
            })?;
        }
    }

    // (c) best_valid is the argmin fold of the winner
    let fold_losses: Vec<f64> = m.grid[m.winner].fold_losses.iter().map(|l| l.unwrap()).collect();
    let argmin = (0..fold_losses.len())
        .min_by(|&a, &b| fold_losses[a].total_cmp(&fold_losses[b]))
        .unwrap();
    ensure(m.best_fold == argmin, || {
        format!("best fold {} vs argmin {argmin}", m.best_fold)
    })?;
    ensure(m.best_valid_loss == fold_losses[argmin], || {
        "best_valid_loss mismatch".into()
    })?;
    let bv = m
        .checkpoint(CheckpointRole::BestValid)
        .ok_or("no best_valid checkpoint")?;
    ensure(bv.fold == Some(argmin), || {
        format!("best_valid checkpoint fold {:?}", bv.fold)
    })?;
    ensure(bv.train_count == m.n_train - m.folds[argmin].len(), || {
        "best_valid train count".into()
    })?;
    ensure(bv.seed == m.fold_seeds[argmin], || {
        "best_valid seed is not its fold seed".into()
    })?;

    // (d) final model trained on every training sample
    let fin = m.checkpoint(CheckpointRole::Final).ok_or("no final checkpoint")?;
    let (_, meta) = load_checkpoint(&outcome.manifest_path, fin).map_err(|e| e.to_string())?;
    ensure(fin.train_count == m.n_train && meta.train_count == m.n_train, || {
        format!("final trained on {} of {}", fin.train_count, m.n_train)
    })?;
    Ok(format!(
        "{} samples, fold sizes {sizes:?}, winner {} of {}, best fold {argmin}",
        m.n_train,
        m.winner,
        m.grid.len()
    ))
}

/// Runs the binary on `config` and moves the run directory to `dest`.
fn run_cli(config: &Path, jobs: usize, out: &Path, dest: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_gdpcast"))
        .args(["run", "--config"])
        .arg(config)
        .args(["--jobs", &jobs.to_string()])
        .env("GDPCAST_DATA_ROOT", data_dir())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("run failed: {}", String::from_utf8_lossy(&status.stderr))
    })?;
    std::fs::rename(out, dest).map_err(|e| e.to_string())
}

fn report_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name.starts_with("report-") {
            out.push((name, std::fs::read(&path).map_err(|e| e.to_string())?));
        }
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for name in ["yearly_mlp", "yearly_rt"] {
        let text = std::fs::read_to_string(data_dir().join(format!("{name}.toml"))).map_err(|e| e.to_string())?;
        let out = tmp.path().join(format!("{name}-out"));
        let text = text.replace(
            "output_dir = \"runs\"",
            &format!("output_dir = {:?}", out.display().to_string()),
        );
        let cfg = tmp.path().join(format!("{name}.toml"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let (a, b) = (
            tmp.path().join(format!("{name}-j1")),
            tmp.path().join(format!("{name}-j4")),
        );
        run_cli(&cfg, 1, &out, &a)?;
        run_cli(&cfg, 4, &out, &b)?;
        let (ra, rb) = (single_run(&a)?, single_run(&b)?);
        let (fa, fb) = (report_files(&ra)?, report_files(&rb)?);
        ensure(!fa.is_empty(), || format!("{name}: no reports written"))?;
        ensure(fa == fb, || {
            format!("{name}: reports differ between --jobs 1 and --jobs 4")
        })?;
        checked.push(format!("{name} ({} files)", fa.len()));
    }
    Ok(format!("byte-identical reports: {}", checked.join(", ")))
}

fn single_run(dir: &Path) -> Result<PathBuf, String> {
    let runs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    ensure(runs.len() == 1, || {
        format!("{} run dirs in {}", runs.len(), dir.display())
    })?;
    Ok(runs[0].clone())
}

fn dims_law() -> Outcome {
    let cases = [
        ("yearly_13_19.csv", "yearly.csv", [13, 16, 14, 25]),
        ("quarterly_13_19.csv", "quarterly.csv", [20, 23, 21, 23]),
    ];
    let modes = [
        LightMode::None,
        LightMode::SumMeanStd,
        LightMode::Mean,
        LightMode::EveryMonthMean,
    ];
    let mut lines = Vec::new();
    for (panel, lights, want) in cases {
        let p = load_panel_inferred(data_dir().join("panels").join(panel)).map_err(|e| e.to_string())?;
        let table = load_light_csv(data_dir().join("lights").join(lights)).map_err(|e| e.to_string())?;
        let mut got = Vec::new();
        for mode in modes {
            let d = if mode == LightMode::None {
                p.dims()
            } else {
                merge_light_features(&p, &table, mode)
                    .map_err(|e| e.to_string())?
                    .dims()
            };
            got.push(d);
        }
        ensure(got == want, || format!("{panel}: dims {got:?}, expected {want:?}"))?;
        lines.push(format!("{:?}", got));
    }
    Ok(format!("yearly {}, quarterly {}", lines[0], lines[1]))
}

fn rt_structure() -> Outcome {
    let emb = load_embeddings(data_dir().join("embeddings/stub_e32.nnemb")).map_err(|e| e.to_string())?;
    let ids: Vec<String> = (1..=13).map(|i| format!("ind{i:02}")).collect();
    let vecs: Vec<Arc<Vec<f64>>> = ids
        .iter()
        .map(|id| emb.lookup(id, None))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let net = RtConfig {
        embed_dim: emb.dim(),
        proj_dim: 8,
        value_dim: 4,
        layers: 1,
        heads: 2,
        ff_width: 16,
        max_tokens: 16,
    };
    // Variable token counts in training: 5 to 13 indicators per sample.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..60 {
        let n = rng.gen_range(5..=13);
        let toks: Vec<RtToken<f64>> = (0..n)
            .map(|i| RtToken {
                embedding: vecs[i].clone(),
                value: rng.gen_range(-1.0..1.0),
            })
            .collect();
        targets.push(vec![toks.iter().map(|t| t.value).sum::<f64>() / n as f64]);
        inputs.push(toks);
    }
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let tc = TrainConfig {
        lr: 0.01,
        batch_size: 16,
        max_epochs: 10,
        patience: None,
        seed: 4,
        ..Default::default()
    };
    let trained =
        train_network(&net, &inputs, &targets, &idx, &LossConfig::scalar_mse(), &tc).map_err(|e| e.to_string())?;
    let mut params: ParamStore<f64> = trained.params;

    let five = &inputs.iter().find(|t| t.len() == 5).ok_or("no 5-token sample")?.clone();
    let thirteen = &inputs
        .iter()
        .find(|t| t.len() == 13)
        .ok_or("no 13-token sample")?
        .clone();
    for toks in [five, thirteen] {
        let y = net.predict(&params, toks).map_err(|e| e.to_string())?;
        ensure(y.len() == 1 && y[0].is_finite(), || {
            format!("n={} gave {y:?}", toks.len())
        })?;
    }

    let pos = params.get_mut("rt.pos").ok_or("no rt.pos")?;
    pos.data_mut().iter_mut().for_each(|v| *v = 0.0);
    let mut worst = 0.0f64;
    for toks in [five, thirteen] {
        let base = net.predict(&params, toks).map_err(|e| e.to_string())?[0];
        for trial in 0..10 {
            let mut perm = toks.clone();
            let mut prng = ChaCha8Rng::seed_from_u64(trial);
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut prng);
            let y = net.predict(&params, &perm).map_err(|e| e.to_string())?[0];
            worst = worst.max((y - base).abs());
        }
    }
    ensure(worst <= 1e-10, || {
        format!("permutation changed the output by {worst:.3e}")
    })?;
    Ok(format!(
        "n=5 and n=13 accepted by one trained model; max permutation change {worst:.1e}"
    ))
}

fn patch_isolation() -> Outcome {
    let net = PatchConfig {
        seq_len: 8,
        patch_len: 4,
        stride: 2,
        width: 8,
        heads: 2,
        ff_width: 16,
        layers: 2,
        channels: 4,
        head_dim: 1,
    };
    let (h, c) = (net.seq_len, net.channels);
    let eps = 1e-4;
    let mut own_nonzero = 0usize;
    for setting in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(setting + 50);
        let mut params: ParamStore<f64> = net.init_params(setting);
        for (_, t) in params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let base: Vec<f64> = (0..h * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for j in 0..c {
            for t in 0..h {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[t * c + j] += eps;
                minus[t * c + j] -= eps;
                let yp = net
                    .predict(&params, &Tensor::new(vec![h, c], plus))
                    .map_err(|e| e.to_string())?;
                let ym = net
                    .predict(&params, &Tensor::new(vec![h, c], minus))
                    .map_err(|e| e.to_string())?;
                for k in 0..c {
                    let s = (yp[k] - ym[k]) / (2.0 * eps);
                    if k == j {
                        own_nonzero += usize::from(s != 0.0);
                    } else {
                        ensure(s == 0.0, || {
                            format!("setting {setting}: d out[{k}] / d x[{t},{j}] = {s:e}")
                        })?;
                    }
                }
            }
        }
    }
    ensure(own_nonzero > 0, || "no own-channel sensitivity at all".into())?;
    Ok(format!(
        "10 settings x {c} channels x {h} steps: every cross-channel difference is 0.0 ({own_nonzero} own-channel nonzero)"
    ))
}

fn mlp_overfit() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let xs: Vec<Vec<f64>> = (0..64)
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![(3.0 * x[0]).sin() + x[1] * x[1]]).collect();
    let net = MlpConfig {
        input_dim: 2,
        hidden: vec![32, 32],
        activation: Activation::Tanh,
        output_dim: 1,
    };
    let idx: Vec<usize> = (0..64).collect();
    let tc = TrainConfig {
        lr: 0.01,
        batch_size: 64,
        max_epochs: 5000,
        patience: None,
        seed: 1,
        ..Default::default()
    };
    let out = train_network(&net, &xs, &ys, &idx, &LossConfig::scalar_mse(), &tc).map_err(|e| e.to_string())?;
    let refs: Vec<&Vec<f64>> = xs.iter().collect();
    let preds = net.predict_batch(&out.params, &refs).map_err(|e| e.to_string())?;
    let mse = preds.iter().zip(&ys).map(|(p, y)| (p[0] - y[0]).powi(2)).sum::<f64>() / 64.0;
    let steps = out.curve.len();
    ensure(steps <= 5000, || format!("{steps} steps"))?;
    ensure(mse < 1e-2, || format!("train MSE {mse:.3e} after {steps} steps"))?;
    Ok(format!("MLP train MSE {mse:.1e} in {steps} steps"))
}

fn lstm_sinusoid() -> Result<String, String> {
    let h = 8;
    let series: Vec<f64> = (0..260).map(|t| (0.3 * t as f64).sin()).collect();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for s in 0..series.len() - h {
        inputs.push(Tensor::new(vec![h, 1], series[s..s + h].to_vec()));
        targets.push(vec![series[s + h]]);
    }
    let split = inputs.len() * 4 / 5;
    let net = LstmConfig {
        input_dim: 1,
        hidden: 16,
        layers: 1,
        output_dim: 1,
    };
    let idx: Vec<usize> = (0..split).collect();
    let tc = TrainConfig {
        lr: 0.01,
        batch_size: 32,
        max_epochs: 150,
        patience: None,
        seed: 2,
        ..Default::default()
    };
    let out =
        train_network(&net, &inputs, &targets, &idx, &LossConfig::scalar_mse(), &tc).map_err(|e| e.to_string())?;
    let test: Vec<&Tensor<f64>> = inputs[split..].iter().collect();
    let preds = net.predict_batch(&out.params, &test).map_err(|e| e.to_string())?;
    let n = test.len() as f64;
    let mse = preds
        .iter()
        .zip(&targets[split..])
        .map(|(p, y)| (p[0] - y[0]).powi(2))
        .sum::<f64>()
        / n;
    let persistence = test
        .iter()
        .zip(&targets[split..])
        .map(|(w, y)| (w.data()[h - 1] - y[0]).powi(2))
        .sum::<f64>()
        / n;
    ensure(mse <= 0.5 * persistence, || {
        format!("LSTM test MSE {mse:.3e} vs persistence {persistence:.3e}")
    })?;
    Ok(format!("LSTM test MSE {mse:.1e} vs persistence {persistence:.1e}"))
}

fn linear_ar() -> Result<String, String> {
    // x_t = 2 cos(w) x_{t-1} - x_{t-2}: a non-decaying order-2 recurrence.
    let w = 0.7f64;
    let (a, b) = (2.0 * w.cos(), -1.0);
    let mut x = vec![0.3, 1.1];
    for t in 2..80 {
        x.push(a * x[t - 1] + b * x[t - 2]);
    }
    let rows: Vec<Vec<f64>> = (2..60).map(|t| vec![x[t - 1], x[t - 2]]).collect();
    let ys: Vec<f64> = (2..60).map(|t| x[t]).collect();
    let fit = fit_linear(&rows, &ys, 0.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for t in 60..80 {
        let p = fit.predict_one(&[x[t - 1], x[t - 2]]).map_err(|e| e.to_string())?;
        worst = worst.max((p - x[t]).abs());
    }
    ensure(worst <= 1e-6, || format!("next-value error {worst:.3e}"))?;
    Ok(format!("AR(2) next-value error {worst:.1e}"))
}

fn learning_smoke() -> Outcome {
    let start = Instant::now();
    let parts = [mlp_overfit()?, lstm_sinusoid()?, linear_ar()?];
    within(start.elapsed(), 120.0, "learning smoke tests")?;
    Ok(format!("{}; {:.1} s", parts.join("; "), start.elapsed().as_secs_f64()))
}

fn lights_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for pair in 0..50 {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let values: Vec<f32> = (0..w * h).map(|_| rng.gen_range(0.0f32..200.0)).collect();
        let mut cells: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.4)).collect();
        cells[rng.gen_range(0..w * h)] = true;
        let grid = BrightnessGrid::new(w, h, values.clone()).map_err(|e| e.to_string())?;
        let mask = CountryMask::new("ZZZ", w, h, cells.clone()).map_err(|e| e.to_string())?;
        let s = zonal_stats(&grid, &mask).map_err(|e| e.to_string())?;

        let mut sum = 0.0f64;
        let mut count = 0usize;
        for y in 0..h {
            for x in 0..w {
                if cells[y * w + x] {
                    sum += values[y * w + x] as f64;
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let mut ss = 0.0f64;
        for i in 0..w * h {
            if cells[i] {
                let d = values[i] as f64 - mean;
                ss += d * d;
            }
        }
        let std = (ss / count as f64).sqrt();
        ensure(s.sum == sum, || format!("pair {pair}: sum {} vs {sum}", s.sum))?;
        let rel = |a: f64, b: f64| {
            if a == b {
                0.0
            } else {
                (a - b).abs() / a.abs().max(b.abs())
            }
        };
        worst = worst.max(rel(s.mean, mean)).max(rel(s.std, std));
        ensure(worst <= 1e-12, || format!("pair {pair}: relative error {worst:.3e}"))?;
    }
    Ok(format!("50 pairs, sums exact, max relative error {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("OLS oracle equivalence", ols_oracle),
        ("gradient suite", gradient_suite),
        ("weighted multivariate loss fidelity", weighted_loss_fidelity),
        ("protocol fidelity", protocol_fidelity),
        ("determinism across --jobs", determinism),
        ("feature dimensionality law", dims_law),
        ("RT structural checks", rt_structure),
        ("patch channel isolation", patch_isolation),
        ("learning smoke tests", learning_smoke),
        ("lights oracle", lights_oracle),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name} [{secs:.2} s]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.2} s]: {why}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
