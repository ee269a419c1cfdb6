//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1 to 5 need the NASA capacity CSVs (B0005, B0006, B0007, B0018)
//! in `$CAPFORGE_NASA_DIR` or `<workspace>/data/nasa`; see
//! `scripts/nasa_to_csv.py`. Without them those criteria report FAIL.
//!
//! Criteria 6, 7 and 8 are hard contracts and make the process exit non-zero
//! when they fail. The others are stochastic reproduction targets: their
//! verdicts are printed but do not change the exit status.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use capforge::bench::bench_latency;
use capforge::csv_io::load_capacity_csv;
use capforge_core::data::CapacitySeries;
use capforge_core::model::{
    denormalize, normalize_window, patchify, run_gradcheck, unpatchify, Architecture, ModelConfig, MoeLayer,
};
use capforge_core::nn::{GradCheckSettings, Matrix};
use capforge_core::training::{
    loocv_cells, summarize, sweep_k_cells, CellResult, KOverrides, Study, Summary, TrainSettings,
};
use capforge::runner::{run_study, StdClock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1: 2.5x the reference per-battery MAE, and the grand-average caps.
const GRAND_MAE_MAX: f64 = 0.016;
const GRAND_RMSE_MAX: f64 = 0.030;
const PER_BATTERY_MAE_MAX: [(&str, f64); 4] = [("B0005", 0.0115), ("B0006", 0.0215), ("B0007", 0.0110), ("B0018", 0.0340)];
const LOOCV_RUNTIME_MAX_S: f64 = 20.0 * 60.0;
// Criterion 5.
const CONVERGED_TRAIN_LOSS: f64 = 0.01;
const CONVERGENCE_EPOCHS: usize = 100;
// Criterion 6.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const GRADCHECK_RUNTIME_MAX_S: f64 = 30.0;
// Criterion 7.
const DISPATCH_BATCHES: usize = 100;
const DISPATCH_MAX_ROWS: usize = 16;
const DISPATCH_TOL: f64 = 1e-9;
// Criterion 8.
const DETERMINISM_SEED: &str = "7";
const ROUND_TRIP_TOL: f64 = 1e-12;
const PATCHIFY_VECTORS: usize = 1000;
// Criterion 9.
const LATENCY_MAX_S: f64 = 0.01;
const LATENCY_ITERATIONS: usize = 1000;
const LATENCY_WARMUP: usize = 100;

const NASA_IDS: [&str; 4] = ["B0005", "B0006", "B0007", "B0018"];

struct Outcome {
    id: u8,
    hard: bool,
    passed: bool,
}

fn report(id: u8, name: &str, hard: bool, passed: bool, detail: &str) -> Outcome {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let kind = if hard { "hard" } else { "soft" };
    println!("{verdict} [{id}] ({kind}) {name}: {detail}");
    std::io::stdout().flush().ok();
    Outcome { id, hard, passed }
}

fn workspace_root() -> PathBuf {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    manifest.ancestors().nth(2).unwrap_or(manifest).to_path_buf()
}

fn nasa_dir() -> PathBuf {
    std::env::var_os("CAPFORGE_NASA_DIR").map_or_else(|| workspace_root().join("data/nasa"), PathBuf::from)
}

fn load_nasa(dir: &Path) -> Result<Vec<CapacitySeries>, String> {
    NASA_IDS
        .iter()
        .map(|id| {
            let path = dir.join(format!("{id}.csv"));
            if !path.exists() {
                return Err(format!(
                    "NASA capacity CSVs not found ({} missing); convert the NASA archive with scripts/nasa_to_csv.py \
                     or set CAPFORGE_NASA_DIR",
                    path.display()
                ));
            }
            load_capacity_csv(&path).map_err(|e| e.to_string())
        })
        .collect()
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run_cells(series: &[CapacitySeries], cells: Vec<capforge_core::training::Cell>) -> Result<Vec<CellResult>, String> {
    let study = Study::new(series, TrainSettings::default(), cells).map_err(|e| e.to_string())?;
    run_study(&study, jobs(), &StdClock::new(), &|_| {}).map_err(|e| e.to_string())
}

fn by_label<'a>(summaries: &'a [Summary], label: &str) -> &'a Summary {
    summaries.iter().find(|s| s.label == label).expect("label present")
}

fn battery_mae(s: &Summary, id: &str) -> f64 {
    s.batteries.iter().find(|b| b.battery_id == id).expect("battery present").mae
}

fn reproduction(series: &[CapacitySeries]) -> Vec<Outcome> {
    let mut out = Vec::new();
    let overrides = KOverrides::standard();
    let full = ModelConfig::default();

    let start = Instant::now();
    let main = match run_cells(series, loocv_cells(&full, &overrides, series, "full")) {
        Ok(r) => r,
        Err(e) => {
            for id in 1..=5 {
                out.push(report(id, "reproduction", false, false, &format!("training failed: {e}")));
            }
            return out;
        }
    };
    let loocv_seconds = start.elapsed().as_secs_f64();
    let main_summary = summarize(&main).remove(0);

    // 1
    let mut per_battery = Vec::new();
    let mut ok = main_summary.average_mae <= GRAND_MAE_MAX
        && main_summary.average_rmse <= GRAND_RMSE_MAX
        && loocv_seconds < LOOCV_RUNTIME_MAX_S;
    for (id, max) in PER_BATTERY_MAE_MAX {
        let mae = battery_mae(&main_summary, id);
        ok &= mae <= max;
        per_battery.push(format!("{id} {mae:.4}<={max}"));
    }
    out.push(report(
        1,
        "headline LOOCV accuracy",
        false,
        ok,
        &format!(
            "grand MAE {:.4} (<= {GRAND_MAE_MAX}), RMSE {:.4} (<= {GRAND_RMSE_MAX}), {}; {:.0}s (< {LOOCV_RUNTIME_MAX_S}s)",
            main_summary.average_mae,
            main_summary.average_rmse,
            per_battery.join(", "),
            loocv_seconds
        ),
    ));

    // 5
    let b5 = main.iter().find(|r| r.cell.test_id == "B0005").expect("B0005 cell");
    let mean = capforge::csv_io::mean_trace(&b5.traces);
    let finite = b5.traces.iter().flatten().all(|e| e.train_loss.is_finite() && e.test_loss.is_some_and(f64::is_finite));
    let first_below = mean.iter().take(CONVERGENCE_EPOCHS).find(|e| e.train_loss < CONVERGED_TRAIN_LOSS);
    out.push(report(
        5,
        "B0005 convergence",
        false,
        finite && first_below.is_some(),
        &format!(
            "trial-mean train loss {:.4} -> {:.4}, first epoch below {CONVERGED_TRAIN_LOSS}: {}, all finite: {finite}",
            mean.first().map_or(f64::NAN, |e| e.train_loss),
            mean.last().map_or(f64::NAN, |e| e.train_loss),
            first_below.map_or("none".into(), |e| e.epoch.to_string())
        ),
    ));

    // the remaining studies share the protocol and seeds
    let mut cells = Vec::new();
    for arch in [Architecture::Dnn, Architecture::PlainMoe] {
        let c = ModelConfig { architecture: arch, ..full.clone() };
        cells.extend(loocv_cells(&c, &overrides, series, arch.label()));
    }
    let no_intra = ModelConfig { enable_intra: false, ..full.clone() };
    let no_inter = ModelConfig { enable_inter: false, ..full.clone() };
    cells.extend(loocv_cells(&no_intra, &overrides, series, "no_intra"));
    cells.extend(loocv_cells(&no_inter, &overrides, series, "no_inter"));
    let mut sweep = Vec::new();
    for id in ["B0006", "B0018"] {
        sweep.extend(
            sweep_k_cells(&full, id, &[1, 2, 3, 4])
                .expect("valid k")
                .into_iter()
                .map(|mut c| {
                    c.label = format!("{id} {}", c.label);
                    c
                }),
        );
    }
    cells.extend(sweep);
    let rest = match run_cells(series, cells) {
        Ok(r) => summarize(&r),
        Err(e) => {
            for id in 2..=4 {
                out.push(report(id, "comparison runs", false, false, &format!("training failed: {e}")));
            }
            return out;
        }
    };

    // 2
    let (m, d, p) = (
        main_summary.average_mae,
        by_label(&rest, "dnn").average_mae,
        by_label(&rest, "moe").average_mae,
    );
    out.push(report(
        2,
        "ordering against baselines",
        false,
        m < d && m < p,
        &format!("MAE mspmlp {m:.4} < dnn {d:.4} and < moe {p:.4}"),
    ));

    // 3
    let (a, b) = (by_label(&rest, "no_intra").average_mae, by_label(&rest, "no_inter").average_mae);
    out.push(report(
        3,
        "ablation direction",
        false,
        m < a && m < b && a > b,
        &format!("MAE full {m:.4}, no_inter {b:.4}, no_intra {a:.4}; need full best and no_intra worst"),
    ));

    // 4
    let k = |id: &str, k: usize| by_label(&rest, &format!("{id} k={k}")).average_mae;
    let b6 = [k("B0006", 1), k("B0006", 2), k("B0006", 3), k("B0006", 4)];
    let b18 = [k("B0018", 1), k("B0018", 2), k("B0018", 3), k("B0018", 4)];
    let ok6 = b6[2] < b6[0] && b6[3] > b6[2];
    let ok18 = b18[1..].iter().all(|&v| b18[0] < v);
    out.push(report(
        4,
        "activated-expert sweep direction",
        false,
        ok6 && ok18,
        &format!("B0006 MAE k=1..4 {b6:.4?} (need k3<k1, k4>k3); B0018 {b18:.4?} (need k1 minimal)"),
    ));

    out
}

fn gradient_contract() -> Outcome {
    let settings = GradCheckSettings { step: GRAD_STEP, tolerance: GRAD_REL_TOL, max_probes: None, ..Default::default() };
    let start = Instant::now();
    let result = run_gradcheck(0, &settings);
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(r) => report(
            6,
            "gradient contract",
            true,
            r.passed() && seconds < GRADCHECK_RUNTIME_MAX_S,
            &format!(
                "{} probes over every parameter, {} skipped at kinks, max relative error {:.2e} (< {GRAD_REL_TOL:e}), \
                 {} failing, {seconds:.2}s (< {GRADCHECK_RUNTIME_MAX_S}s)",
                r.probes.len(),
                r.skipped(),
                r.max_relative_error(),
                r.failures().len()
            ),
        ),
        Err(e) => report(6, "gradient contract", true, false, &e.to_string()),
    }
}

/// Every expert on every row, weighted by a softmax over all gate logits.
fn dense_oracle(layer: &MoeLayer, x: &Matrix) -> Matrix {
    let w = &layer.gate.weight.value;
    let bias = layer.gate.bias.value.as_slice();
    let n = layer.num_experts();
    let outputs: Vec<Matrix> = layer.experts.iter().map(|e| e.forward(x).unwrap()).collect();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let logits: Vec<f64> = (0..n)
            .map(|e| bias[e] + (0..x.cols()).map(|i| x.get(r, i) * w.get(i, e)).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for c in 0..x.cols() {
            let v = (0..n).map(|e| exps[e] / total * outputs[e].get(r, c)).sum::<f64>();
            out.set(r, c, v);
        }
    }
    out
}

fn dispatcher_equivalence() -> Outcome {
    let config = ModelConfig::default();
    let n = config.experts_per_layer;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..DISPATCH_BATCHES {
        let layer = MoeLayer::new(&config, i % config.num_layers, &mut rng).unwrap();
        let rows = rng.gen_range(1..=DISPATCH_MAX_ROWS);
        let mut x = Matrix::zeros(rows, config.window);
        x.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-3.0..3.0));
        let sparse = layer.forward(&x, n).unwrap();
        worst = worst.max(sparse.max_abs_diff(&dense_oracle(&layer, &x)).unwrap());
    }
    report(
        7,
        "dispatcher equivalence",
        true,
        worst < DISPATCH_TOL,
        &format!("{DISPATCH_BATCHES} random batches (B <= {DISPATCH_MAX_ROWS}, k = n = {n}), max abs diff {worst:.2e} (< {DISPATCH_TOL:e})"),
    )
}

fn nasa_like_dir(dir: &Path) {
    for (i, (id, len)) in NASA_IDS.iter().zip([168, 168, 168, 132]).enumerate() {
        common::write_csv(dir, id, &common::synthetic_capacities(len, 900 + i as u64));
    }
}

fn determinism(data: &Path, data_label: &str, work: &Path) -> (Outcome, Option<PathBuf>) {
    let run = |name: &str| {
        let out = work.join(name);
        let o = common::capforge(&[
            "loocv",
            "--trials",
            "1",
            "--seed",
            DETERMINISM_SEED,
            "--deterministic",
            "--quiet",
            "--data-dir",
            data.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        (o.status.success().then(|| std::fs::read(out.join("report.json")).ok()).flatten(), out, common::stderr(&o))
    };
    let (a, out_a, err_a) = run("det_a");
    let (b, _, _) = run("det_b");
    let identical = a.is_some() && a == b;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut round_trip: f64 = 0.0;
    for i in 0..1000 {
        let scale = if i % 2 == 0 { 1.0 } else { 10f64.powi(rng.gen_range(-3..4)) };
        let window: Vec<f64> = (0..36).map(|_| scale * rng.gen_range(0.5..2.5)).collect();
        let (z, stats) = normalize_window(&window);
        for (orig, zi) in window.iter().zip(&z) {
            round_trip = round_trip.max((denormalize(*zi, stats) - orig).abs() / orig.abs().max(1.0));
        }
    }

    let mut exact = 0;
    for _ in 0..PATCHIFY_VECTORS {
        let p = rng.gen_range(1..=12);
        let len = p * rng.gen_range(1..=12);
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let grid = patchify(&v, p).unwrap();
        let back = unpatchify(&grid);
        let layout_ok = (0..len).all(|t| grid.values().get(t / p, t % p).to_bits() == v[t].to_bits());
        if layout_ok && back.iter().zip(&v).all(|(x, y)| x.to_bits() == y.to_bits()) && back.len() == len {
            exact += 1;
        }
    }

    let passed = identical && round_trip < ROUND_TRIP_TOL && exact == PATCHIFY_VECTORS;
    let detail = format!(
        "two single-threaded `loocv --trials 1 --seed {DETERMINISM_SEED}` runs on {data_label}: report.json {}; \
         normalization round-trip max error {round_trip:.1e} (< {ROUND_TRIP_TOL:e}); patchify/unpatchify exact on {exact}/{PATCHIFY_VECTORS}{}",
        if identical { "byte-identical" } else { "DIFFERS" },
        if a.is_none() { format!("; run failed: {}", err_a.trim()) } else { String::new() }
    );
    (report(8, "determinism", true, passed, &detail), a.is_some().then_some(out_a))
}

fn latency(trained: Option<&Path>, work: &Path) -> Outcome {
    let Some(dir) = trained else {
        return report(9, "inference latency", false, false, "no trained checkpoint (determinism run failed)");
    };
    let checkpoint = dir.join("model_B0005.json");
    let bench_out = work.join("bench");
    let o = common::capforge(&[
        "bench",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--iterations",
        &LATENCY_ITERATIONS.to_string(),
        "--warmup",
        &LATENCY_WARMUP.to_string(),
        "--out-dir",
        bench_out.to_str().unwrap(),
    ]);
    if !o.status.success() {
        return report(9, "inference latency", false, false, &common::stderr(&o));
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bench_out.join("bench.json")).unwrap()).unwrap();
    let mean = json["mean_seconds"].as_f64().unwrap();
    let p95 = json["p95_seconds"].as_f64().unwrap();
    // cross-check in process with the library timer
    let model = capforge::checkpoint::load(&checkpoint).unwrap();
    let inproc = bench_latency(&model, LATENCY_ITERATIONS, LATENCY_WARMUP).unwrap().mean_seconds;
    report(
        9,
        "inference latency",
        false,
        mean < LATENCY_MAX_S && inproc < LATENCY_MAX_S,
        &format!(
            "trained default model, {LATENCY_ITERATIONS} warm single-window predictions: mean {mean:.2e}s, p95 {p95:.2e}s \
             (in-process mean {inproc:.2e}s); limit {LATENCY_MAX_S}s"
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters from the default harness are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let work = tempfile::tempdir().expect("temp dir");
    let mut outcomes = Vec::new();

    let nasa = nasa_dir();
    let nasa_series = load_nasa(&nasa);
    match &nasa_series {
        Ok(series) => outcomes.extend(reproduction(series)),
        Err(reason) => {
            for (id, name) in [
                (1, "headline LOOCV accuracy"),
                (2, "ordering against baselines"),
                (3, "ablation direction"),
                (4, "activated-expert sweep direction"),
                (5, "B0005 convergence"),
            ] {
                outcomes.push(report(id, name, false, false, &format!("not evaluated: {reason}")));
            }
        }
    }

    outcomes.push(gradient_contract());
    outcomes.push(dispatcher_equivalence());

    let (data, label) = if nasa_series.is_ok() {
        (nasa.clone(), "the NASA CSVs".to_string())
    } else {
        let synthetic = work.path().join("synthetic");
        std::fs::create_dir_all(&synthetic).unwrap();
        nasa_like_dir(&synthetic);
        (synthetic, "synthetic NASA-sized series (NASA CSVs unavailable)".to_string())
    };
    let (outcome, trained) = determinism(&data, &label, work.path());
    outcomes.push(outcome);
    outcomes.push(latency(trained.as_deref(), work.path()));

    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    let hard_failed = outcomes.iter().any(|o| o.hard && !o.passed);
    println!(
        "acceptance: {}/{} criteria passed{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if hard_failed {
        std::process::exit(1);
    }
}
