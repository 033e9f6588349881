//! End-to-end scorecard: one PASS/FAIL line per criterion, exit status 1
//! when any criterion fails. Criteria 1–8 run twice and every CSV they emit
//! must come out byte-identical (criterion 9).

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use fdht::commands::param_report;
use fdht::complexity::{emit_rank_sweep, rank_sweep_rows, scheme_params, sweep_reference_spec, Scheme};
use fdht::config::{ModelConfig, RunConfig};
use fdht::grad::{finite_diff_check, half_squared_norm};
use fdht::lstm::{
    bptt_finite_diff_check, make_cell, matched_ranks, CellMode, Classifier, Head, LstmCell, LstmState, Projection,
    Sequence,
};
use fdht::train::{metrics_csv, train, EpochMetrics, SyntheticTask, TrainConfig};
use fdht::{htl_forward, DimTree, HTWeight, HtLayout, Matrix, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            if new_size >= layout.size() {
                let now = CURRENT.fetch_add(new_size - layout.size(), Ordering::Relaxed) + new_size - layout.size();
                PEAK.fetch_max(now, Ordering::Relaxed);
            } else {
                CURRENT.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Run {
    verdicts: Vec<Verdict>,
    csvs: BTreeMap<&'static str, String>,
}

impl Run {
    fn record(&mut self, id: u32, title: &'static str, pass: bool, detail: String) {
        self.verdicts.push(Verdict {
            id,
            title,
            pass,
            detail,
        });
    }
}

fn model(input_size: usize, n: &[usize], m: &[usize], leaf: usize, internal: usize) -> ModelConfig {
    ModelConfig {
        input_size,
        n_shape: n.to_vec(),
        m_shape: m.to_vec(),
        leaf_rank: leaf,
        internal_rank: internal,
        mode: CellMode::Full,
        seed: 0,
    }
}

fn published() -> [(&'static str, ModelConfig, usize, usize); 4] {
    let raw = [16, 16, 16, 15];
    let cnn = [8, 8, 8, 8];
    [
        ("ucf11-direct", model(57_600, &raw, &[4, 4, 4, 4], 14, 12), 8_808, 6_726),
        (
            "youtube-direct",
            model(57_600, &raw, &[4, 4, 4, 4], 14, 11),
            8_324,
            7_117,
        ),
        ("ucf11-cnn", model(2_048, &cnn, &[4, 8, 8, 8], 9, 6), 3_132, 10_713),
        ("hmdb51-cnn", model(2_048, &cnn, &[4, 8, 8, 8], 14, 12), 8_416, 3_987),
    ]
}

fn criteria_1_2(run: &mut Run) {
    let mut csv = String::from("config,ht_params,dense_weights,dense_total,ratio,ratio_floor\n");
    let (mut counts_ok, mut ratios_ok, mut slowest) = (true, true, Duration::ZERO);
    let mut counts = Vec::new();
    let mut ratios = Vec::new();
    for (name, cfg, want_count, want_ratio) in published() {
        let start = Instant::now();
        let p = param_report(&cfg).expect("valid config");
        let built = make_cell(
            cfg.input_size,
            &cfg.n_shape,
            &cfg.m_shape,
            cfg.leaf_rank,
            cfg.internal_rank,
            CellMode::Full,
            0,
        )
        .expect("cell builds")
        .weight_param_count();
        slowest = slowest.max(start.elapsed());
        counts_ok &= p.ht_params == want_count && built == want_count;
        ratios_ok &= p.ratio == want_ratio;
        counts.push(p.ht_params.to_string());
        ratios.push(format!("{} (floor {})", p.ratio, p.ratio_floor));
        writeln!(
            csv,
            "{name},{},{},{},{},{}",
            p.ht_params, p.dense_weights, p.dense_total, p.ratio, p.ratio_floor
        )
        .unwrap();
    }
    let totals = [published()[0].1.clone(), published()[3].1.clone()].map(|c| param_report(&c).unwrap().dense_total);
    let totals_ok = totals == [59_245_568, 33_562_624];
    run.record(
        1,
        "exact parameter counts",
        counts_ok && slowest < Duration::from_secs(1),
        format!("{} (slowest {slowest:?})", counts.join(", ")),
    );
    run.record(
        2,
        "compression ratios and dense totals",
        ratios_ok && totals_ok,
        format!(
            "ratios {}; dense totals {} / {}",
            ratios.join(", "),
            totals[0],
            totals[1]
        ),
    );
    run.csvs.insert("params.csv", csv);
}

fn random_weight(rng: &mut ChaCha8Rng, max_d: usize, max_mode: usize, max_rank: usize) -> HTWeight {
    let d = rng.random_range(2..=max_d);
    let m: Vec<usize> = (0..d).map(|_| rng.random_range(1..=max_mode)).collect();
    let n: Vec<usize> = (0..d).map(|_| rng.random_range(1..=max_mode)).collect();
    let ranks: Vec<usize> = (0..2 * d - 1).map(|_| rng.random_range(1..=max_rank)).collect();
    let tree = DimTree::with_ranks(d, &ranks).unwrap();
    let factors = (0..ranks.len())
        .map(|id| {
            Tensor::from_fn(&fdht::ht::factor_shape(&tree, &m, &n, id), |_| {
                rng.random_range(-1.0..1.0)
            })
        })
        .collect();
    HTWeight::from_factors(tree, m, n, factors).unwrap()
}

fn criterion_3(run: &mut Run) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut csv = String::from("trial,d,input_len,output_len,max_abs_error\n");
    let trials = 120;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let w = random_weight(&mut rng, 4, 4, 3);
        let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = htl_forward(&w, &x).unwrap();
        let slow = w.reconstruct_dense().unwrap().matvec(&x).unwrap();
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        writeln!(csv, "{trial},{},{},{},{err:e}", w.d(), w.input_len(), w.output_len()).unwrap();
    }
    let elapsed = start.elapsed();
    run.record(
        3,
        "fast forward equals dense oracle",
        worst <= 1e-10 && elapsed < Duration::from_secs(30),
        format!("{trials} configs, max error {worst:.2e} (tol 1e-10), {elapsed:?}"),
    );
    run.csvs.insert("oracle.csv", csv);
}

fn criterion_4(run: &mut Run) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut csv = String::from("kind,trial,checked,max_error\n");
    let mut worst: f64 = 0.0;
    let trials = 24;
    for trial in 0..trials {
        let w = random_weight(&mut rng, 3, 3, 2);
        let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = finite_diff_check(&w, &x, &half_squared_norm, 1e-5).unwrap();
        worst = worst.max(r.max_error);
        writeln!(csv, "ht_layer,{trial},{},{:e}", r.checked, r.max_error).unwrap();
    }
    for trial in 0..trials {
        let nx = rng.random_range(2..=4);
        let seed = trial as u64;
        let cell = match trial % 3 {
            0 => make_cell(
                nx,
                &[3, 3],
                &[2, 2],
                rng.random_range(1..=2),
                rng.random_range(1..=2),
                CellMode::Full,
                seed,
            ),
            1 => make_cell(
                nx,
                &[2, 2],
                &[2, 2],
                rng.random_range(1..=2),
                2,
                CellMode::InputOnly,
                seed,
            ),
            _ => LstmCell::dense(nx, 3, seed),
        }
        .unwrap();
        let h = cell.hidden_size();
        let mut model = Classifier::new(cell, Head::init(3, h, seed + 100).unwrap()).unwrap();
        for (_, block) in model.param_blocks_mut() {
            block.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let batch: Vec<Sequence> = (0..2)
            .map(|b| Sequence {
                frames: (0..2)
                    .map(|_| (0..nx).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect(),
                label: (b + trial) % 3,
            })
            .collect();
        let mask: Vec<f64> = (0..2 * h)
            .map(|_| if rng.random::<f64>() < 0.25 { 0.0 } else { 4.0 / 3.0 })
            .collect();
        let use_mask = trial % 2 == 1;
        let r = bptt_finite_diff_check(&model, &batch, use_mask.then_some(mask.as_slice()), 1e-5).unwrap();
        worst = worst.max(r.max_error);
        writeln!(csv, "bptt,{trial},{},{:e}", r.checked, r.max_error).unwrap();
    }
    let elapsed = start.elapsed();
    run.record(
        4,
        "gradients match central differences",
        worst <= 1e-4 && elapsed < Duration::from_secs(120),
        format!(
            "{trials} HT-layer + {trials} BPTT (T=2) configs, max relative error {worst:.2e} (tol 1e-4), {elapsed:?}"
        ),
    );
    run.csvs.insert("gradients.csv", csv);
}

/// Splits the projection into gate-major input and recurrent blocks of a
/// plain dense LSTM.
fn dense_blocks(cell: &LstmCell) -> (Matrix, Matrix) {
    let (nx, h, pad) = (cell.input_size(), cell.hidden_size(), cell.pad_len());
    let take = |m: &Matrix, from: usize, len: usize| {
        let data = (0..m.rows())
            .flat_map(|r| m.row(r)[from..from + len].to_vec())
            .collect();
        Matrix::new(m.rows(), len, data).unwrap()
    };
    match &cell.projection {
        Projection::Full(w) => {
            let full = w.reconstruct_dense().unwrap();
            (take(&full, 0, nx), take(&full, nx + pad, h))
        }
        Projection::InputOnly { input, recurrent } => {
            (take(&input.reconstruct_dense().unwrap(), 0, nx), recurrent.clone())
        }
        Projection::Dense(_) => unreachable!("HT cells only"),
    }
}

fn dense_lstm_step(wx: &Matrix, wh: &Matrix, b: &[f64], x: &[f64], s: &LstmState) -> LstmState {
    let h = s.h.len();
    let zx = wx.matvec(x).unwrap();
    let zh = wh.matvec(&s.h).unwrap();
    let z: Vec<f64> = (0..4 * h).map(|i| zx[i] + zh[i] + b[i]).collect();
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut out = LstmState::zeros(h);
    for k in 0..h {
        let (f, u, g, o) = (sig(z[k]), sig(z[h + k]), z[2 * h + k].tanh(), sig(z[3 * h + k]));
        out.c[k] = f * s.c[k] + u * g;
        out.h[k] = o * out.c[k].tanh();
    }
    out
}

fn criterion_5(run: &mut Run) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut csv = String::from("config,t,max_abs_gap\n");
    let configs: [(usize, &[usize], &[usize], CellMode); 4] = [
        (5, &[3, 4], &[2, 2], CellMode::Full),
        (10, &[2, 3, 3], &[2, 1, 2], CellMode::Full),
        (9, &[2, 2, 2, 3], &[1, 2, 2, 1], CellMode::Full),
        (12, &[2, 2, 4], &[2, 2, 1], CellMode::InputOnly),
    ];
    let mut worst: f64 = 0.0;
    for (i, (nx, n, m, mode)) in configs.into_iter().enumerate() {
        let mut cell = make_cell(nx, n, m, 3, 2, mode, i as u64).unwrap();
        cell.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        let (wx, wh) = dense_blocks(&cell);
        let mut a = LstmState::zeros(cell.hidden_size());
        let mut b = a.clone();
        for t in 1..=8 {
            let x: Vec<f64> = (0..nx).map(|_| rng.random_range(-1.0..1.0)).collect();
            a = fdht::lstm::lstm_step(&cell, &x, &a).unwrap();
            b = dense_lstm_step(&wx, &wh, &cell.bias, &x, &b);
            let gap =
                a.h.iter()
                    .chain(&a.c)
                    .zip(b.h.iter().chain(&b.c))
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max);
            worst = worst.max(gap);
            writeln!(csv, "{i},{t},{gap:e}").unwrap();
        }
    }
    run.record(
        5,
        "LSTM trajectory equals dense LSTM",
        worst <= 1e-9,
        format!("4 configs x 8 steps, max |(h,c) gap| {worst:.2e} (tol 1e-9)"),
    );
    run.csvs.insert("trajectory.csv", csv);
}

fn criterion_6(run: &mut Run) {
    let layout = HtLayout {
        m_shape: vec![4, 4, 4, 4],
        n_shape: vec![16, 16, 16, 15],
        leaf_rank: 14,
        internal_rank: 12,
        root_rank: 4,
    };
    let w = HTWeight::init(&layout, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<f64> = (0..w.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = CURRENT.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let start = Instant::now();
    let y = htl_forward(&w, &x).unwrap();
    let elapsed = start.elapsed();
    let transient = PEAK.load(Ordering::Relaxed) - base;
    drop(y);
    let dense_bytes = w.dense_entries() * 8;
    run.record(
        6,
        "forward without materializing the dense weight",
        elapsed < Duration::from_secs(1) && transient < 10 * 1024 * 1024,
        format!(
            "{}x{} layer: {elapsed:?}, peak transient {:.2} MiB (dense matrix would be {:.0} MiB)",
            w.output_len(),
            w.input_len(),
            transient as f64 / (1024.0 * 1024.0),
            dense_bytes as f64 / (1024.0 * 1024.0)
        ),
    );
}

fn criterion_7(run: &mut Run) {
    let spec = sweep_reference_spec();
    let csv = emit_rank_sweep(&spec, 1..=16).unwrap();
    let failing: Vec<usize> = rank_sweep_rows(&spec, 1..=16)
        .into_iter()
        .filter(|(_, [tt, tr, bt, ht])| !(ht <= bt && bt <= tt.max(tr)))
        .map(|(r, _)| r)
        .collect();
    let ht2 = scheme_params(&spec.with_rank(2), Scheme::HierarchicalTucker);
    let detail = if failing.is_empty() {
        format!("HT <= BT <= max(TT,TR) for r in 1..=16; HT(r=2) = {ht2}")
    } else {
        let show = |r: usize| {
            let s = spec.with_rank(r);
            let [tt, tr, bt, ht] = Scheme::ALL.map(|k| scheme_params(&s, k));
            format!("r={r}: TT {tt} TR {tr} BT {bt} HT {ht}")
        };
        format!(
            "ordering violated at r = {:?} ({}; {}); HT(r=2) = {ht2}",
            failing,
            show(failing[0]),
            show(*failing.last().unwrap())
        )
    };
    run.record(
        7,
        "scheme ordering over ranks 1..16",
        failing.is_empty() && ht2 == 316,
        detail,
    );
    run.csvs.insert("sweep.csv", csv);
}

fn best_train(h: &[EpochMetrics]) -> (f64, Option<usize>) {
    let best = h.iter().map(|m| m.train_acc).fold(0.0, f64::max);
    (best, h.iter().find(|m| m.train_acc >= 0.9).map(|m| m.epoch))
}

fn fit(cell: LstmCell, data: &fdht::train::Dataset, cfg: &TrainConfig, seed: u64) -> (Classifier, Vec<EpochMetrics>) {
    let h = cell.hidden_size();
    let mut model = Classifier::new(cell, Head::init(data.classes, h, seed).unwrap()).unwrap();
    let history = train(&mut model, data, cfg).unwrap();
    (model, history)
}

fn criterion_8(run: &mut Run) {
    let start = Instant::now();
    let config = RunConfig::default();
    let task: SyntheticTask = config.task.clone();
    let data = task.generate().unwrap();
    let cfg = config.train.clone();
    let m = &config.model;

    let dense = LstmCell::dense(m.input_size, m.hidden_size(), m.seed).unwrap();
    let (_, hd) = fit(dense, &data, &cfg, m.seed + 1);
    let fdht_cell = m.build_cell().unwrap();
    let fdht_weights = fdht_cell.weight_param_count();
    let (_, hf) = fit(fdht_cell, &data, &cfg, m.seed + 1);

    let (dense_best, dense_epoch) = best_train(&hd);
    let (fdht_best, fdht_epoch) = best_train(&hf);
    let dense_test = hd.last().unwrap().test_acc;
    let fdht_test = hf.last().unwrap().test_acc;
    let losses = |h: &[EpochMetrics]| {
        let n = h.len();
        (
            h[..5].iter().map(|e| e.train_loss).sum::<f64>() / 5.0,
            h[n - 5..].iter().map(|e| e.train_loss).sum::<f64>() / 5.0,
        )
    };
    let (first, last) = losses(&hf);

    // paired full vs input-only at a matched weight budget
    let io_shape = vec![4, 4, 4, 4];
    let io_cell = make_cell(
        m.input_size,
        &io_shape,
        &m.m_shape,
        m.leaf_rank,
        m.internal_rank,
        CellMode::InputOnly,
        m.seed,
    )
    .unwrap();
    let budget = io_cell.weight_param_count();
    let (leaf, internal) = matched_ranks(&m.n_shape, &m.m_shape, budget, 12).unwrap();
    let full_cell = make_cell(
        m.input_size,
        &m.n_shape,
        &m.m_shape,
        leaf,
        internal,
        CellMode::Full,
        m.seed,
    )
    .unwrap();
    let full_weights = full_cell.weight_param_count();
    let (_, hio) = fit(io_cell, &data, &cfg, m.seed + 1);
    let (_, hfull) = fit(full_cell, &data, &cfg, m.seed + 1);
    let mut pair =
        String::from("mode,leaf_rank,internal_rank,weight_params,best_train_acc,final_test_acc,final_train_loss\n");
    for (mode, l, i, wp, h) in [
        ("input-only", m.leaf_rank, m.internal_rank, budget, &hio),
        ("full", leaf, internal, full_weights, &hfull),
    ] {
        let e = h.last().unwrap();
        writeln!(
            pair,
            "{mode},{l},{i},{wp},{:.4},{:.4},{:.6}",
            best_train(h).0,
            e.test_acc,
            e.train_loss
        )
        .unwrap();
    }
    let elapsed = start.elapsed();

    let pass =
        dense_best >= 0.9 && fdht_best >= 0.9 && fdht_test >= dense_test - 0.05 && elapsed < Duration::from_secs(600);
    run.record(
        8,
        "synthetic task is learned",
        pass,
        format!(
            "dense ({} weights) >=90% train at epoch {:?}, test {:.3}; FDHT ({fdht_weights} weights) >=90% at epoch {:?}, \
             test {:.3}; FDHT loss first5 {first:.3} -> last5 {last:.3}; {elapsed:?}",
            4 * m.hidden_size() * (m.input_size + m.hidden_size()),
            dense_epoch,
            dense_test,
            fdht_epoch,
            fdht_test
        ),
    );
    run.csvs.insert("metrics_dense.csv", metrics_csv(&hd));
    run.csvs.insert("metrics_fdht.csv", metrics_csv(&hf));
    run.csvs.insert("mode_pair.csv", pair);
}

fn run_criteria() -> Run {
    let mut run = Run::default();
    criteria_1_2(&mut run);
    criterion_3(&mut run);
    criterion_4(&mut run);
    criterion_5(&mut run);
    criterion_6(&mut run);
    criterion_7(&mut run);
    criterion_8(&mut run);
    run
}

fn main() {
    let out_dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("scorecard");
    std::fs::create_dir_all(&out_dir).unwrap();

    let first = run_criteria();
    let second = run_criteria();
    for (name, text) in &first.csvs {
        std::fs::write(out_dir.join(name), text).unwrap();
    }
    let differing: Vec<&str> = first
        .csvs
        .iter()
        .filter(|(name, text)| second.csvs.get(*name) != Some(text))
        .map(|(name, _)| *name)
        .collect();

    let mut verdicts = first.verdicts;
    verdicts.push(Verdict {
        id: 9,
        title: "repeated runs emit identical CSVs",
        pass: differing.is_empty() && first.csvs.len() == second.csvs.len(),
        detail: if differing.is_empty() {
            format!("{} CSVs byte-identical across two runs", first.csvs.len())
        } else {
            format!("differing: {differing:?}")
        },
    });

    println!();
    for v in &verdicts {
        println!(
            "{} {}. {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.id,
            v.title,
            v.detail
        );
    }
    if let Some(pair) = first.csvs.get("mode_pair.csv") {
        println!("\nfull vs input-only at matched weight budget:\n{pair}");
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!(
        "{passed}/{} criteria passed; CSVs in {}",
        verdicts.len(),
        out_dir.display()
    );
    if passed != verdicts.len() {
        std::process::exit(1);
    }
}
