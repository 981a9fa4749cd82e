//! End-to-end acceptance checks. Runs without the libtest harness so the
//! per-criterion verdict lines are always printed.

use std::time::Instant;

use lcsep::bench::{bench, BenchRow, DEFAULT_NR_LIST};
use lcsep::config::RunConfig;
use lcsep::corpus::{build_corpus, CorpusConfig};
use lcsep::data::{load_split, Utterance};
use lcsep::eval::score;
use lcsep::manifest::Split;
use lcsep::separate::{separate_all, Method};
use lcsep::train::{train, TrainMode};
use lcsep_core::chunker::{compute_saving, plan_chunks, ChunkMethod, ChunkSpec};
use lcsep_core::dsp::{istft, stft, MaskSet, StftConfig};
use lcsep_core::model::{maybe_decay, LstmState, Mode, Network, NetworkConfig, RecurrentState, TrainSchedule};
use lcsep_core::pitloss::{best_permutation, psm_mse, psm_mse_grad, LossContext, Permutation};
use lcsep_core::streamer::{infer_csc, infer_lc, infer_utterance, ChunkOutput, StreamSession};
use lcsep_core::tracer::{trace_utterance, TraceConfig, Verdict};
use lcsep_core::{Matrix, SeededRng};

const SEEDS: [u64; 3] = [1, 2, 3];
const SLACK_DB: f64 = 0.2;

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn report(id: u32, pass: bool, detail: String) -> Outcome {
    println!("[{}] criterion {id:>2}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, detail }
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_in(lo, hi))
}

/// Lexicographic permutations of `0..n`, built recursively.
fn oracle_perms(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for k in 0..n {
            if !prefix.contains(&k) {
                prefix.push(k);
                go(prefix, n, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), n, &mut out);
    out
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SeededRng::new(101);
    let mut agree = 0;
    let n = 1000;
    for _ in 0..n {
        let s = 2 + rng.below(2);
        let (t, f) = (1 + rng.below(20), 1 + rng.below(12));
        let masks: Vec<Matrix> = (0..s).map(|_| random_matrix(&mut rng, t, f, 0.0, 1.2)).collect();
        let mag = random_matrix(&mut rng, t, f, 0.0, 3.0);
        let targets: Vec<Matrix> = (0..s).map(|_| random_matrix(&mut rng, t, f, 0.0, 3.0)).collect();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for p in oracle_perms(s) {
            let mut sum = 0.0;
            for (k, &j) in p.iter().enumerate() {
                for tt in 0..t {
                    for ff in 0..f {
                        let d = masks[k].get(tt, ff) * mag.get(tt, ff) - targets[j].get(tt, ff);
                        sum += d * d;
                    }
                }
            }
            let loss = sum / (t * f * s) as f64;
            if best.as_ref().is_none_or(|(_, b)| loss < *b) {
                best = Some((p, loss));
            }
        }
        let (want, want_loss) = best.unwrap();
        let ctx = LossContext::utterance(s, f, t);
        let (got, got_loss) = best_permutation(&MaskSet::new(masks).unwrap(), &mag, &targets, &ctx).unwrap();
        if got.mapping() == want.as_slice() && (got_loss - want_loss).abs() <= 1e-12 * want_loss.max(1.0) {
            agree += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    report(1, agree == n && secs < 5.0, format!("PIT minimality {agree}/{n} agree with exhaustive oracle in {secs:.2}s (< 5s)"))
}

fn fd_max_rel_error(cfg: NetworkConfig, carried: bool) -> f64 {
    let mut net = Network::new(cfg.clone()).unwrap();
    for (name, seg) in net.layout().tensors().to_vec() {
        if name.starts_with("head") && name.ends_with(".bias") {
            seg.slice_mut(net.params_mut()).iter_mut().for_each(|v| *v = 3.0);
        }
    }
    let mut rng = SeededRng::new(55);
    let (t, f) = (6, cfg.input_dim);
    let x = random_matrix(&mut rng, t, f, 0.2, 1.2);
    let targets: Vec<Matrix> = (0..2).map(|_| random_matrix(&mut rng, t, f, 0.0, 1.0)).collect();
    let state = carried.then(|| RecurrentState {
        layers: (0..cfg.num_recurrent_layers)
            .map(|_| LstmState {
                h: (0..cfg.cell_dim).map(|_| rng.uniform_in(-0.5, 0.5)).collect(),
                c: (0..cfg.cell_dim).map(|_| rng.uniform_in(-0.8, 0.8)).collect(),
            })
            .collect(),
    });
    let perm = Permutation::new(vec![1, 0]).unwrap();
    let ctx = LossContext::utterance(2, f, t);
    let mode = Mode::Train { dropout_seed: 4 };
    let loss = |net: &Network| {
        let pass = net.forward(&x, state.as_ref(), mode, t).unwrap();
        psm_mse(&pass.masks, &x, &targets, &perm, &ctx).unwrap()
    };
    let pass = net.forward(&x, state.as_ref(), mode, t).unwrap();
    let dm = psm_mse_grad(&pass.masks, &x, &targets, &perm, &ctx).unwrap();
    let analytic = net.backward(&pass, &dm).unwrap();
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = loss(&net);
        net.params_mut()[i] = orig - h;
        let down = loss(&net);
        net.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let base = NetworkConfig {
        input_dim: 4,
        proj_dim: 3,
        cell_dim: 4,
        num_recurrent_layers: 2,
        input_scale: 1.0,
        init_range: 0.4,
        seed: 8,
        ..NetworkConfig::default()
    };
    let cases = [
        ("uni/zero", NetworkConfig { bidirectional: false, ..base.clone() }, false),
        ("uni/carried", NetworkConfig { bidirectional: false, ..base.clone() }, true),
        ("bi/zero", base.clone(), false),
        ("bi/carried", base.clone(), true),
        ("bi/carried/dropout", NetworkConfig { dropout_rate: 0.3, ..base.clone() }, true),
    ];
    let errs: Vec<(String, f64)> = cases.into_iter().map(|(n, c, k)| (n.to_string(), fd_max_rel_error(c, k))).collect();
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    let list: Vec<String> = errs.iter().map(|(n, e)| format!("{n}={e:.1e}")).collect();
    report(
        2,
        worst <= 1e-4 && secs < 60.0,
        format!("gradient check max rel err {worst:.2e} (<= 1e-4) over {} configs [{}] in {secs:.1}s", errs.len(), list.join(", ")),
    )
}

fn criterion_3() -> Outcome {
    let cfg = StftConfig::default();
    let mut rng = SeededRng::new(303);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 200 + rng.below(8000);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let y = istft(&stft(&x, &cfg).unwrap(), &cfg, n).unwrap();
        worst = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    report(3, worst <= 1e-6, format!("STFT round trip max |err| {worst:.2e} (<= 1e-6) over 100 signals, every sample"))
}

fn criterion_4() -> Outcome {
    let mut rng = SeededRng::new(404);
    let mut identical = 0;
    let mut worst: f64 = 0.0;
    let mut state_match = true;
    for m in 0..20 {
        let cfg = NetworkConfig {
            input_dim: 3 + rng.below(6),
            proj_dim: 2 + rng.below(5),
            cell_dim: 2 + rng.below(6),
            num_recurrent_layers: 1 + rng.below(3),
            bidirectional: rng.below(2) == 0,
            input_scale: 1.0,
            init_range: 0.3,
            seed: 1000 + m,
            ..NetworkConfig::default()
        };
        let net = Network::new(cfg.clone()).unwrap();
        let t = 20 + rng.below(60);
        let x = random_matrix(&mut rng, t, cfg.input_dim, 0.0, 2.0);
        let whole = infer_utterance(&net, &x).unwrap();
        let one_chunk = infer_lc(&net, &x, &ChunkSpec::new(rng.below(5), t + rng.below(5), rng.below(5)).unwrap()).unwrap();
        if one_chunk.splice(&[]).unwrap() == whole {
            identical += 1;
        }

        let full = net.forward(&x, None, Mode::Infer, t).unwrap();
        let spec = ChunkSpec::new(2 + rng.below(4), 3 + rng.below(8), rng.below(6)).unwrap();
        let plan = plan_chunks(t, &spec).unwrap();
        let mut state = net.zero_state();
        let mut session = StreamSession::new(&net, spec, None);
        for view in plan.chunks() {
            let w = view.lc_window();
            let feats = x.slice_rows(w.clone());
            let pass = net.forward(&feats, Some(&state), Mode::Infer, view.main.len()).unwrap();
            let got = &pass.forward_hidden[0];
            for (k, tt) in view.main.clone().enumerate() {
                for (a, b) in got.row(k).iter().zip(full.forward_hidden[0].row(tt)) {
                    worst = worst.max((a - b).abs());
                }
            }
            state = pass.final_state;
            session.push(view, &feats).unwrap();
            state_match &= session.carried_state() == &state;
        }
    }
    report(
        4,
        identical == 20 && worst <= 1e-9 && state_match,
        format!(
            "LC degenerate equivalence {identical}/20 bit-identical; layer-1 forward continuity max |diff| {worst:.1e} (<= 1e-9)"
        ),
    )
}

fn criterion_5(rows: &[BenchRow]) -> Outcome {
    let got: Vec<f64> = rows.iter().map(|r| r.latency_ms).collect();
    let want = [0.0, 160.0, 400.0, 560.0, 800.0, 1600.0];
    report(5, got == want, format!("bench latency column {got:?} for nr {DEFAULT_NR_LIST:?} at 16 ms shift"))
}

fn criterion_6(rows: &[BenchRow], desk: &ChunkSpec) -> Outcome {
    let spec = ChunkSpec::new(50, 100, 50).unwrap();
    let cfg = NetworkConfig { input_dim: 4, proj_dim: 3, cell_dim: 3, ..NetworkConfig::default() };
    let net = Network::new(cfg).unwrap();
    let mut rng = SeededRng::new(606);
    let x = random_matrix(&mut rng, 700, 4, 0.0, 1.0);
    let lc = infer_lc(&net, &x, &spec).unwrap().frames_forwarded();
    let csc = infer_csc(&net, &x, &spec).unwrap().frames_forwarded();
    let interior = 1..lc.len() - 1;
    let savings: Vec<f64> = interior.clone().map(|i| 1.0 - lc[i] as f64 / csc[i] as f64).collect();
    let exact = savings.iter().all(|&s| s == 0.25) && compute_saving(&spec) == 0.25;
    let counters = interior.clone().all(|i| lc[i] == 150 && csc[i] == 200);
    let bench_ok = rows.iter().all(|r| {
        r.lc_interior_frames.is_none_or(|v| v == desk.main + r.right)
            && r.csc_interior_frames.is_none_or(|v| v == desk.left + desk.main + r.right)
    });
    report(
        6,
        exact && counters && bench_ok,
        format!(
            "interior chunks at (50,100,50): LC {} vs CSC {} frames, saving {:?} (== 0.25); bench counters LC=N+Nr, CSC=Nl+N+Nr: {bench_ok}",
            lc[1], csc[1], savings.first()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = SeededRng::new(707);
    let spec = ChunkSpec::default();
    let cfg = TraceConfig::default();
    let f = 16;
    let (mut eligible, mut recovered, mut total, mut correct) = (0usize, 0usize, 0usize, 0usize);
    let (mut silent, mut silent_keep) = (0usize, 0usize);
    for u in 0..500 {
        let t = 60 + rng.below(140);
        let gap_db = rng.uniform_in(0.0, 40.0);
        let gains = [1.0, 10f64.powf(-gap_db / 20.0)];
        let silent_span = if u % 10 == 0 {
            let s = rng.below(t / 2);
            s..s + t / 3
        } else {
            0..0
        };
        let truth: Vec<Matrix> = (0..2)
            .map(|k| {
                let band = if k == 0 { 0..f / 2 } else { f / 4..f };
                Matrix::from_fn(t, f, |tt, ff| {
                    if silent_span.contains(&tt) || !band.contains(&ff) {
                        0.0
                    } else {
                        gains[k] * (0.5 + 0.5 * ((tt as f64 * 0.3 + ff as f64 * (k + 1) as f64).sin()))
                    }
                })
            })
            .collect();
        let mix = Matrix::from_fn(t, f, |tt, ff| truth[0].get(tt, ff) + truth[1].get(tt, ff));
        let plan = plan_chunks(t, &spec).unwrap();
        let mut flipped = false;
        let mut flips = Vec::new();
        let chunks: Vec<ChunkOutput> = plan
            .chunks()
            .iter()
            .map(|view| {
                let flip = view.index > 0 && rng.uniform() < 0.3;
                flipped ^= flip;
                flips.push(flip);
                let window = view.csc_window();
                let noisy: Vec<Matrix> = truth
                    .iter()
                    .map(|s| {
                        Matrix::from_fn(window.len(), f, |tt, ff| {
                            let (y, x) = (mix.get(window.start + tt, ff), s.get(window.start + tt, ff));
                            if y > 0.0 {
                                (x / y * (1.0 + rng.uniform_in(-0.05, 0.05))).max(0.0)
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect();
                let order = if flipped { [1, 0] } else { [0, 1] };
                let masks = MaskSet::new(order.iter().map(|&k| noisy[k].clone()).collect()).unwrap();
                ChunkOutput { view: view.clone(), window, masks }
            })
            .collect();
        let decisions = trace_utterance(&chunks, &mix, ChunkMethod::Csc, &cfg).unwrap();
        for (b, d) in decisions.iter().enumerate() {
            let cur = &plan.chunks()[b + 1];
            let range = lcsep_core::tracer::overlap_region(&plan.chunks()[b], cur, ChunkMethod::Csc).unwrap();
            let energy = |k: usize| -> f64 {
                range.clone().map(|tt| truth[k].row(tt).iter().map(|v| v * v).sum::<f64>()).sum()
            };
            let (e0, e1) = (energy(0), energy(1));
            let truth_swap = flips[b + 1];
            total += 1;
            correct += usize::from(d.verdict.is_swap() == truth_swap);
            if e0 == 0.0 && e1 == 0.0 {
                silent += 1;
                silent_keep += usize::from(d.verdict == Verdict::Keep);
            } else if e0 > 0.0 && e1 > 0.0 && (10.0 * (e0 / e1).log10()).abs() >= 20.0 {
                eligible += 1;
                recovered += usize::from(d.verdict.is_swap() == truth_swap);
            }
        }
    }
    let rate = recovered as f64 / eligible.max(1) as f64;
    report(
        7,
        eligible > 0 && rate >= 0.99 && silent > 0 && silent_keep == silent,
        format!(
            "ST repair {recovered}/{eligible} = {:.2}% on >= 20 dB boundaries (>= 99%); silent overlaps keep {silent_keep}/{silent}; all boundaries {correct}/{total}",
            100.0 * rate
        ),
    )
}

fn criterion_10() -> Outcome {
    let s = TrainSchedule::default();
    let up = maybe_decay(&[1.0, 1.1], 0.0005, &s);
    let down = maybe_decay(&[1.0, 0.9], 0.0005, &s);
    let flat = maybe_decay(&[1.0, 1.0], 0.0005, &s);
    let single = maybe_decay(&[1.0], 0.0005, &s);
    let pass = up == 0.0005 * 0.7 && (up - 0.00035).abs() < 1e-18 && down == 0.0005 && flat == 0.0005 && single == 0.0005;
    report(10, pass, format!("maybe_decay: rise 0.0005 -> {up}, fall -> {down}, flat -> {flat}, single -> {single}"))
}

struct SeedRun {
    seed: u64,
    upit: Network,
    cpit: Network,
    upit_secs: f64,
}

fn mean_improvement(net: &Network, cfg: &RunConfig, utts: &[Utterance], method: Method, st: bool) -> f64 {
    let seps = separate_all(net, cfg, utts, method, st).unwrap();
    score(utts, &seps).unwrap().mean_improvement()
}

fn main() {
    let start = Instant::now();
    let mut outcomes = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_7(), criterion_10()];

    let dir = tempfile::tempdir().expect("temp dir");
    let mut base = RunConfig::default();
    base.paths.corpus = dir.path().to_path_buf();
    build_corpus(&CorpusConfig::default(), base.seed, dir.path()).expect("corpus");
    let manifest = lcsep::data::load_manifest(dir.path()).unwrap();
    let [train_utts, valid_utts, test_utts] = Split::ALL.map(|s| load_split(&base, &manifest, s).unwrap());
    let prep = |u: &[Utterance]| u.iter().map(|x| x.prepared.clone()).collect::<Vec<_>>();
    let (train_prep, valid_prep) = (prep(&train_utts), prep(&valid_utts));
    println!(
        "corpus: {} train / {} valid / {} test mixtures; training {} models on one thread each",
        train_utts.len(),
        valid_utts.len(),
        test_utts.len(),
        2 * SEEDS.len()
    );

    let runs: Vec<SeedRun> = std::thread::scope(|scope| {
        let handles: Vec<_> = SEEDS
            .iter()
            .map(|&seed| {
                let mut cfg = base.clone();
                cfg.seed = seed;
                cfg.network.seed = seed;
                let (tp, vp) = (&train_prep, &valid_prep);
                let up = {
                    let cfg = cfg.clone();
                    scope.spawn(move || {
                        let t0 = Instant::now();
                        let net = train(&cfg, TrainMode::Upit, tp, vp, None).expect("upit training").network;
                        (net, t0.elapsed().as_secs_f64())
                    })
                };
                let cp = scope.spawn(move || train(&cfg, TrainMode::Cpit, tp, vp, None).expect("cpit training").network);
                (seed, up, cp)
            })
            .collect();
        handles
            .into_iter()
            .map(|(seed, up, cp)| {
                let (upit, upit_secs) = up.join().unwrap();
                SeedRun { seed, upit, cpit: cp.join().unwrap(), upit_secs }
            })
            .collect()
    });

    // Criterion 8 on the first seed.
    let first = &runs[0];
    let trained = mean_improvement(&first.upit, &base, &train_utts, Method::Utt, false);
    let stft = lcsep_core::dsp::Stft::new(&base.stft).unwrap();
    let oracle = {
        let mut sum = 0.0;
        for u in &train_utts {
            let est = u.prepared.reconstruct(&stft, &u.prepared.oracle_masks().unwrap()).unwrap();
            sum += lcsep_core::evalkit::eval_pair(&est, &u.audio.sources, &u.audio.mixture).unwrap().mean_improvement();
        }
        sum / train_utts.len() as f64
    };
    outcomes.push(report(
        8,
        trained >= 5.0 && oracle > trained,
        format!(
            "toy uPIT training ({} epochs, seed {}): train-split improvement {trained:.2} dB (>= 5), oracle {oracle:.2} dB (> model); training took {:.0}s wall clock sharing one core with {} other runs",
            base.train.epochs,
            first.seed,
            first.upit_secs,
            2 * SEEDS.len() - 1
        ),
    ));

    // Criterion 9 and the bench-based criteria.
    let n = runs.len() as f64;
    let (mut a_u, mut a_c, mut b_lc, mut b_csc, mut c_st) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut sweep = vec![0.0; DEFAULT_NR_LIST.len()];
    let mut first_bench = Vec::new();
    let (mut lc_swaps, mut csc_swaps) = (0, 0);
    for r in &runs {
        a_u += mean_improvement(&r.upit, &base, &test_utts, Method::Lc, true) / n;
        a_c += mean_improvement(&r.cpit, &base, &test_utts, Method::Lc, true) / n;
        b_lc += mean_improvement(&r.upit, &base, &test_utts, Method::Lc, false) / n;
        b_csc += mean_improvement(&r.upit, &base, &test_utts, Method::Csc, false) / n;
        c_st += mean_improvement(&r.upit, &base, &test_utts, Method::Csc, true) / n;
        let rows = bench(&r.upit, &base, &test_utts, &DEFAULT_NR_LIST, true).unwrap();
        for (acc, row) in sweep.iter_mut().zip(&rows) {
            *acc += row.lc_improvement_db / n;
        }
        if first_bench.is_empty() {
            first_bench = rows;
        }
        let count = |m| -> usize {
            separate_all(&r.upit, &base, &test_utts, m, true).unwrap().iter().map(|s| s.separation.swaps()).sum()
        };
        lc_swaps += count(Method::Lc);
        csc_swaps += count(Method::Csc);
    }
    let a = a_u >= a_c - SLACK_DB;
    let b = b_lc >= b_csc - SLACK_DB;
    let c = c_st >= b_csc - SLACK_DB;
    let d = sweep.windows(2).all(|w| w[1] >= w[0] - SLACK_DB);
    let sweep_s: Vec<String> = sweep.iter().map(|v| format!("{v:.2}")).collect();
    outcomes.push(report(
        9,
        a && b && c && d,
        format!(
            "ordinal checks over seeds {SEEDS:?} (slack {SLACK_DB} dB): (a) uPIT {a_u:.2} vs cPIT {a_c:.2} under LC+ST [{}]; \
             (b) LC {b_lc:.2} vs CSC {b_csc:.2} [{}]; (c) CSC+ST {c_st:.2} vs CSC {b_csc:.2} [{}]; \
             (d) LC+ST by nr {DEFAULT_NR_LIST:?} = [{}] [{}]",
            pass_word(a),
            pass_word(b),
            pass_word(c),
            sweep_s.join(", "),
            pass_word(d)
        ),
    ));
    outcomes.push(criterion_5(&first_bench));
    outcomes.push(criterion_6(&first_bench, &base.chunk));
    println!("note: swap verdicts on the test split with tracing, summed over seeds: LC {lc_swaps}, CSC {csc_swaps}");

    outcomes.sort_by_key(|o| o.id);
    println!("summary ({:.0}s):", start.elapsed().as_secs_f64());
    for o in &outcomes {
        println!("  criterion {:>2} {}", o.id, if o.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    if !failed.is_empty() {
        for o in &failed {
            eprintln!("failed criterion {}: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "VIOLATED"
    }
}
