use std::path::{Path, PathBuf};

use lcsep::checkpoint::Checkpoint;
use lcsep::cli::main_with;
use lcsep::config::{Overrides, RunConfig};
use lcsep::corpus::{build_corpus, corpus_digest, load_record, CorpusConfig};
use lcsep::manifest::{Manifest, Split, MANIFEST_FILE};
use lcsep::separate::{cmd_separate, Method};
use lcsep::train::{cmd_train, TrainMode};
use lcsep_core::chunker::plan_chunks;

fn small_corpus() -> CorpusConfig {
    CorpusConfig { train: 10, valid: 3, test: 3, ..CorpusConfig::default() }
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        "{extra}\n[corpus]\ntrain = 10\nvalid = 3\ntest = 3\n[train]\nepochs = 1\n"
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("lcsep").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[test]
fn corpus_is_reproducible_exact_and_on_target() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("x/a"), tmp.path().join("x/b"), tmp.path().join("c"));
    let cfg = small_corpus();
    let manifest = build_corpus(&cfg, 4, &a).unwrap();
    build_corpus(&cfg, 4, &b).unwrap();
    build_corpus(&cfg, 5, &c).unwrap();
    assert_eq!(corpus_digest(&a).unwrap(), corpus_digest(&b).unwrap());
    assert_ne!(corpus_digest(&a).unwrap(), corpus_digest(&c).unwrap());
    assert_eq!(Manifest::load(a.join(MANIFEST_FILE)).unwrap(), manifest);

    for r in &manifest.records {
        let audio = load_record(&a, r).unwrap();
        assert_eq!(audio.sources.len(), 2);
        for (t, m) in audio.mixture.iter().enumerate() {
            assert_eq!(*m, audio.sources[0][t] + audio.sources[1][t], "{} sample {t}", r.id);
        }
        let snr = 10.0 * (energy(&audio.sources[0]) / energy(&audio.sources[1])).log10();
        assert!((snr - r.snr_db).abs() <= 0.01, "{}: {snr} vs {}", r.id, r.snr_db);
        assert!((0.0..=5.0).contains(&r.snr_db));
    }
}

#[test]
fn default_corpus_has_280_mixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    assert_eq!(run(&["mix", "--out", s(&out)]), 0);
    let m = Manifest::load(out.join(MANIFEST_FILE)).unwrap();
    let counts: Vec<usize> = Split::ALL.iter().map(|&sp| m.split(sp).count()).collect();
    assert_eq!(counts, [200, 40, 40]);
    assert_eq!(std::fs::read_dir(out.join("wav")).unwrap().count(), 280 * 3);
}

#[test]
fn training_is_deterministic_and_checkpoints_load() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let cfg_plain = write_config(tmp.path(), "");
    assert_eq!(run(&["mix", "--config", s(&cfg_plain), "--out", s(&corpus)]), 0);

    let train = |name: &str, extra: &str| {
        let dir = tmp.path().join(name);
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = write_config(&dir, extra);
        let out = dir.join("run");
        assert_eq!(run(&["train", "--config", s(&cfg), "--corpus", s(&corpus), "--out", s(&out)]), 0);
        out
    };
    let a = train("a", "");
    let b = train("b", "");
    let par = train("par", "parallel_batches = true");
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(a.join("loss.csv")), read(b.join("loss.csv")));
    assert_eq!(read(a.join("loss.csv")), read(par.join("loss.csv")));
    assert_eq!(read(a.join("epoch_001.ckpt")), read(par.join("epoch_001.ckpt")));

    let ck = Checkpoint::load(a.join("epoch_001.ckpt")).unwrap();
    assert_eq!(ck.epoch, 1);
    assert_eq!(ck.network().unwrap().config().input_dim, 129);
    let log = String::from_utf8(read(a.join("loss.csv"))).unwrap();
    assert!(log.starts_with("epoch,train_loss,valid_loss,lr\n"));
    assert_eq!(log.lines().count(), 2);
}

#[test]
fn chunk_batches_pad_only_edge_chunks() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.corpus = small_corpus();
    cfg.paths.corpus = tmp.path().join("corpus");
    cfg.paths.out = tmp.path().join("run");
    cfg.train.epochs = 1;
    let manifest = build_corpus(&cfg.corpus, cfg.seed, &cfg.paths.corpus).unwrap();
    let outcome = cmd_train(&cfg, TrainMode::Cpit).unwrap();

    let span = cfg.chunk.span();
    let (mut chunks, mut edge) = (0, 0);
    for r in manifest.split(Split::Train) {
        let n = load_record(&cfg.paths.corpus, r).unwrap().mixture.len();
        let plan = plan_chunks(cfg.stft.frame_count(n), &cfg.chunk).unwrap();
        chunks += plan.len();
        for (i, v) in plan.chunks().iter().enumerate() {
            if v.csc_window().len() != span {
                assert!(i == 0 || i + 1 >= plan.len() - 1, "interior chunk {i} is short");
                edge += 1;
            }
        }
    }
    let shapes = &outcome.shapes;
    assert_eq!(shapes.iter().map(|b| b.items).sum::<usize>(), chunks);
    assert_eq!(shapes.iter().map(|b| b.items - b.full_span).sum::<usize>(), edge);
    assert!(shapes.iter().all(|b| b.max_frames <= span && b.items <= cfg.cpit.batch_chunks));
    assert!(std::fs::read_to_string(cfg.paths.out.join("batches.csv")).unwrap().lines().count() > 1);
}

#[test]
fn separation_engines_reports_and_scoring() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let config = write_config(tmp.path(), "");
    assert_eq!(run(&["mix", "--config", s(&config), "--out", s(&corpus)]), 0);
    let train_out = tmp.path().join("run");
    assert_eq!(run(&["train", "--config", s(&config), "--corpus", s(&corpus), "--out", s(&train_out)]), 0);
    let ck = train_out.join("epoch_001.ckpt");

    let sep = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["separate", "--config", s(&config), "--corpus", s(&corpus), "--checkpoint", s(&ck)];
        args.extend_from_slice(&["--out", s(&out)]);
        args.extend_from_slice(extra);
        assert_eq!(run(&args), 0, "{extra:?}");
        out
    };
    let utt = sep("utt", &["--method", "utt"]);
    let lc_whole = sep("lcw", &["--method", "lc", "--n", "100000"]);
    let csc = sep("csc", &["--method", "csc", "--st"]);
    for id in ["test_0000", "test_0001", "test_0002"] {
        for k in 1..=2 {
            let f = format!("wav/{id}_est{k}.wav");
            assert_eq!(std::fs::read(utt.join(&f)).unwrap(), std::fs::read(lc_whole.join(&f)).unwrap());
        }
    }
    let report = std::fs::read_to_string(csc.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3);
    let chunks: usize = report.lines().skip(1).map(|l| l.split(',').nth(5).unwrap().parse::<usize>().unwrap()).sum();
    let bounds = std::fs::read_to_string(csc.join("boundaries.csv")).unwrap();
    assert_eq!(bounds.lines().count(), 1 + chunks - 3);

    let mut cfg = RunConfig::resolve(Some(&config), &Overrides::default()).unwrap();
    cfg.paths.corpus = corpus.clone();
    cfg.paths.out = tmp.path().join("lc0");
    cfg.chunk.right = 0;
    let summary = cmd_separate(&cfg, &ck, Split::Test, Method::Lc, true).unwrap();
    assert!(summary.warning.is_some());
    assert_eq!(summary.boundaries, 0);

    let ev = tmp.path().join("eval");
    let args = ["eval", "--config", s(&config), "--corpus", s(&corpus), "--separated", s(&csc), "--out", s(&ev)];
    assert_eq!(run(&args), 0);
    assert_eq!(std::fs::read_to_string(ev.join("eval.csv")).unwrap().lines().count(), 4);
    assert!(std::fs::read_to_string(ev.join("summary.csv")).unwrap().contains("\nall,3,"));

    let bench = tmp.path().join("bench");
    let args = ["bench", "--config", s(&config), "--corpus", s(&corpus), "--checkpoint", s(&ck), "--nr-list", "0,10"];
    assert_eq!(run(&[&args[..], &["--out", s(&bench)]].concat()), 0);
    let table = std::fs::read_to_string(bench.join("bench.csv")).unwrap();
    let latency: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(latency, ["0", "160"]);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["train", "--no-such-flag"]), 1);
    assert_eq!(run(&["separate", "--checkpoint", "x", "--method", "sideways"]), 1);
    assert_eq!(run(&["separate", "--checkpoint", "x", "--alpha", "0.5"]), 1);
    let missing = tmp.path().join("nowhere");
    assert_eq!(run(&["train", "--corpus", s(&missing), "--out", s(&tmp.path().join("o"))]), 2);

    let corpus = tmp.path().join("corpus");
    let config = write_config(tmp.path(), "");
    assert_eq!(run(&["mix", "--config", s(&config), "--out", s(&corpus)]), 0);
    let bad = corpus.join("wav/test_0000_mix.wav");
    std::fs::write(&bad, b"RIFF\x00\x00\x00\x00WAVX").unwrap();
    let out = tmp.path().join("t");
    assert_eq!(run(&["train", "--config", s(&config), "--corpus", s(&corpus), "--out", s(&out)]), 0);
    let ck_path = out.join("epoch_001.ckpt");
    let sep_out = tmp.path().join("sep");
    let sep = |ck: &Path| {
        run(&["separate", "--config", s(&config), "--corpus", s(&corpus), "--checkpoint", s(ck), "--out", s(&sep_out)])
    };
    assert_eq!(sep(&ck_path), 2, "malformed test WAV");

    assert_eq!(run(&["mix", "--config", s(&config), "--out", s(&corpus)]), 0);
    let mut ck = Checkpoint::load(&ck_path).unwrap();
    ck.params[0] = f64::NAN;
    let nan_path = tmp.path().join("nan.ckpt");
    ck.save(&nan_path).unwrap();
    assert_eq!(sep(&nan_path), 3);
    assert_eq!(sep(&ck_path), 0);
}
