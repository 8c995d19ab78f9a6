use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dualcart::cache;
use dualcart::pipeline::{read_manifest, CACHE, EVAL_TSV, MODEL, RUN_MANIFEST, VOCAB_MANIFEST};
use dualcart::snapshot;
use dualcart_core::rank::rank_by_complement;
use dualcart_core::Query;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dualcart"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic corpus; returns its config path.
fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec!["synth", "--out", s(&data), "--items", "80", "--users", "300", "--pairs", "15", "--combos", "3"];
    args.extend_from_slice(extra);
    ok(&args);
    data.join("run.conf")
}

fn prepare_and_train(dir: &Path, sets: &[&str]) -> PathBuf {
    let conf = synth(dir, &[]);
    let out = dir.join("run");
    ok(&["prepare", "--out", s(&out), "--config", s(&conf)]);
    let mut args = vec!["train", "--out", s(&out), "--set", "epochs=4", "--set", "dim=8", "--set", "user_dim=8"];
    for kv in sets {
        args.push("--set");
        args.push(kv);
    }
    ok(&args);
    out
}

fn manifest_value(path: &Path, key: &str) -> String {
    read_manifest(&fs::read_to_string(path).unwrap())
        .into_iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .unwrap_or_else(|| panic!("{key} missing from {}", path.display()))
}

#[test]
fn toy_fixture_manifest_counts() {
    let dir = tempfile::tempdir().unwrap();
    let orders = dir.path().join("orders.tsv");
    fs::write(
        &orders,
        "u1\to1\t10\ta\nu1\to1\t10\tb\nu1\to2\t20\tc\nu2\to3\t15\ta\nu2\to3\t15\tc\nu3\to4\t30\td\n",
    )
    .unwrap();
    let items = dir.path().join("items.tsv");
    fs::write(&items, "a\tred fruit\nb\tred\nc\tgreen leaf\nz\tunused\n").unwrap();
    let out = dir.path().join("run");
    ok(&[
        "prepare",
        "--out",
        s(&out),
        "--set",
        &format!("orders={}", s(&orders)),
        "--set",
        &format!("item_context={}", s(&items)),
        "--set",
        "min_transactions=1",
    ]);
    let m = out.join(VOCAB_MANIFEST);
    assert_eq!(manifest_value(&m, "items"), "4");
    assert_eq!(manifest_value(&m, "users"), "3");
    // red, fruit, green, leaf; `unused` belongs to an item with no purchases
    assert_eq!(manifest_value(&m, "item_tokens"), "4");
    assert_eq!(manifest_value(&m, "user_tokens"), "0");
    assert_eq!(manifest_value(&m, "train_events"), "6");
}

#[test]
fn prepare_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let conf = synth(dir.path(), &[]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["prepare", "--out", s(&a), "--config", s(&conf)]);
    ok(&["prepare", "--out", s(&b), "--config", s(&conf)]);
    assert_eq!(fs::read(a.join(VOCAB_MANIFEST)).unwrap(), fs::read(b.join(VOCAB_MANIFEST)).unwrap());
    assert_eq!(fs::read(a.join(CACHE)).unwrap(), fs::read(b.join(CACHE)).unwrap());
}

#[test]
fn train_is_seed_deterministic_and_ablation_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare_and_train(dir.path(), &[]);
    let first = fs::read(out.join(MODEL)).unwrap();
    ok(&["train", "--out", s(&out)]);
    assert_eq!(fs::read(out.join(MODEL)).unwrap(), first);

    ok(&["train", "--out", s(&out), "--set", "use_user_bias=false"]);
    let (_, h_ablated) = snapshot::load(&out.join(MODEL)).unwrap();
    let (_, h_full) = snapshot::read_from(&mut first.as_slice(), Path::new("mem")).unwrap();
    assert_ne!(h_ablated, h_full);
}

#[test]
fn training_beats_zero_embedding_sequence_loss() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare_and_train(dir.path(), &[]);
    // zero embeddings give ln 2 per logistic term: one positive and 5 negatives
    let baseline = 6.0 * std::f64::consts::LN_2;
    let last = manifest_value(&out.join(RUN_MANIFEST), "epoch_4");
    let seq: f64 = last.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(seq < baseline, "sequence loss {seq} vs {baseline}");
}

#[test]
fn recommend_matches_library_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare_and_train(dir.path(), &[]);
    let stdout = ok(&["recommend", "--out", s(&out), "--context", "i3,i7", "--k", "6"]);

    let p = cache::load(&out.join(CACHE)).unwrap();
    let (store, _) = snapshot::load(&out.join(MODEL)).unwrap();
    let ctx = vec![p.vocab.items.get("i3").unwrap(), p.vocab.items.get("i7").unwrap()];
    let ranked = rank_by_complement(&Query::new(ctx, 6), &store, None).unwrap();
    let mut expected = String::from("rank\titem_id\tscore\n");
    for (r, (i, sc)) in ranked.0.iter().enumerate() {
        expected.push_str(&format!("{}\t{}\t{sc}\n", r + 1, p.vocab.items.name(*i)));
    }
    assert_eq!(stdout, expected);

    let two = ok(&["recommend", "--out", s(&out), "--context", "i3", "--user", "u5", "--mode", "two-stage", "--pool", "20", "--k", "3"]);
    assert_eq!(two.lines().count(), 4);
    let allow = dir.path().join("allow.txt");
    fs::write(&allow, "i10\ni11\nnot_an_item\n").unwrap();
    let only = ok(&["recommend", "--out", s(&out), "--context", "i3", "--allow", s(&allow)]);
    let ids: Vec<&str> = only.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(ids.len(), 2);
    assert!(ids.iter().all(|i| *i == "i10" || *i == "i11"));
}

#[test]
fn evaluate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare_and_train(dir.path(), &[]);
    // category tokens double as labels
    let items = fs::read_to_string(dir.path().join("data/items.tsv")).unwrap();
    let labels: String = items
        .lines()
        .map(|l| {
            let (id, toks) = l.split_once('\t').unwrap();
            format!("{id}\t{}\n", toks.split(' ').next().unwrap())
        })
        .collect();
    let lp = dir.path().join("labels.tsv");
    fs::write(&lp, labels).unwrap();
    let report = ok(&["evaluate", "--out", s(&out), "--task", "all", "--set", &format!("labels={}", s(&lp))]);
    assert!(report.contains("within_basket_auc="), "{report}");
    assert!(report.contains("classification_micro_f1="), "{report}");
    assert!(report.contains("next_purchase=skipped"), "{report}");
    let tsv = fs::read_to_string(out.join(EVAL_TSV)).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split('\t').count(), lines[1].split('\t').count());

    let o = run(&["evaluate", "--out", s(&out), "--task", "next_purchase"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn next_purchase_under_time_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let conf = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    // synthetic orders are spaced 1-7 days apart starting at day 0
    let day = 86_400;
    ok(&[
        "prepare",
        "--out",
        s(&out),
        "--config",
        s(&conf),
        "--set",
        "split=time_cutoff",
        "--set",
        &format!("train_end={}", 30 * day),
        "--set",
        &format!("valid_end={}", 40 * day),
        "--set",
        "d1=10",
    ]);
    ok(&["train", "--out", s(&out), "--set", "epochs=3", "--set", "dim=8", "--set", "user_dim=8"]);
    let report = ok(&["evaluate", "--out", s(&out), "--task", "next_purchase", "--set", "rank_mode=two-stage"]);
    assert!(report.contains("next_purchase_hit@10="), "{report}");
    assert!(report.contains("next_purchase_mode=two-stage"), "{report}");
}

#[test]
fn infer_cold_writes_fragment_usable_by_recommend() {
    let dir = tempfile::tempdir().unwrap();
    let out = prepare_and_train(dir.path(), &[]);
    let items = fs::read_to_string(dir.path().join("data/items.tsv")).unwrap();
    let toks = items.lines().next().unwrap().split_once('\t').unwrap().1.to_string();
    let cold = dir.path().join("cold.tsv");
    fs::write(&cold, format!("newitem\t{toks} mystery\nghost\tnothing known\n")).unwrap();
    let o = run(&["infer-cold", "--out", s(&out), "--items", s(&cold)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mystery"), "{err}");
    assert!(err.contains("ghost"), "{err}");
    let frag = out.join("cold.cemb");
    assert_eq!(dualcart::snapshot::Fragment::load(&frag).unwrap().items.len(), 1);
    let r = ok(&["recommend", "--out", s(&out), "--context", "newitem", "--cold", s(&frag), "--k", "3"]);
    assert_eq!(r.lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = run(&["prepare", "--out", s(&dir.path().join("r")), "--set", &format!("orders={}", s(&missing))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(s(&missing)));

    let o = run(&["prepare", "--out", s(&dir.path().join("r")), "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--out", s(&dir.path().join("empty"))]).status.code(), Some(2));

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "u\to\tnot-a-time\ti\n").unwrap();
    let o = run(&["prepare", "--out", s(&dir.path().join("r")), "--set", &format!("orders={}", s(&bad))]);
    assert_eq!(o.status.code(), Some(1));

    let out = prepare_and_train(dir.path(), &[]);
    fs::write(out.join(MODEL), b"garbage").unwrap();
    let o = run(&["recommend", "--out", s(&out), "--context", "i1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_lists_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        ("prepare", &["--out", "--config", "--set", "--threads", "--seed", "--from-instacart"]),
        ("train", &["--out", "--config", "--set", "--threads", "--seed"]),
        ("evaluate", &["--out", "--task", "--threads"]),
        ("recommend", &["--context", "--user", "--k", "--pool", "--mode", "--allow", "--cold"]),
        ("infer-cold", &["--items", "--output", "--out"]),
        ("synth", &["--out", "--items", "--users", "--pairs", "--combos", "--strength", "--noise", "--combo-rate", "--reciprocal", "--seed"]),
    ];
    let top = ok(&["--help"]);
    for (cmd, flags) in cases {
        assert!(top.contains(cmd), "{cmd} missing from top-level help");
        let h = ok(&[cmd, "--help"]);
        for f in *flags {
            assert!(h.contains(f), "{cmd} --help lacks {f}");
        }
    }
}
