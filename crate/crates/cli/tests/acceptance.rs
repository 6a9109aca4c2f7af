//! Acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion that all of them passed.
#![allow(clippy::single_range_in_vec_init)]

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use misinfo_core::analysis::{signed_log_odds, welch_ttest};
use misinfo_core::corpus::spans_to_bio;
use misinfo_core::cure::{detect_cure_anchor, CureConfig, CureLexicon, PROVEN_CURES};
use misinfo_core::embeddings::{cosine, train_skipgram, train_skipgram_with_losses, SkipgramConfig};
use misinfo_core::neural::{bce_loss, check_gradients, logsumexp, DenseNet, OutputActivation, Params, GRADCHECK_STEP};
use misinfo_core::relevance::{fit_tfidf, sentence_vector, tfidf_vector};
use misinfo_core::tagger::{crf_log_partition, extract_anchors, viterbi_decode, CrfLayer, TaggerNet, TaggerVariant};
use misinfo_core::{BioTag, Category, EmbeddingTable, Tweet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- fixtures

const XS: [&str; 10] = ["red", "processed", "burnt", "smoked", "cured", "fried", "charred", "salted", "grilled", "canned"];
const YS: [&str; 10] = ["meat", "toast", "fish", "bacon", "ham", "sugar", "chips", "soda", "beef", "pork"];
const FILLER: [&str; 12] = ["sunny", "rainy", "windy", "day", "at", "the", "beach", "park", "lovely", "weather", "again", "today"];

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn write_embeddings(path: &Path, dim: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<&str> = XS.iter().chain(&YS).chain(&FILLER).chain(&["causes", "cures", "cancer", "health"]).copied().collect();
    let mut text = format!("{} {dim}\n", words.len());
    for w in words {
        let v: Vec<String> = (0..dim).map(|_| format!("{:.6}", gaussian(&mut rng))).collect();
        text.push_str(&format!("{w} {}\n", v.join(" ")));
    }
    fs::write(path, text).unwrap();
}

/// "X Y causes cancer" (or "cures") with the anchor on "X Y".
fn planted(rng: &mut ChaCha8Rng, id: &str, category: Category, misinfo: bool) -> Value {
    let anchor = format!("{} {}", XS[rng.gen_range(0..10)], YS[rng.gen_range(0..10)]);
    let verb = if category == Category::Cure { "cures" } else { "causes" };
    json!({
        "id": id,
        "text": format!("{anchor} {verb} cancer"),
        "category": category.as_str(),
        "relevant": true,
        "anchors": [[0, anchor.len()]],
        "misinfo": misinfo,
    })
}

fn unrelated(rng: &mut ChaCha8Rng, id: &str, category: Category) -> Value {
    let text: Vec<&str> = (0..5).map(|_| FILLER[rng.gen_range(0..FILLER.len())]).collect();
    json!({ "id": id, "text": text.join(" "), "category": category.as_str(), "relevant": false })
}

fn write_jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    fs::write(path, text).unwrap();
}

fn write_manifest(path: &Path, rows: &[Value], n_train: usize) {
    let ids: Vec<&str> = rows.iter().map(|r| r["id"].as_str().unwrap()).collect();
    let m = json!({ "seed": 0, "train_ids": ids[..n_train], "val_ids": ids[n_train..] });
    fs::write(path, m.to_string()).unwrap();
}

fn misinfo(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_misinfo"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "misinfo {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

// ---------------------------------------------------------------- criteria

fn all_paths(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| (0..3).map(move |k| [p.clone(), vec![k]].concat()))
            .collect();
    }
    out
}

fn brute_score(em: &[Vec<f64>], crf: &CrfLayer, path: &[usize]) -> f64 {
    let mut s = crf.start_score(path[0]) + em[0][path[0]];
    for t in 1..path.len() {
        s += crf.transition(path[t - 1], path[t]) + em[t][path[t]];
    }
    s + crf.end_score(path[path.len() - 1])
}

fn well_formed(path: &[usize]) -> bool {
    // I is index 1, O is index 2
    path[0] != 1 && path.windows(2).all(|w| !(w[0] == 2 && w[1] == 1))
}

fn crf_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.gen_range(1..=6);
        let em: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let mut crf = CrfLayer::zeros();
        for (_, m) in crf.params_mut() {
            for x in m.data_mut() {
                *x = rng.gen_range(-2.0..2.0);
            }
        }
        let paths = all_paths(n);
        let scores: Vec<f64> = paths.iter().map(|p| brute_score(&em, &crf, p)).collect();
        let z = crf_log_partition(&em, &crf).map_err(|e| e.to_string())?;
        let err = (z - logsumexp(&scores)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-8, format!("case {case}: log partition off by {err:e}"))?;
        let best = paths
            .iter()
            .zip(&scores)
            .filter(|(p, _)| well_formed(p))
            .fold(None::<(&Vec<usize>, f64)>, |acc, (p, &s)| match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((p, s)),
            })
            .unwrap()
            .0;
        let decoded: Vec<usize> = viterbi_decode(&em, &crf).map_err(|e| e.to_string())?.iter().map(|t| t.index()).collect();
        ensure(&decoded == best, format!("case {case}: viterbi {decoded:?}, enumeration {best:?}"))?;
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("100 instances, max |logZ error| {worst:.1e}, {:.2?}", start.elapsed()))
}

fn gradient_audit() -> Outcome {
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let words = ["red", "meat", "causes", "cancer", "sun", "cures", "tea"];
    let pick = |rng: &mut ChaCha8Rng| -> Vec<&str> { (0..3).map(|_| words[rng.gen_range(0..words.len())]).collect() };
    let mut summary = Vec::new();

    let dim = 6;
    let emb = EmbeddingTable::from_rows(dim, words.iter().map(|w| (*w, (0..dim).map(|_| gaussian(&mut rng)).collect()))).unwrap();
    // every word gets a tfidf column, so no input collapses to the zero
    // vector where all ReLUs would sit on their kink
    let mut docs: Vec<Vec<&str>> = words.chunks(3).map(<[&str]>::to_vec).collect();
    docs.extend((0..3).map(|_| pick(&mut rng)));
    let tfidf = fit_tfidf(&docs).unwrap();
    let net = DenseNet::new(&[dim, 8, 6, 4, 1], OutputActivation::Sigmoid, &mut rng);
    let mut worst = 0.0f64;
    for case in 0..5 {
        let x = sentence_vector(&tfidf, &emb, &pick(&mut rng));
        let y = f64::from(case % 2 == 0);
        let trace = net.forward_trace(&x).unwrap();
        let mut grad = net.zeroed();
        net.backward(&trace, &[trace.output[0] - y], &mut grad);
        let r = check_gradients(&net, &grad, GRADCHECK_STEP, |n| bce_loss(n.forward(&x).unwrap()[0], y));
        worst = worst.max(r.max_rel_error);
    }
    ensure(worst < TOL, format!("relevance FFN max rel error {worst:e}"))?;
    summary.push(format!("ffn {worst:.1e}"));

    for variant in TaggerVariant::ALL {
        let net = TaggerNet::new(variant, 5, 4, &mut rng);
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let inputs: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| gaussian(&mut rng)).collect()).collect();
            let gold: Vec<BioTag> = [[0, 1, 2], [2, 0, 1], [0, 2, 2], [2, 2, 0], [0, 0, 1]][rng.gen_range(0..5)]
                .iter()
                .map(|&i| BioTag::from_index(i).unwrap())
                .collect();
            let mut grad = net.zeroed();
            net.loss_and_grad(&inputs, &gold, &mut grad).map_err(|e| e.to_string())?;
            let r = check_gradients(&net, &grad, GRADCHECK_STEP, |n| n.loss(&inputs, &gold).unwrap());
            worst = worst.max(r.max_rel_error);
        }
        ensure(worst < TOL, format!("{} max rel error {worst:e}", variant.as_str()))?;
        summary.push(format!("{} {worst:.1e}", variant.as_str()));
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("{} ({:.2?})", summary.join(", "), start.elapsed()))
}

fn overfit(dir: &Path) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    write_embeddings(&dir.join("emb.txt"), 16, 5);

    let tagged: Vec<Value> = (0..60).map(|i| planted(&mut rng, &format!("a{i}"), Category::Cause, i % 2 == 0)).collect();
    write_jsonl(&dir.join("planted.jsonl"), &tagged);
    write_manifest(&dir.join("planted_split.json"), &tagged, 50);
    misinfo(
        dir,
        &[
            "train-tagger", "--in", "planted.jsonl", "--split", "planted_split.json", "--variant", "attn-bilstm-crf",
            "--embeddings", "emb.txt", "--hidden", "16", "--epochs", "50", "--batch-size", "8",
            "--learning-rate", "0.01", "--patience", "50", "--seed", "1", "--out", "tagger.json",
        ],
    )?;
    misinfo(
        dir,
        &["eval-tagger", "--in", "planted.jsonl", "--split", "planted_split.json", "--model", "tagger.json", "--embeddings", "emb.txt", "--out", "planted_eval.json"],
    )?;
    let span_f1 = read_json(&dir.join("planted_eval.json"))["rows"][0]["span_f1"].as_f64().unwrap();
    ensure(span_f1 >= 0.95, format!("tagger span F1 {span_f1:.4} < 0.95"))?;

    let mut rel = Vec::new();
    for i in 0..60 {
        rel.push(planted(&mut rng, &format!("r{i}"), Category::Cause, false));
        rel.push(unrelated(&mut rng, &format!("u{i}"), Category::Cause));
    }
    write_jsonl(&dir.join("separable.jsonl"), &rel);
    write_manifest(&dir.join("separable_split.json"), &rel, 100);
    misinfo(
        dir,
        &[
            "train-relevance", "--in", "separable.jsonl", "--split", "separable_split.json", "--mode", "tfidf",
            "--epochs", "30", "--seed", "1", "--out", "relevance.json",
        ],
    )?;
    misinfo(
        dir,
        &["eval-relevance", "--in", "separable.jsonl", "--split", "separable_split.json", "--model", "relevance.json", "--out", "separable_eval.json"],
    )?;
    let acc = read_json(&dir.join("separable_eval.json"))["rows"][0]["accuracy"].as_f64().unwrap();
    ensure(acc >= 0.95, format!("relevance accuracy {acc:.4} < 0.95"))?;
    within(start.elapsed(), Duration::from_secs(180))?;
    Ok(format!("span F1 {span_f1:.4}, relevance accuracy {acc:.4}, {:.2?}", start.elapsed()))
}

fn tfidf_oracle() -> Outcome {
    let docs = vec![vec!["cancer", "cure"], vec!["cancer", "cause"], vec!["meat", "meat"]];
    let m = fit_tfidf(&docs).map_err(|e| e.to_string())?;
    let expect = [("cancer", 1.2877), ("cure", 1.6931), ("cause", 1.6931), ("meat", 1.6931)];
    for (w, v) in expect {
        let got = m.idf(w).ok_or(format!("{w} missing"))?;
        ensure((got - v).abs() <= 1e-4, format!("idf({w}) = {got}, want {v}"))?;
    }
    let v = tfidf_vector(&m, &["cancer", "cure"]);
    let norm = (1.2877f64.powi(2) + 1.6931f64.powi(2)).sqrt();
    let want = [(m.column("cancer").unwrap(), 1.2877 / norm), (m.column("cure").unwrap(), 1.6931 / norm)];
    ensure(v.len() == 2, format!("{v:?}"))?;
    for (c, w) in want {
        let got = v.iter().find(|(i, _)| *i == c).map(|(_, x)| *x).unwrap_or(0.0);
        ensure((got - w).abs() <= 1e-4, format!("column {c}: {got} vs {w}"))?;
    }
    Ok("idf 1.2877/1.6931 and normalised vector within 1e-4".into())
}

fn statistics() -> Outcome {
    let r = welch_ttest(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    ensure((r.t + 3.674).abs() <= 1e-3, format!("t = {}", r.t))?;
    ensure((r.df - 4.0).abs() <= 1e-2, format!("df = {}", r.df))?;
    ensure((r.p - 0.0213).abs() <= 5e-4, format!("p = {}", r.p))?;

    // hand value of the 0.5-corrected formula; the 1.341 figure quoted next
    // to this fixture is not consistent with it
    let a = signed_log_odds((30, 100), (10, 100)).map_err(|e| e.to_string())?;
    let hand = (30.5f64 / 70.5 / (10.5 / 90.5)).ln();
    ensure((a - hand).abs() <= 1e-3 && (a - 1.316_088_6).abs() <= 1e-3, format!("30/100 vs 10/100 = {a}"))?;
    let b = signed_log_odds((5, 10), (0, 10)).map_err(|e| e.to_string())?;
    ensure((b - 3.045).abs() <= 1e-3, format!("5/10 vs 0/10 = {b}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let (x, y) = ((rng.gen_range(0..40), 40), (rng.gen_range(0..25), 25));
        let (f, g) = (signed_log_odds(x, y).unwrap(), signed_log_odds(y, x).unwrap());
        ensure(f == -g, format!("log odds not antisymmetric at {x:?} {y:?}"))?;
        let s: Vec<f64> = (0..rng.gen_range(2..9)).map(|_| gaussian(&mut rng)).collect();
        let u: Vec<f64> = (0..rng.gen_range(2..9)).map(|_| gaussian(&mut rng)).collect();
        let (p, q) = (welch_ttest(&s, &u).unwrap(), welch_ttest(&u, &s).unwrap());
        ensure(p.t == -q.t && p.df == q.df && p.p == q.p, "welch not antisymmetric")?;
    }
    Ok(format!(
        "t {:.4}, df {:.3}, p {:.4}; log odds {a:.4} (1.341 quoted, 1.3161 by the formula) and {b:.4}; antisymmetry exact",
        r.t, r.df, r.p
    ))
}

fn bio_fidelity() -> Outcome {
    let mut tweet = Tweet::new("w", "Processed meats causes cancer according to #WHO", Category::Cause);
    tweet.prepare();
    let tokens = tweet.tokens().to_vec();
    let texts = tweet.token_texts();
    let tags = spans_to_bio(&tokens, &[0.."Processed meats".len()]).map_err(|e| e.to_string())?;
    let want = [BioTag::B, BioTag::I, BioTag::O, BioTag::O, BioTag::O, BioTag::O, BioTag::O];
    ensure(tags == want, format!("tags {tags:?} over {texts:?}"))?;
    let anchors = extract_anchors(&texts, &tags).map_err(|e| e.to_string())?;
    ensure(anchors == ["Processed meats"], format!("anchors {anchors:?}"))?;
    Ok(format!("{texts:?} -> BIOOOOO -> {anchors:?}"))
}

fn cure_detector() -> Outcome {
    let mut words: Vec<String> = PROVEN_CURES.iter().flat_map(|t| t.split(' ')).map(str::to_owned).collect();
    words.extend(["carrot", "juice", "cures", "cancer", "tea", "blend"].map(String::from));
    let uniq: BTreeSet<String> = words.into_iter().collect();
    let words: Vec<String> = uniq.into_iter().collect();
    let dim = words.len();
    let mut rows: Vec<(String, Vec<f64>)> = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            (w.clone(), v)
        })
        .collect();
    // "blend" leans partly towards chemotherapy so it crosses some thresholds
    let chemo = words.iter().position(|w| w == "chemotherapy").unwrap();
    let blend = words.iter().position(|w| w == "blend").unwrap();
    rows[blend].1[chemo] = 1.0;
    let emb = EmbeddingTable::from_rows(dim, rows).unwrap();
    let lex = CureLexicon::proven(&emb);

    let taus = [0.05, 0.2, 0.4, 0.6, 0.7, 0.8, 0.9, 0.99, 0.999_999];
    for term in PROVEN_CURES {
        let sentence: Vec<&str> = term.split(' ').chain(["cures", "cancer"]).collect();
        for tau in taus {
            let hits = detect_cure_anchor(&sentence, &emb, &lex, &CureConfig::new(tau).unwrap()).map_err(|e| e.to_string())?;
            ensure(hits.iter().any(|h| h.text == term), format!("{term} missed at tau {tau}"))?;
        }
    }
    for tau in taus {
        let hits = detect_cure_anchor(&["carrot", "juice", "cures", "cancer"], &emb, &lex, &CureConfig::new(tau).unwrap()).unwrap();
        ensure(hits.is_empty(), format!("carrot juice detected at tau {tau}: {hits:?}"))?;
    }
    let probes: Vec<Vec<&str>> = vec![
        vec!["blend", "tea", "cures", "cancer"],
        vec!["radiation", "blend", "therapy"],
        vec!["hormone", "tea", "targeted", "therapy"],
        vec!["chemotherapy", "blend", "immunotherapy"],
    ];
    let mut counts = Vec::new();
    let mut previous: Option<BTreeSet<(usize, usize)>> = None;
    for tau in taus {
        let cfg = CureConfig::new(tau).unwrap();
        let mut spans = BTreeSet::new();
        for (k, p) in probes.iter().enumerate() {
            for h in detect_cure_anchor(p, &emb, &lex, &cfg).unwrap() {
                spans.insert((k, h.start * 100 + h.end));
            }
        }
        if let Some(prev) = &previous {
            ensure(spans.is_subset(prev), format!("detections grew when tau rose to {tau}"))?;
        }
        counts.push(spans.len());
        previous = Some(spans);
    }
    ensure(counts.windows(2).all(|w| w[1] <= w[0]), format!("counts {counts:?}"))?;
    Ok(format!("proven terms found at every tau, carrot juice never, detections by tau {counts:?}"))
}

fn determinism_inputs(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut rows = Vec::new();
    for i in 0..48 {
        let cat = [Category::Cause, Category::Cure][i % 2];
        rows.push(if i % 3 == 2 {
            unrelated(&mut rng, &format!("t{i}"), cat)
        } else {
            planted(&mut rng, &format!("t{i}"), cat, i % 4 == 0)
        });
    }
    write_jsonl(&dir.join("data.jsonl"), &rows);
    write_embeddings(&dir.join("emb.txt"), 8, 3);
    fs::write(dir.join("lex.tsv"), "food\tmeat*\nfood\tbacon\nfood\tfish\nnegative\tcancer\nverbs\tcures\n").unwrap();
    fs::write(dir.join("common.conf"), "seed = 5\nin = data.jsonl\nembeddings = emb.txt\nepochs = 2\nbatch_size = 8\n").unwrap();
}

const PIPELINE: &[&[&str]] = &[
    &["split", "--config", "common.conf", "--out", "split.json"],
    &["preprocess", "--config", "common.conf", "--out", "pre.jsonl"],
    &["train-embeddings", "--config", "common.conf", "--dim", "8", "--min-count", "1", "--out", "sg.txt"],
    &["train-relevance", "--config", "common.conf", "--split", "split.json", "--mode", "tfidf", "--hidden", "16,8", "--out", "rel_tfidf.json"],
    &["train-relevance", "--config", "common.conf", "--split", "split.json", "--mode", "weighted", "--hidden", "16,8", "--out", "rel_weighted.json"],
    &["eval-relevance", "--config", "common.conf", "--split", "split.json", "--model", "rel_tfidf.json", "--model", "rel_weighted.json", "--out", "relevance_report.json"],
    &["train-tagger", "--config", "common.conf", "--split", "split.json", "--variant", "bilstm-crf", "--hidden", "6", "--out", "tg_lstm.json"],
    &["train-tagger", "--config", "common.conf", "--split", "split.json", "--variant", "crf", "--out", "tg_crf.json"],
    &["train-tagger", "--config", "common.conf", "--split", "split.json", "--variant", "self-attn-bilstm-crf", "--hidden", "4", "--out", "tg_self.json"],
    &["eval-tagger", "--config", "common.conf", "--split", "split.json", "--model", "tg_lstm.json,tg_crf.json,tg_self.json", "--out", "tagger_report.json"],
    &["tag", "--config", "common.conf", "--model", "tg_lstm.json", "--out", "tags.jsonl"],
    &["detect-cure", "--config", "common.conf", "--out", "cure.jsonl"],
    &["keywords", "--config", "common.conf", "--k", "5", "--predicted", "tags.jsonl", "--out", "keywords.json"],
    &["compare", "--config", "common.conf", "--lexicons", "lex.tsv", "--out", "compare.tsv"],
];

fn run_pipeline(dir: &Path) -> Result<Vec<(String, String)>, String> {
    determinism_inputs(dir);
    let mut stdout = Vec::new();
    for args in PIPELINE {
        stdout.push((args[0].to_owned(), misinfo(dir, args)?));
    }
    Ok(stdout)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let out_a = run_pipeline(a)?;
    let out_b = run_pipeline(b)?;
    ensure(out_a == out_b, "stdout differs between runs")?;
    let (sa, sb) = (snapshot(a), snapshot(b));
    ensure(sa.len() == sb.len(), "different file sets")?;
    for ((na, ba), (nb, bb)) in sa.iter().zip(&sb) {
        ensure(na == nb && ba == bb, format!("{na} differs"))?;
    }
    Ok(format!("{} subcommands, {} files byte-identical across reruns", PIPELINE.len(), sa.len()))
}

fn unit_interval(v: &Value, key: &str) -> Result<f64, String> {
    let x = v[key].as_f64().ok_or(format!("{key} missing in {v}"))?;
    ensure((0.0..=1.0).contains(&x), format!("{key} = {x} outside [0, 1]"))?;
    Ok(x)
}

fn strings(v: &Value) -> Result<Vec<String>, String> {
    serde_json::from_value(v.clone()).map_err(|e| e.to_string())
}

fn report_conformance(dir: &Path) -> Outcome {
    // relevance: domains down, F1 and accuracy per mode
    let r = read_json(&dir.join("relevance_report.json"));
    ensure(r["report"] == "relevance", "relevance report tag")?;
    ensure(r["seed"] == 5 && r["config_digest"].as_str().is_some_and(|d| d.len() == 64), "seed/digest")?;
    let modes = strings(&r["modes"])?;
    ensure(modes == ["tfidf", "weighted"], format!("modes {modes:?}"))?;
    let domains = strings(&r["domains"])?;
    ensure(domains == ["cause", "cure"], format!("domains {domains:?}"))?;
    let rows = r["rows"].as_array().ok_or("rows")?;
    ensure(rows.len() == modes.len() * domains.len(), "one row per (domain, mode)")?;
    for d in &domains {
        for m in &modes {
            let row = rows.iter().find(|x| x["domain"] == d.as_str() && x["mode"] == m.as_str()).ok_or(format!("no row {d}/{m}"))?;
            unit_interval(row, "f1")?;
            unit_interval(row, "accuracy")?;
        }
    }
    let table = misinfo(dir, PIPELINE[5])?;
    let header = table.lines().next().unwrap_or_default();
    ensure(header.contains("tfidf F1") && header.contains("weighted F1") && header.matches("Accuracy").count() == 2, format!("header {header:?}"))?;
    ensure(table.lines().nth(1).is_some_and(|l| l.starts_with("causes")), "causes row")?;

    // tagger: variants down, span F1 per domain
    let t = read_json(&dir.join("tagger_report.json"));
    ensure(t["report"] == "tagger", "tagger report tag")?;
    let methods = strings(&t["methods"])?;
    let expected = ["BiLSTM-CRF (emb)", "CRF (emb)", "Self attention BiLSTM-CRF (emb)"];
    ensure(methods == expected, format!("methods {methods:?}"))?;
    let rows = t["rows"].as_array().ok_or("rows")?;
    ensure(rows.len() == methods.len() * 2, "one row per (method, domain)")?;
    for m in &methods {
        for d in ["cause", "cure"] {
            let row = rows.iter().find(|x| x["method"] == m.as_str() && x["domain"] == d).ok_or(format!("no row {m}/{d}"))?;
            for key in ["span_f1", "span_precision", "span_recall", "token_f1", "token_accuracy"] {
                unit_interval(row, key)?;
            }
        }
    }
    Ok(format!("relevance {}x{} cells, tagger {}x2 cells", domains.len(), modes.len(), methods.len()))
}

fn skipgram() -> Outcome {
    let mut corpus = Vec::new();
    for _ in 0..200 {
        corpus.push(vec!["heat", "burns", "hot", "flame"]);
        corpus.push(vec!["fire", "burns", "hot", "flame"]);
        corpus.push(vec!["ice", "chills", "cold", "frost"]);
    }
    let cfg = SkipgramConfig {
        dim: 16,
        window: 2,
        negatives: 3,
        epochs: 5,
        min_count: 1,
        seed: 42,
        ..SkipgramConfig::default()
    };
    let (table, losses) = train_skipgram_with_losses(&corpus, &cfg).map_err(|e| e.to_string())?;
    ensure(losses[..3].windows(2).all(|w| w[1] <= w[0]), format!("losses {losses:?}"))?;
    let init = train_skipgram(&corpus, &SkipgramConfig { epochs: 0, ..cfg.clone() }).unwrap();
    let cos = |t: &EmbeddingTable, a: &str, b: &str| cosine(t.lookup(a).unwrap(), t.lookup(b).unwrap()).unwrap();
    let pair = cos(&table, "heat", "fire");
    let control = cos(&table, "heat", "ice");
    let before = cos(&init, "heat", "fire");
    ensure(pair > control, format!("cos(heat, fire) {pair} <= cos(heat, ice) {control}"))?;
    ensure(pair > before, format!("cos(heat, fire) {pair} did not rise from {before}"))?;
    Ok(format!(
        "losses {:.4} >= {:.4} >= {:.4}; cos(heat,fire) {pair:.3} vs ice {control:.3}, at init {before:.3}",
        losses[0], losses[1], losses[2]
    ))
}

// ---------------------------------------------------------------- driver

fn record(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    // bypass the test harness capture so the lines reach the log
    let _ = writeln!(std::io::stdout().lock(), "{tag} criterion {n:>2} {name}: {detail}");
    outcome.is_ok()
}

#[test]
fn acceptance() {
    let work = tempfile::tempdir().unwrap();
    let (a, b) = (work.path().join("run_a"), work.path().join("run_b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let results = [
        record(1, "crf oracle", crf_oracle),
        record(2, "gradient audit", gradient_audit),
        record(3, "overfit", || overfit(work.path())),
        record(4, "tfidf oracle", tfidf_oracle),
        record(5, "statistics oracles", statistics),
        record(6, "bio fidelity", bio_fidelity),
        record(7, "cure detector", cure_detector),
        record(8, "determinism", || determinism(&a, &b)),
        record(9, "report conformance", || report_conformance(&a)),
        record(10, "skip-gram sanity", skipgram),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
