use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use misinfo_core::analysis::{compare_groups, keyword_spread, stem_phrase, top_keywords, Lexicon};
use misinfo_core::corpus::{
    load_annotated, parse_tweets, split_dataset, AnnotatedTweet, Category, Split, SplitManifest,
};
use misinfo_core::cure::{detect_cure_anchor, CureConfig, CureLexicon, CureVerdict};
use misinfo_core::embeddings::{load_embeddings, save_embeddings, train_skipgram_with_losses, SkipgramConfig};
use misinfo_core::neural::TrainConfig;
use misinfo_core::persist::ParamFile;
use misinfo_core::preprocess::{clean, tokenize_with, CleanConfig};
use misinfo_core::relevance::{train_relevance, RelevanceConfig, RelevanceMode, RelevanceModel};
use misinfo_core::tagger::{extract_anchors, train_tagger, TaggerConfig, TaggerModel, TaggerVariant};
use misinfo_core::{BioTag, EmbeddingTable};

use crate::config::{read, usage, Settings};
use crate::report::{RelevanceReport, RelevanceRow, TaggerReport, TaggerRow};

pub fn dispatch(command: &str, s: &Settings) -> Result<()> {
    match command {
        "preprocess" => preprocess(s),
        "split" => split(s),
        "train-embeddings" => train_embeddings(s),
        "train-relevance" => train_relevance_cmd(s),
        "eval-relevance" => eval_relevance(s),
        "train-tagger" => train_tagger_cmd(s),
        "eval-tagger" => eval_tagger(s),
        "tag" => tag(s),
        "detect-cure" => detect_cure(s),
        "keywords" => keywords(s),
        "compare" => compare(s),
        other => Err(usage(format!("unknown command {other}"))),
    }
}

struct Artifact {
    seed: u64,
    digest: String,
}

impl Artifact {
    fn of(s: &Settings) -> Result<Self> {
        Ok(Self {
            seed: s.seed()?,
            digest: s.digest(),
        })
    }

    fn meta(&self, command: &str, records: usize) -> Value {
        json!({
            "command": command,
            "seed": self.seed,
            "config_digest": self.digest,
            "records": records,
        })
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// JSON Lines plus a `<out>.meta.json` carrying seed and config digest.
fn write_jsonl(path: &Path, lines: &[Value], meta: Value) -> Result<()> {
    let mut text = String::new();
    for l in lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    write(path, &text)?;
    write_json(&sidecar(path, ".meta.json"), &meta)
}

fn annotated(s: &Settings) -> Result<Vec<AnnotatedTweet>> {
    let path = s.require("in")?;
    load_annotated(path).with_context(|| format!("reading {path}"))
}

fn embeddings(path: &str) -> Result<Arc<EmbeddingTable>> {
    Ok(Arc::new(
        load_embeddings(path).with_context(|| format!("reading embeddings {path}"))?,
    ))
}

fn category_filter(s: &Settings) -> Result<Option<Category>> {
    s.get("category")
        .map(|c| c.parse::<Category>().map_err(usage))
        .transpose()
}

/// The manifest's split when `--split` is given, else a fresh seeded split.
fn make_split(s: &Settings, data: &[AnnotatedTweet]) -> Result<Split> {
    match s.get("split") {
        Some(path) => {
            let manifest: SplitManifest = serde_json::from_str(&read(Path::new(path))?)
                .with_context(|| format!("parsing split manifest {path}"))?;
            Split::from_manifest(data, &manifest).with_context(|| format!("applying {path}"))
        }
        None => split_dataset(data, s.seed()?).context("splitting the corpus"),
    }
}

fn keep(split: &mut Split, pred: impl Fn(&AnnotatedTweet) -> bool) {
    split.train.retain(&pred);
    split.val.retain(&pred);
}

fn train_config(s: &Settings, defaults: TrainConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: s.parse_or("epochs", defaults.epochs)?,
        batch_size: s.parse_or("batch_size", defaults.batch_size)?,
        learning_rate: s.parse_or("learning_rate", defaults.learning_rate)?,
        patience: s.parse_or("patience", defaults.patience)?,
        seed: s.seed()?,
        ..defaults
    })
}

fn save_model(mut file: ParamFile, s: &Settings, extra: Value) -> Result<()> {
    if let Value::Object(meta) = &mut file.meta {
        meta.insert("config_digest".into(), Value::String(s.digest()));
        if let Value::Object(extra) = extra {
            meta.extend(extra);
        }
    }
    let out = s.require("out")?;
    file.save(out).with_context(|| format!("writing model {out}"))
}

fn load_model(path: &str) -> Result<ParamFile> {
    ParamFile::load(path).with_context(|| format!("reading model {path}"))
}

fn preprocess(s: &Settings) -> Result<()> {
    let input = s.require("in")?;
    let out = Path::new(s.require("out")?);
    let cfg = CleanConfig {
        keep_hashtag_mark: s.parse_or("keep_hashtag_mark", false)?,
        ..CleanConfig::default()
    };
    let text = read(Path::new(input))?;
    let tweets = parse_tweets(&text).with_context(|| format!("reading {input}"))?;
    let records = text.lines().filter(|l| !l.trim().is_empty());
    let mut lines = Vec::with_capacity(tweets.len());
    for (tweet, line) in tweets.iter().zip(records) {
        let mut obj: serde_json::Map<String, Value> = serde_json::from_str(line)?;
        let cleaned = clean(&tweet.raw_text, &cfg);
        let tokens = tokenize_with(&cleaned, &cfg);
        obj.insert("clean_text".into(), Value::String(cleaned));
        obj.insert("tokens".into(), serde_json::to_value(tokens)?);
        lines.push(Value::Object(obj));
    }
    let meta = Artifact::of(s)?.meta("preprocess", lines.len());
    write_jsonl(out, &lines, meta)
}

fn split(s: &Settings) -> Result<()> {
    let data = annotated(s)?;
    let split = split_dataset(&data, s.seed()?).context("splitting the corpus")?;
    let mut doc = serde_json::to_value(split.manifest())?;
    doc["config_digest"] = Value::String(s.digest());
    write_json(Path::new(s.require("out")?), &doc)?;
    eprintln!("train {} / val {}", split.train.len(), split.val.len());
    Ok(())
}

fn train_embeddings(s: &Settings) -> Result<()> {
    let input = s.require("in")?;
    let out = Path::new(s.require("out")?);
    let mut tweets = parse_tweets(&read(Path::new(input))?).with_context(|| format!("reading {input}"))?;
    let sentences: Vec<Vec<String>> = tweets
        .iter_mut()
        .map(|t| {
            t.prepare();
            t.tokens().iter().map(|k| k.text.to_lowercase()).collect()
        })
        .collect();
    let d = SkipgramConfig::default();
    let cfg = SkipgramConfig {
        dim: s.parse_or("dim", d.dim)?,
        window: s.parse_or("window", d.window)?,
        negatives: s.parse_or("negatives", d.negatives)?,
        epochs: s.parse_or("epochs", d.epochs)?,
        min_count: s.parse_or("min_count", d.min_count)?,
        learning_rate: s.parse_or("learning_rate", d.learning_rate)?,
        seed: s.seed()?,
        ..d
    };
    let (table, losses) = train_skipgram_with_losses(&sentences, &cfg).context("training skip-gram")?;
    for (i, l) in losses.iter().enumerate() {
        eprintln!("epoch {} loss {l:.6}", i + 1);
    }
    save_embeddings(&table, out).with_context(|| format!("writing {}", out.display()))?;
    let mut meta = Artifact::of(s)?.meta("train-embeddings", table.len());
    meta["epoch_losses"] = json!(losses);
    write_json(&sidecar(out, ".meta.json"), &meta)
}

fn train_relevance_cmd(s: &Settings) -> Result<()> {
    let mode: RelevanceMode = s.require("mode")?.parse().map_err(usage)?;
    let emb = match mode {
        RelevanceMode::Weighted => Some(embeddings(
            s.get("embeddings")
                .ok_or_else(|| usage("weighted mode needs --embeddings"))?,
        )?),
        RelevanceMode::Tfidf => None,
    };
    s.require("out")?;
    let data = annotated(s)?;
    let mut split = make_split(s, &data)?;
    let category = category_filter(s)?;
    if let Some(c) = category {
        keep(&mut split, |t| t.tweet.category == c);
    }
    let defaults = RelevanceConfig::default();
    let hidden = match s.get("hidden") {
        Some(_) => s
            .list("hidden")
            .iter()
            .map(|h| h.parse::<usize>().map_err(|e| usage(format!("bad hidden width {h:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?,
        None => defaults.hidden.clone(),
    };
    let cfg = RelevanceConfig {
        hidden,
        train: train_config(s, defaults.train.clone())?,
        ..defaults
    };
    let (model, history) = train_relevance(&split, mode, emb, &cfg).context("training relevance model")?;
    for e in &history {
        eprintln!(
            "epoch {} loss {:.6} train_acc {:.4} val_f1 {:.4}",
            e.epoch, e.train_loss, e.train_accuracy, e.val_f1
        );
    }
    let extra = json!({ "category": category.map(|c| c.as_str()) });
    save_model(model.to_param_file(cfg.train.seed), s, extra)
}

/// Tweets to evaluate: the validation part of `--split` if given, else all.
fn eval_set(s: &Settings, data: Vec<AnnotatedTweet>) -> Result<Vec<AnnotatedTweet>> {
    Ok(match s.get("split") {
        Some(_) => make_split(s, &data)?.val,
        None => data,
    })
}

fn by_domain(data: &[AnnotatedTweet]) -> BTreeMap<Category, Vec<AnnotatedTweet>> {
    let mut out: BTreeMap<Category, Vec<AnnotatedTweet>> = BTreeMap::new();
    for t in data {
        out.entry(t.tweet.category).or_default().push(t.clone());
    }
    out
}

fn eval_relevance(s: &Settings) -> Result<()> {
    let models = s.list("model");
    if models.is_empty() {
        return Err(usage("missing --model"));
    }
    let out = s.require("out")?;
    let emb = s.get("embeddings").map(embeddings).transpose()?;
    let data = eval_set(s, annotated(s)?)?;
    let groups = by_domain(&data);
    let art = Artifact::of(s)?;
    let mut report = RelevanceReport {
        report: "relevance".into(),
        seed: art.seed,
        config_digest: art.digest,
        modes: Vec::new(),
        domains: groups.keys().map(|c| c.as_str().to_owned()).collect(),
        rows: Vec::new(),
    };
    for path in &models {
        let file = load_model(path)?;
        let needs_emb = file.meta["mode"].as_str() == Some(RelevanceMode::Weighted.as_str());
        if needs_emb && emb.is_none() {
            return Err(usage(format!("{path} is a weighted model and needs --embeddings")));
        }
        let model = RelevanceModel::from_param_file(&file, emb.clone()).with_context(|| format!("loading {path}"))?;
        let mut mode = model.mode.as_str().to_owned();
        if report.modes.contains(&mode) {
            mode = format!("{mode}#{}", report.modes.len() + 1);
        }
        for (cat, tweets) in &groups {
            let m = model.evaluate(tweets);
            report.rows.push(RelevanceRow {
                domain: cat.as_str().to_owned(),
                mode: mode.clone(),
                f1: m.f1,
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                support: m.support(),
                examples: tweets.len(),
            });
        }
        report.modes.push(mode);
    }
    write_json(Path::new(out), &report)?;
    print!("{}", report.table());
    Ok(())
}

fn tagger_data(s: &Settings, split: &mut Split) -> Result<()> {
    let category = category_filter(s)?;
    keep(split, |t| t.relevant && category.is_none_or(|c| t.tweet.category == c));
    Ok(())
}

fn train_tagger_cmd(s: &Settings) -> Result<()> {
    let variant: TaggerVariant = s.require("variant")?.parse().map_err(usage)?;
    let emb = embeddings(s.require("embeddings")?)?;
    s.require("out")?;
    let data = annotated(s)?;
    let mut split = make_split(s, &data)?;
    tagger_data(s, &mut split)?;
    let defaults = TaggerConfig::default();
    let cfg = TaggerConfig {
        hidden: s.parse_or("hidden", defaults.hidden)?,
        features: s.list("features"),
        train: train_config(s, defaults.train.clone())?,
    };
    let (model, history) = train_tagger(&split, variant, emb, &cfg).context("training tagger")?;
    for e in &history {
        eprintln!("epoch {} loss {:.6} val_span_f1 {:.4}", e.epoch, e.train_loss, e.val_span_f1);
    }
    let extra = json!({
        "category": category_filter(s)?.map(|c| c.as_str()),
        "embeddings": Path::new(s.require("embeddings")?).file_stem().map(|f| f.to_string_lossy()),
    });
    save_model(model.to_param_file(cfg.train.seed), s, extra)
}

fn method_name(model: &TaggerModel, file: &ParamFile) -> String {
    let mut parts = vec![file.meta["embeddings"].as_str().unwrap_or("embeddings").to_owned()];
    parts.extend(model.features.features.iter().map(|(n, _)| n.clone()));
    format!("{} ({})", model.variant().display_name(), parts.join(" + "))
}

fn eval_tagger(s: &Settings) -> Result<()> {
    let models = s.list("model");
    if models.is_empty() {
        return Err(usage("missing --model"));
    }
    let out = s.require("out")?;
    let emb = embeddings(s.require("embeddings")?)?;
    let data: Vec<AnnotatedTweet> = eval_set(s, annotated(s)?)?.into_iter().filter(|t| t.relevant).collect();
    let groups = by_domain(&data);
    let art = Artifact::of(s)?;
    let mut report = TaggerReport {
        report: "tagger".into(),
        seed: art.seed,
        config_digest: art.digest,
        methods: Vec::new(),
        domains: groups.keys().map(|c| c.as_str().to_owned()).collect(),
        rows: Vec::new(),
    };
    for path in &models {
        let file = load_model(path)?;
        let model = TaggerModel::from_param_file(&file, emb.clone()).with_context(|| format!("loading {path}"))?;
        let mut method = method_name(&model, &file);
        if report.methods.contains(&method) {
            method = format!("{method} #{}", report.methods.len() + 1);
        }
        for (cat, tweets) in &groups {
            let r = model.evaluate(tweets).with_context(|| format!("evaluating {path}"))?;
            report.rows.push(TaggerRow {
                method: method.clone(),
                variant: model.variant().as_str().to_owned(),
                domain: cat.as_str().to_owned(),
                span_f1: r.span.f1,
                span_precision: r.span.precision,
                span_recall: r.span.recall,
                token_f1: r.token.f1,
                token_accuracy: r.token.accuracy,
                examples: tweets.len(),
            });
        }
        report.methods.push(method);
    }
    write_json(Path::new(out), &report)?;
    print!("{}", report.table());
    Ok(())
}

fn tag(s: &Settings) -> Result<()> {
    let path = s.require("model")?;
    let emb = embeddings(s.require("embeddings")?)?;
    let out = Path::new(s.require("out")?);
    let model = TaggerModel::from_param_file(&load_model(path)?, emb).with_context(|| format!("loading {path}"))?;
    let data = annotated(s)?;
    let mut lines = Vec::with_capacity(data.len());
    for t in &data {
        let tokens = t.tweet.token_texts();
        let tags = if tokens.is_empty() {
            Vec::new()
        } else {
            model.tag(t).with_context(|| format!("tagging {}", t.id()))?
        };
        let anchors = extract_anchors(&tokens, &tags)?;
        lines.push(json!({
            "id": t.id(),
            "tags": tags.iter().map(|g: &BioTag| g.as_str()).collect::<Vec<_>>(),
            "anchors": anchors,
        }));
    }
    let meta = Artifact::of(s)?.meta("tag", lines.len());
    write_jsonl(out, &lines, meta)
}

fn detect_cure(s: &Settings) -> Result<()> {
    let emb = embeddings(s.require("embeddings")?)?;
    let out = Path::new(s.require("out")?);
    let cfg = match s.parse::<f64>("tau")? {
        Some(t) => CureConfig::new(t).map_err(|e| usage(e.to_string()))?,
        None => CureConfig::default(),
    };
    let lexicon = match s.get("cure_lexicon") {
        Some(p) => CureLexicon::new(&CureLexicon::parse_terms(&read(Path::new(p))?), &emb)
            .with_context(|| format!("reading {p}"))?,
        None => CureLexicon::proven(&emb),
    };
    let input = s.require("in")?;
    let mut tweets = parse_tweets(&read(Path::new(input))?).with_context(|| format!("reading {input}"))?;
    let mut lines = Vec::with_capacity(tweets.len());
    for t in &mut tweets {
        t.prepare();
        let hits = detect_cure_anchor(&t.token_texts(), &emb, &lexicon, &cfg)?;
        let verdict = if hits.is_empty() {
            CureVerdict::MisinfoCandidate
        } else {
            CureVerdict::ProvenCurePresent
        };
        lines.push(json!({ "id": t.id, "verdict": verdict.as_str(), "hits": hits }));
    }
    let mut meta = Artifact::of(s)?.meta("detect-cure", lines.len());
    meta["tau"] = json!(cfg.tau());
    write_jsonl(out, &lines, meta)
}

fn predicted_anchors(path: &str) -> Result<HashMap<String, Vec<String>>> {
    let mut out = HashMap::new();
    for (i, line) in read(Path::new(path))?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).with_context(|| format!("{path}:{}", i + 1))?;
        let id = v["id"].as_str().ok_or_else(|| anyhow!("{path}:{}: missing \"id\"", i + 1))?;
        let anchors: Vec<String> = serde_json::from_value(v["anchors"].clone())
            .with_context(|| format!("{path}:{}: bad \"anchors\"", i + 1))?;
        out.insert(id.to_owned(), anchors);
    }
    Ok(out)
}

fn keywords(s: &Settings) -> Result<()> {
    let k: usize = s.parse_or("k", 20)?;
    if k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let out = Path::new(s.require("out")?);
    let data = annotated(s)?;
    let predicted = s.get("predicted").map(predicted_anchors).transpose()?;
    let tweets: Vec<(Vec<String>, Option<bool>)> = data
        .iter()
        .map(|t| {
            let anchors = match &predicted {
                Some(p) => p.get(t.id()).cloned().unwrap_or_default(),
                None => t.anchor_texts().into_iter().map(str::to_owned).collect(),
            };
            (anchors, t.misinfo)
        })
        .filter(|(a, _)| !a.is_empty())
        .collect();
    let all: Vec<&String> = tweets.iter().flat_map(|(a, _)| a).collect();
    let top = top_keywords(&all, k);
    let top_set: BTreeSet<String> = top.iter().map(|(w, _)| w.clone()).collect();

    let (misinfo, source): (BTreeSet<String>, &str) = match s.get("misinfo_keywords") {
        Some(p) => (
            read(Path::new(p))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(stem_phrase)
                .collect(),
            "file",
        ),
        None => {
            // majority vote of the misinfo flags of the tweets mentioning it
            let mut votes: BTreeMap<String, (usize, usize)> = BTreeMap::new();
            for (anchors, flag) in &tweets {
                let Some(flag) = flag else { continue };
                let stems: BTreeSet<String> = anchors.iter().map(|a| stem_phrase(a)).collect();
                for st in stems {
                    let e = votes.entry(st).or_default();
                    e.0 += usize::from(*flag);
                    e.1 += 1;
                }
            }
            let set = votes
                .into_iter()
                .filter(|(_, (yes, n))| 2 * yes > *n)
                .map(|(w, _)| w)
                .collect();
            (set, "annotations")
        }
    };
    let anchor_lists: Vec<Vec<String>> = tweets.iter().map(|(a, _)| a.clone()).collect();
    let spread = keyword_spread(&anchor_lists, &top_set, &misinfo);
    let art = Artifact::of(s)?;
    let doc = json!({
        "report": "keywords",
        "seed": art.seed,
        "config_digest": art.digest,
        "k": k,
        "tweets_with_anchors": tweets.len(),
        "misinfo_source": source,
        "spread": spread,
        "keywords": top.iter().map(|(w, c)| json!({
            "keyword": w,
            "count": c,
            "misinfo": misinfo.contains(w),
        })).collect::<Vec<_>>(),
    });
    write_json(out, &doc)?;
    for (w, c) in &top {
        println!("{c:>6}  {w}{}", if misinfo.contains(w) { "  *" } else { "" });
    }
    println!("spread {:.2}%", 100.0 * spread);
    Ok(())
}

fn compare(s: &Settings) -> Result<()> {
    let paths = s.list("lexicons");
    if paths.is_empty() {
        return Err(usage("missing --lexicons"));
    }
    let out = Path::new(s.require("out")?);
    let mut lexicons = Vec::with_capacity(paths.len());
    for p in &paths {
        let name = Path::new(p)
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.clone());
        lexicons.push(Lexicon::parse(&name, &read(Path::new(p))?).with_context(|| format!("reading {p}"))?);
    }
    let data = annotated(s)?;
    let tokens = |flag: bool| -> Vec<Vec<String>> {
        data.iter()
            .filter(|t| t.misinfo == Some(flag))
            .map(|t| t.tweet.token_texts().iter().map(|w| w.to_lowercase()).collect())
            .collect()
    };
    let (mis, cor) = (tokens(true), tokens(false));
    let rows = compare_groups(&mis, &cor, &lexicons)?;
    let art = Artifact::of(s)?;
    let mut tsv = format!("# seed={} config_digest={}\n", art.seed, art.digest);
    tsv.push_str("feature\tmean_misinfo\tmean_correct\tt_statistic\tdegrees_of_freedom\tp_value\tsigned_log_odds\tsignificant\n");
    for r in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.feature,
            r.mean_misinfo,
            r.mean_correct,
            r.t_statistic,
            r.degrees_of_freedom,
            r.p_value,
            r.signed_log_odds,
            r.significant
        ));
    }
    write(out, &tsv)?;
    let significant: Vec<Value> = rows
        .iter()
        .filter(|r| r.significant)
        .map(|r| json!({ "feature": r.feature, "signed_log_odds": r.signed_log_odds, "p_value": r.p_value }))
        .collect();
    let summary = json!({
        "report": "compare",
        "seed": art.seed,
        "config_digest": art.digest,
        "misinfo_tweets": mis.len(),
        "correct_tweets": cor.len(),
        "features": rows.len(),
        "significant": significant,
    });
    write_json(&sidecar(out, ".summary.json"), &summary)?;
    for r in rows.iter().filter(|r| r.significant) {
        println!("{:<30} {:>8.3}  p={:.4}", r.feature, r.signed_log_odds, r.p_value);
    }
    Ok(())
}
