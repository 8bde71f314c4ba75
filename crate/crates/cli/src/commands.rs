use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use protorec::baselines::{
    align_cognates, random_daughter, reconstruct_with_classifier, train_site_classifier, BaselineError, ClassifierKind, MajorityConstituent,
};
use protorec::corpus::{build_vocab, encode_cognate_set, parse_dataset, split_dataset, Dataset, ScriptMode, Word};
use protorec::metrics::{evaluate, FeatureTable, MetricsError, MetricsReport};
use protorec::phylo::{consensus, cosine_distance_matrix, gqd, parse_newick, to_newick, ward_cluster, Tree, ROMANCE_GOLD_NEWICK};
use protorec::synth::{generate, tonal_monosyllables, GenerateOptions, RuleSet};
use protorec::tensor::{grad_check_scaled, OpKind, GRAD_TOL};
use protorec::transformer::{end_to_end_grad_check, greedy_decode_batch, load_trained, save_trained, train, Model, TrainedModel, MODEL_GRAD_TOL};

use crate::config::{context_label, ConfigFile, EXPERIMENT_FILE};
use crate::error::{read, write, CliError, Result};
use crate::report::{breakdown_text, ResultsTable, SystemResult};
use crate::workers::{run_ordered, worker_count};

const DECODE_BATCH: usize = 64;

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn load_splits(cfg: &ConfigFile) -> Result<Splits> {
    let path = cfg.dataset_path()?;
    let ds = parse_dataset(&read(path)?, &cfg.parse_options()).map_err(|e| CliError::input(path.display().to_string(), e))?;
    let (train, val, test) = split_dataset(&ds, cfg.dataset.split_seed).map_err(|e| CliError::input(path.display().to_string(), e))?;
    Ok(Splits { train, val, test })
}

/// Trains one model per seed and writes `<out>/seed_<s>/`.
pub fn cmd_train(cfg: &ConfigFile, out: &Path) -> Result<String> {
    let splits = load_splits(cfg)?;
    let vocab = build_vocab(&splits.train).map_err(|e| CliError::input("vocabulary", e))?;
    let base = cfg.transformer_config()?;
    let seeds = cfg.seeds()?;
    let mut pinned = cfg.clone();
    pinned.pin_model()?;
    pinned.run.seeds = Some(seeds.clone());
    write(&out.join(EXPERIMENT_FILE), &pinned.to_toml())?;

    let n_languages = splits.train.languages.len();
    let results = run_ordered(&seeds, worker_count(), |&seed| -> Result<String> {
        let c = base.clone().with_seed(seed);
        let model = Model::new(c, vocab.source.len(), vocab.target.len(), n_languages).map_err(|e| CliError::Config(e.to_string()))?;
        let tm = train(model, &vocab, &splits.train, &splits.val).map_err(|e| CliError::Failed(format!("seed {seed}: {e}")))?;
        let dir = seed_dir(out, seed);
        save_trained(&dir, &tm).map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?;
        Ok(format!("seed {seed}: best epoch {} of {}, validation PED {:.4}", tm.best_epoch, tm.history.len(), tm.best_val_ped()))
    });
    let mut text = String::new();
    for r in results {
        text.push_str(&r?);
        text.push('\n');
    }
    Ok(text)
}

/// Metrics with FER when the data is phonetic. Tokens outside the feature
/// table drop FER for that run and leave a note.
fn score(preds: &[Word], golds: &[Word], ft: Option<&FeatureTable>, notes: &mut Vec<String>, who: &str) -> Result<MetricsReport> {
    match evaluate(preds, golds, ft) {
        Ok(r) => Ok(r),
        Err(MetricsError::UnknownToken(t)) => {
            notes.push(format!("{who}: FER omitted, segment {t:?} is not in the feature table"));
            evaluate(preds, golds, None).map_err(|e| CliError::Failed(e.to_string()))
        }
        Err(e) => Err(CliError::Failed(e.to_string())),
    }
}

pub struct EvalOutput {
    pub table: ResultsTable,
    pub notes: Vec<String>,
}

impl EvalOutput {
    pub fn to_text(&self) -> String {
        let mut s = self.table.to_text();
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

fn load_checkpoint(out: &Path, seed: u64, train: &Dataset) -> Result<TrainedModel> {
    let dir = seed_dir(out, seed);
    if !dir.is_dir() {
        return Err(CliError::Validation(format!("no checkpoint for seed {seed} in {}", out.display())));
    }
    let tm = load_trained(&dir).map_err(|e| CliError::input(dir.display().to_string(), e))?;
    if tm.languages != train.language_names() || tm.proto_name != train.proto_name {
        return Err(CliError::Validation(format!(
            "checkpoint {} was trained on languages {:?} -> {}, dataset has {:?} -> {}",
            dir.display(),
            tm.languages,
            tm.proto_name,
            train.language_names(),
            train.proto_name
        )));
    }
    Ok(tm)
}

fn model_rows(cfg: &ConfigFile, out: &Path, splits: &Splits, ft: Option<&FeatureTable>, notes: &mut Vec<String>) -> Result<SystemResult> {
    let seeds = cfg.seeds()?;
    let golds: Vec<Word> = splits.test.sets.iter().map(|s| s.proto.clone()).collect();
    let decoded = run_ordered(&seeds, worker_count(), |&seed| -> Result<Vec<Word>> {
        let tm = load_checkpoint(out, seed, &splits.train)?;
        let examples = splits
            .test
            .sets
            .iter()
            .map(|s| encode_cognate_set(s, &tm.vocab))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::input("test split", e))?;
        let preds = greedy_decode_batch(&tm.model, &tm.vocab.target, &examples, tm.max_decode_len, DECODE_BATCH)
            .map_err(|e| CliError::Failed(format!("seed {seed}: {e}")))?;
        Ok(preds.into_iter().map(|d| d.word).collect())
    });
    let mut runs = Vec::new();
    for (seed, preds) in seeds.iter().zip(decoded) {
        let preds = preds?;
        let mut tsv = String::from("set_id\tprediction\tgold\n");
        for ((s, p), g) in splits.test.sets.iter().zip(&preds).zip(&golds) {
            let _ = writeln!(tsv, "{}\t{}\t{}", s.set_id, p.spaced(), g.spaced());
        }
        let dir = seed_dir(out, *seed);
        write(&dir.join("predictions.tsv"), &tsv)?;
        let r = score(&preds, &golds, ft, notes, &format!("Transformer seed {seed}"))?;
        write(&dir.join("errors.txt"), &breakdown_text(&r.breakdown, 20))?;
        runs.push(r);
    }
    Ok(SystemResult { name: "Transformer".into(), runs })
}

fn baseline_rows(cfg: &ConfigFile, splits: &Splits, ft: Option<&FeatureTable>, notes: &mut Vec<String>) -> Result<Vec<SystemResult>> {
    let seeds = cfg.seeds()?;
    let test = &splits.test;
    let golds: Vec<Word> = test.sets.iter().map(|s| s.proto.clone()).collect();
    let n_lang = splits.train.languages.len();
    let (corpar_ctx, svm_ctx) = cfg.contexts()?;
    let failed = |e: BaselineError| CliError::Failed(e.to_string());
    let mut rows = Vec::new();
    for system in cfg.baseline_systems()? {
        match system.as_str() {
            "random" => {
                let mut runs = Vec::new();
                for &seed in &seeds {
                    let preds = test.sets.iter().map(|cs| random_daughter(cs, seed)).collect::<Result<Vec<_>, _>>().map_err(failed)?;
                    runs.push(score(&preds, &golds, ft, notes, "Random daughter")?);
                }
                rows.push(SystemResult { name: "Random daughter".into(), runs });
            }
            "majority" => match MajorityConstituent::fit(&splits.train) {
                Ok(m) => {
                    let preds = test.sets.iter().map(|cs| m.predict(cs)).collect::<Result<Vec<_>, _>>().map_err(failed)?;
                    let run = score(&preds, &golds, ft, notes, "Majority constituent")?;
                    rows.push(SystemResult { name: "Majority constituent".into(), runs: vec![run] });
                }
                Err(BaselineError::Unsupported(why)) => notes.push(format!("majority constituent skipped: {why}")),
                Err(e) => return Err(failed(e)),
            },
            "corpar" | "svm" => {
                let sites = align_cognates(&splits.train);
                let (kind, ctx, name, seeded) = if system == "corpar" {
                    (ClassifierKind::Pattern, corpar_ctx, format!("CorPaR{}", context_label(corpar_ctx)), false)
                } else {
                    (ClassifierKind::Linear, svm_ctx, format!("SVM{}", context_label(svm_ctx)), true)
                };
                let run_seeds: Vec<u64> = if seeded { seeds.clone() } else { vec![seeds[0]] };
                let mut runs = Vec::new();
                for seed in run_seeds {
                    let clf = train_site_classifier(&sites, kind, ctx, seed).map_err(failed)?;
                    let preds: Vec<Word> = test.sets.iter().map(|cs| reconstruct_with_classifier(&clf, cs, n_lang)).collect();
                    runs.push(score(&preds, &golds, ft, notes, &name)?);
                }
                rows.push(SystemResult { name, runs });
            }
            _ => unreachable!("validated by baseline_systems"),
        }
    }
    Ok(rows)
}

fn feature_table(cfg: &ConfigFile) -> Option<FeatureTable> {
    (cfg.dataset.tokenizer.mode == ScriptMode::Phonetic).then(FeatureTable::default)
}

/// Decodes the test split with every seed's checkpoint, runs the baselines
/// on the same split and writes `results.txt` and `results.csv`.
pub fn cmd_evaluate(cfg: &ConfigFile, out: &Path) -> Result<EvalOutput> {
    let splits = load_splits(cfg)?;
    let ft = feature_table(cfg);
    let mut notes = Vec::new();
    let mut rows = baseline_rows(cfg, &splits, ft.as_ref(), &mut notes)?;
    rows.push(model_rows(cfg, out, &splits, ft.as_ref(), &mut notes)?);
    let res = EvalOutput { table: ResultsTable { rows }, notes };
    write(&out.join("results.txt"), &res.to_text())?;
    write(&out.join("results.csv"), &res.table.to_csv())?;
    Ok(res)
}

/// Baselines only; writes `baselines.txt` and `baselines.csv`.
pub fn cmd_baseline(cfg: &ConfigFile, out: &Path) -> Result<EvalOutput> {
    let splits = load_splits(cfg)?;
    let ft = feature_table(cfg);
    let mut notes = Vec::new();
    let rows = baseline_rows(cfg, &splits, ft.as_ref(), &mut notes)?;
    let res = EvalOutput { table: ResultsTable { rows }, notes };
    write(&out.join("baselines.txt"), &res.to_text())?;
    write(&out.join("baselines.csv"), &res.table.to_csv())?;
    Ok(res)
}

/// Ward dendrogram of one model's language embeddings.
pub fn dendrogram(tm: &TrainedModel) -> Result<(Tree, String)> {
    let embs: Vec<(String, Vec<f64>)> = tm.languages.iter().cloned().zip(tm.model.language_embeddings()).collect();
    let m = cosine_distance_matrix(&embs).map_err(|e| CliError::Failed(e.to_string()))?;
    let t = ward_cluster(&m).map_err(|e| CliError::Failed(e.to_string()))?;
    Ok((t, m.to_csv()))
}

fn gold_tree(path: Option<&Path>, languages: &BTreeSet<String>) -> Result<Option<Tree>> {
    match path {
        Some(p) => {
            let text = read(p)?;
            parse_newick(text.trim()).map(Some).map_err(|e| CliError::input(p.display().to_string(), e))
        }
        None => {
            let romance = parse_newick(ROMANCE_GOLD_NEWICK.trim()).expect("bundled tree parses");
            Ok((romance.leaf_set() == *languages).then_some(romance))
        }
    }
}

/// Per-seed dendrograms, their consensus and GQD against the gold tree.
pub fn cmd_probe(cfg: &ConfigFile, out: &Path) -> Result<String> {
    let seeds = cfg.seeds()?;
    let mut trees = Vec::new();
    let mut languages = BTreeSet::new();
    for &seed in &seeds {
        let dir = seed_dir(out, seed);
        let tm = load_trained(&dir).map_err(|e| CliError::input(dir.display().to_string(), e))?;
        let (t, csv) = dendrogram(&tm)?;
        write(&dir.join("distances.csv"), &csv)?;
        write(&dir.join("dendrogram.nwk"), &format!("{}\n", to_newick(&t)))?;
        languages = t.leaf_set();
        trees.push((seed, t));
    }
    if trees.iter().any(|(_, t)| t.leaf_set() != languages) {
        return Err(CliError::Validation("checkpoints disagree on their language sets".into()));
    }
    let threshold = cfg.probe.threshold.unwrap_or(protorec::phylo::DEFAULT_THRESHOLD);
    let just_trees: Vec<Tree> = trees.iter().map(|(_, t)| t.clone()).collect();
    let cons = consensus(&just_trees, threshold).map_err(|e| CliError::Config(e.to_string()))?;
    write(&out.join("consensus.nwk"), &format!("{}\n", to_newick(&cons)))?;

    let mut text = String::new();
    for (seed, t) in &trees {
        let _ = writeln!(text, "seed {seed}: {}", to_newick(&t.without_heights()));
    }
    let _ = writeln!(text, "consensus ({} trees, threshold {threshold}): {}", trees.len(), to_newick(&cons));
    match gold_tree(cfg.probe.gold_tree.as_deref(), &languages)? {
        Some(gold) => {
            if gold.leaf_set() != languages {
                return Err(CliError::Validation(format!("gold tree leaves {:?} differ from model languages {:?}", gold.leaf_set(), languages)));
            }
            let d = |t: &Tree| gqd(&gold, t).map_err(|e| CliError::Validation(e.to_string()));
            let _ = writeln!(text, "gold: {}", to_newick(&gold));
            for (seed, t) in &trees {
                let _ = writeln!(text, "GQD seed {seed}: {:.4}", d(t)?);
            }
            let _ = writeln!(text, "GQD consensus: {:.4}", d(&cons)?);
        }
        None => text.push_str("no gold tree for these languages; GQD not computed\n"),
    }
    write(&out.join("probe.txt"), &text)?;
    Ok(text)
}

pub struct GradcheckOutput {
    pub text: String,
    pub passed: bool,
}

/// Finite-difference checks of every operator at each seed plus the tiny
/// model's end-to-end loss gradient. `analytic_scale` other than 1 corrupts
/// the operator gradients on purpose.
pub fn cmd_gradcheck(seeds: &[u64], samples: usize, analytic_scale: f64) -> Result<GradcheckOutput> {
    let mut text = String::new();
    let mut passed = true;
    let _ = writeln!(text, "{:<18} {:>12}  {:>8}  result", "op", "max rel err", "checked");
    for kind in OpKind::ALL {
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        let mut ok = true;
        for &seed in seeds {
            let r = grad_check_scaled(kind, seed, analytic_scale).map_err(|e| CliError::Failed(format!("{kind}: {e}")))?;
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
            ok &= r.passed();
        }
        passed &= ok;
        let _ = writeln!(text, "{:<18} {:>12.3e}  {:>8}  {}", kind.name(), worst, checked, if ok { "ok" } else { "FAIL" });
    }
    for &seed in seeds {
        let r = end_to_end_grad_check(seed, samples).map_err(|e| CliError::Failed(e.to_string()))?;
        passed &= r.passed();
        let _ = writeln!(
            text,
            "{:<18} {:>12.3e}  {:>8}  {}",
            format!("model seed {seed}"),
            r.max_rel_error,
            r.sampled,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    let _ = writeln!(text, "tolerance: {GRAD_TOL:e} per op, {MODEL_GRAD_TOL:e} end to end");
    Ok(GradcheckOutput { text, passed })
}

pub struct SynthArgs<'a> {
    pub rules: Option<&'a Path>,
    pub n_sets: usize,
    pub n_daughters: Option<usize>,
    pub attested: f64,
    pub seed: u64,
}

/// Corpus TSV from a rules file, or a tonal monosyllabic corpus without one.
pub fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let ds = match a.rules {
        Some(path) => {
            let rules = RuleSet::parse(&read(path)?).map_err(|e| CliError::input(path.display().to_string(), e))?;
            generate(&rules, &GenerateOptions { n_daughters: a.n_daughters, ..GenerateOptions::new(a.n_sets, a.seed) })
                .map_err(|e| CliError::input(path.display().to_string(), e))?
        }
        None => tonal_monosyllables(a.n_sets, a.n_daughters.unwrap_or(39), a.attested, a.seed).map_err(|e| CliError::input("synth", e))?,
    };
    Ok(ds.to_tsv())
}
