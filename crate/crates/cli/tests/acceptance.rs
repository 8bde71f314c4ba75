//! One line per acceptance criterion. Runs without the libtest harness so
//! the lines always reach the terminal; exits nonzero when any check fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use common::{check, csv_row, data_file, protorec, sinitic_reproduction, SINITIC_ENV};
use protorec::corpus::{build_vocab, encode_cognate_set, parse_dataset, ParseOptions, Token, TokenizerOptions, Word};
use protorec::metrics::{bcubed_f, bcubed_items, bcubed_score, edit_distance, feature_error_rate, FeatureTable, SiteLabel};
use protorec::phylo::{consensus, gqd, parse_newick, to_newick, ward_cluster, DistanceMatrix, Tree};
use protorec::synth::tonal_monosyllables;
use protorec::tensor::{grad_check_all, grad_check_scaled, OpKind};
use protorec::transformer::{end_to_end_grad_check, greedy_decode_batch, max_decode_len, train_with_hook, HookAction, Model, TransformerConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}
use Verdict::*;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn w(s: &str) -> Word {
    Word::from_spaced(s)
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let seeds = [0, 1, 2];
    let ops = grad_check_all(&seeds).unwrap();
    let worst_op = ops.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failing: Vec<String> = ops.iter().filter(|r| !r.passed()).map(|r| format!("{}@{}", r.kind, r.seed)).collect();
    let models: Vec<_> = seeds.iter().map(|&s| end_to_end_grad_check(s, 20).unwrap()).collect();
    let worst_model = models.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let corrupted_caught = !grad_check_scaled(OpKind::Softmax, 0, 1.01).unwrap().passed();
    let secs = start.elapsed().as_secs_f64();
    let ok = failing.is_empty() && models.iter().all(|r| r.passed() && r.sampled == 20) && corrupted_caught && secs < 60.0;
    verdict(
        ok,
        format!(
            "{} ops x 3 seeds, worst rel err {worst_op:.1e} (< 1e-4){}; tiny model worst {worst_model:.1e} over 20 params (< 1e-3); corrupted gradient {}; {secs:.1}s (< 60s)",
            OpKind::ALL.len(),
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") },
            if corrupted_caught { "caught" } else { "NOT caught" }
        ),
    )
}

fn lev_rec(a: &[Token], b: &[Token]) -> usize {
    match (a, b) {
        ([], _) => b.len(),
        (_, []) => a.len(),
        ([x, ra @ ..], [y, rb @ ..]) => (lev_rec(ra, rb) + usize::from(x != y)).min(lev_rec(ra, b) + 1).min(lev_rec(a, rb) + 1),
    }
}

fn all_words(alphabet: &[&str], max_len: usize) -> Vec<Word> {
    let mut out = vec![Vec::<Token>::new()];
    let mut frontier = out.clone();
    for _ in 0..max_len {
        frontier = frontier.iter().flat_map(|p| alphabet.iter().map(move |s| [p.clone(), vec![Token::new(*s)]].concat())).collect();
        out.extend(frontier.iter().cloned());
    }
    out.into_iter().map(Word::new).collect()
}

fn bcubed_enumerated(items: &[(SiteLabel, SiteLabel)]) -> f64 {
    let n = items.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for (gi, pi) in items {
        let both = items.iter().filter(|(g, q)| g == gi && q == pi).count() as f64;
        p += both / items.iter().filter(|(_, q)| q == pi).count() as f64;
        r += both / items.iter().filter(|(g, _)| g == gi).count() as f64;
    }
    let (p, r) = (p / n, r / n);
    2.0 * p * r / (p + r)
}

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[&str], max_len: usize) -> Word {
    (0..rng.gen_range(1..=max_len)).map(|_| Token::new(*alphabet.choose(rng).unwrap())).collect()
}

fn metric_oracles() -> Verdict {
    let words = all_words(&["a", "b", "tʰ"], 5);
    let mut mismatches = 0;
    for x in &words {
        for y in &words {
            mismatches += usize::from(edit_distance(x, y) != lev_rec(x.tokens(), y.tokens()));
        }
    }

    let ft = FeatureTable::default();
    let small = FeatureTable::parse_csv("token,f1,f2,f3\na,+,+,+\nb,+,+,-\nc,-,-,-\n").unwrap();
    let fer_cases = [
        (feature_error_rate(&w("k a tʰ o"), &w("k a t o"), &ft).unwrap(), 1.0 / 96.0),
        (feature_error_rate(&w("k a o"), &w("k a t o"), &ft).unwrap(), 0.25),
        (feature_error_rate(&w("a b"), &w("c"), &small).unwrap(), 5.0 / 3.0),
        (feature_error_rate(&w("a"), &w("b c"), &small).unwrap(), 2.0 / 3.0),
    ];
    let fer_ok = fer_cases.iter().all(|(got, want)| (got - want).abs() < 1e-12);

    let preds = vec![w("a b"), w("a a"), w("b")];
    let golds = vec![w("a b"), w("a b"), w("b b")];
    let f = bcubed_f(&preds, &golds).unwrap();
    let bcfs_ok = (f - 2.0 / 3.0).abs() < 1e-12 && (bcubed_enumerated(&bcubed_items(&preds, &golds).unwrap()) - f).abs() < 1e-12;

    let alphabet = ["a", "e", "i", "k", "t", "s"];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut relabel_ok = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..8);
        let golds: Vec<Word> = (0..n).map(|_| random_word(&mut rng, &alphabet, 5)).collect();
        let preds: Vec<Word> = (0..n).map(|_| random_word(&mut rng, &alphabet, 5)).collect();
        let mut image = alphabet.to_vec();
        image.shuffle(&mut rng);
        let map: HashMap<&str, &str> = alphabet.iter().copied().zip(image).collect();
        let items = bcubed_items(&preds, &golds).unwrap();
        let relabeled: Vec<(SiteLabel, SiteLabel)> = items
            .iter()
            .map(|(g, p)| match p {
                SiteLabel::Sym(t) => (g.clone(), SiteLabel::Sym(Token::new(map[t.as_str()]))),
                SiteLabel::Gap => (g.clone(), SiteLabel::Gap),
            })
            .collect();
        relabel_ok += usize::from((bcubed_f(&preds, &golds).unwrap() - bcubed_score(&relabeled)).abs() < 1e-12);
    }
    verdict(
        mismatches == 0 && fer_ok && bcfs_ok && relabel_ok == 100,
        format!(
            "edit distance {} word pairs vs recursion, {mismatches} mismatches; FER toys {}; BCFS toy 2/3 {}; relabel invariance {relabel_ok}/100 (on aligned sites)",
            words.len() * words.len(),
            if fer_ok { "exact" } else { "WRONG" },
            if bcfs_ok { "exact" } else { "WRONG" }
        ),
    )
}

fn overfit() -> Verdict {
    let start = Instant::now();
    let ds = tonal_monosyllables(50, 39, 0.6, 7).unwrap();
    let vocab = build_vocab(&ds).unwrap();
    let mut cfg = TransformerConfig::sinitic().with_seed(7);
    cfg.total_epochs = 300;
    let model = Model::new(cfg, vocab.source.len(), vocab.target.len(), ds.languages.len()).unwrap();
    let examples: Vec<_> = ds.sets.iter().map(|s| encode_cognate_set(s, &vocab).unwrap()).collect();
    let golds: Vec<Word> = ds.sets.iter().map(|s| s.proto.clone()).collect();
    let max_len = max_decode_len(&ds);
    let mut reached: Option<(usize, f64)> = None;
    let mut last = 0.0;
    train_with_hook(model, &vocab, &ds, &ds, |r, m| {
        if (r.epoch + 1) % 5 != 0 {
            return HookAction::Continue;
        }
        let preds = greedy_decode_batch(m, &vocab.target, &examples, max_len, 64).unwrap();
        let exact = preds.iter().zip(&golds).filter(|(p, g)| p.word == **g).count();
        last = 100.0 * exact as f64 / golds.len() as f64;
        if last >= 95.0 {
            reached = Some((r.epoch + 1, last));
            HookAction::Stop
        } else {
            HookAction::Continue
        }
    })
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    let stand_in = "synthetic 50-set tonal monosyllable corpus, 39 daughters, stands in for the Sinitic subset";
    match reached {
        Some((epoch, acc)) => verdict(secs < 600.0, format!("{acc:.0}% training accuracy at epoch {epoch} (>= 95% within 300), {secs:.0}s (< 600s); {stand_in}")),
        None => Fail(format!("training accuracy {last:.0}% after 300 epochs; {stand_in}")),
    }
}

fn synthetic_end_to_end() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.tsv");
    let out = dir.path().join("run");
    let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());
    let rules = data_file("five_daughters.rules");
    let config = data_file("synthetic.toml");
    let steps = || -> Result<(f64, f64), String> {
        check(&protorec(&["synth", "--rules", rules.to_str().unwrap(), "--n-sets", "500", "--seed", "0", "--out", data_s], &[]), "synth")?;
        check(&protorec(&["train", "--config", config.to_str().unwrap(), "--dataset", data_s, "--out", out_s], &[]), "train")?;
        check(&protorec(&["evaluate", "--out", out_s, "--baselines", "random"], &[]), "evaluate")?;
        let csv = std::fs::read_to_string(out.join("results.csv")).map_err(|e| e.to_string())?;
        let model = csv_row(&csv, "Transformer").ok_or("missing Transformer row")?.0;
        let random = csv_row(&csv, "Random daughter").ok_or("missing random row")?.0;
        Ok((model, random))
    };
    match steps() {
        Ok((model, random)) => {
            let secs = start.elapsed().as_secs_f64();
            verdict(
                model >= 85.0 && model - random >= 30.0 && secs < 1800.0,
                format!("500 sets, 5 daughters x 4 rules: Transformer {model:.2}% vs random daughter {random:.2}% (margin {:.2} pp >= 30, >= 85% absolute), {secs:.0}s", model - random),
            )
        }
        Err(e) => Fail(e),
    }
}

fn sinitic() -> Verdict {
    let Ok(path) = std::env::var(SINITIC_ENV) else {
        return Skipped(format!(
            "BLOCKED: the Sinitic dataset is not available offline; set {SINITIC_ENV}=<path> to run 10 seeds (target: mean Acc >= 33%, PED <= 1.15)"
        ));
    };
    let dir = tempfile::tempdir().unwrap();
    match sinitic_reproduction(Path::new(&path), dir.path()) {
        Ok(r) => verdict(r.accuracy >= 33.0 && r.ped <= 1.15, format!("mean accuracy {:.2}% (>= 33), mean PED {:.4} (<= 1.15)", r.accuracy, r.ped)),
        Err(e) => Fail(e),
    }
}

fn splits_of(t: &Tree) -> Vec<BTreeSet<String>> {
    (0..t.nodes().len()).filter(|&i| i != t.root()).map(|i| t.leaves_under(i).into_iter().map(|l| t.node(l).label.clone().unwrap()).collect()).collect()
}

fn oracle_pairing(sp: &[BTreeSet<String>], q: [&str; 4]) -> Option<usize> {
    let pairings = [([0, 1], [2, 3]), ([0, 2], [1, 3]), ([0, 3], [1, 2])];
    pairings.iter().position(|(x, y)| {
        sp.iter().any(|s| {
            let side = |ix: &[usize; 2], inside: bool| ix.iter().all(|&i| s.contains(q[i]) == inside);
            (side(x, true) && side(y, false)) || (side(y, true) && side(x, false))
        })
    })
}

fn oracle_gqd(gold: &Tree, test: &Tree) -> f64 {
    let ls: Vec<String> = gold.leaf_set().into_iter().collect();
    let (sg, st) = (splits_of(gold), splits_of(test));
    let (mut resolved, mut differ) = (0, 0);
    let n = ls.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let q = [ls[a].as_str(), ls[b].as_str(), ls[c].as_str(), ls[d].as_str()];
                    if let Some(g) = oracle_pairing(&sg, q) {
                        resolved += 1;
                        differ += usize::from(oracle_pairing(&st, q) != Some(g));
                    }
                }
            }
        }
    }
    differ as f64 / resolved as f64
}

fn phylogeny() -> Verdict {
    let m = DistanceMatrix::new(vec!["A".into(), "B".into(), "C".into()], vec![vec![0.0, 1.0, 4.0], vec![1.0, 0.0, 5.0], vec![4.0, 5.0, 0.0]]).unwrap();
    let t = ward_cluster(&m).unwrap();
    let ward_ok = t.merge_heights() == vec![1.0, 27f64.sqrt()] && t.same_topology(&parse_newick("((A,B),C);").unwrap());

    let all = ["A", "B", "C", "D", "E"];
    let mut trees = Vec::new();
    for mid in all {
        let r: Vec<&str> = all.iter().copied().filter(|&x| x != mid).collect();
        for (p, q) in [([0, 1], [2, 3]), ([0, 2], [1, 3]), ([0, 3], [1, 2])] {
            trees.push(parse_newick(&format!("(({},{}),{mid},({},{}));", r[p[0]], r[p[1]], r[q[0]], r[q[1]])).unwrap());
        }
    }
    let gold = parse_newick("((A,B),C,(D,E));").unwrap();
    let gqd_matches = trees.iter().filter(|t| gqd(&gold, t).unwrap() == oracle_gqd(&gold, t)).count();
    let mut values = BTreeMap::new();
    for t in &trees {
        *values.entry((gqd(&gold, t).unwrap() * 5.0).round() as i64).or_insert(0) += 1;
    }

    let p = |s: &str| parse_newick(s).unwrap();
    let cases = [
        (vec![p("((A,B),(C,D));"); 10], 0.5, "((A,B),(C,D));"),
        (vec![p("((A,B),C,D);"), p("((A,B),(C,D));"), p("((A,C),B,D);")], 0.5, "((A,B),C,D);"),
        (vec![p("((A,B),C,D);"), p("((A,C),B,D);"), p("((A,D),B,C);")], 0.5, "(A,B,C,D);"),
        (vec![p("((A,B),C,D);"), p("((A,C),B,D);")], 0.5, "(A,B,C,D);"),
        (vec![p("(((A,B),C),(D,E));"), p("(((A,B),D),(C,E));"), p("((A,B),(C,(D,E)));")], 0.5, "((A,B),C,(D,E));"),
    ];
    let consensus_ok = cases.iter().filter(|(ts, th, want)| to_newick(&consensus(ts, *th).unwrap()) == *want).count();
    verdict(
        ward_ok && gqd_matches == 15 && consensus_ok == cases.len(),
        format!(
            "Ward 3-point heights [1, sqrt 27] {}; GQD = quartet oracle on {gqd_matches}/15 five-leaf topologies (counts by k/5: {values:?}); consensus {consensus_ok}/{} cases; Romance GQD 0.4 is a soft target only",
            if ward_ok { "exact" } else { "WRONG" },
            cases.len()
        ),
    )
}

/// A small cognate table in the Romance layout: Latin in the second column,
/// length and stress marks, a few missing reflexes.
fn romance_like(orthographic: bool) -> String {
    let stems: [[&str; 6]; 6] = if orthographic {
        [
            ["casa", "casă", "chez", "casa", "casa", "casa"],
            ["lupus", "lup", "loup", "lupo", "lobo", "lobo"],
            ["nocte", "noapte", "nuit", "notte", "noche", "noite"],
            ["octo", "opt", "huit", "otto", "ocho", "oito"],
            ["factum", "fapt", "fait", "fatto", "hecho", "feito"],
            ["lacte", "lapte", "lait", "latte", "leche", "leite"],
        ]
    } else {
        [
            ["ˈkaːsa", "ˈkasə", "ʃe", "ˈkaːsa", "ˈkasa", "ˈkazɐ"],
            ["ˈlupus", "lup", "lu", "ˈlupo", "ˈlobo", "ˈlobu"],
            ["ˈnokte", "ˈno̯apte", "nɥi", "ˈnɔtte", "ˈnotʃe", "ˈnojtɨ"],
            ["ˈokto", "opt", "ɥit", "ˈɔtto", "ˈotʃo", "ˈojtu"],
            ["ˈfaktum", "fapt", "fɛ", "ˈfatto", "ˈetʃo", "ˈfɐjtu"],
            ["ˈlakte", "ˈlapte", "lɛ", "ˈlatte", "ˈletʃe", "ˈlɐjtɨ"],
        ]
    };
    let mut s = String::from("id\tLatin\tRomanian\tFrench\tItalian\tSpanish\tPortuguese\n");
    for k in 0..5 {
        let suffix = ["", "m", "s", "n", "r"][k];
        for (i, row) in stems.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(c, f)| if c > 0 && (i + k + c) % 7 == 0 { String::new() } else { format!("{f}{suffix}") })
                .collect();
            s.push_str(&format!("r{k}{i}\t{}\n", cells.join("\t")));
        }
    }
    s
}

fn romance_loader() -> Verdict {
    let opts = ParseOptions { proto_column: Some("Latin".into()), tokenizer: TokenizerOptions { strip_length: true, ..Default::default() } };
    let ds = match parse_dataset(&romance_like(false), &opts) {
        Ok(d) => d,
        Err(e) => return Fail(format!("phonetic file did not parse: {e}")),
    };
    let langs_ok = ds.language_names() == ["Romanian", "French", "Italian", "Spanish", "Portuguese"] && ds.proto_name == "Latin";
    let no_length = ds.sets.iter().all(|s| s.proto.iter().chain(s.daughters.values().flat_map(|d| d.iter())).all(|t| !t.as_str().contains('ː')));
    let missing = ds.sets.iter().map(|s| 5 - s.daughters.len()).sum::<usize>();

    let dir = tempfile::tempdir().unwrap();
    let (phon, orth) = (dir.path().join("phon.tsv"), dir.path().join("orth.tsv"));
    std::fs::write(&phon, romance_like(false)).unwrap();
    std::fs::write(&orth, romance_like(true)).unwrap();
    let run = |file: &Path, extra: &[&str]| -> Result<String, String> {
        let out = dir.path().join(file.file_stem().unwrap());
        let mut args = vec!["baseline", "--dataset", file.to_str().unwrap(), "--proto-column", "Latin", "--preset", "romance"];
        args.extend(["--baselines", "random,corpar,svm", "--seeds", "0", "--out", out.to_str().unwrap()]);
        args.extend(extra);
        check(&protorec(&args, &[]), "baseline")
    };
    let (phon_table, orth_table) = match (run(&phon, &["--strip-length"]), run(&orth, &["--orthographic"])) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Fail(e),
    };
    let fer_column = |t: &str| t.lines().nth(1).map(|l| l.split("  ").filter(|c| !c.is_empty()).nth(5).unwrap_or("").trim().to_string());
    let phon_fer = fer_column(&phon_table).unwrap_or_default();
    let orth_fer = fer_column(&orth_table).unwrap_or_default();
    let fer_ok = phon_fer.parse::<f64>().is_ok() && orth_fer == "\u{2212}";
    verdict(
        langs_ok && no_length && missing > 0 && fer_ok,
        format!(
            "synthetic file in the restricted dataset's layout: {} sets, 5 daughters + Latin, {missing} missing reflexes, length stripped {}; FER phonetic {phon_fer} / orthographic {orth_fer}; full-data rows not reproducible; soft targets (public subset, 1 run): Rom-phon Transformer PED 1.2516 Acc 41.38% BCFS 0.7790, Rom-orth PED 1.1622 Acc 45.53% BCFS 0.7989",
            ds.len(),
            if no_length { "yes" } else { "NO" }
        ),
    )
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let rules = data_file("five_daughters.rules");
    let config = data_file("synthetic.toml");
    let mut stdouts: Vec<Vec<String>> = Vec::new();
    let mut trees = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "2")] {
        let root = dir.path().join(run);
        let data = dir.path().join(format!("data_{run}.tsv"));
        let out = root.join("out");
        let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());
        let shared = dir.path().join("data_a.tsv");
        let shared_s = shared.to_str().unwrap();
        let env = [("PROTOREC_WORKERS", workers)];
        let commands: Vec<Vec<&str>> = vec![
            vec!["synth", "--rules", rules.to_str().unwrap(), "--n-sets", "80", "--seed", "3", "--out", data_s],
            vec!["synth", "--n-sets", "30", "--n-daughters", "6", "--seed", "4"],
            vec!["train", "--config", config.to_str().unwrap(), "--dataset", shared_s, "--epochs", "3", "--seeds", "0,1", "--out", out_s],
            vec!["evaluate", "--out", out_s],
            vec!["baseline", "--out", out_s],
            vec!["probe", "--out", out_s],
            vec!["gradcheck", "--seeds", "0"],
        ];
        let mut outs = Vec::new();
        for c in &commands {
            match check(&protorec(c, &env), c[0]) {
                Ok(s) => outs.push(s),
                Err(e) => return Fail(e),
            }
        }
        stdouts.push(outs);
        trees.push((files_under(&root), std::fs::read(&data).unwrap()));
    }
    let same_stdout = stdouts[0] == stdouts[1];
    let same_files = trees[0] == trees[1];
    let n_files = trees[0].0.len();
    verdict(
        same_stdout && same_files && n_files > 0,
        format!(
            "synth, train (2 seeds, 1 vs 2 workers), evaluate, baseline, probe, gradcheck rerun: stdout {}, {n_files} output files {}",
            if same_stdout { "identical" } else { "DIFFERENT" },
            if same_files { "byte-identical" } else { "DIFFER" }
        ),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let checks: [(&str, fn() -> Verdict); 8] = [
        ("gradient correctness", gradients),
        ("metric oracles", metric_oracles),
        ("overfit", overfit),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("Sinitic reproduction", sinitic),
        ("phylogeny suite", phylogeny),
        ("Romance loader", romance_loader),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = std::panic::catch_unwind(f).unwrap_or_else(|_| Fail("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skipped(d) => ("SKIPPED", d),
        };
        println!("acceptance {tag:<7} {name}: {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
