//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails. Runs over the bundled files in `data/`.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlink_core::blocking::{
    minhash_signature, percent_one_decimal, scurve_probability, BandConfig, HashFamily,
};
use rlink_core::config::LinkerConfig;
use rlink_core::evalbench::{
    blocking_tradeoff, evaluate, montecarlo_scurve, read_truth, trivial_baseline, EvalOptions,
    GroundTruthEntry,
};
use rlink_core::pipeline::{preprocess, LinkOptions, Linker, PreprocessOptions, Resources};
use rlink_core::scoring::name::weighted_name;
use rlink_core::scoring::strings::{jaccard_score_str, lev_score_str};
use rlink_core::scoring::{
    combine_maxmin, combine_mean, jaccard_score, lev_score,
    weighted_lev_score, CityTrie, Coord, Leaf, Node, ScoringConfig, ScoringContext, Strategy,
    WeightedString,
};
use rlink_core::shortname::{
    self, read_corpus, split_corpus, tokenize, FrequencyTable, LabeledName, ShortNameModel,
    TrainParams,
};
use rlink_core::store::QueryRecord;
use rlink_core::textnorm::{clean_blocking, clean_light, graphemes, shingles_of, LegalEntityLexicon};
use rlink_service::bench::{self, BenchSettings};
use rlink_service::server;

type Check = Result<String, String>;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Preprocessed bundled corpus with a short-name model trained on the
/// bundled short-name corpus.
struct Fixture {
    _dir: tempfile::TempDir,
    config: LinkerConfig,
    truth: Vec<GroundTruthEntry>,
    corpus: Vec<LabeledName>,
    freq: FrequencyTable,
    linker: Linker,
    setup: Duration,
}

impl Fixture {
    fn build() -> Result<Self, String> {
        let t = Instant::now();
        let data = data_dir();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let corpus = read_corpus(std::io::BufReader::new(
            std::fs::File::open(data.join("shortname_corpus.txt")).map_err(|e| e.to_string())?,
        ))
        .map_err(|e| e.to_string())?;
        let freq = FrequencyTable::load(&data.join("frequencies.tsv")).map_err(|e| e.to_string())?;
        let model = ShortNameModel::train(&corpus, &freq, TrainParams::default()).map_err(|e| e.to_string())?;
        let model_path = dir.path().join("shortname.model");
        model.save(&model_path).map_err(|e| e.to_string())?;

        let mut config = LinkerConfig::default();
        config.paths.entity_db = dir.path().join("entities.db");
        config.paths.blocking_db = dir.path().join("blocking.db");
        config.paths.gazetteer = Some(data.join("gazetteer.tsv"));
        config.paths.frequency_table = Some(data.join("frequencies.tsv"));
        config.paths.shortname_model = Some(model_path);
        preprocess(&data.join("companies.csv"), &config, PreprocessOptions::default()).map_err(|e| e.to_string())?;
        let truth = read_truth(std::fs::File::open(data.join("truth.tsv")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let linker = Linker::load(config.clone()).map_err(|e| e.to_string())?;
        Ok(Self {
            _dir: dir,
            config,
            truth,
            corpus,
            freq,
            linker,
            setup: t.elapsed(),
        })
    }
}

fn criterion_1() -> Check {
    let t = Instant::now();
    let table = [
        (0.5, [47.5, 43.5, 37.6]),
        (0.6, [75.0, 76.7, 76.1]),
        (0.7, [93.5, 96.3, 97.6]),
        (0.8, [99.4, 99.9, 99.9]),
    ];
    let mut worst: f64 = 0.0;
    for (s, row) in table {
        for (cfg, want) in BandConfig::PRESETS.iter().zip(row) {
            let p = scurve_probability(s, *cfg).map_err(|e| e.to_string())?;
            worst = worst.max((percent_one_decimal(p) - want).abs());
        }
    }
    let took = t.elapsed();
    ensure(
        worst <= 0.05 + 1e-9 && took < Duration::from_secs(1),
        format!("12 cells, max deviation {worst:.3} pp, {took:?}"),
    )
}

fn criterion_2() -> Check {
    let ct = clean_light;
    let near = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol;
    let e = |r: rlink_core::Result<f64>| r.map_err(|e| e.to_string());
    let mut failures = Vec::new();
    let mut check = |label: &str, got: f64, want: f64, tol: f64| {
        if !near(got, want, tol) {
            failures.push(format!("{label}: {got} vs {want}"));
        }
    };
    check("lev Dürr/Durr", e(lev_score(&ct("Dürr"), &ct("Durr")))?, 0.75, 1e-12);
    check("lev Dürr/Duerr", e(lev_score(&ct("Dürr"), &ct("Duerr")))?, 2.0 / 3.0, 1e-12);
    check("lev Garage Rex/Rey", e(lev_score(&ct("Garage Rex AG"), &ct("Garage Rey AG")))?, 0.92, 5e-3);
    check("jaccard téléski", e(jaccard_score(&ct("téléski"), &ct("teleski")))?, 0.2, 1e-12);
    check("jaccard Dürr/Durr", e(jaccard_score(&ct("Dürr"), &ct("Durr")))?, 0.2, 1e-12);
    check("jaccard Dürr/Duerr", e(jaccard_score(&ct("Dürr"), &ct("Duerr")))?, 1.0 / 6.0, 1e-12);

    let config = ScoringConfig::default();
    let lexicon = LegalEntityLexicon::bundled();
    let ctx = ScoringContext {
        config: &config,
        lexicon: &lexicon,
        trie: None,
    };
    let w = |s: &str| weighted_name(&ct(s), &HashSet::new(), &[], &ctx);
    check(
        "weighted lev AG/GmbH",
        e(weighted_lev_score(&w("Garage Rex AG"), &w("Garage Rex GmbH")))?,
        0.9092,
        1e-3,
    );
    check(
        "weighted lev Rex/Rey",
        e(weighted_lev_score(&w("Garage Rex AG"), &w("Garage Rey AG")))?,
        10.0 / 11.0,
        1e-3,
    );
    check("maxmin", combine_maxmin(1.0, 0.4, 0.9), 0.94, 1e-12);
    check("mean", combine_mean(1.0, 0.4), 0.7, 1e-12);
    ensure(failures.is_empty(), if failures.is_empty() { "11 goldens".into() } else { failures.join("; ") })
}

fn criterion_3() -> Check {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for cfg in BandConfig::PRESETS {
        for s in [0.5, 0.6, 0.7, 0.8] {
            let emp = montecarlo_scurve(cfg, s, 2000, 7).map_err(|e| e.to_string())?;
            let exact = scurve_probability(s, cfg).map_err(|e| e.to_string())?;
            worst = worst.max((emp - exact).abs());
        }
    }
    let took = t.elapsed();
    ensure(
        worst <= 0.03 && took < Duration::from_secs(60),
        format!("max |empirical - closed form| {:.2} pp over 12 cells, {took:?}", worst * 100.0),
    )
}

fn indel_oracle(a: &[&str], b: &[&str]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = if a[i - 1] == b[j - 1] { 0 } else { 2 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + sub);
        }
    }
    d[a.len()][b.len()]
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', 'r', 's', 't', 'ü', 'é', ' ', 'x'];
    let len = rng.gen_range(1..16);
    let s: String = (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect();
    format!("k{s}")
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let (a, b) = (clean_light(&random_name(&mut rng)), clean_light(&random_name(&mut rng)));
        let (ga, gb) = (graphemes(a.as_str()), graphemes(b.as_str()));
        let want = 1.0 - indel_oracle(&ga, &gb) as f64 / (ga.len() + gb.len()) as f64;
        if lev_score(&a, &b).map_err(|e| e.to_string())? != want {
            mismatches += 1;
        }
    }

    let family = HashFamily::new(11, 180);
    let mut abs_err = 0.0;
    for _ in 0..1000 {
        let base = random_name(&mut rng) + &random_name(&mut rng);
        let mut other: Vec<char> = base.chars().collect();
        for _ in 0..rng.gen_range(0..8) {
            let i = rng.gen_range(0..other.len());
            other[i] = ['q', 'z', 'y', 'w'][rng.gen_range(0..4)];
        }
        let other: String = other.into_iter().collect();
        let (sa, sb) = (shingles_of(&base), shingles_of(&other));
        if sa.is_empty() || sb.is_empty() {
            continue;
        }
        let exact = sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64;
        let siga = minhash_signature(sa.iter().map(|s| s.as_bytes()), &family).map_err(|e| e.to_string())?;
        let sigb = minhash_signature(sb.iter().map(|s| s.as_bytes()), &family).map_err(|e| e.to_string())?;
        abs_err += (siga.agreement(&sigb) - exact).abs();
    }
    let mae = abs_err / 1000.0;
    ensure(
        mismatches == 0 && mae <= 0.05,
        format!("lev mismatches {mismatches}/10000, MinHash MAE {mae:.4} at 180 hashes"),
    )
}

fn criterion_5(fx: &Fixture) -> Check {
    let t = Instant::now();
    let rls = evaluate(&fx.truth, &fx.linker, EvalOptions { strategy: Some(Strategy::Rls), ..EvalOptions::default() })
        .map_err(|e| e.to_string())?;
    let jac = evaluate(&fx.truth, &fx.linker, EvalOptions { strategy: Some(Strategy::Jaccard), ..EvalOptions::default() })
        .map_err(|e| e.to_string())?;
    let trivial = trivial_baseline(&fx.truth, fx.linker.store());
    let took = t.elapsed() + fx.setup;
    let (r, j, tr) = (rls.recall * 100.0, jac.recall * 100.0, trivial.recall * 100.0);
    ensure(
        fx.truth.len() == 450
            && fx.linker.store().len() == 10_000
            && r - j >= 10.0
            && r - tr >= 20.0
            && took < Duration::from_secs(120),
        format!(
            "recall rls {r:.1}%, jaccard {j:.1}%, trivial {tr:.1}% (gaps {:.1} / {:.1} points), {took:?}",
            r - j,
            r - tr
        ),
    )
}

fn criterion_6(fx: &Fixture) -> Check {
    let store = Arc::new(fx.linker.store().clone());
    let resources = Arc::new(Resources::load(&fx.config).map_err(|e| e.to_string())?);
    let rows = blocking_tradeoff(store, &BandConfig::PRESETS, &fx.truth, &fx.config, resources)
        .map_err(|e| e.to_string())?;
    let sizes_up = rows.windows(2).all(|w| w[1].index_bytes > w[0].index_bytes);
    let comps_down = rows.windows(2).all(|w| w[1].mean_comparisons < w[0].mean_comparisons);
    let recalls: Vec<f64> = rows.iter().map(|r| r.recall * 100.0).collect();
    let spread = recalls.iter().cloned().fold(f64::MIN, f64::max) - recalls.iter().cloned().fold(f64::MAX, f64::min);
    let detail = rows
        .iter()
        .map(|r| format!("{}: {} B, {:.1} cmp, {:.1}%", r.config, r.index_bytes, r.mean_comparisons, r.recall * 100.0))
        .collect::<Vec<_>>()
        .join("; ");
    ensure(sizes_up && comps_down && spread <= 2.0, format!("{detail}; recall spread {spread:.2}"))
}

fn is_subsequence(short: &[&str], tokens: &[String]) -> bool {
    let mut it = tokens.iter();
    short.iter().all(|s| it.any(|t| t == s))
}

fn criterion_7(fx: &Fixture) -> Check {
    let (train, test) = split_corpus(&fx.corpus, 0.8, 42).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let model = ShortNameModel::train(&train, &fx.freq, TrainParams::default()).map_err(|e| e.to_string())?;
    let took = t.elapsed();
    let metrics = shortname::evaluate(&model, &test, &fx.freq).map_err(|e| e.to_string())?;
    let mut violations = 0;
    for ex in &test {
        let raw = ex.raw.join(" ");
        let short = shortname::predict(&raw, &model, &fx.freq);
        let tokens: Vec<String> = tokenize(&raw).into_iter().map(|t| t.clean).collect();
        let parts: Vec<&str> = short.split(' ').collect();
        if short.is_empty() || !is_subsequence(&parts, &tokens) {
            violations += 1;
        }
    }
    ensure(
        fx.corpus.len() >= 1000 && metrics.macro_avg.f1 >= 0.85 && violations == 0 && took < Duration::from_secs(120),
        format!(
            "{} pairs, macro-F1 {:.3}, subsequence violations {violations}/{}, training {took:?}",
            fx.corpus.len(),
            metrics.macro_avg.f1,
            test.len()
        ),
    )
}

fn criterion_8(fx: &Fixture) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for run in 0..2 {
        let mut cfg = fx.config.clone();
        cfg.paths.entity_db = dir.path().join(format!("e{run}.db"));
        cfg.paths.blocking_db = dir.path().join(format!("b{run}.db"));
        preprocess(&data_dir().join("companies.csv"), &cfg, PreprocessOptions::default()).map_err(|e| e.to_string())?;
        let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
        bytes.push((read(&cfg.paths.entity_db)?, read(&cfg.paths.blocking_db)?));
    }
    let same_dbs = bytes[0] == bytes[1];

    let queries: Vec<QueryRecord> = fx.truth.iter().map(|e| e.query.clone()).collect();
    let serialize = |linker: &Linker| {
        let out: Vec<_> = linker
            .link_batch(&queries, &LinkOptions::default())
            .into_iter()
            .map(|r| r.map(|o| o.results).map_err(|e| e.to_string()))
            .collect::<Vec<_>>();
        serde_json::to_string(&out.iter().map(|r| r.as_ref().ok()).collect::<Vec<_>>()).expect("serializes")
    };
    let one = fx.linker.with_workers(1, 1).map_err(|e| e.to_string())?;
    let four = fx.linker.with_workers(4, 4).map_err(|e| e.to_string())?;
    let same_batches = serialize(&one) == serialize(&four);
    ensure(
        same_dbs && same_batches,
        format!("identical databases: {same_dbs}; identical 1- vs 4-worker results over {} queries: {same_batches}", queries.len()),
    )
}

async fn post(client: &reqwest::Client, url: &str, body: &serde_json::Value) -> Result<(u16, String), String> {
    let resp = client.post(url).json(body).send().await.map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    Ok((status, resp.text().await.map_err(|e| e.to_string())?))
}

fn criterion_9(fx: &Fixture) -> Check {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
        let url = format!("http://{}", listener.local_addr().map_err(|e| e.to_string())?);
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let handle = tokio::spawn(server::serve_on(listener, fx.config.clone(), async {
            let _ = stopped.await;
        }));
        bench::wait_ready(&url, Duration::from_secs(60)).await.map_err(|e| e.to_string())?;

        let batch: Vec<QueryRecord> = fx.truth.iter().map(|e| e.query.clone()).cycle().take(80).collect();
        let client = reqwest::Client::new();
        let body = serde_json::json!({ "queries": batch });
        let link = format!("{url}/link");
        let (s1, b1) = post(&client, &link, &body).await?;
        let (s2, b2) = post(&client, &link, &body).await?;
        let (c1, c2) = tokio::join!(post(&client, &link, &body), post(&client, &link, &body));
        let (c1, c2) = (c1?, c2?);
        let parsed: serde_json::Value = serde_json::from_str(&b1).map_err(|e| e.to_string())?;
        let results = parsed["results"].as_array().map(Vec::len).unwrap_or(0);
        let aligned = s1 == 200 && results == 80 && s2 == 200;
        let repeatable = b1 == b2 && c1 == c2 && c1.1 == b1;

        let run = |clients: usize, requests: usize| BenchSettings {
            url: url.clone(),
            clients,
            requests,
            batch: batch.clone(),
        };
        bench::run(&run(2, 5)).await.map_err(|e| e.to_string())?;
        let twelve = bench::run(&run(12, 10)).await.map_err(|e| e.to_string())?;
        let one = bench::run(&run(1, 40)).await.map_err(|e| e.to_string())?;
        let four = bench::run(&run(4, 40)).await.map_err(|e| e.to_string())?;
        let _ = stop.send(());
        handle.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;

        let hw = twelve.high_water_mark.max(four.high_water_mark);
        let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        ensure(
            hw <= 8 && aligned && repeatable && four.throughput_rps > one.throughput_rps,
            format!(
                "high-water {hw}, 80 aligned results: {aligned}, identical bodies: {repeatable}, \
                 throughput 1 client {:.1} req/s vs 4 clients {:.1} req/s ({cores} cores)",
                one.throughput_rps, four.throughput_rps
            ),
        )
    })
}

fn run_props<S, F>(name: &str, strategy: S, test: F) -> Result<String, String>
where
    S: proptest::strategy::Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner.run(&strategy, test).map(|_| name.to_string()).map_err(|e| format!("{name}: {e}"))
}

fn arb_node(leaves: usize) -> impl proptest::strategy::Strategy<Value = Node> {
    let leaf = (0..leaves).prop_map(|i| Node::Leaf(Leaf::Postal(i.to_string())));
    leaf.prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            prop::collection::vec((0.0f64..1.0, inner.clone()), 1..4).prop_map(|children| {
                let total: f64 = children.iter().map(|(w, _)| w).sum::<f64>().max(1e-9);
                Node::Sum(children.into_iter().map(|(w, n)| (w / total, n)).collect())
            }),
            prop::collection::vec(inner, 1..4).prop_map(Node::Max),
        ]
    })
}

fn criterion_10() -> Check {
    let name = "[a-zA-Z0-9 äöüéÉÜ&.,'-]{1,24}";
    let lexicon = LegalEntityLexicon::bundled();
    let mut passed = Vec::new();

    passed.push(run_props("string scores in [0,1] and symmetric", (name, name), |(a, b)| {
        if let (Ok(x), Ok(y)) = (lev_score_str(&a, &b), lev_score_str(&b, &a)) {
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(x, y);
        }
        if let (Ok(x), Ok(y)) = (jaccard_score_str(&a, &b), jaccard_score_str(&b, &a)) {
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(x, y);
        }
        let (wa, wb) = (WeightedString::uniform(&clean_light(&a)), WeightedString::uniform(&clean_light(&b)));
        if let (Ok(x), Ok(y)) = (weighted_lev_score(&wa, &wb), weighted_lev_score(&wb, &wa)) {
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - y).abs() < 1e-12);
        }
        Ok(())
    })?);

    passed.push(run_props(
        "tree evaluation monotone",
        (arb_node(6), prop::collection::vec(0.0f64..=1.0, 6), 0usize..6, 0.0f64..=1.0),
        |(node, scores, bump, delta)| {
            let eval = |s: &[f64]| {
                node.combine(&mut |leaf: &Leaf| match leaf {
                    Leaf::Postal(i) => s.get(i.parse::<usize>().ok()?).copied(),
                    _ => None,
                })
            };
            let before = eval(&scores).expect("all leaves present");
            let mut raised = scores.clone();
            raised[bump] = (raised[bump] + delta).min(1.0);
            let after = eval(&raised).expect("all leaves present");
            prop_assert!((0.0..=1.0).contains(&before));
            prop_assert!(after >= before - 1e-12);
            Ok(())
        },
    )?);

    passed.push(run_props("cleaning idempotent", name, |s| {
        let once = clean_light(&s);
        let twice = clean_light(once.as_str());
        prop_assert_eq!(twice.as_str(), once.as_str());
        let blocked = clean_blocking(&s, &lexicon);
        let again = clean_blocking(blocked.as_str(), &lexicon);
        prop_assert_eq!(again.as_str(), blocked.as_str());
        Ok(())
    })?);

    passed.push(run_props(
        "trie round-trip",
        prop::collection::vec(("[a-zA-Zäöü .-]{1,16}", -90.0f64..=90.0, -180.0f64..=180.0), 1..20),
        |cities| {
            let mut trie = CityTrie::new();
            let mut first: Vec<(String, Coord)> = Vec::new();
            let mut seen = BTreeSet::new();
            for (n, lat, lon) in &cities {
                let c = Coord::new(*lat, *lon).expect("in range");
                let key = rlink_core::scoring::geo::city_key(n);
                let inserted = trie.insert(n, c);
                prop_assert_eq!(inserted, !key.is_empty() && seen.insert(key.clone()));
                if inserted {
                    first.push((n.clone(), c));
                }
            }
            prop_assert_eq!(trie.len(), first.len());
            for (n, c) in first {
                prop_assert_eq!(trie.lookup(&n), Some(c));
            }
            Ok(())
        },
    )?);
    Ok(format!("{} suites x 1000 cases: {}", passed.len(), passed.join(", ")))
}

fn main() {
    let mut results: Vec<(u8, &str, Check)> = Vec::new();
    let guarded = |f: &dyn Fn() -> Check| -> Check {
        std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        })
    };
    results.push((1, "S-curve table", guarded(&criterion_1)));
    results.push((2, "worked-score goldens", guarded(&criterion_2)));
    results.push((3, "blocking Monte Carlo", guarded(&criterion_3)));
    results.push((4, "oracle equivalence", guarded(&criterion_4)));
    match Fixture::build() {
        Ok(fx) => {
            results.push((5, "end-to-end synthetic linkage", guarded(&|| criterion_5(&fx))));
            results.push((6, "blocking tradeoff shape", guarded(&|| criterion_6(&fx))));
            results.push((7, "short-name extractor", guarded(&|| criterion_7(&fx))));
            results.push((8, "determinism", guarded(&|| criterion_8(&fx))));
            results.push((9, "service contract", guarded(&|| criterion_9(&fx))));
        }
        Err(e) => {
            for (n, title) in [
                (5, "end-to-end synthetic linkage"),
                (6, "blocking tradeoff shape"),
                (7, "short-name extractor"),
                (8, "determinism"),
                (9, "service contract"),
            ] {
                results.push((n, title, Err(format!("fixture: {e}"))));
            }
        }
    }
    results.push((10, "property suites", guarded(&criterion_10)));

    let mut failed = 0;
    for (n, title, r) in &results {
        match r {
            Ok(d) => println!("PASS criterion {n:>2} {title}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n:>2} {title}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
