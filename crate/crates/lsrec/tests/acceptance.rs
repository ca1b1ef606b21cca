//! Acceptance gate for the whole engine. One test per criterion, each
//! ending in a single `[acceptance] <name>: PASS (...)` line. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use lsrec::data::{
    self, Driver, GeneratorConfig, Split, SplitBoundaries, TrainingExample,
};
use lsrec::eval::{self, ProtocolSpec, Side};
use lsrec::gradsuite;
use lsrec::metrics::{self, UserScores};
use lsrec::model::{checkpoint, losses, ContrastiveKind, Model, ModelConfig};
use lsrec::seeding;
use lsrec::train::{StepRecord, Trainer};
use lsrec::autodiff::{Graph, Tensor};

fn pass(name: &str, detail: String) {
    println!("[acceptance] {name}: PASS ({detail})");
}

macro_rules! check {
    ($cond:expr, $name:expr, $($why:tt)+) => {
        assert!($cond, "[acceptance] {}: FAIL ({})", $name, format!($($why)+));
    };
}

// ---------------------------------------------------------------- corpora

fn sanity_gen() -> GeneratorConfig {
    GeneratorConfig {
        n_users: 200,
        n_items: 500,
        n_topics: 20,
        items_per_topic: 25,
        seq_len_min: 30,
        seq_len_max: 60,
        w_long: 0.5,
        drift_rate: 0.2,
    }
}

const SANITY_SEED: u64 = 77;

fn trend_gen() -> GeneratorConfig {
    GeneratorConfig {
        n_users: 200,
        n_items: 500,
        n_topics: 20,
        items_per_topic: 25,
        seq_len_min: 30,
        seq_len_max: 60,
        w_long: 0.4,
        drift_rate: 0.1,
    }
}

const TREND_SEED: u64 = 101;
const TREND_LR: f64 = 0.003;
const TREND_EPOCHS: usize = 20;
const TREND_NEGATIVES: usize = 9;
const EVAL_NEGATIVES: usize = 49;
const BATCH: usize = 64;
const NDCG_K: usize = 2;

fn trend_model_config(beta: f64) -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        pred_hidden: vec![32, 16],
        contrastive_weight: beta,
        contrastive: ContrastiveKind::Bpr,
        max_seq_len: 50,
        ..ModelConfig::default()
    }
}

struct TrendFixture {
    aligned: Model,
    plain: Model,
    test: Vec<TrainingExample>,
    tags: Vec<String>,
    build_seconds: f64,
}

static TREND: OnceLock<TrendFixture> = OnceLock::new();

fn train_trend_model(
    beta: f64,
    train: &[TrainingExample],
    n_users: usize,
    n_items: usize,
) -> Model {
    let config = trend_model_config(beta);
    let mut trainer = Trainer::new(&config, n_users, n_items, TREND_SEED, TREND_LR).unwrap();
    for _ in 0..TREND_EPOCHS {
        trainer
            .run_epoch(train, BATCH, |r| {
                assert!(r.joint.is_finite(), "non-finite loss at step {}", r.step);
                Ok(())
            })
            .expect("trend training epoch");
    }
    trainer.model
}

/// One corpus, two models trained with the identical seed and schedule;
/// they differ only in the alignment weight (0.1 vs 0).
fn trend() -> &'static TrendFixture {
    TREND.get_or_init(|| {
        let clock = Instant::now();
        let (records, drivers) = data::synthesize(&trend_gen(), TREND_SEED).unwrap();
        let ds = data::build_dataset(&records, &drivers, &SplitBoundaries::default()).unwrap();
        let train =
            data::build_examples(&ds, Split::Train, TREND_NEGATIVES, 50, TREND_SEED).unwrap();
        let test = data::build_examples(&ds, Split::Test, EVAL_NEGATIVES, 50, TREND_SEED).unwrap();
        let aligned = train_trend_model(0.1, &train, ds.n_users(), ds.n_items());
        let plain = train_trend_model(0.0, &train, ds.n_users(), ds.n_items());
        TrendFixture {
            aligned,
            plain,
            test,
            tags: ds.behavior_tags.clone(),
            build_seconds: clock.elapsed().as_secs_f64(),
        }
    })
}

// ------------------------------------------------------------ criterion 1

#[test]
fn gradient_suite() {
    const NAME: &str = "gradient_suite";
    let clock = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let checks = gradsuite::run_full_suite(&seeds, 1e-5, 1e-4);
    let elapsed = clock.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    let mut refined = 0;
    for c in &checks {
        check!(
            c.passed,
            NAME,
            "case {} exceeded 1e-4: worst rel err {:.3e}",
            c.name,
            c.worst_rel
        );
        worst = worst.max(c.worst_rel);
        refined += c.refined;
    }
    check!(checks.len() >= 11, NAME, "only {} cases ran", checks.len());
    check!(elapsed < 60.0, NAME, "took {elapsed:.1}s, budget 60s");
    pass(
        NAME,
        format!(
            "{} cases x 10 seeds, worst rel err {:.2e}, {} near-hinge refinements, {:.1}s",
            checks.len(),
            worst,
            refined,
            elapsed
        ),
    );
}

// ------------------------------------------------------------ criterion 2

fn rank_statistic_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = mid;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|l| **l).count() as f64;
    let n_neg = n as f64 - n_pos;
    let r_pos: f64 = (0..n).filter(|&k| labels[k]).map(|k| ranks[k]).sum();
    (r_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

#[test]
fn metric_oracles() {
    const NAME: &str = "metric_oracles";
    let clock = Instant::now();
    let mut rng = seeding::stream(2024, "acceptance/metrics");
    for case in 0..100 {
        let n = rng.random_range(2..=50);
        let mut scores: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        // force tie groups in a third of the cases
        if n >= 4 && case % 3 == 0 {
            for _ in 0..n / 3 {
                let from = rng.random_range(0..n);
                let to = rng.random_range(0..n);
                scores[to] = scores[from];
            }
        }
        let n_pos = rng.random_range(1..n);
        let mut labels = vec![false; n];
        for l in labels.iter_mut().take(n_pos) {
            *l = true;
        }
        // deterministic Fisher-Yates over label positions
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            labels.swap(i, j);
        }
        if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
            continue;
        }
        let pair_counted = metrics::auc(&scores, &labels).unwrap();
        let rank_based = rank_statistic_auc(&scores, &labels);
        check!(
            pair_counted == rank_based,
            NAME,
            "case {case}: pair counting {pair_counted} != rank statistic {rank_based}"
        );
    }

    // worked examples, hand-computed
    let auc = metrics::auc(&[0.8, 0.9, 0.7, 0.1], &[true, false, false, false]).unwrap();
    check!((auc - 2.0 / 3.0).abs() < 1e-15, NAME, "auc {auc} != 2/3");

    let users = [
        UserScores {
            scores: vec![1.0, 0.0, 1.0, 0.0],
            labels: vec![true, false, true, false],
            instances: 2,
        },
        UserScores {
            scores: vec![0.5, 0.5],
            labels: vec![true, false],
            instances: 1,
        },
    ];
    let g = metrics::gauc(&users).unwrap();
    check!(
        (g.value - 5.0 / 6.0).abs() < 1e-15,
        NAME,
        "gauc {} != 5/6",
        g.value
    );

    check!(
        metrics::positive_rank(&[0.9, 0.2, 0.1], 0) == 1.0,
        NAME,
        "top rank"
    );
    check!(
        metrics::reciprocal_rank(&[0.1, 0.5, 0.9], 0) == 1.0 / 3.0,
        NAME,
        "rank 3 reciprocal"
    );
    let tied = metrics::reciprocal_rank(&[0.9, 0.9, 0.1], 0);
    check!(
        (tied - 1.0 / 1.5).abs() < 1e-15,
        NAME,
        "tied-top reciprocal {tied} != 1/1.5"
    );

    check!(metrics::ndcg_at_k(1.0, 2) == 1.0, NAME, "ndcg rank 1");
    let n2 = metrics::ndcg_at_k(2.0, 2);
    check!(
        (n2 - 1.0 / 3f64.log2()).abs() < 1e-15,
        NAME,
        "ndcg rank 2 {n2} != 1/log2(3)"
    );
    check!(metrics::ndcg_at_k(3.0, 2) == 0.0, NAME, "ndcg past cutoff");

    let elapsed = clock.elapsed().as_secs_f64();
    check!(elapsed < 60.0, NAME, "took {elapsed:.1}s");
    pass(
        NAME,
        format!("100 instances pair-count == rank-statistic, worked examples match, {elapsed:.2}s"),
    );
}

// ------------------------------------------------------------ criterion 3

#[test]
fn loss_closed_forms() {
    const NAME: &str = "loss_closed_forms";

    // equal similarity scores: softplus(0) = ln 2
    let mut g = Graph::new();
    let a = g.input(Tensor::vector(vec![1.0, 0.0, 2.0]));
    let p = g.input(Tensor::vector(vec![0.4, 1.0, 0.3]));
    let q = g.input(Tensor::vector(vec![0.4, -2.0, 0.3]));
    let l = losses::bpr_pair(&mut g, a, p, q).unwrap();
    let got = g.value(l).item();
    check!(
        (got - std::f64::consts::LN_2).abs() <= 1e-12,
        NAME,
        "equal-score pairwise loss {got} != ln 2"
    );

    // representations equal to their own proxies, all four mutually
    // orthonormal: every term is softplus(-1)
    let mut g = Graph::new();
    let u_long = g.input(Tensor::vector(vec![1.0, 0.0, 0.0, 0.0]));
    let p_long = g.input(Tensor::vector(vec![1.0, 0.0, 0.0, 0.0]));
    let u_short = g.input(Tensor::vector(vec![0.0, 1.0, 0.0, 0.0]));
    let p_short = g.input(Tensor::vector(vec![0.0, 1.0, 0.0, 0.0]));
    let total = losses::contrastive_total(
        &mut g,
        ContrastiveKind::Bpr,
        1.0,
        u_long,
        u_short,
        p_long,
        p_short,
    )
    .unwrap();
    let got = g.value(total).item();
    let want = 4.0 * (1.0 + (-1.0f64).exp()).ln();
    check!(
        (got - want).abs() <= 1e-9,
        NAME,
        "orthonormal alignment loss {got} != 4 ln(1+e^-1) = {want}"
    );

    // hinge exactly on the boundary: d(a,p) - d(a,q) + m = 0
    let mut g = Graph::new();
    let a = g.input(Tensor::vector(vec![0.0, 0.0]));
    let p = g.input(Tensor::vector(vec![0.0, 0.0]));
    let q = g.input(Tensor::vector(vec![0.5, 0.0]));
    let l = losses::triplet_pair(&mut g, a, p, q, 0.5).unwrap();
    let got = g.value(l).item();
    check!(got == 0.0, NAME, "boundary triplet loss {got} != 0 exactly");

    pass(
        NAME,
        "ln 2 within 1e-12, 4 ln(1+e^-1) within 1e-9, hinge boundary exactly 0".to_string(),
    );
}

// ------------------------------------------------------------ criterion 4

#[test]
fn training_sanity() {
    const NAME: &str = "training_sanity";
    let clock = Instant::now();
    let (records, drivers) = data::synthesize(&sanity_gen(), SANITY_SEED).unwrap();
    let ds = data::build_dataset(&records, &drivers, &SplitBoundaries::default()).unwrap();
    let train = data::build_examples(&ds, Split::Train, 9, 50, SANITY_SEED).unwrap();
    let config = trend_model_config(0.1);
    let mut trainer = Trainer::new(&config, ds.n_users(), ds.n_items(), SANITY_SEED, 0.001).unwrap();
    let mut rec = Vec::new();
    while rec.len() < 200 {
        trainer
            .run_epoch(&train, BATCH, |r| {
                check!(
                    r.joint.is_finite() && r.rec_mean.is_finite(),
                    NAME,
                    "non-finite loss at step {}",
                    r.step
                );
                rec.push(r.rec_mean);
                Ok(())
            })
            .unwrap();
    }
    let initial: f64 = rec[..20].iter().sum::<f64>() / 20.0;
    let settled: f64 = rec[180..200].iter().sum::<f64>() / 20.0;
    let drop = (initial - settled) / initial;
    let elapsed = clock.elapsed().as_secs_f64();
    check!(
        drop >= 0.20,
        NAME,
        "smoothed recommendation loss fell only {:.1}% ({} -> {})",
        drop * 100.0,
        initial,
        settled
    );
    check!(elapsed < 180.0, NAME, "took {elapsed:.1}s, budget 180s");
    pass(
        NAME,
        format!(
            "window-20 loss {:.4} -> {:.4}, drop {:.1}%, {:.0}s",
            initial,
            settled,
            drop * 100.0,
            elapsed
        ),
    );
}

// ------------------------------------------------------------ criterion 5

#[test]
fn contrastive_alignment() {
    const NAME: &str = "contrastive_alignment";
    let clock = Instant::now();
    let fx = trend();
    let aligned = eval::disentanglement_report(&fx.aligned, &fx.test, &fx.tags, NDCG_K).unwrap();
    let plain = eval::disentanglement_report(&fx.plain, &fx.test, &fx.tags, NDCG_K).unwrap();
    let gap_long = aligned.cos_long_long - aligned.cos_long_short;
    let gap_short = aligned.cos_short_short - aligned.cos_short_long;
    let plain_long = plain.cos_long_long - plain.cos_long_short;
    let plain_short = plain.cos_short_short - plain.cos_short_long;
    check!(
        gap_long > 0.0,
        NAME,
        "long-side proxy gap not positive: {gap_long}"
    );
    check!(
        gap_short > 0.0,
        NAME,
        "short-side proxy gap not positive: {gap_short}"
    );
    check!(
        plain_long < gap_long,
        NAME,
        "unaligned long gap {plain_long} not below aligned {gap_long}"
    );
    check!(
        plain_short < gap_short,
        NAME,
        "unaligned short gap {plain_short} not below aligned {gap_short}"
    );
    let elapsed = fx.build_seconds + clock.elapsed().as_secs_f64();
    check!(elapsed < 600.0, NAME, "took {elapsed:.0}s, budget 600s");
    pass(
        NAME,
        format!(
            "held-out gaps long {:.3} short {:.3}; without alignment {:.3} / {:.3}; {:.0}s",
            gap_long, gap_short, plain_long, plain_short, elapsed
        ),
    );
}

// ------------------------------------------------------------ criterion 6

#[test]
fn counterfactual_trends() {
    const NAME: &str = "counterfactual_trends";
    let clock = Instant::now();
    let fx = trend();
    let shuffle = ProtocolSpec::shuffle(17);

    let base_long = eval::one_side_eval(&fx.aligned, &fx.test, Side::Long, NDCG_K).unwrap();
    let base_short = eval::one_side_eval(&fx.aligned, &fx.test, Side::Short, NDCG_K).unwrap();
    let shuf_long = eval::evaluate(&fx.aligned, &fx.test, Side::Long, &shuffle, NDCG_K).unwrap();
    let shuf_short = eval::evaluate(&fx.aligned, &fx.test, Side::Short, &shuffle, NDCG_K).unwrap();
    let drop_long = base_long.auc - shuf_long.auc;
    let drop_short = base_short.auc - shuf_short.auc;
    check!(
        drop_short > drop_long,
        NAME,
        "shuffle hit the short side by {drop_short:.4} but the long side by {drop_long:.4}"
    );

    let long_targets: Vec<TrainingExample> = fx
        .test
        .iter()
        .filter(|e| e.driver == Some(Driver::Long))
        .cloned()
        .collect();
    let curve =
        eval::truncate_curve(&fx.aligned, &long_targets, &[5, 10, 20, 40], Side::Long, NDCG_K)
            .unwrap();
    for w in curve.windows(2) {
        let (k0, ref r0) = w[0];
        let (k1, ref r1) = w[1];
        check!(
            r1.auc >= r0.auc - 0.01,
            NAME,
            "long-side AUC fell from {:.4} (k={k0}) to {:.4} (k={k1})",
            r0.auc,
            r1.auc
        );
    }
    let elapsed = fx.build_seconds + clock.elapsed().as_secs_f64();
    check!(elapsed < 600.0, NAME, "took {elapsed:.0}s, budget 600s");
    let curve_str = curve
        .iter()
        .map(|(k, r)| format!("k={k}:{:.4}", r.auc))
        .collect::<Vec<_>>()
        .join(" ");
    pass(
        NAME,
        format!(
            "shuffle drop short {:.4} > long {:.4}; truncate {}; {:.0}s",
            drop_short, drop_long, curve_str, elapsed
        ),
    );
}

// ------------------------------------------------------------ criterion 7

#[test]
fn adaptive_fusion() {
    const NAME: &str = "adaptive_fusion";
    let fx = trend();
    let entries = eval::fixed_alpha_sweep(
        &fx.aligned,
        &fx.test,
        &[0.0, 0.25, 0.5, 0.75, 1.0],
        NDCG_K,
    )
    .unwrap();
    let mut best_fixed = f64::NEG_INFINITY;
    let mut best_alpha = 0.0;
    let mut adaptive = f64::NAN;
    for e in &entries {
        match e.alpha {
            Some(a) => {
                if e.report.auc > best_fixed {
                    best_fixed = e.report.auc;
                    best_alpha = a;
                }
            }
            None => adaptive = e.report.auc,
        }
    }
    check!(adaptive.is_finite(), NAME, "sweep returned no adaptive entry");
    check!(
        adaptive >= best_fixed - 0.005,
        NAME,
        "adaptive AUC {adaptive:.4} below best fixed {best_fixed:.4} (alpha={best_alpha}) - 0.005"
    );
    pass(
        NAME,
        format!(
            "adaptive AUC {:.4} vs best fixed {:.4} at alpha={}",
            adaptive, best_fixed, best_alpha
        ),
    );
}

// ------------------------------------------------------------ criterion 8

#[test]
fn alpha_direction() {
    const NAME: &str = "alpha_direction";
    let fx = trend();
    let stats = eval::alpha_stats(&fx.aligned, &fx.test, &fx.tags).unwrap();
    let long = stats
        .by_driver_positive
        .get("long")
        .expect("long-driven stratum");
    let short = stats
        .by_driver_positive
        .get("short")
        .expect("short-driven stratum");
    check!(
        long.mean > short.mean,
        NAME,
        "mean gate weight long {:.4} (n={}) not above short {:.4} (n={})",
        long.mean,
        long.count,
        short.mean,
        short.count
    );
    pass(
        NAME,
        format!(
            "mean gate weight {:.4} on long-driven (n={}) > {:.4} on short-driven (n={})",
            long.mean, long.count, short.mean, short.count
        ),
    );
}

// ------------------------------------------------------------ criterion 9

fn tiny_gen() -> GeneratorConfig {
    GeneratorConfig {
        n_users: 60,
        n_items: 200,
        n_topics: 10,
        items_per_topic: 20,
        seq_len_min: 15,
        seq_len_max: 25,
        w_long: 0.5,
        drift_rate: 0.2,
    }
}

fn tiny_training() -> (Vec<TrainingExample>, usize, usize) {
    let (records, drivers) = data::synthesize(&tiny_gen(), 5).unwrap();
    let ds = data::build_dataset(&records, &drivers, &SplitBoundaries::default()).unwrap();
    let train = data::build_examples(&ds, Split::Train, 4, 30, 5).unwrap();
    (train, ds.n_users(), ds.n_items())
}

fn log_line(r: &StepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.epoch, r.step, r.examples, r.aligned, r.joint, r.rec_mean, r.con_mean
    )
}

fn run_tiny(config: &ModelConfig, steps: usize, lr: f64) -> (Trainer, Vec<String>) {
    let (train, n_users, n_items) = tiny_training();
    let mut trainer = Trainer::new(config, n_users, n_items, 5, lr).unwrap();
    let mut lines = Vec::new();
    while lines.len() < steps {
        trainer
            .run_epoch(&train, 32, |r| {
                lines.push(log_line(r));
                Ok(())
            })
            .unwrap();
    }
    lines.truncate(steps);
    (trainer, lines)
}

#[test]
fn reproducibility() {
    const NAME: &str = "reproducibility";
    let config = ModelConfig {
        embed_dim: 8,
        pred_hidden: vec![12, 8],
        max_seq_len: 30,
        ..ModelConfig::default()
    };
    let (trainer_a, lines_a) = run_tiny(&config, 50, 0.002);
    let (_, lines_b) = run_tiny(&config, 50, 0.002);
    check!(
        lines_a == lines_b,
        NAME,
        "two identically seeded runs diverged; first differing line {}",
        lines_a
            .iter()
            .zip(&lines_b)
            .position(|(x, y)| x != y)
            .map(|i| i.to_string())
            .unwrap_or_else(|| "?".to_string())
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("round.ckpt");
    checkpoint::save(
        &path,
        &trainer_a.model,
        &trainer_a.adam,
        &trainer_a.progress,
        &trainer_a.rng_cursor(),
    )
    .unwrap();
    let loaded = checkpoint::load(&path).unwrap();

    let before = &trainer_a.model.store;
    let after = &loaded.model.store;
    check!(
        before.len() == after.len(),
        NAME,
        "parameter count changed across the round trip"
    );
    for (x, y) in before.entries().iter().zip(after.entries()) {
        check!(
            x.name == y.name
                && x.trainable == y.trainable
                && x.weight_decay == y.weight_decay
                && x.tensor.shape() == y.tensor.shape()
                && x.tensor.data() == y.tensor.data(),
            NAME,
            "tensor {} not bit-identical after round trip",
            x.name
        );
    }
    check!(
        loaded.adam.step == trainer_a.adam.step,
        NAME,
        "optimizer step count changed"
    );
    for (x, y) in trainer_a.adam.m.iter().zip(&loaded.adam.m) {
        check!(x.data() == y.data(), NAME, "first moment drifted");
    }
    for (x, y) in trainer_a.adam.v.iter().zip(&loaded.adam.v) {
        check!(x.data() == y.data(), NAME, "second moment drifted");
    }
    check!(
        loaded.progress == trainer_a.progress,
        NAME,
        "progress changed across the round trip"
    );
    check!(
        loaded.rng == trainer_a.rng_cursor(),
        NAME,
        "sampler cursor changed across the round trip"
    );
    pass(
        NAME,
        format!(
            "50-step logs bit-identical across runs; checkpoint round-trips {} tensors exactly",
            before.len()
        ),
    );
}

// ----------------------------------------------------------- criterion 10

#[test]
fn pairwise_equivalence() {
    const NAME: &str = "pairwise_equivalence";
    let base = ModelConfig {
        embed_dim: 8,
        pred_hidden: vec![12, 8],
        max_seq_len: 30,
        contrastive_weight: 0.0,
        ..ModelConfig::default()
    };
    let bpr = ModelConfig {
        contrastive: ContrastiveKind::Bpr,
        ..base.clone()
    };
    let triplet = ModelConfig {
        contrastive: ContrastiveKind::Triplet,
        ..base
    };
    let (trainer_a, lines_a) = run_tiny(&bpr, 60, 0.002);
    let (trainer_b, lines_b) = run_tiny(&triplet, 60, 0.002);
    check!(
        lines_a == lines_b,
        NAME,
        "trajectories diverged with the alignment weight at zero"
    );
    for (x, y) in trainer_a
        .model
        .store
        .entries()
        .iter()
        .zip(trainer_b.model.store.entries())
    {
        check!(
            x.tensor.data() == y.tensor.data(),
            NAME,
            "parameter {} differs between the two objectives",
            x.name
        );
    }
    pass(
        NAME,
        "60-step trajectories and final parameters bit-identical across pairwise objectives"
            .to_string(),
    );
}
