use std::collections::HashMap;

use lsrec::autodiff::{gradcheck, ParamStore, Tensor};
use lsrec::model::{ContrastiveKind, ExampleView, Model, ModelConfig};
use lsrec::nn::StepTiming;
use lsrec::seeding;
use rand::Rng;

fn timings(rng: &mut impl Rng, n: usize) -> Vec<StepTiming> {
    (0..n)
        .map(|_| StepTiming {
            since_prev: rng.random_range(0.1..1.5),
            until_target: rng.random_range(0.1..1.5),
        })
        .collect()
}

#[test]
fn joint_seed9_details() {
    let seed = 9u64;
    let config = ModelConfig {
        embed_dim: 4,
        pred_hidden: vec![6, 5],
        contrastive: ContrastiveKind::Bpr,
        ..ModelConfig::default()
    };
    let model = Model::new(&config, 3, 12, seed).unwrap();
    let mut rng = seeding::stream(seed, "gradsuite/joint");
    let t_long = timings(&mut rng, 8);
    let t_short = timings(&mut rng, 3);
    let build = |s: &ParamStore| {
        let mut probe = model.clone();
        probe.store = s.clone();
        let batch = [
            ExampleView {
                user: 0,
                prefix: &[0, 1, 2, 3, 4, 5, 6, 7],
                timings: &t_long,
                candidates: &[8, 9, 11],
            },
            ExampleView {
                user: 1,
                prefix: &[8, 9, 10],
                timings: &t_short,
                candidates: &[0, 5, 7],
            },
        ];
        let (g, bound, joint, _) = probe.joint_loss_graph(&batch).unwrap();
        (g, bound, joint)
    };
    let mut store = model.store.clone();
    let analytic: HashMap<String, Tensor> = {
        let (mut g, bound, root) = build(&store);
        let grads = g.backward(root).unwrap();
        store
            .trainable_names()
            .into_iter()
            .map(|n| {
                let t = grads.grad_or_zeros(bound.id(&n), store.get(&n).shape());
                (n, t)
            })
            .collect()
    };
    let mut f = |s: &ParamStore| {
        let (g, _, root) = build(s);
        g.value(root).item()
    };
    let report = gradcheck::check_all(&mut store, &analytic, 1e-5, 1e-4, Some(4), &mut f);
    println!("checked {} failures {}", report.checked, report.failures.len());
    for e in &report.failures {
        println!(
            "FAIL {}[{}] analytic {:+.9e} numeric {:+.9e} rel {:.3e}",
            e.name, e.index, e.analytic, e.numeric, e.rel_err
        );
        // finite differences at shrinking epsilon to see convergence
        for eps in [1e-4, 1e-5, 1e-6, 1e-7] {
            let orig = store.get(&e.name).data()[e.index];
            store.get_mut(&e.name).data_mut()[e.index] = orig + eps;
            let up = f(&store);
            store.get_mut(&e.name).data_mut()[e.index] = orig - eps;
            let dn = f(&store);
            store.get_mut(&e.name).data_mut()[e.index] = orig;
            println!("  eps {eps:.0e}: fd {:+.9e}", (up - dn) / (2.0 * eps));
        }
    }
}
