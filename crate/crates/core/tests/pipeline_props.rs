use std::collections::VecDeque;

use rand::Rng;
use spcc::branching::{
    kmeans, smooth, BranchContext, BranchedPolicy, ConditionExtremes, DeciderConfig, KnnDecider,
};
use spcc::harness::{run_trace, scenario_lossy, scenario_oscillating, Metrics, PolicyRef};
use spcc::netsim::{ConfigRanges, EnvConfig};
use spcc::seeding;
use spcc::symtree::PolicyTree;
use spcc::teacher::{collect_rollouts, RolloutDataset, TeacherPolicy, DEFAULT_HIDDEN};

fn teacher() -> TeacherPolicy {
    TeacherPolicy::new(10, &DEFAULT_HIDDEN, -0.5, 11)
}

#[test]
fn rollouts_are_aligned_and_deterministic() {
    let env = EnvConfig::default();
    let a = collect_rollouts(&teacher(), &ConfigRanges::baseline(), &env, 3, 5).unwrap();
    let b = collect_rollouts(&teacher(), &ConfigRanges::baseline(), &env, 3, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.x.len(), a.y.len());
    assert_eq!(a.x.len(), a.meta.len());
    assert_eq!(a.episodes(), 3);
    assert!(a.x.iter().all(|f| f.len() == 30));
    for e in 0..3 {
        let mis: Vec<usize> = a.meta.iter().filter(|m| m.episode == e).map(|m| m.mi).collect();
        assert_eq!(mis, (0..mis.len()).collect::<Vec<_>>());
    }
    // recorded actions are the deterministic teacher output
    let t = teacher();
    for (f, &y) in a.x.iter().zip(&a.y).step_by(37) {
        assert_eq!(t.act_features(f), y);
    }
}

#[test]
fn rollout_csv_and_teacher_text_round_trip() {
    let d = collect_rollouts(&teacher(), &ConfigRanges::baseline(), &EnvConfig::default(), 2, 9).unwrap();
    let mut buf = Vec::new();
    d.write_csv(&mut buf).unwrap();
    assert_eq!(RolloutDataset::read_csv(buf.as_slice()).unwrap(), d);

    let t = teacher();
    assert_eq!(TeacherPolicy::from_text(&t.to_text()).unwrap(), t);
    assert!(TeacherPolicy::from_text("not a network").is_err());
}

#[test]
fn traces_are_deterministic_and_metrics_pure() {
    let env = EnvConfig::default();
    for s in [scenario_lossy(), scenario_oscillating()] {
        let (r1, m1) = run_trace(&s, PolicyRef::Aimd, &env).unwrap();
        let (r2, m2) = run_trace(&s, PolicyRef::Aimd, &env).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        let pure = Metrics {
            flops: Some(1),
            ..Metrics::from_record(&r1)
        };
        assert_eq!(pure, m1);
        assert_eq!(r1.samples.len(), 25);
    }
}

#[test]
fn delivered_throughput_never_exceeds_capacity() {
    let env = EnvConfig::default();
    for s in [scenario_lossy(), scenario_oscillating()] {
        for rate in [100.0, 3000.0, 1e5] {
            let (r, m) = run_trace(&s, PolicyRef::Fixed(rate), &env).unwrap();
            for x in &r.samples {
                assert!(x.throughput_mbps <= x.capacity_mbps * (1.0 + 1e-9), "{x:?}");
                assert!((0.0..=1.0).contains(&x.loss_fraction));
            }
            assert!(m.link_utilization <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn inertia_falls_as_clusters_are_added() {
    let mut rng = seeding::rng(3);
    for _ in 0..10 {
        let pts: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..2000.0)).collect();
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            let m = kmeans(&pts, k, 1).unwrap();
            assert!(m.inertia <= last + 1e-6, "k={k} {} > {last}", m.inertia);
            assert!(m.centroids.windows(2).all(|w| w[0] <= w[1]));
            last = m.inertia;
        }
    }
}

#[test]
fn smoothed_branch_is_always_in_the_window() {
    let mut rng = seeding::rng(8);
    for window in 1..=7 {
        let mut h = VecDeque::new();
        let mut cur = None;
        for _ in 0..500 {
            let raw = rng.random_range(0..4);
            let s = smooth(&mut h, cur, raw, window);
            assert!(h.len() <= window);
            assert!(h.contains(&s));
            cur = Some(s);
        }
    }
}

fn context(id: usize, bw: (f64, f64)) -> BranchContext {
    BranchContext {
        id,
        bandwidth: bw,
        latency: (0.05, 0.5),
        queue: (2, 2981),
        loss: (0.0, 0.05),
        return_centroid: 100.0 * id as f64,
        members: 10,
        extremes: ConditionExtremes {
            bandwidth: bw,
            latency: (0.05, 0.5),
            queue: (2, 2981),
            loss: (0.0, 0.05),
        },
    }
}

#[test]
fn branched_policy_saves_and_loads() {
    let mut rng = seeding::rng(4);
    let features: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..30).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..40).map(|i| i % 2).collect();
    let decider = KnnDecider::new(3, features, labels).unwrap();
    let trees = vec![
        PolicyTree::constant(0.25),
        PolicyTree::parse("(if (is_lt (get obs_inflation 9) 0) (act -0.5) (act 0.125))").unwrap(),
    ];
    let p = BranchedPolicy::new(
        vec![context(0, (100.0, 300.0)), context(1, (300.0, 500.0))],
        trees,
        decider,
        DeciderConfig {
            neighbors: 3,
            ..Default::default()
        },
        10,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    p.save(dir.path()).unwrap();
    assert_eq!(BranchedPolicy::load(dir.path()).unwrap(), p);

    let (r1, _) = run_trace(&scenario_oscillating(), PolicyRef::Branched(&p), &EnvConfig::default()).unwrap();
    let (r2, _) = run_trace(&scenario_oscillating(), PolicyRef::Branched(&p), &EnvConfig::default()).unwrap();
    assert_eq!(r1, r2);
    assert!(r1.mis.iter().all(|m| m.branch.is_some_and(|b| b < 2)));
}
