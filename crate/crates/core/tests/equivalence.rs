//! Simulated special-case holarchies against their sequential references.

mod common;

use common::*;
use holonic::presets::{build_fedavg, build_hfl, build_p2p, complete_edges, fedavg_oracle, gossip_oracle, hfl_oracle, ring_edges};
use holonic::protocol::ProtocolConfig;
use holonic::sim::Simulation;
use holonic::{HolonId, ParamVector};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn protocol(rounds: u64, local_budget: u64) -> ProtocolConfig {
    ProtocolConfig { terminal_budget: rounds, local_budget, ..Default::default() }
}

fn check_fedavg(n: usize, rounds: u64, seed: u64) {
    let shards = uneven_blob_shards(&(1..=n).map(|i| 20 + 7 * i).collect::<Vec<_>>(), seed);
    let model = logistic();
    let theta0 = theta0(&model, seed);
    let sim = Simulation::new(build_fedavg(n).unwrap(), model.clone(), shards.clone(), theta0.clone(), training(seed), protocol(rounds, 2))
        .unwrap();
    let report = sim.run_deterministic().unwrap();
    let oracle = fedavg_oracle(&model, &shards, &theta0, &training(seed), rounds).unwrap();
    let root = &report.histories[&HolonId::new(0, 1)];
    assert_eq!(root.len() as u64, rounds);
    for (t, got) in root.iter().enumerate() {
        assert!(max_diff(got, &oracle[t + 1]) <= TOL, "round {}", t + 1);
    }
}

fn check_hfl(m: usize, k: usize, rounds: u64, period: u64, seed: u64) {
    let sizes: Vec<usize> = (0..m * k).map(|i| 15 + 4 * i).collect();
    let shards = uneven_blob_shards(&sizes, seed);
    let model = logistic();
    let theta0 = theta0(&model, seed);
    let sim = Simulation::new(build_hfl(m, k).unwrap(), model.clone(), shards.clone(), theta0.clone(), training(seed), protocol(rounds, period))
        .unwrap();
    let report = sim.run_deterministic().unwrap();
    let oracle = hfl_oracle(&model, m, k, &shards, &theta0, &training(seed), rounds, period).unwrap();
    let cloud = &report.histories[&HolonId::new(0, 1)];
    assert_eq!(cloud.len(), oracle.cloud.len() - 1);
    for (got, want) in cloud.iter().zip(&oracle.cloud[1..]) {
        assert!(max_diff(got, want) <= TOL);
    }
    for e in 0..m {
        let edge = &report.histories[&HolonId::new(1, e as u32 + 1)];
        assert_eq!(edge.len() as u64, rounds);
        for (got, want) in edge.iter().zip(&oracle.edges[e]) {
            assert!(max_diff(got, want) <= TOL);
        }
    }
}

fn check_gossip(n: usize, edges: &[(usize, usize)], rounds: u64, seed: u64) {
    let sizes: Vec<usize> = (0..n).map(|i| 18 + 5 * i).collect();
    let shards = uneven_blob_shards(&sizes, seed);
    let model = logistic();
    let theta0 = theta0(&model, seed);
    let sim = Simulation::new(build_p2p(n, edges).unwrap(), model.clone(), shards.clone(), theta0.clone(), training(seed), protocol(rounds, 2))
        .unwrap();
    let report = sim.run_deterministic().unwrap();
    let oracle = gossip_oracle(&model, edges, &shards, &vec![theta0; n], &training(seed), rounds).unwrap();
    for i in 0..n {
        let got = &report.histories[&HolonId::new(1, i as u32 + 1)];
        assert_eq!(got.len() as u64, rounds + 1);
        for (t, (g, w)) in got.iter().zip(&oracle[i]).enumerate() {
            assert!(max_diff(g, w) <= TOL, "node {i} round {t}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn fedavg_matches_oracle(seed in any::<u64>(), n in 1usize..6, rounds in 3u64..6) {
        check_fedavg(n, rounds, seed);
    }

    #[test]
    fn hfl_matches_oracle(seed in any::<u64>(), m in 1usize..4, k in 1usize..4, rounds in 3u64..8, period in 1u64..4) {
        check_hfl(m, k, rounds, period, seed);
    }

    #[test]
    fn gossip_matches_oracle(seed in any::<u64>(), n in 2usize..7, rounds in 3u64..6, complete in any::<bool>()) {
        let edges = if complete { complete_edges(n) } else { ring_edges(n) };
        check_gossip(n, &edges, rounds, seed);
    }
}

#[test]
fn gossip_on_irregular_graph() {
    check_gossip(5, &[(0, 1), (1, 2), (1, 3), (3, 4)], 4, 17);
}

#[test]
fn fedavg_message_counts() {
    let shards = uneven_blob_shards(&[10, 30, 60], 2);
    let model = logistic();
    let sim = Simulation::new(build_fedavg(3).unwrap(), model.clone(), shards, theta0(&model, 2), training(2), protocol(2, 2))
        .unwrap();
    let report = sim.run_deterministic().unwrap();
    // 3 initial broadcasts, 3 reports per round, 3 replies after round 1.
    assert_eq!((report.stats.emitted, report.stats.delivered), (12, 12));
}

#[test]
fn f32_fedavg_tracks_f64() {
    let shards = blob_shards(3, 40, 5);
    let model = logistic();
    let theta64 = theta0(&model, 5);
    let report64 = Simulation::new(build_fedavg(3).unwrap(), model.clone(), shards.clone(), theta64.clone(), training(5), protocol(3, 2))
        .unwrap()
        .run_deterministic()
        .unwrap();
    let shards32: Vec<_> = shards
        .iter()
        .map(|d| {
            let x: Vec<f32> = (0..d.len()).flat_map(|i| d.row(i).iter().map(|&v| v as f32)).collect();
            holonic::Dataset::classification(x, d.dim(), d.labels().unwrap().to_vec(), 3).unwrap()
        })
        .collect();
    let theta32 = ParamVector::new(theta64.iter().map(|&v| v as f32).collect());
    let report32 = Simulation::new(build_fedavg(3).unwrap(), model, shards32, theta32, training(5), protocol(3, 2))
        .unwrap()
        .run_deterministic()
        .unwrap();
    let root = HolonId::new(0, 1);
    for (a, b) in report64.histories[&root].iter().zip(&report32.histories[&root]) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - *y as f64).abs() < 1e-3);
        }
    }
}

#[test]
fn concurrent_mode_reproduces_deterministic_models() {
    use holonic::PresetName;
    for preset in [PresetName::HoAL1P, PresetName::HoAL2L, PresetName::HoAL3L, PresetName::HoAL4L, PresetName::Hfl { edges: 2, clients: 3 }] {
        let spec = preset.build().unwrap();
        let n = holonic::sim::shard_count(&spec);
        let shards = blob_shards(n, 30, 8);
        let model = logistic();
        let sim = Simulation::new(spec, model.clone(), shards, theta0(&model, 8), training(8), protocol(6, 2)).unwrap();
        let det = sim.run_deterministic().unwrap();
        for _ in 0..3 {
            let conc = sim.run_concurrent().unwrap();
            assert_eq!(det.histories, conc.histories, "{preset}");
            assert_eq!(det.stats.emitted, conc.stats.emitted, "{preset}");
            assert_eq!(conc.stats.emitted, conc.stats.delivered);
        }
    }
}
