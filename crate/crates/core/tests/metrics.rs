// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use goalscope_core::interventions::{InterventionSpec, ALL_CHEESE};
use goalscope_core::maze::*;
use goalscope_core::metrics::*;
use goalscope_core::net::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::synthetic;

fn random_dist(rng: &mut ChaCha8Rng) -> ActionDistribution {
    let raw: Vec<f64> = (0..N_ACTIONS).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs = [0.0; N_ACTIONS];
    for (p, r) in probs.iter_mut().zip(&raw) {
        *p = r / total;
    }
    ActionDistribution { probs }
}

fn random_field(rng: &mut ChaCha8Rng, squares: &[Coord]) -> VectorField {
    let policy_at = |rng: &mut ChaCha8Rng, square: Coord| {
        let probs = random_dist(rng);
        let p = probs.probs;
        FieldEntry { square, probs, net: (p[1] - p[3], p[0] - p[2]) }
    };
    VectorField { seed: 0, entries: squares.iter().map(|&s| policy_at(rng, s)).collect() }
}

fn zero_net() -> PolicyNetwork {
    PolicyNetwork::zeros(ArchitectureDescriptor::reference()).unwrap()
}

fn goals() -> BTreeSet<usize> {
    ALL_CHEESE.iter().copied().collect()
}

#[test]
fn uniform_policy_has_null_field_and_flat_heatmap() {
    let net = zero_net();
    let m = generate_maze(4, 7).unwrap().place_cheese(CheesePlacement::Uniform { seed: 4 }).unwrap();
    let f = vector_field(&net, &m, &InterventionSpec::default()).unwrap();
    assert_eq!(f.entries.len(), m.free_cells().count());
    assert!(f.entries.iter().all(|e| e.net == (0.0, 0.0)));

    let h = retargetability_heatmap(&net, &m, HeatmapCondition::Base, None).unwrap();
    assert_eq!(h.cells().count(), m.free_cells().count());
    assert!(h.cells().all(|(_, v)| v == 0.2));
}

#[test]
fn constant_policy_path_probability_is_exact() {
    let policy = ConstantPolicy(ActionDistribution::uniform());
    for seed in 0..10 {
        let m = generate_maze(seed, 2 * (seed as usize % 12) + 3).unwrap();
        for target in m.free_cells() {
            assert_eq!(normalized_path_probability_with(&policy, &m, target).unwrap(), 0.2);
        }
    }
}

#[test]
fn path_probability_rejects_walls() {
    let m = generate_maze(0, 9).unwrap();
    let wall = Coord::new(0, 0);
    let err = normalized_path_probability_with(&ConstantPolicy(ActionDistribution::uniform()), &m, wall).unwrap_err();
    assert_eq!(err, MetricsError::Maze(MazeError::TargetNotFree(wall)));
}

#[test]
fn empty_spec_field_equals_plain_forwards() {
    let net = synthetic(9, 4.0);
    let m = generate_maze(2, 9).unwrap().place_cheese(CheesePlacement::Uniform { seed: 2 }).unwrap();
    let f = vector_field(&net, &m, &InterventionSpec::default()).unwrap();
    let g = vector_field_with(&NetPolicy::plain(&net), &m).unwrap();
    assert_eq!(f, g);
    for e in &f.entries {
        let (d, _) = net.forward(&goalscope_core::render::render_observation(&m.with_agent(e.square)), &[]).unwrap();
        assert_eq!(e.probs, d);
        assert!(e.net.0.abs() <= 1.0 && e.net.1.abs() <= 1.0);
    }
}

#[test]
fn synthetic_field_follows_shortest_paths() {
    let net = synthetic(9, 4.0);
    let (mut agree, mut total) = (0, 0);
    for seed in 0..4 {
        let m = generate_maze(seed, 9).unwrap().place_cheese(CheesePlacement::Uniform { seed }).unwrap();
        let cheese = m.cheese.unwrap();
        let f = vector_field(&net, &m, &InterventionSpec::default()).unwrap();
        for e in f.entries.iter().filter(|e| e.square != cheese) {
            let want = m.shortest_path(e.square, cheese).unwrap().actions[0];
            let (dx, dy) = want.delta();
            total += 1;
            agree += ((e.net.0 * dx as f64 + e.net.1 * dy as f64) > 0.5) as usize;
        }
    }
    assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
}

#[test]
fn sharp_synthetic_policy_reaches_cheese() {
    let net = synthetic(9, 16.0);
    for seed in 0..5 {
        let m = generate_maze(seed, 9).unwrap().place_cheese(CheesePlacement::Uniform { seed }).unwrap();
        let p = normalized_path_probability(&net, &m, m.cheese.unwrap(), &InterventionSpec::default()).unwrap();
        assert!(p >= 0.9, "seed {seed}: {p}");
    }
}

#[test]
fn total_variation_examples() {
    let one_hot = |a: Action| {
        let mut probs = [0.0; N_ACTIONS];
        probs[a.index()] = 1.0;
        ActionDistribution { probs }
    };
    assert_eq!(action_distribution_distance(&one_hot(Action::Up), &one_hot(Action::Down)), 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        let (p, q) = (random_dist(&mut rng), random_dist(&mut rng));
        assert_eq!(action_distribution_distance(&p, &p), 0.0);
        let mut s = 0.0;
        for i in 0..N_ACTIONS {
            s += (p.probs[i] - q.probs[i]).abs();
        }
        assert_eq!(action_distribution_distance(&p, &q), s / 2.0);
        // Positive-part form of the same quantity.
        let pos: f64 = (0..N_ACTIONS).map(|i| (p.probs[i] - q.probs[i]).max(0.0)).sum();
        assert!((action_distribution_distance(&p, &q) - pos).abs() < 1e-12);
    }
}

#[test]
fn field_distance_requires_matching_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_field(&mut rng, &[Coord::new(1, 1), Coord::new(1, 2)]);
    let b = random_field(&mut rng, &[Coord::new(1, 1), Coord::new(2, 1)]);
    let c = random_field(&mut rng, &[Coord::new(1, 1)]);
    assert_eq!(field_distance(&a, &b), Err(MetricsError::SquareSetMismatch));
    assert_eq!(field_distance(&a, &c), Err(MetricsError::SquareSetMismatch));
}

proptest! {
    #[test]
    fn field_distance_is_a_metric(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let squares: Vec<Coord> = (0..n).map(|i| Coord::new(i % 25, i / 25)).collect();
        let (a, b, c) = (random_field(&mut rng, &squares), random_field(&mut rng, &squares), random_field(&mut rng, &squares));
        let d = |x: &VectorField, y: &VectorField| field_distance(x, y).unwrap();
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &b) > 0.0);
        prop_assert!((0.0..=1.0).contains(&d(&a, &b)));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn path_probability_is_a_probability(seed in any::<u64>(), k in 1usize..=6, pick in any::<prop::sample::Index>()) {
        let m = generate_maze(seed, 2 * k + 1).unwrap();
        let free: Vec<Coord> = m.free_cells().collect();
        let target = free[pick.index(free.len())];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = ConstantPolicy(random_dist(&mut rng));
        let p = normalized_path_probability_with(&policy, &m, target).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        // A single distinct per-step probability comes back unchanged.
        let path = m.shortest_path(m.agent, target).unwrap();
        if target == m.agent {
            prop_assert_eq!(p, policy.0.probs[Action::Noop.index()]);
        } else if path.actions.iter().all(|a| *a == path.actions[0]) {
            prop_assert_eq!(p, policy.0.probs[path.actions[0].index()]);
        }
    }
}

#[test]
fn heatmap_orderings_on_synthetic_net() {
    let net = synthetic(7, 4.0);
    for seed in 0..2 {
        let m = generate_maze(seed, 7).unwrap().place_cheese(CheesePlacement::Uniform { seed }).unwrap();
        let mean = |c| retargetability_heatmap(&net, &m, c, None).unwrap().mean();
        let base = mean(HeatmapCondition::Base);
        let ch55 = mean(HeatmapCondition::Channel55);
        let all = mean(HeatmapCondition::AllChannels);
        let moved = mean(HeatmapCondition::CheeseMove);
        assert!(base <= ch55 && ch55 <= all && all <= moved, "seed {seed}: {base} {ch55} {all} {moved}");
        assert!(moved > base);
    }
}

#[test]
fn heatmap_is_deterministic_and_ignores_cheese() {
    let net = synthetic(7, 4.0);
    let m = generate_maze(3, 7).unwrap();
    let with = m.place_cheese(CheesePlacement::Uniform { seed: 3 }).unwrap();
    let a = retargetability_heatmap(&net, &m, HeatmapCondition::Base, None).unwrap();
    let b = retargetability_heatmap(&net, &with, HeatmapCondition::Base, None).unwrap();
    assert_eq!(a, b);
    for row in 0..GRID {
        for col in 0..GRID {
            let c = Coord::new(col, row);
            assert_eq!(a.get(c).is_some(), m.is_free(c));
        }
    }
}

#[test]
fn ratio_curves() {
    let net = synthetic(7, 4.0);
    let empty = retarget_ratio_curve(&net, &[], HeatmapCondition::AllChannels, None).unwrap();
    assert!(empty.points.is_empty() && empty.excluded == 0);

    let mazes: Vec<MazeState> = (0..2).map(|s| generate_maze(s, 7).unwrap()).collect();
    let base = retarget_ratio_curve(&net, &mazes, HeatmapCondition::Base, None).unwrap();
    assert!(!base.points.is_empty());
    assert!(base.points.iter().all(|p| p.mean_ratio == 1.0));
    let counted: usize = base.points.iter().map(|p| p.count).sum::<usize>() + base.excluded;
    assert_eq!(counted, mazes.iter().map(|m| m.free_cells().count()).sum::<usize>());

    let goal = retarget_ratio_curve(&net, &mazes, HeatmapCondition::AllChannels, None).unwrap();
    assert!(goal.points.iter().all(|p| p.mean_ratio >= 1.0), "{:?}", goal.points);
}

#[test]
fn scrub_donor_construction() {
    for seed in 0..20 {
        let target = scrub_target(seed, 9).unwrap();
        let (same, random) = scrub_donors(&target).unwrap();
        assert!(same.seed > seed);
        assert_eq!(same.seed, random.seed);
        assert_eq!(same.cheese, target.cheese);
        assert_ne!(random.cheese, target.cheese);
        assert!(random.is_free(random.cheese.unwrap()) && random.cheese != Some(random.agent));
        assert_eq!(scrub_donors(&target).unwrap(), (same, random));
    }
    assert!(scrub_donors(&generate_maze(0, 9).unwrap()).is_err());
}

#[test]
fn control_channels_are_disjoint_and_size_matched() {
    let tested = goals();
    let c = control_channels(&tested, 128, 7);
    assert_eq!(c.len(), tested.len());
    assert!(c.is_disjoint(&tested));
    assert!(c.iter().all(|&ch| ch < 128));
    assert_eq!(c, control_channels(&tested, 128, 7));
    assert_ne!(c, control_channels(&tested, 128, 8));
}

#[test]
fn empty_channel_set_changes_nothing() {
    let net = synthetic(7, 4.0);
    let seeds: Vec<u64> = (0..4).collect();
    let r = resampling_experiment(&net, &seeds, 7, &BTreeSet::new(), 0).unwrap();
    assert!(r.rows.iter().all(|row| row.same_cheese == 0.0
        && row.random_cheese == 0.0
        && row.control_same_cheese == 0.0
        && row.control_random_cheese == 0.0));
    assert_eq!(r.control_ratio, 1.0);
    let flips = decision_flip_rate(&net, &seeds, 7, &BTreeSet::new()).unwrap();
    assert_eq!((flips.same_location, flips.different_location), (0.0, 0.0));
}

#[test]
fn goal_channel_scrub_separates_cheese_locations() {
    let net = synthetic(7, 4.0);
    let seeds: Vec<u64> = (0..6).collect();
    let r = resampling_experiment(&net, &seeds, 7, &goals(), 0).unwrap();
    assert_eq!(r.rows.len(), seeds.len());
    assert!(r.mean_random_cheese > r.mean_same_cheese, "{r:?}");
    assert!(r.random_exceeds_same >= 0.5);
    assert_eq!(r.control_channels.len(), goals().len());
}

#[test]
fn channel_names() {
    assert_eq!(channels_by_name("single").unwrap(), BTreeSet::from([55]));
    assert_eq!(channels_by_name("effective").unwrap().len(), 7);
    assert_eq!(channels_by_name("all").unwrap(), goals());
    assert!(channels_by_name("none").unwrap().is_empty());
    assert!(channels_by_name("most").is_none());
}
