use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tg_core::craftworld::{load_map, maps, render_map, Action, Cell, CraftWorld, GridMap, MapError, Object, Pos, WorldState};
use tg_core::dfa::DfaStatus;
use tg_core::game::{ExtendedGame, GameError, MarkovGame, RewardScheme};
use tg_core::ltl::{parse, TruthAssignment};

fn world(map: &str, agents: usize) -> CraftWorld {
    CraftWorld::new(load_map(map).unwrap(), agents).unwrap()
}

fn random_joint(rng: &mut ChaCha8Rng, agents: usize) -> Vec<usize> {
    (0..agents).map(|_| rng.gen_range(0..Action::ALL.len())).collect()
}

/// Two-agent movement resolved case by case from the conflict rules.
fn two_agent_oracle(map: &GridMap, p: [Pos; 2], a: [Action; 2]) -> [Pos; 2] {
    let target = |i: usize| {
        let (r, c) = p[i];
        let t = match a[i] {
            Action::Up => (r.wrapping_sub(1), c),
            Action::Down => (r + 1, c),
            Action::Left => (r, c.wrapping_sub(1)),
            Action::Right => (r, c + 1),
            Action::Wait => (r, c),
        };
        if t.0 < map.height() && t.1 < map.width() && map.is_open(t) { t } else { p[i] }
    };
    let t = [target(0), target(1)];
    let moving = [t[0] != p[0], t[1] != p[1]];
    if moving[0] && moving[1] && t[0] == p[1] && t[1] == p[0] {
        return p;
    }
    if t[0] == t[1] {
        // A stayer keeps its cell; between two movers the lower index wins.
        return if moving[0] && moving[1] { [t[0], p[1]] } else { p };
    }
    // Following into a cell is fine when its occupant gets away.
    let mut out = t;
    if t[0] == p[1] && !moving[1] {
        out[0] = p[0];
    }
    if t[1] == p[0] && !moving[0] {
        out[1] = p[1];
    }
    out
}

#[test]
fn exhaustive_two_agent_conflicts_on_micro() {
    let w = world(maps::MICRO, 2);
    let cells = w.map().open_cells();
    let mut cases = 0;
    for &p0 in &cells {
        for &p1 in &cells {
            if p0 == p1 {
                continue;
            }
            for a0 in Action::ALL {
                for a1 in Action::ALL {
                    let s = WorldState { positions: vec![p0, p1], step_count: 0 };
                    let (next, _) = w.step_world(&s, &[a0, a1]).unwrap();
                    let want = two_agent_oracle(w.map(), [p0, p1], [a0, a1]);
                    assert_eq!(next.positions, want.to_vec(), "{p0:?} {a0} / {p1:?} {a1}");
                    cases += 1;
                }
            }
        }
    }
    assert_eq!(cases, 9 * 8 * 25);
}

#[test]
fn contested_cell_goes_to_lower_index() {
    let w = world("#####\n#A.A#\n#####\n", 2);
    let s = w.initial();
    let (next, _) = w.step_world(&s, &[Action::Right, Action::Left]).unwrap();
    assert_eq!(next.positions, vec![(1, 2), (1, 3)]);
}

#[test]
fn positions_stay_distinct_under_fuzzing() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let map = "#######\n#A.w.t#\n#.gA.b#\n#i...f#\n#bAx.w#\n#s.dAg#\n#######\n";
    for agents in [2, 3, 4] {
        let w = world(map, agents);
        let mut s = w.initial();
        for _ in 0..10_000 {
            let joint = random_joint(&mut rng, agents);
            s = w.step(&s, &joint).unwrap();
            let distinct: HashSet<_> = s.positions.iter().collect();
            assert_eq!(distinct.len(), agents);
            assert!(s.positions.iter().all(|&p| w.map().is_open(p)));
        }
    }
}

#[test]
fn stepping_is_deterministic_and_labels_are_markov() {
    let w = world(maps::DUAL, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = w.initial();
    for _ in 0..2_000 {
        let joint = random_joint(&mut rng, 2);
        let a = w.step(&s, &joint).unwrap();
        let b = w.step(&s, &joint).unwrap();
        assert_eq!(a, b);
        let relabelled = WorldState { positions: a.positions.clone(), step_count: 0 };
        assert_eq!(w.label(&a), w.label(&relabelled));
        s = a;
    }
}

#[test]
fn labels_are_the_occupied_objects() {
    let w = world(maps::DUAL, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = w.initial();
    for _ in 0..2_000 {
        s = w.step(&s, &random_joint(&mut rng, 2)).unwrap();
        let want: TruthAssignment = s
            .positions
            .iter()
            .filter_map(|&p| match w.map().cell(p) {
                Cell::Object(o) => Some(tg_core::ltl::Atom::new(o.event()).unwrap()),
                _ => None,
            })
            .collect();
        assert_eq!(w.label(&s), want);
    }
}

#[test]
fn nearest_matches_brute_force() {
    for text in [maps::MICRO, maps::SINGLE, maps::DUAL] {
        let m = load_map(text).unwrap();
        for from in m.open_cells() {
            for o in Object::ALL {
                let mut best: Option<(usize, Pos)> = None;
                for r in 0..m.height() {
                    for c in 0..m.width() {
                        if m.cell((r, c)) == Cell::Object(o) {
                            let d = r.abs_diff(from.0) + c.abs_diff(from.1);
                            if best.is_none_or(|(bd, _)| d < bd) {
                                best = Some((d, (r, c)));
                            }
                        }
                    }
                }
                assert_eq!(m.nearest(from, o), best.map(|(_, p)| p), "{o:?} from {from:?}");
            }
        }
    }
}

#[test]
fn maps_round_trip() {
    for text in [maps::MICRO, maps::SINGLE, maps::DUAL] {
        assert_eq!(render_map(&load_map(text).unwrap()), text);
        let padded = text.replace('\n', "  \n") + "\n\n";
        assert_eq!(render_map(&load_map(&padded).unwrap()), text);
    }
}

#[test]
fn bundled_maps_hold_every_object() {
    for text in [maps::SINGLE, maps::DUAL] {
        let m = load_map(text).unwrap();
        assert_eq!((m.width(), m.height()), (7, 7));
        for o in Object::ALL {
            assert!(!m.object_cells(o).is_empty(), "{o:?}");
        }
    }
    assert_eq!(load_map(maps::SINGLE).unwrap().agent_starts().len(), 1);
    assert_eq!(load_map(maps::DUAL).unwrap().agent_starts().len(), 2);
}

#[test]
fn malformed_maps_are_rejected() {
    assert!(matches!(load_map("###\n#?#\n###\n"), Err(MapError::UnknownChar { ch: '?', .. })));
    assert!(matches!(load_map("###\n#A\n###\n"), Err(MapError::NotRectangular { .. })));
    assert!(matches!(load_map(""), Err(MapError::Empty)));
    assert!(CraftWorld::new(load_map(maps::SINGLE).unwrap(), 2).is_err());
}

#[test]
fn product_is_deterministic_and_lift_strips_back() {
    let spec = parse("F (got_wood & F used_workbench)").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let actions: Vec<Vec<usize>> = (0..200).map(|_| random_joint(&mut rng, 2)).collect();
    let run = || {
        let mut env = ExtendedGame::new(world(maps::DUAL, 2), spec.clone(), RewardScheme::default()).unwrap();
        env.reset();
        let mut out = Vec::new();
        for joint in &actions {
            let tr = env.step(joint).unwrap();
            let done = tr.ends_episode();
            out.push(tr);
            if done {
                env.reset();
            }
        }
        out
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((&x.state, &x.next_state, x.reward, x.terminal), (&y.state, &y.next_state, y.reward, y.terminal));
    }
    let env = ExtendedGame::new(world(maps::DUAL, 2), spec, RewardScheme::default()).unwrap();
    let base = env.game().initial_state();
    assert_eq!(env.lift(base.clone()).strip(), base);
}

#[test]
fn satisfaction_reward_comes_once_at_the_end() {
    let spec = parse("F (got_wood & F used_workbench)").unwrap();
    let scheme = RewardScheme::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut env = ExtendedGame::new(world(maps::MICRO, 2), spec, scheme).unwrap();
    let mut satisfied = 0;
    for _ in 0..200 {
        env.reset();
        let mut rewards = Vec::new();
        loop {
            let tr = env.step(&random_joint(&mut rng, 2)).unwrap();
            rewards.push(tr.reward);
            if tr.terminal {
                assert_eq!(env.dfa().classify(tr.next_state.dfa_state).unwrap(), DfaStatus::Accepting);
                assert!(!tr.truncated);
                satisfied += 1;
            }
            if tr.ends_episode() {
                break;
            }
        }
        let hits = rewards.iter().filter(|&&r| r == scheme.r_satisfy).count();
        let ended_satisfied = *rewards.last().unwrap() == scheme.r_satisfy;
        assert!(hits <= 1 && (hits == 0 || ended_satisfied));
    }
    assert!(satisfied > 0);
}

#[test]
fn episodes_truncate_at_the_step_limit() {
    let spec = parse("F at_shelter").unwrap();
    let mut env = ExtendedGame::new(world(maps::MICRO, 1), spec, RewardScheme::default()).unwrap().with_step_limit(7);
    env.reset();
    for k in 1..=7 {
        let tr = env.step(&[Action::Wait.index()]).unwrap();
        assert_eq!(tr.reward, -1.0);
        assert!(!tr.terminal);
        assert_eq!(tr.truncated, k == 7);
    }
}

#[test]
fn reward_schemes_must_be_ordered() {
    assert!(RewardScheme::new(1.0, 0.0, -1.0, -1.0, true).is_ok());
    assert!(RewardScheme::new(0.0, 0.0, -1.0, -1.0, true).is_err());
    assert!(RewardScheme::new(1.0, -2.0, -1.0, -1.0, true).is_err());
    assert!(RewardScheme::new(1.0, 0.0, -1.0, 2.0, true).is_err());
    assert!(RewardScheme::new(f64::NAN, 0.0, -1.0, -1.0, true).is_err());
}

#[test]
fn violations_end_episodes_unless_configured_otherwise() {
    let spec = parse("!got_wood U used_workbench").unwrap();
    for terminate in [true, false] {
        let scheme = RewardScheme::new(1.0, 0.0, -1.0, -1.0, terminate).unwrap();
        let mut env = ExtendedGame::new(world(maps::MICRO, 1), spec.clone(), scheme).unwrap();
        env.reset();
        // The first agent starts two cells left of the wood.
        env.step(&[Action::Right.index()]).unwrap();
        let tr = env.step(&[Action::Right.index()]).unwrap();
        assert_eq!(tr.reward, scheme.r_violate);
        assert_eq!(tr.terminal, terminate);
        let again = env.step(&[Action::Wait.index()]);
        assert!(again.is_ok());
    }
}

#[test]
fn malformed_joint_actions_are_rejected() {
    let env = ExtendedGame::new(world(maps::MICRO, 2), parse("F got_wood").unwrap(), RewardScheme::default()).unwrap();
    let s = env.lift(env.game().initial_state());
    assert!(matches!(env.successor(&s, &[0]), Err(GameError::ActionCount { .. })));
    assert!(matches!(env.successor(&s, &[0, 9]), Err(GameError::InvalidAction { agent: 1, action: 9 })));
}
