use proptest::prelude::*;
use wwm_core::procgen::GenerationParams;
use wwm_core::world::{
    apply_action_with, check_invariants, initial_state, ActionEvent, PhysicsState, UniverseCache, UniverseSource,
};

#[derive(Debug, Clone)]
enum Move {
    Neighbor(usize),
    AnyNode(usize),
    Bogus,
    Scan,
    Reseed,
    Density(f64),
}

fn moves() -> impl Strategy<Value = Move> {
    prop_oneof![
        6 => any::<usize>().prop_map(Move::Neighbor),
        2 => any::<usize>().prop_map(Move::AnyNode),
        1 => Just(Move::Bogus),
        2 => Just(Move::Scan),
        1 => Just(Move::Reseed),
        1 => (0.0f64..4.0).prop_map(Move::Density),
    ]
}

fn to_action(cache: &UniverseCache, state: &PhysicsState, m: &Move) -> ActionEvent {
    let u = cache.universe(&state.universe_params);
    match *m {
        Move::Neighbor(i) => {
            let n = u.neighbors(&state.voyager.location);
            ActionEvent::travel(n[i % n.len()].0)
        }
        Move::AnyNode(i) => ActionEvent::travel(u.node_ids()[i % u.node_ids().len()].clone()),
        Move::Bogus => ActionEvent::travel("0000000000000000"),
        Move::Scan => ActionEvent::scan(None),
        Move::Reseed => ActionEvent::reseed(),
        Move::Density(d) => ActionEvent::set_density(d),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_walks_never_break_physics(seed in any::<u64>(), walk in prop::collection::vec(moves(), 1..120)) {
        let cache = UniverseCache::new(8);
        let params = GenerationParams { world_seed: seed, ..Default::default() };
        let mut state = initial_state(&cache, params, "fuzz");
        for m in &walk {
            let action = to_action(&cache, &state, m);
            let before = serde_json::to_vec(&state).unwrap();
            match apply_action_with(&cache, &state, &action) {
                Ok(next) => {
                    prop_assert_eq!(next.tick, state.tick + 1);
                    check_invariants(&next, &cache.universe(&next.universe_params)).unwrap();
                    state = next;
                }
                Err(_) => prop_assert_eq!(serde_json::to_vec(&state).unwrap(), before),
            }
        }
    }

    #[test]
    fn transition_is_deterministic(seed in any::<u64>(), walk in prop::collection::vec(moves(), 1..40)) {
        let params = GenerationParams { world_seed: seed, ..Default::default() };
        let run = || {
            let cache = UniverseCache::new(4);
            let mut state = initial_state(&cache, params, "det");
            let mut trace = Vec::new();
            for m in &walk {
                let action = to_action(&cache, &state, m);
                let r = apply_action_with(&cache, &state, &action);
                trace.push(format!("{r:?}"));
                if let Ok(next) = r {
                    state = next;
                }
            }
            (serde_json::to_vec(&state).unwrap(), trace)
        };
        prop_assert_eq!(run(), run());
    }
}
