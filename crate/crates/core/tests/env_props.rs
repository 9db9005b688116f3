use betrayal_core::agents::random_act;
use betrayal_core::env::{
    apply_hunger_noise, argmax, betrayal_label, FoodStatus, GameConfig, GameState, TurnRecord, WorldState,
};
use betrayal_core::seed::{self, Stream};
use proptest::prelude::*;
use rand::Rng;

fn game_strategy() -> impl Strategy<Value = GameConfig> {
    (2usize..=4, 2usize..=6, 0.01f64..0.5, 1.0f64..4.0, 1u32..=20).prop_flat_map(|(n, l, delta, hmax, rounds)| {
        (n..=(n * l).min(12)).prop_map(move |k| GameConfig {
            n_agents: n,
            grid_size: l,
            n_food: k,
            hunger_delta: delta,
            hunger_max: delta * hmax,
            max_rounds: rounds,
            ..GameConfig::default()
        })
    })
}

/// Plays one episode with uniformly random actions.
fn play(game: &GameConfig, seed_value: u64, mut check: impl FnMut(&GameState, &TurnRecord)) -> GameState {
    let mut state = GameState::new(game, seed_value).unwrap();
    let mut rng = seed::rng(seed_value, Stream::Policy, 0);
    state.begin_round().unwrap();
    while let Some(agent) = state.current_actor() {
        let obs = state.observe(agent);
        let action = random_act(&obs, &mut rng);
        let rec = state.step_turn(agent, &action).unwrap();
        check(&state, &rec);
    }
    state
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn episode_invariants(game in game_strategy(), seed_value in any::<u64>()) {
        let hmax = game.hunger_max;
        let k = game.n_food;
        let state = play(&game, seed_value, |s, rec| {
            for a in &s.agents {
                assert!((0.0..=hmax).contains(&a.hunger));
            }
            assert!(rec.hunger_after >= 0.0 && rec.hunger_after <= hmax);
            // every item is in exactly one place
            let placed: usize = s.worlds.iter().map(WorldState::food_count).sum();
            let consumed = s.pool.iter().filter(|f| f.is_consumed()).count();
            assert_eq!(placed + consumed, k);
            for f in &s.pool {
                if let FoodStatus::Placed { world, cell } = f.status {
                    assert_eq!(s.worlds[world].cells[cell], Some(f.id));
                }
            }
            let conserved = s.consumed_reward() + s.unconsumed_reward();
            assert!((conserved - s.initial_pool_reward()).abs() < 1e-9);
        });
        prop_assert!(state.is_terminated());
        prop_assert!(state.round_index <= game.max_rounds);
    }

    #[test]
    fn episodes_are_deterministic(game in game_strategy(), seed_value in any::<u64>()) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        play(&game, seed_value, |_, r| a.push(r.clone()));
        play(&game, seed_value, |_, r| b.push(r.clone()));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_hunger_transmits_exactly(msg in prop::collection::vec(-1.0f64..2.0, 1..8), s in any::<u64>()) {
        let mut rng = seed::rng(s, Stream::Environment, 0);
        prop_assert_eq!(apply_hunger_noise(&msg, 0.0, &mut rng).unwrap(), msg);
    }

    #[test]
    fn noise_stays_within_hunger(msg in prop::collection::vec(0.0f64..1.0, 1..8), h in 0.0f64..1.0, s in any::<u64>()) {
        let mut rng = seed::rng(s, Stream::Environment, 0);
        let out = apply_hunger_noise(&msg, h, &mut rng).unwrap();
        for (o, m) in out.iter().zip(&msg) {
            prop_assert!((o - m).abs() <= h);
        }
    }

    #[test]
    fn betrayal_is_scale_invariant(
        msg in prop::collection::vec(0.0f64..1.0, 5),
        cells in prop::collection::vec(any::<bool>(), 5),
        alpha in 1e-3f64..1e3,
    ) {
        let world = WorldState { cells: cells.iter().enumerate().map(|(i, &c)| c.then_some(i)).collect() };
        let scaled: Vec<f64> = msg.iter().map(|m| m * alpha).collect();
        prop_assert_eq!(betrayal_label(&msg, &world).unwrap(), betrayal_label(&scaled, &world).unwrap());
    }
}

/// Brute force: find the first coordinate attaining the maximum by comparing
/// against every other coordinate, then look at that cell.
fn betrayal_oracle(msg: &[f64], world: &WorldState) -> bool {
    if world.food_count() == 0 {
        return false;
    }
    let l = (0..msg.len())
        .find(|&i| msg.iter().all(|&m| msg[i] >= m))
        .unwrap();
    world.cells[l].is_none()
}

#[test]
fn betrayal_matches_oracle_on_quantized_grid() {
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut checked = 0;
    for len in 1..=4usize {
        let total = levels.len().pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let msg: Vec<f64> = (0..len)
                .map(|_| {
                    let v = levels[c % levels.len()];
                    c /= levels.len();
                    v
                })
                .collect();
            for food in 0..len {
                let mut world = WorldState::new(len);
                world.cells[food] = Some(0);
                assert_eq!(
                    betrayal_label(&msg, &world).unwrap(),
                    betrayal_oracle(&msg, &world),
                    "msg {msg:?} food {food}"
                );
                assert_eq!(argmax(&msg) == food, !betrayal_oracle(&msg, &world));
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 5 + 2 * 25 + 3 * 125 + 4 * 625);
}

#[test]
fn items_land_in_each_world_half_the_time() {
    let game = GameConfig {
        n_food: 6,
        ..GameConfig::default()
    };
    let mut allocations = 0;
    let mut in_world0 = 0;
    for t in 0..2_000 {
        let mut state = GameState::new(&game, t).unwrap();
        state.begin_round().unwrap();
        for item in &state.pool {
            allocations += 1;
            if let FoodStatus::Placed { world: 0, .. } = item.status {
                in_world0 += 1;
            }
        }
    }
    assert!(allocations >= 10_000);
    let frac = in_world0 as f64 / allocations as f64;
    assert!((frac - 0.5).abs() < 0.05, "world 0 fraction {frac}");
}

#[test]
fn lifecycle_errors() {
    let game = GameConfig::default();
    let mut state = GameState::new(&game, 1).unwrap();
    state.begin_round().unwrap();
    assert!(state.begin_round().is_err());
    let state = play(&game, 3, |_, _| {});
    let mut done = state.clone();
    assert!(done.begin_round().is_err());
    let mut rng = seed::rng(0, Stream::Policy, 0);
    let action = betrayal_core::env::Action {
        probe_cell: rng.random_range(0..5),
        messages: vec![vec![0.0; 5]],
    };
    assert!(done.step_turn(0, &action).is_err());
}
