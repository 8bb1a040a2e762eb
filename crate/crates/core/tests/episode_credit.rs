//! Shapley credit over counterfactual replays of real episodes.

use agora_core::arena::{run_episode, AgentSet, Faction, GameConfig, Lineup};
use agora_core::credit::{
    episode_credits, episode_games, shapley_exact, CoalitionValue, CreditError,
};
use agora_core::policy::PolicyParams;

fn episode(seed: u64) -> agora_core::arena::EpisodeResult {
    run_episode(
        &GameConfig::default().with_seed(seed),
        &Lineup::new(true, true),
        &PolicyParams::default(),
    )
    .unwrap()
}

#[test]
fn credits_are_efficient_per_faction() {
    let base = episode(21);
    let games = episode_games(&base).unwrap();
    let credits = episode_credits(&base).unwrap();
    let full = AgentSet::from_bits(0x1ff);
    for (faction, phi) in [
        (Faction::Villagers, &credits.villagers),
        (Faction::Heretics, &credits.heretics),
    ] {
        let game = games.game(faction);
        assert_eq!(game.value(AgentSet::EMPTY), 0.0);
        assert!((phi.iter().sum::<f64>() - game.value(full)).abs() < 1e-9);
    }
    assert_eq!(credits.own_faction.len(), 9);
}

#[test]
fn all_idle_replay_scores_the_default_outcome() {
    let base = episode(22);
    let games = episode_games(&base).unwrap();
    let idle = run_episode(
        &base.header.config,
        &base.header.lineup.with_idle(AgentSet::from_bits(0x1ff)),
        &base.header.params,
    )
    .unwrap();
    // nobody moves energy, so the timer decides
    assert_eq!(idle.winner.faction(), Faction::Heretics);
    assert_eq!(idle.totem_energy, 0);
    // a heretic-only coalition never gains villager value from deposits
    let heretics: AgentSet = base
        .roles()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_heretic())
        .map(|(i, _)| i)
        .collect();
    assert!(games.game(Faction::Villagers).value(heretics) <= 0.0);
    let phi = shapley_exact(games.game(Faction::Villagers)).unwrap();
    assert_eq!(phi.len(), 9);
}

#[test]
fn tampered_base_hash_is_a_replay_mismatch() {
    let mut base = episode(23);
    base.event_hash = "f".repeat(64);
    assert!(matches!(
        episode_games(&base),
        Err(CreditError::ReplayMismatch { .. })
    ));
}
