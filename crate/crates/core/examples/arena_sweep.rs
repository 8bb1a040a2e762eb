//! Prints per-condition outcome statistics for a config/params pair.
//! Usage: arena_sweep [episodes] [config-json] [params-json] [seed-base]

use agora_core::arena::{run_episode, GameConfig, Lineup};
use agora_core::policy::PolicyParams;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let mut config: GameConfig = args
        .get(2)
        .map(|s| serde_json::from_str(s).unwrap())
        .unwrap_or_default();
    let params: PolicyParams = args
        .get(3)
        .map(|s| serde_json::from_str(s).unwrap())
        .unwrap_or_default();
    let seed_base: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1000);
    for (name, lineup) in [
        ("baseline", Lineup::new(false, false)),
        ("villagers_only", Lineup::new(true, false)),
        ("heretics_only", Lineup::new(false, true)),
        ("both", Lineup::new(true, true)),
    ] {
        let (mut wins, mut surv, mut dur, mut energy, mut sab) = (0, 0u64, 0u64, 0u64, 0u64);
        let (mut brier, mut prior_brier, mut pairs) = (0.0, 0.0, 0u64);
        let mut kinds = std::collections::BTreeMap::new();
        for i in 0..n {
            config.seed = seed_base + i;
            let r = run_episode(&config, &lineup, &params).unwrap();
            wins += r.villagers_won() as u64;
            surv += r.survival_ticks();
            dur += r.duration;
            energy += r.ledger.iter().map(|l| l.deposited as u64).sum::<u64>();
            sab += r.ledger.iter().map(|l| l.sabotaged as u64).sum::<u64>();
            *kinds.entry(format!("{:?}", r.winner)).or_insert(0) += 1;
            for s in &r.snapshots {
                for &(t, b) in &s.beliefs {
                    let y = r.roles()[t].is_heretic() as u8 as f64;
                    brier += (b - y).powi(2);
                    prior_brier += (2.0 / 9.0 - y).powi(2);
                    pairs += 1;
                }
            }
        }
        let nf = n as f64;
        println!(
            "{name:15} win {:.3} surv {:6.1} dur {:6.1} dep {:5.1} sab {:5.1} brier {:.4} prior {:.4} {:?}",
            wins as f64 / nf,
            surv as f64 / nf,
            dur as f64 / nf,
            energy as f64 / nf,
            sab as f64 / nf,
            brier / pairs.max(1) as f64,
            prior_brier / pairs.max(1) as f64,
            kinds
        );
    }
}
