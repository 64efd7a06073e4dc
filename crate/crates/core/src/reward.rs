//! Reward policies and cost-sensitive sample weights.
//!
//! Level-1 agents see every label through a three-way lens (their own
//! attack, any other attack, normal) and get amplified feedback `+-k` on
//! anything touching their own class. The decider gets plain `+-1` rewards;
//! imbalance is handled there through inverse-frequency sample weights.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelRegistry;

/// A dataset label projected into one L1 agent's three-way view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum L1Category {
    AgentAttack,
    OtherAttack,
    Normal,
}

impl L1Category {
    /// L1 action indices: 0 = agent's attack, 1 = other attack, 2 = normal.
    pub const ARITY: usize = 3;

    pub fn from_action(action: usize) -> Result<Self> {
        match action {
            0 => Ok(L1Category::AgentAttack),
            1 => Ok(L1Category::OtherAttack),
            2 => Ok(L1Category::Normal),
            _ => Err(Error::validation(format!(
                "L1 action {action} out of range 0..3"
            ))),
        }
    }

    pub fn action_index(self) -> usize {
        match self {
            L1Category::AgentAttack => 0,
            L1Category::OtherAttack => 1,
            L1Category::Normal => 2,
        }
    }
}

/// Reward-shaping and sample-weight configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Emphasis magnitude for an agent's own class; must exceed 1.
    pub k: f64,
    /// Sample weight for records of the agent's own attack class.
    pub l1_weight_agent_class: f64,
    /// Sample weight for every other record.
    pub l1_weight_other: f64,
    /// Exponent of the inverse-frequency decider weights.
    pub minority_beta: f64,
    /// Upper bound on decider weights so tiny classes cannot explode.
    pub minority_weight_cap: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            k: 5.0,
            l1_weight_agent_class: 2.0,
            l1_weight_other: 1.0,
            minority_beta: 0.5,
            minority_weight_cap: 100.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 1.0) {
            return Err(Error::config(format!("k must be > 1, got {}", self.k)));
        }
        if !(self.l1_weight_agent_class > 0.0 && self.l1_weight_other > 0.0) {
            return Err(Error::config("L1 sample weights must be positive"));
        }
        if self.l1_weight_agent_class <= self.l1_weight_other {
            return Err(Error::config(format!(
                "agent-class weight ({}) must exceed the other-class weight ({})",
                self.l1_weight_agent_class, self.l1_weight_other
            )));
        }
        if !(self.minority_beta > 0.0) {
            return Err(Error::config("minority_beta must be positive"));
        }
        if !(self.minority_weight_cap >= 1.0) {
            return Err(Error::config("minority_weight_cap must be >= 1"));
        }
        Ok(())
    }
}

/// Projects a dataset label into one agent's three-way view.
pub fn project_label(
    label: &str,
    agent_class: &str,
    registry: &LabelRegistry,
) -> Result<L1Category> {
    if !registry.contains(label) {
        return Err(Error::UnknownLabel(label.to_string()));
    }
    Ok(if label == agent_class {
        L1Category::AgentAttack
    } else if label == registry.benign() {
        L1Category::Normal
    } else {
        L1Category::OtherAttack
    })
}

/// L1 reward table. Written as the full 3x3 grid over (true, action);
/// anything touching the agent's own class is amplified to `+-k`.
pub fn l1_reward(true_category: L1Category, action: L1Category, k: f64) -> Result<f64> {
    if !(k > 1.0) {
        return Err(Error::config(format!("k must be > 1, got {k}")));
    }
    use L1Category::*;
    Ok(match (true_category, action) {
        (AgentAttack, AgentAttack) => k,
        (AgentAttack, _) => -k,
        (_, AgentAttack) => -k,
        (t, a) if t == a => 1.0,
        _ => -1.0,
    })
}

/// Decider reward: `+1` on an exact label match, `-1` otherwise.
pub fn decider_reward(action_label: &str, true_label: &str, registry: &LabelRegistry) -> Result<f64> {
    for l in [action_label, true_label] {
        if !registry.contains(l) {
            return Err(Error::UnknownLabel(l.to_string()));
        }
    }
    Ok(if action_label == true_label { 1.0 } else { -1.0 })
}

/// Loss weight of one L1 transition: records of the agent's own class get
/// the (strictly greater) agent-class weight.
pub fn l1_sample_weight(label: &str, agent_class: &str, cfg: &RewardConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(if label == agent_class {
        cfg.l1_weight_agent_class
    } else {
        cfg.l1_weight_other
    })
}

/// Inverse-frequency decider weights: `min(cap, (max_count / count)^beta)`,
/// so the most frequent class sits at 1 and rarer classes climb.
pub fn decider_sample_weights(
    class_counts: &BTreeMap<String, u64>,
    cfg: &RewardConfig,
) -> Result<BTreeMap<String, f64>> {
    cfg.validate()?;
    if class_counts.is_empty() {
        return Err(Error::validation("class counts are empty"));
    }
    if let Some((label, _)) = class_counts.iter().find(|(_, &c)| c == 0) {
        return Err(Error::validation(format!(
            "class {label:?} has zero count"
        )));
    }
    let max = *class_counts.values().max().expect("non-empty") as f64;
    Ok(class_counts
        .iter()
        .map(|(label, &count)| {
            let w = (max / count as f64).powf(cfg.minority_beta);
            (label.clone(), w.min(cfg.minority_weight_cap))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use L1Category::*;

    fn registry() -> LabelRegistry {
        LabelRegistry::new(
            vec!["DoS Hulk".into(), "PortScan".into(), "DDoS".into(), "Bot".into()],
            "BENIGN",
        )
        .unwrap()
    }

    #[test]
    fn projection_three_way() {
        let r = registry();
        assert_eq!(
            project_label("DoS Hulk", "DoS Hulk", &r).unwrap(),
            AgentAttack
        );
        assert_eq!(project_label("BENIGN", "DoS Hulk", &r).unwrap(), Normal);
        assert_eq!(
            project_label("PortScan", "DoS Hulk", &r).unwrap(),
            OtherAttack
        );
        assert!(project_label("Heartbleed", "DoS Hulk", &r).is_err());
    }

    /// The five published cases expand to exactly this nine-cell table.
    fn oracle_table(k: f64) -> [(L1Category, L1Category, f64); 9] {
        [
            (AgentAttack, AgentAttack, k),
            (AgentAttack, OtherAttack, -k),
            (AgentAttack, Normal, -k),
            (OtherAttack, AgentAttack, -k),
            (OtherAttack, OtherAttack, 1.0),
            (OtherAttack, Normal, -1.0),
            (Normal, AgentAttack, -k),
            (Normal, OtherAttack, -1.0),
            (Normal, Normal, 1.0),
        ]
    }

    #[test]
    fn l1_reward_matches_nine_cell_oracle() {
        for k in [2.0, 5.0, 10.0] {
            for (truth, action, expected) in oracle_table(k) {
                assert_eq!(
                    l1_reward(truth, action, k).unwrap(),
                    expected,
                    "k={k} truth={truth:?} action={action:?}"
                );
            }
        }
    }

    #[test]
    fn l1_reward_spot_values() {
        assert_eq!(l1_reward(AgentAttack, AgentAttack, 5.0).unwrap(), 5.0);
        assert_eq!(l1_reward(OtherAttack, Normal, 5.0).unwrap(), -1.0);
        assert_eq!(l1_reward(Normal, AgentAttack, 5.0).unwrap(), -5.0);
        assert!(l1_reward(Normal, Normal, 1.0).is_err());
    }

    #[test]
    fn correct_actions_always_pay_and_false_own_class_never_does() {
        for cat in [AgentAttack, OtherAttack, Normal] {
            assert!(l1_reward(cat, cat, 3.0).unwrap() > 0.0);
        }
        for truth in [OtherAttack, Normal] {
            assert!(l1_reward(truth, AgentAttack, 3.0).unwrap() < 0.0);
        }
    }

    #[test]
    fn decider_reward_is_plus_minus_one() {
        let r = registry();
        assert_eq!(decider_reward("DDoS", "DDoS", &r).unwrap(), 1.0);
        assert_eq!(decider_reward("DDoS", "Bot", &r).unwrap(), -1.0);
        assert_eq!(decider_reward("BENIGN", "BENIGN", &r).unwrap(), 1.0);
        assert!(decider_reward("DDoS", "nope", &r).is_err());
    }

    #[test]
    fn l1_weights_favor_the_agent_class() {
        let cfg = RewardConfig::default();
        assert_eq!(l1_sample_weight("Bot", "Bot", &cfg).unwrap(), 2.0);
        assert_eq!(l1_sample_weight("DDoS", "Bot", &cfg).unwrap(), 1.0);
        let bad = RewardConfig {
            l1_weight_agent_class: 1.0,
            l1_weight_other: 1.0,
            ..RewardConfig::default()
        };
        assert!(l1_sample_weight("Bot", "Bot", &bad).is_err());
    }

    #[test]
    fn decider_weights_balanced_classes_are_unit() {
        let counts = BTreeMap::from([("A".to_string(), 100), ("B".to_string(), 100)]);
        let w = decider_sample_weights(&counts, &RewardConfig::default()).unwrap();
        assert_eq!(w["A"], 1.0);
        assert_eq!(w["B"], 1.0);
    }

    #[test]
    fn decider_weights_match_formula() {
        let counts = BTreeMap::from([("A".to_string(), 100), ("B".to_string(), 1)]);
        let w = decider_sample_weights(&counts, &RewardConfig::default()).unwrap();
        assert!((w["A"] - 1.0).abs() < 1e-12);
        assert!((w["B"] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn decider_weights_decrease_with_frequency_and_cap() {
        let counts = BTreeMap::from([
            ("big".to_string(), 700_000u64),
            ("mid".to_string(), 5_000),
            ("tiny".to_string(), 9),
        ]);
        let w = decider_sample_weights(&counts, &RewardConfig::default()).unwrap();
        assert!(w["tiny"] > w["mid"] && w["mid"] > w["big"]);
        assert!(w["tiny"] <= 100.0);
        let zero = BTreeMap::from([("z".to_string(), 0u64)]);
        assert!(decider_sample_weights(&zero, &RewardConfig::default()).is_err());
    }

    #[test]
    fn weight_scaling_preserves_loss_ordering() {
        use crate::nn::wmse_loss;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.gen_range(1..8usize);
            let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..4.0)).collect();
            let c = rng.gen_range(0.01..50.0);
            let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let a = wmse_loss(&p1, &t, &w).unwrap() < wmse_loss(&p2, &t, &w).unwrap();
            let b = wmse_loss(&p1, &t, &scaled).unwrap() < wmse_loss(&p2, &t, &scaled).unwrap();
            assert_eq!(a, b);
        }
    }
}
