//! Ordered label registry: attack labels plus the benign label. The order
//! is the canonical decider action-index mapping (attacks `0..N-1`, benign
//! last) and is persisted with trained models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRegistry {
    attacks: Vec<String>,
    benign: String,
}

impl LabelRegistry {
    pub fn new(attacks: Vec<String>, benign: impl Into<String>) -> Result<Self> {
        let benign = benign.into();
        if attacks.iter().any(|a| *a == benign) {
            return Err(Error::validation(format!(
                "benign label {benign:?} cannot also be an attack label"
            )));
        }
        let mut seen = attacks.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != attacks.len() {
            return Err(Error::validation("duplicate attack labels in registry"));
        }
        Ok(LabelRegistry { attacks, benign })
    }

    /// Registry with attacks sorted lexicographically, from the labels
    /// observed in a training set.
    pub fn from_labels<'a, I: IntoIterator<Item = &'a str>>(
        labels: I,
        benign: &str,
    ) -> Result<Self> {
        let mut attacks: Vec<String> = labels
            .into_iter()
            .filter(|l| *l != benign)
            .map(str::to_string)
            .collect();
        attacks.sort();
        attacks.dedup();
        LabelRegistry::new(attacks, benign)
    }

    pub fn attacks(&self) -> &[String] {
        &self.attacks
    }

    pub fn benign(&self) -> &str {
        &self.benign
    }

    /// Number of attack classes (= number of L1 agents).
    pub fn num_attacks(&self) -> usize {
        self.attacks.len()
    }

    /// Decider action arity: one action per attack plus one for benign.
    pub fn decider_arity(&self) -> usize {
        self.attacks.len() + 1
    }

    pub fn contains(&self, label: &str) -> bool {
        label == self.benign || self.attacks.iter().any(|a| a == label)
    }

    /// Decider action index of a label: attacks in registry order, benign
    /// takes the last slot.
    pub fn action_index(&self, label: &str) -> Result<usize> {
        if label == self.benign {
            return Ok(self.attacks.len());
        }
        self.attacks
            .iter()
            .position(|a| a == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Label for a decider action index.
    pub fn label_of_action(&self, action: usize) -> Result<&str> {
        if action < self.attacks.len() {
            Ok(&self.attacks[action])
        } else if action == self.attacks.len() {
            Ok(&self.benign)
        } else {
            Err(Error::validation(format!(
                "decider action {action} out of range for {} labels",
                self.decider_arity()
            )))
        }
    }

    /// All labels in action-index order (attacks, then benign).
    pub fn all_labels(&self) -> Vec<String> {
        let mut v = self.attacks.clone();
        v.push(self.benign.clone());
        v
    }

    /// Appends a new attack label; the benign action index shifts up by one.
    pub fn push_attack(&mut self, label: impl Into<String>) -> Result<()> {
        let label = label.into();
        if self.contains(&label) {
            return Err(Error::validation(format!(
                "label {label:?} is already registered"
            )));
        }
        self.attacks.push(label);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> LabelRegistry {
        LabelRegistry::new(
            vec!["Bot".into(), "DDoS".into(), "PortScan".into()],
            "BENIGN",
        )
        .unwrap()
    }

    #[test]
    fn action_indices_follow_registry_order() {
        let r = registry();
        assert_eq!(r.action_index("Bot").unwrap(), 0);
        assert_eq!(r.action_index("PortScan").unwrap(), 2);
        assert_eq!(r.action_index("BENIGN").unwrap(), 3);
        assert_eq!(r.label_of_action(3).unwrap(), "BENIGN");
        assert_eq!(r.decider_arity(), 4);
        assert!(r.action_index("Heartbleed").is_err());
        assert!(r.label_of_action(4).is_err());
    }

    #[test]
    fn from_labels_sorts_and_dedups() {
        let r = LabelRegistry::from_labels(
            ["DDoS", "Bot", "BENIGN", "Bot", "DDoS"].into_iter(),
            "BENIGN",
        )
        .unwrap();
        assert_eq!(r.attacks(), &["Bot".to_string(), "DDoS".to_string()]);
    }

    #[test]
    fn pushing_an_attack_shifts_benign() {
        let mut r = registry();
        r.push_attack("Heartbleed").unwrap();
        assert_eq!(r.action_index("Heartbleed").unwrap(), 3);
        assert_eq!(r.action_index("BENIGN").unwrap(), 4);
        assert!(r.push_attack("Bot").is_err());
        assert!(r.push_attack("BENIGN").is_err());
    }

    #[test]
    fn benign_cannot_be_an_attack() {
        assert!(LabelRegistry::new(vec!["BENIGN".into()], "BENIGN").is_err());
        assert!(LabelRegistry::new(vec!["A".into(), "A".into()], "BENIGN").is_err());
    }
}
