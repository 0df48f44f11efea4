//! Media Store names, chains, candidates and the reference rule set.

use std::collections::BTreeMap;

use crate::analysis::{self, AnalysisError, Candidate, RuleTemplate, SIMILARITY_BAND};
use crate::model::{ConfigError, Configuration, ReconfigurationAction, VariabilityModel};
use crate::repository::{CompositionChain, ProfileRepository};
use crate::rules::{Condition, EcaRule, Predicate, RuleSet};

pub const STORE: &str = "Store";
pub const LOCAL: &str = "Store.Local";
pub const REMOTE: &str = "Store.Remote";
pub const COMPRESSION: &str = "Compression";
pub const COMMUNICATION: &str = "Communication";
pub const LAME: &str = "Compression.LAME";
pub const VORBIS: &str = "Compression.Vorbis";
pub const SPEEX: &str = "Compression.Speex";
/// Codecs in preference order; analysis ties go to the earlier one.
pub const CODECS: [&str; 3] = [LAME, VORBIS, SPEEX];

pub const OUTPUT_SIZE: &str = "output_size";
pub const FILE_SIZE: &str = "file_size";
/// Monitored as the free fraction of local storage, in [0, 1].
pub const FREE_CAPACITY: &str = "free_capacity";
pub const STORAGE_GUARD: &str = "storage";

/// Sampled file sizes of the bundled profiles, in MB.
pub const GRID: [f64; 9] = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 384.0, 512.0];

/// Free fraction below which local storage counts as almost full.
pub const STORAGE_FULL_THRESHOLD: f64 = 0.10;

pub fn short_name(variant: &str) -> &str {
    variant.rsplit('.').next().unwrap_or(variant)
}

pub fn local_chain(codec: &str) -> CompositionChain {
    CompositionChain::single(COMPRESSION, codec)
}

/// Compress, then upload the compressed output.
pub fn remote_chain(codec: &str) -> CompositionChain {
    CompositionChain::single(COMPRESSION, codec).then_via(OUTPUT_SIZE, COMMUNICATION, COMMUNICATION)
}

/// The energy chain of a Media Store configuration, if it binds a codec and a store.
pub fn chain_for(config: &Configuration) -> Option<CompositionChain> {
    let codec = config.binding(COMPRESSION)?;
    match config.binding(STORE)? {
        LOCAL => Some(local_chain(codec)),
        REMOTE => Some(remote_chain(codec)),
        _ => None,
    }
}

pub fn local_candidates() -> Vec<Candidate> {
    CODECS
        .iter()
        .map(|c| Candidate {
            label: format!("Local {}", short_name(c)),
            variant: c.to_string(),
            chain: local_chain(c),
        })
        .collect()
}

pub fn remote_candidates() -> Vec<Candidate> {
    CODECS
        .iter()
        .map(|c| Candidate {
            label: format!("Remote {}", short_name(c)),
            variant: c.to_string(),
            chain: remote_chain(c),
        })
        .collect()
}

/// The complete configuration storing with `store` and compressing with `codec`.
pub fn configuration(model: &VariabilityModel, store: &str, codec: &str) -> Result<Configuration, ConfigError> {
    let p = model.propagate_selection([store, codec])?;
    if !p.open_choices.is_empty() {
        return Err(ConfigError::Incomplete(p.open_choices));
    }
    Ok(p.configuration)
}

/// Storage mode context for rule guards.
pub fn storage_mode(config: &Configuration) -> Option<&'static str> {
    match config.binding(STORE)? {
        LOCAL => Some("local"),
        REMOTE => Some("remote"),
        _ => None,
    }
}

/// Moves storage to the remote server and switches to the hardest-compressing codec.
pub fn storage_full_rule(threshold: f64) -> EcaRule {
    EcaRule {
        id: "storage-full".into(),
        priority: 0,
        event: FREE_CAPACITY.into(),
        guard: [(STORAGE_GUARD.to_string(), "local".to_string())].into(),
        condition: Condition::Single(Predicate::Lt { threshold }),
        action: ReconfigurationAction::Composite {
            actions: vec![
                ReconfigurationAction::ActivateConcern {
                    targets: vec![REMOTE.into(), COMMUNICATION.into()],
                },
                ReconfigurationAction::DeactivateConcern {
                    targets: vec![LOCAL.into()],
                },
                ReconfigurationAction::bind(SPEEX),
            ],
        },
    }
}

fn template(prefix: &str, mode: &str, priority_base: i64) -> RuleTemplate {
    RuleTemplate {
        id_prefix: prefix.into(),
        event: FILE_SIZE.into(),
        guard: BTreeMap::from([(STORAGE_GUARD.to_string(), mode.to_string())]),
        priority_base,
    }
}

/// Codec rules for local storage, derived from the local partition.
pub fn local_rules(repo: &ProfileRepository, model: &VariabilityModel, hysteresis: f64) -> Result<RuleSet, AnalysisError> {
    let series = analysis::compare(repo, model, &local_candidates(), &GRID)?;
    let partition = analysis::partition_greenest(&series)?;
    Ok(analysis::derive_rules(&partition, &template("local-codec", "local", 10), hysteresis))
}

/// Codec rules for remote storage; small-file differences inside the
/// similarity band are folded into the dominant codec.
pub fn remote_rules(repo: &ProfileRepository, model: &VariabilityModel, hysteresis: f64) -> Result<RuleSet, AnalysisError> {
    let series = analysis::compare(repo, model, &remote_candidates(), &GRID)?;
    let partition = analysis::partition_greenest(&series)?;
    let partition = analysis::simplify_within_band(&partition, &series, SIMILARITY_BAND)?;
    Ok(analysis::derive_rules(&partition, &template("remote-codec", "remote", 20), hysteresis))
}

/// Storage-full rule plus the derived local and remote codec rules.
pub fn reference_rules(repo: &ProfileRepository, model: &VariabilityModel) -> Result<RuleSet, AnalysisError> {
    let local = local_rules(repo, model, 0.0)?;
    let remote = remote_rules(repo, model, 0.0)?;
    let full = RuleSet::new(vec![storage_full_rule(STORAGE_FULL_THRESHOLD)]).expect("single rule");
    Ok(full
        .merged(local)
        .and_then(|s| s.merged(remote))
        .expect("rule ids are distinct by prefix"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn six_configurations_have_chains() {
        let model = bundled::mediastore_model();
        for c in model.enumerate_configurations().unwrap() {
            let chain = chain_for(&c).unwrap();
            assert_eq!(chain.stages.len(), if c.is_selected(REMOTE) { 2 } else { 1 });
        }
    }

    #[test]
    fn reference_rules_shape() {
        let rules = reference_rules(&bundled::mediastore_repository(), &bundled::mediastore_model()).unwrap();
        let ids: Vec<&str> = rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["storage-full", "local-codec-1", "local-codec-2", "remote-codec-1"]);
        assert_eq!(rules.rules[3].action, ReconfigurationAction::bind(SPEEX));
        assert_eq!(rules.rules[3].condition, Condition::always());
        rules.check_targets(&bundled::mediastore_model()).unwrap();
    }

    #[test]
    fn storage_full_action_is_valid_from_local() {
        let model = bundled::mediastore_model();
        let start = configuration(&model, LOCAL, VORBIS).unwrap();
        let next = model.apply_change(&start, &storage_full_rule(0.1).action).unwrap();
        assert_eq!(next.binding(STORE), Some(REMOTE));
        assert_eq!(next.binding(COMPRESSION), Some(SPEEX));
        assert!(next.is_selected(COMMUNICATION));
    }
}
