//! Envelope to probability. Offline tools and the service share this path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::config::PatternConfig;
use crate::corpus::UserTrust;
use crate::diff::{diff, DiffError, EntityDiff};
use crate::entity::{parse_entity, EntityRevision, ParseError};
use crate::features::{extract, FeatureError, FeatureVector};
use crate::forest::{ForestError, TrainedModel};
use crate::ingestion::RevisionEnvelope;
use crate::registry::PropertyRegistry;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("parent and child disagree on creation: {0}")]
    Inconsistent(u64),
    #[error("parse: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

/// Short description of an edit for review queues.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditSummary {
    pub item_id: String,
    /// Net entry count change per section.
    pub section_deltas: BTreeMap<String, i64>,
    pub changed_properties: Vec<String>,
    pub anonymous: bool,
    pub trusted: bool,
    pub comment: String,
}

impl EditSummary {
    fn new(d: &EntityDiff, child: &EntityRevision, env: &RevisionEnvelope, patterns: &PatternConfig) -> Self {
        let net = |a: u32, r: u32| i64::from(a) - i64::from(r);
        let section_deltas = [
            ("labels", net(d.labels.added, d.labels.removed)),
            ("descriptions", net(d.descriptions.added, d.descriptions.removed)),
            ("aliases", net(d.aliases.added, d.aliases.removed)),
            ("statements", net(d.statements.added, d.statements.removed)),
            ("sitelinks", net(d.sitelinks.added, d.sitelinks.removed)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        EditSummary {
            item_id: child.item_id.to_string(),
            section_deltas,
            changed_properties: d.changed_properties.iter().map(ToString::to_string).collect(),
            anonymous: env.meta.user.is_anonymous,
            trusted: UserTrust::of(&env.meta.user, &patterns.groups.trusted) == UserTrust::Trusted,
            comment: env.meta.comment.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub rev_id: u64,
    pub probability: f64,
    pub features: FeatureVector,
    pub summary: EditSummary,
}

/// A loaded model plus everything needed to featurize revisions for it.
#[derive(Debug, Clone)]
pub struct Scorer {
    model: TrainedModel,
    registry: PropertyRegistry,
    patterns: PatternConfig,
    model_version: String,
    indices: Vec<usize>,
}

/// Schema tag plus a digest of the serialized model.
pub fn model_version(model_bytes: &[u8]) -> String {
    let digest = hex::encode(Sha1::digest(model_bytes));
    format!("{}+{}", crate::forest::MODEL_FORMAT_VERSION, &digest[..12])
}

impl Scorer {
    pub fn new(model: TrainedModel, registry: PropertyRegistry, patterns: PatternConfig) -> Result<Self, ForestError> {
        model.check_schema()?;
        let model_version = model_version(&model.to_json());
        let indices = model.groups.indices();
        Ok(Scorer { model, registry, patterns, model_version, indices })
    }

    pub fn from_json(bytes: &[u8], registry: PropertyRegistry, patterns: PatternConfig) -> Result<Self, ForestError> {
        Self::new(TrainedModel::from_json(bytes)?, registry, patterns)
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn model_version(&self) -> &str {
        &self.model_version
    }

    pub fn patterns(&self) -> &PatternConfig {
        &self.patterns
    }

    pub fn features(&self, env: &RevisionEnvelope) -> Result<(FeatureVector, EditSummary), PipelineError> {
        if !env.is_consistent() {
            return Err(PipelineError::Inconsistent(env.meta.rev_id));
        }
        let child = parse_entity(&env.child_json)?;
        let parent = env.parent_json.as_deref().map(parse_entity).transpose()?;
        let d = diff(parent.as_ref(), &child, &self.registry)?;
        let v = extract(&d, &child, &env.meta, &self.patterns)?;
        Ok((v, EditSummary::new(&d, &child, env, &self.patterns)))
    }

    pub fn score(&self, env: &RevisionEnvelope) -> Result<Scored, PipelineError> {
        let (features, summary) = self.features(env)?;
        let probability = self.model.predict_proba(&features.select_indices(&self.indices))?;
        Ok(Scored { rev_id: env.meta.rev_id, probability, features, summary })
    }
}
