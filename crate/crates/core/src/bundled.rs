//! The Media Store model and energy profiles shipped with the repository.

use crate::model::VariabilityModel;
use crate::repository::ProfileRepository;

pub const MEDIASTORE_MODEL_JSON: &str = include_str!("../../../models/mediastore.json");
pub const MEDIASTORE_PROFILES_JSON: &str = include_str!("../../../profiles/mediastore.json");

pub fn mediastore_model() -> VariabilityModel {
    VariabilityModel::from_json(MEDIASTORE_MODEL_JSON).expect("bundled model is valid")
}

pub fn mediastore_repository() -> ProfileRepository {
    ProfileRepository::from_json(MEDIASTORE_PROFILES_JSON).expect("bundled profiles are valid")
}
