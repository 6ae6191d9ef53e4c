//! Office segmentation on behavioral profiles.

mod cluster;
mod profile;
mod tsne;

pub use cluster::{
    cluster_offices, select_training_offices, ward_linkage, ClusterAssignment, ClusterCriterion, Merge,
};
pub use profile::{profile_distances, read_profiles, write_profiles, OfficeProfile, CLUSTER_FEATURES};
pub use tsne::{joint_probabilities, tsne, tsne_project, write_tsne_csv, TsneParams, TsneResult};
