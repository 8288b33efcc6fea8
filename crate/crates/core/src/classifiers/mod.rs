//! Per-sample classifiers and the attacks assembled from them.

mod attack;
mod fll;
mod lbfgs;
mod logreg;
mod nb;
mod registry;

pub use attack::{select_k, train_attack, AttackConfig, AttackKind, KSelection, ModelBody, TrainedModel, MODEL_VERSION};
pub use fll::{fll_distance, train_knn, KnnModel, SizeMultiset};
pub use lbfgs::{minimize, LbfgsConfig, LbfgsResult};
pub use logreg::{softmax, train_logreg, LogRegConfig, LogRegModel, LogRegProblem};
pub use nb::{train_nb, NbModel};
pub use registry::{LabelRegistry, PredictionDist};
