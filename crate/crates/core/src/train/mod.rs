//! Self-supervised pretraining, task finetuning, classic predictors on the
//! same examples, and prediction metrics.

mod classic;
mod data;
mod fit;
mod metrics;
mod model;

pub use classic::{arima_rate, fit_arima_rate, naive_rate};
pub use data::{build_examples, Example, Provenance, SslBatch, WindowSpec};
pub use fit::{
    evaluate_network, finetune, mse_on, predict, pretrain, ssl_eval, target_flows, targets, EpochLog, FinetuneLog,
    TrainConfig,
};
pub use metrics::{evaluate, evaluate_grouped, FlowMetric, MetricReport};
pub use model::{ssl_loss, ssl_terms, Backbone, Network, SslTerms, Task};
