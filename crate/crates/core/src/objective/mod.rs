//! Training losses, evaluation metrics and the optimizer.

pub mod loss;
pub mod metric;
pub mod optim;

pub use loss::{bce_loss, fm_loss, iou_loss, total_loss, HeadLoss, LossBreakdown, BETA2};
pub use metric::{f_measure, mae_metric, EvalResult};
pub use optim::{lr_schedule, RmsConfig, RmsProp, RmsState};
