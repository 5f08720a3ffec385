//! Metrics, task calendars, the train/forecast pipeline and report writers.

mod metrics;
mod pipeline;
mod report;
mod scaling;
mod tasks;

pub use metrics::{
    average_pinball, computational_effort, pinball_loss, reliability, skill_score, DayFilter, EffortRecord, Machine,
    Phase,
};
pub use pipeline::{
    fit_model, forecast, prepare_training, run_task, score, Forecast, ModelScore, ModelSpec, ModelTiming, NightFilter,
    PipelineConfig, PreparedTraining, TaskReport, TrainedModel,
};
pub use report::{write_atomic, write_report, write_timing, AggregateScore, EvaluationReport};
pub use scaling::{scaling_on_window, scaling_study, ScalingConfig, ScalingRecord};
pub use tasks::{gefcom14_calendar, CalendarTask, TaskWindow};
