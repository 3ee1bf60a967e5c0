//! Plugload energy analytics: aggregation, scoring, matched-pairs inference,
//! ARX identification and a controllable building-demand simulator.

pub mod aggregation;
pub mod arx;
pub mod data;
pub mod demand;
pub mod error;
pub mod inference;
pub mod io;
pub mod ols;
pub mod scoring;
pub mod screentime;
pub mod stats;
pub mod synth;
pub mod validate;

pub use data::{
    ComfortReport, Dataset, IncentiveSchedule, ParticipantId, Phase, PhaseCalendar, PhaseKind,
    PowerReading, ReadingStore, Sample, ScreentimeSession, SessionIndex, Site, SiteClock, SocketId,
    TimeIndex,
};
pub use error::{Error, Result};
pub use validate::{RawDataset, ValidationReport};
