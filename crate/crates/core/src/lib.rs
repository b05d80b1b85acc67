//! Priority-aware lane-change advisory for connected automated vehicles.
//!
//! A highway microsimulator with RSU clusters, an RSS safety kernel, the
//! multi-objective lane-change reward, parametrized deep Q-network agents
//! and federated averaging across roadside units.

pub mod action;
pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod observe;
pub mod pdqn;
pub mod reward;
pub mod road;
pub mod rss;
pub mod runner;
pub mod scene;
pub mod sim;
pub mod vehicle;

pub use action::{ActionKind, HybridAction};
pub use error::{PalcasError, Result};
pub use road::{RoadLayout, RoadNetwork, Route};
pub use sim::World;
pub use vehicle::{Vehicle, VehicleKind};
