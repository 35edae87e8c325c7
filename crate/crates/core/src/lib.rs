//! Air-ground co-simulation core: scene, vehicles, sensors, the lockstep
//! engine and the cooperative mapping, planning and tracking algorithms.

pub mod bundled;
pub mod clock;
pub mod coop_planning;
pub mod coop_tracking;
pub mod geometry;
pub mod metrics;
pub mod registration;
pub mod scenario;
pub mod sensors;
pub mod simcore;
pub mod tasks;
pub mod vehicles;
pub mod world;

pub use clock::SimTime;
pub use geometry::{NedPose, Quaternion, RigidTransform, Vec3};
pub use simcore::{SimConfig, SimError, SimHandle, Simulation, VehicleApi};
pub use vehicles::{CarCommand, UavCommand, VehicleCommand, VehicleState, VehicleType};
pub use world::Scene;
