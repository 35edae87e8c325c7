use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// Unified simulation time. Seconds are always derived from the tick count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTime {
    tick: u64,
    dt: f64,
}

impl SimTime {
    pub fn new(tick: u64, dt: f64) -> Self {
        Self { tick, dt }
    }

    pub fn zero(dt: f64) -> Self {
        Self::new(0, dt)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seconds(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    #[must_use]
    pub fn next(&self) -> Self {
        Self::new(self.tick + 1, self.dt)
    }
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("SimTime", 2)?;
        st.serialize_field("tick", &self.tick)?;
        st.serialize_field("seconds", &self.seconds())?;
        st.end()
    }
}
