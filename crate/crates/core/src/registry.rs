//! Named estimation methods: a time-propagation model paired with a
//! measurement-update strategy.

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::estimators::{EkfUpdate, EstimatorConfig, MeasurementUpdate, RapsUpdate, TdUpdate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagatorKind {
    Ins,
    Pva,
}

pub struct Method {
    pub name: String,
    pub propagator: PropagatorKind,
    pub update: Box<dyn MeasurementUpdate>,
}

impl std::fmt::Debug for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Method")
            .field("name", &self.name)
            .field("propagator", &self.propagator)
            .field("update", &self.update.name())
            .finish()
    }
}

type UpdateFactory = Box<dyn Fn(&EstimatorConfig) -> Box<dyn MeasurementUpdate> + Send + Sync>;

struct Entry {
    name: String,
    propagator: PropagatorKind,
    factory: UpdateFactory,
}

pub struct Registry {
    entries: Vec<Entry>,
}

pub const DEFAULT_METHODS: [&str; 3] = ["EKF-INS-RTK", "TD-INS-RTK", "RAPS-INS-RTK"];

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry { entries: Vec::new() };
        r.register("EKF-INS-RTK", PropagatorKind::Ins, |_| Box::new(EkfUpdate));
        r.register("TD-INS-RTK", PropagatorKind::Ins, |c| Box::new(TdUpdate { config: c.td_config() }));
        r.register("RAPS-INS-RTK", PropagatorKind::Ins, |c| {
            Box::new(RapsUpdate { spec: c.spec.clone(), options: c.raps_options(), use_phase: true })
        });
        r.register("RAPS-PVA-RTK", PropagatorKind::Pva, |c| {
            Box::new(RapsUpdate { spec: c.spec.clone(), options: c.raps_options(), use_phase: true })
        });
        r.register("RAPS-PVA", PropagatorKind::Pva, |c| {
            Box::new(RapsUpdate { spec: c.spec.clone(), options: c.raps_options(), use_phase: false })
        });
        r
    }
}

impl Registry {
    /// Adds or replaces a method.
    pub fn register<F>(&mut self, name: &str, propagator: PropagatorKind, factory: F)
    where
        F: Fn(&EstimatorConfig) -> Box<dyn MeasurementUpdate> + Send + Sync + 'static,
    {
        self.entries.retain(|e| !e.name.eq_ignore_ascii_case(name));
        self.entries.push(Entry { name: name.to_string(), propagator, factory: Box::new(factory) });
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    /// Case-insensitive lookup.
    pub fn build(&self, name: &str, cfg: &EstimatorConfig) -> Result<Method> {
        let e = self.entries.iter().find(|e| e.name.eq_ignore_ascii_case(name.trim())).ok_or_else(|| {
            NavError::invalid(format!("unknown method '{name}' (known: {})", self.names().join(", ")))
        })?;
        Ok(Method { name: e.name.clone(), propagator: e.propagator, update: (e.factory)(cfg) })
    }
}
