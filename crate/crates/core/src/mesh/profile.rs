// Copyright 2026 The aqsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Role profiling: run one trace under several role assignments and design
//! modes and tabulate throughput.

use serde::Serialize;

use super::engine::{run_mesh, MeshError, MeshInput};
use super::service::{Role, Service};
use super::{DesignMode, EngineConfig};
use crate::config::RunConfig;
use crate::controller::{ControllerConfig, ControllerKind};
use crate::model::Query;

/// A named set of role overrides applied on top of a service.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoleAssignment {
    pub name: String,
    pub roles: Vec<(usize, Role)>,
}

impl RoleAssignment {
    pub fn new(name: impl Into<String>, roles: Vec<(usize, Role)>) -> Self {
        Self {
            name: name.into(),
            roles,
        }
    }

    /// Every assignable component as `role`.
    pub fn uniform(service: &Service, role: Role) -> Self {
        let roles = service.assignable().into_iter().map(|c| (c, role)).collect();
        Self::new(role.as_str(), roles)
    }
}

/// Throughput per (assignment, mode).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileMatrix {
    pub assignments: Vec<String>,
    pub modes: Vec<DesignMode>,
    /// `values[a][m]`; `None` when nothing was admitted.
    pub values: Vec<Vec<Option<f64>>>,
}

impl ProfileMatrix {
    /// Index of the best assignment for `mode`.
    pub fn argmax(&self, mode: DesignMode) -> Option<usize> {
        let m = self.modes.iter().position(|&x| x == mode)?;
        self.values
            .iter()
            .enumerate()
            .filter_map(|(a, row)| row[m].map(|v| (a, v)))
            .fold(None, |best: Option<(usize, f64)>, (a, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((a, v)),
            })
            .map(|(a, _)| a)
    }
}

pub fn profile_roles(
    config: &RunConfig,
    service: &Service,
    engine: &EngineConfig,
    queries: &[Query],
    assignments: &[RoleAssignment],
    modes: &[DesignMode],
) -> Result<ProfileMatrix, MeshError> {
    let mut values = Vec::with_capacity(assignments.len());
    for a in assignments {
        let svc = service.with_roles(&a.roles);
        let mut row = Vec::with_capacity(modes.len());
        for &mode in modes {
            let out = run_mesh(&MeshInput {
                config,
                service: &svc,
                mode,
                controller: ControllerKind::None,
                controller_config: ControllerConfig::default(),
                engine: engine.clone(),
                queries,
            })?;
            row.push(out.log.throughput().ok());
        }
        values.push(row);
    }
    Ok(ProfileMatrix {
        assignments: assignments.iter().map(|a| a.name.clone()).collect(),
        modes: modes.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_picks_highest_and_skips_missing() {
        let m = ProfileMatrix {
            assignments: vec!["a".into(), "b".into(), "c".into()],
            modes: vec![DesignMode::Ubora],
            values: vec![vec![Some(0.4)], vec![None], vec![Some(0.7)]],
        };
        assert_eq!(m.argmax(DesignMode::Ubora), Some(2));
        assert_eq!(m.argmax(DesignMode::Off), None);
    }
}
