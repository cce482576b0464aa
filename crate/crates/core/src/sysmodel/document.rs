use serde::{Deserialize, Serialize};

use super::{AssemblyOptions, LinearEnvironment, LinearSubsystem, PreexistingSystem};
use crate::error::Result;
use crate::io::{conform, matrix_rows};
use crate::numlin::Matrix;

/// JSON form of a linear subsystem. Dimensions are stored alongside the
/// matrices so that empty blocks keep their shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsystemDocument {
    pub n1: usize,
    pub m1: usize,
    pub p1: usize,
    pub q1: usize,
    #[serde(with = "matrix_rows")]
    pub a1: Matrix,
    #[serde(with = "matrix_rows")]
    pub b1: Matrix,
    #[serde(with = "matrix_rows")]
    pub c1: Matrix,
    #[serde(with = "matrix_rows")]
    pub l1: Matrix,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvironmentDocument {
    pub n2: usize,
    pub r1: usize,
    #[serde(with = "matrix_rows")]
    pub a2: Matrix,
    #[serde(with = "matrix_rows")]
    pub l2: Matrix,
    #[serde(with = "matrix_rows")]
    pub gamma1: Matrix,
    #[serde(with = "matrix_rows")]
    pub gamma2: Matrix,
}

/// A linear preexisting system as stored on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemDocument {
    pub subsystem: SubsystemDocument,
    pub environment: EnvironmentDocument,
    #[serde(default)]
    pub allow_unstable: bool,
}

impl SubsystemDocument {
    pub fn from_subsystem(s: &LinearSubsystem) -> Self {
        Self {
            n1: s.n1(),
            m1: s.m1(),
            p1: s.p1(),
            q1: s.q1(),
            a1: s.a1().clone(),
            b1: s.b1().clone(),
            c1: s.c1().clone(),
            l1: s.l1().clone(),
        }
    }

    pub fn to_subsystem(&self) -> Result<LinearSubsystem> {
        let (n1, m1, p1, q1) = (self.n1, self.m1, self.p1, self.q1);
        LinearSubsystem::new(
            conform(self.a1.clone(), n1, n1, "a1")?,
            conform(self.b1.clone(), n1, m1, "b1")?,
            conform(self.c1.clone(), p1, n1, "c1")?,
            conform(self.l1.clone(), n1, q1, "l1")?,
        )
    }
}

impl SystemDocument {
    pub fn from_system(sys: &PreexistingSystem) -> Result<Self> {
        let env = sys.linear_env()?;
        Ok(Self {
            subsystem: SubsystemDocument::from_subsystem(sys.sub()),
            environment: EnvironmentDocument {
                n2: env.n2(),
                r1: env.gamma1().nrows(),
                a2: env.a2().clone(),
                l2: env.l2().clone(),
                gamma1: env.gamma1().clone(),
                gamma2: env.gamma2().clone(),
            },
            allow_unstable: sys.stability().is_some_and(|s| !s.hurwitz),
        })
    }

    pub fn to_system(&self) -> Result<PreexistingSystem> {
        let sub = self.subsystem.to_subsystem()?;
        let e = &self.environment;
        let (n1, q1, n2, r1) = (self.subsystem.n1, self.subsystem.q1, e.n2, e.r1);
        let env = LinearEnvironment::new(
            conform(e.a2.clone(), n2, n2, "a2")?,
            conform(e.l2.clone(), n2, r1, "l2")?,
            conform(e.gamma1.clone(), r1, n1, "gamma1")?,
            conform(e.gamma2.clone(), q1, n2, "gamma2")?,
        )?;
        PreexistingSystem::linear(sub, env, AssemblyOptions { allow_unstable: self.allow_unstable })
    }
}
