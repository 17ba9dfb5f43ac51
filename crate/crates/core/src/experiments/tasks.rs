use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conv::LatentShape;
use crate::error::{DripError, Result};
use crate::operators::{BlurSpec, LinearMap, RadonSpec};

pub const BLUR_SIGMA: f64 = 2.0;
pub const TOMO_ANGLES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Deblur,
    Tomo,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Deblur => "deblur",
            Task::Tomo => "tomo",
        })
    }
}

impl FromStr for Task {
    type Err = DripError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deblur" => Ok(Task::Deblur),
            "tomo" => Ok(Task::Tomo),
            _ => Err(DripError::precondition(format!("unknown task {s:?}"))),
        }
    }
}

/// Forward operator `A` and embedding `E` for a task on `size × size` images.
#[derive(Debug, Clone)]
pub struct TaskSetup {
    pub task: Task,
    pub size: usize,
    pub a: LinearMap,
    pub e: LinearMap,
}

impl TaskSetup {
    pub fn new(task: Task, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(DripError::precondition("image size must be positive"));
        }
        let a = match task {
            Task::Deblur => LinearMap::blur(BlurSpec::periodic(size, size, BLUR_SIGMA))?,
            Task::Tomo => LinearMap::radon(RadonSpec::limited_angle(size, TOMO_ANGLES))?,
        };
        Ok(Self { task, size, a, e: LinearMap::Identity(size * size) })
    }

    pub fn shape(&self) -> LatentShape {
        LatentShape::image(self.size, self.size)
    }
}
