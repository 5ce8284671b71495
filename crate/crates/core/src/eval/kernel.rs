//! Perceptual kernels: human-judged distance matrices for one visual channel.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DistanceMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VisualChannel {
    Color,
    Shape,
    Size,
    SizeColor,
}

impl VisualChannel {
    pub const ALL: [VisualChannel; 4] = [
        VisualChannel::Color,
        VisualChannel::Shape,
        VisualChannel::Size,
        VisualChannel::SizeColor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VisualChannel::Color => "color",
            VisualChannel::Shape => "shape",
            VisualChannel::Size => "size",
            VisualChannel::SizeColor => "size-color",
        }
    }

    /// Number of stimuli in the channel's palette.
    pub fn palette_len(self) -> usize {
        match self {
            VisualChannel::SizeColor => 16,
            _ => 10,
        }
    }
}

impl std::fmt::Display for VisualChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VisualChannel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        VisualChannel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown visual channel `{s}`")))
    }
}

/// Judgment task that produced a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    L5,
    L9,
    Tm,
    Td,
    Sa,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::L5, Task::L9, Task::Tm, Task::Td, Task::Sa];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::L5 => "L5",
            Task::L9 => "L9",
            Task::Tm => "Tm",
            Task::Td => "Td",
            Task::Sa => "Sa",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown task `{s}`")))
    }
}

/// A kernel matrix with entries in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptualKernel {
    pub channel: VisualChannel,
    pub task: Task,
    pub matrix: DistanceMatrix,
}

impl PerceptualKernel {
    pub fn new(channel: VisualChannel, task: Task, matrix: DistanceMatrix) -> Result<Self> {
        if matrix.len() != channel.palette_len() {
            return Err(Error::invalid(format!(
                "{channel} kernel must be {0}x{0}, got {1}x{1}",
                channel.palette_len(),
                matrix.len()
            )));
        }
        if let Some(v) = matrix.values().iter().find(|v| **v > 1.0) {
            return Err(Error::invalid(format!(
                "{channel}/{task} kernel entry {v} exceeds 1"
            )));
        }
        Ok(PerceptualKernel {
            channel,
            task,
            matrix,
        })
    }

    /// `<dir>/<channel>_<task>.csv`
    pub fn path_in(dir: &Path, channel: VisualChannel, task: Task) -> PathBuf {
        dir.join(format!("{}_{}.csv", channel.as_str(), task.as_str()))
    }

    pub fn read(dir: &Path, channel: VisualChannel, task: Task) -> Result<Self> {
        let path = PerceptualKernel::path_in(dir, channel, task);
        let m = DistanceMatrix::read_csv(&path)?;
        PerceptualKernel::new(channel, task, m).map_err(|e| e.for_item(path.display().to_string()))
    }
}
