use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::{Task, N_KEY_CLASSES, N_TEMPO_CLASSES};

/// Input and output geometry of a task at training size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskConfig {
    pub task: Task,
    pub n_classes: usize,
    pub input_bins: usize,
    pub train_frames: usize,
}

impl TaskConfig {
    pub const TEMPO: TaskConfig = TaskConfig {
        task: Task::Tempo,
        n_classes: N_TEMPO_CLASSES,
        input_bins: 40,
        train_frames: 256,
    };

    pub const KEY: TaskConfig = TaskConfig {
        task: Task::Key,
        n_classes: N_KEY_CLASSES,
        input_bins: 168,
        train_frames: 60,
    };

    pub fn of(task: Task) -> TaskConfig {
        match task {
            Task::Tempo => Self::TEMPO,
            Task::Key => Self::KEY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Shallow,
    Deep,
}

/// Orientation of the convolution kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// 1×n kernels along time.
    Temporal,
    /// n×1 kernels along frequency.
    Spectral,
    Square,
}

impl Direction {
    /// Kernel shape (height, width) for a nominal length `n`.
    pub fn kernel(self, n: usize) -> (usize, usize) {
        match self {
            Direction::Temporal => (1, n),
            Direction::Spectral => (n, 1),
            Direction::Square => (n, n),
        }
    }
}

/// The five network variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    ShallowTemp,
    ShallowSpec,
    DeepTemp,
    DeepSpec,
    DeepSquare,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::ShallowTemp, Arch::ShallowSpec, Arch::DeepTemp, Arch::DeepSpec, Arch::DeepSquare];

    pub fn family(self) -> Family {
        match self {
            Arch::ShallowTemp | Arch::ShallowSpec => Family::Shallow,
            _ => Family::Deep,
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Arch::ShallowTemp | Arch::DeepTemp => Direction::Temporal,
            Arch::ShallowSpec | Arch::DeepSpec => Direction::Spectral,
            Arch::DeepSquare => Direction::Square,
        }
    }

    pub fn from_parts(family: Family, direction: Direction) -> Result<Arch> {
        match (family, direction) {
            (Family::Shallow, Direction::Temporal) => Ok(Arch::ShallowTemp),
            (Family::Shallow, Direction::Spectral) => Ok(Arch::ShallowSpec),
            (Family::Shallow, Direction::Square) => Err(Error::Config("there is no square shallow network".into())),
            (Family::Deep, Direction::Temporal) => Ok(Arch::DeepTemp),
            (Family::Deep, Direction::Spectral) => Ok(Arch::DeepSpec),
            (Family::Deep, Direction::Square) => Ok(Arch::DeepSquare),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::ShallowTemp => "shallow-temp",
            Arch::ShallowSpec => "shallow-spec",
            Arch::DeepTemp => "deep-temp",
            Arch::DeepSpec => "deep-spec",
            Arch::DeepSquare => "deep-square",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Arch> {
        let s = s.trim().to_ascii_lowercase();
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Architecture, width multiplier `k`, dropout probability and optional
/// long-filter length for the shallow family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    pub arch: Arch,
    pub k: usize,
    pub dropout: f64,
    pub long_filter_len: Option<usize>,
}

impl ArchConfig {
    pub fn new(arch: Arch, k: usize, dropout: f64) -> ArchConfig {
        ArchConfig {
            arch,
            k,
            dropout,
            long_filter_len: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        match (self.arch.family(), self.long_filter_len) {
            (Family::Deep, Some(_)) => Err(Error::Config("long_filter_len applies to shallow networks only".into())),
            (_, Some(0)) => Err(Error::Config("long_filter_len must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Everything needed to rebuild a network: architecture plus task geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub arch: ArchConfig,
    pub task: TaskConfig,
}

impl ModelConfig {
    pub fn new(arch: Arch, task: Task, k: usize, dropout: f64) -> ModelConfig {
        ModelConfig {
            arch: ArchConfig::new(arch, k, dropout),
            task: TaskConfig::of(task),
        }
    }

    /// Length of the shallow long filter along its axis.
    pub fn long_filter_len(&self) -> usize {
        self.arch.long_filter_len.unwrap_or(match self.arch.arch.direction() {
            Direction::Spectral => self.task.input_bins,
            _ => self.task.train_frames,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if TaskConfig::of(self.task.task) != self.task {
            return Err(Error::Config(format!("non-standard {} task geometry {:?}", self.task.task, self.task)));
        }
        if self.arch.arch == Arch::ShallowSpec && self.long_filter_len() > self.task.input_bins {
            return Err(Error::Config(format!(
                "long filter of {} bins exceeds {} input bins",
                self.long_filter_len(),
                self.task.input_bins
            )));
        }
        Ok(())
    }

    /// Line-oriented `key=value` text used inside weight files.
    pub fn to_canonical(&self) -> String {
        let mut s = format!(
            "arch={}\ntask={}\nk={}\ndropout={}\n",
            self.arch.arch, self.task.task, self.arch.k, self.arch.dropout
        );
        if let Some(len) = self.arch.long_filter_len {
            s.push_str(&format!("long_filter_len={len}\n"));
        }
        s.push_str(&format!(
            "n_classes={}\ninput_bins={}\ntrain_frames={}\n",
            self.task.n_classes, self.task.input_bins, self.task.train_frames
        ));
        s
    }

    pub fn from_canonical(text: &str) -> Result<ModelConfig> {
        let bad = |msg: String| Error::Corrupt(format!("model config: {msg}"));
        let mut fields = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            if fields.insert(k.trim(), v.trim()).is_some() {
                return Err(bad(format!("duplicate field {k:?}")));
            }
        }
        let mut take = |name: &str| fields.remove(name).ok_or_else(|| bad(format!("missing field {name:?}")));
        let num = |name: &str, v: &str| v.parse::<usize>().map_err(|_| bad(format!("{name}={v:?}")));
        let arch: Arch = take("arch")?.parse()?;
        let task: Task = take("task")?.parse()?;
        let k = num("k", take("k")?)?;
        let dropout_text = take("dropout")?;
        let dropout: f64 = dropout_text.parse().map_err(|_| bad(format!("dropout={dropout_text:?}")))?;
        let n_classes = num("n_classes", take("n_classes")?)?;
        let input_bins = num("input_bins", take("input_bins")?)?;
        let train_frames = num("train_frames", take("train_frames")?)?;
        let long_filter_len = match fields.remove("long_filter_len") {
            Some(v) => Some(num("long_filter_len", v)?),
            None => None,
        };
        if let Some(extra) = fields.keys().next() {
            return Err(bad(format!("unknown field {extra:?}")));
        }
        Ok(ModelConfig {
            arch: ArchConfig {
                arch,
                k,
                dropout,
                long_filter_len,
            },
            task: TaskConfig {
                task,
                n_classes,
                input_bins,
                train_frames,
            },
        })
    }
}
