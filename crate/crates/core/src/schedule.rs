use crate::error::{Error, Result};

/// A value that is either constant over time or given per time index.
///
/// A sequence covers the indices `start .. start + items.len()`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Constant(T),
    Sequence { start: usize, items: Vec<T> },
}

impl<T> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Schedule::Constant(value)
    }

    pub fn sequence(start: usize, items: Vec<T>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty time-indexed sequence".into()));
        }
        Ok(Schedule::Sequence { start, items })
    }

    pub fn at(&self, k: usize) -> Result<&T> {
        match self {
            Schedule::Constant(v) => Ok(v),
            Schedule::Sequence { start, items } => k
                .checked_sub(*start)
                .and_then(|i| items.get(i))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "time index {k} outside schedule range {start}..{}",
                        start + items.len()
                    ))
                }),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant(_))
    }

    /// Time index range covered, `None` for constants.
    pub fn range(&self) -> Option<std::ops::Range<usize>> {
        match self {
            Schedule::Constant(_) => None,
            Schedule::Sequence { start, items } => Some(*start..*start + items.len()),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let slice: &[T] = match self {
            Schedule::Constant(v) => std::slice::from_ref(v),
            Schedule::Sequence { items, .. } => items,
        };
        slice.iter()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Schedule<U> {
        match self {
            Schedule::Constant(v) => Schedule::Constant(f(v)),
            Schedule::Sequence { start, items } => Schedule::Sequence {
                start: *start,
                items: items.iter().map(f).collect(),
            },
        }
    }
}
