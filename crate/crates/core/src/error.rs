use thiserror::Error;

/// A model parameter outside its valid domain.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid {name} = {value}: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
    pub reason: &'static str,
}

impl ParamError {
    pub(crate) fn new(name: &'static str, value: f64, reason: &'static str) -> Self {
        ParamError {
            name,
            value,
            reason,
        }
    }
}

pub(crate) fn check(
    ok: bool,
    name: &'static str,
    value: f64,
    reason: &'static str,
) -> Result<(), ParamError> {
    if ok {
        Ok(())
    } else {
        Err(ParamError::new(name, value, reason))
    }
}

pub(crate) fn fraction(name: &'static str, value: f64) -> Result<(), ParamError> {
    check((0.0..=1.0).contains(&value), name, value, "must lie in [0, 1]")
}
