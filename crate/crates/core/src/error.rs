use thiserror::Error;

/// Errors raised by the geometry kernel and the verification harness.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("jet order cap exceeded: requested {group}-order {requested}, cap is {cap}")]
    OrderCap {
        group: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model validity error at x={x:?}, v={v:?}: fundamental tensor eigenvalues {eigenvalues:?} are not of signature (-,+,...,+)")]
    ModelValidity {
        x: Vec<f64>,
        v: Vec<f64>,
        eigenvalues: Vec<f64>,
    },

    #[error(
        "numerical degeneracy: fundamental tensor is singular (condition number {condition:e})"
    )]
    Degenerate { condition: f64 },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("integration failure at t={t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("no connector found after {iterations} Newton iterations (residual {residual:e}); this does not prove that none exists")]
    NoConnector { iterations: usize, residual: f64 },

    #[error("scope error: {0}")]
    Scope(String),

    #[error("function is not temporal at x={x:?}: -df = {covector:?} is not in the polar cone")]
    NotTemporal { x: Vec<f64>, covector: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
