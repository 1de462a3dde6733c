use thiserror::Error;

pub type Shape = (usize, usize);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("variable `{0}` is not bound")]
    Unbound(String),

    #[error("binding for `{name}` has shape {got:?}, expected {expected:?}")]
    BindingShape { name: String, expected: Shape, got: Shape },

    #[error("expression is not a variable")]
    NotVariable,

    #[error("gradient needs a 1x1 expression, got {0:?}")]
    NotScalar(Shape),

    #[error("reshape from {from:?} to {to:?} changes the element count")]
    BadReshape { from: Shape, to: Shape },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, DiffError>;
