use alloc::string::String;

use crate::{ItemId, UserId};

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dataset has no interactions")]
    EmptyDataset,
    #[error("unknown {0}")]
    UnknownUser(UserId),
    #[error("unknown {0}")]
    UnknownItem(ItemId),
    #[error("interaction ({user}, {item}) references an undeclared id")]
    DanglingInteraction { user: UserId, item: ItemId },
    #[error("no interaction between {user} and {item}")]
    MissingInteraction { user: UserId, item: ItemId },
    #[error("{0} already exists in the dataset")]
    UserCollision(UserId),
    #[error("rating {rating} for ({user}, {item}) lies outside the scale [{min}, {max}]")]
    RatingOutOfScale {
        user: UserId,
        item: ItemId,
        rating: f64,
        min: f64,
        max: f64,
    },
    #[error("only {available} items pass the popularity threshold, {needed} needed")]
    InsufficientItems { available: usize, needed: usize },
    #[error("{item} has no genre entry")]
    MissingGenres { item: ItemId },
    #[error("{item} has a zero-norm factor vector")]
    ZeroNormFactor { item: ItemId },
    #[error("invalid explanation: {0}")]
    InvalidExplanation(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("non-finite value during ALS iteration {iteration}")]
    NonFinite { iteration: usize },
}

impl Error {
    /// True for failures of the arithmetic itself rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NonFinite { .. })
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
