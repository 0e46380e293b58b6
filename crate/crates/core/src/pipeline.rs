//! Pipeline orchestration.
