//! Cascade classifier.
