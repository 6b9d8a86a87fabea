#pragma once

#include <stdexcept>
#include <string>

namespace iffgp {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A caller violated a documented precondition.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Linear algebra failed beyond recovery (Cholesky after jitter escalation,
/// non-finite objective, ...).
class NumericalFailure : public Error {
public:
  using Error::Error;
};

/// Kernel family has no closed-form spectral density; use the DFT path.
class UnsupportedFamily : public Error {
public:
  using Error::Error;
};

/// Spectral density vanished (or hit the clamp floor) at a grid frequency.
class DegenerateSpectrum : public Error {
public:
  using Error::Error;
};

/// Input data is degenerate (zero range, zero variance column, ...).
class DegenerateInput : public Error {
public:
  using Error::Error;
};

/// Tail-mass estimation failed (nonpositive mass on the sampled grid).
class DegenerateTail : public Error {
public:
  using Error::Error;
};

/// A persisted file does not match the expected binary/JSON layout.
class FormatError : public Error {
public:
  using Error::Error;
};

/// Stored provenance hash disagrees with the expected one; the cache is
/// stale and must be recomputed.
class StaleCache : public Error {
public:
  using Error::Error;
};

/// Configuration file is invalid (unknown keys, bad values, wrong types).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Tabular input does not match the expected schema (missing columns,
/// dimension mismatch).
class SchemaError : public Error {
public:
  using Error::Error;
};

} // namespace iffgp
