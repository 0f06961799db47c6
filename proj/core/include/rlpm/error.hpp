#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rlpm {

enum class ErrorKind {
  MalformedFile,
  NonPositivePrice,
  TooFewAssets,
  TooShortHistory,
  InsufficientHistory,
  ZeroVarianceAsset,
  DimensionMismatch,
  InvalidK,
  EmptyCluster,
  InsufficientSamples,
  ZeroVolatility,
  NotFactorizable,
  NoIntervalsFound,
  GridTooFine,
  InvalidArgument,
  EpisodeFinished,
  InvalidActionIndex,
  DegenerateVolatility,
  ShapeMismatch,
  NonFiniteActivation,
  NonFiniteLoss,
  DivergedTraining,
  EmptyModelPool,
  SingularCovariance,
  NoConvergence,
  EmptySeries,
  TooShort,
  ArtifactFormat,
  Io,
  Config,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure surfaced by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rlpm
