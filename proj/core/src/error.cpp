#include "rlpm/error.hpp"

namespace rlpm {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::NonPositivePrice: return "NonPositivePrice";
    case ErrorKind::TooFewAssets: return "TooFewAssets";
    case ErrorKind::TooShortHistory: return "TooShortHistory";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::ZeroVarianceAsset: return "ZeroVarianceAsset";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::EmptyCluster: return "EmptyCluster";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::ZeroVolatility: return "ZeroVolatility";
    case ErrorKind::NotFactorizable: return "NotFactorizable";
    case ErrorKind::NoIntervalsFound: return "NoIntervalsFound";
    case ErrorKind::GridTooFine: return "GridTooFine";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::EpisodeFinished: return "EpisodeFinished";
    case ErrorKind::InvalidActionIndex: return "InvalidActionIndex";
    case ErrorKind::DegenerateVolatility: return "DegenerateVolatility";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::EmptyModelPool: return "EmptyModelPool";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::ArtifactFormat: return "ArtifactFormat";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace rlpm
