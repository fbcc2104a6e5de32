#include "fairgrade/error.hpp"

namespace fairgrade {

const char* cond_name(Cond c) {
  switch (c) {
    case Cond::MalformedRecord: return "MalformedRecord";
    case Cond::DimensionMismatch: return "DimensionMismatch";
    case Cond::EmptyDataset: return "EmptyDataset";
    case Cond::InvalidConfig: return "InvalidConfig";
    case Cond::AllRatersRemoved: return "AllRatersRemoved";
    case Cond::NoUsableScores: return "NoUsableScores";
    case Cond::InsufficientOverlap: return "InsufficientOverlap";
    case Cond::TooFewRaters: return "TooFewRaters";
    case Cond::SeriesTooShort: return "SeriesTooShort";
    case Cond::SingularSystem: return "SingularSystem";
    case Cond::EmptyIndicatorSet: return "EmptyIndicatorSet";
    case Cond::UnknownChannel: return "UnknownChannel";
    case Cond::RankDeficient: return "RankDeficient";
    case Cond::LengthMismatch: return "LengthMismatch";
    case Cond::ShapeMismatch: return "ShapeMismatch";
    case Cond::RejectedVideo: return "RejectedVideo";
    case Cond::NonFiniteGradient: return "NonFiniteGradient";
    case Cond::Diverged: return "Diverged";
    case Cond::DegenerateTarget: return "DegenerateTarget";
    case Cond::DegeneratePredictions: return "DegeneratePredictions";
    case Cond::EmptySlice: return "EmptySlice";
    case Cond::EmptyPrivilegedGroup: return "EmptyPrivilegedGroup";
    case Cond::ConstantOutcome: return "ConstantOutcome";
    case Cond::ConfigInvalid: return "ConfigInvalid";
    case Cond::MissingArtifact: return "MissingArtifact";
    case Cond::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace fairgrade
