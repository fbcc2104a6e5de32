#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace fairgrade {

// Every recoverable failure in the library is reported as an Error with one
// of these conditions. The C API maps them onto coarse status codes.
enum class Cond {
  MalformedRecord,
  DimensionMismatch,
  EmptyDataset,
  InvalidConfig,
  AllRatersRemoved,
  NoUsableScores,
  InsufficientOverlap,
  TooFewRaters,
  SeriesTooShort,
  SingularSystem,
  EmptyIndicatorSet,
  UnknownChannel,
  RankDeficient,
  LengthMismatch,
  ShapeMismatch,
  RejectedVideo,
  NonFiniteGradient,
  Diverged,
  DegenerateTarget,
  DegeneratePredictions,
  EmptySlice,
  EmptyPrivilegedGroup,
  ConstantOutcome,
  ConfigInvalid,
  MissingArtifact,
  IoError,
};

const char* cond_name(Cond c);

class Error : public std::runtime_error {
public:
  Error(Cond cond, std::string message)
      : std::runtime_error(std::string(cond_name(cond)) + ": " + message),
        cond_(cond) {}

  Cond cond() const { return cond_; }

private:
  Cond cond_;
};

namespace detail {
inline void msg_append(std::ostringstream&) {}
template <typename T, typename... Rest>
void msg_append(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  msg_append(os, rest...);
}
}  // namespace detail

template <typename... Parts>
[[noreturn]] void raise(Cond cond, const Parts&... parts) {
  std::ostringstream os;
  detail::msg_append(os, parts...);
  throw Error(cond, os.str());
}

template <typename... Parts>
void require(bool ok, Cond cond, const Parts&... parts) {
  if (!ok) raise(cond, parts...);
}

}  // namespace fairgrade
