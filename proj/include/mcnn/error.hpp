#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mcnn {

enum class Errc {
  BadMagic,
  MalformedHeader,
  MaxvalUnsupported,
  Truncated,
  Io,
  OddMargin,
  CropTooLarge,
  KernelTooLarge,
  ShapeMismatch,
  InvalidArgument,
  InvalidSpec,
  InvalidConfig,
  NumericalFailure,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::MaxvalUnsupported: return "MaxvalUnsupported";
    case Errc::Truncated: return "Truncated";
    case Errc::Io: return "Io";
    case Errc::OddMargin: return "OddMargin";
    case Errc::CropTooLarge: return "CropTooLarge";
    case Errc::KernelTooLarge: return "KernelTooLarge";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code, so
/// callers (tests, the CLI) can distinguish e.g. a truncated PGM from a bad
/// maxval without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mcnn
