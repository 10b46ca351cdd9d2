#pragma once

#include <stdexcept>
#include <string>

namespace tscx {

enum class Errc {
  // ingest
  MalformedHeader,
  UnparseableTimestamp,
  DuplicateTimestamp,
  EmptyFile,
  NetworkError,
  RateLimited,
  EmptyRange,
  EmptyDay,
  UnknownTimezone,
  MisalignedSeries,
  // dataset
  TooFewSamples,
  ZeroPrice,
  // tensor
  ShapeMismatch,
  KernelLargerThanInput,
  NonScalarLoss,
  // archdsl
  SyntaxError,
  UnknownLayerKind,
  NonPositiveWidth,
  ShapeComposeError,
  // train
  DivergedLoss,
  // features
  SeriesTooShort,
  // classical
  EmptyTrainSet,
  UnsupportedKind,
  // harness
  LengthMismatch,
  EmptyClass,
  TooFewAssets,
  InvalidConfig,
  // generic
  IoError,
};

const char* errc_name(Errc c);

/// Exception carrying a machine-checkable error code plus a human message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::UnparseableTimestamp: return "UnparseableTimestamp";
    case Errc::DuplicateTimestamp: return "DuplicateTimestamp";
    case Errc::EmptyFile: return "EmptyFile";
    case Errc::NetworkError: return "NetworkError";
    case Errc::RateLimited: return "RateLimited";
    case Errc::EmptyRange: return "EmptyRange";
    case Errc::EmptyDay: return "EmptyDay";
    case Errc::UnknownTimezone: return "UnknownTimezone";
    case Errc::MisalignedSeries: return "MisalignedSeries";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::ZeroPrice: return "ZeroPrice";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::KernelLargerThanInput: return "KernelLargerThanInput";
    case Errc::NonScalarLoss: return "NonScalarLoss";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownLayerKind: return "UnknownLayerKind";
    case Errc::NonPositiveWidth: return "NonPositiveWidth";
    case Errc::ShapeComposeError: return "ShapeComposeError";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::EmptyTrainSet: return "EmptyTrainSet";
    case Errc::UnsupportedKind: return "UnsupportedKind";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyClass: return "EmptyClass";
    case Errc::TooFewAssets: return "TooFewAssets";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace tscx
